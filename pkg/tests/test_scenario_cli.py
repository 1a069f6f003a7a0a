import json
from pathlib import Path

import pytest

from rdips.cli import main, parse_function, run
from rdips.scenario import ScenarioError, parse_scenario, serialize_scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

MINIMAL = """
[scenario]
seed = 1
[graph]
preset = self_loop
[reaction]
a = 1
b = 1
n = 10
[initial]
config = 0:1
"""


def test_minimal_scenario_parses():
    s = parse_scenario(MINIMAL)
    assert s.seed == 1 and s.reaction().rates(5) == (22.5, 27.5)
    assert s.initial().total() == 1


def test_missing_seed():
    with pytest.raises(ScenarioError, match="seed required"):
        parse_scenario(MINIMAL.replace("seed = 1", ""))


def test_order_violation_is_named():
    text = MINIMAL.replace("a = 1\nb = 1\nn = 10", "f_plus = 0, 2, 3\nf_minus = 0, 1, 4")
    with pytest.raises(ScenarioError, match="orderF") as err:
        parse_scenario(text)
    assert "line" in str(err.value)


def test_unknown_and_duplicate_keys_report_lines():
    with pytest.raises(ScenarioError) as err:
        parse_scenario(MINIMAL + "[engine]\nspeed = 3\nt_end = 1\nt_end = 2\n")
    text = "\n".join(err.value.errors)
    assert "unknown key 'speed'" in text and "duplicate key 't_end'" in text and "line " in text


def test_serialization_round_trip():
    s = parse_scenario((SCENARIOS / "path5.ini").read_text())
    back = parse_scenario(serialize_scenario(s))
    assert back.values == s.values and back.hash() == s.hash()


def test_overrides():
    s = parse_scenario(MINIMAL).with_overrides(seed=9, replicas=7)
    assert s.seed == 9 and s["engine"]["replicas"] == 7


def test_parse_function():
    assert parse_function("coord(2)", 10).coords == (2,)
    assert parse_function("pair(0;1)", 1).support == (0, 1)
    assert parse_function("const(1.5)", 1)({}) == 1.5
    with pytest.raises(ScenarioError):
        parse_function("sin(0)", 1)


def _run(tmp_path, name, command="all", *extra):
    out = tmp_path / f"{name}-{command}-{'-'.join(extra) or 'x'}"
    code = main([command, "--scenario", str(SCENARIOS / f"{name}.ini"), "--out", str(out), *extra])
    return code, out


def test_smoke_scenario_passes(tmp_path):
    code, out = _run(tmp_path, "smoke")
    assert code == 0
    assert (out / "trajectory.csv").read_text().startswith("time,site,count\n")
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["seed"] == 1 and len(meta["scenario_hash"]) == 64 and "wall_time_s" not in meta
    assert json.loads((out / "summary.json").read_text())["verdict"] == "pass"


def test_wrong_localization_constant_fails(tmp_path):
    code, out = _run(tmp_path, "wrong_c", "gencheck")
    assert code == 1
    assert json.loads((out / "summary.json").read_text())["verdict"] == "fail"


def test_invalid_scenario_exits_2(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text(MINIMAL.replace("seed = 1", ""))
    assert main(["simulate", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["simulate", "--scenario", str(tmp_path / "missing.ini"), "--out", str(tmp_path / "o")]) == 2


def test_rerun_is_byte_identical(tmp_path):
    _, a = _run(tmp_path, "path5", "all", "--replicas", "100")
    _, b = _run(tmp_path, "path5", "all", "--replicas", "100", "--threads", "3")
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_wall_time_is_opt_in(tmp_path):
    s = parse_scenario((SCENARIOS / "smoke.ini").read_text())
    run(s, tmp_path, "simulate", record_wall_time=True)
    assert "wall_time_s" in json.loads((tmp_path / "metadata.json").read_text())
