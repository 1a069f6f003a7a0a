"""Command-line front end: ``rdips <subcommand> --scenario FILE --out DIR``.

Every run writes one CSV report per test, ``summary.json`` with the
verdicts and ``metadata.json`` with the seed, the scenario hash and library
versions.  Exit codes: 0 when every test passes, 1 when any fails, 2 on
invalid input or I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import re
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import (
    ball_truncation_test,
    contraction_scan,
    coupling_order_test,
    distance_supermartingale_test,
    dynkin_residual_test,
    fluid_limit_test,
    generator_check,
    one_norm_supermartingale_test,
    thermodynamic_limit_test,
    truncation_ladder_test,
    StatReport,
)
from .configuration import CountOverflowError
from .engine import EngineConfig, EngineError, run_flow
from .generator import LocalFunction
from .graph_kernel import GraphError, format_site, parse_site, window_sites
from .reaction import ReactionFamily
from .scenario import SUBCOMMANDS, Scenario, ScenarioError, parse_scenario
from .streams import EventStream

__all__ = ["main", "run", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _times(s: Scenario) -> list:
    e = s["engine"]
    if e["sample_times"]:
        return list(e["sample_times"])
    T = e["t_end"]
    return [0.0, T / 4, T / 2, 3 * T / 4, T]


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text, encoding="utf-8")


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt_num(v):
    return repr(v) if isinstance(v, float) else v


# -- subcommands -------------------------------------------------------------


def cmd_simulate(s: Scenario, out: Path, threads: int) -> list:
    g, fam, eta = s.graph(), s.reaction(), s.initial()
    e = s["engine"]
    times = _times(s)
    cfg = EngineConfig(
        mode=e["mode"],
        truncation_m=e["truncation_m"],
        t_end=e["t_end"],
        sample_times=tuple(times),
        event_cap=e["event_cap"],
        record_rejected=e["mode"] == "coupled",
    )
    tr = run_flow(eta, fam, g, cfg, EventStream(s.seed, 0))
    rows = [(_fmt_num(t), format_site(x), k) for t, st in zip(times, tr.samples) for x, k in st.items()]
    _write(out, "trajectory.csv", _rows_csv(["time", "site", "count"], rows))
    ev = [
        (_fmt_num(t), mk.kind, format_site(mk.site), "" if mk.target is None else format_site(mk.target), int(acc))
        for t, mk, acc in tr.event_log
    ]
    _write(out, "events.csv", _rows_csv(["time", "kind", "source", "target", "accepted"], ev))
    rep = StatReport("simulate", details={"events": len(tr), "final_mass": tr.final.total()})
    rep.add("accepted_events", e["t_end"], len(tr), 0.0, e["event_cap"], len(tr) <= e["event_cap"])
    if e["truncation_m"] is not None:
        occ = tr.max_occupancy()
        rep.add("closure", e["t_end"], occ, 0.0, e["truncation_m"], occ <= e["truncation_m"])
    return [rep]


def cmd_couple(s: Scenario, out: Path, threads: int) -> list:
    return [
        coupling_order_test(
            s.initial(), s.coupled_initial(), s.reaction(), s.graph(), _times(s)[1:] or [s["engine"]["t_end"]],
            s["engine"]["replicas"], seed=s.seed, threads=threads,
        )
    ]


def cmd_truncate(s: Scenario, out: Path, threads: int) -> list:
    e = s["engine"]
    return [
        truncation_ladder_test(
            s.initial(), s.reaction(), s.graph(), e["t_end"], e["replicas"], m_list=e["m_list"],
            times=_times(s), seed=s.seed, threads=threads,
        )
    ]


def _window(s: Scenario, g) -> list:
    w = s["tests"]["window"]
    return window_sites(g, list(w) if w is not None else None, s["tests"]["window_radius"])


def cmd_gencheck(s: Scenario, out: Path, threads: int) -> list:
    g, fam = s.graph(), s.reaction()
    window = _window(s, g)
    reports = [generator_check(fam, g, window, samples=s["tests"]["gen_samples"], seed=s.seed)]
    m = s["engine"]["truncation_m"] or 2
    reports.append(contraction_scan(fam, g, window[:3], m))
    return reports


def cmd_supermartingale(s: Scenario, out: Path, threads: int) -> list:
    g, fam = s.graph(), s.reaction()
    times = _times(s)
    t = s["tests"]
    reps = s["engine"]["replicas"]
    return [
        distance_supermartingale_test(
            s.initial(), s.coupled_initial(), fam, g, times, reps, seed=s.seed, A_grid=t["A_grid"], threads=threads
        ),
        one_norm_supermartingale_test(s.initial(), fam, g, times, reps, seed=s.seed, A_grid=t["A_grid"], threads=threads),
    ]


_FUNC = re.compile(r"^\s*(coord|pair|const)\((.*)\)\s*$")


def parse_function(text: str, scale: int) -> LocalFunction:
    """``coord(i)``, ``pair(i;j)`` or ``const(c)``; sites use the scenario site syntax."""
    m = _FUNC.match(text)
    if not m:
        raise ScenarioError([f"tests.function: cannot parse {text!r}"])
    kind, args = m.groups()
    if kind == "const":
        return LocalFunction.constant(float(args))
    parts = [parse_site(a.strip()) for a in args.split(";")]
    if kind == "coord" and len(parts) == 1:
        return LocalFunction.coordinate(parts[0], scale)
    if kind == "pair" and len(parts) == 2:
        return LocalFunction.pair(parts[0], parts[1], scale)
    raise ScenarioError([f"tests.function: wrong number of sites in {text!r}"])


def cmd_dynkin(s: Scenario, out: Path, threads: int) -> list:
    fam = s.reaction()
    f = parse_function(s["tests"]["function"], fam.scale_n)
    return [
        dynkin_residual_test(
            f, s.initial(), fam, s.graph(), s["engine"]["t_end"], s["engine"]["replicas"],
            seed=s.seed, h=s["tests"]["h"], threads=threads,
        )
    ]


def cmd_fluidlimit(s: Scenario, out: Path, threads: int) -> list:
    fam = s.reaction()
    if not isinstance(fam, ReactionFamily):
        raise ScenarioError(["fluidlimit needs the scaling family (a, b, kappa, ell)"])
    t = s["tests"]
    g = s.graph()
    n_list = t["n_list"] or (fam.n,)
    window = list(t["window"]) if t["window"] is not None else None
    times = _times(s)[1:]
    return [
        fluid_limit_test(
            s.masses(), fam, g, n_list, s["engine"]["t_end"], s["engine"]["replicas"], window=window, times=times,
            dt=t["dt"], sde_replicas=t["sde_replicas"], oracle=t["oracle"], seed=s.seed, threads=threads,
        )
    ]


def cmd_thermolimit(s: Scenario, out: Path, threads: int) -> list:
    if s["initial"]["profile"] is None:
        raise ScenarioError(["thermolimit needs a profile initial condition"])
    t = s["tests"]
    fam, g = s.reaction(), s.graph()
    r_list = t["r_list"] or (s["initial"]["radius"],)
    if len(r_list) < 2:
        raise ScenarioError(["thermolimit needs at least two radii in tests.r_list"])
    T, reps = s["engine"]["t_end"], s["engine"]["replicas"]
    prof = s.profile()
    return [
        ball_truncation_test(prof, fam, g, T, r_list, reps, eps=t["eps"], R_list=t["R_list"], seed=s.seed, threads=threads),
        thermodynamic_limit_test(prof, fam, g, r_list, T, reps, eps=t["eps"], seed=s.seed, threads=threads),
    ]


COMMANDS = {
    "simulate": cmd_simulate,
    "couple": cmd_couple,
    "truncate": cmd_truncate,
    "gencheck": cmd_gencheck,
    "supermartingale": cmd_supermartingale,
    "dynkin": cmd_dynkin,
    "fluidlimit": cmd_fluidlimit,
    "thermolimit": cmd_thermolimit,
}


# -- driver ------------------------------------------------------------------


def run(scenario: Scenario, output_dir, command: str = "all", threads: int = 1, record_wall_time: bool = False) -> int:
    """Execute ``command`` (or every selected test for ``"all"``) and write artifacts."""
    out = Path(output_dir)
    started = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        names = list(scenario["tests"]["select"]) if command == "all" else [command]
        reports: list = []
        for name in names:
            for rep in COMMANDS[name](scenario, out, threads):
                reports.append(rep)
                _write(out, f"{rep.name}.csv", rep.to_csv())
        verdicts = {rep.name: rep.verdict for rep in reports}
        summary = {
            "command": command,
            "verdict": "pass" if all(v == "pass" for v in verdicts.values()) else "fail",
            "reports": [rep.summary() for rep in reports],
        }
        _write(out, "summary.json", _json(summary))
        meta = {
            "seed": scenario.seed,
            "scenario_name": scenario["scenario"]["name"],
            "scenario_hash": scenario.hash(),
            "command": command,
            "versions": {
                "rdips": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "sde_boundary": "removal outside window",
        }
        if record_wall_time:
            meta["wall_time_s"] = time.perf_counter() - started
        _write(out, "metadata.json", _json(meta))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK if summary["verdict"] == "pass" else EXIT_FAIL


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def _json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rdips", description="Reaction-diffusion particle system simulator and checks.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS + ("all",):
        sp = sub.add_parser(name)
        sp.add_argument("--scenario", required=True, help="scenario file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="override the scenario seed (unsigned 64-bit)")
        sp.add_argument("--replicas", type=int, help="override engine.replicas")
        sp.add_argument("--threads", type=int, default=1, help="worker processes; results do not depend on it")
        sp.add_argument("--record-wall-time", action="store_true", help="add wall time to metadata.json")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        path = Path(args.scenario)
        scen = parse_scenario(path.read_text(encoding="utf-8"), base_dir=path.parent)
        scen = scen.with_overrides(seed=args.seed, replicas=args.replicas)
        return run(scen, args.out, args.command, max(1, args.threads), args.record_wall_time)
    except ScenarioError as exc:
        for line in exc.errors:
            print(f"scenario error: {line}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (EngineError, CountOverflowError, GraphError, ValueError) as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
