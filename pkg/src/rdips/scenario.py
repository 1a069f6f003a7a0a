"""Scenario files: ``[section]`` headers and ``key = value`` lines.

The schema below lists every accepted key with its parser and default.
Unknown sections or keys, duplicates and semantic problems are collected
with their line numbers and raised together as :class:`ScenarioError`.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .configuration import Configuration, parse_configuration
from .graph_kernel import GraphError, format_site, make_graph, parse_site
from .reaction import ReactionConditionError, ReactionFamily, TabulatedReaction, validate_reaction

__all__ = ["ScenarioError", "Scenario", "parse_scenario", "serialize_scenario", "SCHEMA", "SUBCOMMANDS"]

SUBCOMMANDS = ("simulate", "couple", "truncate", "gencheck", "supermartingale", "dynkin", "fluidlimit", "thermolimit")
REQUIRED = object()


class ScenarioError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


# -- value codecs --------------------------------------------------------------


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise ValueError("must be an unsigned 64-bit integer")
    return v


def _pos_int(text):
    v = int(text)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _nonneg_float(text):
    v = float(text)
    if not (v >= 0 and math.isfinite(v)):
        raise ValueError("must be a finite nonnegative number")
    return v


def _pos_float(text):
    v = _nonneg_float(text)
    if v == 0:
        raise ValueError("must be positive")
    return v


def _list(item: Callable):
    def parse(text):
        parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
        return tuple(item(p) for p in parts)

    return parse


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text

    return parse


def _site_counts(text):
    """``site:count`` items separated by whitespace, e.g. ``0:1 2:3`` or ``1,-1:2``."""
    out = {}
    for item in text.split():
        site, _, count = item.rpartition(":")
        if not site:
            raise ValueError(f"expected site:value, got {item!r}")
        s = parse_site(site)
        if s in out:
            raise ValueError(f"duplicate site {site}")
        out[s] = float(count) if any(c in count for c in ".eE") else int(count)
    return tuple(sorted(out.items()))


def _fmt(v) -> str:
    if isinstance(v, tuple) and v and isinstance(v[0], tuple):
        return " ".join(f"{format_site(s)}:{_fmt(c)}" for s, c in v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_str = str

SCHEMA: dict = {
    "scenario": {"name": (_str, "scenario"), "seed": (_u64, REQUIRED)},
    "graph": {"preset": (_str, REQUIRED), "alpha": (_str, "exp(1)"), "c_constant": (_pos_float, None)},
    "reaction": {
        "a": (_nonneg_float, None),
        "b": (_nonneg_float, None),
        "kappa": (_pos_int, 1),
        "ell": (_pos_int, 1),
        "n": (_pos_int, 1),
        "f_plus": (_list(float), None),
        "f_minus": (_list(float), None),
    },
    "initial": {"config": (_site_counts, None), "file": (_str, None), "profile": (_str, None), "radius": (_pos_float, None)},
    "couple": {"config": (_site_counts, None)},
    "engine": {
        "mode": (_choice("coupled", "independent"), "coupled"),
        "t_end": (_pos_float, 1.0),
        "sample_times": (_list(float), ()),
        "truncation_m": (_pos_int, None),
        "event_cap": (_pos_int, 10**8),
        "replicas": (_pos_int, 100),
        "m_list": (_list(_pos_int), ()),
    },
    "tests": {
        "select": (_list(_choice(*SUBCOMMANDS)), ("simulate", "couple", "truncate", "gencheck", "supermartingale", "dynkin")),
        "A_grid": (_list(_pos_float), ()),
        "eps": (_pos_float, 0.1),
        "r_list": (_list(_pos_float), ()),
        "R_list": (_list(_pos_float), ()),
        "n_list": (_list(_pos_int), ()),
        "masses": (_site_counts, None),
        "dt": (_pos_float, 1e-3),
        "h": (_pos_float, None),
        "function": (_str, "coord(0)"),
        "oracle": (_choice("ode", "heat"), None),
        "window": (_list(parse_site), None),
        "window_radius": (_pos_int, 10),
        "gen_samples": (_pos_int, 200),
        "sde_replicas": (_pos_int, None),
    },
}


@dataclass
class Scenario:
    """Parsed, validated scenario; ``values[section][key]`` with defaults filled in."""

    values: dict
    base_dir: str | None = field(default=None, compare=False)

    def __getitem__(self, section):
        return self.values[section]

    @property
    def seed(self) -> int:
        return self.values["scenario"]["seed"]

    def with_overrides(self, seed=None, replicas=None) -> "Scenario":
        vals = {s: dict(kv) for s, kv in self.values.items()}
        if seed is not None:
            vals["scenario"]["seed"] = _u64(str(seed))
        if replicas is not None:
            vals["engine"]["replicas"] = _pos_int(str(replicas))
        return Scenario(vals, self.base_dir)

    def graph(self):
        g = self.values["graph"]
        return make_graph(g["preset"], g["alpha"], g["c_constant"], self.base_dir)

    def reaction(self):
        r = self.values["reaction"]
        if r["f_plus"] is not None:
            return TabulatedReaction(r["f_plus"], r["f_minus"])
        return ReactionFamily(r["a"], r["b"], r["kappa"], r["ell"], r["n"])

    def initial(self) -> Configuration:
        ini = self.values["initial"]
        if ini["config"] is not None:
            return Configuration({s: int(c) for s, c in ini["config"]})
        if ini["file"] is not None:
            path = Path(self.base_dir or ".") / ini["file"]
            c = parse_configuration(path.read_text(encoding="utf-8"))
            return getattr(c, "base", c)
        return self.profile_initial()

    def profile(self):
        from .analysis import ConstantProfile

        ini = self.values["initial"]
        m = re.fullmatch(r"\s*constant\(\s*([^)]+)\)\s*", ini["profile"] or "")
        if not m:
            raise ScenarioError([f"unknown profile {ini['profile']!r}"])
        return ConstantProfile(float(m.group(1)), self.values["reaction"]["n"])

    def profile_initial(self) -> Configuration:
        from .graph_kernel import alpha_ball

        g = self.graph()
        return self.profile().restrict(g, sorted(alpha_ball(g, self.values["initial"]["radius"])))

    def coupled_initial(self) -> Configuration:
        c = self.values["couple"]["config"]
        if c is not None:
            return Configuration({s: int(k) for s, k in c})
        eta = self.initial()
        site = min(eta) if len(eta) else 0
        return eta.add(site, 1)

    def masses(self) -> dict:
        m = self.values["tests"]["masses"]
        if m is not None:
            return {s: float(v) for s, v in m}
        n = self.values["reaction"]["n"]
        return {s: k / n for s, k in self.initial().items()}

    def hash(self) -> str:
        return hashlib.sha256(serialize_scenario(self).encode("utf-8")).hexdigest()


def serialize_scenario(s: Scenario) -> str:
    """Canonical text form; ``parse_scenario`` inverts it."""
    lines = []
    for section, keys in SCHEMA.items():
        body = [f"{k} = {_fmt(s.values[section][k])}" for k in keys if s.values[section][k] is not None]
        if body:
            lines.append(f"[{section}]")
            lines += body
            lines.append("")
    return "\n".join(lines)


def parse_scenario(text: str, base_dir=None) -> Scenario:
    errors: list = []
    raw: dict = {sec: {} for sec in SCHEMA}
    where: dict = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped or stripped.startswith(";"):
            continue
        m = re.fullmatch(r"\[\s*([A-Za-z_]+)\s*\]", stripped)
        if m:
            section = m.group(1)
            if section not in SCHEMA:
                errors.append(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in stripped:
            errors.append(f"line {lineno}: syntax error, expected 'key = value'")
            continue
        key, value = (p.strip() for p in stripped.split("=", 1))
        if section is None:
            errors.append(f"line {lineno}: key {key!r} outside any section")
            continue
        if section not in SCHEMA:
            continue
        if key not in SCHEMA[section]:
            errors.append(f"line {lineno}: unknown key {key!r} in [{section}]")
            continue
        if key in raw[section]:
            errors.append(f"line {lineno}: duplicate key {key!r} in [{section}]")
            continue
        parser = SCHEMA[section][key][0]
        try:
            raw[section][key] = parser(value)
        except (ValueError, GraphError) as exc:
            errors.append(f"line {lineno}: {section}.{key}: {exc}")
            continue
        where[(section, key)] = lineno
    values = {}
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, (_, default) in keys.items():
            if key in raw[sec]:
                values[sec][key] = raw[sec][key]
            elif default is REQUIRED:
                if not any(f" {sec}.{key}:" in e for e in errors):
                    errors.append(f"{key} required" + (f" in [{sec}]" if sec != "scenario" else ""))
                values[sec][key] = None
            else:
                values[sec][key] = default
    scen = Scenario(values, str(base_dir) if base_dir is not None else None)
    if not errors:
        errors += _semantic(scen, where)
    if errors:
        raise ScenarioError(errors)
    return scen


def _at(where, section, key) -> str:
    line = where.get((section, key))
    return f"line {line}: " if line else ""


def _semantic(s: Scenario, where) -> list:
    errors = []
    try:
        g = s.graph()
    except (GraphError, OSError, ValueError) as exc:
        return [f"{_at(where, 'graph', 'preset')}graph: {exc}"]
    r = s.values["reaction"]
    table = r["f_plus"] is not None or r["f_minus"] is not None
    family = r["a"] is not None or r["b"] is not None
    if table and family:
        errors.append(f"{_at(where, 'reaction', 'f_plus')}give either a, b or f_plus, f_minus, not both")
    elif table:
        if r["f_plus"] is None or r["f_minus"] is None:
            errors.append(f"{_at(where, 'reaction', 'f_plus')}f_plus and f_minus must be given together")
        else:
            try:
                TabulatedReaction(r["f_plus"], r["f_minus"])
            except ReactionConditionError as exc:
                errors.append(f"{_at(where, 'reaction', 'f_plus')}{exc.condition}: {exc}")
            except ValueError as exc:
                errors.append(f"{_at(where, 'reaction', 'f_plus')}{exc}")
    elif family:
        if r["a"] is None or r["b"] is None:
            errors.append("reaction needs both a and b")
        else:
            try:
                validate_reaction(ReactionFamily(r["a"], r["b"], r["kappa"], r["ell"], r["n"]), kmax=1000)
            except ReactionConditionError as exc:
                errors.append(f"{_at(where, 'reaction', 'a')}{exc.condition}: {exc}")
    else:
        errors.append("reaction requires a, b or f_plus, f_minus")
    ini = s.values["initial"]
    given = [k for k in ("config", "file", "profile") if ini[k] is not None]
    if len(given) != 1:
        errors.append("initial requires exactly one of config, file, profile")
    elif ini["profile"] is not None and ini["radius"] is None:
        errors.append(f"{_at(where, 'initial', 'profile')}profile initial data needs a radius")
    else:
        try:
            for site_key in ("initial", "couple"):
                c = s.values[site_key]["config"]
                for site, k in c or ():
                    g.check_site(site)
                    if not isinstance(k, int) or k < 0:
                        raise ValueError(f"count at {site!r} must be a nonnegative integer")
            eta = s.initial()
            for site in eta:
                g.check_site(site)
        except (ScenarioError, GraphError, OSError, ValueError) as exc:
            errors.append(f"initial: {exc}")
    e = s.values["engine"]
    if any(not 0 <= t <= e["t_end"] for t in e["sample_times"]):
        errors.append(f"{_at(where, 'engine', 'sample_times')}sample_times must lie in [0, t_end]")
    if list(e["sample_times"]) != sorted(set(e["sample_times"])):
        errors.append(f"{_at(where, 'engine', 'sample_times')}sample_times must be strictly increasing")
    return errors
