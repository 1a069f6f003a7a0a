"""Sparse particle configurations and their mass-scaled versions."""

from __future__ import annotations

import math
from collections.abc import Mapping
from fractions import Fraction
from typing import Iterable

from .graph_kernel import format_site, parse_site

__all__ = [
    "MAX_COUNT",
    "ConfigurationError",
    "CountOverflowError",
    "Configuration",
    "ScaledConfiguration",
    "alpha_norm",
    "one_norm",
    "alpha_distance",
    "leq",
    "restrict_to_ball",
    "format_configuration",
    "parse_configuration",
]

# Counts must fit a signed 64-bit integer.
MAX_COUNT = 2**63 - 1


class ConfigurationError(ValueError):
    pass


class CountOverflowError(ConfigurationError, OverflowError):
    """A site count left the machine-integer range."""


def _check_count(site, k):
    if not isinstance(k, int) or isinstance(k, bool):
        raise ConfigurationError(f"count at {site!r} must be an integer, got {k!r}")
    if k < 0:
        raise ConfigurationError(f"negative count {k} at {site!r}")
    if k > MAX_COUNT:
        raise CountOverflowError(f"count {k} at {site!r} exceeds the 64-bit range")


class Configuration(Mapping):
    """Finitely supported map site -> nonnegative int; absent sites read as 0.

    Zero counts are never stored, so ``len`` is the size of the support and
    iteration walks the support in sorted site order.
    """

    __slots__ = ("_counts", "_hash")

    def __init__(self, counts: Mapping | Iterable = ()):
        items = counts.items() if isinstance(counts, Mapping) else counts
        store = {}
        for site, k in items:
            k = int(k) if isinstance(k, float) and k.is_integer() else k
            _check_count(site, k)
            if k:
                store[site] = store.get(site, 0) + k
                _check_count(site, store[site])
        self._counts = store
        self._hash = None

    @classmethod
    def _trusted(cls, store: dict) -> "Configuration":
        obj = cls.__new__(cls)
        obj._counts = store
        obj._hash = None
        return obj

    @classmethod
    def delta(cls, site, k: int = 1) -> "Configuration":
        return cls({site: k})

    def __getitem__(self, site) -> int:
        return self._counts.get(site, 0)

    def get(self, site, default=0):
        return self._counts.get(site, default)

    def __contains__(self, site) -> bool:
        return site in self._counts

    def __iter__(self):
        return iter(sorted(self._counts))

    def __len__(self) -> int:
        return len(self._counts)

    def support(self) -> tuple:
        return tuple(sorted(self._counts))

    def items(self):
        return [(s, self._counts[s]) for s in sorted(self._counts)]

    def as_dict(self) -> dict:
        return dict(self._counts)

    def __eq__(self, other):
        if isinstance(other, Configuration):
            return self._counts == other._counts
        if isinstance(other, Mapping):
            return self._counts == {k: v for k, v in other.items() if v}
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._counts.items()))
        return self._hash

    def __add__(self, other: "Configuration") -> "Configuration":
        store = dict(self._counts)
        for s, k in other.items():
            store[s] = store.get(s, 0) + k
            _check_count(s, store[s])
        return Configuration._trusted(store)

    def add(self, site, k: int) -> "Configuration":
        """Return the configuration with ``k`` (possibly negative) particles added at ``site``."""
        store = dict(self._counts)
        new = store.get(site, 0) + k
        _check_count(site, new)
        if new:
            store[site] = new
        else:
            store.pop(site, None)
        return Configuration._trusted(store)

    def total(self) -> int:
        return sum(self._counts.values())

    def __repr__(self):
        body = ", ".join(f"{s!r}: {k}" for s, k in self.items())
        return f"Configuration({{{body}}})"


class ScaledConfiguration(Mapping):
    """``zeta = base / scale_n``; lookups return floats, :meth:`exact` a Fraction."""

    __slots__ = ("base", "scale_n")

    def __init__(self, base: Configuration, scale_n: int = 1):
        if not isinstance(base, Configuration):
            base = Configuration(base)
        if int(scale_n) != scale_n or scale_n < 1:
            raise ConfigurationError("scale_n must be a positive integer")
        self.base = base
        self.scale_n = int(scale_n)

    @classmethod
    def from_masses(cls, masses: Mapping, n: int) -> "ScaledConfiguration":
        """Natural initial condition ``floor(n * zeta) / n``."""
        return cls(Configuration({s: math.floor(n * z) for s, z in masses.items()}), n)

    def __getitem__(self, site) -> float:
        return self.base.get(site, 0) / self.scale_n

    def get(self, site, default=0.0):
        k = self.base.get(site, None)
        return default if k is None else k / self.scale_n

    def exact(self, site) -> Fraction:
        return Fraction(self.base.get(site, 0), self.scale_n)

    def __contains__(self, site):
        return site in self.base

    def __iter__(self):
        return iter(self.base)

    def __len__(self):
        return len(self.base)

    def __eq__(self, other):
        if isinstance(other, ScaledConfiguration):
            return all(self.exact(s) == other.exact(s) for s in set(self.base) | set(other.base))
        return NotImplemented

    def __hash__(self):
        return hash(frozenset((s, self.exact(s)) for s in self.base))

    def __repr__(self):
        return f"ScaledConfiguration({self.base!r}, n={self.scale_n})"


def _values(c):
    if isinstance(c, ScaledConfiguration):
        n = c.scale_n
        return [(s, k / n) for s, k in c.base.items()]
    return list(c.items())


def alpha_norm(c, g) -> float:
    """``sum_i alpha(i) |c(i)|``."""
    return math.fsum(g.alpha(s) * abs(v) for s, v in _values(c))


def one_norm(c):
    """Total mass; an ``int`` for particle counts."""
    if isinstance(c, Configuration):
        return c.total()
    return math.fsum(abs(v) for _, v in _values(c))


def alpha_distance(c1, c2, g) -> float:
    """``sum_i alpha(i) |c1(i) - c2(i)|``."""
    v1, v2 = dict(_values(c1)), dict(_values(c2))
    sites = set(v1) | set(v2)
    return math.fsum(g.alpha(s) * abs(v1.get(s, 0) - v2.get(s, 0)) for s in sites)


def leq(c1, c2) -> bool:
    """Sitewise partial order ``c1 <= c2``."""
    v2 = dict(_values(c2))
    return all(v <= v2.get(s, 0) for s, v in _values(c1))


def restrict_to_ball(c, sites) -> Configuration | ScaledConfiguration:
    """Zero out every site not in ``sites``."""
    sites = set(sites)
    if isinstance(c, ScaledConfiguration):
        return ScaledConfiguration(restrict_to_ball(c.base, sites), c.scale_n)
    return Configuration._trusted({s: k for s, k in c.as_dict().items() if s in sites})


def format_configuration(c) -> str:
    """``site count`` lines; scaled configurations get an ``n=<int>`` header."""
    lines = []
    if isinstance(c, ScaledConfiguration):
        lines.append(f"n={c.scale_n}")
        c = c.base
    lines += [f"{format_site(s)} {k}" for s, k in c.items()]
    return "\n".join(lines) + "\n"


def parse_configuration(text: str):
    """Inverse of :func:`format_configuration`."""
    n = None
    counts = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("n="):
            if counts or n is not None:
                raise ConfigurationError(f"line {lineno}: 'n=' header must come first")
            n = int(line[2:])
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigurationError(f"line {lineno}: expected 'site count', got {raw!r}")
        site = parse_site(parts[0])
        if site in counts:
            raise ConfigurationError(f"line {lineno}: duplicate site {parts[0]}")
        counts[site] = int(parts[1])
    base = Configuration(counts)
    return base if n is None else ScaledConfiguration(base, n)
