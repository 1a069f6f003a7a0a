"""Site spaces, transition kernels and localization weights.

A :class:`GraphKernel` bundles the countable site space, a finite-range
row-stochastic kernel ``p`` and a summable positive weight ``alpha`` with a
constant ``C`` such that ``sum_j p(i, j) alpha(j) <= C alpha(i)``.

Two flavours exist.  :class:`FiniteGraph` stores explicit rows for an explicit
list of sites.  :class:`LatticeGraph` is the procedural nearest-neighbour
kernel on ``Z^d`` whose rows and weights are evaluated lazily.  Sites are
plain ``int`` on one-dimensional spaces and integer tuples otherwise, so the
natural Python ordering gives the deterministic total order used for
iteration and random-number keying.
"""

from __future__ import annotations

import itertools
import math
import re
from pathlib import Path
from typing import Iterable, Mapping, Sequence

__all__ = [
    "GraphError",
    "UnknownSiteError",
    "LocalizationError",
    "UnsupportedWeightError",
    "ExpWeight",
    "PowWeight",
    "TableWeight",
    "GraphKernel",
    "FiniteGraph",
    "LatticeGraph",
    "finite_path",
    "finite_complete",
    "torus",
    "zd_nn",
    "self_loop",
    "make_graph",
    "parse_weight",
    "kernel_row",
    "verify_localization",
    "discrete_laplacian",
    "abs_laplacian",
    "alpha_ball",
]

ROW_TOL = 1e-12


class GraphError(ValueError):
    """Malformed graph or kernel description."""


class UnknownSiteError(GraphError, KeyError):
    """Site is not part of the vertex space."""


class LocalizationError(GraphError):
    """The localization weight vanishes at a site."""


class UnsupportedWeightError(GraphError):
    """An alpha-ball cannot be enumerated for this weight."""


def _l1(site) -> int:
    if isinstance(site, tuple):
        return sum(abs(c) for c in site)
    return abs(site)


# -- weights -----------------------------------------------------------------


class ExpWeight:
    """``alpha(x) = exp(-beta * |x|_1)``."""

    radial = True

    def __init__(self, beta: float):
        if not beta > 0:
            raise GraphError(f"exp weight needs beta > 0, got {beta}")
        self.beta = float(beta)
        self.ratio = math.exp(-self.beta)

    def at_radius(self, r: int) -> float:
        return math.exp(-self.beta * r)

    def describe(self) -> str:
        return f"exp({self.beta!r})"

    def __eq__(self, other):
        return isinstance(other, ExpWeight) and other.beta == self.beta

    def __hash__(self):
        return hash(("exp", self.beta))


class PowWeight:
    """``alpha(x) = base ** -|x|_1``, evaluated exactly for integer radii."""

    radial = True

    def __init__(self, base: float):
        if not base > 1:
            raise GraphError(f"pow weight needs base > 1, got {base}")
        self.base = float(base)
        self.beta = math.log(self.base)
        self.ratio = 1.0 / self.base

    def at_radius(self, r: int) -> float:
        return self.base ** (-r)

    def describe(self) -> str:
        return f"pow({self.base!r})"

    def __eq__(self, other):
        return isinstance(other, PowWeight) and other.base == self.base

    def __hash__(self):
        return hash(("pow", self.base))


class TableWeight:
    """Explicit site -> weight table (finite graphs only)."""

    radial = False

    def __init__(self, table: Mapping, source: str | None = None):
        self.table = dict(table)
        self.source = source

    @classmethod
    def from_file(cls, path) -> "TableWeight":
        table = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphError(f"{path}:{lineno}: expected 'site alpha'")
            table[parse_site(parts[0])] = float(parts[1])
        return cls(table, source=str(path))

    def describe(self) -> str:
        return f"table({self.source})" if self.source else "table(<inline>)"

    def __eq__(self, other):
        return isinstance(other, TableWeight) and other.table == self.table

    def __hash__(self):
        return hash(("table", tuple(sorted(self.table.items()))))


def parse_site(text: str):
    """Parse ``"3"`` into ``3`` and ``"1,-2"`` into ``(1, -2)``."""
    text = text.strip().strip("()")
    if "," in text:
        return tuple(int(c) for c in text.split(","))
    return int(text)


def format_site(site) -> str:
    if isinstance(site, tuple):
        return ",".join(str(c) for c in site)
    return str(site)


_CALL = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def parse_weight(text: str, base_dir=None):
    """Build a weight from ``exp(beta)``, ``pow(base)`` or ``table(file)``."""
    m = _CALL.match(text)
    if not m:
        raise GraphError(f"cannot parse alpha preset {text!r}")
    name, arg = m.group(1), (m.group(2) or "").strip()
    if name == "exp":
        return ExpWeight(float(arg))
    if name == "pow":
        return PowWeight(float(arg))
    if name == "table":
        path = Path(arg)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return TableWeight.from_file(path)
    raise GraphError(f"unknown alpha preset {name!r}")


# -- kernels -----------------------------------------------------------------


class GraphKernel:
    """Common interface of the site spaces.

    Subclasses provide ``kernel_row``, ``in_row``, ``alpha``, ``contains``,
    ``mark_key`` and ``jump_key``; the attributes ``c_constant`` and
    ``alpha_sum`` are set at construction.
    """

    name: str = "graph"
    finite: bool = True
    c_constant: float
    alpha_sum: float

    def kernel_row(self, i):
        raise NotImplementedError

    def in_row(self, i):
        raise NotImplementedError

    def alpha(self, i) -> float:
        raise NotImplementedError

    def contains(self, i) -> bool:
        raise NotImplementedError

    def mark_key(self, i) -> tuple:
        raise NotImplementedError

    def jump_key(self, i, j) -> tuple:
        raise NotImplementedError

    def check_site(self, i):
        if not self.contains(i):
            raise UnknownSiteError(f"site {i!r} is not in {self.name}")

    def with_c_constant(self, c: float) -> "GraphKernel":
        raise NotImplementedError


class FiniteGraph(GraphKernel):
    """Explicit finite site list with explicit kernel rows.

    ``c_constant`` defaults to the exact maximum of
    ``sum_j p(i, j) alpha(j) / alpha(i)``; a supplied value is kept as is so
    that :func:`verify_localization` can flag a wrong constant.
    """

    finite = True

    def __init__(self, rows: Mapping, weight, c_constant: float | None = None, name: str = "finite"):
        self.name = name
        self._sites = tuple(sorted(rows))
        self._index = {s: k for k, s in enumerate(self._sites)}
        self._rows = {}
        inflow: dict = {s: [] for s in self._sites}
        for s in self._sites:
            merged: dict = {}
            for j, p in rows[s]:
                if j not in self._index:
                    raise GraphError(f"row of {s!r} points to unknown site {j!r}")
                if p < 0:
                    raise GraphError(f"negative probability p({s!r},{j!r}) = {p}")
                if p > 0:
                    merged[j] = merged.get(j, 0.0) + float(p)
            row = tuple(sorted(merged.items()))
            total = math.fsum(p for _, p in row)
            if abs(total - 1.0) > ROW_TOL:
                raise GraphError(f"row of {s!r} sums to {total!r}, not 1")
            self._rows[s] = row
            for j, p in row:
                inflow[j].append((s, p))
        self._in = {s: tuple(sorted(v)) for s, v in inflow.items()}

        self.weight = weight
        if isinstance(weight, TableWeight):
            missing = [s for s in self._sites if s not in weight.table]
            if missing:
                raise GraphError(f"alpha table misses sites {missing[:5]}")
            self._alpha = {s: float(weight.table[s]) for s in self._sites}
        else:
            self._alpha = {s: weight.at_radius(self.radius(s)) for s in self._sites}
        for s, a in self._alpha.items():
            if not a > 0:
                raise LocalizationError(f"alpha({s!r}) = {a} is not positive")
        self.alpha_sum = math.fsum(self._alpha.values())
        self.exact_c = max(
            math.fsum(p * self._alpha[j] for j, p in self._rows[s]) / self._alpha[s]
            for s in self._sites
        )
        self.c_constant = self.exact_c if c_constant is None else float(c_constant)
        self._init_args = (rows, weight, name)

    def radius(self, site) -> int:
        return _l1(site)

    def sites(self) -> tuple:
        return self._sites

    def contains(self, i) -> bool:
        return i in self._index

    def kernel_row(self, i):
        try:
            return self._rows[i]
        except KeyError:
            raise UnknownSiteError(f"site {i!r} is not in {self.name}") from None

    def in_row(self, i):
        try:
            return self._in[i]
        except KeyError:
            raise UnknownSiteError(f"site {i!r} is not in {self.name}") from None

    def alpha(self, i) -> float:
        try:
            return self._alpha[i]
        except KeyError:
            raise UnknownSiteError(f"site {i!r} is not in {self.name}") from None

    def mark_key(self, i) -> tuple:
        return (self._index[i],)

    def jump_key(self, i, j) -> tuple:
        return (self._index[i], self._index[j])

    def with_c_constant(self, c: float) -> "FiniteGraph":
        rows, weight, name = self._init_args
        return type(self)(rows, weight, c_constant=c, name=name)

    def __repr__(self):
        return f"FiniteGraph({self.name!r}, sites={len(self._sites)}, C={self.c_constant:g})"


class TorusGraph(FiniteGraph):
    """Finite graph whose weight radius is the toroidal ``|x|_1``."""

    def __init__(self, rows, weight, size: int, c_constant=None, name="torus"):
        self.size = size
        super().__init__(rows, weight, c_constant=c_constant, name=name)
        self._init_args = (rows, weight, name)

    def radius(self, site) -> int:
        coords = site if isinstance(site, tuple) else (site,)
        return sum(min(c, self.size - c) for c in coords)

    def with_c_constant(self, c: float) -> "TorusGraph":
        rows, weight, name = self._init_args
        return TorusGraph(rows, weight, self.size, c_constant=c, name=name)


class LatticeGraph(GraphKernel):
    """Symmetric nearest-neighbour walk on ``Z^d`` with a radial weight.

    For ``alpha = exp(-beta |x|_1)`` the sharp localization constant is
    ``cosh(beta)``: at a site with every coordinate nonzero each axis
    contributes ``(e^beta + e^-beta) / 2d``, and a zero coordinate only
    lowers the sum.  ``alpha_sum`` is ``coth(beta/2) ** d``.
    """

    finite = False

    def __init__(self, d: int, weight, c_constant: float | None = None):
        if d < 1:
            raise GraphError("lattice dimension must be >= 1")
        if not getattr(weight, "radial", False):
            raise UnsupportedWeightError("lattice graphs need a radial weight (exp or pow)")
        self.d = int(d)
        self.name = f"zd_nn({self.d})"
        self.weight = weight
        self.analytic_c = math.cosh(weight.beta)
        self.c_constant = self.analytic_c if c_constant is None else float(c_constant)
        q = weight.ratio
        self.alpha_sum = ((1 + q) / (1 - q)) ** self.d
        p = 1.0 / (2 * self.d)
        if self.d == 1:
            self._offsets = ((-1, p), (1, p))
        else:
            offs = []
            for axis in range(self.d):
                for sgn in (-1, 1):
                    off = [0] * self.d
                    off[axis] = sgn
                    offs.append((tuple(off), p))
            self._offsets = tuple(offs)

    def contains(self, i) -> bool:
        if self.d == 1:
            return isinstance(i, int) and not isinstance(i, bool)
        return isinstance(i, tuple) and len(i) == self.d and all(isinstance(c, int) for c in i)

    def _shift(self, i, off, sign=1):
        if self.d == 1:
            return i + sign * off
        return tuple(a + sign * b for a, b in zip(i, off))

    def kernel_row(self, i):
        self.check_site(i)
        return tuple(sorted((self._shift(i, off), p) for off, p in self._offsets))

    def in_row(self, i):
        self.check_site(i)
        return tuple(sorted((self._shift(i, off, -1), p) for off, p in self._offsets))

    def alpha(self, i) -> float:
        self.check_site(i)
        return self.weight.at_radius(_l1(i))

    def radius(self, site) -> int:
        return _l1(site)

    def mark_key(self, i) -> tuple:
        return i if isinstance(i, tuple) else (i,)

    def jump_key(self, i, j) -> tuple:
        if self.d == 1:
            return (i, j - i)
        return tuple(i) + tuple(b - a for a, b in zip(i, j))

    def sites_within(self, radius: int) -> list:
        """All sites with ``|x|_1 <= radius`` in sorted order."""
        if radius < 0:
            return []
        if self.d == 1:
            return list(range(-radius, radius + 1))
        rng = range(-radius, radius + 1)
        return [x for x in itertools.product(rng, repeat=self.d) if _l1(x) <= radius]

    def with_c_constant(self, c: float) -> "LatticeGraph":
        return LatticeGraph(self.d, self.weight, c_constant=c)

    def __repr__(self):
        return f"LatticeGraph(d={self.d}, alpha={self.weight.describe()}, C={self.c_constant:g})"


# -- presets -----------------------------------------------------------------


def finite_path(n: int, weight=None, c_constant=None) -> FiniteGraph:
    """Path ``0 .. n-1``; interior sites step left/right with 1/2, endpoints reflect."""
    if n < 1:
        raise GraphError("finite_path needs n >= 1")
    weight = weight or ExpWeight(1.0)
    rows = {}
    for i in range(n):
        nbrs = [j for j in (i - 1, i + 1) if 0 <= j < n]
        rows[i] = [(j, 1.0 / len(nbrs)) for j in nbrs] if nbrs else [(i, 1.0)]
    return FiniteGraph(rows, weight, c_constant, name=f"finite_path({n})")


def finite_complete(n: int, weight=None, c_constant=None) -> FiniteGraph:
    """Complete graph on ``0 .. n-1``, uniform jumps to the other sites."""
    if n < 1:
        raise GraphError("finite_complete needs n >= 1")
    weight = weight or ExpWeight(1.0)
    rows = {}
    for i in range(n):
        others = [j for j in range(n) if j != i]
        rows[i] = [(j, 1.0 / len(others)) for j in others] if others else [(i, 1.0)]
    return FiniteGraph(rows, weight, c_constant, name=f"finite_complete({n})")


def torus(n: int, d: int = 1, weight=None, c_constant=None) -> TorusGraph:
    """Nearest-neighbour walk on ``(Z/n)^d``; coinciding neighbours merge."""
    if n < 2 or d < 1:
        raise GraphError("torus needs n >= 2 and d >= 1")
    weight = weight or ExpWeight(1.0)
    p = 1.0 / (2 * d)
    rows = {}
    for x in itertools.product(range(n), repeat=d):
        row = []
        for axis in range(d):
            for sgn in (-1, 1):
                y = list(x)
                y[axis] = (y[axis] + sgn) % n
                row.append((tuple(y) if d > 1 else y[0], p))
        rows[x if d > 1 else x[0]] = row
    return TorusGraph(rows, weight, n, c_constant, name=f"torus({n},{d})")


def zd_nn(d: int = 1, weight=None, c_constant=None) -> LatticeGraph:
    return LatticeGraph(d, weight or ExpWeight(1.0), c_constant)


def self_loop(n: int = 1, weight=None, c_constant=None) -> FiniteGraph:
    """``n`` isolated sites with ``p(i, i) = 1``."""
    weight = weight or ExpWeight(1.0)
    rows = {i: [(i, 1.0)] for i in range(n)}
    return FiniteGraph(rows, weight, c_constant, name="self_loop" if n == 1 else f"self_loop({n})")


_PRESETS = {
    "finite_path": finite_path,
    "finite_complete": finite_complete,
    "torus": torus,
    "zd_nn": zd_nn,
    "self_loop": self_loop,
}


def make_graph(preset: str, alpha: str | None = None, c_constant=None, base_dir=None) -> GraphKernel:
    """Build a graph from scenario strings such as ``"torus(3,1)"`` and ``"exp(0.5)"``."""
    m = _CALL.match(preset)
    if not m or m.group(1) not in _PRESETS:
        raise GraphError(f"unknown graph preset {preset!r}")
    args = [int(a) for a in (m.group(2) or "").split(",") if a.strip()]
    weight = parse_weight(alpha, base_dir) if alpha else None
    return _PRESETS[m.group(1)](*args, weight=weight, c_constant=c_constant)


# -- operations --------------------------------------------------------------


def kernel_row(g: GraphKernel, i):
    """Sorted ``(site, probability)`` pairs of row ``i``."""
    return g.kernel_row(i)


def verify_localization(g: GraphKernel, window: Iterable) -> tuple[float, bool]:
    """Largest ``sum_j p(i,j) alpha(j) / alpha(i)`` over ``window``, and whether it is ``<= C``."""
    window = list(window)
    if not window:
        raise GraphError("verification window is empty")
    worst = -math.inf
    for i in window:
        a = g.alpha(i)
        if a <= 0:
            raise LocalizationError(f"alpha({i!r}) = {a} is not positive")
        ratio = math.fsum(p * g.alpha(j) for j, p in g.kernel_row(i)) / a
        worst = max(worst, ratio)
    return worst, worst <= g.c_constant + 1e-9


def discrete_laplacian(g: GraphKernel, zeta: Mapping, i) -> float:
    """``sum_j p(j,i) zeta(j) - p(i,j) zeta(i)`` for finitely supported ``zeta``."""
    inflow = math.fsum(p * zeta.get(j, 0) for j, p in g.in_row(i))
    out = math.fsum(p for _, p in g.kernel_row(i))
    return inflow - out * zeta.get(i, 0)


def abs_laplacian(g: GraphKernel, zeta: Mapping, i) -> float:
    """``sum_{j != i} p(j,i) zeta(j) + p(i,j) zeta(i)``.

    Self-jumps leave every configuration unchanged, so the diagonal terms
    carry no quadratic variation and are excluded.
    """
    zi = zeta.get(i, 0)
    inflow = math.fsum(p * zeta.get(j, 0) for j, p in g.in_row(i) if j != i)
    out = math.fsum(p for j, p in g.kernel_row(i) if j != i)
    return inflow + out * zi


def alpha_ball(g: GraphKernel, r: float) -> frozenset:
    """Sites with ``alpha(x) > 1/r``."""
    if not r > 0:
        raise GraphError("ball radius must be positive")
    cut = 1.0 / r
    if g.finite:
        return frozenset(s for s in g.sites() if g.alpha(s) > cut)
    weight = g.weight
    if not getattr(weight, "radial", False):
        raise UnsupportedWeightError("ball enumeration needs a radial weight")
    rho = -1
    while weight.at_radius(rho + 1) > cut:
        rho += 1
        if rho > 10**6:
            raise UnsupportedWeightError("alpha-ball does not close within radius 1e6")
    return frozenset(g.sites_within(rho))


def ball_exit_radius(g: GraphKernel, r: float) -> int:
    """Smallest ``|x|_1`` outside ``B(r)`` for a radial weight (``k(r)``)."""
    ball = alpha_ball(g, r)
    return 1 + max((g.radius(s) for s in ball), default=-1)


def tail_weight(g: GraphKernel, k: int, tol: float = 1e-17) -> float:
    """``sum over |x|_1 >= k`` of ``alpha(x)`` on a lattice (geometric tail)."""
    if g.finite:
        return math.fsum(g.alpha(s) for s in g.sites() if g.radius(s) >= k)
    d = g.d
    total = []
    j = max(k, 0)
    while True:
        shell = _shell_size(d, j)
        term = shell * g.weight.at_radius(j)
        total.append(term)
        if j > k and term < tol * max(total[0], 1e-300):
            break
        j += 1
    return math.fsum(total)


def _shell_size(d: int, j: int) -> int:
    """Number of points of ``Z^d`` with ``|x|_1 == j``."""
    if j == 0:
        return 1
    return sum(2**i * math.comb(d, i) * math.comb(j - 1, i - 1) for i in range(1, min(d, j) + 1))


def window_sites(g: GraphKernel, spec: Sequence | None = None, radius: int = 10) -> list:
    """Default verification window: every site of a finite graph, ``|x|_1 <= radius`` otherwise."""
    if spec is not None:
        return list(spec)
    if g.finite:
        return list(g.sites())
    return g.sites_within(radius)
