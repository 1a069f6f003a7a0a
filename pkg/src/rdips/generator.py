"""Generators and quadratic operators evaluated by exact enumeration.

For a local function ``f`` only marks that can change ``f`` contribute to
``L f(eta) = sum_m R^m(eta) [f(Gamma^m eta) - f(eta)]``: births and deaths
inside the support of ``f``, and jumps with one endpoint in the support.
The coordinate-function closed forms are provided separately so they can be
checked against the direct sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

from .configuration import Configuration, ScaledConfiguration, alpha_distance
from .engine import BIRTH, DEATH, JUMP, Mark, apply_transition_m
from .graph_kernel import abs_laplacian, discrete_laplacian

__all__ = [
    "LocalFunction",
    "generator_L",
    "quadratic_Q",
    "coordinate_L_n",
    "coordinate_Q_n",
    "pair_L_n",
    "limit_L_star",
    "coupled_L_hat_m",
    "uniform_gap",
    "local_tail_error",
]


@dataclass(frozen=True)
class _Const:
    c: float

    def __call__(self, v):
        return self.c


@dataclass(frozen=True)
class _Coord:
    scale: int

    def __call__(self, v):
        return v[0] / self.scale


@dataclass(frozen=True)
class _Square:
    scale: int

    def __call__(self, v):
        return (v[0] / self.scale) ** 2


@dataclass(frozen=True)
class _Product:
    scale: int

    def __call__(self, v):
        return (v[0] / self.scale) * (v[1] / self.scale)


@dataclass(frozen=True)
class _SquaredOf:
    inner: Callable

    def __call__(self, v):
        return self.inner(v) ** 2


@dataclass(frozen=True)
class _TimesOf:
    fa: Callable
    fb: Callable
    ia: tuple
    ib: tuple

    def __call__(self, v):
        return self.fa(tuple(v[k] for k in self.ia)) * self.fb(tuple(v[k] for k in self.ib))


@dataclass(frozen=True)
class LocalFunction:
    """``f(eta) = evaluate(eta(s) for s in support)``.

    ``coords`` is set for the coordinate functions ``f_i`` (one site) and
    ``f_{i,j}`` (two sites), which the limit operator understands.
    Evaluators are picklable so local functions can be shipped to worker
    processes.
    """

    support: tuple
    evaluate: Callable[[tuple], float]
    scale: int = 1
    coords: tuple | None = None
    name: str = "f"

    def __call__(self, eta: Mapping) -> float:
        return self.evaluate(tuple(eta.get(s, 0) for s in self.support))

    @classmethod
    def constant(cls, c: float) -> "LocalFunction":
        return cls((), _Const(c), name=f"const({c})")

    @classmethod
    def coordinate(cls, i, scale: int = 1) -> "LocalFunction":
        """``eta(i) / scale``, i.e. ``zeta(i)`` at mass scale ``scale``."""
        return cls((i,), _Coord(scale), scale, (i,), name=f"f_{i}")

    @classmethod
    def pair(cls, i, j, scale: int = 1) -> "LocalFunction":
        """``eta(i) eta(j) / scale^2``."""
        if i == j:
            return cls((i,), _Square(scale), scale, (i, i), name=f"f_{i}{i}")
        return cls((i, j), _Product(scale), scale, (i, j), name=f"f_{i}{j}")

    def squared(self) -> "LocalFunction":
        return LocalFunction(self.support, _SquaredOf(self.evaluate), self.scale, None, f"({self.name})^2")

    def times(self, other: "LocalFunction") -> "LocalFunction":
        sup = tuple(sorted(set(self.support) | set(other.support)))
        ia = tuple(sup.index(s) for s in self.support)
        ib = tuple(sup.index(s) for s in other.support)
        ev = _TimesOf(self.evaluate, other.evaluate, ia, ib)
        return LocalFunction(sup, ev, self.scale, None, f"{self.name}*{other.name}")


def _counts(eta) -> Configuration:
    if isinstance(eta, ScaledConfiguration):
        return eta.base
    if isinstance(eta, Configuration):
        return eta
    return Configuration(eta)


def _relevant_marks(f: LocalFunction, eta: Configuration, fam, g):
    """``(Mark, rate)`` for every mark that can change ``f`` at ``eta``."""
    for s in f.support:
        k = eta[s]
        fp, fm = fam.rates(k)
        yield Mark(BIRTH, s), fp
        yield Mark(DEATH, s), fm
    sup = set(f.support)
    for s in f.support:
        k = eta[s]
        if k:
            for y, p in g.kernel_row(s):
                if y != s:
                    yield Mark(JUMP, s, y), p * k
        for x, p in g.in_row(s):
            if x not in sup and eta[x]:
                yield Mark(JUMP, x, s), p * eta[x]


def _moments(f, eta, fam, g, m):
    eta = _counts(eta)
    if not f.support:
        return 0.0, 0.0
    f0 = f(eta)
    lin, quad = [], []
    for mark, rate in _relevant_marks(f, eta, fam, g):
        if rate == 0:
            continue
        diff = f(apply_transition_m(eta, mark, m)) - f0
        lin.append(rate * diff)
        quad.append(rate * diff * diff)
    return math.fsum(lin), math.fsum(quad)


def generator_L(f: LocalFunction, eta, fam, g, m: int | None = None) -> float:
    """``L f(eta)`` (``L^m`` when ``m`` is given)."""
    return _moments(f, eta, fam, g, m)[0]


def quadratic_Q(f: LocalFunction, eta, fam, g, m: int | None = None) -> float:
    """``Q f(eta) = sum_m R^m(eta) [f(Gamma^m eta) - f(eta)]^2``."""
    return _moments(f, eta, fam, g, m)[1]


def _scaled(zeta, fam):
    if not isinstance(zeta, ScaledConfiguration):
        raise TypeError("expected a ScaledConfiguration")
    if zeta.scale_n != fam.scale_n:
        raise ValueError(f"configuration scale {zeta.scale_n} differs from family scale {fam.scale_n}")
    return zeta.scale_n


def coordinate_L_n(zeta: ScaledConfiguration, i, fam, g) -> float:
    """``Delta_p zeta(i) + (F+ - F-)(eta(i)) / n``."""
    n = _scaled(zeta, fam)
    fp, fm = fam.rates(zeta.base[i])
    return discrete_laplacian(g, zeta, i) + (fp - fm) / n


def coordinate_Q_n(zeta: ScaledConfiguration, i, fam, g) -> float:
    """``|Delta_p| zeta(i) / n + (F+ + F-)(eta(i)) / n^2``."""
    n = _scaled(zeta, fam)
    fp, fm = fam.rates(zeta.base[i])
    return abs_laplacian(g, zeta, i) / n + (fp + fm) / n**2


def _p(g, i, j) -> float:
    return math.fsum(p for y, p in g.kernel_row(i) if y == j)


def pair_L_n(zeta: ScaledConfiguration, i, j, fam, g) -> float:
    """Generator of ``zeta(i) zeta(j)`` in closed form."""
    n = _scaled(zeta, fam)
    li = coordinate_L_n(zeta, i, fam, g)
    if i == j:
        return coordinate_Q_n(zeta, i, fam, g) + 2 * zeta[i] * li
    lj = coordinate_L_n(zeta, j, fam, g)
    zi, zj = zeta[i], zeta[j]
    return li * zj + lj * zi - (zi * _p(g, i, j) + zj * _p(g, j, i)) / n


def limit_L_star(f, zeta: Mapping, a: float, b: float, kappa: int, ell: int, g) -> float:
    """Second-order limit operator on ``f_i`` or ``f_{i,j}``.

    ``f`` is a coordinate :class:`LocalFunction` or a tuple of one or two
    sites.
    """
    coords = f.coords if isinstance(f, LocalFunction) else tuple(f)
    if coords is None or len(coords) not in (1, 2):
        raise ValueError("limit operator is defined on coordinate functions only")

    def first(i):
        z = zeta.get(i, 0)
        return discrete_laplacian(g, zeta, i) - b * z**kappa

    if len(coords) == 1:
        return first(coords[0])
    i, j = coords
    zi, zj = zeta.get(i, 0), zeta.get(j, 0)
    value = first(i) * zj + first(j) * zi
    if i == j:
        value += a * zi**ell
    return value


def coupled_L_hat_m(eta, eta2, m: int | None, fam, g, tol: float = 1e-9) -> tuple[float, float, bool]:
    """Coupled generator applied to ``g(eta, eta') = ||eta - eta'||_alpha``.

    Each mark fires both copies at rate ``min(R, R')`` and only the copy
    with the larger rate at rate ``|R - R'|``.  Returns the value, the
    bound ``(C + 1) g`` and whether the value respects it.
    """
    e1, e2 = _counts(eta), _counts(eta2)
    if m is not None and any(k > m for k in list(e1.values()) + list(e2.values())):
        raise ValueError(f"configurations must lie below the truncation level m={m}")
    d0 = alpha_distance(e1, e2, g)
    sites = sorted(set(e1) | set(e2))
    marks = []
    for s in sites:
        marks.append(Mark(BIRTH, s))
        marks.append(Mark(DEATH, s))
        for y, _ in g.kernel_row(s):
            if y != s:
                marks.append(Mark(JUMP, s, y))
    terms = []
    for mark in marks:
        r1, r2 = _rate(e1, mark, fam, g), _rate(e2, mark, fam, g)
        lo = min(r1, r2)
        if lo > 0:
            both = alpha_distance(apply_transition_m(e1, mark, m), apply_transition_m(e2, mark, m), g)
            terms.append(lo * (both - d0))
        if r1 > lo:
            terms.append((r1 - lo) * (alpha_distance(apply_transition_m(e1, mark, m), e2, g) - d0))
        if r2 > lo:
            terms.append((r2 - lo) * (alpha_distance(e1, apply_transition_m(e2, mark, m), g) - d0))
    value = math.fsum(terms)
    bound = (g.c_constant + 1) * d0
    return value, bound, value <= bound + tol


def _rate(eta: Configuration, mark: Mark, fam, g) -> float:
    kind, x, y = mark
    k = eta[x]
    if kind == BIRTH:
        return fam.rates(k)[0]
    if kind == DEATH:
        return fam.rates(k)[1]
    return _p(g, x, y) * k


def uniform_gap(fam, A: float, g, i, j=None, per_axis: int = 41) -> float:
    """Grid supremum of ``|L_n f - L* f|`` over masses up to ``A``.

    For ``f_i`` the Laplacian parts cancel, so single-site masses ``k/n``
    with ``k <= ceil(A n)`` cover the grid exactly.  For ``f_{i,j}`` the
    two coordinates range over an evenly spaced subgrid of at most
    ``per_axis`` lattice masses each.
    """
    n = fam.scale_n
    tg = fam.targets
    kmax = math.ceil(A * n)
    worst = 0.0
    if j is None:
        for k in range(kmax + 1):
            z = ScaledConfiguration(Configuration({i: k}), n)
            gap = abs(coordinate_L_n(z, i, fam, g) - limit_L_star((i,), z, tg.a, tg.b, tg.kappa, tg.ell, g))
            worst = max(worst, gap)
        return worst
    ks = sorted({round(q * kmax / (per_axis - 1)) for q in range(per_axis)}) if kmax else [0]
    for ki in ks:
        for kj in ks if i != j else [0]:
            counts = {i: ki} if i == j else {i: ki, j: kj}
            z = ScaledConfiguration(Configuration(counts), n)
            gap = abs(pair_L_n(z, i, j, fam, g) - limit_L_star((i, j), z, tg.a, tg.b, tg.kappa, tg.ell, g))
            worst = max(worst, gap)
    return worst


def local_tail_error(outside_alpha_mass: float, c_constant: float, sup_f: float, eps: float) -> float:
    """Bound ``C * sum_{x outside} eta(x) alpha(x) * 2 M / eps`` on the
    contribution of sites outside a window to ``L f`` for an
    ``eps``-local function bounded by ``M``."""
    return c_constant * outside_alpha_mass * 2 * sup_f / eps
