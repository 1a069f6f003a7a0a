"""Birth and death rate functions ``F+`` / ``F-`` of particle counts.

The engine accepts anything implementing :class:`ReactionFunctions`.  The
scaling family :class:`ReactionFamily` realizes the macroscopic drift
``-b z^kappa`` and squared oscillation ``a z^ell`` at mass scale ``n``::

    2 F+(k) = max(n^2 a (k/n)^ell - n b (k/n)^kappa, 0)
      F-(k) = n^2 a (k/n)^ell - F+(k)

Rates are functions of the integer count ``k``; the scaled mass is
``z = k / n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

__all__ = [
    "ReactionConditionError",
    "ReactionFunctions",
    "ReactionFamily",
    "TabulatedReaction",
    "CustomReaction",
    "MacroscopicTargets",
    "validate_reaction",
    "rates_n",
    "drift_gap",
    "diffusion_gap",
    "sup_gap",
]


class ReactionConditionError(ValueError):
    """Rate functions violate one of nullF, orderF, decreasingF."""

    def __init__(self, condition: str, message: str):
        super().__init__(f"{condition}: {message}")
        self.condition = condition


class ReactionFunctions:
    """Base class; subclasses implement :meth:`_compute`.

    ``scale_n`` is the mass scale used to convert counts to masses
    (1 for unscaled custom rates).
    """

    scale_n: int = 1

    def _compute(self, k: int) -> tuple[float, float]:
        raise NotImplementedError

    def rates(self, k: int) -> tuple[float, float]:
        cache = self.__dict__.setdefault("_cache", {})
        r = cache.get(k)
        if r is None:
            r = cache[k] = self._compute(k)
        return r

    def f_plus(self, k: int) -> float:
        return self.rates(k)[0]

    def f_minus(self, k: int) -> float:
        return self.rates(k)[1]

    def is_balanced(self) -> bool:
        return False

    def __getstate__(self):
        state = dict(self.__dict__)
        state.pop("_cache", None)
        return state


def validate_reaction(fam: ReactionFunctions, kmax: int = 10_000) -> None:
    """Exhaustively check the three rate conditions on ``0..kmax``.

    Raises :class:`ReactionConditionError` naming the first violated one.
    """
    fp0, fm0 = fam.rates(0)
    if fp0 != 0 or fm0 != 0:
        raise ReactionConditionError("nullF", f"F+(0) = {fp0}, F-(0) = {fm0}; both must be 0")
    prev = 0.0
    for k in range(kmax + 1):
        fp, fm = fam.rates(k)
        if not (0 <= fp <= fm):
            raise ReactionConditionError("orderF", f"need 0 <= F+(k) <= F-(k), got F+({k}) = {fp}, F-({k}) = {fm}")
        diff = fp - fm
        if k and diff > prev:
            raise ReactionConditionError(
                "decreasingF", f"F+ - F- increases from {prev} at k={k - 1} to {diff} at k={k}"
            )
        prev = diff


@dataclass(frozen=True)
class MacroscopicTargets:
    """Drift ``F(z) = -b z^kappa`` and diffusion ``G(z) = a z^ell``."""

    a: float
    b: float
    kappa: int
    ell: int

    def drift(self, z: float) -> float:
        return -self.b * z**self.kappa

    def diffusion(self, z: float) -> float:
        return self.a * z**self.ell


@dataclass(frozen=True, eq=True)
class ReactionFamily(ReactionFunctions):
    """The positive-part split at scale ``n``.

    ``a = 0`` is outside the split's domain (it would freeze the reaction
    entirely); there the pure-death rates ``F+ = 0, F- = n b (k/n)^kappa``
    are used, which have the same drift and vanishing oscillation.
    """

    a: float
    b: float
    kappa: int = 1
    ell: int = 1
    n: int = 1
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValueError("a and b must be nonnegative")
        if int(self.kappa) != self.kappa or self.kappa < 1 or int(self.ell) != self.ell or self.ell < 1:
            raise ValueError("kappa and ell must be positive integers")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")

    @property
    def scale_n(self) -> int:
        return int(self.n)

    @property
    def targets(self) -> MacroscopicTargets:
        return MacroscopicTargets(self.a, self.b, self.kappa, self.ell)

    def at_scale(self, n: int) -> "ReactionFamily":
        return ReactionFamily(self.a, self.b, self.kappa, self.ell, n)

    def _compute(self, k: int) -> tuple[float, float]:
        if k == 0:
            return (0.0, 0.0)
        n = self.n
        # integer ratios are correctly rounded, unlike powers of k/n
        death = self.b * ((n * k**self.kappa) / n**self.kappa)
        if self.a == 0:
            return (0.0, death)
        total = self.a * ((n * n * k**self.ell) / n**self.ell)
        fp = max(total - death, 0.0) / 2
        return (fp, total - fp)

    def is_balanced(self) -> bool:
        return self.b == 0 and self.a > 0

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_cache"] = {}
        return state

    def __setstate__(self, state):
        for k, v in state.items():
            object.__setattr__(self, k, v)


class TabulatedReaction(ReactionFunctions):
    """Rates given on ``k = 0..K``, extended linearly with the last increment."""

    def __init__(self, f_plus: Sequence[float], f_minus: Sequence[float], validate: bool = True):
        if len(f_plus) != len(f_minus) or len(f_plus) < 2:
            raise ValueError("f_plus and f_minus tables need equal length >= 2")
        self.table_plus = tuple(float(v) for v in f_plus)
        self.table_minus = tuple(float(v) for v in f_minus)
        if validate:
            validate_reaction(self, kmax=len(self.table_plus) + 2)
            sp = self.table_plus[-1] - self.table_plus[-2]
            sm = self.table_minus[-1] - self.table_minus[-2]
            if sp < 0:
                raise ReactionConditionError("orderF", "F+ table tail decreases, extension would turn negative")
            if sp > sm:
                raise ReactionConditionError("decreasingF", "tail slope of F+ exceeds that of F-")

    def _compute(self, k: int) -> tuple[float, float]:
        tp, tm = self.table_plus, self.table_minus
        last = len(tp) - 1
        if k <= last:
            return (tp[k], tm[k])
        extra = k - last
        return (tp[last] + extra * (tp[last] - tp[last - 1]), tm[last] + extra * (tm[last] - tm[last - 1]))

    def is_balanced(self) -> bool:
        return self.table_plus == self.table_minus

    def __eq__(self, other):
        return (
            isinstance(other, TabulatedReaction)
            and other.table_plus == self.table_plus
            and other.table_minus == self.table_minus
        )

    def __hash__(self):
        return hash((self.table_plus, self.table_minus))

    def __repr__(self):
        return f"TabulatedReaction(f_plus={list(self.table_plus)}, f_minus={list(self.table_minus)})"


class CustomReaction(ReactionFunctions):
    """Rates from two callables on integer counts (checked on ``0..check_kmax``)."""

    def __init__(self, f_plus: Callable[[int], float], f_minus: Callable[[int], float], check_kmax: int = 1000):
        self._fp = f_plus
        self._fm = f_minus
        if check_kmax:
            validate_reaction(self, check_kmax)

    def _compute(self, k: int) -> tuple[float, float]:
        return (float(self._fp(k)), float(self._fm(k)))


def rates_n(fam: ReactionFunctions, k: int) -> tuple[float, float]:
    """``(F+(k), F-(k))``."""
    if k < 0:
        raise ValueError("particle count must be nonnegative")
    return fam.rates(k)


def _count(fam: ReactionFamily, zeta: float) -> int:
    k = round(zeta * fam.n)
    if abs(k - zeta * fam.n) > 1e-9 * max(1.0, abs(zeta * fam.n)):
        raise ValueError(f"zeta = {zeta} is not on the lattice k/{fam.n}")
    return k


GAP_RTOL = 1e-12


def _gap(value: float, target: float, scale: float) -> float:
    """``|value - target|``, with differences at round-off level relative to
    the operands reported as exactly 0."""
    gap = abs(value - target)
    return 0.0 if gap <= GAP_RTOL * (scale + abs(target)) else gap


def _gaps(fam: ReactionFamily, k: int) -> tuple[float, float]:
    fp, fm = fam.rates(k)
    n = fam.n
    z = k / n
    tg = fam.targets
    drift = _gap((fp - fm) / n, tg.drift(z), (fp + fm) / n)
    diffusion = _gap((fp + fm) / n**2, tg.diffusion(z), (fp + fm) / n**2)
    return drift, diffusion


def drift_gap(fam: ReactionFamily, zeta: float) -> float:
    """``|(F+ - F-)(n zeta) / n - F(zeta)|``."""
    return _gaps(fam, _count(fam, zeta))[0]


def diffusion_gap(fam: ReactionFamily, zeta: float) -> float:
    """``|(F+ + F-)(n zeta) / n^2 - G(zeta)|``."""
    return _gaps(fam, _count(fam, zeta))[1]


def sup_gap(fam: ReactionFamily, A: float) -> tuple[float, float]:
    """Largest drift and diffusion gaps over attainable masses ``k/n <= A``."""
    if A < 0:
        raise ValueError("A must be nonnegative")
    kmax = math.floor(A * fam.n + 1e-9)
    worst_d = worst_q = 0.0
    for k in range(kmax + 1):
        d, q = _gaps(fam, k)
        worst_d = max(worst_d, d)
        worst_q = max(worst_q, q)
    return worst_d, worst_q
