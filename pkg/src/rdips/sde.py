"""Euler-Maruyama integration of the limiting SDE on a finite window.

Per step and site::

    zeta <- zeta + dt (Delta_p zeta - b zeta^kappa) + sqrt(dt a zeta^ell) xi
    zeta <- max(zeta, 0)

``Delta_p`` is restricted to the window, so mass jumping out of the window
is lost.  Every replica draws its normals from its own stream, in step
order, so results do not depend on how replicas are batched.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .streams import EventStream

__all__ = [
    "SdeConfig",
    "SdeDivergenceError",
    "Ensemble",
    "window_matrix",
    "euler_maruyama",
    "moment_profile",
    "brownian_increments",
]

_SDE_TAG = 0x5DE
DIVERGENCE_FACTOR = 1e6


class SdeDivergenceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SdeConfig:
    dt: float
    t_end: float
    replicas: int = 1
    positivity_policy: str = "clamp_zero"
    sample_times: tuple = ()
    batch: int = 256
    step_block: int = 512

    def __post_init__(self):
        if not (self.dt > 0 and self.t_end > 0):
            raise ValueError("dt and t_end must be positive")
        if self.dt > self.t_end:
            raise ValueError("dt must not exceed t_end")
        if self.replicas < 1:
            raise ValueError("replicas must be positive")
        if self.positivity_policy != "clamp_zero":
            raise ValueError(f"unknown positivity policy {self.positivity_policy!r}")
        times = self.sample_times or (self.t_end,)
        object.__setattr__(self, "sample_times", tuple(float(t) for t in times))
        if any(not 0 <= t <= self.t_end + 1e-12 for t in self.sample_times):
            raise ValueError("sample_times must lie in [0, t_end]")

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def sample_steps(self) -> list[int]:
        out = []
        for t in self.sample_times:
            k = int(round(t / self.dt))
            if abs(k * self.dt - t) > 1e-9 * max(1.0, t):
                raise ValueError(f"sample time {t} is not a multiple of dt={self.dt}")
            out.append(k)
        return out


@dataclass
class Ensemble:
    """Sampled paths; ``values[r, k, s]`` is replica ``r`` at ``times[k]`` and ``sites[s]``."""

    times: np.ndarray
    sites: list
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def replicas(self) -> int:
        return self.values.shape[0]


def window_matrix(g, window: Sequence) -> tuple[list, np.ndarray, np.ndarray]:
    """Sorted window, ``P[j, i] = p(j, i)`` inside it, and full row sums."""
    sites = sorted(window)
    index = {s: k for k, s in enumerate(sites)}
    P = np.zeros((len(sites), len(sites)))
    out = np.zeros(len(sites))
    for s in sites:
        row = g.kernel_row(s)
        out[index[s]] = math.fsum(p for _, p in row)
        for y, p in row:
            if y in index:
                P[index[s], index[y]] += p
    return sites, P, out


def euler_maruyama(
    zeta0: Mapping,
    window: Sequence,
    a: float,
    b: float,
    kappa: int,
    ell: int,
    g,
    cfg: SdeConfig,
    stream: EventStream,
) -> Ensemble:
    """Integrate ``cfg.replicas`` independent paths from ``zeta0``."""
    sites, P, outflow = window_matrix(g, window)
    idx = {s: k for k, s in enumerate(sites)}
    z0 = np.zeros(len(sites))
    for s, v in zeta0.items():
        if v < 0:
            raise ValueError("initial masses must be nonnegative")
        if v and s not in idx:
            raise ValueError(f"initial mass at {s!r} lies outside the window")
        if v:
            z0[idx[s]] = float(v)
    mass0 = float(z0.sum())
    drift0 = np.abs(z0 @ P - outflow * z0 - b * z0**kappa)
    if cfg.dt * float(drift0.max(initial=0.0)) >= 1:
        warnings.warn("dt times the initial drift magnitude is not below 1", RuntimeWarning, stacklevel=2)
    steps = cfg.steps
    sample_steps = cfg.sample_steps()
    want: dict = {}
    for pos, k in enumerate(sample_steps):
        want.setdefault(k, []).append(pos)
    R, S = cfg.replicas, len(sites)
    out = np.empty((R, len(sample_steps), S))
    sq_dt = math.sqrt(cfg.dt)
    limit = DIVERGENCE_FACTOR * max(mass0, 1e-300)
    noisy = a > 0
    for lo in range(0, R, cfg.batch):
        hi = min(R, lo + cfg.batch)
        gens = [stream.generator(_SDE_TAG, r) for r in range(lo, hi)] if noisy else []
        z = np.tile(z0, (hi - lo, 1))
        for pos in want.get(0, ()):
            out[lo:hi, pos] = z
        noise = None
        for k in range(steps):
            if noisy:
                off = k % cfg.step_block
                if off == 0:
                    width = min(cfg.step_block, steps - k)
                    noise = np.stack([gen.standard_normal((width, S)) for gen in gens], axis=1)
                xi = noise[off]
            step = cfg.dt * (z @ P - outflow * z - b * z**kappa)
            if noisy:
                step += np.sqrt(a * z**ell) * sq_dt * xi
            z = z + step
            np.maximum(z, 0.0, out=z)
            for pos in want.get(k + 1, ()):
                out[lo:hi, pos] = z
            if mass0 and float(z.sum(axis=1).max()) > limit:
                raise SdeDivergenceError(f"mass exceeded {DIVERGENCE_FACTOR:g} times the initial mass at step {k + 1}")
    meta = {"boundary": "removal outside window", "positivity_policy": cfg.positivity_policy, "dt": cfg.dt}
    return Ensemble(np.array(cfg.sample_times), sites, out, meta)


def moment_profile(ensemble: Ensemble, times=None, sites=None) -> list[dict]:
    """Rows ``time, site, mean, m2, se, replicas`` over the requested cells."""
    R = ensemble.replicas
    if R == 0:
        raise ValueError("empty ensemble")
    t_index = range(len(ensemble.times)) if times is None else [_locate(ensemble.times, t) for t in times]
    s_index = range(len(ensemble.sites)) if sites is None else [ensemble.sites.index(s) for s in sites]
    rows = []
    for ti in t_index:
        for si in s_index:
            col = ensemble.values[:, ti, si]
            mean = float(col.mean())
            m2 = float((col * col).mean())
            constant = R == 1 or col.min() == col.max()
            se = 0.0 if constant else float(col.std(ddof=1) / math.sqrt(R))
            rows.append(
                {"time": float(ensemble.times[ti]), "site": ensemble.sites[si], "mean": mean, "m2": m2, "se": se, "replicas": R}
            )
    return rows


def _locate(times: np.ndarray, t: float) -> int:
    hits = np.flatnonzero(np.isclose(times, t, rtol=0, atol=1e-9))
    if not len(hits):
        raise KeyError(f"time {t} was not sampled")
    return int(hits[0])


def brownian_increments(stream: EventStream, replicas: int, steps: int, n_sites: int, dt: float) -> np.ndarray:
    """The increments ``sqrt(dt) xi`` the integrator uses, shape ``(replicas, steps, n_sites)``."""
    return np.stack(
        [stream.generator(_SDE_TAG, r).standard_normal((steps, n_sites)) * math.sqrt(dt) for r in range(replicas)]
    )
