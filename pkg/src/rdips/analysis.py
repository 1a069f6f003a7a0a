"""Monte Carlo and exact checks of the supermartingale, Dynkin, ball and
fluid-limit statements.

Every test returns a :class:`StatReport`.  Statistical rows fail only when
an inequality is violated by more than three standard errors; exact rows
admit no tolerance beyond floating-point noise.  Replicas are driven by
``EventStream(seed, replica)`` and reduced in replica order, so reports are
bit-identical for any worker count.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass, field
from functools import partial
from itertools import groupby, product
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.linalg import expm

from .configuration import Configuration, ScaledConfiguration, alpha_distance, leq, restrict_to_ball
from .engine import EngineConfig, Trajectory, run_flow, run_flows, run_truncation_ladder
from .generator import (
    LocalFunction,
    coordinate_L_n,
    coordinate_Q_n,
    coupled_L_hat_m,
    generator_L,
    pair_L_n,
    quadratic_Q,
)
from .graph_kernel import alpha_ball, ball_exit_radius, tail_weight, verify_localization
from .parallel import chunked, map_replicas
from .sde import Ensemble, SdeConfig, euler_maruyama, moment_profile, window_matrix
from .streams import EventStream

__all__ = [
    "PASS",
    "FAIL",
    "INCONCLUSIVE",
    "ReportRow",
    "StatReport",
    "ConstantProfile",
    "ConfigurationProfile",
    "mean_se",
    "distance_path",
    "weighted_sup",
    "distance_supermartingale_test",
    "one_norm_supermartingale_test",
    "ball_truncation_test",
    "dynkin_residual_test",
    "fluid_limit_test",
    "thermodynamic_limit_test",
    "heat_semigroup_means",
    "ips_ensemble",
    "heat_semigroup_variances",
    "ode_solution",
    "coupling_order_test",
    "truncation_ladder_test",
    "generator_check",
    "contraction_scan",
]

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"
Z = 3.0
EXACT_TOL = 1e-9
_CHUNK = 64


@dataclass
class ReportRow:
    statistic: str
    checkpoint: object
    estimate: float
    se: float
    bound: float
    verdict: str


@dataclass
class StatReport:
    name: str
    rows: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def add(self, statistic, checkpoint, estimate, se, bound, ok) -> ReportRow:
        verdict = ok if isinstance(ok, str) else (PASS if ok else FAIL)
        row = ReportRow(statistic, checkpoint, float(estimate), float(se), float(bound), verdict)
        self.rows.append(row)
        return row

    @property
    def verdict(self) -> str:
        kinds = {r.verdict for r in self.rows}
        if FAIL in kinds:
            return FAIL
        if INCONCLUSIVE in kinds or not kinds:
            return INCONCLUSIVE
        return PASS

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def select(self, statistic: str) -> list:
        return [r for r in self.rows if r.statistic == statistic]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["statistic", "checkpoint", "estimate", "se", "bound", "verdict"])
        for r in self.rows:
            w.writerow([r.statistic, r.checkpoint, repr(r.estimate), repr(r.se), repr(r.bound), r.verdict])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "rows": len(self.rows),
            "failed": [f"{r.statistic}@{r.checkpoint}" for r in self.rows if r.verdict == FAIL],
            "details": self.details,
        }


# -- initial-data rules ------------------------------------------------------


@dataclass(frozen=True)
class ConstantProfile:
    """``eta(x) = floor(n * density)`` at every site."""

    density: float = 1.0
    n: int = 1

    def count(self) -> int:
        return math.floor(self.n * self.density)

    def restrict(self, g, sites) -> Configuration:
        k = self.count()
        return Configuration({s: k for s in sites if g.contains(s)})

    def outside_alpha_mass(self, g, r: float) -> float:
        """``||eta 1_{B(r)^c}||_alpha / n`` for a radial lattice weight."""
        if g.finite:
            ball = alpha_ball(g, r)
            return self.count() / self.n * math.fsum(g.alpha(s) for s in g.sites() if s not in ball)
        return self.count() / self.n * tail_weight(g, ball_exit_radius(g, r))


@dataclass(frozen=True)
class ConfigurationProfile:
    """A fixed finite configuration seen as a profile."""

    eta: Configuration
    n: int = 1

    def restrict(self, g, sites) -> Configuration:
        return restrict_to_ball(self.eta, sites)

    def outside_alpha_mass(self, g, r: float) -> float:
        ball = alpha_ball(g, r)
        return math.fsum(g.alpha(s) * k for s, k in self.eta.items() if s not in ball) / self.n


# -- estimators and path functionals -----------------------------------------


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    if x.size == 1 or x.min() == x.max():
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _prob_se(hits) -> tuple[float, float]:
    hits = np.asarray(hits, dtype=float)
    p = float(hits.mean())
    return p, math.sqrt(max(p * (1 - p), 0.0) / hits.size)


def _merged_groups(trajs: Sequence[Trajectory]):
    """``(time, [(flow index, changes), ...])`` for all flows, grouped by time."""
    streams = [_tagged(tr, k) for k, tr in enumerate(trajs)]
    merged = heapq.merge(*streams, key=lambda e: e[0])
    for t, grp in groupby(merged, key=lambda e: e[0]):
        yield t, [(k, ch) for _, k, ch in grp]


def _tagged(tr: Trajectory, k: int):
    for t, ch in zip(tr.times, tr.changes):
        yield t, k, ch


def distance_path(a: Trajectory, b: Trajectory, g, weight: Callable | None = None) -> float:
    """``sup_t sum_x w(x) |a_t(x) - b_t(x)|`` over the common horizon (``w = alpha``)."""
    w = weight or g.alpha
    cache: dict = {}

    def wt(s):
        v = cache.get(s)
        if v is None:
            v = cache[s] = w(s)
        return v

    cur = [a.initial.as_dict(), b.initial.as_dict()]
    d = math.fsum(wt(s) * abs(cur[0].get(s, 0) - cur[1].get(s, 0)) for s in set(cur[0]) | set(cur[1]))
    best = d
    for _, group in _merged_groups([a, b]):
        for k, ch in group:
            mine, other = cur[k], cur[1 - k]
            for s, new in ch:
                o = other.get(s, 0)
                d += wt(s) * (abs(new - o) - abs(mine.get(s, 0) - o))
                mine[s] = new
        if d > best:
            best = d
    return best


def weighted_sup(tr: Trajectory, weight: Callable) -> float:
    """``sup_t sum_x w(x) * tr_t(x)`` along one trajectory."""
    cache: dict = {}

    def wt(s):
        v = cache.get(s)
        if v is None:
            v = cache[s] = weight(s)
        return v

    cur = tr.initial.as_dict()
    total = math.fsum(wt(s) * k for s, k in cur.items())
    best = total
    for t, ch in zip(tr.times, tr.changes):
        for s, new in ch:
            total += wt(s) * (new - cur.get(s, 0))
            cur[s] = new
        if total > best:
            best = total
    return best


def _mass_sup(tr: Trajectory) -> int:
    total = tr.initial.total()
    best = total
    cur = tr.initial.as_dict()
    for ch in tr.changes:
        for s, new in ch:
            total += new - cur.get(s, 0)
            cur[s] = new
        best = max(best, total)
    return best


def _fan(worker: Callable, replicas: int, threads: int) -> list:
    """Run ``worker(list_of_replica_ids)`` over chunks and flatten in replica order."""
    out = []
    for part in map_replicas(worker, chunked(range(replicas), _CHUNK), threads):
        out.extend(part)
    return out


def _nonincreasing(report, name, times, samples):
    """Paired check ``E[X_{k+1} - X_k] <= 3 SE`` along ``times``."""
    ok_all = True
    for k in range(1, len(times)):
        diff, se = mean_se(samples[:, k] - samples[:, k - 1])
        ok = diff <= Z * se + EXACT_TOL
        ok_all &= ok
        report.add(f"{name}_increment", times[k], diff, se, 0.0, ok)
    return ok_all


# -- supermartingale tests ---------------------------------------------------


def _pair_worker(ids, *, seed, eta, eta2, fam, g, times, t_end):
    cfg = EngineConfig(mode="coupled", t_end=t_end, sample_times=tuple(times))
    out = []
    for r in ids:
        a, b = run_flows([eta, eta2], fam, g, cfg, EventStream(seed, r))
        dists = [alpha_distance(x, y, g) for x, y in zip(a.samples, b.samples)]
        out.append((dists, distance_path(a, b, g)))
    return out


def distance_supermartingale_test(
    eta,
    eta2,
    fam,
    g,
    times: Sequence[float],
    replicas: int,
    *,
    seed: int = 0,
    A_grid: Sequence[float] = (),
    oracle: Callable[[float], float] | None = None,
    threads: int = 1,
) -> StatReport:
    """Discounted coupled distance ``e^{-(C+1)t} ||Phi_t(eta) - Phi_t(eta')||_alpha``.

    Rows: the discounted mean at each time, its paired increments (must not
    be significantly positive), the maximal-inequality tail for every
    ``A`` in ``A_grid``, and optionally an analytic ``oracle(t)``.
    """
    times = [float(t) for t in times]
    if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
        raise ValueError("times must be increasing")
    eta, eta2 = Configuration(eta), Configuration(eta2)
    T = times[-1]
    c1 = g.c_constant + 1
    worker = partial(_pair_worker, seed=seed, eta=eta, eta2=eta2, fam=fam, g=g, times=times, t_end=T)
    res = _fan(worker, replicas, threads)
    d = np.array([r[0] for r in res])
    sups = np.array([r[1] for r in res])
    disc = d * np.exp(-c1 * np.array(times))
    rep = StatReport("distance_supermartingale", details={"C": g.c_constant, "replicas": replicas, "seed": seed})
    d0 = alpha_distance(eta, eta2, g)
    for k, t in enumerate(times):
        m, se = mean_se(disc[:, k])
        rep.add("discounted_distance", t, m, se, d0, m <= d0 + Z * se + EXACT_TOL)
        if oracle is not None:
            ref = oracle(t)
            rep.add("oracle_gap", t, m - ref, se, 0.0, abs(m - ref) <= Z * se + EXACT_TOL)
    _nonincreasing(rep, "discounted_distance", times, disc)
    for A in A_grid:
        p, se = _prob_se(sups > A)
        bound = math.exp(c1 * T) * d0 / A
        rep.add("sup_distance_tail", A, p, se, bound, p <= bound + Z * se)
    return rep


def _mass_worker(ids, *, seed, eta, fam, g, times, t_end):
    cfg = EngineConfig(mode="coupled", t_end=t_end, sample_times=tuple(times))
    out = []
    for r in ids:
        tr = run_flow(eta, fam, g, cfg, EventStream(seed, r))
        masses = [s.total() for s in tr.samples]
        out.append((masses, _mass_sup(tr), _mass_constant(tr)))
    return out


def _mass_constant(tr: Trajectory) -> bool:
    total = tr.initial.total()
    cur = tr.initial.as_dict()
    for ch in tr.changes:
        for s, new in ch:
            total += new - cur.get(s, 0)
            cur[s] = new
        if total != tr.initial.total():
            return False
    return True


def one_norm_supermartingale_test(
    eta,
    fam,
    g,
    times: Sequence[float],
    replicas: int,
    *,
    seed: int = 0,
    A_grid: Sequence[float] = (),
    martingale: bool = False,
    pathwise_constant: bool = False,
    threads: int = 1,
) -> StatReport:
    """Total mass ``||Phi_t(eta)||_1``: non-increasing mean and maximal tail.

    ``martingale`` adds rows asserting a constant mean (balanced rates);
    ``pathwise_constant`` asserts exact conservation on every replica
    (pure diffusion).
    """
    times = [float(t) for t in times]
    eta = Configuration(eta)
    T = times[-1]
    worker = partial(_mass_worker, seed=seed, eta=eta, fam=fam, g=g, times=times, t_end=T)
    res = _fan(worker, replicas, threads)
    masses = np.array([r[0] for r in res], dtype=float)
    sups = np.array([r[1] for r in res], dtype=float)
    m0 = eta.total()
    rep = StatReport("one_norm_supermartingale", details={"replicas": replicas, "seed": seed, "mass0": m0})
    for k, t in enumerate(times):
        m, se = mean_se(masses[:, k])
        rep.add("mean_one_norm", t, m, se, m0, m <= m0 + Z * se + EXACT_TOL)
        if martingale:
            rep.add("martingale_gap", t, m - m0, se, 0.0, abs(m - m0) <= Z * se + EXACT_TOL)
    _nonincreasing(rep, "mean_one_norm", times, masses)
    for A in A_grid:
        p, se = _prob_se(sups > A)
        bound = m0 / A
        rep.add("sup_one_norm_tail", A, p, se, bound, p <= bound + Z * se)
    if pathwise_constant:
        broken = sum(1 for r in res if not r[2])
        rep.add("pathwise_conservation", T, broken, 0.0, 0.0, broken == 0)
    return rep


# -- Dynkin residuals --------------------------------------------------------


def _neighbourhood(f: LocalFunction, g) -> tuple:
    sites = set(f.support)
    for s in f.support:
        sites.update(x for x, _ in g.in_row(s))
    return tuple(sorted(sites))


def _dynkin_worker(ids, *, seed, f, eta, fam, g, t, h):
    hood = _neighbourhood(f, g)
    memo: dict = {}

    def lq(state: dict):
        key = tuple(state.get(s, 0) for s in hood)
        v = memo.get(key)
        if v is None:
            local = Configuration._trusted({s: k for s, k in zip(hood, key) if k})
            v = memo[key] = (generator_L(f, local, fam, g), quadratic_Q(f, local, fam, g))
        return v

    sample_times = (h, t) if h is not None and h < t else (t,)
    cfg = EngineConfig(mode="coupled", t_end=t, sample_times=sample_times)
    f0 = f(eta)
    out = []
    for r in ids:
        tr = run_flow(eta, fam, g, cfg, EventStream(seed, r))
        int_l, int_q = [], []
        for start, stop, state, _ in tr.segments():
            if stop > start:
                lv, qv = lq(state)
                int_l.append(lv * (stop - start))
                int_q.append(qv * (stop - start))
        ft = f(tr.samples[-1])
        m = ft - f0 - math.fsum(int_l)
        fh = f(tr.samples[0]) if len(sample_times) == 2 else ft
        out.append((m, math.fsum(int_q), fh - f0))
    return out


def dynkin_residual_test(
    f: LocalFunction,
    eta,
    fam,
    g,
    t: float,
    replicas: int,
    *,
    seed: int = 0,
    h: float | None = None,
    threads: int = 1,
) -> StatReport:
    """Mean and variance of ``M_t = f(Phi_t) - f(eta) - int_0^t Lf(Phi_s) ds``.

    The integrals are exact along the piecewise-constant path.  With ``h``
    the short-time difference quotient ``(E f(Phi_h) - f(eta)) / h`` is
    compared with ``Lf(eta)``.
    """
    eta = Configuration(eta)
    worker = partial(_dynkin_worker, seed=seed, f=f, eta=eta, fam=fam, g=g, t=t, h=h)
    res = _fan(worker, replicas, threads)
    M = np.array([r[0] for r in res])
    IQ = np.array([r[1] for r in res])
    rep = StatReport("dynkin_residual", details={"function": f.name, "t": t, "replicas": replicas, "seed": seed})
    m, se = mean_se(M)
    rep.add("mean_M", t, m, se, 0.0, abs(m) <= Z * se + EXACT_TOL)
    var = float(M.var(ddof=1)) if len(M) > 1 else 0.0
    eq = float(IQ.mean())
    _, se_d = mean_se(M * M - IQ)
    rep.add("var_M_minus_EintQ", t, var - eq, se_d, 0.0, abs(var - eq) <= Z * se_d + EXACT_TOL)
    rep.details.update({"var_M": var, "E_int_Q": eq})
    if h is not None:
        dq = np.array([r[2] for r in res]) / h
        est, se_h = mean_se(dq)
        lf = generator_L(f, eta, fam, g)
        rep.add("short_time_derivative", h, est - lf, se_h, 0.0, abs(est - lf) <= Z * se_h + EXACT_TOL)
        rep.details["Lf_eta"] = lf
    return rep


# -- fluid limit -------------------------------------------------------------


def _ips_worker(ids, *, seed, eta, fam, g, times, t_end, sites, mode):
    cfg = EngineConfig(mode=mode, t_end=t_end, sample_times=tuple(times))
    n = fam.scale_n
    out = []
    for r in ids:
        tr = run_flow(eta, fam, g, cfg, EventStream(seed, r))
        out.append([[s.get(x, 0) / n for x in sites] for s in tr.samples])
    return out


def ips_ensemble(
    eta, fam, g, times, sites, replicas, *, seed=0, mode="independent", threads=1
) -> Ensemble:
    """Scaled IPS samples ``eta_t / n`` packed like an SDE ensemble."""
    times = [float(t) for t in times]
    worker = partial(
        _ips_worker, seed=seed, eta=Configuration(eta), fam=fam, g=g, times=times, t_end=max(times), sites=list(sites), mode=mode
    )
    vals = np.array(_fan(worker, replicas, threads), dtype=float).reshape(replicas, len(times), len(sites))
    return Ensemble(np.array(times), list(sites), vals, {"kind": "ips", "n": fam.scale_n, "mode": mode})


def heat_semigroup_means(zeta0: Mapping, g, window, times) -> dict:
    """``m(t) = m0 exp(t (P_W - diag(out)))`` on the window, keyed by ``(t, site)``."""
    sites, P, out = window_matrix(g, window)
    gen = P - np.diag(out)
    m0 = np.array([float(zeta0.get(s, 0)) for s in sites])
    res = {}
    for t in times:
        mt = m0 @ expm(t * gen)
        for s, v in zip(sites, mt):
            res[(float(t), s)] = float(v)
    return res


def heat_semigroup_variances(eta0: Mapping, n: int, g, window, times) -> dict:
    """Exact variance of ``eta_t(s) / n`` under pure diffusion from ``eta0``.

    Particles are independent walkers, so each count is a sum of binomials
    with success probabilities ``p_t(x, s)``.
    """
    sites, P, out = window_matrix(g, window)
    gen = P - np.diag(out)
    k0 = np.array([float(eta0.get(s, 0)) for s in sites])
    res = {}
    for t in times:
        pt = expm(t * gen)
        var = k0 @ (pt * (1 - pt)) / n**2
        for s, v in zip(sites, var):
            res[(float(t), s)] = float(v)
    return res


def ode_solution(z0: float, b: float, kappa: int, t: float) -> float:
    """Solution of ``z' = -b z^kappa``."""
    if kappa == 1:
        return z0 * math.exp(-b * t)
    if z0 == 0:
        return 0.0
    return (z0 ** (1 - kappa) + (kappa - 1) * b * t) ** (1 / (1 - kappa))


def fluid_limit_test(
    zeta_star0: Mapping,
    fam_base,
    g,
    n_list: Sequence[int],
    T: float,
    replicas: int,
    *,
    window=None,
    times: Sequence[float] | None = None,
    dt: float = 1e-3,
    sde_replicas: int | None = None,
    oracle: str | None = None,
    compare_sde: bool = True,
    seed: int = 0,
    threads: int = 1,
) -> StatReport:
    """IPS moment profiles ``eta^n / n`` from ``floor(n zeta*)`` against the SDE.

    The gap metric of one ``n`` is the largest cell-wise
    ``|mean_IPS - mean_SDE| / (3 combined SE)``.  It must not grow along
    ``n_list`` beyond the 3-SE noise floor (``metric_{k+1} <= max(metric_k,
    1)``) and must be at most 1 at the last ``n``.  ``oracle`` adds exact
    comparisons: ``"ode"`` (no noise, single site) or ``"heat"`` (pure
    diffusion, heat semigroup on the window).  The heat rows use the exact
    binomial standard error of independent walkers, which stays meaningful
    in cells where every replica happens to read 0.
    """
    tg = fam_base.targets
    times = [float(t) for t in (times or (T,))]
    window = sorted(window if window is not None else (g.sites() if g.finite else zeta_star0))
    rep = StatReport(
        "fluid_limit",
        details={"n_list": list(n_list), "replicas": replicas, "seed": seed, "dt": dt, "boundary": "removal outside window"},
    )
    em_rows = None
    if compare_sde:
        cfg = SdeConfig(dt=dt, t_end=T, replicas=sde_replicas or replicas, sample_times=tuple(times))
        em = euler_maruyama(zeta_star0, window, tg.a, tg.b, tg.kappa, tg.ell, g, cfg, EventStream(seed, 0).for_replica(10**9))
        em_rows = {(r["time"], r["site"]): r for r in moment_profile(em)}
    metrics = []
    for n in n_list:
        fam = fam_base.at_scale(n)
        eta0 = ScaledConfiguration.from_masses(zeta_star0, n).base
        ens = ips_ensemble(eta0, fam, g, times, window, replicas, seed=seed + n, threads=threads)
        rows = moment_profile(ens)
        z0n = {s: k / n for s, k in eta0.items()}
        if oracle == "ode":
            for r in rows:
                ref = ode_solution(z0n.get(r["site"], 0.0), tg.b, tg.kappa, r["time"])
                rep.add(f"ode_gap_n{n}_site{r['site']}", r["time"], r["mean"] - ref, r["se"], 0.0, abs(r["mean"] - ref) <= Z * r["se"] + EXACT_TOL)
        elif oracle == "heat":
            ref = heat_semigroup_means(z0n, g, window, times)
            var = heat_semigroup_variances(eta0, n, g, window, times)
            for r in rows:
                cell = (r["time"], r["site"])
                v = ref[cell]
                se = math.sqrt(var[cell] / replicas)
                rep.add(f"heat_gap_n{n}_site{r['site']}", r["time"], r["mean"] - v, se, 0.0, abs(r["mean"] - v) <= Z * se + EXACT_TOL)
        if em_rows is not None:
            worst = 0.0
            for r in rows:
                e = em_rows[(r["time"], r["site"])]
                gap = abs(r["mean"] - e["mean"])
                se = math.hypot(r["se"], e["se"])
                worst = max(worst, gap / (Z * se) if se > 0 else (0.0 if gap <= EXACT_TOL else math.inf))
            metrics.append(worst)
    if em_rows is not None:
        for k, (n, mval) in enumerate(zip(n_list, metrics)):
            ok = True if k == 0 else mval <= max(metrics[k - 1], 1.0)
            rep.add("ips_sde_gap_metric", n, mval, 0.0, max(metrics[k - 1], 1.0) if k else math.inf, ok)
        rep.add("ips_sde_final_within_error", n_list[-1], metrics[-1], 0.0, 1.0, metrics[-1] <= 1.0)
        rep.details["metrics"] = metrics
    return rep


# -- ball and thermodynamic limits -------------------------------------------


def _ball_worker(ids, *, seed, etas, fam, g, T, balls_R, n, eps):
    cfg = EngineConfig(mode="coupled", t_end=T)
    out = []
    for r in ids:
        flows = run_flows(etas, fam, g, cfg, EventStream(seed, r))
        ref = flows[-1]
        d_last = [distance_path(f, ref, g) / n for f in flows[:-1]]
        d_next = [distance_path(a, b, g) / n for a, b in zip(flows, flows[1:])]
        final = [alpha_distance(a.final, b.final, g) / n for a, b in zip(flows, flows[1:])]
        outside = []
        for f in flows:
            outside.append(
                [weighted_sup(f, lambda s, B=B: 0.0 if s in B else g.alpha(s)) / n for B in balls_R]
            )
        out.append((d_last, d_next, final, outside))
    return out


def _ball_runs(profile, fam, g, T, r_list, R_list, replicas, eps, seed, threads):
    r_list = sorted(r_list)
    balls = [alpha_ball(g, r) for r in r_list]
    etas = [profile.restrict(g, sorted(B)) for B in balls]
    balls_R = [alpha_ball(g, R) for R in R_list]
    worker = partial(_ball_worker, seed=seed, etas=etas, fam=fam, g=g, T=T, balls_R=balls_R, n=fam.scale_n, eps=eps)
    return r_list, balls, etas, _fan(worker, replicas, threads)


def ball_truncation_test(
    profile,
    fam,
    g,
    T: float,
    r_list: Sequence[float],
    replicas: int,
    *,
    eps: float = 0.1,
    R_list: Sequence[float] = (),
    seed: int = 0,
    threads: int = 1,
) -> StatReport:
    """Coupled flows from ``eta 1_{B(r)}``; the largest ``r`` stands in for ``eta``.

    Rows check ``P(sup_t ||zeta^r - zeta^{r'}|| > eps)`` against
    ``e^{(C+1)T} ||zeta_0 1_{B(r)^c cap B(r')}|| / eps`` and against the
    full-profile tail ``e^{(C+1)T} ||zeta_0 1_{B(r)^c}|| / eps``; and, for
    every ``R`` in ``R_list``, ``P(sup_t ||zeta^r_t 1_{B(R)^c}|| > eps)``
    against ``||zeta^r_0||_1 / (R eps)``.
    """
    n = fam.scale_n
    grow = math.exp((g.c_constant + 1) * T)
    r_list, balls, etas, res = _ball_runs(profile, fam, g, T, r_list, R_list, replicas, eps, seed, threads)
    rep = StatReport("ball_truncation", details={"r_list": r_list, "eps": eps, "T": T, "replicas": replicas, "seed": seed})
    top = etas[-1]
    for k, r in enumerate(r_list[:-1]):
        hits = np.array([row[0][k] for row in res]) > eps
        p, se = _prob_se(hits)
        partial_tail = alpha_distance(etas[k], top, g) / n
        rep.add("sup_distance_gt_eps", r, p, se, grow * partial_tail / eps, p <= grow * partial_tail / eps + Z * se)
        full_tail = profile.outside_alpha_mass(g, r)
        rep.add("sup_distance_gt_eps_profile", r, p, se, grow * full_tail / eps, p <= grow * full_tail / eps + Z * se)
    for k, r in enumerate(r_list):
        mass = etas[k].total() / n
        for q, R in enumerate(R_list):
            hits = np.array([row[3][k][q] for row in res]) > eps
            p, se = _prob_se(hits)
            bound = mass / (R * eps)
            rep.add(f"outside_ball_R{R:g}", r, p, se, bound, p <= bound + Z * se)
    rep.details["exit_radius"] = [ball_exit_radius(g, r) if not g.finite else None for r in r_list]
    return rep


def thermodynamic_limit_test(
    profile,
    fam,
    g,
    r_list: Sequence[float],
    T: float,
    replicas: int,
    *,
    eps: float = 0.1,
    seed: int = 0,
    threads: int = 1,
) -> StatReport:
    """Sup distances between consecutive ball levels of the coupled flows.

    The mean of ``sup_t ||zeta^{r_k} - zeta^{r_{k+1}}||`` must decrease
    along ``r_list`` (paired, 3 SE), each level must obey the maximal
    inequality with the geometric initial tail, and the discounted final
    distance must not exceed the initial one.
    """
    n = fam.scale_n
    c1 = g.c_constant + 1
    grow = math.exp(c1 * T)
    r_list, balls, etas, res = _ball_runs(profile, fam, g, T, r_list, (), replicas, eps, seed, threads)
    rep = StatReport("thermodynamic_limit", details={"r_list": r_list, "eps": eps, "T": T, "replicas": replicas, "seed": seed})
    sups = np.array([row[1] for row in res], dtype=float).reshape(replicas, len(r_list) - 1)
    finals = np.array([row[2] for row in res], dtype=float).reshape(replicas, len(r_list) - 1)
    means = []
    for k in range(len(r_list) - 1):
        m, se = mean_se(sups[:, k])
        means.append(m)
        d0 = alpha_distance(etas[k], etas[k + 1], g) / n
        p, pse = _prob_se(sups[:, k] > eps)
        rep.add("consecutive_sup_distance", r_list[k], m, se, math.nan, PASS)
        rep.add("consecutive_tail", r_list[k], p, pse, grow * d0 / eps, p <= grow * d0 / eps + Z * pse)
        fm, fse = mean_se(finals[:, k] * math.exp(-c1 * T))
        rep.add("discounted_final_distance", r_list[k], fm, fse, d0, fm <= d0 + Z * fse + EXACT_TOL)
    for k in range(1, len(r_list) - 1):
        diff, se = mean_se(sups[:, k] - sups[:, k - 1])
        rep.add("consecutive_decrease", r_list[k], diff, se, 0.0, diff <= Z * se + EXACT_TOL)
    rep.details["mean_sup_distance"] = means
    return rep


# -- exact pathwise and generator checks -------------------------------------


def _order_worker(ids, *, seed, eta, eta2, fam, g, times, t_end):
    cfg = EngineConfig(mode="coupled", t_end=t_end, sample_times=tuple(times))
    out = []
    for r in ids:
        a, b = run_flows([eta, eta2], fam, g, cfg, EventStream(seed, r))
        ordered = all(leq(x, y) for x, y in zip(a.samples, b.samples))
        out.append((ordered, a.same_path(b) if eta == eta2 else None, a.final.total() - b.final.total()))
    return out


def coupling_order_test(eta, eta2, fam, g, times, replicas, *, seed=0, threads=1) -> StatReport:
    """Pathwise checks on coupled pairs, exact over every replica.

    With ``eta <= eta'`` the sampled states must stay ordered; with equal
    initial data the trajectories must coincide event for event.
    """
    eta, eta2 = Configuration(eta), Configuration(eta2)
    times = [float(t) for t in times]
    worker = partial(_order_worker, seed=seed, eta=eta, eta2=eta2, fam=fam, g=g, times=times, t_end=times[-1])
    res = _fan(worker, replicas, threads)
    rep = StatReport("coupling_order", details={"replicas": replicas, "seed": seed, "ordered_initial": leq(eta, eta2)})
    if leq(eta, eta2):
        broken = sum(1 for r in res if not r[0])
        rep.add("order_violations", times[-1], broken, 0.0, 0.0, broken == 0)
    if eta == eta2:
        broken = sum(1 for r in res if not r[1])
        rep.add("identical_path_violations", times[-1], broken, 0.0, 0.0, broken == 0)
    if not rep.rows:
        rep.add("unordered_initial_data", times[-1], 0, 0.0, 0.0, INCONCLUSIVE)
    return rep


def _ladder_worker(ids, *, seed, eta, fam, g, t_end, m_list, times):
    out = []
    for r in ids:
        stream = EventStream(seed, r)
        occ = run_flow(eta, fam, g, EngineConfig(t_end=t_end), stream).max_occupancy()
        lad = run_truncation_ladder(eta, fam, g, t_end, m_list, stream, sample_times=times)
        closure = all(tr.max_occupancy() <= m for m, tr in lad.by_m.items())
        ms = sorted(lad.by_m)
        monotone = all(
            leq(x, y)
            for m0, m1 in zip(ms, ms[1:])
            for x, y in zip(lad.by_m[m0].samples, lad.by_m[m1].samples)
        )
        stable_ok = all(lad.by_m[m].same_path(lad.untruncated) == (m >= occ) for m in ms)
        covered = occ in lad.by_m
        out.append((occ, lad.stable_m, closure, monotone, stable_ok, covered))
    return out


def truncation_ladder_test(eta, fam, g, t_end, replicas, *, m_list=(), times=None, seed=0, threads=1) -> StatReport:
    """Truncated flows share the stream with the untruncated flow.

    Exact rows: no truncated path exceeds its level, paths are monotone in
    ``m``, and ``Phi^m = Phi`` event for event exactly when ``m`` is at
    least the pathwise maximal occupancy.  Without ``m_list`` each replica
    uses ``1 .. occupancy + 2`` restricted to admissible levels.
    """
    eta = Configuration(eta)
    floor = max(eta.values(), default=0)
    times = tuple(float(t) for t in (times or (t_end,)))
    worker = partial(
        _ladder_worker, seed=seed, eta=eta, fam=fam, g=g, t_end=t_end, m_list=tuple(m_list), times=times
    )
    if not m_list:
        worker = partial(_ladder_default_worker, seed=seed, eta=eta, fam=fam, g=g, t_end=t_end, times=times, floor=floor)
    res = _fan(worker, replicas, threads)
    rep = StatReport("truncation_ladder", details={"replicas": replicas, "seed": seed, "m_list": list(m_list)})
    rep.add("closure_violations", t_end, sum(1 for r in res if not r[2]), 0.0, 0.0, all(r[2] for r in res))
    rep.add("monotone_in_m_violations", t_end, sum(1 for r in res if not r[3]), 0.0, 0.0, all(r[3] for r in res))
    rep.add("stabilization_violations", t_end, sum(1 for r in res if not r[4]), 0.0, 0.0, all(r[4] for r in res))
    covered = [r for r in res if r[5]]
    wrong = sum(1 for r in covered if r[1] != r[0])
    rep.add("stable_m_equals_max_occupancy", t_end, wrong, 0.0, 0.0, wrong == 0)
    occs = [r[0] for r in res]
    rep.details["max_occupancy_range"] = [min(occs), max(occs)]
    return rep


def _ladder_default_worker(ids, *, seed, eta, fam, g, t_end, times, floor):
    out = []
    for r in ids:
        stream = EventStream(seed, r)
        occ = run_flow(eta, fam, g, EngineConfig(t_end=t_end), stream).max_occupancy()
        levels = list(range(max(floor, 1), occ + 3))
        out.extend(_ladder_worker([r], seed=seed, eta=eta, fam=fam, g=g, t_end=t_end, m_list=levels, times=times))
    return out


def _random_state(rng, sites, kmax) -> Configuration:
    return Configuration({s: int(k) for s, k in zip(sites, rng.integers(0, kmax + 1, len(sites))) if k})


def generator_check(fam, g, window, *, samples=200, kmax=None, seed=0) -> StatReport:
    """Closed forms against direct sums on random states of ``window``.

    Rows cover the localization inequality on the window, the coordinate
    generator, quadratic operator and pair generator identities (relative
    1e-9) and ``Q f = L(f^2) - 2 f L f`` for the coordinate functions.
    """
    window = sorted(window)
    n = fam.scale_n
    kmax = kmax or max(3 * n, 5)
    rng = EventStream(seed).generator(0x6E4)
    rep = StatReport("generator_check", details={"samples": samples, "window": len(window), "seed": seed})
    c_est, ok = verify_localization(g, window)
    rep.add("localization_ratio", "window", c_est, 0.0, g.c_constant, ok)
    worst = {"L_n": 0.0, "Q_n": 0.0, "pair_L_n": 0.0, "Q_identity": 0.0}
    for _ in range(samples):
        zeta = ScaledConfiguration(_random_state(rng, window, kmax), n)
        i = window[int(rng.integers(len(window)))]
        nbrs = [y for y, _ in g.kernel_row(i)]
        j = nbrs[int(rng.integers(len(nbrs)))] if rng.random() < 0.5 else window[int(rng.integers(len(window)))]
        fi = LocalFunction.coordinate(i, n)
        fij = LocalFunction.pair(i, j, n)
        checks = {
            "L_n": (coordinate_L_n(zeta, i, fam, g), generator_L(fi, zeta, fam, g)),
            "Q_n": (coordinate_Q_n(zeta, i, fam, g), quadratic_Q(fi, zeta, fam, g)),
            "pair_L_n": (pair_L_n(zeta, i, j, fam, g), generator_L(fij, zeta, fam, g)),
            "Q_identity": (
                quadratic_Q(fi, zeta, fam, g),
                generator_L(fi.squared(), zeta, fam, g) - 2 * fi(zeta.base) * generator_L(fi, zeta, fam, g),
            ),
        }
        for key, (closed, direct) in checks.items():
            worst[key] = max(worst[key], abs(closed - direct) / max(1.0, abs(direct)))
    for key, err in worst.items():
        rep.add(f"{key}_max_rel_error", samples, err, 0.0, 1e-9, err <= 1e-9)
    return rep


def contraction_scan(fam, g, sites, m: int, tol: float = 1e-9) -> StatReport:
    """All pairs ``(eta, eta')`` in ``{0..m}^sites``: coupled generator of the
    alpha-distance against ``(C + 1)`` times the distance."""
    sites = sorted(sites)
    states = [
        Configuration({s: k for s, k in zip(sites, ks) if k}) for ks in product(range(m + 1), repeat=len(sites))
    ]
    violations = 0
    worst = -math.inf
    for e1 in states:
        for e2 in states:
            value, bound, ok = coupled_L_hat_m(e1, e2, m, fam, g, tol)
            violations += not ok
            worst = max(worst, value - bound)
    rep = StatReport("contraction_scan", details={"pairs": len(states) ** 2, "sites": sites, "m": m})
    rep.add("violations", len(states) ** 2, violations, 0.0, 0.0, violations == 0)
    rep.add("max_value_minus_bound", len(states) ** 2, worst, 0.0, tol, worst <= tol)
    return rep
