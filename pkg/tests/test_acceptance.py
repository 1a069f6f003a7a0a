"""Acceptance criteria 1-9, one test each.

Every test prints a single ``C<k> PASS|FAIL`` line (visible without ``-s``)
and asserts the verdict, so the suite fails if any criterion does.
"""

import math
import os
from pathlib import Path

import numpy as np
import pytest

from rdips.analysis import (
    ConstantProfile,
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
)
from rdips.cli import main
from rdips.configuration import Configuration
from rdips.generator import LocalFunction
from rdips.graph_kernel import ExpWeight, PowWeight, finite_path, self_loop, torus, zd_nn
from rdips.reaction import ReactionConditionError, ReactionFamily, TabulatedReaction, sup_gap, validate_reaction
from rdips.scenario import parse_scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
THREADS = min(4, os.cpu_count() or 1)
PURE_DEATH = TabulatedReaction([0, 0], [0, 1])


@pytest.fixture
def verdict(capsys):
    def report(label, ok, detail=""):
        with capsys.disabled():
            print(f"\n{label} {'PASS' if ok else 'FAIL'} {detail}".rstrip())
        assert ok, f"{label}: {detail}"

    return report


def _scenario(name):
    return parse_scenario((SCENARIOS / f"{name}.ini").read_text(), base_dir=SCENARIOS)


# -- 1 ------------------------------------------------------------------------

FAMILIES = [(1, 1, 1, 1), (2, 1, 1, 1), (1, 2, 1, 2), (0.5, 1, 2, 1), (3, 0.5, 2, 3)]


def test_c1_rate_family_identities(verdict):
    problems = []
    for a, b, kappa, ell in FAMILIES:
        fam = ReactionFamily(a, b, kappa, ell, 10)
        try:
            validate_reaction(fam, kmax=10_000)
        except ReactionConditionError as exc:
            problems.append(f"{fam}: {exc.condition}")
        k = np.arange(10_001)
        rates = np.array([fam.rates(int(x)) for x in k])
        target = 10**2 * a * (k / 10) ** ell
        rel = np.abs(rates.sum(axis=1) - target) / np.maximum(target, 1e-300)
        if rel[1:].max() > 1e-9 or rates[0].any():
            problems.append(f"{fam}: sum identity off by {rel[1:].max():.2e}")
        gaps = [sup_gap(ReactionFamily(a, b, kappa, ell, n), 5.0) for n in (10, 100, 1000)]
        for lo, hi in zip(gaps, gaps[1:]):
            if hi[0] > lo[0] or hi[1] > lo[1]:
                problems.append(f"{fam}: sup_gap grows {lo} -> {hi}")
        unclamped = kappa == ell == 1 and a >= b
        if unclamped and any(gp != (0.0, 0.0) for gp in gaps):
            problems.append(f"{fam}: nonzero gap in the unclamped regime {gaps}")
    verdict("C1", not problems, "; ".join(problems) or "5 families, k in [0, 1e4]")


# -- 2 ------------------------------------------------------------------------


def test_c2_generator_closed_forms(verdict):
    cases = [
        (ReactionFamily(2, 1, 1, 2, 3), finite_path(5, PowWeight(2)), list(range(5))),
        (ReactionFamily(1, 1.5, 2, 1, 10), zd_nn(1, ExpWeight(1.0)), list(range(-3, 4))),
    ]
    reports = [generator_check(fam, g, w, samples=1000, seed=21 + k) for k, (fam, g, w) in enumerate(cases)]
    bad = [r.summary()["failed"] for r in reports if not r.passed]
    verdict("C2", not bad, f"2000 random tuples, failures={bad}")


# -- 3 ------------------------------------------------------------------------


def test_c3_coupled_contraction(verdict):
    graphs = {"path3": finite_path(3), "cycle3": torus(3, 1), "path3_pow2": finite_path(3, PowWeight(2))}
    fams = [ReactionFamily(1, 1, n=1), ReactionFamily(2, 1, 1, 2, 1), ReactionFamily(0.5, 2, 2, 1, 2)]
    total, bad = 0, []
    for name, g in graphs.items():
        for fam in fams:
            rep = contraction_scan(fam, g, [0, 1, 2], 2)
            total += rep.details["pairs"]
            if not rep.passed:
                bad.append((name, fam))
    verdict("C3", not bad, f"{total} pairs, violating settings={bad}")


# -- 4 ------------------------------------------------------------------------


def test_c4_pathwise_coupling_and_truncation(verdict):
    s = _scenario("path5")
    g, fam = s.graph(), s.reaction()
    times = list(s["engine"]["sample_times"])[1:]
    order = coupling_order_test(s.initial(), s.coupled_initial(), fam, g, times, 1000, seed=s.seed, threads=THREADS)
    ladder = truncation_ladder_test(s.initial(), fam, g, 1.0, 1000, times=times, seed=s.seed, threads=THREADS)
    ok = order.passed and ladder.passed
    verdict("C4", ok, f"order={order.verdict} ladder={ladder.verdict} {order.summary()['failed'] + ladder.summary()['failed']}")


# -- 5 ------------------------------------------------------------------------


def test_c5_supermartingale_suite(verdict):
    reps = []
    for name in ("smoke", "path5"):
        s = _scenario(name)
        g, fam = s.graph(), s.reaction()
        times = [0.0, 0.25, 0.5, 0.75, 1.0]
        A = s["tests"]["A_grid"]
        reps.append(distance_supermartingale_test(s.initial(), s.coupled_initial(), fam, g, times, 10_000, seed=s.seed, A_grid=A, threads=THREADS))
        reps.append(one_norm_supermartingale_test(s.initial(), fam, g, times, 10_000, seed=s.seed, A_grid=A, threads=THREADS))
    loop = self_loop()
    oracle = lambda t: math.exp(-(loop.c_constant + 2) * t) * loop.alpha(0)
    reps.append(
        distance_supermartingale_test(
            Configuration.delta(0), Configuration(), PURE_DEATH, loop, [0.0, 0.25, 0.5, 1.0, 2.0], 10_000,
            seed=5, A_grid=(0.25, 0.5, 1.0), oracle=oracle, threads=THREADS,
        )
    )
    bad = {r.name: r.summary()["failed"] for r in reps if not r.passed}
    verdict("C5", not bad, f"{len(reps)} reports at 1e4 replicas, failures={bad}")


# -- 6 ------------------------------------------------------------------------


def test_c6_dynkin_residuals(verdict):
    g = finite_path(5, PowWeight(2))
    fam = ReactionFamily(2, 1, n=1)
    eta = Configuration({0: 1, 1: 2, 2: 1})
    funcs = [LocalFunction.coordinate(0), LocalFunction.pair(0, 1)]
    reps = [dynkin_residual_test(f, eta, fam, g, 1.0, 10_000, seed=6 + k, threads=THREADS) for k, f in enumerate(funcs)]
    detail = ", ".join(
        f"{r.details['function']}: mean={r.select('mean_M')[0].estimate:.4f}+-{r.select('mean_M')[0].se:.4f} "
        f"var-EQ={r.select('var_M_minus_EintQ')[0].estimate:.4f}+-{r.select('var_M_minus_EintQ')[0].se:.4f}"
        for r in reps
    )
    verdict("C6", all(r.passed for r in reps), detail)


# -- 7 ------------------------------------------------------------------------


def test_c7_fluid_limit(verdict):
    ode = fluid_limit_test(
        {0: 1.0}, ReactionFamily(0, 1, n=1), self_loop(), [1000], 1.0, 2000,
        times=[0.5, 1.0], oracle="ode", compare_sde=False, seed=7, threads=THREADS,
    )
    heat = fluid_limit_test(
        {4: 1.0}, ReactionFamily(0, 0, n=1), finite_path(9), [10, 100, 1000], 1.0, 1000,
        times=[0.5, 1.0], oracle="heat", compare_sde=False, seed=7, threads=THREADS,
    )
    sde = fluid_limit_test(
        {1: 1.0, 2: 0.5}, ReactionFamily(0.05, 1, n=1), finite_path(3), [10, 40, 160], 1.0, 2000,
        times=[0.5, 1.0], dt=1e-3, sde_replicas=4000, seed=7, threads=THREADS,
    )
    metrics = [round(m, 3) for m in sde.details["metrics"]]
    ok = ode.passed and heat.passed and sde.passed
    verdict("C7", ok, f"ode={ode.verdict} heat={heat.verdict} ips_vs_em metrics={metrics}")


# -- 8 ------------------------------------------------------------------------


def test_c8_ball_and_thermodynamic_limits(verdict):
    g = zd_nn(1, PowWeight(2))
    fam = ReactionFamily(1, 1, n=1)
    prof = ConstantProfile(1.0, 1)
    r_list = [2.0**j for j in (6, 8, 10, 12, 14)]
    T, eps = 1.0, 0.1
    ball = ball_truncation_test(prof, fam, g, T, r_list, 2000, eps=eps, R_list=(64, 1024), seed=8, threads=THREADS)
    thermo = thermodynamic_limit_test(prof, fam, g, r_list, T, 2000, eps=eps, seed=8, threads=THREADS)
    grow = math.exp((g.c_constant + 1) * T)
    geometric = all(
        math.isclose(row.bound, 2.0 ** (2 - j) * grow / eps, rel_tol=1e-12)
        for row, j in zip(ball.select("sup_distance_gt_eps_profile"), (6, 8, 10, 12))
    )
    means = [round(m, 5) for m in thermo.details["mean_sup_distance"]]
    ok = ball.passed and thermo.passed and geometric
    verdict("C8", ok, f"ball={ball.verdict} thermo={thermo.verdict} geometric_bound={geometric} mean_sup={means}")


# -- 9 ------------------------------------------------------------------------


def test_c9_determinism(verdict, tmp_path):
    diffs = []
    for name, extra in (("path5", ["--replicas", "300"]), ("thermo_z", ["--replicas", "100"]), ("fluid_ode", [])):
        outs = []
        for k, threads in enumerate((1, 4, 1)):
            out = tmp_path / f"{name}-{k}"
            main(["all", "--scenario", str(SCENARIOS / f"{name}.ini"), "--out", str(out), "--threads", str(threads), *extra])
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        if not (outs[0] == outs[1] == outs[2]):
            diffs.append(name)
    verdict("C9", not diffs, f"byte-identical across reruns and --threads 1/4, mismatches={diffs}")
