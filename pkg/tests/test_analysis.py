import math

import pytest

from rdips.analysis import (
    ConfigurationProfile,
    ConstantProfile,
    StatReport,
    ball_truncation_test,
    contraction_scan,
    coupling_order_test,
    distance_supermartingale_test,
    dynkin_residual_test,
    fluid_limit_test,
    generator_check,
    heat_semigroup_means,
    mean_se,
    ode_solution,
    one_norm_supermartingale_test,
    thermodynamic_limit_test,
    truncation_ladder_test,
)
from rdips.configuration import Configuration
from rdips.generator import LocalFunction
from rdips.graph_kernel import PowWeight, finite_path
from rdips.reaction import ReactionFamily, TabulatedReaction

PURE_DEATH = TabulatedReaction([0, 0], [0, 1])
BALANCED = TabulatedReaction([0, 1], [0, 1])
D0 = Configuration.delta(0)
TIMES = [0.0, 0.25, 0.5, 1.0]


def test_report_verdicts():
    rep = StatReport("x")
    assert rep.verdict == "inconclusive"
    rep.add("a", 0, 1.0, 0.1, 2.0, True)
    assert rep.passed
    rep.add("b", 1, 3.0, 0.1, 2.0, False)
    assert rep.verdict == "fail" and rep.summary()["failed"] == ["b@1"]
    assert rep.to_csv().splitlines()[0] == "statistic,checkpoint,estimate,se,bound,verdict"


def test_mean_se_of_constant_sample():
    assert mean_se([2.0, 2.0, 2.0]) == (2.0, 0.0)
    with pytest.raises(ValueError):
        mean_se([])


def test_identical_pair_has_zero_distance(path3):
    rep = distance_supermartingale_test(D0, D0, ReactionFamily(1, 1), path3, TIMES, 50, seed=1)
    assert rep.passed and all(r.estimate == 0.0 for r in rep.select("discounted_distance"))


def test_pure_death_oracle(loop):
    oracle = lambda t: math.exp(-3 * t)
    rep = distance_supermartingale_test(D0, Configuration(), PURE_DEATH, loop, TIMES, 4000, seed=2, A_grid=(0.5, 1.0), oracle=oracle)
    assert rep.passed, rep.summary()
    assert len(rep.select("oracle_gap")) == len(TIMES)


def test_distance_supermartingale_on_path():
    g = finite_path(5, PowWeight(2))
    rep = distance_supermartingale_test(
        Configuration({1: 1, 2: 2}), Configuration({1: 1, 2: 3}), ReactionFamily(2, 1, n=1), g, TIMES, 500, seed=3, A_grid=(1, 2)
    )
    assert rep.passed, rep.summary()


def test_one_norm_pure_diffusion_is_pathwise_constant(path3):
    rep = one_norm_supermartingale_test(Configuration({0: 2, 2: 1}), ReactionFamily(0, 0), path3, TIMES, 50, pathwise_constant=True, A_grid=(3,))
    assert rep.passed
    (row,) = rep.select("sup_one_norm_tail")
    assert row.bound == 1.0


def test_one_norm_balanced_is_martingale(loop):
    rep = one_norm_supermartingale_test(Configuration({0: 5}), BALANCED, loop, TIMES, 2000, seed=4, martingale=True)
    assert rep.passed, rep.summary()


def test_dynkin_constant_function_is_exactly_zero(path3):
    rep = dynkin_residual_test(LocalFunction.constant(2.0), D0, ReactionFamily(1, 1), path3, 1.0, 20)
    assert rep.passed and rep.select("mean_M")[0].estimate == 0.0


def test_dynkin_pure_diffusion(z1_exp):
    rep = dynkin_residual_test(LocalFunction.coordinate(0), D0, ReactionFamily(0, 0), z1_exp, 1.0, 3000, seed=5, h=0.05)
    assert rep.passed, rep.summary()


def test_fluid_limit_ode(loop):
    rep = fluid_limit_test({0: 1.0}, ReactionFamily(0, 1, n=1), loop, [100], 1.0, 500, times=[0.5, 1.0], oracle="ode", compare_sde=False, seed=6)
    assert rep.passed, rep.summary()


def test_fluid_limit_heat():
    g = finite_path(5)
    rep = fluid_limit_test({2: 1.0}, ReactionFamily(0, 0, n=1), g, [10, 100], 1.0, 300, times=[0.5, 1.0], oracle="heat", compare_sde=False, seed=7)
    assert rep.passed, rep.summary()


def test_fluid_limit_zero_start(path3):
    rep = fluid_limit_test({}, ReactionFamily(0.5, 1, n=1), path3, [10, 20], 0.5, 20, times=[0.5], dt=0.01, seed=8)
    assert rep.passed and rep.details["metrics"] == [0.0, 0.0]


def test_heat_semigroup_conserves_mass_on_closed_path():
    g = finite_path(4)
    means = heat_semigroup_means({0: 1.0}, g, [0, 1, 2, 3], [0.7])
    assert math.fsum(means.values()) == pytest.approx(1.0, abs=1e-12)


def test_ode_solution():
    assert ode_solution(1.0, 1.0, 1, 1.0) == pytest.approx(math.exp(-1))
    assert ode_solution(1.0, 1.0, 2, 1.0) == pytest.approx(0.5)


def test_profile_tail_is_geometric(z1_pow2):
    prof = ConstantProfile(1.0, 1)
    for j in (3, 5, 8):
        assert prof.outside_alpha_mass(z1_pow2, 2.0**j) == pytest.approx(2.0 ** (2 - j))


def test_ball_covering_support_gives_zero(z1_pow2):
    prof = ConfigurationProfile(Configuration({0: 2, 1: 1}))
    rep = ball_truncation_test(prof, ReactionFamily(1, 1), z1_pow2, 0.5, [4, 16], 20, eps=0.1, R_list=(4,))
    assert rep.passed
    assert rep.select("sup_distance_gt_eps")[0].estimate == 0.0


def test_ball_and_thermodynamic_on_z(z1_pow2):
    prof = ConstantProfile(1.0, 1)
    r_list = [2.0**j for j in (6, 8, 10)]
    fam = ReactionFamily(1, 1)
    ball = ball_truncation_test(prof, fam, z1_pow2, 1.0, r_list, 100, eps=0.1, R_list=(64,), seed=9)
    thermo = thermodynamic_limit_test(prof, fam, z1_pow2, r_list, 1.0, 100, eps=0.1, seed=9)
    assert ball.passed, ball.summary()
    assert thermo.passed, thermo.summary()


def test_coupling_order_and_ladder(path3):
    fam = ReactionFamily(2, 1, n=1)
    order = coupling_order_test(D0, Configuration({0: 1, 2: 1}), fam, path3, [0.5, 1.0], 100, seed=10)
    ladder = truncation_ladder_test(Configuration({1: 1}), fam, path3, 1.0, 100, seed=10)
    assert order.passed and ladder.passed


def test_generator_check_and_scan(path3):
    fam = ReactionFamily(2, 1, 1, 2, 3)
    assert generator_check(fam, path3, [0, 1, 2], samples=50, seed=11).passed
    assert contraction_scan(ReactionFamily(2, 1, n=1), path3, [0, 1, 2], 2).passed


def test_reports_reproducible_across_workers(path3):
    fam = ReactionFamily(2, 1, n=1)
    args = (D0, Configuration({0: 2}), fam, path3, TIMES, 200)
    a = distance_supermartingale_test(*args, seed=12, threads=1)
    b = distance_supermartingale_test(*args, seed=12, threads=3)
    assert a.to_csv() == b.to_csv()
