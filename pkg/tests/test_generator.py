import math

import numpy as np
import pytest

from rdips.configuration import Configuration, ScaledConfiguration
from rdips.generator import (
    LocalFunction,
    coordinate_L_n,
    coordinate_Q_n,
    coupled_L_hat_m,
    generator_L,
    limit_L_star,
    local_tail_error,
    pair_L_n,
    quadratic_Q,
    uniform_gap,
)
from rdips.graph_kernel import finite_path, torus
from rdips.reaction import ReactionFamily, TabulatedReaction

D0 = Configuration.delta(0)
DIFFUSION = ReactionFamily(0, 0)
FAM10 = ReactionFamily(1, 1, 1, 1, 10)
HALF = ScaledConfiguration(Configuration({0: 5}), 10)


def test_generator_examples(z1_exp, loop):
    f0 = LocalFunction.coordinate(0)
    assert generator_L(f0, D0, DIFFUSION, z1_exp) == -1.0
    assert generator_L(LocalFunction.constant(3.0), D0, FAM10, z1_exp) == 0.0
    assert generator_L(f0, D0, TabulatedReaction([0, 0], [0, 1]), loop) == -1.0


def test_quadratic_examples(z1_exp):
    assert quadratic_Q(LocalFunction.coordinate(0), D0, DIFFUSION, z1_exp) == 1.0
    assert quadratic_Q(LocalFunction.constant(3.0), D0, FAM10, z1_exp) == 0.0


def test_coordinate_closed_form_examples(loop, z1_exp):
    assert coordinate_L_n(HALF, 0, FAM10, loop) == pytest.approx(-0.5, abs=1e-15)
    assert coordinate_Q_n(HALF, 0, FAM10, loop) == pytest.approx(0.5, abs=1e-15)
    z = ScaledConfiguration(Configuration({0: 1}), 1)
    assert coordinate_L_n(z, 0, DIFFUSION, z1_exp) == -1.0
    z10 = ScaledConfiguration(Configuration({0: 10}), 10)
    assert coordinate_Q_n(z10, 0, ReactionFamily(0, 0, n=10), z1_exp) == pytest.approx(0.1)
    zero = ScaledConfiguration(Configuration(), 10)
    assert coordinate_L_n(zero, 0, FAM10, loop) == 0.0 and coordinate_Q_n(zero, 0, FAM10, loop) == 0.0


def test_pair_closed_form_examples(loop, z1_exp):
    assert pair_L_n(HALF, 0, 0, FAM10, loop) == pytest.approx(0.0, abs=1e-15)
    assert pair_L_n(ScaledConfiguration(Configuration(), 10), 0, 1, FAM10, z1_exp) == 0.0
    z = ScaledConfiguration(Configuration({0: 3, 5: 4}), 10)
    product = coordinate_L_n(z, 0, FAM10, z1_exp) * z[5] + coordinate_L_n(z, 5, FAM10, z1_exp) * z[0]
    assert pair_L_n(z, 0, 5, FAM10, z1_exp) == pytest.approx(product, rel=1e-12)


def test_limit_operator_examples(z1_exp):
    z = {0: 1.0}
    assert limit_L_star((0,), z, 0.0, 1.0, 1, 1, z1_exp) == -2.0
    assert limit_L_star(LocalFunction.coordinate(0), {}, 1.0, 1.0, 1, 1, z1_exp) == 0.0
    with pytest.raises(ValueError):
        limit_L_star(LocalFunction.constant(1.0), z, 1, 1, 1, 1, z1_exp)


def test_coupled_examples(z1_pow2):
    eta = Configuration({0: 2, 1: 1})
    assert coupled_L_hat_m(eta, eta, None, FAM10, z1_pow2) == (0.0, 0.0, True)
    value, bound, ok = coupled_L_hat_m(D0, Configuration(), None, DIFFUSION, z1_pow2)
    assert value == pytest.approx(-0.5) and bound == pytest.approx(2.25) and ok


def test_coupled_requires_configurations_below_level(path3):
    with pytest.raises(ValueError):
        coupled_L_hat_m(Configuration({0: 3}), D0, 2, FAM10, path3)


@pytest.mark.parametrize("graph", [finite_path(3), torus(3, 1)], ids=["path", "cycle"])
def test_exhaustive_contraction_scan(graph):
    states = [Configuration({s: k for s, k in zip(range(3), ks)}) for ks in np.ndindex(3, 3, 3)]
    fam = ReactionFamily(2, 1, 1, 2, 1)
    bad = [(a, b) for a in states for b in states if not coupled_L_hat_m(a, b, 2, fam, graph)[2]]
    assert len(states) ** 2 == 729 and bad == []


def _random_case(rng):
    n = int(rng.choice([1, 3, 10, 50]))
    fam = ReactionFamily(float(rng.uniform(0, 3)), float(rng.uniform(0, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 4)), n)
    counts = {s: int(rng.integers(0, 4 * n)) for s in range(5) if rng.random() < 0.7}
    return fam, ScaledConfiguration(Configuration(counts), n)


def test_closed_forms_match_direct_sums():
    rng = np.random.default_rng(17)
    g = finite_path(5)
    for _ in range(200):
        fam, z = _random_case(rng)
        n = fam.scale_n
        i, j = (int(v) for v in rng.integers(0, 5, size=2))
        fi = LocalFunction.coordinate(i, n)
        assert math.isclose(coordinate_L_n(z, i, fam, g), generator_L(fi, z, fam, g), rel_tol=1e-9, abs_tol=1e-9)
        assert math.isclose(coordinate_Q_n(z, i, fam, g), quadratic_Q(fi, z, fam, g), rel_tol=1e-9, abs_tol=1e-9)
        fij = LocalFunction.pair(i, j, n)
        assert math.isclose(pair_L_n(z, i, j, fam, g), generator_L(fij, z, fam, g), rel_tol=1e-9, abs_tol=1e-9)


def test_quadratic_identity():
    rng = np.random.default_rng(3)
    g = finite_path(4)
    for _ in range(100):
        fam, z = _random_case(rng)
        f = LocalFunction.pair(0, 1, fam.scale_n).times(LocalFunction.coordinate(2, fam.scale_n))
        lhs = quadratic_Q(f, z, fam, g)
        rhs = generator_L(f.squared(), z, fam, g) - 2 * f(z.base) * generator_L(f, z, fam, g)
        assert lhs >= 0
        assert math.isclose(lhs, rhs, rel_tol=1e-9, abs_tol=1e-9 * max(1.0, abs(lhs)))


def test_uniform_gap_shrinks_with_n(loop):
    gaps = [uniform_gap(ReactionFamily(1, 2, 1, 2, n), 3.0, loop, 0) for n in (10, 100, 1000)]
    assert gaps[0] > gaps[1] > gaps[2]
    pair = [uniform_gap(ReactionFamily(1, 2, 1, 2, n), 2.0, finite_path(2), 0, 1, per_axis=11) for n in (10, 100, 1000)]
    assert pair[0] > pair[1] > pair[2]


def test_local_tail_error():
    assert local_tail_error(0.25, 1.25, 2.0, 0.5) == pytest.approx(1.25 * 0.25 * 4 / 0.5)
