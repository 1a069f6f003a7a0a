import math

import pytest

from rdips.reaction import (
    CustomReaction,
    ReactionConditionError,
    ReactionFamily,
    TabulatedReaction,
    diffusion_gap,
    drift_gap,
    rates_n,
    sup_gap,
    validate_reaction,
)


def test_rates_examples():
    assert rates_n(ReactionFamily(1, 1, 1, 1, 10), 5) == (22.5, 27.5)
    assert rates_n(ReactionFamily(3, 2, 2, 1, 7), 0) == (0.0, 0.0)
    assert rates_n(ReactionFamily(1, 2, 1, 2, 10), 1) == (0.0, 1.0)


def test_gap_examples():
    fam = ReactionFamily(1, 1, 1, 1, 10)
    assert drift_gap(fam, 0.5) == 0.0
    assert diffusion_gap(fam, 0.5) == 0.0
    assert drift_gap(ReactionFamily(1, 2, 1, 2, 10), 0.1) == pytest.approx(0.1, abs=1e-15)


def test_gap_requires_lattice_mass():
    with pytest.raises(ValueError):
        drift_gap(ReactionFamily(1, 1, 1, 1, 10), 0.123)


def test_sup_gap_examples():
    assert sup_gap(ReactionFamily(2, 1, 1, 1, 10), 7.0) == (0.0, 0.0)
    assert sup_gap(ReactionFamily(1, 2, 1, 2, 10), 0.0) == (0.0, 0.0)
    gaps = [sup_gap(ReactionFamily(1, 2, 1, 2, n), 3.0)[0] for n in (10, 20, 40, 80)]
    assert all(b <= a for a, b in zip(gaps, gaps[1:])) and gaps[-1] < gaps[0]


def test_zero_a_is_pure_death():
    fam = ReactionFamily(0, 1, 1, 1, 100)
    assert fam.rates(50) == (0.0, 50.0)
    validate_reaction(fam, 500)


def test_validator_names_conditions():
    with pytest.raises(ReactionConditionError) as err:
        TabulatedReaction([0, 2, 3], [0, 1, 4])
    assert err.value.condition == "orderF"
    with pytest.raises(ReactionConditionError) as err:
        TabulatedReaction([1, 2], [1, 3])
    assert err.value.condition == "nullF"
    with pytest.raises(ReactionConditionError) as err:
        CustomReaction(lambda k: 0.0 if k < 3 else 1.0, lambda k: 2.0 * (k > 0))
    assert err.value.condition == "decreasingF"


def test_tabulated_linear_extension():
    fam = TabulatedReaction([0, 0], [0, 1])
    assert fam.rates(37) == (0.0, 37.0)
    balanced = TabulatedReaction([0, 1], [0, 1])
    assert balanced.is_balanced() and balanced.rates(9) == (9.0, 9.0)


def test_sum_identity_exact_on_scan():
    fam = ReactionFamily(1.5, 0.7, 2, 3, 40)
    for k in range(0, 2000, 7):
        fp, fm = fam.rates(k)
        target = 40 * 40 * 1.5 * (k / 40) ** 3
        assert math.isclose(fp + fm, target, rel_tol=1e-9, abs_tol=1e-12)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        ReactionFamily(-1, 1)
    with pytest.raises(ValueError):
        ReactionFamily(1, 1, kappa=0)
    with pytest.raises(ValueError):
        ReactionFamily(1, 1, n=0)
