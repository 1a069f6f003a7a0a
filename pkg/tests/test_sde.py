import math

import numpy as np
import pytest

from rdips.graph_kernel import finite_path, zd_nn
from rdips.sde import SdeConfig, brownian_increments, euler_maruyama, moment_profile
from rdips.streams import EventStream


def _ode_error(dt, loop):
    cfg = SdeConfig(dt=dt, t_end=1.0, replicas=1)
    ens = euler_maruyama({0: 1.0}, [0], 0.0, 1.0, 1, 1, loop, cfg, EventStream(0))
    return abs(ens.values[0, -1, 0] - math.exp(-1.0))


def test_ode_limit(loop):
    assert _ode_error(1e-4, loop) < 1e-3


def test_first_order_convergence(loop):
    order = math.log2(_ode_error(1e-3, loop) / _ode_error(5e-4, loop))
    assert 0.8 <= order <= 1.2


def test_pure_heat_flow_mass():
    g = zd_nn(1)
    window = list(range(-3, 4))
    cfg = SdeConfig(dt=1e-3, t_end=1.0, replicas=1, sample_times=(0.25, 0.5, 1.0))
    ens = euler_maruyama({0: 1.0}, window, 0.0, 0.0, 1, 1, g, cfg, EventStream(0))
    mass = ens.values[0].sum(axis=1)
    assert np.all(np.diff(mass) <= 1e-15) and mass[-1] < 1.0
    closed = euler_maruyama({0: 1.0}, [0, 1, 2], 0.0, 0.0, 1, 1, finite_path(3), cfg, EventStream(0))
    np.testing.assert_allclose(closed.values[0].sum(axis=1), 1.0, rtol=1e-12)


def test_zero_is_fixed():
    cfg = SdeConfig(dt=1e-2, t_end=1.0, replicas=20)
    ens = euler_maruyama({}, [0, 1, 2], 1.0, 1.0, 1, 1, finite_path(3), cfg, EventStream(1))
    assert not ens.values.any()


def test_nonnegative_paths():
    cfg = SdeConfig(dt=1e-2, t_end=2.0, replicas=200, sample_times=tuple(np.arange(1, 201) * 0.01))
    ens = euler_maruyama({1: 0.05}, [0, 1, 2], 1.0, 1.0, 1, 1, finite_path(3), cfg, EventStream(2))
    assert ens.values.min() >= 0.0


def test_moment_profile_examples(loop):
    cfg = SdeConfig(dt=1e-2, t_end=0.5, replicas=10)
    det = moment_profile(euler_maruyama({0: 1.0}, [0], 0.0, 1.0, 1, 1, loop, cfg, EventStream(0)))
    assert all(row["se"] == 0.0 for row in det)
    cfg = SdeConfig(dt=1e-3, t_end=0.01, replicas=4000)
    ens = euler_maruyama({0: 1.0}, [0], 1.0, 0.0, 1, 1, loop, cfg, EventStream(3))
    (row,) = moment_profile(ens)
    assert abs(row["mean"] - 1.0) <= 3 * row["se"]
    assert row["m2"] >= row["mean"] ** 2


def test_empty_ensemble_rejected(loop):
    ens = euler_maruyama({0: 1.0}, [0], 0.0, 1.0, 1, 1, loop, SdeConfig(dt=0.1, t_end=1.0), EventStream(0))
    ens.values = ens.values[:0]
    with pytest.raises(ValueError):
        moment_profile(ens)


def test_drivers_are_independent():
    inc = brownian_increments(EventStream(4), 200, 50, 2, 1e-2).reshape(-1, 2)
    prod = inc[:, 0] * inc[:, 1]
    assert abs(prod.mean()) <= 3 * prod.std(ddof=1) / math.sqrt(prod.size)


def test_initial_mass_outside_window_rejected(loop):
    with pytest.raises(ValueError):
        euler_maruyama({5: 1.0}, [0], 0.0, 1.0, 1, 1, loop, SdeConfig(dt=0.1, t_end=1.0), EventStream(0))


def test_large_step_warns(loop):
    with pytest.warns(RuntimeWarning):
        euler_maruyama({0: 10.0}, [0], 0.0, 1.0, 2, 1, loop, SdeConfig(dt=0.5, t_end=1.0), EventStream(0))
