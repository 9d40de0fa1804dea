import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from koopcert.exceptions import SimulationDivergence, UsageError
from koopcert.systems import (SYSTEM_IDS, Dataset, SystemSpec, get_system, rk4_step, simulate_segment,
                              vector_field)


def euler_oracle(spec, x, u, dt, micro=1000):
    h = dt / micro
    x = np.array(x, dtype=float)
    for _ in range(micro):
        x = x + h * vector_field(spec, x, u)
    return x


def test_dimensions_and_bounds():
    dims = {"duffing": 2, "vdp": 2, "lorenz": 3}
    for name in SYSTEM_IDS:
        spec = get_system(name)
        assert spec.n_x == dims[name]
        assert spec.n_u == 1
        assert spec.input_bound > 0
    assert get_system("duffing").input_bound == 2.0
    assert get_system("lorenz").input_bound == 20.0


def test_unknown_system_and_bad_params():
    with pytest.raises(UsageError):
        get_system("pendulum")
    with pytest.raises(UsageError):
        get_system("duffing", {"gamma": 1.0})
    with pytest.raises(UsageError):
        get_system("duffing", {"delta": math.nan})
    with pytest.raises(UsageError):
        get_system("vdp", input_bound=0.0)


def test_equilibria_of_vector_field():
    assert np.allclose(vector_field(get_system("lorenz"), [0, 0, 0], [0]), 0)
    assert np.allclose(vector_field(get_system("duffing"), [0, 0], [0]), 0)


def test_duffing_hand_value():
    # x=(1,0), u=0: (0, 1 - 1) = (0, 0); x=(2,1), u=0.5: (1, -0.5 + 2 - 8 + 0.5) = (1, -6)
    spec = get_system("duffing")
    assert np.allclose(vector_field(spec, [1, 0], [0]), [0, 0])
    assert np.allclose(vector_field(spec, [2, 1], [0.5]), [1, -6.0])


def test_dimension_mismatch():
    with pytest.raises(UsageError):
        vector_field(get_system("duffing"), [0, 0, 0], [0])
    with pytest.raises(UsageError):
        vector_field(get_system("lorenz"), [0, 0, 0], [0, 0])


@pytest.mark.parametrize("name,eq", [("duffing", [1.0, 0.0]), ("duffing", [0.0, 0.0]),
                                     ("vdp", [0.0, 0.0]), ("lorenz", [0.0, 0.0, 0.0])])
def test_rk4_preserves_equilibria(name, eq):
    spec = get_system(name)
    assert np.array_equal(rk4_step(spec, eq, [0.0], 0.01), np.array(eq))


def linear_spec(a):
    return SystemSpec("linear", n_x=1, params={"a": a}, input_bound=1.0, init_low=(-1.0,), init_high=(1.0,),
                      rhs=lambda x, u, p: p["a"] * x)


def test_rk4_order_on_linear_system():
    a = -1.3
    spec = linear_spec(a)
    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        x1 = rk4_step(spec, [1.0], [0.0], dt)[0]
        errs.append(abs(x1 - math.exp(a * dt)))
    C = max(e / dt ** 5 for e, dt in zip(errs, (1e-2, 5e-3, 2.5e-3)))
    assert C < 1.0  # local error constant |a|^5/120 ~ 0.03
    for e1, e2 in zip(errs, errs[1:]):
        assert e1 / e2 >= 2 ** 4 * 0.9


def test_rk4_against_euler_oracle():
    spec = get_system("duffing")
    x = rk4_step(spec, [1.0, 0.0], [0.0], 0.01)
    assert np.all(np.isfinite(x))
    assert np.linalg.norm(x - [1.0, 0.0]) < 1
    x = rk4_step(spec, [1.5, -0.3], [0.7], 0.01)
    assert np.allclose(x, euler_oracle(spec, [1.5, -0.3], [0.7], 0.01), atol=1e-6)


def test_simulate_vdp_against_oracle():
    spec = get_system("vdp")
    traj = simulate_segment(spec, [2.0, 0.0], np.zeros((12, 1)), 0.01)
    x = np.array([2.0, 0.0])
    for _ in range(12):
        x = euler_oracle(spec, x, [0.0], 0.01)
    assert np.allclose(traj.states[-1], x, atol=1e-6)


def test_simulate_edge_cases():
    spec = get_system("lorenz")
    t = simulate_segment(spec, [1.0, 2.0, 3.0], np.zeros((0, 1)), 0.01)
    assert t.states.shape == (1, 3) and len(t) == 0
    t = simulate_segment(spec, [0.0, 0.0, 0.0], np.zeros((20, 1)), 0.01)
    assert np.all(t.states == 0)
    with pytest.raises(UsageError):
        simulate_segment(get_system("duffing"), [0, 0], [[3.0]], 0.01)


def test_divergence_carries_step():
    spec = SystemSpec("blowup", n_x=1, params={}, input_bound=1.0, init_low=(0.0,), init_high=(1.0,),
                      rhs=lambda x, u, p: x ** 3)
    with pytest.raises(SimulationDivergence) as info, np.errstate(over="ignore", invalid="ignore"):
        simulate_segment(spec, [100.0], np.zeros((50, 1)), 1.0)
    assert info.value.step is not None and info.value.step >= 0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2), st.floats(-2, 2))
def test_simulation_deterministic(x0, u):
    spec = get_system("duffing")
    a = simulate_segment(spec, x0, np.full((10, 1), u), 0.01).states
    b = simulate_segment(spec, x0, np.full((10, 1), u), 0.01).states
    assert np.array_equal(a, b)


def test_dataset_triples_and_append():
    spec = get_system("duffing")
    t1 = simulate_segment(spec, [0.1, 0.2], np.full((5, 1), 0.3), 0.01)
    t2 = simulate_segment(spec, [-0.5, 0.1], np.full((4, 1), -1.0), 0.01)
    d = Dataset.from_trajectories([t1, t2])
    assert len(d) == 9
    assert np.array_equal(d.X[:5], t1.states[:-1])
    assert np.array_equal(d.X_next[5:], t2.states[1:])
    e = d.append(Dataset.from_trajectories([t1]))
    assert list(np.unique(e.segment)) == [0, 1, 2]
    assert len(Dataset.empty(2)) == 0
