import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from crnldp.kinetics import asymptotic_rates, drift_field, integrate_ode
from crnldp.lagrangian import (
    DiscretePath,
    Status,
    hamiltonian,
    lagrangian,
    lagrangian_dual,
    lagrangian_primal,
    path_rate,
    segment_costs,
)
from oracles import birth_death_action

UP = np.array([[1.0]])
PM = np.array([[1.0], [-1.0]])


def random_instance(rng, m_max=6, d_max=4):
    d = int(rng.integers(1, d_max + 1))
    m = int(rng.integers(1, m_max + 1))
    C = rng.integers(-2, 3, size=(m, d)).astype(float)
    C[np.all(C == 0, axis=1), 0] = 1.0
    lam = rng.uniform(0.1, 3.0, size=m)
    return lam, C


def interior_velocity(rng, lam, C):
    # positive flux combination, so the velocity is strictly inside the cone
    return rng.uniform(0.2, 2.0, size=lam.size) @ C


def test_hamiltonian_examples():
    rng = np.random.default_rng(0)
    lam, C = random_instance(rng)
    assert hamiltonian(lam, np.zeros(C.shape[1]), C) == 0.0
    assert hamiltonian([1.0], [math.log(2)], UP) == pytest.approx(1.0)


def test_hamiltonian_is_convex():
    rng = np.random.default_rng(1)
    for _ in range(100):
        lam, C = random_instance(rng)
        a, b = rng.normal(size=(2, C.shape[1]))
        mid = hamiltonian(lam, (a + b) / 2, C)
        assert mid <= (hamiltonian(lam, a, C) + hamiltonian(lam, b, C)) / 2 + 1e-12


def test_dual_at_the_drift_is_zero():
    lam = np.array([1.0, 2.0, 0.5])
    C = np.array([[1.0, 0.0], [-1.0, 1.0], [0.0, -2.0]])
    res = lagrangian_dual(lam, lam @ C, C)
    assert res.value == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(res.theta_star, 0.0)


def test_single_reaction_faster_than_drift():
    dual = lagrangian_dual([1.0], [2.0], UP)
    assert dual.value == pytest.approx(2 * math.log(2) - 1, abs=1e-12)
    assert dual.theta_star[0] == pytest.approx(math.log(2))
    primal = lagrangian_primal([1.0], [2.0], UP)
    assert primal.q_star[0] == pytest.approx(2.0)
    assert primal.value == pytest.approx(1 - 2 + 2 * math.log(2), abs=1e-12)


def test_velocity_outside_cone_is_infeasible():
    res = lagrangian([1.0], [-1.0], UP)
    assert res.value == math.inf and res.status is Status.INFEASIBLE
    assert math.isnan(res.duality_gap)
    assert res.to_dict()["value"] == "inf"


def test_primal_flux_equals_rates_at_the_drift():
    lam = np.array([0.7, 1.9, 0.3])
    C = np.array([[1.0, 1.0], [-1.0, 1.0], [1.0, -2.0]])
    res = lagrangian_primal(lam, lam @ C, C)
    assert res.value == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(res.q_star, lam, atol=1e-9)


def test_opposing_pair_at_rest():
    res = lagrangian([1.0, 1.0], [0.0], PM)
    assert res.value == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(res.q_star, [1.0, 1.0])


def test_random_interior_velocities_have_no_gap():
    rng = np.random.default_rng(2)
    for _ in range(100):
        lam, C = random_instance(rng)
        res = lagrangian(lam, interior_velocity(rng, lam, C), C)
        assert res.status is Status.FINITE
        assert res.duality_gap <= 1e-8


def test_zero_rates_carry_no_flux_and_match_reduced_network():
    rng = np.random.default_rng(3)
    for _ in range(30):
        lam, C = random_instance(rng)
        if lam.size < 2:
            continue
        keep = rng.random(lam.size) < 0.6
        keep[0] = True
        lam_z = np.where(keep, lam, 0.0)
        xi = interior_velocity(rng, lam[keep], C[keep])
        full = lagrangian(lam_z, xi, C)
        reduced = lagrangian(lam[keep], xi, C[keep])
        assert full.value == pytest.approx(reduced.value, rel=1e-8, abs=1e-10)
        assert np.all(full.q_star[~keep] == 0)


def test_value_is_zero_only_at_the_drift():
    rng = np.random.default_rng(4)
    for _ in range(100):
        lam, C = random_instance(rng)
        drift = lam @ C
        assert lagrangian(lam, drift, C).value <= 1e-10
        step = rng.normal(size=drift.size)
        step *= 1e-3 / np.linalg.norm(step) * rng.uniform(1, 100)
        val = lagrangian(lam, drift + step, C).value
        assert val > 0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 100_000))
def test_convex_in_velocity(seed):
    rng = np.random.default_rng(seed)
    lam, C = random_instance(rng)
    a, b = interior_velocity(rng, lam, C), interior_velocity(rng, lam, C)
    la, lb, lm = (lagrangian_primal(lam, x, C).value for x in (a, b, (a + b) / 2))
    assert lm <= (la + lb) / 2 + 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.01, 10.0))
def test_time_scaling_identity(seed, T):
    rng = np.random.default_rng(seed)
    lam, C = random_instance(rng)
    y = interior_velocity(rng, lam, C)
    lhs = lagrangian_primal(T * lam, y, C).value
    rhs = T * lagrangian_primal(lam, y / T, C).value
    assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-10)


@pytest.mark.parametrize("lam, xi", [((1.0, 1.0), 0.5), ((2.0, 0.5), -1.0), ((0.3, 3.0), 2.0), ((1.0, 4.0), 0.0)])
def test_against_grid_minimisation(lam, xi):
    # fluxes (q1, q2) with q1 - q2 = xi: scan q2 on a fine grid
    a, b = lam
    f = lambda q1, q2: a - q1 + q1 * np.log(q1 / a) + b - q2 + q2 * np.log(q2 / b)
    q2 = np.linspace(max(0.0, -xi) + 1e-9, 12.0, 400_001)
    grid = f(q2 + xi, q2).min()
    assert lagrangian([a, b], [xi], PM).value == pytest.approx(grid, abs=1e-4)


def test_dual_and_primal_on_boundary_of_cone():
    # with only c = +1 and c = (1, 1), the velocity (1, 0) forces zero flux on the second reaction
    C = np.array([[1.0, 0.0], [1.0, 1.0]])
    res = lagrangian([1.0, 1.0], [1.0, 0.0], C)
    assert res.value == pytest.approx(1.0, abs=1e-9)
    assert res.q_star[1] == pytest.approx(0.0, abs=1e-12)


def test_ode_path_costs_almost_nothing(ex1):
    x0, T = [0.2, 0.3], 3.0
    traj = integrate_ode(ex1, x0, T, tol=1e-11)
    rates = []
    for n in (64, 256, 1024):
        t = np.linspace(0, T, n + 1)
        rates.append(path_rate(ex1, DiscretePath.from_samples(t, traj(t))))
    assert rates[1] <= 1e-4
    assert rates[0] > rates[1] > rates[2]


def test_constant_path_costs_time_times_rest_cost(ex1):
    x, T = np.array([1.0, 0.5]), 2.0
    path = DiscretePath(np.tile(x, (5, 1)), np.full(4, T / 4))
    rest = lagrangian(asymptotic_rates(ex1, x), np.zeros(2), ex1.vectors).value
    assert rest > 0
    assert path_rate(ex1, path) == pytest.approx(T * rest, rel=1e-10)


def test_path_must_stay_nonnegative():
    with pytest.raises(ValueError):
        DiscretePath([[0.1, 0.0], [-0.1, 0.2]], [1.0])
    with pytest.raises(ValueError):
        DiscretePath([[0.1], [0.2]], [0.0])


def test_infeasible_segment_makes_path_infinite(autocat):
    path = DiscretePath([[1.0], [0.5]], [1.0])
    assert path_rate(autocat, path) == math.inf


def test_segment_cost_matches_one_dimensional_action(birth_death):
    # concentration 2 -> 2.5 uphill against the drift, via many short segments
    nodes = np.linspace(2.0, 2.5, 401)[:, None]
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    lam = np.array([asymptotic_rates(birth_death, m) for m in mids])
    cost, dur, theta, ok = segment_costs(lam, np.diff(nodes, axis=0), birth_death.vectors)
    assert ok.all() and np.all(dur > 0)
    assert cost.sum() == pytest.approx(birth_death_action(lambda u: 2.0, lambda u: u, 2.0, 2.5), rel=1e-5)


def test_segment_cost_optimal_duration_and_gradient():
    lam = np.array([[1.0, 2.0]])
    disp = np.array([[0.3]])
    cost, dur, theta, ok = segment_costs(lam, disp, PM)
    ref = minimize_scalar(lambda s: s * lagrangian_primal(lam[0], disp[0] / s, PM).value,
                          bounds=(1e-3, 50), method="bounded", options={"xatol": 1e-10})
    assert cost[0] == pytest.approx(ref.fun, rel=1e-7)
    assert dur[0] == pytest.approx(ref.x, rel=1e-4)
    h = 1e-6
    fd = (segment_costs(lam, disp + h, PM)[0][0] - segment_costs(lam, disp - h, PM)[0][0]) / (2 * h)
    assert theta[0, 0] == pytest.approx(fd, rel=1e-5)


def test_downhill_segment_along_drift_is_free():
    lam = np.array([[1.0, 3.0]])
    cost, dur, _, ok = segment_costs(lam, np.array([[-0.2]]), PM)
    assert ok[0] and cost[0] == pytest.approx(0.0, abs=1e-10)
    assert dur[0] == pytest.approx(0.1, rel=1e-6)


def test_zero_displacement_is_free():
    cost, dur, theta, ok = segment_costs(np.array([[1.0, 1.0]]), np.zeros((1, 1)), PM)
    assert cost[0] == 0 and dur[0] == 0 and ok[0]


def test_drift_helper_consistent(ex1):
    x = np.array([0.4, 1.1])
    lam = asymptotic_rates(ex1, x)
    assert lagrangian(lam, drift_field(ex1, x), ex1.vectors).value <= 1e-10
