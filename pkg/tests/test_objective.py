import itertools
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hybrid_fo.errors import ConvergenceError, InvalidParameterError, StepsizeError
from hybrid_fo.objective import (
    InputBox,
    QuadObjective,
    chosen_rendezvous_point,
    compute_constants,
    eval_phi,
    gd_step,
    iterate_fixed_point,
    project_box,
    reduced_gradient,
    rendezvous_state_and_input,
    solve_box_qp,
    solve_optimal_input,
    steady_state_qp,
)


def brute_force_box_qp(P, c, lo, hi):
    """Enumerate all 3^n active sets; keep the feasible KKT point with the lowest cost."""
    n = len(c)
    best, best_x = np.inf, None
    for pattern in itertools.product((0, 1, 2), repeat=n):
        x = np.where(np.array(pattern) == 0, lo, hi).astype(float)
        free = [i for i, s in enumerate(pattern) if s == 2]
        if free:
            fixed = [i for i in range(n) if i not in free]
            rhs = -c[free] - P[np.ix_(free, fixed)] @ x[fixed]
            x[free] = np.linalg.solve(P[np.ix_(free, free)], rhs)
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            continue
        val = 0.5 * x @ P @ x + c @ x
        if val < best:
            best, best_x = val, x
    return best_x


def _spd(rng, n, cond=50.0):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return Q @ np.diag(np.geomspace(1.0, cond, n)) @ Q.T


def test_box_validation():
    with pytest.raises(InvalidParameterError):
        InputBox(np.ones(3), np.zeros(3))
    with pytest.raises(InvalidParameterError):
        InputBox(np.zeros(3), np.zeros(3))
    box = InputBox.symmetric(0.4)
    assert box.diameter == pytest.approx(0.8 * np.sqrt(3))
    assert box.contains([0.4, -0.4, 0.0]) and not box.contains([0.5, 0, 0])


@pytest.mark.parametrize("kw", [
    dict(Q_u=-np.eye(3)),
    dict(Q_y=np.diag([1, 1, 1, 1, 1, 0.0])),
    dict(y_hat=np.array([1, 2, 3, 0, 0, 1.0])),
    dict(gamma=0.0),
    dict(Q_u=np.array([[1, 2, 0], [0, 1, 0], [0, 0, 1.0]])),
])
def test_objective_validation(obj, kw):
    base = dict(Q_u=obj.Q_u, Q_y=obj.Q_y, y_hat=obj.y_hat, box=obj.box, gamma=obj.gamma)
    with pytest.raises(InvalidParameterError):
        QuadObjective(**{**base, **kw})


def test_constants_for_reference_plant(obj, plant):
    c = compute_constants(obj, plant, check=False)
    H = plant.H_stab
    assert c.L == pytest.approx(np.linalg.eigvalsh(obj.Q_u + H.T @ obj.Q_y @ H).max())
    assert c.q == pytest.approx(1 - 2 * 0.1 * 5e-5 + 0.01 * c.L**2)
    assert not c.valid
    with pytest.raises(StepsizeError):
        compute_constants(obj, plant)


def test_constants_valid_for_heavy_chaser(obj, heavy_plant):
    c = compute_constants(obj, heavy_plant)
    assert 0 < c.q < 1


def test_stepsize_boundary_rejected():
    fake = SimpleNamespace(H_stab=np.zeros((6, 3)))
    box = InputBox.symmetric(1.0)
    # Q_u = I and H = 0 give L = 1 and the boundary stepsize 2 / (1 + 1) = 1.
    obj = QuadObjective(np.eye(3), np.eye(6), np.zeros(6), box, gamma=1.0)
    with pytest.raises(StepsizeError):
        compute_constants(obj, fake)
    c = compute_constants(obj, fake, check=False)
    assert c.q == pytest.approx(0.0)
    ok = QuadObjective(np.eye(3), np.eye(6), np.zeros(6), box, gamma=0.5)
    assert compute_constants(ok, fake).q == pytest.approx(0.25)


def test_reduced_gradient_matches_central_differences(obj, plant, sine):
    rng = np.random.default_rng(1)
    for _ in range(100):
        u = rng.uniform(-0.4, 0.4, 3)
        d = sine.eval(rng.uniform(0, 100))
        g = reduced_gradient(obj, plant, u, plant.H_stab @ u + d)
        h = 1e-3
        fd = np.array([
            (eval_phi(obj, u + h * e, plant.H_stab @ (u + h * e) + d)
             - eval_phi(obj, u - h * e, plant.H_stab @ (u - h * e) + d)) / (2 * h)
            for e in np.eye(3)
        ])
        assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(g)


vec3 = arrays(np.float64, 3, elements=st.floats(-10, 10))


@settings(max_examples=300)
@given(a=vec3, b=vec3)
def test_projection_idempotent_and_nonexpansive(a, b):
    box = InputBox.symmetric(0.4)
    pa, pb = project_box(a, box), project_box(b, box)
    np.testing.assert_array_equal(project_box(pa, box), pa)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-15
    assert box.contains(pa)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_box_qp_matches_active_set_enumeration(seed):
    rng = np.random.default_rng(seed)
    P = _spd(rng, 3)
    c = rng.normal(scale=20.0, size=3)
    lo = rng.uniform(-2, 0, 3)
    box = InputBox(lo, lo + rng.uniform(0.1, 3, 3))
    x = solve_box_qp(P, c, box, tol=1e-13)
    ref = brute_force_box_qp(P, c, box.lo, box.hi)
    np.testing.assert_allclose(x, ref, atol=1e-9)


def test_box_qp_raises_without_convergence():
    P = np.diag([1.0, 1e6, 1.0])
    with pytest.raises(ConvergenceError):
        solve_box_qp(P, np.array([1e3, 1.0, -1e3]), InputBox.symmetric(1e4), max_iter=3)


def test_optimal_input_against_oracle(obj, plant, sine):
    for t in np.linspace(0, 10, 11):
        d = sine.eval(t)
        P, c = steady_state_qp(obj, plant, d)
        u = solve_optimal_input(obj, plant, d, tol=1e-13)
        np.testing.assert_allclose(u, brute_force_box_qp(P, c, obj.box.lo, obj.box.hi), atol=1e-9)


def test_iterate_fixed_point_is_fixed_for_gd_step(obj, plant):
    y_s = np.array([1500.0, -1700.0, 2900.0, 1.0, 2.0, 3.0])
    z = iterate_fixed_point(obj, plant, y_s, tol=1e-14)
    np.testing.assert_allclose(gd_step(obj, plant, z, y_s), z, atol=1e-12)


def test_rendezvous_point_is_an_equilibrium(obj, plant, sine):
    d = sine.eval(0.7)
    x, u = rendezvous_state_and_input(obj, plant, d)
    resid = plant.A_stab @ x + plant.B_stab @ u - plant.B_stab @ plant.K_eff @ d
    assert np.linalg.norm(resid) <= 1e-12 * np.linalg.norm(x)
    np.testing.assert_array_equal(chosen_rendezvous_point(obj, plant, d), x)


def test_rendezvous_point_without_disturbance_tracks_target(plant):
    # Negligible input weight and an unsaturated box: the steady state reaches the target positions.
    obj = QuadObjective(1e-12 * np.eye(3), np.eye(6), np.array([100, 100, 100, 0, 0, 0.0]),
                        InputBox.symmetric(0.4), 0.1)
    x = chosen_rendezvous_point(obj, plant, np.zeros(6), tol=1e-12)
    np.testing.assert_allclose(x, [100, 100, 100, 0, 0, 0], atol=1e-6)
