import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pctomo.forward import intensity, make_model
from pctomo.grids import GridSpec, inner_product
from pctomo.regularization import Constraint, DataGramian, ObjectGramian
from pctomo.simulate import PhantomSpec, equispaced_angles, phantom_ellipsoids
from pctomo.solver import (
    CGBreakdown,
    CGPolicy,
    History,
    NewtonState,
    SolverConfig,
    StopRule,
    alpha0_heuristic,
    cg_solve,
    newton_step,
    run,
    should_stop,
    stop_index,
    write_log,
)

TIGHT = CGPolicy(max_iter=500, rel_tol=1e-13)


def _hist(residual=(), rho=()):
    h = History()
    h.residual = list(residual)
    h.rho = list(rho)
    h.alpha = [1.0] * len(h.residual)
    h.cg_iters = [0] * len(h.residual)
    return h


def test_alpha0_examples():
    d = np.array([1.0 + 10.0]).reshape(1, 1, 1)
    assert alpha0_heuristic(d, 2.0, "nearfield") == pytest.approx(25.0)
    assert alpha0_heuristic(np.full((1, 1, 1), 10.0), 2.0, "farfield") == pytest.approx(2.5)
    I = np.random.default_rng(0).random((2, 3, 4))
    assert alpha0_heuristic(3 * I, 1.0, "farfield") == pytest.approx(9 * alpha0_heuristic(I, 1.0, "farfield"))
    with pytest.raises(ValueError):
        alpha0_heuristic(I, 0.0, "farfield")


def test_cg_identity_one_iteration(rng):
    b = rng.standard_normal(7)
    res = cg_solve(lambda v: v, b, alpha=0.5, policy=CGPolicy(rel_tol=1e-12))
    assert res.iters == 1 and res.converged
    np.testing.assert_allclose(res.x, b / 1.5, rtol=1e-14)


def test_cg_dense_2x2(rng):
    A = np.array([[2.0, -1.0], [0.5, 3.0]])
    b = rng.standard_normal(2)
    res = cg_solve(lambda v: A.T @ (A @ v), b, alpha=1.0, policy=TIGHT)
    np.testing.assert_allclose(res.x, np.linalg.solve(A.T @ A + np.eye(2), b), rtol=1e-12)


def test_cg_diagonal(rng):
    d = np.arange(1.0, 11.0)
    b = rng.standard_normal(10)
    res = cg_solve(lambda v: d * v, b, alpha=1.0, policy=TIGHT)
    np.testing.assert_allclose(res.x, b / (d + 1), rtol=1e-10)


def test_cg_energy_error_monotone(rng):
    # CG minimizes the energy-norm error over growing Krylov spaces, so that
    # error never increases; the residual itself carries no such guarantee
    n = 30
    M = rng.standard_normal((n, n))
    H = M.T @ M + 0.1 * np.eye(n)
    b = rng.standard_normal(n)
    xs = np.linalg.solve(H, b)
    errs = []
    for k in range(1, 25):
        x = cg_solve(lambda v: H @ v, b, policy=CGPolicy(max_iter=k, rel_tol=1e-300)).x
        e = x - xs
        errs.append(e @ H @ e)
    assert all(b_ <= a_ * (1 + 1e-12) for a_, b_ in zip(errs, errs[1:]))


def test_cg_preconditioned_sobolev(rng):
    G = ObjectGramian.sobolev(1.0)
    shape = (2, 4, 4)
    D = rng.random(shape) + 0.1
    b = rng.standard_normal(shape)
    res = cg_solve(lambda v: D * v, b, alpha=0.3, policy=TIGHT, gram=G)
    np.testing.assert_allclose(D * res.x + 0.3 * G.apply(res.x), b, atol=1e-10)


def test_cg_breakdown():
    with pytest.raises(CGBreakdown):
        cg_solve(lambda v: -v, np.ones(3))


def test_cg_zero_rhs():
    res = cg_solve(lambda v: v, np.zeros(4))
    assert res.iters == 0 and not np.any(res.x)


def test_stop_examples():
    eps = 1.0
    h = _hist([5 * eps, 3 * eps, 0.9 * eps])
    assert stop_index(h, StopRule.discrepancy(1.0, eps)) == 2
    assert stop_index(h, StopRule.discrepancy(4.0, eps)) == 1
    assert stop_index(_hist([1, 1, 1], [0.5, 0.2, 0.3]), StopRule.best(np.ones(1))) == 1
    assert stop_index(_hist([1] * 5), StopRule.fixed(3)) == 3
    assert should_stop(_hist([5, 3, 0.9]), StopRule.discrepancy(1.0, 1.0))
    assert not should_stop(_hist([5, 3]), StopRule.discrepancy(1.0, 1.0))
    assert should_stop(_hist([1] * 4), StopRule.fixed(10), max_newton=3)


def test_stop_rule_validation():
    with pytest.raises(ValueError):
        StopRule("discrepancy", tau=1.0)
    with pytest.raises(ValueError):
        StopRule.discrepancy(0.5, 1.0)
    with pytest.raises(ValueError):
        StopRule("best")
    with pytest.raises(ValueError):
        SolverConfig(r_alpha=1.0)
    with pytest.raises(ValueError):
        SolverConfig(alpha0=-1.0)


def test_best_patience_and_min_newton():
    rule = StopRule.best(np.ones(1), patience=2)
    assert not should_stop(_hist([1] * 3, [0.5, 0.2, 0.3]), rule)
    assert should_stop(_hist([1] * 4, [0.5, 0.2, 0.3, 0.4]), rule)
    h = _hist([1] * 4, [0.1, 0.5, 0.3, 0.4])
    assert stop_index(h, StopRule.best(np.ones(1)), min_newton=2) == 2


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=12), st.floats(1, 5), st.floats(0, 5))
def test_discrepancy_index_nonincreasing_in_tau(res, tau, dtau):
    h = _hist(res)
    k1 = stop_index(h, StopRule.discrepancy(tau, 1.0))
    k2 = stop_index(h, StopRule.discrepancy(tau + dtau, 1.0))
    assert k2 <= k1


def _toy(seed=0, mag=0.5, m=12, mode="nearfield"):
    g = GridSpec.toy2d(m)
    model = make_model(g, equispaced_angles(6), mode, 0.05)
    truth = phantom_ellipsoids(g, PhantomSpec(seed=seed, n_ellipsoids=6, target_magnitude=mag)).data
    return g, model, truth


def test_alpha_schedule_exactly_geometric():
    g, model, truth = _toy()
    data = intensity(model, truth)
    cfg = SolverConfig(alpha0=3.7, r_alpha=0.6, stop=StopRule.fixed(6))
    r = run(model, data, cfg)
    assert r.history.alpha == [3.7 * 0.6**k for k in range(7)]
    assert len(r.history.residual) == len(r.history.cg_iters) == 7


def test_exact_data_fixed_point():
    g, model, truth = _toy()
    data = intensity(model, truth)
    cfg = SolverConfig(alpha0=1.0, stop=StopRule.fixed(3), initial_guess=truth)
    r = run(model, data, cfg)
    np.testing.assert_allclose(r.volume, truth, atol=1e-14)
    assert max(r.history.residual) <= 1e-12
    st = NewtonState(0, truth.copy(), 1.0)
    new, cg = newton_step(st, model, data, cfg, 1.0, truth)
    assert cg.iters == 0
    np.testing.assert_array_equal(new.x, truth)


def test_fixed_zero_returns_initial_guess():
    g, model, truth = _toy()
    init = 0.5 * truth
    cfg = SolverConfig(alpha0=1.0, stop=StopRule.fixed(0), initial_guess=init, constraint=Constraint.pure_phase())
    r = run(model, intensity(model, truth), cfg)
    np.testing.assert_array_equal(r.volume, init)


def test_run_is_deterministic():
    g, model, truth = _toy(seed=2)
    data = intensity(model, truth) + 1e-3 * np.random.default_rng(1).standard_normal(model.data_shape)
    cfg = SolverConfig(alpha0="auto", stop=StopRule.best(truth), max_newton=5)
    a, b = run(model, data, cfg), run(model, data, cfg)
    assert a.history.residual == b.history.residual
    assert a.history.rho == b.history.rho
    np.testing.assert_array_equal(a.volume, b.volume)


def test_monitor_records_rho_for_other_rules():
    g, model, truth = _toy(seed=2)
    data = intensity(model, truth)
    cfg = SolverConfig(alpha0=1.0, stop=StopRule.fixed(3), monitor=truth)
    r = run(model, data, cfg)
    assert len(r.history.rho) == 4 and r.history.rho[0] == pytest.approx(1.0)


@pytest.mark.parametrize("constraint", [Constraint(), Constraint.pure_phase()])
def test_newton_step_minimizes_quadratic(rng, constraint):
    g, model, truth = _toy(seed=5, mag=1.0)
    data = intensity(model, truth)
    G = ObjectGramian.sobolev(0.5)
    cfg = SolverConfig(alpha0=0.2, cg=TIGHT, gram_x=G, constraint=constraint)
    x = constraint.reduce(0.3 * truth)
    x0 = constraint.zeros(x.shape)
    st = NewtonState(0, x, 0.2)
    new, _ = newton_step(st, model, data, cfg, 0.2, x0)
    lin = model.linearize(constraint.embed(x))
    b = data - lin.intensity

    def J(d):
        r = lin.apply(constraint.embed(d)) - b
        return inner_product(r, r) + 0.2 * G.inner(x + d - x0, x + d - x0)

    d = new.x - x
    j0 = J(d)
    for _ in range(20):
        e = constraint.zeros(x.shape) + rng.standard_normal(x.shape)
        if not constraint.is_real:
            e = e + 1j * rng.standard_normal(x.shape)
        for t in (1e-3, -1e-3):
            assert J(d + t * e) >= j0 - 1e-10 * abs(j0)


def test_poisson_gramian_run():
    g, model, truth = _toy(seed=1, mag=1.0, mode="farfield")
    data = intensity(model, truth)
    gy = DataGramian("poisson", i_err=data, i_min=1e-3)
    cfg = SolverConfig(alpha0="auto", alpha_ref=truth, stop=StopRule.fixed(3), gram_y=gy, initial_guess=0.9 * truth)
    r = run(model, data, cfg)
    assert r.history.residual[-1] < r.history.residual[0]


def test_write_log(tmp_path):
    g, model, truth = _toy()
    r = run(model, intensity(model, truth), SolverConfig(alpha0=1.0, stop=StopRule.best(truth), max_newton=2))
    p = tmp_path / "log.csv"
    write_log(p, r.history)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["k", "alpha_k", "data_residual", "cg_iters", "rho_k"]
    assert len(rows) == 4 and float(rows[1][4]) == pytest.approx(1.0)


def test_auto_alpha_needs_reference():
    g, model, truth = _toy()
    with pytest.raises(ValueError):
        run(model, intensity(model, truth), SolverConfig(alpha0="auto", stop=StopRule.fixed(1)))
