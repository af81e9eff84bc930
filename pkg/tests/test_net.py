import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpinn.errors import InvalidConfiguration, InvalidInput, NumericalFailure
from dpinn.net import (
    CellParameters,
    FieldEvaluation,
    NetworkParameters,
    PointLoss,
    cells_gradient,
    evaluate_cells,
    evaluate_with_derivatives,
    forward,
    init_cell_params,
    init_params,
    load_checkpoint,
    loss_gradient,
    save_checkpoint,
)
from dpinn.oracle import finite_difference_gradient


def identity_111():
    return NetworkParameters([1, 1, 1], [np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])


def zero_net(sizes):
    p = init_params(sizes, 0)
    return p.with_flat(np.zeros_like(p.flat))


def straight_line(params, x):
    """Independent evaluator: plain loops over layers."""
    a = np.asarray(x, dtype=float)
    n = len(params.weights)
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = [sum(w[o, i] * a[i] for i in range(w.shape[1])) + b[o] for o in range(w.shape[0])]
        a = np.array(z) if k == n - 1 else np.array([math.tanh(v) for v in z])
    return a


# -- init ----------------------------------------------------------------------


def test_init_is_deterministic():
    assert init_params([2, 5, 5, 1], 7) == init_params([2, 5, 5, 1], 7)
    assert init_params([2, 5, 5, 1], 7) != init_params([2, 5, 5, 1], 8)


def test_init_glorot_bounds_and_zero_biases():
    p = init_params([2, 5, 5, 1], 3)
    assert np.all(np.abs(p.weights[0]) <= math.sqrt(6 / 7))
    assert np.all(np.abs(p.weights[1]) <= math.sqrt(6 / 10))
    assert all(np.all(b == 0) for b in p.biases)
    assert [w.shape for w in p.weights] == [(5, 2), (5, 5), (1, 5)]


@pytest.mark.parametrize("sizes", [[1], [], [2, 0, 1]])
def test_init_rejects_bad_sizes(sizes):
    with pytest.raises(InvalidConfiguration):
        init_params(sizes, 0)


def test_cell_params_views():
    cp = init_cell_params([2, 3, 1], 4, 11)
    assert cp.n_cells == 4 and cp.weights[0].shape == (4, 3, 2)
    rebuilt = CellParameters.from_networks([cp.network(i) for i in range(1, 5)])
    assert np.array_equal(rebuilt.flat, cp.flat)


# -- forward ----------------------------------------------------------------------


def test_zero_params_give_zero_output():
    assert np.all(forward(zero_net([2, 5, 5, 1]), [0.3, -0.7]) == 0)


def test_identity_net_value():
    assert forward(identity_111(), [0.5]) == pytest.approx(0.462117, abs=1e-6)


def test_forward_matches_straight_line():
    p = init_params([2, 5, 1], 5)
    x = np.array([0.3, 0.8])
    assert np.allclose(forward(p, x), straight_line(p, x), atol=1e-12, rtol=0)


def test_forward_rejects_wrong_dimension():
    with pytest.raises(InvalidInput):
        forward(init_params([2, 5, 1], 0), [1.0, 2.0, 3.0])


# -- derivatives --------------------------------------------------------------------


def test_identity_net_derivatives_at_zero():
    ev = evaluate_with_derivatives(identity_111(), [0.0])
    assert ev.value[0] == 0 and ev.jac[0, 0] == 1 and ev.hess_diag[0, 0] == 0


def test_zero_params_zero_derivatives():
    ev = evaluate_with_derivatives(zero_net([2, 4, 3]), np.random.default_rng(0).uniform(size=(5, 2)))
    assert np.all(ev.jac == 0) and np.all(ev.hess_diag == 0)


def fd_input_derivatives(p, x, h=1e-4):
    D = x.size
    jac = np.zeros((p.n_outputs, D))
    hess = np.zeros((p.n_outputs, D))
    f0 = forward(p, x)
    for i in range(D):
        e = np.zeros(D)
        e[i] = h
        fp, fm = forward(p, x + e), forward(p, x - e)
        jac[:, i] = (fp - fm) / (2 * h)
        hess[:, i] = (fp - 2 * f0 + fm) / (h * h)
    return jac, hess


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_derivatives_match_finite_differences():
    p = init_params([2, 5, 5, 1], 1)
    x = np.array([0.2, -0.4])
    ev = evaluate_with_derivatives(p, x)
    jac, hess = fd_input_derivatives(p, x)
    assert rel_err(ev.jac, jac) <= 1e-6
    assert rel_err(ev.hess_diag, hess) <= 1e-6


def test_last_layer_linearity():
    p = init_params([2, 6, 6, 2], 4)
    x = np.random.default_rng(1).normal(size=(7, 2))
    a = evaluate_with_derivatives(p, x)
    for c in (2.0, 0.25, -8.0):  # powers of two scale without rounding
        b = evaluate_with_derivatives(p.scaled_last_layer(c), x)
        for u, v in ((a.value, b.value), (a.jac, b.jac), (a.hess_diag, b.hess_diag)):
            assert np.array_equal(c * u, v)
    b = evaluate_with_derivatives(p.scaled_last_layer(2.5), x)
    assert np.allclose(2.5 * a.hess_diag, b.hess_diag, rtol=1e-14, atol=1e-15)


def test_evaluation_is_pure():
    p = init_params([2, 5, 5, 1], 2)
    x = np.random.default_rng(2).uniform(size=(10, 2))
    a, b = evaluate_with_derivatives(p, x), evaluate_with_derivatives(p, x)
    assert np.array_equal(a.jac, b.jac) and np.array_equal(a.hess_diag, b.hess_diag)


# -- parameter gradients ----------------------------------------------------------------


def quadratic_residual_loss(points):
    """J = sum (u_x + u u_t - u_xx)^2 / (2N): exercises value, jac and hess paths."""
    n = len(points)

    def fn(ev):
        u, ux, ut, uxx = ev.value[:, 0], ev.jac[:, 0, 0], ev.jac[:, 0, 1], ev.hess_diag[:, 0, 0]
        r = ux + u * ut - uxx
        gv = np.zeros_like(ev.value)
        gj = np.zeros_like(ev.jac)
        gh = np.zeros_like(ev.hess_diag)
        gv[:, 0] = r * ut / n
        gj[:, 0, 0] = r / n
        gj[:, 0, 1] = r * u / n
        gh[:, 0, 0] = -r / n
        return float(r @ r / (2 * n)), FieldEvaluation(gv, gj, gh)

    return PointLoss(points, 2, fn)


def test_zero_params_squared_value_loss_has_zero_gradient():
    p = zero_net([2, 5, 1])
    pts = np.array([[0.1, 0.2], [0.5, 0.5]])
    lf = PointLoss(pts, 0, lambda ev: (float((ev.value**2).sum()), FieldEvaluation(2 * ev.value)))
    loss, g = loss_gradient(p, lf)
    assert loss == 0 and np.all(g.flat == 0)


def test_slope_loss_gradient_identity_net():
    p = identity_111()
    lf = PointLoss(np.array([[0.0]]), 1, lambda ev: (float(ev.jac[0, 0, 0]), FieldEvaluation(np.zeros((1, 1)), np.ones((1, 1, 1)))))
    loss, g = loss_gradient(p, lf)
    fd = finite_difference_gradient(lambda q: loss_gradient(q, lf)[0], p, 1e-6)
    assert loss == 1.0
    assert np.allclose(g.flat, fd.flat, atol=1e-9)


def test_quadratic_loss_gradient_matches_finite_differences():
    p = init_params([2, 5, 5, 1], 9)
    pts = np.random.default_rng(3).uniform(-1, 1, size=(10, 2))
    lf = quadratic_residual_loss(pts)
    _, g = loss_gradient(p, lf)
    fd = finite_difference_gradient(lambda q: loss_gradient(q, lf)[0], p, 1e-5)
    assert rel_err(g.flat, fd.flat) <= 1e-5


def test_non_finite_input_reports_point():
    p = init_params([2, 5, 1], 0)
    pts = np.array([[0.1, 0.2], [np.nan, 0.0]])
    lf = PointLoss(pts, 0, lambda ev: (float(ev.value.sum()), FieldEvaluation(np.ones_like(ev.value))))
    with pytest.raises(NumericalFailure) as info:
        loss_gradient(p, lf)
    assert np.isnan(info.value.point[0])


@settings(max_examples=15, deadline=None)
@given(
    depth=st.integers(1, 4),
    width=st.integers(1, 12),
    n_in=st.integers(1, 2),
    n_out=st.integers(1, 3),
    seed=st.integers(0, 2**32 - 1),
)
def test_derivative_property(depth, width, n_in, n_out, seed):
    p = init_params([n_in] + [width] * depth + [n_out], seed)
    x = np.random.default_rng(seed).uniform(-1, 1, size=n_in)
    ev = evaluate_with_derivatives(p, x)
    jac, hess = fd_input_derivatives(p, x, 1e-4)
    assert np.allclose(ev.jac, jac, atol=1e-7, rtol=1e-5)
    assert np.allclose(ev.hess_diag, hess, atol=1e-5, rtol=1e-4)


# -- stacked cells and engines ---------------------------------------------------------------


@pytest.mark.parametrize("order", [0, 1, 2])
@pytest.mark.parametrize("per_cell", [False, True])
def test_engines_agree(order, per_cell):
    cp = init_cell_params([2, 4, 3, 2], 3, 5)
    rng = np.random.default_rng(6)
    x = rng.uniform(size=(3, 7, 2)) if per_cell else rng.uniform(size=(7, 2))
    a = evaluate_cells(cp, x, order, engine="compiled")
    b = evaluate_cells(cp, x, order, engine="numpy")
    assert np.allclose(a.value, b.value, atol=1e-12, rtol=0)
    if order >= 1:
        assert np.allclose(a.jac, b.jac, atol=1e-12, rtol=0)
    if order >= 2:
        assert np.allclose(a.hess_diag, b.hess_diag, atol=1e-12, rtol=0)
    gv = rng.normal(size=a.value.shape)
    gj = rng.normal(size=a.jac.shape) if order >= 1 else None
    gh = rng.normal(size=a.hess_diag.shape) if order >= 2 else None
    ga = cells_gradient(cp, x, order, gv, gj, gh, engine="compiled")
    gb = cells_gradient(cp, x, order, gv, gj, gh, engine="numpy")
    assert np.allclose(ga, gb, atol=1e-11, rtol=0)


def test_cells_match_single_networks():
    cp = init_cell_params([2, 5, 1], 4, 0)
    x = np.random.default_rng(1).uniform(size=(6, 2))
    ev = evaluate_cells(cp, x, 2)
    for c in range(4):
        single = evaluate_with_derivatives(cp.network(c + 1), x)
        assert np.allclose(ev.value[c], single.value, atol=1e-14)
        assert np.allclose(ev.jac[c], single.jac, atol=1e-14)
        assert np.allclose(ev.hess_diag[c], single.hess_diag, atol=1e-13)


# -- checkpoints ------------------------------------------------------------------------------


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    cp = init_cell_params([2, 5, 5, 3], 6, 123)
    cp = cp.with_flat(cp.flat + np.random.default_rng(0).normal(size=cp.flat.size) * 1e-3)
    save_checkpoint(tmp_path / "c.txt", cp)
    back = load_checkpoint(tmp_path / "c.txt")
    assert isinstance(back, CellParameters) and np.array_equal(back.flat, cp.flat)
    net = init_params([1, 3, 1], 2)
    save_checkpoint(tmp_path / "n.txt", net)
    assert load_checkpoint(tmp_path / "n.txt") == net


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "x.txt").write_text("hello\n")
    with pytest.raises(InvalidInput):
        load_checkpoint(tmp_path / "x.txt")
