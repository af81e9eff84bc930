import numpy as np
import pytest

from dpinn.errors import InvalidConfiguration
from dpinn.oracle import burgers_characteristics
from dpinn.problems import (
    CavityConstants,
    advection_exact,
    advection_initial,
    advection_problem,
    burgers_initial,
    burgers_problem,
    cavity_problem,
    make_problem,
)


def residual(problem, value, jac, hess=None):
    value = np.atleast_2d(np.asarray(value, dtype=float))
    jac = np.asarray(jac, dtype=float).reshape(1, problem.n_outputs, 2)
    hess = np.zeros_like(jac) if hess is None else np.asarray(hess, dtype=float).reshape(jac.shape)
    return problem.residual(np.zeros((1, 2)), value, jac, hess)[0]


def test_advection_residual_examples():
    p = advection_problem()
    assert residual(p, [0.7], [1.0, -1.0]) == pytest.approx([0.0])
    assert residual(p, [0.0], [1.0, 1.0]) == pytest.approx([2.0])


def test_advection_initial_values():
    assert advection_initial(0.0) == 0.0
    assert advection_initial(0.05) == pytest.approx(0.997503, abs=1e-6)


def test_advection_exact_transport():
    x = np.linspace(-1, 1, 7)
    assert np.array_equal(advection_exact(x, 0.0), advection_initial(x))
    assert advection_exact(0.3, 0.1) == pytest.approx(advection_initial(0.2), abs=1e-15)
    rng = np.random.default_rng(0)
    xs, ts, s = rng.uniform(-1, 1, 20), rng.uniform(0, 0.2, 20), rng.uniform(-0.5, 0.5, 20)
    assert np.allclose(advection_exact(xs + s, ts + s), advection_exact(xs, ts), atol=1e-12)


def test_advection_exact_satisfies_pde():
    rng = np.random.default_rng(1)
    h = 1e-6
    for x, t in rng.uniform([-1, 0], [1, 0.2], size=(20, 2)):
        ux = (advection_exact(x + h, t) - advection_exact(x - h, t)) / (2 * h)
        ut = (advection_exact(x, t + h) - advection_exact(x, t - h)) / (2 * h)
        assert abs(ux + ut) <= 1e-6


def test_burgers_examples():
    p = burgers_problem(0.0)
    assert residual(p, [3.0], [0.0, 0.0]) == pytest.approx([0.0])
    assert residual(p, [2.0], [3.0, 1.0]) == pytest.approx([7.0])
    assert burgers_initial(-0.5) == pytest.approx(1.0)
    with pytest.raises(InvalidConfiguration):
        burgers_problem(-0.1)


def test_burgers_viscous_smoothness_flags():
    assert burgers_problem(0.0).c1_axes == (False, False)
    p = burgers_problem(0.01 / np.pi)
    assert p.c1_axes == (True, False) and p.derivative_order == 2
    assert residual(p, [0.0], [0.0, 0.0], [2.0, 0.0]) == pytest.approx([-2.0 * 0.01 / np.pi])


def test_burgers_characteristics_satisfy_pde():
    h = 1e-5
    for x, t in [(0.3, 0.1), (-0.6, 0.2), (0.8, 0.05)]:
        u = burgers_characteristics(x, t)
        ux = (burgers_characteristics(x + h, t) - burgers_characteristics(x - h, t)) / (2 * h)
        ut = (burgers_characteristics(x, t + h) - burgers_characteristics(x, t - h)) / (2 * h)
        assert abs(ut + u * ux) <= 1e-5


def test_cavity_examples():
    p = cavity_problem(CavityConstants.from_reynolds(10.0))
    zero = np.zeros((1, 3, 2))
    assert np.allclose(p.residual(np.zeros((1, 2)), np.array([[0.0, 0.0, 4.0]]), zero, zero), 0)
    # u = x, v = -y at (x, y) = (0.3, 0.6): continuity 0, x-momentum u u_x = x
    x, y = 0.3, 0.6
    jac = np.zeros((1, 3, 2))
    jac[0, 0, 0], jac[0, 1, 1] = 1.0, -1.0
    r = p.residual(np.array([[x, y]]), np.array([[x, -y, 1.0]]), jac, zero)[0]
    assert r[0] == pytest.approx(0.0) and r[1] == pytest.approx(x)
    assert np.array_equal(p.boundary(np.array([0.5, 1.0])), [1.0, 0.0])
    assert np.array_equal(p.boundary(np.array([0.0, 0.5])), [0.0, 0.0])


def test_cavity_constants():
    k = CavityConstants.from_reynolds(10.0)
    assert k.reynolds == pytest.approx(10.0) and k.nu == pytest.approx(0.1)
    with pytest.raises(InvalidConfiguration):
        CavityConstants(rho=0.0)


def test_boundary_data_consistent_at_corners():
    adv = advection_problem()
    for corner in [(-1.0, 0.0), (1.0, 0.0)]:
        pt = np.array(corner)
        assert adv.boundary(pt)[0] == pytest.approx(adv.initial(pt[0])[0])
    b = burgers_problem(0.0)
    for corner in [(-1.0, 0.0), (1.0, 0.0)]:
        assert b.boundary(np.array(corner))[0] == pytest.approx(b.initial(corner[0])[0], abs=1e-15)


def test_make_problem():
    assert make_problem("burgers", nu=0.5).constants["nu"] == 0.5
    assert make_problem("cavity", reynolds=20.0).constants["nu"] == pytest.approx(0.05)
    with pytest.raises(InvalidConfiguration):
        make_problem("heat")
