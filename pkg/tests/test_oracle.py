import numpy as np
import pytest

from dpinn.errors import InvalidConfiguration, OutOfValidity
from dpinn.oracle import (
    SHOCK_TIME,
    burgers_characteristics,
    burgers_cole_hopf,
    cached_burgers,
    cavity_reference,
    finite_difference_gradient,
    load_cavity_reference,
    save_cavity_reference,
)

NU = 0.01 / np.pi


def burgers_method_of_lines(nu, t_end, nx=1001, dt=2.5e-4):
    """Conservative central differences with classical RK4 on [-1, 1], u = 0 at both ends."""
    x = np.linspace(-1.0, 1.0, nx)
    h = x[1] - x[0]
    u = np.sin(-np.pi * x)

    def rhs(u):
        r = np.zeros_like(u)
        f = 0.5 * u * u
        r[1:-1] = -(f[2:] - f[:-2]) / (2 * h) + nu * (u[2:] - 2 * u[1:-1] + u[:-2]) / (h * h)
        return r

    steps = int(round(t_end / dt))
    for _ in range(steps):
        k1 = rhs(u)
        k2 = rhs(u + 0.5 * dt * k1)
        k3 = rhs(u + 0.5 * dt * k2)
        k4 = rhs(u + dt * k3)
        u = u + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x, u


# -- Cole-Hopf --------------------------------------------------------------------


def test_cole_hopf_initial_data_and_walls():
    assert burgers_cole_hopf(0.5, 0.0, NU) == pytest.approx(-1.0, abs=1e-15)
    assert burgers_cole_hopf(0.0, 0.3, NU) == pytest.approx(0.0, abs=1e-8)
    for x in (-1.0, 1.0):
        assert abs(burgers_cole_hopf(x, 0.4, NU)) <= 1e-8


def test_cole_hopf_is_odd_in_x():
    x = np.array([0.1, 0.37, 0.8])
    assert np.allclose(burgers_cole_hopf(x, 0.25, NU), -burgers_cole_hopf(-x, 0.25, NU), atol=1e-10)


def test_cole_hopf_matches_method_of_lines():
    x, u = burgers_method_of_lines(NU, 0.25)
    probe = np.array([-0.7, -0.3, 0.25, 0.5, 0.9])
    fd = np.interp(probe, x, u)
    assert np.max(np.abs(burgers_cole_hopf(probe, 0.25, NU) - fd)) <= 1e-4
    assert burgers_cole_hopf(0.5, 0.25, NU) == pytest.approx(-0.8031984208406324, abs=1e-6)


def test_cole_hopf_close_to_characteristics_away_from_origin():
    # viscous and inviscid differ by O(nu pi^2 t); the gap is smallest away from x = 0
    x = np.concatenate([np.linspace(-1, -0.6, 9), np.linspace(0.6, 1, 9)])
    diff = burgers_cole_hopf(x, 0.1, NU) - burgers_characteristics(x, 0.1)
    assert np.max(np.abs(diff)) <= 2e-3


def test_cole_hopf_rejects_bad_input():
    with pytest.raises(InvalidConfiguration):
        burgers_cole_hopf(0.1, 0.1, 0.0)
    with pytest.raises(OutOfValidity):
        burgers_cole_hopf(0.1, -0.1, NU)


# -- characteristics -----------------------------------------------------------------


def test_characteristics_satisfy_implicit_relation():
    x, t = np.meshgrid(np.linspace(-1, 1, 41), np.linspace(0, 0.3, 13))
    u = burgers_characteristics(x, t)
    assert np.max(np.abs(u + np.sin(np.pi * (x - u * t)))) <= 1e-12
    assert np.allclose(burgers_characteristics(x[0], 0.0), np.sin(-np.pi * x[0]), atol=1e-15)


def test_characteristics_scalar_and_past_shock():
    assert isinstance(burgers_characteristics(0.3, 0.1), float)
    with pytest.raises(OutOfValidity):
        burgers_characteristics(0.3, SHOCK_TIME)


def test_cached_burgers_round_trip(tmp_path):
    x = np.linspace(-1, 1, 5)
    a = cached_burgers("characteristics", 0.0, x, 0.2, cache_dir=tmp_path)
    assert len(list(tmp_path.iterdir())) == 1
    b = cached_burgers("characteristics", 0.0, x, 0.2, cache_dir=tmp_path)
    assert np.array_equal(a, b)
    with pytest.raises(InvalidConfiguration):
        cached_burgers("nope", 0.0, x, 0.2, cache_dir=False)


# -- cavity --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def cavity65():
    return cavity_reference(10.0, 65, cache_dir=False)


@pytest.fixture(scope="module")
def cavity129():
    return cavity_reference(10.0, 129, cache_dir=False)


def test_cavity_boundary_values(cavity65):
    assert np.all(cavity65.u[-1, 1:-1] == 1.0)
    assert np.all(cavity65.u[0] == 0.0) and np.all(cavity65.v[:, 0] == 0.0)
    assert cavity65.residual_history[-1] <= 1e-8


def test_cavity_mass_conservation(cavity65):
    for x0 in (0.25, 0.5, 0.75):
        assert abs(cavity65.volume_flux(x0)) <= 1e-12


def test_cavity_grid_convergence(cavity65, cavity129):
    y = np.linspace(0, 1, 33)
    a, b = cavity65.u_centerline(y), cavity129.u_centerline(y)
    assert np.max(np.abs(a - b)) / np.max(np.abs(b)) <= 1e-2
    c, d = cavity65.v_centerline(y), cavity129.v_centerline(y)
    assert np.max(np.abs(c - d)) / np.max(np.abs(d)) <= 1e-2


def test_cavity_primary_vortex(cavity129):
    # the recirculation runs clockwise: u > 0 near the lid, u < 0 below mid-height
    u = cavity129.u_centerline(np.array([0.3, 0.95]))
    assert u[0] < 0 < u[1]
    assert cavity129.psi.min() < 0 <= cavity129.psi.max() + 1e-12


def transport_residual(ref, n_fine=129):
    """max |u w_x + v w_y - nu lap w| of ``ref`` resampled onto an n_fine lattice, on [0.1, 0.9]^2."""
    from scipy.interpolate import RectBivariateSpline

    h = 1.0 / (n_fine - 1)
    s = np.linspace(0, 1, n_fine)
    psi = RectBivariateSpline(ref.nodes, ref.nodes, ref.psi)(s, s)
    w = RectBivariateSpline(ref.nodes, ref.nodes, ref.omega)(s, s)
    c = slice(1, -1)
    u = (psi[2:, c] - psi[:-2, c]) / (2 * h)
    v = -(psi[c, 2:] - psi[c, :-2]) / (2 * h)
    wy = (w[2:, c] - w[:-2, c]) / (2 * h)
    wx = (w[c, 2:] - w[c, :-2]) / (2 * h)
    lap = (w[2:, c] + w[:-2, c] + w[c, 2:] + w[c, :-2] - 4 * w[c, c]) / (h * h)
    r = np.abs(u * wx + v * wy - lap / ref.reynolds)
    inner = (s[c] >= 0.1) & (s[c] <= 0.9)
    return r[np.ix_(inner, inner)].max()


def test_cavity_residual_decreases_under_refinement(cavity65, cavity129):
    coarse = cavity_reference(10.0, 33, cache_dir=False)
    r33, r65, r129 = (transport_residual(ref) for ref in (coarse, cavity65, cavity129))
    assert r33 > r65 > r129


def test_cavity_is_deterministic(cavity65):
    again = cavity_reference(10.0, 65, cache_dir=False)
    assert np.array_equal(again.psi, cavity65.psi)


def test_cavity_cache_round_trip(tmp_path, cavity65):
    save_cavity_reference(cavity65, tmp_path / "c.txt")
    back = load_cavity_reference(tmp_path / "c.txt")
    assert np.array_equal(back.psi, cavity65.psi) and np.array_equal(back.omega, cavity65.omega)
    cached = cavity_reference(10.0, 65, cache_dir=tmp_path)
    assert np.array_equal(cavity_reference(10.0, 65, cache_dir=tmp_path).psi, cached.psi)


def test_cavity_rejects_bad_parameters():
    with pytest.raises(InvalidConfiguration):
        cavity_reference(1000.0, 65, cache_dir=False)
    with pytest.raises(InvalidConfiguration):
        cavity_reference(10.0, 8, cache_dir=False)


def test_cache_rejects_foreign_file(tmp_path):
    (tmp_path / "x.txt").write_text("hello\n")
    with pytest.raises(InvalidConfiguration):
        load_cavity_reference(tmp_path / "x.txt")


# -- finite differences --------------------------------------------------------------


def test_finite_difference_gradient_examples():
    assert finite_difference_gradient(lambda p: float(p[0] ** 2), np.array([3.0]))[0] == pytest.approx(6.0, abs=1e-7)
    assert np.all(finite_difference_gradient(lambda p: 4.0, np.ones(3)) == 0)
    g = finite_difference_gradient(lambda p: float(p @ p), np.arange(4.0), indices=[1, 3])
    assert np.allclose(g, [0, 2, 0, 6], atol=1e-7)
    with pytest.raises(InvalidConfiguration):
        finite_difference_gradient(lambda p: 0.0, np.ones(1), step=0.0)
