"""Reference solutions used to check trained fields.

* viscous Burgers with u(x, 0) = sin(-pi x): Cole-Hopf integral, adaptive quadrature;
* inviscid Burgers, same data: implicit characteristic relation solved by Newton;
* lid-driven cavity: steady vorticity-streamfunction finite differences;
* central finite-difference gradients of scalar functions of parameters.

Cavity results can be cached on disk in a plain-text format (see
:func:`save_cavity_reference`).
"""

from __future__ import annotations

import hashlib
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import spsolve

from .errors import InvalidConfiguration, NumericalFailure, OutOfValidity

CACHE_VERSION = 1
CACHE_ENV = "DPINN_CACHE"

# -- Burgers -------------------------------------------------------------------


def _cole_hopf_point(x: float, t: float, nu: float) -> float:
    # u = -int sin(pi y) w(y) dy / int w(y) dy with y = x - sqrt(4 nu t) s and
    # w = exp(-cos(pi y) / (2 pi nu) - s^2); the exponent is shifted by its
    # maximum so neither integral overflows or underflows for small nu.
    a = np.sqrt(4.0 * nu * t)
    k = 1.0 / (2.0 * np.pi * nu)
    half = 12.0  # exp(-144) is far below the tolerance

    def expo(s):
        return -np.cos(np.pi * (x - a * s)) * k - s * s

    s_grid = np.linspace(-half, half, 4001)
    e = expo(s_grid)
    shift = e.max()
    peak = s_grid[np.argmax(e)]

    def den(s):
        return np.exp(expo(s) - shift)

    def num(s):
        return np.sin(np.pi * (x - a * s)) * np.exp(expo(s) - shift)

    results = []
    for fn in (num, den):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err, info, *rest = integrate.quad(
                fn, -half, half, points=[peak], epsabs=1e-13, epsrel=1e-12, limit=500, full_output=1
            )
        if rest or not np.isfinite(val):
            raise NumericalFailure(
                f"Cole-Hopf quadrature did not converge at x={x}, t={t}: {rest[0] if rest else val}",
                point=np.array([x, t]),
            )
        results.append((val, err))
    (n, n_err), (d, d_err) = results
    if d <= 0.0 or abs(n_err) + abs(d_err) > 1e-8 * d:
        raise NumericalFailure(f"Cole-Hopf quadrature inaccurate at x={x}, t={t}", point=np.array([x, t]))
    return -n / d


def burgers_cole_hopf(x, t, nu: float):
    """Exact viscous Burgers solution for u(x, 0) = sin(-pi x) on the real line.

    Accurate to about 1e-8 absolute; on [-1, 1] it also satisfies
    u(+-1, t) = 0 by odd symmetry about the walls.
    """
    if not nu > 0:
        raise InvalidConfiguration(f"viscosity must be > 0, got {nu}", "nu")
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise OutOfValidity("t must be >= 0")
    out = np.empty(x.shape)
    for idx in np.ndindex(x.shape):
        xi, ti = float(x[idx]), float(t[idx])
        out[idx] = np.sin(-np.pi * xi) if ti == 0.0 else _cole_hopf_point(xi, ti, nu)
    return out if out.ndim else float(out)


SHOCK_TIME = 1.0 / np.pi


def burgers_characteristics(x, t, tol: float = 1e-12, max_iter: int = 100):
    """Inviscid Burgers solution before the shock: the root of u + sin(pi (x - u t)) = 0."""
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    if np.any(t < 0) or np.any(t >= SHOCK_TIME):
        raise OutOfValidity(f"characteristics only hold for 0 <= t < 1/pi, got t up to {t.max()}")
    shape = x.shape
    x = x.ravel()
    t = t.ravel()
    u = np.sin(-np.pi * x)

    def g(u):
        return u + np.sin(np.pi * (x - u * t))

    r = g(u)
    for _ in range(max_iter):
        if np.all(np.abs(r) <= tol):
            break
        dg = 1.0 - np.pi * t * np.cos(np.pi * (x - u * t))
        du = -r / dg
        lam = np.ones_like(u)
        # halve the step wherever it does not reduce |g|
        for _ in range(30):
            trial = u + lam * du
            rt = g(trial)
            worse = np.abs(rt) > np.abs(r)
            if not np.any(worse):
                break
            lam = np.where(worse, lam * 0.5, lam)
        u, r = trial, rt
    if not np.all(np.abs(r) <= tol):
        raise OutOfValidity(f"Newton iteration did not converge (max residual {np.abs(r).max():.3e})")
    u = u.reshape(shape)
    return u if u.ndim else float(u)


# -- lid-driven cavity ---------------------------------------------------------


@dataclass(frozen=True)
class CavityReference:
    """Steady cavity fields on an ``n x n`` node lattice over [0, 1]^2.

    Arrays are indexed ``[j, i]`` with ``y = j h`` and ``x = i h``.
    """

    reynolds: float
    n: int
    psi: np.ndarray
    omega: np.ndarray
    residual_history: tuple[float, ...] = field(default=(), compare=False)

    @property
    def h(self) -> float:
        return 1.0 / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n)

    @property
    def u(self) -> np.ndarray:
        u = np.zeros_like(self.psi)
        u[1:-1, :] = (self.psi[2:, :] - self.psi[:-2, :]) / (2.0 * self.h)
        u[:, 0] = u[:, -1] = 0.0
        u[0, :] = 0.0
        u[-1, :] = 1.0
        return u

    @property
    def v(self) -> np.ndarray:
        v = np.zeros_like(self.psi)
        v[:, 1:-1] = -(self.psi[:, 2:] - self.psi[:, :-2]) / (2.0 * self.h)
        v[0, :] = v[-1, :] = 0.0
        v[:, 0] = v[:, -1] = 0.0
        return v

    def interpolate(self, name: str, x, y):
        """Bilinear interpolation of ``u``, ``v``, ``psi`` or ``omega``."""
        data = getattr(self, name)
        interp = RegularGridInterpolator((self.nodes, self.nodes), data, method="linear")
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return interp(np.stack([y, x], axis=-1))

    def u_centerline(self, y, x0: float = 0.5):
        """u along the vertical line x = x0."""
        return self.interpolate("u", x0, y)

    def v_centerline(self, x, y0: float = 0.5):
        """v along the horizontal line y = y0."""
        return self.interpolate("v", x, y0)

    def volume_flux(self, x0: float = 0.5) -> float:
        """Net flow through the vertical line x = x0, from the streamfunction drop."""
        col = self.interpolate("psi", np.array([x0, x0]), np.array([0.0, 1.0]))
        return float(col[1] - col[0])


def cavity_reference(
    reynolds: float = 10.0, n: int = 129, tol: float = 1e-8, max_iter: int = 200, cache_dir=None
) -> CavityReference:
    """Steady lid-driven cavity (unit lid speed and side) by Picard iteration.

    Each iteration solves the coupled linear system for streamfunction and
    vorticity (Thom wall vorticity, second-order central differences) with
    the convecting velocity lagged.  The reported residual is the max-norm
    of the nonlinear discrete equations, scaled by ``h^2``.
    """
    if not 0 < reynolds <= 100:
        raise InvalidConfiguration(f"cavity reference supports 0 < Re <= 100, got {reynolds}", "reynolds")
    if int(n) != n or n < 33:
        raise InvalidConfiguration(f"cavity reference needs n >= 33 nodes per side, got {n}", "n")
    n = int(n)
    path = _cache_path(cache_dir, reynolds, n)
    if path is not None and path.exists():
        ref = load_cavity_reference(path)
        if ref.reynolds == reynolds and ref.n == n:
            return ref
    ref = _solve_cavity(float(reynolds), n, tol, max_iter)
    if path is not None:
        save_cavity_reference(ref, path)
    return ref


def _solve_cavity(reynolds, n, tol, max_iter):
    nu = 1.0 / reynolds
    h = 1.0 / (n - 1)
    N = n * n
    # unknown layout: psi at all nodes, then omega at all nodes
    idx = np.arange(N).reshape(n, n)
    P = lambda j, i: idx[j, i]  # noqa: E731
    W = lambda j, i: N + idx[j, i]  # noqa: E731
    J, I = np.meshgrid(np.arange(1, n - 1), np.arange(1, n - 1), indexing="ij")
    J, I = J.ravel(), I.ravel()
    boundary = np.ones((n, n), bool)
    boundary[1:-1, 1:-1] = False
    Bj, Bi = np.nonzero(boundary)

    # parts of the matrix that do not depend on the lagged velocity
    rows, cols, vals = [], [], []

    def put(r, c, v):
        rows.append(np.asarray(r).ravel())
        cols.append(np.asarray(c).ravel())
        vals.append(np.broadcast_to(np.asarray(v, dtype=float), np.shape(r)).ravel())

    # h^2 lap(psi) + h^2 omega = 0 at interior nodes
    r = P(J, I)
    for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        put(r, P(J + dj, I + di), 1.0)
    put(r, P(J, I), -4.0)
    put(r, W(J, I), h * h)
    # psi = 0 on the walls
    put(P(Bj, Bi), P(Bj, Bi), 1.0)
    # Thom: h^2 omega_w + 2 psi_adjacent = -2 U h on the lid, 0 elsewhere
    rhs = np.zeros(2 * N)
    corner = ((Bj == 0) | (Bj == n - 1)) & ((Bi == 0) | (Bi == n - 1))
    Cj, Ci = Bj[~corner], Bi[~corner]
    aj = np.where(Cj == 0, 1, np.where(Cj == n - 1, n - 2, Cj))
    ai = np.where(Ci == 0, 1, np.where(Ci == n - 1, n - 2, Ci))
    put(W(Cj, Ci), W(Cj, Ci), h * h)
    put(W(Cj, Ci), P(aj, ai), 2.0)
    rhs[W(Cj, Ci)] = np.where(Cj == n - 1, -2.0 * h, 0.0)
    # corner vorticity is never used by an interior stencil; pin it to 0
    Kj, Ki = Bj[corner], Bi[corner]
    put(W(Kj, Ki), W(Kj, Ki), 1.0)
    fixed = (np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))

    # nu (h^2 lap omega) - h^2 (u omega_x + v omega_y) = 0, written as h^2/nu times the PDE
    def transport_rows(psi):
        u = (psi[J + 1, I] - psi[J - 1, I]) / (2.0 * h)
        v = -(psi[J, I + 1] - psi[J, I - 1]) / (2.0 * h)
        cu = u * h / (2.0 * nu)
        cv = v * h / (2.0 * nu)
        r = W(J, I)
        return (
            np.concatenate([r] * 5),
            np.concatenate([W(J, I + 1), W(J, I - 1), W(J + 1, I), W(J - 1, I), W(J, I)]),
            np.concatenate([1.0 - cu, 1.0 + cu, 1.0 - cv, 1.0 + cv, -4.0 * np.ones_like(cu)]),
        )

    def assemble(psi):
        tr = transport_rows(psi)
        return sparse.csr_matrix(
            (np.concatenate([fixed[2], tr[2]]), (np.concatenate([fixed[0], tr[0]]), np.concatenate([fixed[1], tr[1]]))),
            shape=(2 * N, 2 * N),
        )

    z = np.zeros(2 * N)
    history = []
    for _ in range(max_iter):
        A = assemble(z[:N].reshape(n, n))
        z = spsolve(A.tocsc(), rhs)
        if not np.all(np.isfinite(z)):
            raise NumericalFailure("cavity solve produced non-finite values", history=tuple(history))
        res = float(np.abs(assemble(z[:N].reshape(n, n)) @ z - rhs).max())
        history.append(res)
        if res <= tol:
            break
    else:
        raise NumericalFailure(
            f"cavity iteration did not reach residual {tol} in {max_iter} steps", history=tuple(history)
        )
    return CavityReference(reynolds, n, z[:N].reshape(n, n), z[N:].reshape(n, n), tuple(history))


# -- cache files ------------------------------------------------------------------


def default_cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV) or Path.home() / ".cache" / "dpinn")


def _cache_path(cache_dir, reynolds, n):
    if cache_dir is False:
        return None
    base = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    return base / f"cavity_re{float(reynolds)!r}_n{n}.txt"


def save_cavity_reference(ref: CavityReference, path) -> None:
    """Write ``ref`` as text.

    Layout::

        # dpinn oracle cache
        version 1
        problem cavity
        reynolds <float>
        n <int>
        psi
        <n lines of n values>
        omega
        <n lines of n values>
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# dpinn oracle cache", f"version {CACHE_VERSION}", "problem cavity", f"reynolds {ref.reynolds!r}", f"n {ref.n}"]
    for name in ("psi", "omega"):
        lines.append(name)
        lines.extend(" ".join(f"{v:.17g}" for v in row) for row in getattr(ref, name))
    tmp = path.with_suffix(".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def load_cavity_reference(path) -> CavityReference:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "# dpinn oracle cache":
        raise InvalidConfiguration(f"{path} is not an oracle cache file", "cache")
    if lines[1] != f"version {CACHE_VERSION}":
        raise InvalidConfiguration(f"unsupported cache {lines[1]!r} in {path}", "cache")
    if lines[2] != "problem cavity":
        raise InvalidConfiguration(f"{path} does not hold a cavity reference", "cache")
    reynolds = float(lines[3].split()[1])
    n = int(lines[4].split()[1])
    psi = np.array([[float(v) for v in ln.split()] for ln in lines[6 : 6 + n]])
    omega = np.array([[float(v) for v in ln.split()] for ln in lines[7 + n : 7 + 2 * n]])
    if psi.shape != (n, n) or omega.shape != (n, n):
        raise InvalidConfiguration(f"truncated cache file {path}", "cache")
    return CavityReference(reynolds, n, psi, omega)


def cached_burgers(kind: str, nu: float, x, t, cache_dir=None) -> np.ndarray:
    """Burgers reference at the flattened points, cached by (kind, nu, points).

    File layout: the common header, then ``problem burgers``, ``kind``,
    ``nu``, ``points <count>`` and one ``x t u`` line per point.
    """
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    x, t = x.ravel(), t.ravel()
    if kind == "cole_hopf":
        solve = lambda: burgers_cole_hopf(x, t, nu)  # noqa: E731
    elif kind == "characteristics":
        solve = lambda: np.asarray(burgers_characteristics(x, t), dtype=float).ravel()  # noqa: E731
    else:
        raise InvalidConfiguration(f"unknown Burgers reference {kind!r}", "reference")
    path = None
    if cache_dir is not False:
        base = Path(cache_dir) if cache_dir is not None else default_cache_dir()
        digest = hashlib.sha1(np.stack([x, t]).tobytes()).hexdigest()[:16]
        path = base / f"burgers_{kind}_nu{float(nu)!r}_{digest}.txt"
    if path is not None and path.exists():
        lines = path.read_text().splitlines()
        if lines[:2] == ["# dpinn oracle cache", f"version {CACHE_VERSION}"] and len(lines) == 6 + x.size:
            data = np.array([[float(v) for v in ln.split()] for ln in lines[6:]])
            if np.array_equal(data[:, 0], x) and np.array_equal(data[:, 1], t):
                return data[:, 2]
    u = np.asarray(solve(), dtype=float).reshape(x.shape)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        head = ["# dpinn oracle cache", f"version {CACHE_VERSION}", "problem burgers", f"kind {kind}", f"nu {float(nu)!r}", f"points {x.size}"]
        body = [f"{a:.17g} {b:.17g} {c:.17g}" for a, b, c in zip(x, t, u)]
        tmp = path.with_suffix(".tmp")
        tmp.write_text("\n".join(head + body) + "\n")
        tmp.replace(path)
    return u


# -- finite differences -------------------------------------------------------------


def finite_difference_gradient(f, params, step: float = 1e-6, indices=None):
    """Central-difference gradient of scalar ``f`` at ``params``.

    ``params`` is a float array or a parameter object with ``flat`` and
    ``with_flat``; the gradient comes back in the same form.  ``indices``
    restricts the differences to some flat coordinates (others stay 0).
    """
    if not step > 0:
        raise InvalidConfiguration(f"step must be > 0, got {step}", "step")
    tree = hasattr(params, "with_flat")
    flat = np.array(params.flat if tree else params, dtype=float)
    rebuild = params.with_flat if tree else (lambda a: a.reshape(np.shape(params)))
    grad = np.zeros(flat.size)
    base = flat.ravel()
    for i in range(base.size) if indices is None else indices:
        up = base.copy()
        up[i] += step
        down = base.copy()
        down[i] -= step
        grad[i] = (f(rebuild(up)) - f(rebuild(down))) / (2.0 * step)
    return rebuild(grad) if tree else grad.reshape(np.shape(params))
