"""PDE systems: residual operators, boundary/initial data and exact solutions.

Residual operators act on network outputs in *global* coordinates:
``value`` is ``(..., out)``, ``jac`` and ``hess`` are ``(..., out, 2)`` with
input order (x, t) or (x, y).  Each problem also provides the transpose of
its residual's derivative (``residual_vjp``) so losses can be differentiated
without a general autodiff system.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidConfiguration
from .grid import SPACE_SPACE, SPACE_TIME, Domain2D

ADVECTION_DOMAIN = Domain2D((-1.0, 1.0), (0.0, 0.2), SPACE_TIME)
BURGERS_DOMAIN = Domain2D((-1.0, 1.0), (0.0, 0.5), SPACE_TIME)
BURGERS_NU_VISCOUS = 0.01 / np.pi


@dataclass(frozen=True)
class ProblemDefinition:
    """A PDE system on a rectangle.

    ``boundary(points)`` returns Dirichlet targets for the outputs listed in
    ``boundary_outputs``; ``initial(x)`` returns the t = 0 profile (space-time
    problems only).  Interface smoothness: every output is matched in value
    across every interface; outputs in ``c1_outputs`` are additionally
    matched in normal derivative across interfaces normal to the axes flagged
    in ``c1_axes``.
    """

    name: str
    domain: Domain2D
    n_outputs: int
    n_residuals: int
    residual: Callable
    residual_vjp: Callable
    boundary: Callable
    boundary_outputs: tuple[int, ...]
    initial: Callable | None = None
    derivative_order: int = 1
    c1_axes: tuple[bool, bool] = (False, False)
    c1_outputs: tuple[int, ...] = ()
    boundary_closed: bool = True
    # (point, output index, value) pinning an otherwise free constant
    gauge: tuple | None = None
    exact: Callable | None = None
    constants: dict = field(default_factory=dict)

    @property
    def input_dims(self) -> int:
        return 2

    @property
    def is_space_time(self) -> bool:
        return self.domain.axis_kind == SPACE_TIME


# -- advection ---------------------------------------------------------------


def advection_initial(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x) * np.sin(10.0 * np.pi * x)


def advection_exact(x, t):
    """Unit-speed transport of the wave-packet profile."""
    return advection_initial(np.asarray(x, dtype=float) - np.asarray(t, dtype=float))


def _advection_residual(points, value, jac, hess):
    return jac[..., 0, 1:2] + jac[..., 0, 0:1]


def _advection_vjp(points, value, jac, hess, g):
    g_jac = np.zeros(jac.shape)
    g_jac[..., 0, 0] = g[..., 0]
    g_jac[..., 0, 1] = g[..., 0]
    return np.zeros(value.shape), g_jac, None


def advection_problem(domain: Domain2D = ADVECTION_DOMAIN) -> ProblemDefinition:
    """u_t + u_x = 0 with a Gaussian-windowed sin(10 pi x) packet; edges take the exact solution."""

    def boundary(points):
        points = np.asarray(points, dtype=float)
        return advection_exact(points[..., 0], points[..., 1])[..., None]

    return ProblemDefinition(
        name="advection",
        domain=domain,
        n_outputs=1,
        n_residuals=1,
        residual=_advection_residual,
        residual_vjp=_advection_vjp,
        boundary=boundary,
        boundary_outputs=(0,),
        initial=lambda x: advection_initial(x)[..., None],
        derivative_order=1,
        exact=lambda points: advection_exact(points[..., 0], points[..., 1])[..., None],
    )


# -- Burgers -----------------------------------------------------------------


def burgers_initial(x):
    return np.sin(-np.pi * np.asarray(x, dtype=float))


def burgers_problem(nu: float = 0.0, allow_zero: bool = True, domain: Domain2D = BURGERS_DOMAIN) -> ProblemDefinition:
    """u_t + u u_x - nu u_xx = 0, u(x, 0) = sin(-pi x), u(+-1, t) = 0."""
    nu = float(nu)
    if not np.isfinite(nu) or nu < 0.0:
        raise InvalidConfiguration(f"viscosity must be >= 0, got {nu}", "nu")
    if nu == 0.0 and not allow_zero:
        raise InvalidConfiguration("zero viscosity not allowed here", "nu")

    def residual(points, value, jac, hess):
        u = value[..., 0]
        r = jac[..., 0, 1] + u * jac[..., 0, 0]
        if nu:
            r = r - nu * hess[..., 0, 0]
        return r[..., None]

    def vjp(points, value, jac, hess, g):
        g = g[..., 0]
        g_value = np.zeros(value.shape)
        g_value[..., 0] = g * jac[..., 0, 0]
        g_jac = np.zeros(jac.shape)
        g_jac[..., 0, 0] = g * value[..., 0]
        g_jac[..., 0, 1] = g
        g_hess = None
        if nu:
            g_hess = np.zeros(jac.shape)
            g_hess[..., 0, 0] = -nu * g
        return g_value, g_jac, g_hess

    return ProblemDefinition(
        name="burgers",
        domain=domain,
        n_outputs=1,
        n_residuals=1,
        residual=residual,
        residual_vjp=vjp,
        boundary=lambda points: np.zeros(np.shape(points)[:-1] + (1,)),
        boundary_outputs=(0,),
        initial=lambda x: burgers_initial(x)[..., None],
        derivative_order=2 if nu else 1,
        c1_axes=(nu > 0.0, False),
        c1_outputs=(0,) if nu else (),
        constants={"nu": nu},
    )


# -- lid-driven cavity ---------------------------------------------------------


@dataclass(frozen=True)
class CavityConstants:
    rho: float = 1.0
    nu: float = 0.1
    lid_speed: float = 1.0
    length: float = 1.0

    def __post_init__(self):
        for name in ("rho", "nu", "lid_speed", "length"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise InvalidConfiguration(f"cavity constant {name} must be positive, got {v}", name)

    @property
    def reynolds(self) -> float:
        return self.rho * self.lid_speed * self.length / self.nu

    @classmethod
    def from_reynolds(cls, reynolds: float, rho: float = 1.0, lid_speed: float = 1.0, length: float = 1.0):
        if not reynolds > 0:
            raise InvalidConfiguration(f"Reynolds number must be positive, got {reynolds}", "reynolds")
        return cls(rho=rho, nu=rho * lid_speed * length / reynolds, lid_speed=lid_speed, length=length)


def cavity_problem(constants: CavityConstants | None = None) -> ProblemDefinition:
    """Steady incompressible flow in a square driven by its top wall; outputs (u, v, p)."""
    k = constants or CavityConstants.from_reynolds(10.0)
    rho, nu, U, L = k.rho, k.nu, k.lid_speed, k.length

    def residual(points, value, jac, hess):
        u, v = value[..., 0], value[..., 1]
        ux, uy = jac[..., 0, 0], jac[..., 0, 1]
        vx, vy = jac[..., 1, 0], jac[..., 1, 1]
        px, py = jac[..., 2, 0], jac[..., 2, 1]
        lap_u = hess[..., 0, 0] + hess[..., 0, 1]
        lap_v = hess[..., 1, 0] + hess[..., 1, 1]
        return np.stack(
            [
                ux + vy,
                u * ux + v * uy + px / rho - nu * lap_u,
                u * vx + v * vy + py / rho - nu * lap_v,
            ],
            axis=-1,
        )

    def vjp(points, value, jac, hess, g):
        u, v = value[..., 0], value[..., 1]
        g1, g2, g3 = g[..., 0], g[..., 1], g[..., 2]
        g_value = np.zeros(value.shape)
        g_jac = np.zeros(jac.shape)
        g_hess = np.zeros(jac.shape)
        g_value[..., 0] = g2 * jac[..., 0, 0] + g3 * jac[..., 1, 0]
        g_value[..., 1] = g2 * jac[..., 0, 1] + g3 * jac[..., 1, 1]
        g_jac[..., 0, 0] = g1 + g2 * u
        g_jac[..., 0, 1] = g2 * v
        g_jac[..., 1, 0] = g3 * u
        g_jac[..., 1, 1] = g1 + g3 * v
        g_jac[..., 2, 0] = g2 / rho
        g_jac[..., 2, 1] = g3 / rho
        g_hess[..., 0, 0] = -nu * g2
        g_hess[..., 0, 1] = -nu * g2
        g_hess[..., 1, 0] = -nu * g3
        g_hess[..., 1, 1] = -nu * g3
        return g_value, g_jac, g_hess

    def boundary(points):
        points = np.asarray(points, dtype=float)
        out = np.zeros(points.shape[:-1] + (2,))
        out[..., 0] = np.where(points[..., 1] >= L - 1e-12, U, 0.0)
        return out

    return ProblemDefinition(
        name="cavity",
        domain=Domain2D((0.0, L), (0.0, L), SPACE_SPACE),
        n_outputs=3,
        n_residuals=3,
        residual=residual,
        residual_vjp=vjp,
        boundary=boundary,
        boundary_outputs=(0, 1),
        derivative_order=2,
        c1_axes=(True, True),
        c1_outputs=(0, 1),
        boundary_closed=False,
        gauge=((0.0, 0.0), 2, 0.0),
        constants={"rho": rho, "nu": nu, "lid_speed": U, "length": L, "reynolds": k.reynolds},
    )


def make_problem(name: str, **constants) -> ProblemDefinition:
    """Problem by name; ``constants`` override defaults (nu, reynolds, rho, ...)."""
    if name == "advection":
        domain = constants.get("domain", ADVECTION_DOMAIN)
        return advection_problem(domain)
    if name == "burgers":
        return burgers_problem(constants.get("nu", 0.0), domain=constants.get("domain", BURGERS_DOMAIN))
    if name == "cavity":
        rho = constants.get("rho", 1.0)
        U = constants.get("lid_speed", 1.0)
        L = constants.get("length", 1.0)
        if constants.get("nu") is not None:
            k = CavityConstants(rho=rho, nu=constants["nu"], lid_speed=U, length=L)
        else:
            k = CavityConstants.from_reynolds(constants.get("reynolds", 10.0), rho, U, L)
        return cavity_problem(k)
    raise InvalidConfiguration(f"unknown problem {name!r}", "problem")


PROBLEMS = ("advection", "burgers", "cavity")
