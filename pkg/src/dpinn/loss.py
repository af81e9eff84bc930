"""Composite DPINN loss over a cell grid.

Every term is a mean-square ``xi^T xi / (2 N)``:

* PDE residual at each cell's collocation points, one term per cell;
* boundary mismatch on the exterior faces of edge cells, one term per cell
  and face (the pressure pin of the cavity is counted here too);
* initial-condition mismatch on the bottom faces of the first cell row;
* value (C0) and normal-derivative (C1) mismatch across interior interfaces,
  one term per interface with ``N`` = points on that face.

Networks see cell-local coordinates, so local derivatives are rescaled by
``1/width`` (first) and ``1/width**2`` (second) before they enter any term.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import InvalidConfiguration, NumericalFailure
from .grid import FACES, CellGrid, face_parameters, index_sets, unit_tensor_points
from .net import CellParameters, cells_gradient, evaluate_cells
from .problems import ProblemDefinition


@dataclass(frozen=True)
class LossBreakdown:
    j_pde: float = 0.0
    j_bc: float = 0.0
    j_ic: float = 0.0
    j_c0x: float = 0.0
    j_c0t: float = 0.0
    j_c1x: float = 0.0
    j_c1t: float = 0.0

    @property
    def total(self) -> float:
        return (
            self.j_pde + self.j_bc + self.j_ic + self.j_c0x + self.j_c0t + self.j_c1x + self.j_c1t
        )

    @staticmethod
    def names() -> tuple[str, ...]:
        return tuple(f.name for f in fields(LossBreakdown))

    def as_row(self) -> tuple[float, ...]:
        return tuple(getattr(self, n) for n in self.names()) + (self.total,)


@dataclass(frozen=True)
class ResidualBatch:
    """Residual values at a point set; contributes ``xi^T xi / (2 N)``."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return int(np.shape(self.values)[0])

    @property
    def loss(self) -> float:
        v = np.asarray(self.values, dtype=float)
        if self.n < 1:
            raise InvalidConfiguration("a residual batch needs at least one point", "points")
        return float(np.sum(v * v) / (2.0 * self.n))


@dataclass(frozen=True)
class _BoundaryTerm:
    kind: str  # "bc" or "ic"
    cells: np.ndarray  # 0-based
    block: slice
    outputs: tuple[int, ...]
    targets: np.ndarray  # (Cs, n, len(outputs))


@dataclass(frozen=True)
class _InterfaceTerm:
    axis: int
    first: np.ndarray  # 0-based, I2 (axis 0) or I3 (axis 1)
    second: np.ndarray  # 0-based, I4 or I1
    first_block: slice
    second_block: slice
    normalizer: int  # points per face


class DPINNLoss:
    """Precomputed point sets and index algebra for one (problem, grid) pair.

    ``collocation`` is ``(n0, n1)`` for a per-cell tensor grid, an integer
    for that many seeded uniform-random points per cell (the monolithic PINN
    set-up), or an explicit array of unit-square points, ``(P, 2)`` shared
    or ``(C, P, 2)`` per cell.  ``n_interface`` points sit on every face;
    ``face_positions`` / ``boundary_positions`` replace their default
    positions along a face (closed faces, and the open exterior faces used
    when the problem asks for them).
    """

    def __init__(
        self,
        problem: ProblemDefinition,
        grid: CellGrid,
        collocation=(9, 5),
        n_interface: int = 10,
        seed: int = 0,
        face_positions=None,
        boundary_positions=None,
    ):
        if grid.domain != problem.domain:
            raise InvalidConfiguration("grid domain differs from the problem domain", "domain")
        self.problem = problem
        self.grid = grid
        faces = face_parameters(int(n_interface)) if face_positions is None else _positions(face_positions)
        if not problem.boundary_closed:
            open_faces = (
                face_parameters(int(n_interface), closed=False)
                if boundary_positions is None
                else _positions(boundary_positions)
            )
        self.n_interface = faces.size
        C = grid.n_cells
        self.lows = grid.lows
        self.highs = self.lows + grid.widths
        self.widths = grid.widths

        blocks = []
        if isinstance(collocation, (int, np.integer)):
            if collocation < 1:
                raise InvalidConfiguration("need at least one collocation point", "collocation")
            rng = np.random.default_rng(seed)
            colloc = rng.uniform(size=(C, int(collocation), 2))
        elif np.ndim(collocation) >= 2:
            colloc = np.asarray(collocation, dtype=float)
            if colloc.shape[-1] != 2 or colloc.ndim > 3 or (colloc.ndim == 3 and colloc.shape[0] != C):
                raise InvalidConfiguration(f"collocation array has shape {colloc.shape}", "collocation")
        else:
            colloc = unit_tensor_points(*collocation)
        self.n_colloc = colloc.shape[-2]
        blocks.append(("colloc", colloc))
        for m in (1, 2, 3, 4):
            blocks.append((f"f{m}", _face(m, faces)))
        if not problem.boundary_closed:
            for m in (1, 2, 3, 4):
                blocks.append((f"b{m}", _face(m, open_faces)))
        gauge_cell = None
        if problem.gauge is not None:
            gp = np.asarray(problem.gauge[0], dtype=float)
            gauge_cell = grid.containing_cells(gp)[0] - 1
            local = (gp - self.lows[gauge_cell]) / self.widths[gauge_cell]
            blocks.append(("gauge", local[None]))

        self.blocks: dict[str, slice] = {}
        parts = []
        pos = 0
        per_cell = colloc.ndim == 3
        for name, pts in blocks:
            n = pts.shape[-2]
            self.blocks[name] = slice(pos, pos + n)
            pos += n
            if per_cell and pts.ndim == 2:
                pts = np.broadcast_to(pts, (C,) + pts.shape)
            parts.append(pts)
        self.local_points = np.ascontiguousarray(np.concatenate(parts, axis=-2))
        lp = self.local_points if per_cell else self.local_points[None]
        # blend form keeps face points exactly on cell bounds
        self.global_points = self.lows[:, None, :] * (1.0 - lp) + self.highs[:, None, :] * lp
        for m in (1, 2, 3, 4):
            self.blocks.setdefault(f"b{m}", self.blocks[f"f{m}"])

        sets = index_sets(grid.nb0, grid.nb1)
        top = tuple(grid.index_of(c, grid.nb1) for c in range(1, grid.nb0 + 1))
        self.boundary_terms: list[_BoundaryTerm] = []

        def add(kind, cells, m, fn, outputs):
            idx = np.asarray(cells) - 1
            block = self.blocks[f"b{m}"]
            targets = np.asarray(fn(self.global_points[idx, block]), dtype=float)
            self.boundary_terms.append(_BoundaryTerm(kind, idx, block, outputs, targets))

        bc_out = problem.boundary_outputs
        add("bc", sets.left_bc, 4, problem.boundary, bc_out)
        add("bc", sets.right_bc, 2, problem.boundary, bc_out)
        if problem.is_space_time:
            all_out = tuple(range(problem.n_outputs))
            add("ic", sets.ic, 1, lambda p: problem.initial(p[..., 0]), all_out)
        else:
            add("bc", sets.ic, 1, problem.boundary, bc_out)
            add("bc", top, 3, problem.boundary, bc_out)

        self.gauge = None
        if problem.gauge is not None:
            self.gauge = (gauge_cell, self.blocks["gauge"].start, problem.gauge[1], float(problem.gauge[2]))

        n = self.n_interface
        self.interface_terms: list[_InterfaceTerm] = []
        vx = [(grid.index_of(c, r), grid.index_of(c + 1, r)) for c in range(1, grid.nb0) for r in range(1, grid.nb1 + 1)]
        if vx:
            a, b = np.array(vx).T - 1
            self.interface_terms.append(
                _InterfaceTerm(0, a, b, self.blocks["f2"], self.blocks["f4"], n)
            )
        vt = [(grid.index_of(c, r), grid.index_of(c, r + 1)) for r in range(1, grid.nb1) for c in range(1, grid.nb0 + 1)]
        if vt:
            a, b = np.array(vt).T - 1
            self.interface_terms.append(
                _InterfaceTerm(1, a, b, self.blocks["f3"], self.blocks["f1"], n)
            )

        needs_c1 = any(problem.c1_axes) and bool(problem.c1_outputs)
        self.order = max(problem.derivative_order, 1 if needs_c1 else 0, 1)

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, params: CellParameters, order: int | None = None):
        """Cell evaluations at all loss points with derivatives in global coordinates."""
        if params.n_cells != self.grid.n_cells:
            raise InvalidConfiguration(
                f"{params.n_cells} parameter sets for {self.grid.n_cells} cells", "cells"
            )
        order = self.order if order is None else order
        ev = evaluate_cells(params, self.local_points, order)
        inv = 1.0 / self.widths[:, None, None, :]
        jac = ev.jac * inv if ev.jac is not None else None
        hess = ev.hess_diag * (inv * inv) if ev.hess_diag is not None else None
        return ev, ev.value, jac, hess

    def _terms(self, value, jac, hess, want_adjoint: bool):
        p = self.problem
        parts = dict.fromkeys(LossBreakdown.names(), 0.0)
        gv = np.zeros_like(value) if want_adjoint else None
        gj = np.zeros_like(jac) if want_adjoint and jac is not None else None
        gh = np.zeros_like(hess) if want_adjoint and hess is not None else None

        # PDE residual
        col = self.blocks["colloc"]
        X = self.global_points[:, col]
        v, j = value[:, col], jac[:, col]
        h = hess[:, col] if hess is not None else None
        res = p.residual(X, v, j, h)
        if not np.all(np.isfinite(res)):
            bad = np.argwhere(~np.isfinite(res))[0]
            raise NumericalFailure(
                f"non-finite PDE residual in cell {bad[0] + 1} at {X[bad[0], bad[1]].tolist()}",
                cell=int(bad[0]) + 1,
                point=X[bad[0], bad[1]],
            )
        per_cell = (res * res).sum(axis=(1, 2)) / (2.0 * self.n_colloc)
        parts["j_pde"] = float(per_cell.sum())
        if want_adjoint:
            g_v, g_j, g_h = p.residual_vjp(X, v, j, h, res / self.n_colloc)
            gv[:, col] += g_v
            gj[:, col] += g_j
            if g_h is not None:
                gh[:, col] += g_h

        # boundary and initial data
        for term in self.boundary_terms:
            vals = value[term.cells, term.block][..., list(term.outputs)]
            diff = vals - term.targets
            self._check(diff, term.cells, term.block)
            n = diff.shape[1]
            parts["j_" + term.kind] += float(((diff * diff).sum(axis=(1, 2)) / (2.0 * n)).sum())
            if want_adjoint:
                for k, o in enumerate(term.outputs):
                    gv[term.cells, term.block, o] += diff[..., k] / n
        if self.gauge is not None:
            c, idx, o, target = self.gauge
            d = value[c, idx, o] - target
            parts["j_bc"] += float(0.5 * d * d)
            if want_adjoint:
                gv[c, idx, o] += d

        # interface continuity and differentiability
        c1_out = list(p.c1_outputs)
        for term in self.interface_terms:
            a, b, fa, fb, N = term.first, term.second, term.first_block, term.second_block, term.normalizer
            diff = value[a, fa] - value[b, fb]
            self._check(diff, a, fa)
            key = "j_c0x" if term.axis == 0 else "j_c0t"
            parts[key] += float((diff * diff).sum() / (2.0 * N))
            if want_adjoint:
                gv[a, fa] += diff / N
                gv[b, fb] -= diff / N
            if p.c1_axes[term.axis] and c1_out:
                ax = term.axis
                d1 = jac[a, fa][:, :, c1_out, ax] - jac[b, fb][:, :, c1_out, ax]
                self._check(d1, a, fa)
                key = "j_c1x" if ax == 0 else "j_c1t"
                parts[key] += float((d1 * d1).sum() / (2.0 * N))
                if want_adjoint:
                    for k, o in enumerate(c1_out):
                        gj[a, fa, o, ax] += d1[..., k] / N
                        gj[b, fb, o, ax] -= d1[..., k] / N
        return LossBreakdown(**parts), (gv, gj, gh)

    def _check(self, arr, cells, block):
        if not np.all(np.isfinite(arr)):
            bad = np.argwhere(~np.isfinite(arr))[0]
            c = int(cells[bad[0]])
            pt = self.global_points[c, block][bad[1]]
            raise NumericalFailure(
                f"non-finite network output in cell {c + 1} at {pt.tolist()}", cell=c + 1, point=pt
            )

    # -- public API ---------------------------------------------------------

    def total_loss(self, params: CellParameters) -> LossBreakdown:
        _, value, jac, hess = self.evaluate(params)
        return self._terms(value, jac, hess, want_adjoint=False)[0]

    def value_and_grad(self, params: CellParameters) -> tuple[LossBreakdown, np.ndarray]:
        """Loss breakdown and the flat gradient of its total w.r.t. all cell parameters."""
        ev, value, jac, hess = self.evaluate(params)
        parts, (gv, gj, gh) = self._terms(value, jac, hess, want_adjoint=True)
        inv = 1.0 / self.widths[:, None, None, :]
        gj_local = gj * inv if gj is not None else None
        gh_local = gh * (inv * inv) if gh is not None and self.order >= 2 else None
        grad = cells_gradient(
            params, self.local_points, self.order, gv, gj_local, gh_local, evaluation=ev
        )
        if not np.all(np.isfinite(grad)):
            raise NumericalFailure("non-finite parameter gradient")
        return parts, grad

    def pde_loss(self, params) -> float:
        return self.total_loss(params).j_pde

    def bc_loss(self, params) -> float:
        return self.total_loss(params).j_bc

    def ic_loss(self, params) -> float:
        return self.total_loss(params).j_ic

    def interface_c0_loss(self, params, axis: int) -> float:
        b = self.total_loss(params)
        return b.j_c0x if axis == 0 else b.j_c0t

    def interface_c1_loss(self, params, axis: int) -> float:
        b = self.total_loss(params)
        return b.j_c1x if axis == 0 else b.j_c1t

    @property
    def n_points(self) -> int:
        """Distinct points the loss touches (interface points counted once)."""
        col = self.n_colloc * self.grid.n_cells
        n = self.n_interface
        faces = sum(len(t.first) for t in self.interface_terms) * n
        faces += sum(len(t.cells) for t in self.boundary_terms) * n
        return col + faces


def _positions(values) -> np.ndarray:
    s = np.asarray(values, dtype=float).ravel()
    if s.size < 1 or np.any(s < 0) or np.any(s > 1):
        raise InvalidConfiguration("face positions must lie in [0, 1]", "interface_points")
    return s


def _face(m: int, s: np.ndarray) -> np.ndarray:
    axis, level = FACES[m]
    pts = np.empty((s.size, 2))
    pts[:, axis] = level
    pts[:, 1 - axis] = s
    return pts


def total_loss(problem, grid, params, collocation=(9, 5), n_interface: int = 10) -> LossBreakdown:
    return DPINNLoss(problem, grid, collocation, n_interface).total_loss(params)
