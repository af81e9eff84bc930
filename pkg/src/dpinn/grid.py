"""Uniform rectangular partitions of a 2-D domain.

Cells are numbered from 1 in row-major order with axis 0 fastest, so cell
``i`` sits in column ``(i-1) % nb0 + 1`` and row ``(i-1) // nb0 + 1``.
Each cell has four faces numbered as interfaces:

    I1  bottom  (axis-1 low)        I3  top    (axis-1 high)
    I2  right   (axis-0 high)       I4  left   (axis-0 low)

Networks see cell-local coordinates in the unit square.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfiguration, InvalidInput

SPACE_TIME = "space-time"
SPACE_SPACE = "space-space"

# face number -> (axis held fixed, local coordinate on that axis)
FACES = {1: (1, 0.0), 2: (0, 1.0), 3: (1, 1.0), 4: (0, 0.0)}

_SLACK = 1e-12


@dataclass(frozen=True)
class Domain2D:
    axis0: tuple[float, float]
    axis1: tuple[float, float]
    axis_kind: str = SPACE_TIME

    def __post_init__(self):
        object.__setattr__(self, "axis0", tuple(float(v) for v in self.axis0))
        object.__setattr__(self, "axis1", tuple(float(v) for v in self.axis1))
        for name in ("axis0", "axis1"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise InvalidConfiguration(f"{name} bounds must satisfy low < high, got {(lo, hi)}", name)
        if self.axis_kind not in (SPACE_TIME, SPACE_SPACE):
            raise InvalidConfiguration(f"unknown axis kind {self.axis_kind!r}", "axis_kind")

    @property
    def lows(self) -> np.ndarray:
        return np.array([self.axis0[0], self.axis1[0]])

    @property
    def highs(self) -> np.ndarray:
        return np.array([self.axis0[1], self.axis1[1]])

    @property
    def area(self) -> float:
        return (self.axis0[1] - self.axis0[0]) * (self.axis1[1] - self.axis1[0])


@dataclass(frozen=True)
class Cell:
    index: int
    bounds: tuple[tuple[float, float], tuple[float, float]]
    column: int
    row: int

    @property
    def interfaces(self) -> tuple[tuple[int, int], ...]:
        """Identifiers ``(cell index, m)`` of faces I1..I4."""
        return tuple((self.index, m) for m in (1, 2, 3, 4))

    @property
    def low(self) -> np.ndarray:
        return np.array([self.bounds[0][0], self.bounds[1][0]])

    @property
    def width(self) -> np.ndarray:
        return np.array([self.bounds[0][1] - self.bounds[0][0], self.bounds[1][1] - self.bounds[1][0]])

    def contains(self, point, slack: float = _SLACK) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(
            self.bounds[0][0] - slack <= p[0] <= self.bounds[0][1] + slack
            and self.bounds[1][0] - slack <= p[1] <= self.bounds[1][1] + slack
        )


@dataclass(frozen=True)
class CellGrid:
    domain: Domain2D
    nb0: int
    nb1: int
    cells: tuple[Cell, ...] = field(repr=False)

    @property
    def n_cells(self) -> int:
        return self.nb0 * self.nb1

    def cell(self, i: int) -> Cell:
        if not 1 <= i <= self.n_cells:
            raise InvalidInput(f"cell index {i} outside [1, {self.n_cells}]")
        return self.cells[i - 1]

    def index_of(self, column: int, row: int) -> int:
        return (row - 1) * self.nb0 + column

    @property
    def lows(self) -> np.ndarray:
        """``(C, 2)`` lower corners."""
        return np.array([c.low for c in self.cells])

    @property
    def widths(self) -> np.ndarray:
        """``(C, 2)`` cell extents."""
        return np.array([c.width for c in self.cells])

    def containing_cells(self, point) -> list[int]:
        """All cells whose closed bounds hold ``point`` (several on faces and corners)."""
        p = np.asarray(point, dtype=float)
        cols = _axis_candidates(p[0], self.domain.axis0, self.nb0)
        rows = _axis_candidates(p[1], self.domain.axis1, self.nb1)
        return [self.index_of(c, r) for r in rows for c in cols]


def _edges(bounds, n: int) -> np.ndarray:
    lo, hi = bounds
    e = lo + (hi - lo) * np.arange(n + 1) / n
    e[-1] = hi
    return e


def _axis_candidates(v: float, bounds, n: int) -> list[int]:
    lo, hi = bounds
    if v < lo - _SLACK or v > hi + _SLACK:
        return []
    edges = _edges(bounds, n)
    j = int(np.clip(np.searchsorted(edges, v, side="right"), 1, n))
    out = [j]
    if j > 1 and abs(v - edges[j - 1]) <= _SLACK:
        out.insert(0, j - 1)
    if j < n and abs(v - edges[j]) <= _SLACK:
        out.append(j + 1)
    return out


def partition(domain: Domain2D, nb0: int, nb1: int) -> CellGrid:
    """Tile ``domain`` with ``nb0 x nb1`` equal cells."""
    if int(nb0) != nb0 or int(nb1) != nb1 or nb0 < 1 or nb1 < 1:
        raise InvalidConfiguration(f"cell counts must be positive integers, got {(nb0, nb1)}", "cells")
    nb0, nb1 = int(nb0), int(nb1)
    e0 = _edges(domain.axis0, nb0)
    e1 = _edges(domain.axis1, nb1)
    cells = []
    for r in range(nb1):
        for c in range(nb0):
            cells.append(
                Cell(
                    index=r * nb0 + c + 1,
                    bounds=((e0[c], e0[c + 1]), (e1[r], e1[r + 1])),
                    column=c + 1,
                    row=r + 1,
                )
            )
    return CellGrid(domain, nb0, nb1, tuple(cells))


def normalize(cell: Cell, point) -> np.ndarray:
    """Map global point(s) in ``cell`` to the unit square."""
    p = np.asarray(point, dtype=float)
    lo, w = cell.low, cell.width
    if np.any(p < lo - _SLACK) or np.any(p > lo + w + _SLACK):
        raise InvalidInput(f"point {p.tolist()} lies outside cell {cell.index}")
    return (p - lo) / w


def denormalize(cell: Cell, unit_point) -> np.ndarray:
    u = np.asarray(unit_point, dtype=float)
    hi = np.array([cell.bounds[0][1], cell.bounds[1][1]])
    # written as a blend so that u = 0 and u = 1 land exactly on the bounds
    return cell.low * (1.0 - u) + hi * u


def unit_tensor_points(n0: int, n1: int) -> np.ndarray:
    """``n0 x n1`` points in the open unit square, half a spacing from each face.

    Axis 0 varies fastest.
    """
    if n0 < 1 or n1 < 1:
        raise InvalidConfiguration(f"collocation counts must be positive, got {(n0, n1)}", "collocation")
    a = (np.arange(n0) + 0.5) / n0
    b = (np.arange(n1) + 0.5) / n1
    A, B = np.meshgrid(a, b)
    return np.column_stack([A.ravel(), B.ravel()])


def collocation_points(cell: Cell, n0: int, n1: int) -> np.ndarray:
    return denormalize(cell, unit_tensor_points(n0, n1))


def face_parameters(n: int, closed: bool = True) -> np.ndarray:
    """Positions along a face in [0, 1]: endpoints included, or half-offset when ``closed`` is false."""
    if closed:
        if n < 2:
            raise InvalidConfiguration("need at least 2 points per interface", "interface_points")
        return np.linspace(0.0, 1.0, n)
    if n < 1:
        raise InvalidConfiguration("need at least 1 point per boundary face", "interface_points")
    return (np.arange(n) + 0.5) / n


def unit_face_points(m: int, n: int, closed: bool = True) -> np.ndarray:
    """Local coordinates of ``n`` points on face ``I_m`` of the unit square."""
    axis, level = FACES[m]
    s = face_parameters(n, closed)
    pts = np.empty((s.size, 2))
    pts[:, axis] = level
    pts[:, 1 - axis] = s
    return pts


@dataclass(frozen=True)
class InterfacePair:
    """Shared points between face ``I_a`` of ``first`` and face ``I_b`` of ``second``.

    For an axis-0 (vertical) interface ``first`` is the left cell (I2) and
    ``second`` the right cell (I4); for an axis-1 interface ``first`` is the
    lower cell (I3) and ``second`` the upper (I1).
    """

    axis: int
    first: int
    second: int
    points: np.ndarray


@dataclass(frozen=True)
class InterfacePoints:
    vertical: tuple[InterfacePair, ...]
    horizontal: tuple[InterfacePair, ...]
    # "left"/"right"/"bottom"/"top" -> ((cell index, points), ...)
    boundary: dict


def interface_points(grid: CellGrid, n_per_interface: int, boundary_closed: bool = True) -> InterfacePoints:
    """Point lists on every interior interface and on every domain edge face.

    Vertical pairs are ordered column by column (then row), horizontal pairs
    row by row (then column), as the interface losses group them.
    """
    if n_per_interface < 2:
        raise InvalidConfiguration("need at least 2 points per interface", "interface_points")
    vertical = []
    for col in range(1, grid.nb0):
        for row in range(1, grid.nb1 + 1):
            a = grid.cell(grid.index_of(col, row))
            vertical.append(
                InterfacePair(0, a.index, a.index + 1, denormalize(a, unit_face_points(2, n_per_interface)))
            )
    horizontal = []
    for row in range(1, grid.nb1):
        for col in range(1, grid.nb0 + 1):
            a = grid.cell(grid.index_of(col, row))
            horizontal.append(
                InterfacePair(
                    1, a.index, a.index + grid.nb0, denormalize(a, unit_face_points(3, n_per_interface))
                )
            )
    sets = index_sets(grid.nb0, grid.nb1)
    top = tuple(grid.index_of(c, grid.nb1) for c in range(1, grid.nb0 + 1))
    faces = {"left": (sets.left_bc, 4), "right": (sets.right_bc, 2), "bottom": (sets.ic, 1), "top": (top, 3)}
    boundary = {
        name: tuple(
            (i, denormalize(grid.cell(i), unit_face_points(m, n_per_interface, boundary_closed)))
            for i in cells
        )
        for name, (cells, m) in faces.items()
    }
    return InterfacePoints(tuple(vertical), tuple(horizontal), boundary)


@dataclass(frozen=True)
class IndexSets:
    interior: tuple[int, ...]
    left_bc: tuple[int, ...]
    right_bc: tuple[int, ...]
    ic: tuple[int, ...]
    kappa_x0: tuple[int, ...]
    kappa_t0: tuple[int, ...]


def index_sets(nb0: int, nb1: int) -> IndexSets:
    """Cell index sequences used by the boundary, initial and interface losses."""
    if nb0 < 1 or nb1 < 1:
        raise InvalidConfiguration(f"cell counts must be positive, got {(nb0, nb1)}", "cells")
    return IndexSets(
        interior=tuple(range(1, nb0 * nb1 + 1)),
        left_bc=tuple(1 + r * nb0 for r in range(nb1)),
        right_bc=tuple((r + 1) * nb0 for r in range(nb1)),
        ic=tuple(range(1, nb0 + 1)),
        kappa_x0=tuple(1 + r * nb0 for r in range(nb1)),
        kappa_t0=tuple(range(1, nb0 + 1)),
    )
