"""Dense tanh networks with exact input derivatives and parameter gradients.

Every network here maps ``D`` inputs through tanh hidden layers to an affine
output layer.  Derivatives with respect to the inputs (first derivatives and
the pure second derivatives ``d2f/dx_i^2``) are pushed forward layer by
layer.  Parameter gradients of any scalar loss built from values, Jacobians
and diagonal Hessians are accumulated in reverse through that same forward
computation, so second derivatives are differentiated exactly.

The engine works on *stacks* of networks that share one architecture, with
a leading cell axis on every weight array.  A single network is the one-cell
case.  Internal derivative arrays use the layout ``(cell, point, direction,
neuron)``; the public :class:`FieldEvaluation` uses ``(point, output, input)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import InvalidConfiguration, InvalidInput, NumericalFailure

ACTIVATIONS = ("tanh",)


def _layout(layer_sizes: Sequence[int]) -> list[tuple[tuple[int, int], int, int]]:
    """Offsets of (weight shape, weight offset, bias offset) per layer in a flat vector."""
    out = []
    pos = 0
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        w_off = pos
        pos += n_in * n_out
        out.append(((n_out, n_in), w_off, pos))
        pos += n_out
    return out


def _n_params(layer_sizes: Sequence[int]) -> int:
    return sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))


def _check_sizes(layer_sizes) -> tuple[int, ...]:
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise InvalidConfiguration(
            f"layer_sizes needs an input and an output size, got {list(sizes)}", "layers"
        )
    if any(s < 1 for s in sizes):
        raise InvalidConfiguration(f"layer sizes must be positive, got {list(sizes)}", "layers")
    return sizes


class _FlatTree:
    """Parameters stored in one read-only flat vector with per-layer views."""

    _cell_axis: bool

    def __init__(self, layer_sizes, flat: np.ndarray, n_cells: int = 1, activation: str = "tanh"):
        self.layer_sizes = _check_sizes(layer_sizes)
        if activation not in ACTIVATIONS:
            raise InvalidConfiguration(f"unsupported activation {activation!r}", "activation")
        self.activation = activation
        self.n_cells = int(n_cells)
        per = _n_params(self.layer_sizes)
        flat = np.array(flat, dtype=np.float64, copy=True).reshape(-1)
        if flat.size != per * self.n_cells:
            raise InvalidInput(f"expected {per * self.n_cells} parameters, got {flat.size}")
        flat.flags.writeable = False
        self.flat = flat
        block = flat.reshape(self.n_cells, per)
        ws, bs = [], []
        for shape, w_off, b_off in _layout(self.layer_sizes):
            w = block[:, w_off:w_off + shape[0] * shape[1]].reshape(self.n_cells, *shape)
            b = block[:, b_off:b_off + shape[0]]
            if not self._cell_axis:
                w, b = w[0], b[0]
            ws.append(w)
            bs.append(b)
        self.weights = tuple(ws)
        self.biases = tuple(bs)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def with_flat(self, flat: np.ndarray):
        return type(self)._from_flat(self.layer_sizes, flat, self.n_cells, self.activation)

    def __eq__(self, other) -> bool:
        return (
            type(other) is type(self)
            and self.layer_sizes == other.layer_sizes
            and self.n_cells == other.n_cells
            and np.array_equal(self.flat, other.flat)
        )

    __hash__ = None


class NetworkParameters(_FlatTree):
    """Weights and biases of one network.

    ``weights[k]`` has shape ``(layer_sizes[k+1], layer_sizes[k])`` (one row per
    output neuron) and ``biases[k]`` has length ``layer_sizes[k+1]``.  The same
    class holds parameter gradients.
    """

    _cell_axis = False

    def __init__(self, layer_sizes, weights, biases, activation: str = "tanh"):
        sizes = _check_sizes(layer_sizes)
        if len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
            raise InvalidInput("need one weight matrix and one bias vector per layer")
        parts = []
        for k, (w, b) in enumerate(zip(weights, biases)):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.shape != (sizes[k + 1], sizes[k]) or b.shape != (sizes[k + 1],):
                raise InvalidInput(
                    f"layer {k}: weight {w.shape} / bias {b.shape} do not match sizes {sizes}"
                )
            parts += [w.ravel(), b]
        super().__init__(sizes, np.concatenate(parts), 1, activation)

    @classmethod
    def _from_flat(cls, layer_sizes, flat, n_cells=1, activation="tanh"):
        obj = cls.__new__(cls)
        _FlatTree.__init__(obj, layer_sizes, flat, 1, activation)
        return obj

    def scaled_last_layer(self, c: float) -> "NetworkParameters":
        ws = list(self.weights)
        bs = list(self.biases)
        ws[-1] = ws[-1] * c
        bs[-1] = bs[-1] * c
        return NetworkParameters(self.layer_sizes, ws, bs, self.activation)


ParameterGradient = NetworkParameters


class CellParameters(_FlatTree):
    """One network per cell, all sharing ``layer_sizes``.

    ``weights[k]`` has shape ``(n_cells, layer_sizes[k+1], layer_sizes[k])``.
    """

    _cell_axis = True

    def __init__(self, layer_sizes, flat, n_cells: int, activation: str = "tanh"):
        super().__init__(layer_sizes, flat, n_cells, activation)

    @classmethod
    def _from_flat(cls, layer_sizes, flat, n_cells=1, activation="tanh"):
        return cls(layer_sizes, flat, n_cells, activation)

    @classmethod
    def from_networks(cls, nets: Sequence[NetworkParameters]) -> "CellParameters":
        sizes = nets[0].layer_sizes
        if any(n.layer_sizes != sizes for n in nets):
            raise InvalidInput("all cell networks must share layer sizes")
        return cls(sizes, np.concatenate([n.flat for n in nets]), len(nets), nets[0].activation)

    def network(self, i: int) -> NetworkParameters:
        """Network of cell ``i`` (1-based, as in the grid)."""
        if not 1 <= i <= self.n_cells:
            raise InvalidInput(f"cell index {i} outside [1, {self.n_cells}]")
        per = _n_params(self.layer_sizes)
        return NetworkParameters._from_flat(
            self.layer_sizes, self.flat[(i - 1) * per:i * per], 1, self.activation
        )


def _glorot_flat(layer_sizes, rng: np.random.Generator) -> np.ndarray:
    parts = []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        parts.append(rng.uniform(-limit, limit, size=n_out * n_in))
        parts.append(np.zeros(n_out))
    return np.concatenate(parts)


def init_params(layer_sizes, seed: int) -> NetworkParameters:
    """Glorot-uniform weights and zero biases, reproducible from ``seed``."""
    sizes = _check_sizes(layer_sizes)
    rng = np.random.default_rng(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    return NetworkParameters._from_flat(sizes, _glorot_flat(sizes, rng))


def init_cell_params(layer_sizes, n_cells: int, seed: int) -> CellParameters:
    """Independent Glorot-uniform networks for ``n_cells`` cells, drawn in cell order."""
    sizes = _check_sizes(layer_sizes)
    if n_cells < 1:
        raise InvalidConfiguration("need at least one cell", "cells")
    rng = np.random.default_rng(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    flat = np.concatenate([_glorot_flat(sizes, rng) for _ in range(n_cells)])
    return CellParameters(sizes, flat, n_cells)


# ---------------------------------------------------------------------------
# batched engine


@dataclass
class _Tape:
    order: int
    x: np.ndarray
    # per hidden layer: (s, s1, s2, dz, d2z); inputs to each affine map
    acts: list
    inputs: list


def propagate(weights, biases, x: np.ndarray, order: int = 2):
    """Forward pass over a stack of networks.

    ``weights[k]`` is ``(C, n_out, n_in)``, ``x`` is ``(C, P, D)`` or ``(P, D)``
    (shared by all cells).  Returns ``(value, jac, hess, tape)`` with value
    ``(C, P, out)`` and jac/hess ``(C, P, D, out)`` (``None`` above ``order``).
    """
    if x.ndim == 2:
        x = x[None]
    n_dir = x.shape[-1]
    n_layers = len(weights)
    acts = []
    inputs = []
    a, da, d2a = x, None, None
    for k in range(n_layers):
        w = weights[k]
        wt = np.swapaxes(w, 1, 2)
        inputs.append((a, da, d2a))
        z = a @ wt + biases[k][:, None, :]
        dz = d2z = None
        if order >= 1:
            if k == 0:
                # d(input)/d(input) is the identity, so dz is W^T for every point
                dz = wt[:, None, :, :]
            else:
                dz = da @ wt[:, None]
        if order >= 2 and k > 0:
            d2z = d2a @ wt[:, None]
        if k == n_layers - 1:
            if dz is not None and dz.shape[1] != z.shape[1]:
                dz = np.broadcast_to(dz, z.shape[:2] + dz.shape[2:])
            if order >= 2 and d2z is None:
                d2z = np.zeros(z.shape[:2] + (n_dir, z.shape[2]))
            return z, dz, d2z, _Tape(order, x, acts, inputs)
        s = np.tanh(z)
        s1 = 1.0 - s * s
        s2 = -2.0 * s * s1
        acts.append((s, s1, s2, dz, d2z))
        a = s
        if order >= 1:
            da = s1[:, :, None, :] * dz
        if order >= 2:
            d2a = s2[:, :, None, :] * (dz * dz)
            if d2z is not None:
                d2a = d2a + s1[:, :, None, :] * d2z
    raise AssertionError("unreachable")


def backpropagate(weights, tape: _Tape, g_value, g_jac=None, g_hess=None):
    """Reverse pass: parameter gradients given adjoints of value, jac and hess.

    Adjoint shapes follow :func:`propagate` outputs.  Returns lists of weight
    gradients ``(C, n_out, n_in)`` and bias gradients ``(C, n_out)``.
    """
    n_layers = len(weights)
    n_cells = weights[0].shape[0]
    gw = [None] * n_layers
    gb = [None] * n_layers
    g_z, g_dz, g_d2z = g_value, g_jac, g_hess
    for k in range(n_layers - 1, -1, -1):
        a, da, d2a = tape.inputs[k]
        n_out = weights[k].shape[1]
        grad = np.swapaxes(g_z, 1, 2) @ a
        if g_dz is not None:
            if k == 0:
                grad = grad + np.swapaxes(g_dz.sum(axis=1), 1, 2)
            else:
                gd = g_dz.reshape(n_cells, -1, n_out)
                grad = grad + np.swapaxes(gd, 1, 2) @ da.reshape(n_cells, gd.shape[1], -1)
        if g_d2z is not None and k > 0:
            gd = g_d2z.reshape(n_cells, -1, n_out)
            grad = grad + np.swapaxes(gd, 1, 2) @ d2a.reshape(n_cells, gd.shape[1], -1)
        if grad.shape[0] != n_cells:
            grad = np.broadcast_to(grad, (n_cells,) + grad.shape[1:])
        gw[k] = grad
        gb[k] = g_z.sum(axis=1)
        if k == 0:
            break
        w = weights[k]
        g_a = g_z @ w
        g_da = g_dz @ w[:, None] if g_dz is not None else None
        g_d2a = g_d2z @ w[:, None] if g_d2z is not None else None
        s, s1, s2, dz, d2z = tape.acts[k - 1]
        g_z = g_a * s1
        if g_da is not None:
            g_z = g_z + (g_da * dz).sum(axis=2) * s2
            new_g_dz = g_da * s1[:, :, None, :]
        else:
            new_g_dz = None
        if g_d2a is not None:
            s3 = -2.0 * s1 * s1 - 2.0 * s * s2
            t = (g_d2a * (dz * dz)).sum(axis=2) * s3
            if d2z is not None:
                t = t + (g_d2a * d2z).sum(axis=2) * s2
            g_z = g_z + t
            new_g_dz = new_g_dz + 2.0 * g_d2a * dz * s2[:, :, None, :]
            new_g_d2z = g_d2a * s1[:, :, None, :]
        else:
            new_g_d2z = None
        g_dz, g_d2z = new_g_dz, new_g_d2z
    return gw, gb


def flatten_gradient(layer_sizes, gw, gb) -> np.ndarray:
    """Pack per-layer cell gradients into the flat layout of :class:`CellParameters`."""
    n_cells = gw[0].shape[0]
    parts = []
    for w, b in zip(gw, gb):
        parts += [np.asarray(w).reshape(n_cells, -1), b]
    return np.concatenate(parts, axis=1).reshape(-1)


# ---------------------------------------------------------------------------
# single-network API


@dataclass(frozen=True)
class FieldEvaluation:
    """Network output and its input derivatives.

    ``value`` is ``(P, out)``, ``jac[p, o, i] = d f_o / d x_i`` and
    ``hess_diag[p, o, i] = d^2 f_o / d x_i^2``.  For a single input vector the
    leading point axis is dropped.
    """

    value: np.ndarray
    jac: np.ndarray | None = None
    hess_diag: np.ndarray | None = None


def _as_points(params: _FlatTree, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None] if single else x
    if pts.ndim != 2 or pts.shape[1] != params.n_inputs:
        raise InvalidInput(
            f"input has shape {x.shape}, network expects {params.n_inputs} inputs per point"
        )
    return pts, single


def _stack(params: NetworkParameters):
    return [w[None] for w in params.weights], [b[None] for b in params.biases]


def forward(params: NetworkParameters, x) -> np.ndarray:
    """Network value at ``x`` (one point ``(D,)`` or a batch ``(P, D)``)."""
    pts, single = _as_points(params, x)
    ws, bs = _stack(params)
    value, _, _, _ = propagate(ws, bs, pts, order=0)
    return value[0, 0] if single else value[0]


def evaluate_with_derivatives(params: NetworkParameters, x, order: int = 2) -> FieldEvaluation:
    """Value, Jacobian and diagonal Hessian of the network at ``x``."""
    pts, single = _as_points(params, x)
    ws, bs = _stack(params)
    value, jac, hess, _ = propagate(ws, bs, pts, order=order)
    jac = np.swapaxes(jac[0], 1, 2) if jac is not None else None
    hess = np.swapaxes(hess[0], 1, 2) if hess is not None else None
    if hess is None and order >= 2:
        hess = np.zeros_like(jac)
    ev = FieldEvaluation(value[0], jac, hess)
    if single:
        ev = FieldEvaluation(
            ev.value[0], None if jac is None else jac[0], None if hess is None else hess[0]
        )
    return ev


class LossFunctional(Protocol):
    """A scalar loss over network evaluations at a fixed set of points.

    Called with the :class:`FieldEvaluation` at ``points`` (derivatives up to
    ``order``); returns the loss and its adjoint, i.e. the derivative of the
    loss with respect to each entry of value, jac and hess_diag, packed as a
    :class:`FieldEvaluation` of the same shapes.
    """

    points: np.ndarray
    order: int

    def __call__(self, ev: FieldEvaluation) -> tuple[float, FieldEvaluation]: ...


@dataclass(frozen=True)
class PointLoss:
    """Plain-function :class:`LossFunctional`."""

    points: np.ndarray
    order: int
    fn: Callable[[FieldEvaluation], tuple[float, FieldEvaluation]]

    def __call__(self, ev):
        return self.fn(ev)


def _first_bad_point(points, *arrays):
    for arr in arrays:
        if arr is None:
            continue
        bad = ~np.isfinite(arr.reshape(arr.shape[0], -1)).all(axis=1)
        if bad.any():
            return points[int(np.argmax(bad))]
    return None


def loss_gradient(params: NetworkParameters, loss_functional: LossFunctional):
    """Loss value and its exact gradient with respect to every parameter."""
    pts, _ = _as_points(params, loss_functional.points)
    order = loss_functional.order
    ws, bs = _stack(params)
    value, jac, hess, tape = propagate(ws, bs, pts, order=order)
    jac_p = np.swapaxes(jac[0], 1, 2) if jac is not None else None
    hess_p = np.swapaxes(hess[0], 1, 2) if hess is not None else None
    if order >= 2 and hess_p is None:
        hess_p = np.zeros_like(jac_p)
    bad = _first_bad_point(pts, value[0], jac_p, hess_p)
    if bad is not None:
        raise NumericalFailure(f"non-finite network evaluation at {bad}", point=bad)
    loss, adj = loss_functional(FieldEvaluation(value[0], jac_p, hess_p))
    loss = float(loss)
    if not np.isfinite(loss):
        raise NumericalFailure("loss is not finite", point=pts[0])
    g_jac = np.swapaxes(adj.jac, 1, 2)[None] if order >= 1 and adj.jac is not None else None
    g_hess = np.swapaxes(adj.hess_diag, 1, 2)[None] if order >= 2 and adj.hess_diag is not None else None
    gw, gb = backpropagate(ws, tape, np.asarray(adj.value)[None], g_jac, g_hess)
    flat = flatten_gradient(params.layer_sizes, gw, gb)
    bad = _first_bad_point(pts, adj.value)
    if bad is not None or not np.isfinite(flat).all():
        raise NumericalFailure("non-finite parameter gradient", point=bad if bad is not None else pts[0])
    return loss, ParameterGradient._from_flat(params.layer_sizes, flat, 1, params.activation)


# ---------------------------------------------------------------------------
# checkpoints

_CHECKPOINT_MAGIC = "# dpinn checkpoint"
_CHECKPOINT_VERSION = 1


def _fmt(values) -> str:
    return " ".join(format(float(v), ".17g") for v in np.asarray(values).ravel())


def save_checkpoint(path, params: NetworkParameters | CellParameters) -> None:
    """Write parameters as text: header, layer sizes, then row-major arrays.

    Each array line reads ``W <cell> <layer> <rows> <cols> values...`` or
    ``b <cell> <layer> <rows> values...``; cells and layers count from 1 and
    values carry 17 significant digits so the round trip is bit-exact.
    """
    cells = params if isinstance(params, CellParameters) else None
    lines = [
        _CHECKPOINT_MAGIC,
        f"version {_CHECKPOINT_VERSION}",
        f"kind {'cells' if cells is not None else 'network'}",
        f"activation {params.activation}",
        "layer_sizes " + " ".join(str(s) for s in params.layer_sizes),
        f"n_cells {params.n_cells}",
    ]
    for c in range(params.n_cells):
        net = cells.network(c + 1) if cells is not None else params
        for k, (w, b) in enumerate(zip(net.weights, net.biases), start=1):
            lines.append(f"W {c + 1} {k} {w.shape[0]} {w.shape[1]} {_fmt(w)}")
            lines.append(f"b {c + 1} {k} {b.shape[0]} {_fmt(b)}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> NetworkParameters | CellParameters:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != _CHECKPOINT_MAGIC:
        raise InvalidInput(f"{path}: not a dpinn checkpoint")
    header = {}
    body = []
    for line in lines[1:]:
        if not line.strip():
            continue
        key, _, rest = line.partition(" ")
        if key in ("W", "b"):
            body.append((key, rest.split()))
        else:
            header[key] = rest.strip()
    if int(header.get("version", -1)) != _CHECKPOINT_VERSION:
        raise InvalidInput(f"{path}: unsupported checkpoint version {header.get('version')}")
    sizes = tuple(int(s) for s in header["layer_sizes"].split())
    n_cells = int(header["n_cells"])
    per = _n_params(sizes)
    flat = np.empty(per * n_cells)
    layout = _layout(sizes)
    for key, fields in body:
        cell, layer = int(fields[0]), int(fields[1])
        shape, w_off, b_off = layout[layer - 1]
        base = (cell - 1) * per
        if key == "W":
            rows, cols = int(fields[2]), int(fields[3])
            if (rows, cols) != shape:
                raise InvalidInput(f"{path}: weight shape {(rows, cols)} does not match sizes")
            vals = [float(v) for v in fields[4:]]
            flat[base + w_off:base + w_off + rows * cols] = vals
        else:
            rows = int(fields[2])
            vals = [float(v) for v in fields[3:]]
            flat[base + b_off:base + b_off + rows] = vals
    if len(body) != 2 * len(layout) * n_cells:
        raise InvalidInput(f"{path}: expected {2 * len(layout) * n_cells} arrays, found {len(body)}")
    activation = header.get("activation", "tanh")
    if header.get("kind") == "network":
        return NetworkParameters._from_flat(sizes, flat, 1, activation)
    return CellParameters(sizes, flat, n_cells, activation)


# ---------------------------------------------------------------------------
# stacked evaluation with engine dispatch

# above this hidden width batched BLAS beats the per-point compiled loops
COMPILED_MAX_WIDTH = 16


@dataclass(frozen=True)
class CellEvaluation:
    """Batched :class:`FieldEvaluation`: value ``(C, P, out)``, jac/hess ``(C, P, out, D)``.

    ``tape`` carries the forward intermediates so :func:`cells_gradient` can
    skip recomputing them.
    """

    value: np.ndarray
    jac: np.ndarray | None = None
    hess_diag: np.ndarray | None = None
    tape: object = field(default=None, repr=False, compare=False)


def _pick_engine(params: _FlatTree, engine: str | None) -> str:
    if engine is not None:
        if engine not in ("compiled", "numpy"):
            raise InvalidConfiguration(f"unknown engine {engine!r}", "engine")
        return engine
    hidden = params.layer_sizes[1:-1] or (0,)
    return "compiled" if max(hidden) <= COMPILED_MAX_WIDTH else "numpy"


def _cell_points(params: CellParameters, x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[0] not in (1, params.n_cells) or x.shape[2] != params.n_inputs:
        raise InvalidInput(
            f"points of shape {x.shape} do not fit {params.n_cells} cells with "
            f"{params.n_inputs} inputs"
        )
    return x


def evaluate_cells(params: CellParameters, x, order: int = 2, engine: str | None = None) -> CellEvaluation:
    """Evaluate every cell network at its points.

    ``x`` is ``(P, D)`` (same points for all cells) or ``(C, P, D)``.
    Derivatives above ``order`` come back as ``None``.
    """
    x = _cell_points(params, x)
    eng = _pick_engine(params, engine)
    if eng == "compiled":
        from . import _kernels

        sizes = np.asarray(params.layer_sizes, dtype=np.int64)
        value, jac, hess, *tape = _kernels.cells_forward(params.flat, sizes, x, order, params.n_cells)
    else:
        value, jac, hess, tape = propagate(params.weights, params.biases, x, order)
        jac = np.swapaxes(jac, 2, 3) if jac is not None else None
        hess = np.swapaxes(hess, 2, 3) if hess is not None else None
    return CellEvaluation(
        value,
        jac if order >= 1 else None,
        hess if order >= 2 else None,
        (eng, order, params.flat, x, tape),
    )


def cells_gradient(
    params: CellParameters,
    x,
    order: int,
    g_value,
    g_jac=None,
    g_hess=None,
    engine: str | None = None,
    evaluation: CellEvaluation | None = None,
) -> np.ndarray:
    """Flat parameter gradient of a loss whose adjoints w.r.t. the cell evaluation are given.

    Pass the ``evaluation`` returned by :func:`evaluate_cells` for the same
    parameters, points and order to reuse its forward pass.
    """
    x = _cell_points(params, x)
    eng = _pick_engine(params, engine)
    tape = None
    if evaluation is not None and evaluation.tape is not None:
        t_eng, t_order, t_flat, t_x, t_tape = evaluation.tape
        if t_eng == eng and t_order == order and t_flat is params.flat and t_x.shape == x.shape:
            tape = t_tape
    g_value = np.ascontiguousarray(g_value, dtype=np.float64)
    if eng == "compiled":
        from . import _kernels

        sizes = np.asarray(params.layer_sizes, dtype=np.int64)
        if tape is None:
            tape = _kernels.cells_forward(params.flat, sizes, x, order, params.n_cells)[3:]
        shape = g_value.shape + (params.n_inputs,)
        gj = np.ascontiguousarray(g_jac, dtype=np.float64) if g_jac is not None else np.zeros(shape)
        gh = np.ascontiguousarray(g_hess, dtype=np.float64) if g_hess is not None else np.zeros(shape)
        return _kernels.cells_backward(
            params.flat, sizes, x, order, params.n_cells, *tape, g_value, gj, gh
        )
    if tape is None:
        tape = propagate(params.weights, params.biases, x, order)[3]
    gj = np.swapaxes(g_jac, 2, 3) if g_jac is not None and order >= 1 else None
    gh = np.swapaxes(g_hess, 2, 3) if g_hess is not None and order >= 2 else None
    gw, gb = backpropagate(params.weights, tape, g_value, gj, gh)
    return flatten_gradient(params.layer_sizes, gw, gb)
