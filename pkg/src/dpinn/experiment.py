"""Training and evaluation runs driven by a :class:`RunConfig`.

A trained DPINN is read as one stitched field: each point is routed to the
cell(s) whose closed bounds contain it, and points shared by several cells
(interfaces, corners) take the average of those cells' outputs.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import oracle
from .config import RunConfig
from .errors import InvalidConfiguration, InvalidInput
from .grid import _SLACK, CellGrid
from .loss import DPINNLoss, LossBreakdown
from .net import CellParameters, evaluate_cells, init_cell_params, load_checkpoint, save_checkpoint
from .optim import TrainResult, train


def _fmt(v) -> str:
    return f"{float(v):.17g}"


# -- stitched evaluation ----------------------------------------------------------


@dataclass(frozen=True)
class StitchedField:
    """Averaged outputs at ``points``: value ``(P, out)``, jac/hess ``(P, out, 2)`` in global coordinates."""

    value: np.ndarray
    jac: np.ndarray | None
    hess: np.ndarray | None
    counts: np.ndarray  # cells averaged at each point


def routing(grid: CellGrid, points) -> list[np.ndarray]:
    """For each cell, the indices of the points it contains (closed bounds)."""
    pts = np.asarray(points, dtype=float)
    lows, highs = grid.lows, grid.lows + grid.widths
    out = []
    for c in range(grid.n_cells):
        inside = np.all((pts >= lows[c] - _SLACK) & (pts <= highs[c] + _SLACK), axis=1)
        out.append(np.nonzero(inside)[0])
    return out


def evaluate_field(grid: CellGrid, params: CellParameters, points, order: int = 0) -> StitchedField:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInput(f"points must be (P, 2), got {pts.shape}")
    if params.n_cells != grid.n_cells:
        raise InvalidInput(f"{params.n_cells} parameter sets for {grid.n_cells} cells")
    P, n_out = len(pts), params.n_outputs
    value = np.zeros((P, n_out))
    jac = np.zeros((P, n_out, 2)) if order >= 1 else None
    hess = np.zeros((P, n_out, 2)) if order >= 2 else None
    counts = np.zeros(P, dtype=int)
    lows, widths = grid.lows, grid.widths
    for c, idx in enumerate(routing(grid, pts)):
        if idx.size == 0:
            continue
        local = np.clip((pts[idx] - lows[c]) / widths[c], 0.0, 1.0)
        one = CellParameters(params.layer_sizes, params.flat.reshape(grid.n_cells, -1)[c].copy(), 1)
        ev = evaluate_cells(one, local, order)
        value[idx] += ev.value[0]
        if jac is not None:
            jac[idx] += ev.jac[0] / widths[c]
        if hess is not None:
            hess[idx] += ev.hess_diag[0] / widths[c] ** 2
        counts[idx] += 1
    if np.any(counts == 0):
        bad = pts[np.argmax(counts == 0)]
        raise InvalidInput(f"point {bad.tolist()} lies outside the domain")
    value /= counts[:, None]
    if jac is not None:
        jac /= counts[:, None, None]
    if hess is not None:
        hess /= counts[:, None, None]
    return StitchedField(value, jac, hess, counts)


def tensor_points(bounds0, bounds1, n0: int, n1: int) -> np.ndarray:
    """``n0 x n1`` lattice including the bounds, axis 0 fastest."""
    a = np.linspace(bounds0[0], bounds0[1], n0)
    b = np.linspace(bounds1[0], bounds1[1], n1)
    A, B = np.meshgrid(a, b)
    return np.column_stack([A.ravel(), B.ravel()])


# -- references -------------------------------------------------------------------------


def reference_values(config: RunConfig, problem, points) -> np.ndarray | None:
    """Reference field ``(P, k)`` at ``points`` for the configured reference."""
    ref = config.resolved_reference
    x, y = points[:, 0], points[:, 1]
    if ref == "none":
        return None
    if ref == "exact":
        if problem.exact is None:
            raise InvalidConfiguration(f"{problem.name} has no exact solution", "reference")
        return problem.exact(points)
    if ref == "cole_hopf":
        return oracle.cached_burgers("cole_hopf", problem.constants["nu"], x, y)[:, None]
    if ref == "characteristics":
        return oracle.cached_burgers("characteristics", 0.0, x, y)[:, None]
    if ref == "cavity_fd":
        cav = _cavity_oracle(config, problem)
        L, U = problem.constants["length"], problem.constants["lid_speed"]
        return np.column_stack([cav.interpolate("u", x / L, y / L), cav.interpolate("v", x / L, y / L)]) * U
    raise InvalidConfiguration(f"unknown reference {ref!r}", "reference")


def _cavity_oracle(config, problem):
    return oracle.cavity_reference(problem.constants["reynolds"], config.oracle_n)


# -- reports ------------------------------------------------------------------------------


@dataclass
class EvaluationReport:
    mse: float | None
    rel_l2: float | None
    n_points: int
    reference: str
    slices: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _error_metrics(pred, ref):
    diff = pred - ref
    mse = float(np.mean(diff * diff))
    norm = float(np.linalg.norm(ref))
    rel = float(np.linalg.norm(diff) / norm) if norm > 0 else None
    return mse, rel


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def evaluate_run(config: RunConfig, params: CellParameters, out: Path | None = None) -> EvaluationReport:
    problem = config.build_problem()
    grid = config.build_grid()
    if params.n_cells != grid.n_cells or tuple(params.layer_sizes) != tuple(config.layers):
        raise InvalidInput(
            f"checkpoint has {params.n_cells} cells of {list(params.layer_sizes)}, "
            f"config wants {grid.n_cells} of {list(config.layers)}"
        )
    b0, b1 = config.eval_bounds
    pts = tensor_points(b0, b1, *config.eval_grid)
    pred = evaluate_field(grid, params, pts).value
    ref = reference_values(config, problem, pts)
    n_cmp = ref.shape[1] if ref is not None else 0
    mse, rel = _error_metrics(pred[:, :n_cmp], ref) if ref is not None else (None, None)
    report = EvaluationReport(mse, rel, len(pts), config.resolved_reference)
    names = ["u", "v", "p"][: problem.n_outputs] if problem.n_outputs > 1 else ["u"]
    if out is not None:
        header = ["x", "t" if problem.is_space_time else "y"]
        if problem.n_outputs == 1:
            header += ["predicted", "reference"]
        else:
            header += [f"predicted_{n}" for n in names] + [f"reference_{n}" for n in names[:n_cmp]]
        refcols = ref if ref is not None else np.full((len(pts), max(1, n_cmp)), np.nan)
        _write_csv(out / "evaluation.csv", header, np.column_stack([pts, pred, refcols]))

    if problem.is_space_time:
        xs = np.linspace(b0[0], b0[1], config.eval_grid[0])
        for s in config.slices:
            sp = np.column_stack([xs, np.full_like(xs, s)])
            sp_pred = evaluate_field(grid, params, sp).value[:, 0]
            sp_ref = reference_values(config, problem, sp)
            entry = {"t": s}
            if sp_ref is not None:
                entry["mse"], entry["rel_l2"] = _error_metrics(sp_pred, sp_ref[:, 0])
            report.slices[f"t={s:g}"] = entry
            if out is not None:
                cols = [xs, sp_pred, sp_ref[:, 0] if sp_ref is not None else np.full_like(xs, np.nan)]
                _write_csv(out / f"slice_t={s:g}.csv", ["x", "predicted", "reference"], np.column_stack(cols))
    else:
        report.slices.update(_cavity_lines(config, problem, grid, params, out))
        report.extra.update(cavity_residuals(config, problem, grid, params))
    return report


def _cavity_lines(config, problem, grid, params, out):
    L = problem.constants["length"]
    c = config.centerline * L
    s = np.linspace(0.0, L, 101)
    ref_cfg = config.resolved_reference == "cavity_fd"
    lines = {}
    for name, comp, pts, coord in (
        ("u_vertical", 0, np.column_stack([np.full_like(s, c), s]), "y"),
        ("v_horizontal", 1, np.column_stack([s, np.full_like(s, c)]), "x"),
    ):
        pred = evaluate_field(grid, params, pts).value[:, comp]
        ref = reference_values(config, problem, pts)[:, comp] if ref_cfg else None
        entry = {"line": f"{'x' if coord == 'y' else 'y'}={c:g}"}
        if ref is not None:
            scale = float(np.abs(ref).max())
            entry["max_abs_error"] = float(np.abs(pred - ref).max())
            entry["reference_max_abs"] = scale
            entry["relative_max_error"] = entry["max_abs_error"] / scale if scale > 0 else None
        lines[name] = entry
        if out is not None:
            refcol = ref if ref is not None else np.full_like(s, np.nan)
            _write_csv(
                out / f"centerline_{name}.csv", [coord, "predicted", "reference"], np.column_stack([s, pred, refcol])
            )
    return lines


def cavity_residuals(config, problem, grid, params) -> dict:
    """Mean |PDE residual| on a held-out cell-centred lattice, trained vs initial parameters."""
    m = config.residual_grid
    L = problem.constants["length"]
    a = (np.arange(m) + 0.5) / m * L
    A, B = np.meshgrid(a, a)
    pts = np.column_stack([A.ravel(), B.ravel()])

    def mean_abs(p):
        f = evaluate_field(grid, p, pts, order=2)
        return float(np.mean(np.abs(problem.residual(pts, f.value, f.jac, f.hess))))

    init = init_cell_params(config.layers, grid.n_cells, config.seed)
    r_final, r_init = mean_abs(params), mean_abs(init)
    return {
        "residual_mean_abs": r_final,
        "residual_mean_abs_init": r_init,
        "residual_reduction": r_init / r_final if r_final > 0 else math.inf,
    }


# -- runs ---------------------------------------------------------------------------------------


METRICS_HEADER = ("step",) + LossBreakdown.names() + ("total",)


def build_loss(config: RunConfig) -> DPINNLoss:
    collocation = config.random_collocation or tuple(config.collocation)
    return DPINNLoss(
        config.build_problem(), config.build_grid(), collocation, config.interface_points, seed=config.seed
    )


def train_run(config: RunConfig, out: Path | str | None = None) -> TrainResult:
    """Train from the seeded initialization; write config, metrics CSV and checkpoint to ``out``."""
    out = Path(out or config.out)
    out.mkdir(parents=True, exist_ok=True)
    loss = build_loss(config)
    params = init_cell_params(config.layers, loss.grid.n_cells, config.seed)
    (out / "config.json").write_text(config.to_json())
    ckpt = out / "checkpoint.txt"
    with open(out / "metrics.csv", "w") as fh:
        stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        fh.write(f"# created {stamp}\n")
        fh.write(",".join(METRICS_HEADER) + "\n")

        def log(step, parts):
            fh.write(",".join([str(step)] + [_fmt(v) for v in parts.as_row()]) + "\n")
            fh.flush()

        result = train(
            loss,
            params,
            config.budget,
            config.lr,
            log_every=config.log_every,
            threshold=config.threshold,
            checkpoint_path=ckpt,
            checkpoint_every=config.checkpoint_every,
            callback=log,
        )
    save_checkpoint(ckpt, result.params)
    return result


def evaluate_checkpoint(config: RunConfig, checkpoint, out: Path | str | None = None) -> EvaluationReport:
    params = load_checkpoint(checkpoint)
    if not isinstance(params, CellParameters):
        params = CellParameters.from_networks([params])
    out = Path(out or config.out)
    report = evaluate_run(config, params, out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, default=_json_default) + "\n")
    return report


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(type(v))


def _trained(config: RunConfig, out: Path) -> Path:
    """Checkpoint for ``config`` under ``out``: reused when a finished run with the same config is there."""
    ckpt, saved = out / "checkpoint.txt", out / "config.json"
    if ckpt.is_file() and saved.is_file() and (out / "metrics.csv").is_file():
        try:
            if RunConfig.from_json(saved.read_text()) == config:
                return ckpt
        except InvalidConfiguration:
            pass
    train_run(config, out)
    return ckpt


def compare_runs(dpinn: RunConfig, pinn: RunConfig, out: Path | str) -> dict:
    """Train (or reuse) both runs and evaluate them on the same grid against the same reference."""
    for key in ("problem", "nu", "reynolds", "eval_grid", "eval_axis0", "eval_axis1", "reference"):
        if getattr(dpinn, key) != getattr(pinn, key):
            raise InvalidConfiguration(f"compared runs differ in {key}", key)
    if dpinn.domain != pinn.domain:
        raise InvalidConfiguration("compared runs use different domains", "axis0")
    out = Path(out)
    reports = {}
    for side, cfg in (("dpinn", dpinn), ("pinn", pinn)):
        sub = out / side
        reports[side] = evaluate_checkpoint(cfg, _trained(cfg, sub), sub)
    a, b = reports["dpinn"].mse, reports["pinn"].mse
    summary = {
        "dpinn": reports["dpinn"].to_dict(),
        "pinn": reports["pinn"].to_dict(),
        "budget": {"dpinn": dpinn.budget, "pinn": pinn.budget},
        "mse_ratio_pinn_over_dpinn": (b / a) if a else (1.0 if b == a else math.inf),
    }
    (out / "compare.json").write_text(json.dumps(summary, indent=2, default=_json_default) + "\n")
    return summary


def build_oracle(config: RunConfig) -> list[str]:
    """Precompute the reference data an evaluation of ``config`` needs."""
    problem = config.build_problem()
    done = []
    ref = config.resolved_reference
    if ref == "cavity_fd":
        _cavity_oracle(config, problem)
        done.append(f"cavity Re={problem.constants['reynolds']:g} n={config.oracle_n}")
    elif ref in ("cole_hopf", "characteristics"):
        b0, b1 = config.eval_bounds
        pts = tensor_points(b0, b1, *config.eval_grid)
        reference_values(config, problem, pts)
        xs = np.linspace(b0[0], b0[1], config.eval_grid[0])
        for s in config.slices:
            reference_values(config, problem, np.column_stack([xs, np.full_like(xs, s)]))
        done.append(f"burgers {ref} nu={problem.constants['nu']!r} on {len(pts)} points")
    return done
