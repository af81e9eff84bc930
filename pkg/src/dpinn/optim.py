"""Adam over the flat parameter vector of all cells, and the training loop."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import InvalidConfiguration, NumericalFailure
from .loss import DPINNLoss, LossBreakdown
from .net import CellParameters, save_checkpoint


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n: int, lr: float = 1e-3, **kw) -> "AdamState":
        if not np.isfinite(lr) or lr < 0:
            raise InvalidConfiguration(f"learning rate must be >= 0, got {lr}", "lr")
        return cls(np.zeros(n), np.zeros(n), 0, float(lr), **kw)


def adam_step(state: AdamState, params, gradient) -> tuple[AdamState, object]:
    """One bias-corrected Adam update.

    ``params`` is a flat array or anything with ``flat``/``with_flat``; the
    same kind comes back.
    """
    tree = hasattr(params, "with_flat")
    flat = params.flat if tree else np.asarray(params, dtype=float)
    g = np.asarray(gradient.flat if hasattr(gradient, "with_flat") else gradient, dtype=float)
    if g.shape != flat.shape or state.m.shape != flat.shape:
        raise InvalidConfiguration(
            f"gradient {g.shape} / moments {state.m.shape} do not match parameters {flat.shape}", "params"
        )
    if not np.all(np.isfinite(g)):
        raise NumericalFailure("non-finite gradient", params=params)
    b1, b2 = state.beta1, state.beta2
    t = state.t + 1
    m = b1 * state.m + (1.0 - b1) * g
    v = b2 * state.v + (1.0 - b2) * (g * g)
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    new_flat = flat - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_params = params.with_flat(new_flat) if tree else new_flat
    return replace(state, m=m, v=v, t=t), new_params


@dataclass
class TrainResult:
    params: CellParameters
    history: list[tuple[int, LossBreakdown]] = field(default_factory=list)
    steps: int = 0
    stopped_by: str = "budget"


def train(
    loss: DPINNLoss,
    params: CellParameters,
    budget: int,
    lr: float = 1e-3,
    log_every: int = 100,
    threshold: float | None = None,
    checkpoint_path: str | os.PathLike | None = None,
    checkpoint_every: int = 0,
    callback: Callable[[int, LossBreakdown], None] | None = None,
) -> TrainResult:
    """Full-batch Adam on ``loss`` for at most ``budget`` steps.

    The loss breakdown is recorded at step 0 and every ``log_every`` steps
    (and at the final step).  Training stops early once the total drops
    below ``threshold``.  On a numerical failure the last good parameters
    are written to ``checkpoint_path`` (when given) before re-raising.
    Nothing here draws random numbers, so runs are reproducible.
    """
    if int(budget) != budget or budget < 0:
        raise InvalidConfiguration(f"budget must be a non-negative integer, got {budget}", "budget")
    if log_every < 1:
        raise InvalidConfiguration("log interval must be >= 1", "log_every")
    state = AdamState.fresh(params.flat.size, lr)
    result = TrainResult(params)

    def record(step, parts):
        result.history.append((step, parts))
        if callback is not None:
            callback(step, parts)

    step = 0
    try:
        while True:
            parts, grad = loss.value_and_grad(params)
            if not np.isfinite(parts.total):
                raise NumericalFailure(f"non-finite loss at step {step}", params=params)
            done = step >= budget or (threshold is not None and parts.total <= threshold)
            if step % log_every == 0 or done:
                record(step, parts)
            if done:
                if step < budget:
                    result.stopped_by = "threshold"
                break
            state, params = adam_step(state, params, grad)
            step += 1
            if checkpoint_path is not None and checkpoint_every and step % checkpoint_every == 0:
                save_checkpoint(checkpoint_path, params)
    except NumericalFailure as exc:
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, params)
        exc.history = result.history
        raise
    result.params = params
    result.steps = step
    return result
