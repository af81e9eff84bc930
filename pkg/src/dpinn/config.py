"""Run configuration: a flat JSON object with a fixed key set.

Every key of :class:`RunConfig` may appear in a config file; missing keys
take the defaults below, unknown keys are rejected.  ``None`` bounds and
``reference = "auto"`` resolve from the problem.  Presets for the standard
experiments live in ``dpinn/presets/*.json``.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InvalidConfiguration
from .grid import Domain2D, partition
from .problems import PROBLEMS, make_problem

REFERENCES = ("auto", "exact", "cole_hopf", "characteristics", "cavity_fd", "none")

_DEFAULT_DOMAINS = {
    "advection": ((-1.0, 1.0), (0.0, 0.2)),
    "burgers": ((-1.0, 1.0), (0.0, 0.5)),
}


@dataclass(frozen=True)
class RunConfig:
    name: str = "run"
    problem: str = "advection"
    # physical constants; None means the problem default
    nu: float | None = None
    reynolds: float | None = None
    rho: float = 1.0
    lid_speed: float = 1.0
    length: float = 1.0
    axis0: tuple[float, float] | None = None
    axis1: tuple[float, float] | None = None
    nb0: int = 25
    nb1: int = 5
    layers: tuple[int, ...] = (2, 5, 5, 1)
    collocation: tuple[int, int] = (9, 5)
    # > 0: that many seeded uniform-random points per cell instead of the tensor grid
    random_collocation: int = 0
    interface_points: int = 10
    lr: float = 1e-3
    budget: int = 50_000
    threshold: float | None = None
    seed: int = 0
    log_every: int = 100
    checkpoint_every: int = 0
    out: str = "runs/run"
    eval_grid: tuple[int, int] = (201, 21)
    eval_axis0: tuple[float, float] | None = None
    eval_axis1: tuple[float, float] | None = None
    slices: tuple[float, ...] = ()
    reference: str = "auto"
    oracle_n: int = 129
    centerline: float = 0.5
    residual_grid: int = 50

    def __post_init__(self):
        for name in ("axis0", "axis1", "eval_axis0", "eval_axis1", "layers", "collocation", "eval_grid", "slices"):
            v = getattr(self, name)
            if isinstance(v, list):
                object.__setattr__(self, name, tuple(v))
        self.validate()

    # -- validation -------------------------------------------------------------

    def validate(self) -> None:
        def need(cond, key, msg):
            if not cond:
                raise InvalidConfiguration(f"{key}: {msg}", key)

        need(self.problem in PROBLEMS, "problem", f"must be one of {PROBLEMS}, got {self.problem!r}")
        for key in ("nb0", "nb1", "interface_points", "log_every", "oracle_n", "residual_grid"):
            v = getattr(self, key)
            need(_is_int(v) and v >= 1, key, f"must be a positive integer, got {v!r}")
        for key in ("budget", "seed", "checkpoint_every", "random_collocation"):
            v = getattr(self, key)
            need(_is_int(v) and v >= 0, key, f"must be a non-negative integer, got {v!r}")
        need(self.interface_points >= 2, "interface_points", "need at least 2")
        need(
            len(self.layers) >= 2 and all(_is_int(n) and n >= 1 for n in self.layers),
            "layers",
            f"must list at least two positive sizes, got {self.layers!r}",
        )
        need(self.layers[0] == 2, "layers", "networks take 2 inputs")
        n_out = 3 if self.problem == "cavity" else 1
        need(self.layers[-1] == n_out, "layers", f"{self.problem} needs {n_out} outputs")
        for key in ("collocation", "eval_grid"):
            v = getattr(self, key)
            need(len(v) == 2 and all(_is_int(n) and n >= 1 for n in v), key, f"must be two positive integers, got {v!r}")
        need(_finite(self.lr) and self.lr >= 0, "lr", f"must be >= 0, got {self.lr!r}")
        need(self.threshold is None or _finite(self.threshold), "threshold", "must be a number or null")
        for key in ("axis0", "axis1", "eval_axis0", "eval_axis1"):
            v = getattr(self, key)
            need(
                v is None or (len(v) == 2 and all(_finite(b) for b in v) and v[0] < v[1]),
                key,
                f"must be [low, high] with low < high, got {v!r}",
            )
        need(all(_finite(s) for s in self.slices), "slices", "must be numbers")
        need(self.reference in REFERENCES, "reference", f"must be one of {REFERENCES}")
        if self.problem == "burgers":
            need(self.nu is None or (_finite(self.nu) and self.nu >= 0), "nu", f"must be >= 0, got {self.nu!r}")
        if self.problem == "cavity":
            need(self.nu is None or (_finite(self.nu) and self.nu > 0), "nu", f"must be > 0, got {self.nu!r}")
            need(
                self.reynolds is None or (_finite(self.reynolds) and self.reynolds > 0),
                "reynolds",
                f"must be > 0, got {self.reynolds!r}",
            )
            for key in ("rho", "lid_speed", "length"):
                need(_finite(getattr(self, key)) and getattr(self, key) > 0, key, "must be > 0")
            need(self.axis0 is None and self.axis1 is None, "axis0", "the cavity domain is set by length")
        ref = self.resolved_reference
        need(
            not (ref == "characteristics" and self.eval_bounds[1][1] >= 1.0 / np.pi),
            "eval_axis1",
            "characteristics reference needs evaluation times below 1/pi",
        )

    # -- derived ------------------------------------------------------------------

    @property
    def domain(self) -> Domain2D:
        if self.problem == "cavity":
            return make_problem("cavity", **self._constants()).domain
        a0, a1 = _DEFAULT_DOMAINS[self.problem]
        return Domain2D(self.axis0 or a0, self.axis1 or a1)

    @property
    def eval_bounds(self) -> tuple[tuple[float, float], tuple[float, float]]:
        d = self.domain
        return (tuple(self.eval_axis0 or d.axis0), tuple(self.eval_axis1 or d.axis1))

    @property
    def resolved_reference(self) -> str:
        if self.reference != "auto":
            return self.reference
        if self.problem == "advection":
            return "exact"
        if self.problem == "burgers":
            return "cole_hopf" if (self.nu or 0.0) > 0 else "characteristics"
        return "cavity_fd"

    def _constants(self) -> dict:
        if self.problem == "burgers":
            return {"nu": self.nu or 0.0}
        if self.problem == "cavity":
            k = {"rho": self.rho, "lid_speed": self.lid_speed, "length": self.length}
            if self.nu is not None:
                k["nu"] = self.nu
            else:
                k["reynolds"] = self.reynolds if self.reynolds is not None else 10.0
            return k
        return {}

    def build_problem(self):
        k = self._constants()
        if self.problem != "cavity":
            k["domain"] = self.domain
        return make_problem(self.problem, **k)

    def build_grid(self):
        return partition(self.domain, self.nb0, self.nb1)

    # -- serialization ---------------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise InvalidConfiguration("config must be a JSON object", "config")
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise InvalidConfiguration(f"unknown config key {key!r}", key)
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidConfiguration(f"config is not valid JSON: {exc}", "config") from exc
        return cls.from_dict(data)

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _is_int(v) -> bool:
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _finite(v) -> bool:
    return isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool) and np.isfinite(v)


def preset_names() -> list[str]:
    root = resources.files("dpinn") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> RunConfig:
    path = resources.files("dpinn") / "presets" / f"{name}.json"
    if not path.is_file():
        raise InvalidConfiguration(f"no preset named {name!r} (have {preset_names()})", "config")
    return RunConfig.from_json(path.read_text())


def load_config(spec: str) -> RunConfig:
    """A config from a JSON file path, or a preset name."""
    p = Path(spec)
    if p.suffix == ".json" or p.is_file() or "/" in str(spec) or os.sep in str(spec):
        if not p.is_file():
            raise InvalidConfiguration(f"config file {spec} not found", "config")
        return RunConfig.from_json(p.read_text())
    return load_preset(spec)
