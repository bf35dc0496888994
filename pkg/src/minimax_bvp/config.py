"""Experiment configuration: JSON documents with expression-string leaves.

Schema (all blocks but ``system`` optional)::

    {
      "system": {"omega": "2*pi", "A": [[...]], "B": [[...]], "H": [[...]],
                 "n": 2, "r": 2, "m": 2},
      "grid": {"steps": 2048},
      "functional": ["sin(t)", "cos(t)"],
      "observation": {
        "expressions": ["...", "..."],
        "csv": "path/to/y.csv",
        "simulate": {"input": [...], "kernel_component": [...], "initial_state": [...],
                     "noise": {"kind": "random", "shape": [...], "scale": 1.0,
                               "harmonics": 8, "seed": 1, "admissible": true},
                     "seed": 7}
      },
      "truth": ["...", "..."],
      "tolerances": {"rank_tol": 1e-10, "feas_tol": 1e-6, "bvp_tol": 1e-6}
    }

Every validation error names the path of the offending field.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import expr
from .bvp import DEFAULT_BVP_TOL
from .linalg import DEFAULT_RTOL
from .observer import DEFAULT_FEAS_TOL, NoiseModel, ObservationSystem
from .ode import Grid, TabulatedVector, TimeMatrix, TimeVector

log = logging.getLogger(__name__)

DEFAULT_STEPS = 2048


class ConfigError(ValueError):
    """Invalid configuration; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def format_number(x: float) -> str:
    """17 significant digits: enough to read back the identical double."""
    return format(float(x), ".17g")


# ---------------------------------------------------------------- leaf parsing


def _expression(value, path: str) -> str:
    if isinstance(value, bool) or not isinstance(value, (str, int, float)):
        raise ConfigError(path, f"expected an expression string or number, got {type(value).__name__}")
    text = value if isinstance(value, str) else format_number(value)
    try:
        expr.parse(text)
    except expr.ExprSyntaxError as exc:
        raise ConfigError(path, str(exc)) from None
    return text


def _vector(value, path: str, dim: int | None = None) -> tuple[str, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a non-empty list")
    if dim is not None and len(value) != dim:
        raise ConfigError(path, f"expected {dim} entries, got {len(value)}")
    return tuple(_expression(v, f"{path}[{i}]") for i, v in enumerate(value))


def _matrix(value, path: str, rows: int | None, cols: int | None) -> tuple[tuple[str, ...], ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a non-empty list of rows")
    if rows is not None and len(value) != rows:
        raise ConfigError(path, f"expected {rows} rows, got {len(value)}")
    out = []
    for i, row in enumerate(value):
        if not isinstance(row, list):
            raise ConfigError(f"{path}[{i}]", "expected a list")
        width = cols if cols is not None else len(out[0]) if out else None
        out.append(_vector(row, f"{path}[{i}]", width))
    return tuple(out)


def _number(value, path: str, *, integer: bool = False, positive: bool = False, constant_expr: bool = False):
    if isinstance(value, str) and constant_expr:
        try:
            node = expr.parse(value)
        except expr.ExprSyntaxError as exc:
            raise ConfigError(path, str(exc)) from None
        if expr.depends_on_t(node):
            raise ConfigError(path, "must not depend on t")
        value = expr.evaluate(node, 0.0)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {type(value).__name__}")
    if integer and (not isinstance(value, int) and not float(value).is_integer()):
        raise ConfigError(path, "expected an integer")
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    if positive and value <= 0:
        raise ConfigError(path, "must be positive")
    return int(value) if integer else float(value)


def _optional_int(d: dict, key: str, path: str):
    return None if d.get(key) is None else _number(d[key], f"{path}.{key}", integer=True)


def _block(d, path: str, known: set[str]) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", "unknown field")
    return d


# ---------------------------------------------------------------- config blocks


@dataclass(frozen=True)
class NoiseConfig:
    shape: tuple[str, ...]
    kind: str = "expression"
    scale: float = 1.0
    harmonics: int = 8
    seed: int | None = None
    admissible: bool = False

    def model(self) -> NoiseModel:
        return NoiseModel(list(self.shape), self.kind, self.scale, self.harmonics, self.seed, self.admissible)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "shape": list(self.shape),
            "scale": self.scale,
            "harmonics": self.harmonics,
            "seed": self.seed,
            "admissible": self.admissible,
        }


@dataclass(frozen=True)
class SimulationConfig:
    input: tuple[str, ...]
    noise: NoiseConfig
    kernel_component: tuple[str, ...] | None = None
    initial_state: tuple[float, ...] | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "input": list(self.input),
            "kernel_component": None if self.kernel_component is None else list(self.kernel_component),
            "initial_state": None if self.initial_state is None else list(self.initial_state),
            "noise": self.noise.to_dict(),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ObservationConfig:
    expressions: tuple[str, ...] | None = None
    csv: str | None = None
    simulate: SimulationConfig | None = None

    def to_dict(self) -> dict:
        out = {}
        if self.expressions is not None:
            out["expressions"] = list(self.expressions)
        if self.csv is not None:
            out["csv"] = self.csv
        if self.simulate is not None:
            out["simulate"] = self.simulate.to_dict()
        return out


@dataclass(frozen=True)
class Tolerances:
    rank_tol: float = DEFAULT_RTOL
    feas_tol: float = DEFAULT_FEAS_TOL
    bvp_tol: float = DEFAULT_BVP_TOL

    def to_dict(self) -> dict:
        return {"rank_tol": self.rank_tol, "feas_tol": self.feas_tol, "bvp_tol": self.bvp_tol}


@dataclass(frozen=True)
class ExperimentConfig:
    omega_text: str
    omega: float
    A: tuple
    B: tuple
    H: tuple
    steps: int = DEFAULT_STEPS
    functional: tuple[str, ...] | None = None
    observation: ObservationConfig | None = None
    truth: tuple[str, ...] | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    base_dir: Path = field(default=Path("."), compare=False)

    @property
    def n(self) -> int:
        return len(self.A)

    @property
    def r(self) -> int:
        return len(self.B[0])

    @property
    def m(self) -> int:
        return len(self.H)

    def system(self) -> ObservationSystem:
        return ObservationSystem(TimeMatrix(self.A), TimeMatrix(self.B), TimeMatrix(self.H), self.omega)

    def grid(self) -> Grid:
        return Grid(self.omega, self.steps)

    def with_overrides(self, steps=None, rank_tol=None, feas_tol=None, seed=None) -> "ExperimentConfig":
        cfg = self
        if steps is not None:
            if steps < 2 or steps % 2:
                raise ConfigError("grid.steps", "must be an even integer >= 2")
            cfg = replace(cfg, steps=steps)
        tol = cfg.tolerances
        if rank_tol is not None:
            tol = replace(tol, rank_tol=_number(rank_tol, "tolerances.rank_tol", positive=True))
        if feas_tol is not None:
            tol = replace(tol, feas_tol=_number(feas_tol, "tolerances.feas_tol", positive=True))
        cfg = replace(cfg, tolerances=tol)
        if seed is not None:
            obs = cfg.observation
            if obs is None or obs.simulate is None:
                raise ConfigError("observation.simulate", "--seed needs a simulation block")
            cfg = replace(cfg, observation=replace(obs, simulate=replace(obs.simulate, seed=seed)))
        return cfg

    def to_dict(self) -> dict:
        out = {
            "system": {
                "omega": self.omega_text,
                "A": [list(r) for r in self.A],
                "B": [list(r) for r in self.B],
                "H": [list(r) for r in self.H],
            },
            "grid": {"steps": self.steps},
        }
        if self.functional is not None:
            out["functional"] = list(self.functional)
        if self.observation is not None:
            out["observation"] = self.observation.to_dict()
        if self.truth is not None:
            out["truth"] = list(self.truth)
        out["tolerances"] = self.tolerances.to_dict()
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d, base_dir: Path | str = ".") -> "ExperimentConfig":
        d = _block(d, "config", {"system", "grid", "functional", "observation", "truth", "tolerances"})
        if "system" not in d:
            raise ConfigError("system", "missing")
        s = _block(d["system"], "system", {"omega", "A", "B", "H", "n", "r", "m"})
        for key in ("omega", "A", "B", "H"):
            if key not in s:
                raise ConfigError(f"system.{key}", "missing")
        n = _optional_int(s, "n", "system")
        r = _optional_int(s, "r", "system")
        m = _optional_int(s, "m", "system")
        omega = _number(s["omega"], "system.omega", positive=True, constant_expr=True)
        omega_text = s["omega"] if isinstance(s["omega"], str) else format_number(omega)
        A = _matrix(s["A"], "system.A", n, n)
        n = len(A)
        if len(A[0]) != n:
            raise ConfigError("system.A", f"must be square, got {n}x{len(A[0])}")
        B = _matrix(s["B"], "system.B", n, r)
        H = _matrix(s["H"], "system.H", m, n)
        m = len(H)

        g = _block(d.get("grid", {}), "grid", {"steps"})
        steps = _number(g.get("steps", DEFAULT_STEPS), "grid.steps", integer=True, positive=True)
        if steps % 2:
            raise ConfigError("grid.steps", "must be even")

        functional = None if d.get("functional") is None else _vector(d["functional"], "functional", n)
        truth = None if d.get("truth") is None else _vector(d["truth"], "truth", n)

        observation = None
        if d.get("observation") is not None:
            observation = _observation(d["observation"], len(B[0]), m, n)

        t = _block(d.get("tolerances", {}), "tolerances", {"rank_tol", "feas_tol", "bvp_tol"})
        tolerances = Tolerances(
            **{k: _number(v, f"tolerances.{k}", positive=True) for k, v in t.items()}
        )
        return cls(omega_text, omega, A, B, H, steps, functional, observation, truth, tolerances, Path(base_dir))

    @classmethod
    def loads(cls, text: str, base_dir: Path | str = ".") -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        return cls.from_dict(data, base_dir)

    @classmethod
    def load(cls, path: Path | str) -> "ExperimentConfig":
        path = Path(path)
        return cls.loads(path.read_text(), path.parent)


def _observation(d, r: int, m: int, n: int) -> ObservationConfig:
    d = _block(d, "observation", {"expressions", "csv", "simulate"})
    expressions = None if d.get("expressions") is None else _vector(d["expressions"], "observation.expressions", m)
    path = d.get("csv")
    if path is not None and not isinstance(path, str):
        raise ConfigError("observation.csv", "expected a file path")
    simulate = None
    if d.get("simulate") is not None:
        p = "observation.simulate"
        s = _block(d["simulate"], p, {"input", "kernel_component", "initial_state", "noise", "seed"})
        if "input" not in s:
            raise ConfigError(f"{p}.input", "missing")
        kc = s.get("kernel_component")
        x0 = s.get("initial_state")
        if x0 is not None:
            if not isinstance(x0, list) or len(x0) != n:
                raise ConfigError(f"{p}.initial_state", f"expected a list of {n} numbers")
            x0 = tuple(_number(v, f"{p}.initial_state[{i}]") for i, v in enumerate(x0))
        simulate = SimulationConfig(
            input=_vector(s["input"], f"{p}.input", r),
            noise=_noise(s.get("noise"), f"{p}.noise", m),
            kernel_component=None if kc is None else _vector(kc, f"{p}.kernel_component", n),
            initial_state=x0,
            seed=_optional_int(s, "seed", p),
        )
    if expressions is None and path is None and simulate is None:
        raise ConfigError("observation", "needs one of expressions, csv or simulate")
    return ObservationConfig(expressions, path, simulate)


def _noise(d, path: str, m: int) -> NoiseConfig:
    if d is None:
        return NoiseConfig(shape=("0",) * m)
    d = _block(d, path, {"kind", "shape", "scale", "harmonics", "seed", "admissible"})
    kind = d.get("kind", "expression")
    if kind not in ("expression", "random"):
        raise ConfigError(f"{path}.kind", f"must be 'expression' or 'random', got {kind!r}")
    admissible = d.get("admissible", False)
    if not isinstance(admissible, bool):
        raise ConfigError(f"{path}.admissible", "expected true or false")
    return NoiseConfig(
        shape=_vector(d.get("shape", ["0"] * m), f"{path}.shape", m),
        kind=kind,
        scale=_number(d.get("scale", 1.0), f"{path}.scale"),
        harmonics=_number(d.get("harmonics", 8), f"{path}.harmonics", integer=True, positive=True),
        seed=_optional_int(d, "seed", path),
        admissible=admissible,
    )


# ---------------------------------------------------------------- sampled data


def read_observation_csv(path: Path | str, grid: Grid, m: int) -> np.ndarray:
    """Observation samples on the grid nodes from a CSV with header ``t,y1..ym``.

    Off-grid samples are linearly interpolated onto the nodes, with a warning.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError("observation.csv", f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    expected = ["t"] + [f"y{i + 1}" for i in range(m)]
    if header != expected:
        raise ConfigError("observation.csv", f"header must be {','.join(expected)}, got {','.join(header)}")
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    except ValueError as exc:
        raise ConfigError("observation.csv", f"non-numeric entry: {exc}") from None
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != m + 1:
        raise ConfigError("observation.csv", f"need at least two rows of {m + 1} values")
    t = data[:, 0]
    if np.any(np.diff(t) <= 0):
        raise ConfigError("observation.csv", "t must be strictly increasing")
    span = 1e-9 * grid.omega
    if t[0] > span or t[-1] < grid.omega - span:
        raise ConfigError("observation.csv", f"samples must cover [0, {grid.omega}]")
    if t.size == grid.steps + 1 and np.allclose(t, grid.nodes, rtol=0, atol=1e-12 * grid.omega):
        return data[:, 1:]
    log.warning("observation samples do not match the grid nodes; interpolating linearly")
    return TabulatedVector(t, data[:, 1:]).sample(grid.nodes)


def observation_source(cfg: ExperimentConfig, grid: Grid):
    """Expressions (as a TimeVector) or node samples for the configured observation, else None.

    A simulation block is not an observation source here: it is run by the caller.
    """
    obs = cfg.observation
    if obs is None:
        return None
    if obs.expressions is not None:
        return TimeVector(list(obs.expressions))
    if obs.csv is not None:
        return read_observation_csv(cfg.base_dir / obs.csv, grid, cfg.m)
    return None
