"""Flat key=value run configuration files.

Blank lines and '#' comments are ignored.  Unknown keys are errors so that a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .timestepper import NoiseSettings, RunSpec, SolverSettings, TimeGrid

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config"]


class ConfigError(ValueError):
    pass


_KEYS = {
    "mesh.level": int,
    "time.steps": int,
    "time.T": float,
    "solver.strategy": str,
    "solver.L": float,
    "solver.C_tol": float,
    "solver.C_eps": float,
    "solver.max_iterations": int,
    "solver.tolerance": float,
    "solver.epsilon": float,
    "noise.mode": str,
    "noise.intensity": float,
    "noise.rank": int,
    "noise.decay_exponent": float,
    "problem.kind": str,
    "run.realisations": int,
    "run.seed": int,
    "run.lean": int,
    "output.dir": str,
    "output.audit": int,
}


@dataclass
class RunConfig:
    spec: RunSpec
    output_dir: Optional[str]
    audit: bool


def parse_config(text: str) -> RunConfig:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _KEYS[key](val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {val!r}") from exc

    mode = values.get("noise.mode", "zero")
    default_problem = "exact_dirichlet" if mode == "zero" else "stochastic_homogeneous"
    try:
        spec = RunSpec(
            mesh_level=values.get("mesh.level", 2),
            grid=TimeGrid(values.get("time.T", 1.0), values.get("time.steps", 10)),
            solver=SolverSettings(
                strategy=values.get("solver.strategy", "newton"),
                L=values.get("solver.L"),
                C_tol=values.get("solver.C_tol", 100.0),
                C_eps=values.get("solver.C_eps", 1.0),
                max_iterations=values.get("solver.max_iterations", 1000),
                tolerance=values.get("solver.tolerance"),
                epsilon=values.get("solver.epsilon"),
            ),
            noise=NoiseSettings(
                mode=mode,
                intensity=values.get("noise.intensity", 1.0),
                rank=values.get("noise.rank", 9),
                decay_exponent=values.get("noise.decay_exponent", 3.0),
            ),
            problem=values.get("problem.kind", default_problem),
            realisations=values.get("run.realisations", 1),
            seed=values.get("run.seed", 0),
            lean=bool(values.get("run.lean", 0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(spec, values.get("output.dir"), bool(values.get("output.audit", 0)))


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text)
