"""Implicit Euler time loop, single realisations and Monte Carlo ensembles.

The right-hand side of step n carries the lumped previous state plus the noise
field evaluated at the previous state (noise explicit, drift implicit).  The
initial guess of every step is the previous step's converged solution.  For
the fixed-operator strategies one backend is factorised before the loop and
shared across all steps and realisations of a run.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from . import exact
from .discretisation import DiscreteField, build_gd, interpolate
from .mesh import generate_mesh
from .noise import NoiseOperator, apply_noise, laplace_mode_model, mc_expectation, sample_increment
from .nonlinearity import Nonlinearity, regularise, stefan_zeta
from .solvers import (
    SolveCounters,
    SolverConfig,
    StepResult,
    fixed_operator,
    l_scheme_solve,
    newton_solve,
    r_scheme_solve,
    rgs_inverse_solve,
)

__all__ = [
    "TimeGrid",
    "SolverSettings",
    "NoiseSettings",
    "RunSpec",
    "Trajectory",
    "SolverReport",
    "EnsembleResult",
    "tolerance_policy",
    "run_gs",
    "run_rgs",
    "run_ensemble",
    "RunContext",
    "worker_count",
]

PROBLEMS = ("exact_dirichlet", "stochastic_homogeneous")


@dataclass(frozen=True)
class TimeGrid:
    t_final: float
    steps: int

    def __post_init__(self):
        if self.t_final <= 0 or self.steps < 1:
            raise ValueError("need t_final > 0 and steps >= 1")

    @property
    def dt(self) -> float:
        return self.t_final / self.steps


@dataclass
class SolverSettings:
    strategy: str = "newton"
    L: Optional[float] = None  # default chosen per strategy
    C_tol: float = 100.0
    C_eps: float = 1.0
    max_iterations: int = 1000
    tolerance: Optional[float] = None  # overrides the policy when set
    epsilon: Optional[float] = None


@dataclass
class NoiseSettings:
    mode: str = "zero"
    intensity: float = 1.0
    rank: int = 9
    decay_exponent: float = 3.0


@dataclass
class RunSpec:
    mesh_level: int = 2
    grid: TimeGrid = dc_field(default_factory=lambda: TimeGrid(1.0, 10))
    solver: SolverSettings = dc_field(default_factory=SolverSettings)
    noise: NoiseSettings = dc_field(default_factory=NoiseSettings)
    problem: str = "exact_dirichlet"
    realisations: int = 1
    seed: int = 0
    lean: bool = False
    zeta: Optional[Nonlinearity] = None  # defaults to the Stefan law
    initial: Optional[Callable] = None  # overrides the problem's initial datum

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.realisations < 1:
            raise ValueError("need at least one realisation")


@dataclass
class Trajectory:
    fields: list[DiscreteField]  # N+1 snapshots, or [initial, final] in lean mode
    step_results: list[StepResult]
    lean: bool
    step_wall_ns: list[int] = dc_field(default_factory=list)
    v_fields: Optional[list[DiscreteField]] = None  # inverse-form variable, RGS only

    @property
    def initial(self) -> DiscreteField:
        return self.fields[0]

    @property
    def final(self) -> DiscreteField:
        return self.fields[-1]

    @property
    def flagged_steps(self) -> int:
        return sum(1 for r in self.step_results if not r.converged)

    @property
    def total_iterations(self) -> int:
        return sum(r.iterations for r in self.step_results)


@dataclass
class SolverReport:
    """Per-step iteration metadata plus the run's operator counters."""

    strategy: str
    rows: list[tuple]  # (step, iterations, final_residual, assembly, factorisation, wall_ns)
    counters: SolveCounters

    CSV_HEADER = "step,iterations,final_residual,assembly_count,factorisation_count,wall_ns"

    @property
    def total_iterations(self) -> int:
        return sum(r[1] for r in self.rows)

    @property
    def wall_ns(self) -> int:
        return sum(r[5] for r in self.rows)

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.CSV_HEADER + "\n")
            for row in self.rows:
                fh.write(
                    ",".join(
                        repr(float(c)) if isinstance(c, float) else str(c) for c in row
                    )
                    + "\n"
                )


def tolerance_policy(dt: float, h: float, C_tol: float, C_eps: float) -> tuple[float, float]:
    """(tolerance, epsilon) = (min(dt^2, h^2)/C_tol, min(dt, h)/C_eps)."""
    if min(dt, h, C_tol, C_eps) <= 0:
        raise ValueError("all policy inputs must be positive")
    return min(dt * dt, h * h) / C_tol, min(dt, h) / C_eps


def worker_count() -> int:
    """Realisation workers; capped by the STEFAN_THREADS environment variable."""
    raw = os.environ.get("STEFAN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


class RunContext:
    """Everything shared across the realisations of one RunSpec.

    Immutable after construction apart from the counters, so realisations may
    execute concurrently against it.
    """

    def __init__(self, spec: RunSpec, discretisation=None):
        spec_zeta = spec.zeta if spec.zeta is not None else stefan_zeta()
        self.spec = spec
        if discretisation is None:
            self.mesh = generate_mesh(spec.mesh_level)
            self.gd = build_gd(self.mesh)
        else:
            self.gd = discretisation
            self.mesh = discretisation.mesh
        self.zeta = spec_zeta
        self.dt = spec.grid.dt

        tol, eps = tolerance_policy(
            self.dt, self.mesh.size_h, spec.solver.C_tol, spec.solver.C_eps
        )
        self.tolerance = spec.solver.tolerance if spec.solver.tolerance is not None else tol
        self.epsilon = spec.solver.epsilon if spec.solver.epsilon is not None else eps

        strategy = spec.solver.strategy
        needs_eps = strategy in ("r_scheme", "rgs_inverse")
        self.zeta_eps = regularise(self.zeta, self.epsilon) if needs_eps else None

        if spec.solver.L is not None:
            L = spec.solver.L
        elif strategy == "rgs_inverse":
            L = 1.0 / self.epsilon
        else:
            L = self.zeta.lipschitz
        self.config = SolverConfig(
            strategy=strategy,
            L=L,
            tolerance=self.tolerance,
            epsilon=self.epsilon if needs_eps else 0.0,
            max_iterations=spec.solver.max_iterations,
        )
        if strategy != "newton":
            self.config.validate_against(self.zeta)

        self.counters = SolveCounters()
        if strategy in ("l_scheme", "r_scheme"):
            self.backend = fixed_operator(
                self.gd, self.dt, L, self.counters, "mass_plus_stiffness"
            )
        elif strategy == "rgs_inverse":
            self.backend = fixed_operator(
                self.gd, self.dt, L, self.counters, "scaled_mass_plus_stiffness"
            )
        else:
            self.backend = None

        self.model = laplace_mode_model(
            self.gd, spec.noise.rank, spec.noise.decay_exponent
        )
        noise_zeta = self.zeta_eps if strategy == "r_scheme" else self.zeta
        self.op = NoiseOperator(
            intensity=spec.noise.intensity,
            mode=spec.noise.mode,
            # the inverse-form loop feeds the regular variable directly
            zeta=None if strategy == "rgs_inverse" else noise_zeta.eval,
        )

        # stochastic runs reuse the deterministic initial datum by default
        self.initial = spec.initial if spec.initial is not None else exact.initial_u

    def boundary_values(self, t: float) -> np.ndarray:
        verts = self.mesh.vertices[self.gd.dirichlet]
        if self.spec.problem == "exact_dirichlet":
            return np.asarray(exact.exact_u(verts[:, 0], verts[:, 1], t), dtype=float)
        return np.zeros(len(verts))

    # -- one realisation ----------------------------------------------------

    def run_realisation(self, realisation: int) -> Trajectory:
        if self.config.strategy == "rgs_inverse":
            return self._run_inverse_form(realisation)
        return self._run_u_form(realisation)

    def _noise_values(self, state: np.ndarray, step: int, realisation: int) -> np.ndarray:
        inc = sample_increment(self.model, self.spec.seed, realisation, step, self.dt)
        return apply_noise(self.op, self.model, state, inc).values

    def _run_u_form(self, realisation: int) -> Trajectory:
        gd, zeta, dt = self.gd, self.zeta, self.dt
        cfg = self.config
        keep_all = not self.spec.lean

        u = interpolate(gd, self.initial).values
        u[gd.dirichlet] = self.boundary_values(0.0)
        snapshots = [u.copy()]
        step_results: list[StepResult] = []
        step_wall: list[int] = []

        for n in range(1, self.spec.grid.steps + 1):
            tic = time.perf_counter_ns()
            noise = self._noise_values(u, n, realisation)
            rhs_free = (gd.lumped_mass * (u + noise))[gd.free_dofs]
            guess = u.copy()
            guess[gd.dirichlet] = self.boundary_values(n * dt)
            if cfg.strategy == "newton":
                result = newton_solve(gd, zeta, guess, rhs_free, dt, cfg, self.counters)
            elif cfg.strategy == "l_scheme":
                result = l_scheme_solve(gd, zeta, guess, rhs_free, dt, cfg, self.backend)
            else:
                result = r_scheme_solve(
                    gd, self.zeta_eps, guess, rhs_free, dt, cfg, self.backend
                )
            u = result.solution
            step_wall.append(time.perf_counter_ns() - tic)
            if keep_all:
                snapshots.append(u.copy())
            step_results.append(result)
        if not keep_all:
            snapshots.append(u.copy())
        fields = [DiscreteField(s, gd) for s in snapshots]
        return Trajectory(fields, step_results, self.spec.lean, step_wall)

    def _run_inverse_form(self, realisation: int) -> Trajectory:
        gd, dt, cfg = self.gd, self.dt, self.config
        zeps = self.zeta_eps
        inv = zeps.inverse
        keep_all = not self.spec.lean

        u0 = interpolate(gd, self.initial).values
        u0[gd.dirichlet] = self.boundary_values(0.0)
        v = zeps.eval(u0)
        v_snapshots = [v.copy()]
        step_results: list[StepResult] = []
        step_wall: list[int] = []

        for n in range(1, self.spec.grid.steps + 1):
            tic = time.perf_counter_ns()
            noise = self._noise_values(v, n, realisation)
            rhs_free = (gd.lumped_mass * (inv.eval(v) + noise))[gd.free_dofs]
            guess = v.copy()
            guess[gd.dirichlet] = zeps.eval(self.boundary_values(n * dt))
            result = rgs_inverse_solve(gd, zeps, guess, rhs_free, dt, cfg, self.backend)
            v = result.solution
            step_wall.append(time.perf_counter_ns() - tic)
            if keep_all:
                v_snapshots.append(v.copy())
            step_results.append(result)
        if not keep_all:
            v_snapshots.append(v.copy())
        v_fields = [DiscreteField(s, gd) for s in v_snapshots]
        u_fields = [DiscreteField(inv.eval(s), gd) for s in v_snapshots]
        return Trajectory(u_fields, step_results, self.spec.lean, step_wall, v_fields=v_fields)


def _report_from(strategy: str, trajectory: Trajectory, counters: SolveCounters) -> SolverReport:
    rows = []
    for n, (res, w) in enumerate(
        zip(trajectory.step_results, trajectory.step_wall_ns), start=1
    ):
        rows.append(
            (n, res.iterations, res.residual_history[-1],
             counters.assembly_count, counters.factorisation_count, w)
        )
    return SolverReport(strategy, rows, counters)


@dataclass
class EnsembleResult:
    mean_final: DiscreteField
    mean_fields: Optional[list[DiscreteField]]  # per-snapshot means unless lean
    trajectories: list[Trajectory]
    reports: list[SolverReport]
    counters: SolveCounters
    wall_ns: int


def run_gs(spec: RunSpec, realisation: int = 0, context: Optional[RunContext] = None) -> Trajectory:
    """One realisation of the direct (u-form) scheme."""
    if spec.solver.strategy == "rgs_inverse":
        raise ValueError("run_gs covers newton/l_scheme/r_scheme; use run_rgs")
    ctx = context or RunContext(spec)
    return ctx.run_realisation(realisation)


def run_rgs(spec: RunSpec, realisation: int = 0, context: Optional[RunContext] = None) -> Trajectory:
    """One realisation of the inverse-form scheme (returns u and v snapshots)."""
    if spec.solver.strategy != "rgs_inverse":
        raise ValueError("run_rgs requires the rgs_inverse strategy")
    ctx = context or RunContext(spec)
    return ctx.run_realisation(realisation)


def run_ensemble(spec: RunSpec, context: Optional[RunContext] = None) -> EnsembleResult:
    """All realisations of a spec, sharing one context (and one factorisation).

    Realisations may execute concurrently (STEFAN_THREADS > 1); the mean is a
    fixed-order reduction over realisation indices so the result does not
    depend on scheduling.
    """
    ctx = context or RunContext(spec)
    indices = list(range(spec.realisations))
    workers = worker_count()
    tic = time.perf_counter_ns()
    if workers > 1 and len(indices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(ctx.run_realisation, indices))
    else:
        trajectories = [ctx.run_realisation(r) for r in indices]
    wall = time.perf_counter_ns() - tic

    mean_final = mc_expectation([t.final for t in trajectories])
    mean_fields = None
    if not spec.lean:
        mean_fields = [
            mc_expectation([t.fields[k] for t in trajectories])
            for k in range(len(trajectories[0].fields))
        ]
    reports = [
        _report_from(spec.solver.strategy, t, ctx.counters) for t in trajectories
    ]
    return EnsembleResult(mean_final, mean_fields, trajectories, reports, ctx.counters, wall)
