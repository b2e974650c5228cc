"""Per-time-step nonlinear iterations: Newton and the fixed-operator schemes.

Four strategies solve the same implicit step.  Newton rebuilds and refactorises
its operator every iteration; the linearised (L), regularised (R) and
inverse-regularised (RGS) iterations keep one fixed operator per
(mesh, dt, L) configuration, factorised exactly once and reused across
iterations, time steps and realisations.  All strategies stop on the residual
of the original nonlinear step system, never on the iterate increment.

Dirichlet conditions are imposed by elimination: the unknown keeps its
boundary entries fixed, and the assembled operator's boundary columns are
moved to the right-hand side.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretisation import GradientDiscretisation
from .nonlinearity import Nonlinearity, RegularisedNonlinearity

__all__ = [
    "SolveCounters",
    "LinearBackend",
    "SolverConfig",
    "StepResult",
    "residual",
    "rgs_residual",
    "newton_solve",
    "l_scheme_solve",
    "r_scheme_solve",
    "rgs_inverse_solve",
    "contraction_alpha",
    "STRATEGIES",
]

STRATEGIES = ("newton", "l_scheme", "r_scheme", "rgs_inverse")


class SolveCounters:
    """Thread-safe assembly/factorisation/solve counters for one run."""

    def __init__(self):
        self._lock = threading.Lock()
        self.assembly_count = 0
        self.factorisation_count = 0
        self.solve_count = 0

    def record_assembly(self):
        with self._lock:
            self.assembly_count += 1

    def record_factorisation(self):
        with self._lock:
            self.factorisation_count += 1

    def record_solve(self):
        with self._lock:
            self.solve_count += 1


class LinearBackend:
    """A factorised operator on the free dofs, with Dirichlet lifting.

    The factorisation happens once, at construction; `solve` only performs
    triangular substitutions and is safe to call concurrently.
    """

    def __init__(
        self,
        operator: sp.spmatrix,
        gd: GradientDiscretisation,
        counters: SolveCounters,
    ):
        free, fixed = gd.free_dofs, gd.dirichlet
        op = operator.tocsr()
        self._ff = op[free][:, free].tocsc()
        self._fb = op[free][:, fixed].tocsr()
        counters.record_assembly()
        self._lu = spla.splu(self._ff)
        counters.record_factorisation()
        self.counters = counters

    def solve(self, rhs_free: np.ndarray, boundary_values=None) -> np.ndarray:
        b = rhs_free if boundary_values is None else rhs_free - self._fb @ boundary_values
        self.counters.record_solve()
        return self._lu.solve(b)


def fixed_operator(
    gd: GradientDiscretisation,
    dt: float,
    L: float,
    counters: SolveCounters,
    kind: str = "mass_plus_stiffness",
) -> LinearBackend:
    """The shared operator of the fixed-point schemes.

    ``mass_plus_stiffness``: M + dt*L*S  (L and R iterations, unknown u)
    ``scaled_mass_plus_stiffness``: L*M + dt*S  (RGS iteration, unknown v)
    """
    m = sp.diags(gd.lumped_mass)
    if kind == "mass_plus_stiffness":
        op = m + dt * L * gd.stiffness
    elif kind == "scaled_mass_plus_stiffness":
        op = L * m + dt * gd.stiffness
    else:
        raise ValueError(f"unknown operator kind {kind!r}")
    return LinearBackend(op, gd, counters)


@dataclass
class SolverConfig:
    strategy: str
    L: float
    tolerance: float
    epsilon: float = 0.0
    max_iterations: int = 1000

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.tolerance <= 0 or self.max_iterations < 1:
            raise ValueError("tolerance and max_iterations must be positive")

    def validate_against(self, zeta: Nonlinearity):
        """Check the admissibility bound of the chosen strategy."""
        if self.strategy in ("l_scheme", "r_scheme") and self.L < zeta.lipschitz / 2:
            raise ValueError("fixed-point schemes need L >= lipschitz / 2")
        if self.strategy == "r_scheme" and not self.epsilon > 0:
            raise ValueError("r_scheme needs a positive regularisation parameter")
        if self.strategy == "rgs_inverse":
            if not self.epsilon > 0:
                raise ValueError("rgs_inverse needs a positive regularisation parameter")
            if self.L < 1.0 / self.epsilon:
                raise ValueError("rgs_inverse needs L >= 1 / epsilon")


@dataclass
class StepResult:
    solution: np.ndarray
    iterations: int
    residual_history: list[float]
    converged: bool
    iterates: Optional[list[np.ndarray]] = field(default=None, repr=False)


def residual(gd, zeta, u, rhs_free, dt) -> float:
    """Defect norm of the implicit step system M u + dt S zeta(u) = rhs.

    The algebraic defect against every free nodal basis function, measured in
    the lumped L2 norm on the free dofs.
    """
    d = gd.lumped_mass * u + dt * (gd.stiffness @ zeta.eval(u))
    dfree = d[gd.free_dofs] - rhs_free
    return float(np.sqrt(np.dot(gd.lumped_mass[gd.free_dofs], dfree * dfree)))


def rgs_residual(gd, zeta_eps: RegularisedNonlinearity, v, rhs_free, dt) -> float:
    """Defect norm of the inverse-form step system M g(v) + dt S v = rhs."""
    d = gd.lumped_mass * zeta_eps.inverse.eval(v) + dt * (gd.stiffness @ v)
    dfree = d[gd.free_dofs] - rhs_free
    return float(np.sqrt(np.dot(gd.lumped_mass[gd.free_dofs], dfree * dfree)))


def _finish(u, it, history, tol, iterates):
    return StepResult(u, it, history, history[-1] <= tol, iterates)


def newton_solve(
    gd,
    zeta: Nonlinearity,
    u_prev: np.ndarray,
    rhs_free: np.ndarray,
    dt: float,
    config: SolverConfig,
    counters: Optional[SolveCounters] = None,
    initial_guess: Optional[np.ndarray] = None,
    keep_iterates: bool = False,
) -> StepResult:
    """Newton iteration; assembles and factorises anew every iteration.

    The update solves [M + dt S diag(zeta'(u))] du = -(defect) on the free
    dofs (du vanishes on Dirichlet dofs).  Because the derivative enters
    vertex-wise, the operator is the exact Jacobian of the nodal system, which
    for a piecewise-linear law lands on the solution as soon as the iterate's
    branch pattern matches the solution's.
    """
    counters = counters or SolveCounters()
    mass = sp.diags(gd.lumped_mass)
    free = gd.free_dofs
    u = np.array(u_prev if initial_guess is None else initial_guess, dtype=float)
    res = residual(gd, zeta, u, rhs_free, dt)
    history = [res]
    iterates = [u.copy()] if keep_iterates else None
    it = 0
    while res > config.tolerance and it < config.max_iterations:
        jac = mass + dt * (gd.stiffness @ sp.diags(zeta.derivative(u)))
        backend = LinearBackend(jac, gd, counters)
        defect = (gd.lumped_mass * u + dt * (gd.stiffness @ zeta.eval(u)))[free] - rhs_free
        u[free] += backend.solve(-defect)
        it += 1
        res = residual(gd, zeta, u, rhs_free, dt)
        history.append(res)
        if keep_iterates:
            iterates.append(u.copy())
    return _finish(u, it, history, config.tolerance, iterates)


def l_scheme_solve(
    gd,
    zeta: Nonlinearity,
    u_prev: np.ndarray,
    rhs_free: np.ndarray,
    dt: float,
    config: SolverConfig,
    backend: LinearBackend,
    initial_guess: Optional[np.ndarray] = None,
    keep_iterates: bool = False,
) -> StepResult:
    """Fixed-operator iteration with the stiffness linearised by a constant L.

    Each pass solves [M + dt L S] u_new = dt (L S u - S zeta(u)) + rhs against
    the cached factorisation; the operator never changes.
    """
    free, fixed = gd.free_dofs, gd.dirichlet
    u = np.array(u_prev if initial_guess is None else initial_guess, dtype=float)
    g = u[fixed]
    res = residual(gd, zeta, u, rhs_free, dt)
    history = [res]
    iterates = [u.copy()] if keep_iterates else None
    it = 0
    while res > config.tolerance and it < config.max_iterations:
        correction = dt * (config.L * (gd.stiffness @ u) - gd.stiffness @ zeta.eval(u))
        u[free] = backend.solve(correction[free] + rhs_free, boundary_values=g)
        it += 1
        res = residual(gd, zeta, u, rhs_free, dt)
        history.append(res)
        if keep_iterates:
            iterates.append(u.copy())
    return _finish(u, it, history, config.tolerance, iterates)


def r_scheme_solve(
    gd,
    zeta_eps: RegularisedNonlinearity,
    u_prev: np.ndarray,
    rhs_free: np.ndarray,
    dt: float,
    config: SolverConfig,
    backend: LinearBackend,
    initial_guess: Optional[np.ndarray] = None,
    keep_iterates: bool = False,
) -> StepResult:
    """The L iteration applied to the regularised law (same fixed operator)."""
    return l_scheme_solve(
        gd, zeta_eps, u_prev, rhs_free, dt, config, backend,
        initial_guess=initial_guess, keep_iterates=keep_iterates,
    )


def rgs_inverse_solve(
    gd,
    zeta_eps: RegularisedNonlinearity,
    v_prev: np.ndarray,
    rhs_free: np.ndarray,
    dt: float,
    config: SolverConfig,
    backend: LinearBackend,
    initial_guess: Optional[np.ndarray] = None,
    keep_iterates: bool = False,
) -> StepResult:
    """Contractive iteration in the regular variable v = zeta_eps(u).

    Each pass solves [L M + dt S] v_new = M (L v - inv(v)) + rhs, where inv is
    the inverse regularised law; rhs encodes the previous step in the same
    inverse form plus the noise term.
    """
    free, fixed = gd.free_dofs, gd.dirichlet
    inv = zeta_eps.inverse
    v = np.array(v_prev if initial_guess is None else initial_guess, dtype=float)
    g = v[fixed]
    res = rgs_residual(gd, zeta_eps, v, rhs_free, dt)
    history = [res]
    iterates = [v.copy()] if keep_iterates else None
    it = 0
    while res > config.tolerance and it < config.max_iterations:
        correction = gd.lumped_mass * (config.L * v - inv.eval(v))
        v[free] = backend.solve(correction[free] + rhs_free, boundary_values=g)
        it += 1
        res = rgs_residual(gd, zeta_eps, v, rhs_free, dt)
        history.append(res)
        if keep_iterates:
            iterates.append(v.copy())
    return _finish(v, it, history, config.tolerance, iterates)


def contraction_alpha(L: float, L_zeta: float, dt: float, C_D: float) -> float:
    """Per-iteration error reduction factor of the inverse-form iteration."""
    if L <= 0 or L_zeta <= 0 or C_D <= 0 or dt < 0:
        raise ValueError("L, L_zeta and C_D must be positive, dt nonnegative")
    if L < 1.0 / L_zeta:
        raise ValueError("need L >= 1 / L_zeta for a nonnegative numerator")
    return float((L - 1.0 / L_zeta) / np.sqrt(L * (L + dt / C_D**2)))
