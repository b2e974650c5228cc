"""Mass-lumped P1 discretisation: operators, reconstruction and discrete norms.

The reconstruction is piecewise constant (one cell per vertex, one third of
the incident triangle areas), so the discrete L2 pairing is diagonal and
applying a scalar function vertex-wise commutes with reconstruction.  The
discrete gradient is the usual per-triangle constant P1 gradient, assembled
into one symmetric stiffness operator over all vertices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh

__all__ = [
    "GradientDiscretisation",
    "DiscreteField",
    "build_gd",
    "interpolate",
    "l2_norm",
    "h1_seminorm",
    "dual_norm",
    "estimate_poincare_constant",
    "x_norm",
]


@dataclass
class DiscreteField:
    """One value per vertex degree of freedom, bound to a discretisation."""

    values: np.ndarray
    gd: "GradientDiscretisation"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.gd.mesh.vertices),):
            raise ValueError("field length does not match the discretisation")


def _values(v) -> np.ndarray:
    return v.values if isinstance(v, DiscreteField) else np.asarray(v, dtype=float)


class GradientDiscretisation:
    """Lumped masses, P1 gradients and the assembled stiffness operator."""

    def __init__(self, mesh: Mesh, dirichlet: np.ndarray):
        self.mesh = mesh
        nv = len(mesh.vertices)
        areas = mesh.signed_areas()
        if np.any(areas <= 1e-14):
            raise ValueError("mesh contains a degenerate or misoriented triangle")
        self.tri_areas = areas

        p = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
        # gradient of the barycentric basis: rotate the opposite edge by 90deg
        opp = np.roll(p, -1, axis=1) - np.roll(p, -2, axis=1)  # p_{k+1} - p_{k+2}
        grads = np.stack([opp[..., 1], -opp[..., 0]], axis=-1)
        self.cell_gradients = grads / (2.0 * areas)[:, None, None]

        self.lumped_mass = np.zeros(nv)
        np.add.at(self.lumped_mass, mesh.triangles.ravel(), np.repeat(areas / 3.0, 3))

        local = np.einsum(
            "t,tid,tjd->tij", areas, self.cell_gradients, self.cell_gradients
        )
        rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
        cols = np.tile(mesh.triangles, (1, 3)).ravel()
        self.stiffness = sp.coo_matrix(
            (local.ravel(), (rows, cols)), shape=(nv, nv)
        ).tocsr()

        self.dirichlet = np.asarray(sorted(dirichlet), dtype=np.int64)
        mask = np.ones(nv, dtype=bool)
        mask[self.dirichlet] = False
        self.free_dofs = np.flatnonzero(mask)

        self._stiff_ff = None
        self._stiff_ff_lu = None
        self._poincare = None

    # -- cached pieces -----------------------------------------------------

    @property
    def stiffness_ff(self) -> sp.csr_matrix:
        if self._stiff_ff is None:
            self._stiff_ff = self.stiffness[self.free_dofs][:, self.free_dofs]
        return self._stiff_ff

    def stiffness_solver(self):
        """Cached factorisation of the stiffness restricted to free dofs."""
        if self._stiff_ff_lu is None:
            if len(self.free_dofs) == 0:
                raise ValueError("no free degrees of freedom")
            self._stiff_ff_lu = spla.splu(self.stiffness_ff.tocsc())
        return self._stiff_ff_lu

    @property
    def poincare_constant(self) -> float:
        if self._poincare is None:
            self._poincare = estimate_poincare_constant(self)
        return self._poincare


def build_gd(mesh: Mesh, dirichlet=None) -> GradientDiscretisation:
    """Assemble the discretisation; ``dirichlet`` defaults to all boundary vertices."""
    if dirichlet is None:
        dirichlet = mesh.boundary_vertices
    dirichlet = np.asarray(dirichlet, dtype=np.int64)
    if not np.isin(dirichlet, mesh.boundary_vertices).all():
        raise ValueError("dirichlet set must be a subset of the boundary vertices")
    return GradientDiscretisation(mesh, dirichlet)


def interpolate(gd: GradientDiscretisation, fn) -> DiscreteField:
    """Vertex interpolation of a pointwise function fn(x, y)."""
    x, y = gd.mesh.vertices[:, 0], gd.mesh.vertices[:, 1]
    try:
        vals = np.asarray(fn(x, y), dtype=float)
        if vals.shape != x.shape:
            raise TypeError
    except TypeError:
        vals = np.array([fn(px, py) for px, py in gd.mesh.vertices], dtype=float)
    return DiscreteField(vals, gd)


def l2_norm(gd: GradientDiscretisation, v) -> float:
    vals = _values(v)
    return float(np.sqrt(np.dot(gd.lumped_mass, vals * vals)))


def h1_seminorm(gd: GradientDiscretisation, v) -> float:
    vals = _values(v)
    return float(np.sqrt(max(vals @ (gd.stiffness @ vals), 0.0)))


def dual_norm(gd: GradientDiscretisation, v) -> float:
    """Negative-order norm of the reconstruction, via a discrete Poisson solve.

    Solves <grad G, grad psi> = <Pi v, Pi psi> for all free psi and returns
    ||grad G||, which equals the supremum of integral(v * Pi w) over discrete
    w with unit gradient norm.  Requires v to vanish on Dirichlet dofs.
    """
    vals = _values(v)
    if np.any(np.abs(vals[gd.dirichlet]) > 0):
        raise ValueError("dual norm requires the field to vanish on Dirichlet dofs")
    mv = (gd.lumped_mass * vals)[gd.free_dofs]
    g = gd.stiffness_solver().solve(mv)
    return float(np.sqrt(max(g @ mv, 0.0)))


def estimate_poincare_constant(gd: GradientDiscretisation, rtol: float = 1e-8) -> float:
    """Largest value of ||Pi v|| / ||grad v||, by power iteration.

    Power iteration on the (stiffness-self-adjoint) map v -> S^{-1} M v,
    with the Rayleigh quotient v'Mv / v'Sv, iterated to relative tolerance
    ``rtol`` on the eigenvalue.
    """
    if len(gd.free_dofs) == 0:
        raise ValueError("no free degrees of freedom")
    solver = gd.stiffness_solver()
    m = gd.lumped_mass[gd.free_dofs]
    x = np.ones(len(gd.free_dofs))
    lam = np.inf
    for _ in range(10_000):
        y = solver.solve(m * x)
        num = float(y @ (m * y))
        den = float(y @ (gd.stiffness_ff @ y))
        new_lam = num / den
        y /= np.sqrt(num)
        if np.isfinite(lam) and abs(new_lam - lam) <= rtol * new_lam:
            return float(np.sqrt(new_lam))
        lam, x = new_lam, y
    return float(np.sqrt(lam))


def x_norm(gd: GradientDiscretisation, v, L: float, dt: float) -> float:
    """Weighted norm sqrt((L + dt/C^2) ||Pi v||^2 + dt ||grad v||^2)."""
    c = gd.poincare_constant
    a = l2_norm(gd, v)
    b = h1_seminorm(gd, v)
    return float(np.sqrt((L + dt / c**2) * a * a + dt * b * b))
