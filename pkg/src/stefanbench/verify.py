"""Runtime property suite behind the `verify` CLI subcommand.

Each property returns (name, passed, detail).  The suite covers the slope
inequalities behind the fixed-point convergence proofs, the measured
contraction rate of the inverse-form iteration, the monotone decay of
linearised iterate errors, and the factorise-once counter contracts.
"""

from __future__ import annotations

import numpy as np

from .discretisation import build_gd, dual_norm, interpolate, l2_norm, x_norm
from .mesh import FAMILY_TABLE, generate_mesh
from .noise import laplace_mode_model, sample_increment
from .nonlinearity import check_slope_bounds, regularise, stefan_zeta
from .solvers import SolverConfig, contraction_alpha, l_scheme_solve, rgs_inverse_solve
from .timestepper import NoiseSettings, RunContext, RunSpec, SolverSettings, TimeGrid, run_ensemble

__all__ = ["run_suite", "MODULES"]

MODULES = ("nonlinearity", "mesh", "discretisation", "noise", "solvers")


def _nonlinearity_props(seed: int):
    zeta = stefan_zeta()
    rng = np.random.default_rng(seed)
    results = []

    ls = zeta.lipschitz / 2.0 + rng.uniform(0.0, 2.0, 100_000)
    a = rng.uniform(-5, 5, 100_000)
    b = rng.uniform(-5, 5, 100_000)
    lhs = np.abs(ls * (a - b) - (zeta.eval(a) - zeta.eval(b)))
    ok = bool(np.all(lhs <= ls * np.abs(a - b) * (1 + 1e-12) + 1e-15))
    results.append(("slope bound, base law, random L >= L/2", ok, "100000 triples"))

    for eps in (0.1, 0.01):
        zeps = regularise(zeta, eps)
        holds, worst = check_slope_bounds(
            zeps.inverse.eval, 1.0 / eps,
            slope_min=1.0 / zeta.lipschitz, samples=100_000, seed=seed + 1,
        )
        results.append(
            (f"slope gap bound, inverse law, eps={eps}", holds, f"worst pair {worst}")
        )

    sup = max(
        abs(regularise(zeta, 0.05).eval(u) - zeta.eval(u))
        for u in np.linspace(-5, 5, 2001)
    )
    results.append(
        ("regularisation within eps of base on [-5,5]", sup <= 0.05 + 1e-12, f"sup={sup:.3g}")
    )
    return results


def _mesh_props(seed: int):
    results = []
    for level in (1, 2, 3):
        mesh = generate_mesh(level)
        cells, edges, verts = mesh.counts()
        _, ec, ee, ev = FAMILY_TABLE[level]
        ok = (cells, edges, verts) == (ec, ee, ev)
        euler = verts - edges + cells == 1
        area = abs(mesh.signed_areas().sum() - 1.0) < 1e-12
        results.append(
            (f"level {level} counts/Euler/area", ok and euler and area,
             f"{cells} {edges} {verts}")
        )
    return results


def _discretisation_props(seed: int):
    gd = build_gd(generate_mesh(2))
    rng = np.random.default_rng(seed)
    results = []

    sym = (gd.stiffness - gd.stiffness.T).nnz == 0 or np.max(
        np.abs((gd.stiffness - gd.stiffness.T).data)
    ) < 1e-13
    rowsums = np.max(np.abs(gd.stiffness @ np.ones(len(gd.mesh.vertices)))) < 1e-12
    results.append(("stiffness symmetric, zero row sums", bool(sym and rowsums), ""))

    mass_ok = abs(gd.lumped_mass.sum() - 1.0) < 1e-12
    results.append(("lumped masses partition the square", mass_ok, ""))

    cd = gd.poincare_constant
    ok = True
    for _ in range(100):
        v = np.zeros(len(gd.mesh.vertices))
        v[gd.free_dofs] = rng.standard_normal(len(gd.free_dofs))
        lhs = dual_norm(gd, v)
        if lhs > cd * l2_norm(gd, v) * (1 + 1e-10):
            ok = False
    results.append(("dual norm <= C_D * L2 norm on random fields", ok, f"C_D={cd:.4f}"))
    return results


def _noise_props(seed: int):
    gd = build_gd(generate_mesh(1))
    model = laplace_mode_model(gd, 9)
    results = []

    a = sample_increment(model, seed, 3, 5, 0.01).coefficients
    b = sample_increment(model, seed, 3, 5, 0.01).coefficients
    results.append(("increment streams reproducible", bool(np.array_equal(a, b)), ""))

    draws = np.array(
        [sample_increment(model, seed, r, 1, 0.01).coefficients[0] for r in range(100_000)]
    )
    target = model.sqrt_eigenvalues[0] ** 2 * 0.01
    rel = abs(draws.var() - target) / target
    results.append(("coefficient variance within 3%", rel < 0.03, f"rel dev {rel:.4f}"))

    c1 = np.array(
        [sample_increment(model, seed, 2 * r, 2, 0.01).coefficients[0] for r in range(10_000)]
    )
    c2 = np.array(
        [sample_increment(model, seed, 2 * r + 1, 2, 0.01).coefficients[0] for r in range(10_000)]
    )
    corr = abs(np.corrcoef(c1, c2)[0, 1])
    results.append(("cross-realisation correlation < 0.05", corr < 0.05, f"corr {corr:.4f}"))
    return results


def _solver_props(seed: int):
    zeta = stefan_zeta()
    results = []

    # factorise-once counters over a stochastic ensemble
    def counters_for(strategy):
        spec = RunSpec(
            mesh_level=2, grid=TimeGrid(0.1, 10),
            solver=SolverSettings(strategy=strategy, C_tol=100.0),
            noise=NoiseSettings(mode="multiplicative_zeta", intensity=0.5),
            problem="stochastic_homogeneous", realisations=5, lean=True, seed=seed,
        )
        res = run_ensemble(spec)
        iters = sum(t.total_iterations for t in res.trajectories)
        return res.counters, iters

    for strategy in ("l_scheme", "r_scheme"):
        c, _ = counters_for(strategy)
        ok = c.factorisation_count == 1 and c.assembly_count == 1
        results.append(
            (f"{strategy}: one assembly, one factorisation per run", ok,
             f"assembly={c.assembly_count} factorisation={c.factorisation_count}")
        )
    c, iters = counters_for("newton")
    results.append(
        ("newton: one factorisation per iteration", c.factorisation_count == iters,
         f"factorisations={c.factorisation_count} iterations={iters}")
    )

    # measured contraction of the inverse-form iteration on the coarsest mesh
    spec = RunSpec(
        mesh_level=1, grid=TimeGrid(1.0, 10),
        solver=SolverSettings(strategy="rgs_inverse", epsilon=0.1, L=10.0),
    )
    ctx = RunContext(spec)
    gd, zeps = ctx.gd, ctx.zeta_eps
    alpha = contraction_alpha(10.0, zeta.lipschitz, 0.1, gd.poincare_constant)
    tight = SolverConfig("rgs_inverse", 10.0, 1e-13, epsilon=0.1, max_iterations=5000)
    u = interpolate(gd, ctx.initial).values
    u[gd.dirichlet] = ctx.boundary_values(0.0)
    v = zeps.eval(u)
    worst = 0.0
    for n in range(1, 11):
        rhs = (gd.lumped_mass * zeps.inverse.eval(v))[gd.free_dofs]
        guess = v.copy()
        guess[gd.dirichlet] = zeps.eval(ctx.boundary_values(n * 0.1))
        replay = rgs_inverse_solve(gd, zeps, guess, rhs, 0.1, tight, ctx.backend,
                                   keep_iterates=True)
        star = replay.solution
        errs = [x_norm(gd, it - star, 10.0, 0.1) for it in replay.iterates]
        for after, before in zip(errs[1:], errs[:-1]):
            if before > 1e-11:
                worst = max(worst, after / before)
        v = star
    results.append(
        ("inverse-form contraction rate <= alpha + 0.02", worst <= alpha + 0.02,
         f"measured {worst:.4f} vs alpha {alpha:.4f}")
    )

    # monotone L2 iterate errors of the linearised scheme
    spec = RunSpec(mesh_level=1, grid=TimeGrid(1.0, 10),
                   solver=SolverSettings(strategy="l_scheme"))
    ctx = RunContext(spec)
    gd = ctx.gd
    tight = SolverConfig("l_scheme", zeta.lipschitz, 1e-13, max_iterations=5000)
    u = interpolate(gd, ctx.initial).values
    u[gd.dirichlet] = ctx.boundary_values(0.0)
    monotone = True
    for n in range(1, 11):
        rhs = (gd.lumped_mass * u)[gd.free_dofs]
        guess = u.copy()
        guess[gd.dirichlet] = ctx.boundary_values(n * 0.1)
        replay = l_scheme_solve(gd, zeta, guess, rhs, 0.1, tight, ctx.backend,
                                keep_iterates=True)
        star = replay.solution
        errs = [l2_norm(gd, it - star) for it in replay.iterates]
        for after, before in zip(errs[1:], errs[:-1]):
            if before > 1e-11 and after > before * (1 + 1e-9) + 1e-15:
                monotone = False
        u = star
    results.append(("linearised iterate error non-increasing", monotone, ""))
    return results


def run_suite(module: str | None = None, seed: int = 0):
    """Run the property checks, optionally restricted to one module."""
    dispatch = {
        "nonlinearity": _nonlinearity_props,
        "mesh": _mesh_props,
        "discretisation": _discretisation_props,
        "noise": _noise_props,
        "solvers": _solver_props,
    }
    if module is not None and module not in dispatch:
        raise ValueError(f"unknown module {module!r}; pick one of {MODULES}")
    selected = [module] if module else list(MODULES)
    results = []
    for name in selected:
        results.extend(dispatch[name](seed))
    return results
