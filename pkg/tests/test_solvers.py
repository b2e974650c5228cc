import numpy as np
import pytest

from stefanbench.discretisation import interpolate, l2_norm
from stefanbench.nonlinearity import identity_zeta, regularise, stefan_zeta
from stefanbench.solvers import (
    SolveCounters,
    SolverConfig,
    contraction_alpha,
    fixed_operator,
    l_scheme_solve,
    newton_solve,
    r_scheme_solve,
    residual,
    rgs_inverse_solve,
    rgs_residual,
)
from stefanbench.exact import exact_u


def step_data(gd, t_prev=0.3, dt=0.1):
    """One implicit step's inputs from the travelling-interface state."""
    u_prev = interpolate(gd, lambda x, y: exact_u(x, y, t_prev)).values
    rhs_free = (gd.lumped_mass * u_prev)[gd.free_dofs]
    guess = u_prev.copy()
    bx = gd.mesh.vertices[gd.dirichlet]
    guess[gd.dirichlet] = exact_u(bx[:, 0], bx[:, 1], t_prev + dt)
    return u_prev, rhs_free, guess


class TestResidual:
    def test_zero_for_exact_linear_solve(self, gd1):
        ident = identity_zeta()
        _, rhs_free, guess = step_data(gd1)
        cfg = SolverConfig("newton", 1.0, 1e-10)
        out = newton_solve(gd1, ident, guess, rhs_free, 0.1, cfg)
        assert residual(gd1, ident, out.solution, rhs_free, 0.1) <= 1e-10

    def test_stationary_degenerate_step(self, gd1):
        zeta = stefan_zeta()
        u_prev, _, _ = step_data(gd1)
        rhs_free = (gd1.lumped_mass * u_prev)[gd1.free_dofs]
        assert residual(gd1, zeta, u_prev, rhs_free, 0.0) == 0.0

    def test_dense_assembly_oracle(self, gd1, rng):
        # rebuild mass and stiffness from scratch with plane fits per triangle
        mesh = gd1.mesh
        nv = len(mesh.vertices)
        mass = np.zeros(nv)
        stiff = np.zeros((nv, nv))
        for tri in mesh.triangles:
            p = mesh.vertices[tri]
            mat = np.column_stack([np.ones(3), p])
            area = 0.5 * abs(np.linalg.det(mat))
            mass[tri] += area / 3.0
            grads = np.linalg.solve(mat, np.eye(3))[1:, :]  # rows: d/dx, d/dy
            stiff[np.ix_(tri, tri)] += area * grads.T @ grads

        zeta = stefan_zeta()
        u = rng.uniform(-2, 3, nv)
        u_prev, rhs_free, _ = step_data(gd1)
        dt = 0.07
        defect = mass * u + dt * stiff @ zeta.eval(u)
        dfree = defect[gd1.free_dofs] - rhs_free
        oracle = np.sqrt(np.sum(mass[gd1.free_dofs] * dfree**2))
        assert residual(gd1, zeta, u, rhs_free, dt) == pytest.approx(oracle, abs=1e-12)


class TestNewton:
    def test_linear_problem_one_iteration(self, gd1):
        ident = identity_zeta()
        _, rhs_free, guess = step_data(gd1)
        out = newton_solve(gd1, ident, guess, rhs_free, 0.1, SolverConfig("newton", 1.0, 1e-10))
        assert out.converged and out.iterations == 1

    def test_one_step_to_machine_precision(self, gd2):
        # from an iterate just above a modest tolerance, one more iteration
        # reaches far below 1e-12 (piecewise-linear law, settled branches)
        zeta = stefan_zeta()
        _, rhs_free, guess = step_data(gd2, t_prev=0.4, dt=0.01)
        cfg = SolverConfig("newton", 1.0, 1e-6)
        out = newton_solve(gd2, zeta, guess, rhs_free, 0.01, cfg, keep_iterates=True)
        hist = out.residual_history
        crossings = [
            hist[k + 1] for k in range(len(hist) - 1)
            if hist[k] > cfg.tolerance >= hist[k + 1]
        ]
        assert crossings and all(r <= 1e-12 for r in crossings)

    def test_counts_assemblies_per_iteration(self, gd1):
        zeta = stefan_zeta()
        counters = SolveCounters()
        _, rhs_free, guess = step_data(gd1)
        out = newton_solve(gd1, zeta, guess, rhs_free, 0.1,
                           SolverConfig("newton", 1.0, 1e-10), counters)
        assert counters.assembly_count == out.iterations
        assert counters.factorisation_count == out.iterations

    def test_agrees_with_l_scheme(self, gd2):
        zeta = stefan_zeta()
        _, rhs_free, guess = step_data(gd2, dt=0.01)
        tol = 1e-9
        newton = newton_solve(gd2, zeta, guess, rhs_free, 0.01,
                              SolverConfig("newton", 1.0, tol))
        backend = fixed_operator(gd2, 0.01, 1.0, SolveCounters())
        lsch = l_scheme_solve(gd2, zeta, guess, rhs_free, 0.01,
                              SolverConfig("l_scheme", 1.0, tol, max_iterations=5000),
                              backend)
        assert newton.converged and lsch.converged
        assert l2_norm(gd2, newton.solution - lsch.solution) <= 100 * tol

    def test_initial_guess_insensitivity(self, gd1):
        zeta = stefan_zeta()
        _, rhs_free, guess = step_data(gd1)
        tol = 1e-11
        cfg = SolverConfig("newton", 1.0, tol)
        from_prev = newton_solve(gd1, zeta, guess, rhs_free, 0.1, cfg)
        cold = np.zeros_like(guess)
        cold[gd1.dirichlet] = guess[gd1.dirichlet]
        from_zero = newton_solve(gd1, zeta, guess, rhs_free, 0.1, cfg, initial_guess=cold)
        assert from_prev.converged and from_zero.converged
        assert l2_norm(gd1, from_prev.solution - from_zero.solution) <= 10 * tol

    def test_quadratic_transition_sanity(self, gd2):
        zeta = stefan_zeta()
        _, rhs_free, guess = step_data(gd2, dt=0.01)
        out = newton_solve(gd2, zeta, guess, rhs_free, 0.01,
                           SolverConfig("newton", 1.0, 1e-13))
        hist = [r for r in out.residual_history if r > 0]
        ratios = [
            hist[i + 1] / hist[i] ** 2
            for i in range(len(hist) - 1)
            if 1e-12 < hist[i] < 1e-1
        ]
        if len(ratios) >= 2:
            c = 2.0 * float(np.median(ratios))
            good = sum(r <= c for r in ratios)
            assert good / len(ratios) >= 0.9

    def test_nonconvergence_reported_not_fatal(self, gd1):
        zeta = stefan_zeta()
        _, rhs_free, guess = step_data(gd1)
        out = newton_solve(gd1, zeta, guess, rhs_free, 0.1,
                           SolverConfig("newton", 1.0, 1e-300, max_iterations=2))
        assert not out.converged and out.iterations == 2


class TestLScheme:
    def test_identity_law_single_iteration(self, gd1):
        ident = identity_zeta()
        _, rhs_free, guess = step_data(gd1)
        backend = fixed_operator(gd1, 0.1, 1.0, SolveCounters())
        out = l_scheme_solve(gd1, ident, guess, rhs_free, 0.1,
                             SolverConfig("l_scheme", 1.0, 1e-10), backend)
        assert out.converged and out.iterations == 1

    def test_monotone_l2_iterate_errors(self, gd1):
        zeta = stefan_zeta()
        _, rhs_free, guess = step_data(gd1)
        backend = fixed_operator(gd1, 0.1, 1.0, SolveCounters())
        cfg = SolverConfig("l_scheme", 1.0, 1e-13, max_iterations=5000)
        star = l_scheme_solve(gd1, zeta, guess, rhs_free, 0.1, cfg, backend).solution
        replay = l_scheme_solve(gd1, zeta, guess, rhs_free, 0.1, cfg, backend,
                                keep_iterates=True)
        errs = [l2_norm(gd1, it - star) for it in replay.iterates]
        for after, before in zip(errs[1:], errs[:-1]):
            if before > 1e-11:
                assert after <= before * (1 + 1e-9) + 1e-15

    def test_validation_bounds(self):
        zeta = stefan_zeta()
        cfg = SolverConfig("l_scheme", 0.4, 1e-6)
        with pytest.raises(ValueError):
            cfg.validate_against(zeta)
        SolverConfig("l_scheme", 0.5, 1e-6).validate_against(zeta)


class TestRScheme:
    def test_reduces_to_l_scheme_for_linear_law(self, gd1):
        # regularising the identity law changes nothing, so both fixed-point
        # iterations must walk the same trajectory bit for bit
        ident = identity_zeta()
        zeps = regularise(ident, 1.0)
        _, rhs_free, guess = step_data(gd1)
        backend = fixed_operator(gd1, 0.1, 1.0, SolveCounters())
        cfg_l = SolverConfig("l_scheme", 1.0, 1e-12)
        cfg_r = SolverConfig("r_scheme", 1.0, 1e-12, epsilon=1.0)
        a = l_scheme_solve(gd1, ident, guess, rhs_free, 0.1, cfg_l, backend,
                           keep_iterates=True)
        b = r_scheme_solve(gd1, zeps, guess, rhs_free, 0.1, cfg_r, backend,
                           keep_iterates=True)
        assert len(a.iterates) == len(b.iterates)
        for x, y in zip(a.iterates, b.iterates):
            assert np.array_equal(x, y)

    def test_requires_positive_epsilon(self):
        with pytest.raises(ValueError):
            SolverConfig("r_scheme", 1.0, 1e-6, epsilon=0.0).validate_against(stefan_zeta())


class TestRgsInverse:
    def test_identity_law_single_iteration(self, gd1):
        ident = identity_zeta()
        zeps = regularise(ident, 1.0)
        u_prev, _, guess = step_data(gd1)
        v_prev = zeps.eval(u_prev)
        rhs_free = (gd1.lumped_mass * zeps.inverse.eval(v_prev))[gd1.free_dofs]
        v_guess = zeps.eval(guess)
        backend = fixed_operator(gd1, 0.1, 1.0, SolveCounters(),
                                 "scaled_mass_plus_stiffness")
        out = rgs_inverse_solve(gd1, zeps, v_guess, rhs_free, 0.1,
                                SolverConfig("rgs_inverse", 1.0, 1e-10, epsilon=1.0),
                                backend)
        assert out.converged and out.iterations == 1

    def test_residual_consistency(self, gd1, rng):
        zeta = stefan_zeta()
        zeps = regularise(zeta, 0.1)
        v = rng.uniform(-1, 1, len(gd1.mesh.vertices))
        rhs = rng.uniform(-1, 1, len(gd1.free_dofs))
        d = gd1.lumped_mass * zeps.inverse.eval(v) + 0.1 * (gd1.stiffness @ v)
        dfree = d[gd1.free_dofs] - rhs
        oracle = np.sqrt(np.sum(gd1.lumped_mass[gd1.free_dofs] * dfree**2))
        assert rgs_residual(gd1, zeps, v, rhs, 0.1) == pytest.approx(oracle, rel=1e-14)

    def test_admissibility_bound(self):
        zeta = stefan_zeta()
        with pytest.raises(ValueError):
            SolverConfig("rgs_inverse", 5.0, 1e-6, epsilon=0.1).validate_against(zeta)
        SolverConfig("rgs_inverse", 10.0, 1e-6, epsilon=0.1).validate_against(zeta)


class TestCrossSolverConsistency:
    def test_all_strategies_agree_on_one_step(self, gd1):
        # Newton and the linearised scheme solve the same step system; the
        # regularised pair solves its epsilon-perturbed variant in either
        # variable.  At a tight tolerance the four solutions agree up to the
        # regularisation gap.
        zeta = stefan_zeta()
        eps = 0.01
        zeps = regularise(zeta, eps)
        u_prev, rhs_free, guess = step_data(gd1, dt=0.05)
        tol = 1e-11

        newton = newton_solve(gd1, zeta, guess, rhs_free, 0.05,
                              SolverConfig("newton", 1.0, tol))
        b_u = fixed_operator(gd1, 0.05, 1.0, SolveCounters())
        lsch = l_scheme_solve(gd1, zeta, guess, rhs_free, 0.05,
                              SolverConfig("l_scheme", 1.0, tol, max_iterations=20000),
                              b_u)
        rsch = r_scheme_solve(gd1, zeps, guess, rhs_free, 0.05,
                              SolverConfig("r_scheme", 1.0, tol, epsilon=eps,
                                           max_iterations=20000),
                              b_u)
        L = 1.0 / eps
        b_v = fixed_operator(gd1, 0.05, L, SolveCounters(), "scaled_mass_plus_stiffness")
        v_guess = zeps.eval(guess)
        rhs_v = (gd1.lumped_mass * zeps.inverse.eval(zeps.eval(u_prev)))[gd1.free_dofs]
        rgs = rgs_inverse_solve(gd1, zeps, v_guess, rhs_v, 0.05,
                                SolverConfig("rgs_inverse", L, tol, epsilon=eps,
                                             max_iterations=20000),
                                b_v)
        u_rgs = zeps.inverse.eval(rgs.solution)

        assert all(r.converged for r in (newton, lsch, rsch, rgs))
        # same system: distance bounded by a multiple of the tolerance
        assert l2_norm(gd1, newton.solution - lsch.solution) <= 1e3 * tol
        # epsilon-perturbed pair agrees with itself and sits within the
        # regularisation gap of the exact-law pair
        assert l2_norm(gd1, rsch.solution - u_rgs) <= 1e4 * tol + np.sqrt(eps)
        assert l2_norm(gd1, zeps.eval(rsch.solution) - zeta.eval(newton.solution)) <= 5 * np.sqrt(eps)


class TestContractionAlpha:
    def test_vanishes_at_minimal_L(self):
        assert contraction_alpha(1.0, 1.0, 0.1, 0.3) == 0.0

    def test_degenerate_time_weight(self):
        assert contraction_alpha(10.0, 1.0, 0.0, 0.3) == pytest.approx(9.0 / 10.0, rel=1e-14)

    def test_frozen_example(self):
        assert contraction_alpha(10.0, 1.0, 0.01, 0.2) == pytest.approx(0.88896, abs=5e-6)

    def test_always_below_one(self, rng):
        for _ in range(200):
            L_zeta = rng.uniform(0.2, 5.0)
            L = 1.0 / L_zeta + rng.uniform(0.0, 50.0)
            a = contraction_alpha(L, L_zeta, rng.uniform(0, 2), rng.uniform(0.05, 2.0))
            assert 0.0 <= a < 1.0

    def test_rejects_bad_inputs(self):
        for args in ((0.0, 1.0, 0.1, 0.3), (10.0, -1.0, 0.1, 0.3),
                     (10.0, 1.0, 0.1, 0.0), (0.5, 1.0, 0.1, 0.3)):
            with pytest.raises(ValueError):
                contraction_alpha(*args)


class TestBackend:
    def test_solve_accuracy(self, gd1, rng):
        counters = SolveCounters()
        backend = fixed_operator(gd1, 0.1, 1.0, counters)
        op = (np.diag(gd1.lumped_mass) + 0.1 * gd1.stiffness.toarray())
        ff = op[np.ix_(gd1.free_dofs, gd1.free_dofs)]
        for _ in range(10):
            b = rng.standard_normal(len(gd1.free_dofs))
            x = backend.solve(b)
            assert np.linalg.norm(ff @ x - b) <= 1e-10 * np.linalg.norm(b)
        assert counters.factorisation_count == 1
        assert counters.solve_count == 10

    def test_unknown_kind_rejected(self, gd1):
        with pytest.raises(ValueError):
            fixed_operator(gd1, 0.1, 1.0, SolveCounters(), "bogus")

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig("bogus", 1.0, 1e-6)
        with pytest.raises(ValueError):
            SolverConfig("newton", 1.0, 0.0)
