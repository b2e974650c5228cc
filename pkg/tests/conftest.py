import numpy as np
import pytest

from stefanbench.discretisation import build_gd
from stefanbench.mesh import generate_mesh
from stefanbench.timestepper import RunContext, RunSpec, SolverSettings, TimeGrid


@pytest.fixture(scope="session")
def gd1():
    return build_gd(generate_mesh(1))


@pytest.fixture(scope="session")
def gd2():
    return build_gd(generate_mesh(2))


def det_spec(level, steps, strategy, *, t_final=1.0, C_tol=100.0, C_eps=1.0, **solver_kw):
    return RunSpec(
        mesh_level=level,
        grid=TimeGrid(t_final, steps),
        solver=SolverSettings(strategy=strategy, C_tol=C_tol, C_eps=C_eps, **solver_kw),
    )


def run_det(level, steps, strategy, **kw):
    """Deterministic run helper returning (context, trajectory)."""
    spec = det_spec(level, steps, strategy, **kw)
    ctx = RunContext(spec)
    return ctx, ctx.run_realisation(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
