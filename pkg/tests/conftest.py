"""Shared fixtures: temporary stores, small problems, and cached solves."""

import os
import tempfile
from pathlib import Path

import numpy as np
import pytest

from benchmarks.pipeline import solve_problem
from benchmarks.problems import example1
from collocation.transcription import Mesh, OcpDefinition
from db.db_manager import ResultStore


@pytest.fixture
def temp_store():
    """Create a temporary result store for testing."""
    with tempfile.NamedTemporaryFile(suffix='.db', delete=False) as f:
        db_path = Path(f.name)

    store = ResultStore(db_path=db_path)
    yield store

    store.close()
    if db_path.exists():
        os.unlink(db_path)


@pytest.fixture
def temp_dir():
    """Create a temporary output directory."""
    with tempfile.TemporaryDirectory() as d:
        yield Path(d)


def make_linear_ocp(a: float = -1.0, b: float = 1.0, with_jacobians: bool = True) -> OcpDefinition:
    """
    Scalar x' = a x + b u on [0, 1], x(0) = 1, Mayer cost x(1)^2 / 2.

    Used for structural transcription checks only; its optimal control is not unique.
    """
    kwargs = {}
    if with_jacobians:
        kwargs = dict(
            dyn_jac_x=lambda t, x, u: np.full((x.shape[0], 1, 1), a),
            dyn_jac_u=lambda t, x, u: np.full((x.shape[0], 1, 1), b),
            mayer_gradient=lambda x0, t0, xf, tf: (np.zeros(1), np.array([xf[0]])),
            boundary_jacobian=lambda x0, t0, xf, tf: (np.ones((1, 1)), np.zeros((1, 1))),
        )
    return OcpDefinition(
        n_x=1, n_u=1, n_b=1,
        dynamics=lambda t, x, u: a * x + b * u,
        mayer_cost=lambda x0, t0, xf, tf: 0.5 * xf[0] ** 2,
        boundary=lambda x0, t0, xf, tf: np.array([x0[0] - 1.0]),
        t0=0.0, tf=1.0,
        x0_guess=np.ones(1),
        name='linear',
        **kwargs,
    )


@pytest.fixture
def linear_ocp():
    return make_linear_ocp()


@pytest.fixture(scope='module')
def ex1():
    return example1()


@pytest.fixture(scope='module')
def ex1_integral_n10(ex1):
    return solve_problem(ex1, 'integral', Mesh.single(10))


@pytest.fixture(scope='module')
def ex1_derivative_n10(ex1):
    return solve_problem(ex1, 'derivative-like', Mesh.single(10))
