"""Shared grids, systems, and field builders for the test suite."""

import numpy as np
import pytest

from koopreg import (
    GridSpec,
    LinearSystem,
    MeasurementSet,
    NodalField,
    TensorPolynomialBasis,
    sample_grid,
    system_by_name,
)


@pytest.fixture
def grid3():
    """3x3 unit-spacing grid over [0,2]^2."""
    return GridSpec(mins=(0.0, 0.0), spacing=(1.0, 1.0), counts=(3, 3))


@pytest.fixture
def grid_fine():
    """Denser grid for convergence-flavored checks."""
    return GridSpec.from_box([0.0, 0.0], [1.0, 1.0], 0.1)


@pytest.fixture
def imaginary_system():
    return system_by_name("lin-imaginary")


def nodal_from_fn(grid, fn):
    """Nodal field sampled from a callable on grid nodes."""
    pts = grid.nodes()
    return NodalField(grid, fn(pts))


def coordinate_set(grid, k=None):
    """Measurement set m_i = x_i on the given grid."""
    k = grid.dim if k is None else k
    pts = grid.nodes()
    return MeasurementSet([NodalField(grid, pts[:, i].copy()) for i in range(k)])


def constant_samples(grid, vec):
    """Lattice samples with the same vector at every node."""
    pts = grid.nodes()
    from koopreg import VectorFieldSamples

    return VectorFieldSamples(
        pts, np.tile(np.asarray(vec, float), (len(pts), 1)), layout=grid
    )
