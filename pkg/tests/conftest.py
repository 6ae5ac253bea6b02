import numpy as np
import pytest

from coralcast.assessment import (SyntheticLayout, SyntheticSource,
                                  generate_synthetic)
from coralcast.inference import HyperParams


def make_world(seed=0, n_cells=10, years=(2002, 2003, 2004),
               theta=None, sources=None, beta=None,
               bbox=(150.0, -24.0, 151.0, -23.0), cell_size=0.1,
               mesh_resolution=1.0, mesh_extension=0.5, w_raw=2.0):
    """Small synthetic dataset for unit tests (n = n_cells * len(years))."""
    theta = theta or HyperParams(
        log_phi=np.log(60.0), log_rw1_prec=np.log(4.0),
        log_nugget_prec=np.log(25.0), log_kappa=0.2, log_tau=-0.8)
    if sources is None:
        sources = (SyntheticSource("A", n_cells=n_cells, w_raw=w_raw),)
    layout = SyntheticLayout(
        bbox=bbox, cell_size=cell_size, years=tuple(years),
        sources=tuple(sources), mesh_resolution=mesh_resolution,
        mesh_extension=mesh_extension)
    return generate_synthetic(layout, theta, beta_true=beta, seed=seed)


@pytest.fixture
def tiny_world():
    return make_world(seed=3)
