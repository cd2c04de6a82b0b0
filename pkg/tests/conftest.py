import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qdirac import BoundarySpec, LatticeFn, Problem, QTrigContext, build_lattice

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def lat05():
    return build_lattice(0.5, 1.0, 64)


@pytest.fixture(scope="session")
def ctx05():
    return QTrigContext(0.5)


def poly_fn(lattice, coeffs):
    """Polynomial sum c_k x**k sampled on ``lattice`` (with ext value and limit at 0)."""
    c = np.asarray(coeffs, dtype=float)
    return lattice.sample(lambda x: float(np.polyval(c[::-1], x)), zero_limit=float(c[0]))


def random_problem(rng, lattice, bound=1.0, boundary=None):
    p = LatticeFn(lattice, rng.uniform(-bound, bound, lattice.size), ext_value=0.0,
                  zero_limit=0.0)
    r = LatticeFn(lattice, rng.uniform(-bound, bound, lattice.size), ext_value=0.0,
                  zero_limit=0.0)
    if boundary is None:
        k = rng.uniform(-1, 1, 4)
        boundary = BoundarySpec(*k)
    return Problem(lattice, p, r, boundary)
