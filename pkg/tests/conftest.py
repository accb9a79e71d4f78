import numpy as np
import pytest

from kgwave.ensemble import default_spectrum
from kgwave.kernels import CutoffSpec, make_model
from kgwave.lattice import LatticeSpec

EPS = 0.3


@pytest.fixture(scope="session")
def spec5():
    """d=1 lattice with 5 modes: k in {-2,-1,0,1,2}."""
    return LatticeSpec(d=1, L=1, m=1.0, kmax=2)


@pytest.fixture(scope="session")
def spec9():
    """d=1 lattice with 9 modes; cube contains twice the spectrum ball."""
    return LatticeSpec(d=1, L=1, m=1.0, kmax=4)


@pytest.fixture(scope="session")
def model_real():
    return make_model("test-real")


@pytest.fixture(scope="session")
def model():
    return make_model("test-complex")


@pytest.fixture(scope="session")
def cutoff():
    return CutoffSpec(gamma=0.5, epsilon=EPS)


@pytest.fixture(scope="session")
def spectrum():
    return default_spectrum(2.0)


def relerr(a, b, floor=1e-14):
    """Relative deviation with a floor so exact zeros compare cleanly."""
    a = np.asarray(a)
    b = np.asarray(b)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), floor)
    return float(np.max(np.abs(a - b)) / scale)
