import numpy as np
import pytest

from delayest import build_eda, example_A, preset_supply, synth_theorem2
from delayest.basis import BasisFn, BasisSpec
from delayest.model import DelaySystem


@pytest.fixture(scope="session")
def exA():
    """Benchmark system and basis at sigma = lambda = 1."""
    return example_A()


@pytest.fixture(scope="session")
def sysA(exA):
    return exA[0]


@pytest.fixture(scope="session")
def basisA(exA):
    return exA[1]


@pytest.fixture(scope="session")
def edaA(exA):
    sys, spec = exA
    return build_eda(spec, sys.delays)


@pytest.fixture(scope="session")
def scalar():
    """Stable one-state plant with full state measurement."""
    basis = BasisSpec.create((1.0,), phi_lists=[[]], varphi_lists=[[]],
                             f_lists=[[BasisFn.constant()]])
    sys = DelaySystem(
        n=1, m=1, l=1, q=1, delays=(1.0,),
        A=(np.array([[-2.0]]), np.array([[0.3]])),
        C=(np.array([[1.0]]), np.zeros((1, 1))),
        Ahat=(np.array([[0.2]]),),
        Chat=(np.zeros((1, 1)),),
        Cmeas=np.array([[1.0]]),
        D1=np.array([[1.0]]), D2=np.array([[0.1]]),
        D3=np.zeros((1, 1)), D4=np.zeros((1, 1)),
    )
    return sys, basis, build_eda(basis, sys.delays)


@pytest.fixture(scope="session")
def supply():
    return preset_supply("l2gain", m=1, q=1)


@pytest.fixture(scope="session")
def th2A(exA, edaA, supply):
    """One-shot multiplier synthesis on the benchmark, shared across files."""
    sys, _ = exA
    return synth_theorem2(sys, edaA, supply)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260823)
