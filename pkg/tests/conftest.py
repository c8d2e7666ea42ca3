import pytest

from ouphase import InterferometerConfig, ProcessParams

# Working point used throughout: kappa=1e4 rad/s, lam=1e5 rad/s, flux=1e7 /s, G^2=7.4.


@pytest.fixture
def process():
    return ProcessParams(kappa=1e4, lam=1e5)


@pytest.fixture
def nli():
    return InterferometerConfig(kind="nli", photon_flux=1e7, gain_sq=7.4)


@pytest.fixture
def mzi():
    return InterferometerConfig(kind="mzi", photon_flux=1e7)
