import numpy as np
import pytest

from topolyap.models import KitaevParams, SSHParams, build_kitaev, build_ssh
from topolyap.spectral import labelled_eigenmodes


@pytest.fixture(scope="session")
def kitaev_ref():
    return build_kitaev(KitaevParams(30, 2.0, 1.0, 2.0))


@pytest.fixture(scope="session")
def ssh_ref():
    return build_ssh(SSHParams(21, 1.0, 0.3, 2.0))


@pytest.fixture(scope="session")
def kitaev_spec(kitaev_ref):
    return labelled_eigenmodes(kitaev_ref)


@pytest.fixture(scope="session")
def ssh_spec(ssh_ref):
    return labelled_eigenmodes(ssh_ref)


def random_hermitian(rng, n):
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (X + X.conj().T) / 2


def random_unit(rng, n):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)
