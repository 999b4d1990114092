import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from topolyap.errors import DimensionMismatch, IndexOutOfRange
from topolyap.hamiltonian import Statistics
from topolyap.models import (KitaevParams, SSHParams, boundary_number_control,
                             build_kitaev, kitaev_matrices,
                             kitaev_phase_is_topological)


def test_kitaev_reference_elements(kitaev_ref):
    A, B = kitaev_ref.A, kitaev_ref.B
    assert A[0, 0] == 2.0 and A[0, 1] == -2.0 and A[0, 2] == 0.0
    assert B[0, 1] == -2.0 and B[1, 0] == 2.0
    np.testing.assert_array_equal(B, -B.T)
    assert kitaev_ref.stat is Statistics.FERMI


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 40), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_kitaev_tridiagonal_and_antisymmetric(N, J, D, mu):
    H = build_kitaev(KitaevParams(N, J, D, mu))
    i, j = np.nonzero(np.abs(H.A) + np.abs(H.B))
    assert np.all(np.abs(i - j) <= 1)
    np.testing.assert_array_equal(H.B, -H.B.T)


def test_kitaev_edge_overrides_touch_only_ends():
    A, B = kitaev_matrices(6, 2.0, 1.0, 2.0, J_edge=2.2, Delta_edge=1.1, mu_edge=2.2)
    A0, B0 = kitaev_matrices(6, 2.0, 1.0, 2.0)
    dA = np.argwhere(A != A0)
    assert {tuple(x) for x in dA} == {(0, 0), (5, 5), (0, 1), (1, 0), (4, 5), (5, 4)}
    assert B[0, 1] == pytest.approx(-2.2) and B[4, 5] == pytest.approx(-2.2)
    assert B[2, 3] == B0[2, 3]


def test_ssh_reference_bonds(ssh_ref):
    A = ssh_ref.A
    assert A[0, 1] == pytest.approx(-0.7)
    assert A[1, 2] == pytest.approx(-1.3)
    assert A[19, 20] == pytest.approx(-1.3)
    np.testing.assert_array_equal(np.diag(A), 2.0)
    assert not np.any(ssh_ref.B)
    assert ssh_ref.stat is Statistics.BOSE


def test_params_validated():
    with pytest.raises(DimensionMismatch):
        KitaevParams(1, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        KitaevParams(5, np.inf, 1.0, 1.0)
    with pytest.raises(ValueError):
        SSHParams(21, 1.0, 1.5, 2.0)
    with pytest.raises(DimensionMismatch):
        SSHParams(1, 1.0, 0.3, 2.0)


def test_boundary_control():
    h = boundary_number_control(5, 5, Statistics.BOSE)
    assert h.A[4, 4] == 1.0 and np.count_nonzero(h.A) == 1
    with pytest.raises(IndexOutOfRange):
        boundary_number_control(5, 6)
    with pytest.raises(IndexOutOfRange):
        boundary_number_control(5, 0)


@pytest.mark.parametrize("J,mu,expected", [(2.0, 2.0, True), (1.0, 2.0, False),
                                           (1.0, 2.0000001, False), (-2.0, 3.0, True)])
def test_phase_condition(J, mu, expected):
    assert kitaev_phase_is_topological(KitaevParams(10, J, 1.0, mu)) is expected
    assert not kitaev_phase_is_topological(KitaevParams(10, 2.0, 0.0, 0.5))
