"""Concrete chain Hamiltonians and boundary control generators."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange
from .hamiltonian import Statistics, validate_quadratic


@dataclass(frozen=True)
class KitaevParams:
    """Open Kitaev chain: hopping J, pairing Delta, chemical potential mu."""

    N: int
    J: float
    Delta: float
    mu: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise DimensionMismatch(f"Kitaev chain needs N >= 2, got {self.N}")
        if not np.all(np.isfinite([self.J, self.Delta, self.mu])):
            raise ValueError("Kitaev parameters must be finite")


@dataclass(frozen=True)
class SSHParams:
    """Open SSH chain with dimerization ``delta`` in [0, 1]."""

    N: int
    J: float
    delta: float
    mu: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise DimensionMismatch(f"SSH chain needs N >= 2, got {self.N}")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"dimerization must lie in [0, 1], got {self.delta}")
        if not np.all(np.isfinite([self.J, self.mu])):
            raise ValueError("SSH parameters must be finite")


def kitaev_matrices(N, J, Delta, mu, *, J_edge=None, Delta_edge=None, mu_edge=None):
    """Dense A and B for the open Kitaev chain.

    The ``*_edge`` overrides replace the value on the elements touching
    sites 1 and N (on-site terms at the two end sites, bonds (1,2) and
    (N-1,N)).
    """
    J_edge = J if J_edge is None else J_edge
    Delta_edge = Delta if Delta_edge is None else Delta_edge
    mu_edge = mu if mu_edge is None else mu_edge
    hop = np.full(N - 1, float(J))
    pair = np.full(N - 1, float(Delta))
    onsite = np.full(N, float(mu))
    hop[[0, -1]] = J_edge
    pair[[0, -1]] = Delta_edge
    onsite[[0, -1]] = mu_edge
    A = np.diag(onsite) - np.diag(hop, 1) - np.diag(hop, -1)
    B = -2.0 * np.diag(pair, 1) + 2.0 * np.diag(pair, -1)
    return A, B


def build_kitaev(p):
    """Fermionic Kitaev chain with tridiagonal A and antisymmetric B.

    ``A = mu on the diagonal, -J on the first off-diagonals``;
    ``B[j, j+1] = -2 Delta`` and ``B[j+1, j] = +2 Delta``.
    """
    A, B = kitaev_matrices(p.N, p.J, p.Delta, p.mu)
    return validate_quadratic(A, B, Statistics.FERMI)


def build_ssh(p):
    """Bosonic SSH chain, B = 0.

    Bond (j, j+1), j = 1..N-1, carries ``-J [1 + delta (-1)^j]``, so the
    first bond is the weak one and an edge mode sits at site 1.
    """
    j = np.arange(1, p.N)
    bonds = -p.J * (1.0 + p.delta * (-1.0) ** j)
    A = p.mu * np.eye(p.N) + np.diag(bonds, 1) + np.diag(bonds, -1)
    return validate_quadratic(A, np.zeros_like(A), Statistics.BOSE)


def boundary_number_control(N, site, stat=Statistics.FERMI):
    """Number operator at a single (1-based) site as a control generator."""
    if not 1 <= site <= N:
        raise IndexOutOfRange(f"site {site} outside 1..{N}")
    A = np.zeros((N, N))
    A[site - 1, site - 1] = 1.0
    return validate_quadratic(A, np.zeros((N, N)), stat)


def kitaev_phase_is_topological(p):
    """True iff 2|J| > |mu| and Delta != 0."""
    return bool(2 * abs(p.J) > abs(p.mu) and p.Delta != 0)
