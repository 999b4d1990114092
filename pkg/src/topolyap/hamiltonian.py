"""Quadratic Hamiltonians and mode vectors.

A quadratic Hamiltonian is fixed by two N x N matrices ``A`` and ``B`` and
the particle statistics. The mode vector ``q`` stores the conjugated
quasiparticle coefficients ``(C_1*, ..., C_N*, D_1*, ..., D_N*)``.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DimensionMismatch, SymmetryViolation

SYMMETRY_TOL = 1e-12
NORM_TOL = 1e-9


class Statistics(Enum):
    FERMI = "fermi"
    BOSE = "bose"

    @property
    def sign(self):
        """-1 for fermions, +1 for bosons."""
        return -1 if self is Statistics.FERMI else 1

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


def _frozen(a):
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QuadraticHamiltonian:
    """Validated pair of coefficient matrices plus statistics.

    Use :func:`validate_quadratic` to construct.
    """

    A: np.ndarray
    B: np.ndarray
    stat: Statistics

    @property
    def N(self):
        return self.A.shape[0]

    def __add__(self, other):
        _check_compatible(self, other)
        return validate_quadratic(self.A + other.A, self.B + other.B, self.stat)

    def scaled(self, factor):
        return validate_quadratic(factor * self.A, factor * self.B, self.stat)


def _check_compatible(h1, h2):
    if h1.N != h2.N:
        raise DimensionMismatch(f"site counts differ: {h1.N} vs {h2.N}")
    if h1.stat is not h2.stat:
        raise DimensionMismatch("statistics differ")


def validate_quadratic(A, B, stat):
    """Check hermiticity of ``A`` and the statistics symmetry of ``B``.

    Parameters
    ----------
    A, B : array_like
        Square matrices of equal size N >= 2.
    stat : Statistics or str

    Returns
    -------
    QuadraticHamiltonian

    Raises
    ------
    DimensionMismatch
        If the shapes are not square, not equal, or N < 2.
    SymmetryViolation
        If ``A != A^H`` or ``B != sign * B^T`` beyond 1e-12.
    """
    stat = Statistics.parse(stat)
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A must be square, got shape {A.shape}")
    if B.shape != A.shape:
        raise DimensionMismatch(f"B shape {B.shape} does not match A shape {A.shape}")
    if A.shape[0] < 2:
        raise DimensionMismatch("need at least two sites")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise SymmetryViolation("non-finite matrix entries")
    res_a = np.max(np.abs(A - A.conj().T))
    if res_a > SYMMETRY_TOL:
        raise SymmetryViolation(f"A is not Hermitian (residual {res_a:.3e})")
    res_b = np.max(np.abs(B - stat.sign * B.T))
    if res_b > SYMMETRY_TOL:
        kind = "antisymmetric" if stat is Statistics.FERMI else "symmetric"
        raise SymmetryViolation(f"B is not {kind} (residual {res_b:.3e})")
    return QuadraticHamiltonian(_frozen(A), _frozen(B), stat)


@dataclass(frozen=True, eq=False)
class ModeVector:
    """Coefficient vector ``(C*, D*)`` of length 2N."""

    q: np.ndarray
    stat: Statistics

    def __post_init__(self):
        q = np.array(self.q, dtype=complex).ravel()
        if q.size % 2:
            raise DimensionMismatch("mode vector length must be even")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "stat", Statistics.parse(self.stat))

    @property
    def N(self):
        return self.q.size // 2

    @property
    def C(self):
        """Annihilation-part coefficients C_j (unconjugated)."""
        return self.q[: self.N].conj()

    @property
    def D(self):
        """Creation-part coefficients D_j (unconjugated)."""
        return self.q[self.N:].conj()

    @classmethod
    def from_coefficients(cls, C, D, stat):
        return cls(np.concatenate([np.conj(C), np.conj(D)]), stat)

    def check_norm(self, tol=NORM_TOL):
        """Return True if the statistics norm equals one within ``tol``."""
        return abs(mode_norm(self) - 1.0) <= tol


def mode_norm(Q):
    """Statistics norm of a mode vector.

    Fermi: ``sum |C|^2 + |D|^2``. Bose: ``|sum |C|^2 - |D|^2|``.
    """
    w = np.abs(Q.q) ** 2
    n = Q.N
    if Q.stat is Statistics.FERMI:
        return float(np.sum(w))
    return float(abs(np.sum(w[:n]) - np.sum(w[n:])))


def norm_metric(stat, N):
    """Diagonal weights whose inner product with |q|^2 gives the signed norm."""
    if Statistics.parse(stat) is Statistics.FERMI:
        return np.ones(2 * N)
    return np.concatenate([np.ones(N), -np.ones(N)])
