"""BdG dynamics matrices, eigenmodes, edge-mode labels and eta tracking.

Ordering convention
-------------------
Fermionic modes are ordered by ascending eigenvalue of the dynamics matrix.
Bosonic modes (B = 0) are ordered by ascending eigenvalue of ``-H``, i.e.
descending eigenvalue of the dynamics matrix, so that the annihilation-block
edge mode of the SSH chain comes first. The stored eigenvalues are always
the true eigenvalues of the dynamics matrix.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import (DimensionMismatch, NoMidGapMode, SolverFailure, TrackingLost,
                     UnsupportedDecomposition)
from .hamiltonian import Statistics

DEGENERACY_TOL = 1e-10
MIDGAP_FRACTION = 0.2
LOCALIZATION_MIN = 0.6
TRACKING_MIN = 0.5
GAP_SPACINGS = 4.0


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenpairs of a dynamics matrix.

    Attributes
    ----------
    eigenvalues : ndarray, shape (2N,)
    eigenvectors : ndarray, shape (2N, 2N)
        Column ``l - 1`` holds the 1-based mode ``U^l = (X^l, Y^l)``.
    stat : Statistics
    edge_labels : dict
        Optional map such as ``{"left": 30, "right": 31}`` (1-based).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    stat: Statistics
    edge_labels: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.eigenvalues.size // 2

    def vector(self, index):
        """Eigenvector for a 1-based mode index."""
        from .errors import IndexOutOfRange
        if not 1 <= index <= self.eigenvalues.size:
            raise IndexOutOfRange(f"mode index {index} outside 1..{self.eigenvalues.size}")
        return self.eigenvectors[:, index - 1]

    def resolve(self, target):
        """Map an edge label or a 1-based index to a 1-based index."""
        if isinstance(target, str):
            if target not in self.edge_labels:
                raise NoMidGapMode(f"no edge mode labelled {target!r}")
            return self.edge_labels[target]
        self.vector(int(target))
        return int(target)

    def with_labels(self, labels):
        return replace(self, edge_labels=dict(labels))


def bdg_dynamics_matrix(H):
    """Statistics-appropriate 2N x 2N matrix driving ``-i dQ/dt = M Q``."""
    A, B = H.A, H.B
    if H.stat is Statistics.FERMI:
        return np.block([[A, B], [-B.conj(), -A.conj()]])
    return np.block([[A, -B], [B.conj(), -A.conj()]])


def _fix_phase(V):
    # make the largest-magnitude component of each column real positive
    V = np.array(V, dtype=complex)
    mags = np.abs(V)
    for l in range(V.shape[1]):
        m = mags[:, l]
        i = int(np.flatnonzero(m >= m.max() * (1 - 1e-9))[0])
        V[:, l] *= np.conj(V[i, l]) / abs(V[i, l])
        V[i, l] = abs(V[i, l])
    return V


def _eigh(M):
    try:
        return scipy.linalg.eigh(M)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverFailure(str(exc)) from exc


def eigenmodes(H, bose_order="descending"):
    """Diagonalize the dynamics matrix.

    Parameters
    ----------
    H : QuadraticHamiltonian
        Fermionic, or bosonic with B = 0.
    bose_order : {"descending", "ascending"}
        Ordering of bosonic eigenvalues (see module docstring).

    Returns
    -------
    SpectralDecomposition
    """
    N = H.N
    if H.stat is Statistics.FERMI:
        w, V = _eigh(bdg_dynamics_matrix(H))
    else:
        if np.any(H.B != 0):
            raise UnsupportedDecomposition("bosonic decomposition requires B = 0")
        wa, Va = _eigh(H.A)
        wb, Vb = _eigh(-H.A.conj())
        w = np.concatenate([wa, wb])
        V = np.zeros((2 * N, 2 * N), dtype=complex)
        V[:N, :N] = Va
        V[N:, N:] = Vb
        if bose_order == "descending":
            order = np.argsort(-w, kind="stable")
        elif bose_order == "ascending":
            order = np.argsort(w, kind="stable")
        else:
            raise ValueError(f"unknown bose_order {bose_order!r}")
        w, V = w[order], V[:, order]
    if not np.all(np.isfinite(w)):
        raise SolverFailure("non-finite eigenvalues")
    return SpectralDecomposition(np.asarray(w, float), _fix_phase(V), H.stat)


def site_weights(U):
    """Per-site weight |X_j|^2 + |Y_j|^2 of a 2N vector."""
    n = U.shape[0] // 2
    return np.abs(U[:n]) ** 2 + np.abs(U[n:]) ** 2


def edge_weight(U, width):
    """Weight on the ``width`` sites nearest either boundary."""
    w = site_weights(U)
    n = w.size
    width = min(width, n // 2)
    return float(w[:width].sum() + w[n - width:].sum())


def _midgap_indices(w, loc, groups):
    # a gap counts as a bulk gap when it is several typical level spacings wide
    found = []
    for g in groups:
        g = sorted(g, key=lambda i: w[i])
        ew = np.array([w[i] for i in g])
        spacing = np.median(np.diff(ew)) if ew.size > 2 else 0.0
        is_cand = [loc[i] >= LOCALIZATION_MIN for i in g]
        k = 0
        while k < len(g):
            if not is_cand[k]:
                k += 1
                continue
            end = k
            while end + 1 < len(g) and is_cand[end + 1]:
                end += 1
            if 0 < k and end < len(g) - 1 and end - k < 2:
                lo, hi = ew[k - 1], ew[end + 1]
                if hi - lo > GAP_SPACINGS * spacing:
                    centre = 0.5 * (lo + hi)
                    found += [g[i] for i in range(k, end + 1)
                              if abs(ew[i] - centre) < MIDGAP_FRACTION * (hi - lo)]
            k = end + 1
    return found


def identify_edge_modes(spec, H=None):
    """Label the boundary-localized mid-gap modes.

    A mode is localized when at least 60% of its weight lies in the outer
    quarter of the chain. A run of at most two localized modes, adjacent in
    energy, is mid-gap when the gap between the bulk levels bracketing it
    exceeds four median level spacings and each mode lies within 20% of
    that gap from its centre. Bosonic (B = 0) blocks are treated as
    separate spectra.

    Returns
    -------
    dict
        ``{"left": index, "right": index}`` with 1-based indices (a single
        entry if only one mode qualifies).
    """
    N = spec.N
    if H is not None and H.N != N:
        raise DimensionMismatch("Hamiltonian and spectrum sizes differ")
    U = spec.eigenvectors
    w = spec.eigenvalues
    quarter = max(1, N // 4)
    loc = np.array([edge_weight(U[:, l], quarter) for l in range(2 * N)])
    if spec.stat is Statistics.FERMI:
        groups = [list(range(2 * N))]
    else:
        # B = 0: annihilation and creation blocks are decoupled spectra
        in_c = np.linalg.norm(U[:N], axis=0) ** 2 > 0.5
        groups = [list(np.flatnonzero(in_c)), list(np.flatnonzero(~in_c))]
    mid = _midgap_indices(w, loc, groups)
    if not mid:
        raise NoMidGapMode("no localized mid-gap mode found")
    mid = sorted(sorted(mid, key=lambda i: -loc[i])[:2])
    half = N // 2

    def left_weight(i):
        sw = site_weights(U[:, i])
        return sw[:half].sum() - sw[N - half:].sum()

    if len(mid) == 1:
        i = mid[0]
        return {"left" if left_weight(i) >= 0 else "right": int(i) + 1}
    a, b = mid
    if spec.stat is Statistics.FERMI:
        if abs(w[a] - w[b]) < DEGENERACY_TOL and left_weight(b) > left_weight(a):
            a, b = b, a
        elif w[b] < w[a]:
            a, b = b, a
    return {"left": int(a) + 1, "right": int(b) + 1}


def labelled_eigenmodes(H, **kwargs):
    """:func:`eigenmodes` followed by :func:`identify_edge_modes`."""
    spec = eigenmodes(H, **kwargs)
    return spec.with_labels(identify_edge_modes(spec, H))


def _require_bose_b0(*hs):
    for h in hs:
        if h.stat is not Statistics.BOSE or np.any(h.B != 0):
            raise UnsupportedDecomposition("tracking requires bosonic Hamiltonians with B = 0")


def tracked_eigenvector(H0, H1, eta, ref):
    """Eigenpair of ``H0 + eta H1`` continuously connected to ``ref``.

    Returns
    -------
    W : ndarray
        Eigenvector with maximal ``|<ref|W>|``, phased so that overlap is
        real and positive.
    lam : float
        Its eigenvalue.

    Raises
    ------
    TrackingLost
        If the best overlap is below 0.5.
    """
    _require_bose_b0(H0, H1)
    if H0.N != H1.N or np.shape(ref) != (2 * H0.N,):
        raise DimensionMismatch("tracking dimensions disagree")
    M = bdg_dynamics_matrix(H0) + eta * bdg_dynamics_matrix(H1)
    lam, V = _eigh(M)
    ov = V.conj().T @ ref
    k = int(np.argmax(np.abs(ov)))
    best = abs(ov[k]) / max(np.linalg.norm(ref), 1e-300)
    if best < TRACKING_MIN:
        raise TrackingLost(f"overlap with reference dropped to {best:.3f} at eta={eta:.6g}")
    W = V[:, k] * (ov[k] / abs(ov[k]))
    return W, float(lam[k])
