"""Lyapunov feedback laws.

Every law maps the instantaneous mode vector to one real field per control
generator. Sign conventions are chosen so that V never increases under
``dQ/dt = i (H0 + sum_k f_k H_k) Q``.

Linear laws (P-matrix, overlap, dual target) share the form::

    f_k = scale * sum_m coef[k, m] * Im((Q^H H_k u_m) (u_m^H Q))

which :meth:`ControlLaw.linear_form` exposes for the compiled integrator.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, NoConvergence, NonRealField
from .hamiltonian import Statistics
from .spectral import bdg_dynamics_matrix, tracked_eigenvector

IMAG_TOL = 1e-9
COMMUTE_TOL = 1e-9
ETA_TOL = 1e-10
ETA_DAMPING = 0.5
ETA_MAX_ITER = 200


def _q(Q):
    return np.asarray(getattr(Q, "q", Q), dtype=complex)


def _check_dims(*arrays):
    n = arrays[0].shape[0]
    for a in arrays[1:]:
        if a.shape[0] != n:
            raise DimensionMismatch(f"length {a.shape[0]} does not match {n}")


def _gains(F, K):
    F = np.broadcast_to(np.asarray(F, float), (K,)).copy()
    if np.any(F <= 0):
        raise ValueError("gains must be positive")
    return F


# ---------------------------------------------------------------- field rules

def build_p_matrix(spec, target_index):
    """``P = -U^T U^T^H`` for a 1-based target index."""
    if not 1 <= target_index <= spec.eigenvalues.size:
        raise IndexOutOfRange(f"target index {target_index} out of range")
    u = spec.eigenvectors[:, target_index - 1]
    return -np.outer(u, u.conj())


def p_matrix_field(Q, P, Hk, F):
    """P-matrix field ``-i F Q^H [P, Hk] Q``.

    With ``P = -U U^H`` this equals ``2 F Im(Q^H Hk U U^H Q)``.

    Raises
    ------
    NonRealField
        If the quadratic form has an imaginary residual above 1e-9.
    """
    q = _q(Q)
    _check_dims(q, P, Hk)
    val = -1j * F * np.vdot(q, (P @ Hk - Hk @ P) @ q)
    if abs(val.imag) > IMAG_TOL * max(1.0, abs(val.real)):
        raise NonRealField(f"imaginary residual {val.imag:.3e}")
    return float(val.real)


def overlap_field(Q, Q_T, Hk, F):
    """Overlap field ``F Im(Q^H Hk Q_T Q_T^H Q)``."""
    q = _q(Q)
    _check_dims(q, Q_T, Hk)
    return float(F * (np.vdot(q, Hk @ Q_T) * np.vdot(Q_T, q)).imag)


def dual_target_field(Q, Q_T1, Q_T2, Hk, F):
    """Dual-target field that fills T1 and empties T2."""
    return overlap_field(Q, Q_T1, Hk, F) - overlap_field(Q, Q_T2, Hk, F)


def implicit_field(Q, W, Hk, F, eta):
    """Total implicit field ``eta + F Im(Q^H Hk W W^H Q)``."""
    return float(eta) + overlap_field(Q, W, Hk, F)


def square_wave_wrap(inner_field, clip):
    """``clip * sign(inner_field)``, with 0 for an exactly zero input."""
    if clip <= 0:
        raise ValueError("clip level must be positive")
    return float(clip * np.sign(inner_field))


# ---------------------------------------------------------------- eta tracking

@dataclass
class EtaTracker:
    """Per-trajectory state of the implicit law: last eta, W and eigenvalue."""

    eta: float
    W: np.ndarray
    lam: float = 0.0
    iterations: int = 0


def eta_step(eta, h, prev, hprev, it, damping=ETA_DAMPING):
    """Next iterate for ``h(eta) = target(eta) - eta = 0``.

    A secant step through the previous iterate, falling back to the damped
    step ``eta + damping * h`` on the first iteration or when the secant
    step is not finite or exceeds ``4 |h|``.
    """
    step = damping * h
    if it > 1 and h != hprev:
        with np.errstate(all="ignore"):
            sec = -h * (eta - prev) / (h - hprev)
        if np.isfinite(sec) and abs(sec) <= 4.0 * abs(h):
            step = sec
    return eta + step


def solve_eta(Q, H0, H1, theta_slope, tracker, damping=ETA_DAMPING, tol=ETA_TOL,
              max_iter=ETA_MAX_ITER):
    """Solve ``eta = theta_slope * (1 - |Q^H W_eta|^2)``.

    Secant iteration with a damped fixed-point fallback (see :func:`eta_step`).

    The iteration starts from ``tracker.eta`` and tracks ``W_eta``
    continuously from ``tracker.W``. On success the tracker is updated.

    Raises
    ------
    NoConvergence
        If the residual ``|target(eta) - eta|`` is still ``>= tol`` after
        ``max_iter`` iterations.
    """
    if theta_slope <= 0:
        raise ValueError("theta_slope must be positive")
    q = _q(Q)
    eta, W = float(tracker.eta), tracker.W
    prev = hprev = 0.0
    for it in range(1, max_iter + 1):
        W, lam = tracked_eigenvector(H0, H1, eta, W)
        h = theta_slope * (1.0 - abs(np.vdot(W, q)) ** 2) - eta
        if abs(h) < tol:
            # converged: the undamped step leaves an error of order g'(eta) h
            eta += h
            break
        nxt = eta_step(eta, h, prev, hprev, it, damping)
        prev, hprev = eta, h
        eta = nxt
    else:
        raise NoConvergence(f"eta iteration did not converge in {max_iter} steps")
    W, lam = tracked_eigenvector(H0, H1, eta, W)
    tracker.eta, tracker.W, tracker.lam, tracker.iterations = eta, W, lam, it
    return eta


# ---------------------------------------------------------------- law objects

class ControlLaw:
    """Base class. Subclasses implement :meth:`raw_fields` and :meth:`lyapunov`.

    ``scale`` multiplies every emitted field (control perturbation).
    """

    def __init__(self, generators, scale=1.0):
        self.generators = [np.asarray(g, dtype=complex) for g in generators]
        self.scale = float(scale)

    @property
    def K(self):
        return len(self.generators)

    def raw_fields(self, q):
        raise NotImplementedError

    def fields(self, Q, t=0.0):
        """Fields after the control-perturbation scale factor."""
        return self.scale * self.raw_fields(_q(Q))

    def lyapunov(self, Q):
        raise NotImplementedError

    def linear_form(self):
        """``(u, g, coef)`` arrays for linear laws, else None."""
        return None

    def reset(self):
        """Clear per-trajectory state."""

    def copy(self):
        import copy
        return copy.deepcopy(self)


class _LinearLaw(ControlLaw):
    # subclasses fill self._u (M x 2N) and self._coef (K x M)

    def linear_form(self):
        g = np.stack([np.stack([H @ u for u in self._u]) for H in self.generators])
        return self._u, g, self._coef

    def raw_fields(self, q):
        b = self._u.conj() @ q
        out = np.empty(self.K)
        for k, H in enumerate(self.generators):
            a = (H @ self._u.T).conj().T @ q
            out[k] = np.sum(self._coef[k] * (a.conj() * b).imag)
        return out


class PMatrixLaw(_LinearLaw):
    """``f_k = -i F_k Q^H [P, H_k] Q`` with ``V = Q^H P Q``.

    Parameters
    ----------
    P : ndarray
        Hermitian matrix commuting with the free dynamics matrix.
    gains : float or sequence
    generators : list of ndarray
        Control dynamics matrices.
    """

    def __init__(self, P, gains, generators, H0=None, scale=1.0):
        super().__init__(generators, scale)
        P = np.asarray(P, dtype=complex)
        if np.max(np.abs(P - P.conj().T)) > COMMUTE_TOL:
            raise ValueError("P must be Hermitian")
        if H0 is not None and np.linalg.norm(H0 @ P - P @ H0) > COMMUTE_TOL:
            raise ValueError("P must commute with the free dynamics matrix")
        self.P = P
        self.gains = _gains(gains, self.K)
        p, V = np.linalg.eigh(P)
        keep = np.abs(p) > 1e-12
        self._u = V[:, keep].T.copy()
        # -i F Q^H[P,H]Q = -2 F sum_m p_m Im((Q^H H u_m)(u_m^H Q))
        self._coef = -2.0 * self.gains[:, None] * p[keep][None, :]

    def lyapunov(self, Q):
        q = _q(Q)
        return float(np.vdot(q, self.P @ q).real)

    def exact_fields(self, Q):
        return np.array([p_matrix_field(Q, self.P, H, F)
                         for H, F in zip(self.generators, self.gains)])


class OverlapLaw(_LinearLaw):
    """``f_k = F_k Im(Q^H H_k Q_T Q_T^H Q)`` with ``V = 1 - |Q^H Q_T|^2``."""

    def __init__(self, target, gains, generators, scale=1.0):
        super().__init__(generators, scale)
        self.target = np.asarray(target, dtype=complex)
        self.gains = _gains(gains, self.K)
        self._u = self.target[None, :]
        self._coef = self.gains[:, None].copy()

    def lyapunov(self, Q):
        return float(1.0 - abs(np.vdot(self.target, _q(Q))) ** 2)


class DualTargetLaw(_LinearLaw):
    """Fill ``T1`` and empty ``T2``; ``V = 2 - |Q^H T1|^2 + |Q^H T2|^2``."""

    def __init__(self, target1, target2, gains, generators, scale=1.0):
        super().__init__(generators, scale)
        self.target1 = np.asarray(target1, dtype=complex)
        self.target2 = np.asarray(target2, dtype=complex)
        if np.allclose(self.target1, self.target2):
            raise ValueError("dual-target law needs two distinct targets")
        self.gains = _gains(gains, self.K)
        self._u = np.stack([self.target1, self.target2])
        self._coef = self.gains[:, None] * np.array([[1.0, -1.0]])

    def lyapunov(self, Q):
        q = _q(Q)
        return float(2.0 - abs(np.vdot(self.target1, q)) ** 2
                     + abs(np.vdot(self.target2, q)) ** 2)


class ImplicitLaw(ControlLaw):
    """Implicit Lyapunov law with an eta-tracked target eigenvector.

    ``f = eta(Q) + F Im(Q^H H_1 W W^H Q)`` where ``W`` is the eigenvector of
    ``H0 + eta H1`` connected to the target and
    ``eta = theta_slope (1 - |Q^H W|^2)``.
    """

    def __init__(self, H0, H1, target, gain=1.0, theta_slope=0.5, scale=1.0):
        if H0.stat is not Statistics.BOSE:
            raise ValueError("implicit law is defined for bosonic B = 0 models")
        super().__init__([bdg_dynamics_matrix(H1)], scale)
        self.H0, self.H1 = H0, H1
        self.target = np.asarray(target, dtype=complex)
        self.gains = _gains(gain, 1)
        if theta_slope <= 0:
            raise ValueError("theta_slope must be positive")
        self.theta_slope = float(theta_slope)
        self.reset()

    def reset(self):
        self.tracker = EtaTracker(0.0, self.target.copy())

    def raw_fields(self, q):
        eta = solve_eta(q, self.H0, self.H1, self.theta_slope, self.tracker)
        return np.array([implicit_field(q, self.tracker.W, self.generators[0],
                                        self.gains[0], eta)])

    def lyapunov(self, Q):
        return float(1.0 - abs(np.vdot(self.tracker.W, _q(Q))) ** 2)


@dataclass
class SquareWave:
    """Bang-bang wrapper: emits ``clip * sign(inner)`` with optional dwell.

    With ``min_dwell > 0`` a sign change is ignored until the previous sign
    has been held for ``min_dwell`` time units.
    """

    inner: ControlLaw
    clip: float
    min_dwell: float = 0.0
    _last: np.ndarray = field(default=None, repr=False)
    _since: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.clip <= 0:
            raise ValueError("clip level must be positive")

    @property
    def generators(self):
        return self.inner.generators

    @property
    def K(self):
        return self.inner.K

    @property
    def scale(self):
        return self.inner.scale

    def raw_fields(self, q):
        return self.inner.raw_fields(q)

    def fields(self, Q, t=0.0):
        # the perturbation scale acts on the emitted +-clip level
        f = self.scale * self.clip * np.sign(self.inner.raw_fields(_q(Q)))
        if self.min_dwell <= 0:
            return f
        if self._last is None:
            self._last, self._since = f.copy(), np.full(f.shape, t)
            return f
        for k in range(f.size):
            if f[k] != self._last[k]:
                if t - self._since[k] >= self.min_dwell:
                    self._last[k], self._since[k] = f[k], t
                else:
                    f[k] = self._last[k]
        return f

    def lyapunov(self, Q):
        return self.inner.lyapunov(Q)

    def linear_form(self):
        return self.inner.linear_form()

    def reset(self):
        self.inner.reset()
        self._last = self._since = None

    def copy(self):
        import copy
        return copy.deepcopy(self)
