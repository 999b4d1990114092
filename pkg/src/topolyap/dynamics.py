"""Controlled coefficient dynamics ``-i dQ/dt = (H0 + sum_k f_k H_k) Q``.

Fixed-step RK4; the feedback fields are re-evaluated from the stage state
inside every stage. A compiled path (see ``_kernels``) handles diagonal
control generators and the built-in laws; everything else falls back to
the NumPy reference integrator, which follows the same recording rules.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .control import ETA_DAMPING, ETA_MAX_ITER, ETA_TOL, ImplicitLaw, SquareWave
from .errors import (DimensionMismatch, InvalidStep, NoConvergence, NonOrthonormalBasis,
                     NormDrift, NormViolation)
from .hamiltonian import ModeVector, Statistics, mode_norm, norm_metric
from .spectral import bdg_dynamics_matrix

log = logging.getLogger(__name__)

NORM_ABORT = 1e-6
NORM_WARN = 1e-8
ORTHO_TOL = 1e-8
CHUNK_STEPS = 1 << 18


@dataclass(eq=False)
class ControlledSystem:
    """Free Hamiltonian, control generators and a feedback law.

    Attributes
    ----------
    H0 : QuadraticHamiltonian
    controls : list of QuadraticHamiltonian
        Generators whose dynamics matrices are driven by the law's fields.
    law : control law or None
        ``None`` means free evolution.
    leakage : list of (int, QuadraticHamiltonian)
        Extra generators slaved to control ``k``: driven by the same field.
    noise : object or None
        Per-step diagonal noise source with a ``draw(nsteps)`` method.
    """

    H0: object
    controls: list = field(default_factory=list)
    law: object = None
    leakage: list = field(default_factory=list)
    noise: object = None

    def __post_init__(self):
        for h in list(self.controls) + [h for _, h in self.leakage]:
            if h.N != self.H0.N or h.stat is not self.H0.stat:
                raise DimensionMismatch("all Hamiltonians must share N and statistics")
        if self.law is not None and self.law.K != len(self.controls):
            raise DimensionMismatch("law emits a different number of fields than controls")
        for k, _ in self.leakage:
            if not 0 <= k < len(self.controls):
                raise DimensionMismatch(f"leakage slaved to unknown control {k}")

    @property
    def N(self):
        return self.H0.N

    @property
    def stat(self):
        return self.H0.stat

    def free_matrix(self):
        return bdg_dynamics_matrix(self.H0)

    def applied_matrices(self):
        """Per-field dynamics matrices including slaved leakage terms."""
        mats = [bdg_dynamics_matrix(h).astype(complex) for h in self.controls]
        for k, h in self.leakage:
            mats[k] = mats[k] + bdg_dynamics_matrix(h)
        return mats


@dataclass(eq=False)
class Trajectory:
    """Recorded run.

    Attributes
    ----------
    times : ndarray, shape (R,)
    states : ndarray, shape (R, 2N)
        Mode vectors ``q`` at the recorded times.
    fields : ndarray, shape (R, K)
    lyapunov : ndarray, shape (R,)
    occupations : dict of name -> ndarray, shape (R,)
    stat : Statistics
    status : str
        ``"completed"`` or ``"stopped"`` (fidelity threshold reached).
    max_v_increase : float
        Largest per-step relative increase of V.
    norm_drift : float
        Largest deviation of the statistics norm from its initial value.
    """

    times: np.ndarray
    states: np.ndarray
    fields: np.ndarray
    lyapunov: np.ndarray
    occupations: dict
    stat: Statistics
    status: str = "completed"
    max_v_increase: float = 0.0
    norm_drift: float = 0.0
    eta: float = None

    def __len__(self):
        return self.times.size

    def state(self, i):
        return ModeVector(self.states[i], self.stat)

    @property
    def final(self):
        return self.state(-1)

    @property
    def stop_time(self):
        return float(self.times[-1])


def occupation(Q, U):
    """``|Q^H U|^2``."""
    q = np.asarray(getattr(Q, "q", Q))
    U = np.asarray(U)
    if q.shape != U.shape:
        raise DimensionMismatch(f"lengths {q.shape} and {U.shape} differ")
    return float(abs(np.vdot(q, U)) ** 2)


def check_orthonormal(Us, tol=ORTHO_TOL):
    Us = np.atleast_2d(np.asarray(Us))
    if Us.shape[0] == 0:
        raise NonOrthonormalBasis("empty basis")
    G = Us.conj() @ Us.T
    err = np.max(np.abs(G - np.eye(G.shape[0])))
    if err > tol:
        raise NonOrthonormalBasis(f"basis deviates from orthonormal by {err:.2e}")
    return Us


def subspace_occupation(Q, Us):
    """Sum of ``|Q^H U|^2`` over an orthonormal set."""
    Us = check_orthonormal(Us)
    return float(sum(occupation(Q, U) for U in Us))


# ---------------------------------------------------------------- set-up helpers

def _is_diagonal(M):
    return not np.any(M - np.diag(np.diag(M)))


def _unwrap(law):
    clip, dwell = 0.0, 0.0
    if isinstance(law, SquareWave):
        clip, dwell = law.clip, law.min_dwell
        law = law.inner
    return law, clip, dwell


def _implicit_setup(law):
    H0 = law.H0
    if np.iscomplexobj(H0.A) and np.any(H0.A.imag):
        return None
    d1 = np.diag(law.H1.A).real
    nz = np.flatnonzero(d1)
    if nz.size != 1 or np.any(law.H1.A - np.diag(np.diag(law.H1.A))):
        return None
    N = H0.N
    tgt = law.tracker.W
    in_c = np.linalg.norm(tgt[:N]) ** 2 > 0.5
    if min(np.linalg.norm(tgt[:N]), np.linalg.norm(tgt[N:])) > 1e-12:
        return None
    off = 0 if in_c else N
    block = H0.A.real if in_c else -H0.A.real
    sgn = (1.0 if in_c else -1.0) * d1[nz[0]]
    gv, V = np.linalg.eigh(block)
    tb = tgt[off:off + N]
    T = int(np.argmax(np.abs(V.T @ tb)))
    if abs(abs(V[:, T] @ tb) - 1) > 1e-8 or np.max(np.abs(tb.imag)) > 1e-12:
        return None
    if V[:, T] @ tb.real < 0:
        V[:, T] *= -1
    site = int(nz[0])
    return dict(V=np.ascontiguousarray(V), gv=gv, cv=V[site].copy(), T=T, off=off,
                site=site, sgn=float(sgn), F=float(law.gains[0]), slope=law.theta_slope)


def _fast_plan(sysm):
    mats = sysm.applied_matrices()
    if not all(_is_diagonal(M) for M in mats):
        return None
    law, clip, dwell = _unwrap(sysm.law)
    if dwell > 0:
        return None
    n = 2 * sysm.N
    plan = dict(apply_diag=np.array([np.diag(M).real for M in mats]).reshape(len(mats), n),
                clip=float(clip), scale=1.0, kind=0)
    if any(np.any(np.diag(M).imag) for M in mats):
        return None
    if law is None:
        K = len(mats)
        plan.update(g=np.zeros((K, 1, n), complex), u=np.zeros((1, n), complex),
                    coef=np.zeros((K, 1)), vu=np.zeros((0, n), complex), vp=np.zeros(0),
                    voff=0.0)
        return plan
    plan["scale"] = float(law.scale)
    if isinstance(law, ImplicitLaw):
        imp = _implicit_setup(law)
        if imp is None:
            return None
        plan.update(kind=1, imp=imp)
        return plan
    form = law.linear_form()
    if form is None:
        return None
    u, g, coef = form
    # V as voff + sum_m vp[m] |vu[m]^H q|^2
    if hasattr(law, "P"):
        p, W = np.linalg.eigh(law.P)
        keep = np.abs(p) > 1e-12
        vu, vp, voff = W[:, keep].T, p[keep], 0.0
    elif hasattr(law, "target1"):
        vu, vp, voff = np.stack([law.target1, law.target2]), np.array([-1.0, 1.0]), 2.0
    else:
        vu, vp, voff = law.target[None, :], np.array([-1.0]), 1.0
    plan.update(g=np.ascontiguousarray(g, complex), u=np.ascontiguousarray(u, complex),
                coef=np.ascontiguousarray(coef, float),
                vu=np.ascontiguousarray(vu, complex), vp=np.asarray(vp, float), voff=voff)
    return plan


def _empty_noise(steps):
    return np.zeros((0, 1), np.int64), np.zeros((0, 1))


# ---------------------------------------------------------------- integrators

def _run_fast(sysm, plan, q0, nsteps, dt, every, stop_u, stop_level):
    n = q0.size
    K = plan["apply_diag"].shape[0]
    S = sp.csr_matrix(sysm.free_matrix().astype(complex))
    S.sort_indices()
    metric = norm_metric(sysm.stat, sysm.N)
    acc = np.array([0.0, 0.0, -np.inf, 0.0, abs(np.sum(metric * np.abs(q0) ** 2))])
    imp = plan.get("imp")
    if imp is None:
        imp = dict(V=np.zeros((1, 1)), gv=np.zeros(1), cv=np.zeros(1), T=0, off=0, site=0,
                   sgn=0.0, F=0.0, slope=0.0)
        istate = np.zeros(8)
    else:
        inner, _, _ = _unwrap(sysm.law)
        istate = np.array([inner.tracker.eta, imp["gv"][imp["T"]], 0.0, 0.0,
                           inner.tracker.eta, -2.0, -1.0, 0.0])
    lin = plan if plan["kind"] == 0 else dict(
        g=np.zeros((K, 1, n), complex), u=np.zeros((1, n), complex), coef=np.zeros((K, 1)),
        vu=np.zeros((0, n), complex), vp=np.zeros(0), voff=0.0)
    chunks_t, chunks_q, chunks_f, chunks_v = [], [], [], []
    q = q0.astype(complex)
    s0 = 0
    status = 0
    while True:
        steps = min(CHUNK_STEPS, nsteps - s0)
        last = s0 + steps == nsteps
        if sysm.noise is not None and steps > 0:
            nidx, nval = sysm.noise.draw(steps)
        else:
            nidx, nval = _empty_noise(steps)
        cap = steps // every + 3
        rq = np.empty((cap, n), complex)
        rf = np.empty((cap, K))
        rv = np.empty(cap)
        rt = np.empty(cap)
        q, done, nrec, status = _kernels.integrate(
            q, S.data, S.indices.astype(np.int64), S.indptr.astype(np.int64),
            plan["apply_diag"], plan["kind"],
            lin["g"], lin["u"], lin["coef"], lin["vu"], lin["vp"], float(lin["voff"]),
            imp["V"], imp["gv"], imp["cv"], imp["T"], imp["off"], imp["site"], imp["sgn"],
            imp["F"], imp["slope"], ETA_DAMPING, ETA_TOL, ETA_MAX_ITER, istate,
            plan["scale"], plan["clip"], metric, nidx, nval, stop_u, stop_level,
            dt, s0, steps, every, last, rq, rf, rv, rt, acc)
        chunks_t.append(rt[:nrec])
        chunks_q.append(rq[:nrec])
        chunks_f.append(rf[:nrec])
        chunks_v.append(rv[:nrec])
        s0 += done
        if status != 0 or last:
            break
    eta = None
    if plan["kind"] == 1:
        eta = float(istate[0])
        _sync_tracker(sysm.law, imp, istate)
    rec = (np.concatenate(chunks_t), np.concatenate(chunks_q), np.concatenate(chunks_f),
           np.concatenate(chunks_v))
    return rec, q, s0, status, float(max(acc[2], 0.0)), float(acc[3]), eta


def _sync_tracker(law, imp, istate):
    law, _, _ = _unwrap(law)
    W = np.empty(imp["gv"].size)
    lam = _kernels._secular(imp["gv"], imp["cv"], imp["T"], imp["sgn"] * istate[0],
                            istate[1])
    _kernels._tracked(imp["V"], imp["gv"], imp["cv"], imp["T"], imp["sgn"] * istate[0],
                      lam, W)
    full = np.zeros(law.target.size, complex)
    full[imp["off"]:imp["off"] + W.size] = W
    law.tracker.eta, law.tracker.W, law.tracker.lam = float(istate[0]), full, float(lam)


def _run_reference(sysm, q0, nsteps, dt, every, stop_u, stop_level):
    M0 = sysm.free_matrix().astype(complex)
    mats = sysm.applied_matrices()
    law = sysm.law
    metric = norm_metric(sysm.stat, sysm.N)
    norm0 = abs(np.sum(metric * np.abs(q0) ** 2))
    K = len(mats)
    ts, qs, fs, vs = [], [], [], []
    q = q0.astype(complex)
    vprev = None
    max_dv, max_drift = -np.inf, 0.0
    status = 0
    noise = None
    step = 0

    hold = isinstance(law, SquareWave)

    def rhs(x, t, extra, f=None):
        if f is None:
            f = law.fields(x, t) if law is not None else np.zeros(K)
        M = M0 + sum(fk * Mk for fk, Mk in zip(f, mats)) if K else M0
        out = M @ x
        if extra is not None:
            out = out + extra * x
        return 1j * out, f

    while True:
        t = step * dt
        if sysm.noise is not None and step < nsteps:
            if noise is None or noise[2] >= noise[0].shape[0]:
                idx, val = sysm.noise.draw(min(CHUNK_STEPS, nsteps - step))
                noise = [idx, val, 0]
            extra = np.zeros(q.size)
            np.add.at(extra, noise[0][noise[2]], noise[1][noise[2]])
            noise[2] += 1
        else:
            extra = None
        try:
            k1, f1 = rhs(q, t, extra)
        except NoConvergence:
            status = _kernels.STATUS_NO_CONVERGENCE
            f1 = np.full(K, np.nan)
        v = law.lyapunov(q) if law is not None else 0.0
        if vprev is not None:
            max_dv = max(max_dv, (v - vprev) / max(1.0, abs(vprev)))
        vprev = v
        stop_now = False
        if stop_level > 0 and np.sum(np.abs(stop_u.conj() @ q) ** 2) >= stop_level:
            stop_now = True
            status = status or _kernels.STATUS_STOPPED
        if step % every == 0 or step == nsteps or stop_now or status > 1:
            ts.append(t)
            qs.append(q.copy())
            fs.append(np.asarray(f1, float))
            vs.append(v)
        if step == nsteps or stop_now or status > 1:
            break
        # bang-bang fields are held over the whole step
        fh = f1 if hold else None
        k2, _ = rhs(q + 0.5 * dt * k1, t + 0.5 * dt, extra, fh)
        k3, _ = rhs(q + 0.5 * dt * k2, t + 0.5 * dt, extra, fh)
        k4, _ = rhs(q + dt * k3, t + dt, extra, fh)
        q = q + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        step += 1
        drift = abs(abs(np.sum(metric * np.abs(q) ** 2)) - norm0)
        max_drift = max(max_drift, drift)
        if drift > NORM_ABORT:
            status = _kernels.STATUS_NORM_DRIFT
            break
    rec = (np.array(ts), np.array(qs).reshape(len(qs), q.size),
           np.array(fs).reshape(len(fs), K), np.array(vs))
    inner, _, _ = _unwrap(law) if law is not None else (None, 0, 0)
    eta = inner.tracker.eta if isinstance(inner, ImplicitLaw) else None
    return rec, q, step, status, float(max(max_dv, 0.0)), max_drift, eta


def evolve(sysm, Q0, t_end, dt=0.01, observables=None, *, record_every=1,
           stop_fidelity=None, stop_targets=None, method="auto"):
    """Integrate the controlled dynamics with fixed-step RK4.

    Parameters
    ----------
    sysm : ControlledSystem
    Q0 : ModeVector
        Must satisfy its statistics norm within 1e-9.
    t_end : float
        Final time; the run takes ``ceil(t_end / dt)`` steps.
    dt : float
    observables : dict of name -> 2N vector, optional
        Occupations ``|Q^H v|^2`` recorded alongside the state.
    record_every : int
        Record every m-th step (the first and last states are always kept).
    stop_fidelity : float, optional
        Stop once the summed occupation of ``stop_targets`` reaches it.
    stop_targets : list of 2N vectors, optional
    method : {"auto", "fast", "reference"}

    Returns
    -------
    Trajectory

    Raises
    ------
    InvalidStep
        If ``dt <= 0`` or ``t_end < 0``.
    NormViolation
        If ``Q0`` violates its norm.
    NormDrift
        If the norm drifts by more than 1e-6; ``exc.last_good_time`` and
        ``exc.trajectory`` hold the partial result.
    NoConvergence
        If the implicit law's eta iteration fails.
    """
    if not dt > 0:
        raise InvalidStep(f"dt must be positive, got {dt}")
    if not t_end >= 0:
        raise InvalidStep(f"t_end must be non-negative, got {t_end}")
    if int(record_every) < 1:
        raise InvalidStep("record_every must be >= 1")
    if not isinstance(Q0, ModeVector):
        Q0 = ModeVector(Q0, sysm.stat)
    if Q0.N != sysm.N:
        raise DimensionMismatch("initial mode does not match the system size")
    if not Q0.check_norm():
        raise NormViolation(f"initial mode norm {mode_norm(Q0):.12g} differs from 1")
    nsteps = int(np.ceil(t_end / dt - 1e-9))
    n = 2 * sysm.N
    if stop_fidelity is not None:
        stop_u = check_orthonormal(stop_targets).astype(complex)
        stop_level = float(stop_fidelity)
    else:
        stop_u, stop_level = np.zeros((0, n), complex), 0.0
    if sysm.law is not None:
        sysm.law.reset()
    plan = _fast_plan(sysm) if method in ("auto", "fast") else None
    if method == "fast" and plan is None:
        raise ValueError("system is not eligible for the compiled integrator")
    if plan is not None:
        out = _run_fast(sysm, plan, Q0.q, nsteps, dt, int(record_every), stop_u, stop_level)
    else:
        out = _run_reference(sysm, Q0.q, nsteps, dt, int(record_every), stop_u, stop_level)
    (times, states, fields, lyap), q, steps, status, max_dv, drift, eta = out
    occ = {}
    for name, v in (observables or {}).items():
        v = np.asarray(v, complex)
        if v.shape != (n,):
            raise DimensionMismatch(f"observable {name!r} has wrong length")
        occ[name] = np.abs(states @ v.conj()) ** 2
    traj = Trajectory(times, states, fields, lyap, occ, sysm.stat,
                      "stopped" if status == _kernels.STATUS_STOPPED else "completed",
                      max_dv, drift, eta)
    if status == _kernels.STATUS_NORM_DRIFT:
        exc = NormDrift(f"norm drift exceeded {NORM_ABORT:g} after t={steps * dt:.6g}",
                        last_good_time=(steps - 1) * dt)
        exc.trajectory = traj
        raise exc
    if status == _kernels.STATUS_NO_CONVERGENCE:
        exc = NoConvergence(f"eta iteration failed near t={steps * dt:.6g}")
        exc.trajectory = traj
        raise exc
    if drift > NORM_WARN:
        log.warning("norm drift %.3g exceeds %.0e; consider a smaller dt", drift, NORM_WARN)
    return traj
