"""Perturbation protocols and seeded Monte Carlo fidelity sweeps."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ControlledSystem, check_orthonormal, subspace_occupation
from .errors import ChainTooShort, NormViolation, TopoLyapError
from .hamiltonian import ModeVector, Statistics, mode_norm, validate_quadratic
from .models import kitaev_matrices

log = logging.getLogger(__name__)

KINDS = ("initial_mode", "control_scale", "neighbor_leakage", "boundary_param", "bulk_noise")


@dataclass(frozen=True)
class PerturbationSpec:
    """One perturbation.

    ``kind`` is one of ``initial_mode`` (value = epsilon, optional site),
    ``control_scale`` (value = delta), ``neighbor_leakage`` (value = delta),
    ``boundary_param`` (value = delta, which in {J, Delta, mu}) and
    ``bulk_noise`` (n sites per step, multipliers uniform in [low, high]).
    """

    kind: str
    value: float = 0.0
    site: int = None
    which: str = None
    n: int = None
    low: float = -0.02
    high: float = 0.02

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if not np.isfinite(self.value) or not (np.isfinite(self.low) and np.isfinite(self.high)):
            raise ValueError("perturbation parameters must be finite")
        if self.kind == "boundary_param" and self.which not in ("J", "Delta", "mu"):
            raise ValueError("boundary_param needs which in {J, Delta, mu}")
        if self.kind == "bulk_noise":
            if self.n is None or self.n < 1:
                raise ValueError("bulk_noise needs n >= 1")
            if self.low > self.high:
                raise ValueError("bulk_noise range is empty")

    @property
    def axis_value(self):
        return float(self.n) if self.kind == "bulk_noise" else float(self.value)


@dataclass(eq=False)
class SweepResult:
    """Aggregated fidelities over an axis of perturbations.

    ``fidelities`` holds the per-point mean; ``runs`` the per-run values
    (NaN for failed runs).
    """

    axis: np.ndarray
    fidelities: np.ndarray
    std: np.ndarray
    minimum: np.ndarray
    maximum: np.ndarray
    runs_per_point: int
    failures: np.ndarray
    runs: np.ndarray
    horizon: float = None
    master_seed: int = 0
    errors: list = field(default_factory=list)
    norm_drift: np.ndarray = None

    @property
    def spread(self):
        return self.std


# ---------------------------------------------------------------- protocols

def site_mode(N, site, stat, C=1.0, D=0.0):
    """Mode vector of a single site: ``C a_site + D a_site^dagger``."""
    c = np.zeros(N, complex)
    d = np.zeros(N, complex)
    c[site - 1], d[site - 1] = C, D
    return ModeVector.from_coefficients(c, d, stat)


def perturb_initial_mode(Q0, eps, j):
    """``sqrt(1 - eps) Q0 + sqrt(eps) a_j``.

    Raises
    ------
    NormViolation
        If the mixture is not normalized, which happens when ``Q0`` is not
        orthogonal to ``a_j``.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    if not 1 <= j <= Q0.N:
        from .errors import IndexOutOfRange
        raise IndexOutOfRange(f"site {j} outside 1..{Q0.N}")
    q = np.sqrt(1.0 - eps) * Q0.q + np.sqrt(eps) * site_mode(Q0.N, j, Q0.stat).q
    out = ModeVector(q, Q0.stat)
    if abs(mode_norm(out) - 1.0) > 1e-9:
        raise NormViolation(f"mixture norm {mode_norm(out):.12g}; initial mode is not "
                            f"orthogonal to site {j}")
    return out


def perturb_control(delta):
    """Return a transformer scaling every field of a law by ``1 + delta``."""
    if not delta > -1:
        raise ValueError("delta must exceed -1")

    def transform(law):
        new = law.copy()
        target = getattr(new, "inner", new)
        target.scale = target.scale * (1.0 + delta)
        return new

    return transform


def _control_site(h):
    d = np.flatnonzero(np.abs(np.diag(h.A)) > 0)
    off = h.A - np.diag(np.diag(h.A))
    if d.size != 1 or np.any(off) or np.any(h.B):
        raise ValueError("leakage needs single-site number controls")
    return int(d[0]) + 1


def neighbor_leakage(sysm, delta):
    """Slave an on-site term ``delta f_k mu_j`` at the inner neighbour of each
    boundary control (site 2 for site 1, site N-1 for site N).
    """
    N = sysm.N
    if N < 4:
        raise ChainTooShort(f"leakage needs N >= 4, got {N}")
    if delta < 0:
        raise ValueError("leakage strength must be non-negative")
    leak = []
    for k, h in enumerate(sysm.controls):
        s = _control_site(h)
        if s == 1:
            nb = 2
        elif s == N:
            nb = N - 1
        else:
            raise ValueError("leakage is defined for controls at sites 1 and N")
        A = np.zeros((N, N))
        A[nb - 1, nb - 1] = delta * sysm.H0.A[nb - 1, nb - 1].real
        leak.append((k, validate_quadratic(A, np.zeros((N, N)), sysm.stat)))
    return ControlledSystem(sysm.H0, list(sysm.controls), sysm.law,
                            list(sysm.leakage) + leak, sysm.noise)


def perturb_boundary_params(p, delta, which):
    """Kitaev chain with ``which`` scaled by ``1 + delta`` on elements touching
    sites 1 and N only.
    """
    if which not in ("J", "Delta", "mu"):
        raise ValueError(f"unknown boundary parameter {which!r}")
    kw = {f"{which}_edge": (1.0 + delta) * getattr(p, which)}
    A, B = kitaev_matrices(p.N, p.J, p.Delta, p.mu, **kw)
    return validate_quadratic(A, B, Statistics.FERMI)


class BulkChemicalNoise:
    """Per-step on-site noise ``mu_j -> (1 + eps) mu_j``.

    Every integrator step draws ``n`` distinct bulk sites from 2..N-1 and
    independent ``eps`` uniform in ``[low, high]``.
    """

    def __init__(self, H, n, low=-0.02, high=0.02, seed=None):
        N = H.N
        if not 1 <= n <= N - 2:
            raise ValueError(f"n must lie in 1..{N - 2}")
        self.N, self.n, self.low, self.high = N, int(n), float(low), float(high)
        self.mu = np.diag(H.A).real.copy()
        self.rng = np.random.default_rng(seed)

    def draw(self, steps):
        """Diagonal increments of the dynamics matrix for ``steps`` steps.

        Returns
        -------
        idx : int ndarray, shape (steps, 2n)
        val : float ndarray, shape (steps, 2n)
        """
        keys = self.rng.random((steps, self.N - 2))
        sites = np.argpartition(keys, self.n - 1, axis=1)[:, : self.n] + 1
        eps = self.rng.uniform(self.low, self.high, (steps, self.n))
        dmu = eps * self.mu[sites]
        idx = np.concatenate([sites, sites + self.N], axis=1).astype(np.int64)
        val = np.concatenate([dmu, -dmu], axis=1)
        return idx, val


def bulk_chemical_noise(H, n, range_=(-0.02, 0.02), rng_seed=None):
    """Noise source for :class:`ControlledSystem` (see :class:`BulkChemicalNoise`)."""
    return BulkChemicalNoise(H, n, range_[0], range_[1], rng_seed)


def fidelity(Q, targets):
    """Summed occupation of an orthonormal target set."""
    check_orthonormal(targets)
    return subspace_occupation(Q, targets)


# ---------------------------------------------------------------- sweeps

def run_seed(master, axis_index, run_index):
    """Per-run seed derived from the master seed.

    ``SeedSequence(master, spawn_key=(axis_index, run_index))``; returns a
    64-bit integer so the value can be echoed in outputs.
    """
    ss = np.random.SeedSequence(int(master), spawn_key=(int(axis_index), int(run_index)))
    return int(ss.generate_state(1, np.uint64)[0])


def _one_run(args):
    base, perts, seed, horizon = args
    from .experiment import run_config
    try:
        res = run_config(base, perturbations=perts, seed=seed, t_end=horizon,
                         stop_fidelity=None)
        return float(res.fidelity), res.trajectory.norm_drift, None
    except TopoLyapError as exc:
        return float("nan"), float("nan"), f"{type(exc).__name__}: {exc}"


def clean_horizon(base):
    """Stop time of the unperturbed run (its ``stop_fidelity`` threshold)."""
    from .experiment import run_config
    res = run_config(base, perturbations=[], seed=0)
    return float(res.trajectory.stop_time)


def run_sweep(base, axis, runs_per_point=1, workers=1, master_seed=0, horizon=None):
    """Seeded fidelity sweep.

    Parameters
    ----------
    base : RunConfig
        Unperturbed run. If ``horizon`` is None and ``base`` has a stop
        fidelity, the horizon is the clean run's stop time; otherwise
        ``base.integrator.t_end``.
    axis : sequence of PerturbationSpec or of lists of PerturbationSpec
    runs_per_point : int
    workers : int
        Number of worker processes (1 runs in-process).
    master_seed : int

    Returns
    -------
    SweepResult
        Deterministic in ``master_seed``, independent of ``workers``.
    """
    from .config import SchemaViolation
    axis = [a if isinstance(a, (list, tuple)) else [a] for a in axis]
    if not axis:
        raise SchemaViolation("sweep.axis", "axis must not be empty")
    if runs_per_point < 1:
        raise SchemaViolation("sweep.runs_per_point", "must be >= 1")
    if horizon is None:
        if base.integrator.stop_fidelity is not None:
            horizon = clean_horizon(base)
        else:
            horizon = base.integrator.t_end
    jobs = [(base, perts, run_seed(master_seed, i, r), horizon)
            for i, perts in enumerate(axis) for r in range(runs_per_point)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_one_run, jobs, chunksize=1))
    else:
        results = [_one_run(j) for j in jobs]
    vals = np.array([r[0] for r in results]).reshape(len(axis), runs_per_point)
    drift = np.array([r[1] for r in results]).reshape(vals.shape)
    errors = [(i // runs_per_point, i % runs_per_point, r[2])
              for i, r in enumerate(results) if r[2] is not None]
    for e in errors:
        log.warning("sweep point %d run %d failed: %s", *e)
    fails = np.isnan(vals).sum(axis=1)
    with np.errstate(invalid="ignore"):
        ok = ~np.isnan(vals)
        mean = np.array([v[m].mean() if m.any() else np.nan for v, m in zip(vals, ok)])
        std = np.array([v[m].std() if m.any() else np.nan for v, m in zip(vals, ok)])
        lo = np.array([v[m].min() if m.any() else np.nan for v, m in zip(vals, ok)])
        hi = np.array([v[m].max() if m.any() else np.nan for v, m in zip(vals, ok)])
    xs = np.array([p[0].axis_value if p else 0.0 for p in axis])
    return SweepResult(xs, mean, std, lo, hi, runs_per_point, fails, vals, horizon,
                       int(master_seed), errors, np.nanmax(drift, axis=1, initial=0.0))
