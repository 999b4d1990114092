"""Assemble and run a configured experiment: model, spectrum, law, dynamics."""

from dataclasses import dataclass

import numpy as np

from . import __version__
from .control import (DualTargetLaw, ImplicitLaw, OverlapLaw, PMatrixLaw, SquareWave,
                      build_p_matrix)
from .dynamics import ControlledSystem, evolve
from .errors import NoMidGapMode, NormViolation, SchemaViolation
from .hamiltonian import ModeVector, mode_norm
from .models import (KitaevParams, SSHParams, boundary_number_control, build_kitaev,
                     build_ssh)
from .robustness import (bulk_chemical_noise, fidelity, neighbor_leakage,
                         perturb_boundary_params, perturb_control, perturb_initial_mode)
from .spectral import bdg_dynamics_matrix, eigenmodes, identify_edge_modes

SCHEMA_VERSION = 1
INIT_NORM_TOL = 1e-6


@dataclass(eq=False)
class RunResult:
    config: object
    spectrum: object
    trajectory: object
    fidelity: float
    fidelity_targets: list
    seed: int
    perturbations: list

    def summary(self):
        tr = self.trajectory
        occ = {k: float(v[-1]) for k, v in tr.occupations.items()}
        stopped = tr.status == "stopped"
        return {
            "schema_version": SCHEMA_VERSION,
            "software_version": __version__,
            "name": self.config.name,
            "seed": int(self.seed),
            "final_occupations": occ,
            "fidelity": float(self.fidelity),
            "fidelity_targets": [str(t) for t in self.fidelity_targets],
            "stop_time": float(tr.stop_time),
            "stop_reason": "stop_fidelity" if stopped else "t_end",
            "stop_condition_met": bool(stopped),
            "final_fields": [float(f) for f in tr.fields[-1]],
            "final_eta": None if tr.eta is None else float(tr.eta),
            "norm_drift": float(tr.norm_drift),
            "max_v_increase": float(tr.max_v_increase),
            "recorded_points": len(tr),
            "edge_labels": {k: int(v) for k, v in self.spectrum.edge_labels.items()},
            "perturbations": [p.__dict__ for p in self.perturbations],
            "config": self.config.to_dict(),
        }


def model_params(m):
    if m.kind == "kitaev":
        return KitaevParams(m.N, m.J, m.Delta, m.mu)
    return SSHParams(m.N, m.J, m.delta, m.mu)


def build_model(m):
    """QuadraticHamiltonian for a model config."""
    p = model_params(m)
    return build_kitaev(p) if m.kind == "kitaev" else build_ssh(p)


def spectrum_of(H, require_labels=False):
    """Decomposition with edge labels when the chain has mid-gap modes."""
    spec = eigenmodes(H)
    try:
        return spec.with_labels(identify_edge_modes(spec, H))
    except NoMidGapMode:
        if require_labels:
            raise
        return spec


def initial_mode(ini, N, stat):
    """Mode vector for an initial-mode config, renormalized within 1e-6."""
    c = np.zeros(N, complex)
    d = np.zeros(N, complex)
    if ini.preset == "uniform_both":
        c[:] = d[:] = 1.0 / np.sqrt(2 * N)
    elif ini.preset == "uniform_creation":
        d[:] = 1.0 / np.sqrt(N)
    elif ini.preset == "uniform_annihilation":
        c[:] = 1.0 / np.sqrt(N)
    elif ini.preset == "single_site":
        c[ini.site - 1] = complex(*ini.C)
        d[ini.site - 1] = complex(*ini.D)
    else:
        c[:] = [complex(*x) for x in ini.C_list]
        d[:] = [complex(*x) for x in ini.D_list]
    Q = ModeVector.from_coefficients(c, d, stat)
    nrm = mode_norm(Q)
    if abs(nrm - 1.0) > INIT_NORM_TOL:
        raise NormViolation(f"initial mode has norm {nrm:.9g}")
    return ModeVector(Q.q / np.sqrt(nrm), stat)


def control_sites(cfg):
    if cfg.law.controls is not None:
        return list(cfg.law.controls)
    return [1, cfg.model.N] if cfg.model.kind == "kitaev" else [1]


def default_fidelity_targets(cfg):
    if cfg.integrator is not None and cfg.integrator.fidelity_targets:
        return list(cfg.integrator.fidelity_targets)
    ini = cfg.initial
    mixed = ini.preset == "uniform_both" or (
        ini.preset == "single_site" and complex(*ini.C) != 0 and complex(*ini.D) != 0)
    if cfg.model.kind == "kitaev" and mixed:
        return ["left", "right"]
    return [cfg.law.target]


def build_law(cfg, H, spec, controls):
    law_cfg = cfg.law
    if law_cfg.kind == "none":
        return None
    gens = [bdg_dynamics_matrix(c) for c in controls]
    K = len(gens)
    gains = law_cfg.gains
    if len(gains) not in (1, K):
        raise SchemaViolation("law.gains", f"expected 1 or {K} gains")
    gains = np.broadcast_to(np.array(gains, float), (K,))
    t1 = spec.resolve(law_cfg.target)
    if law_cfg.kind == "p_matrix":
        law = PMatrixLaw(build_p_matrix(spec, t1), gains, gens, H0=bdg_dynamics_matrix(H))
    elif law_cfg.kind == "overlap":
        law = OverlapLaw(spec.vector(t1), gains, gens)
    elif law_cfg.kind == "dual_target":
        t2 = spec.resolve(law_cfg.target2)
        law = DualTargetLaw(spec.vector(t1), spec.vector(t2), gains, gens)
    else:
        if K != 1:
            raise SchemaViolation("law.controls", "implicit law takes exactly one control")
        law = ImplicitLaw(H, controls[0], spec.vector(t1), gains[0], law_cfg.theta_slope)
    if law_cfg.square_wave is not None:
        law = SquareWave(law, law_cfg.square_wave, law_cfg.min_dwell)
    return law


def build_run(cfg, perturbations=(), rng=None):
    """Construct the controlled system, initial mode and observables.

    The law and fidelity targets are designed on the nominal Hamiltonian;
    boundary-parameter deviations only alter the evolution.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    m = cfg.model
    H = build_model(m)
    stat = H.stat
    spec = spectrum_of(H)
    controls = [boundary_number_control(m.N, s, stat) for s in control_sites(cfg)]
    law = build_law(cfg, H, spec, controls)
    Q0 = initial_mode(cfg.initial, m.N, stat)
    H_phys = H
    leak = None
    noise = []
    for p in perturbations:
        if p.kind == "initial_mode":
            j = p.site if p.site is not None else int(rng.integers(2, m.N + 1))
            Q0 = perturb_initial_mode(Q0, p.value, j)
        elif p.kind == "control_scale":
            if law is not None:
                law = perturb_control(p.value)(law)
        elif p.kind == "neighbor_leakage":
            leak = p.value
        elif p.kind == "boundary_param":
            if m.kind != "kitaev":
                raise SchemaViolation("perturbations.kind", "boundary_param needs kitaev")
            H_phys = perturb_boundary_params(model_params(m), p.value, p.which)
        else:
            noise.append(p)
    sysm = ControlledSystem(H_phys, controls, law)
    if leak is not None:
        sysm = neighbor_leakage(sysm, leak)
    if noise:
        if len(noise) > 1:
            raise SchemaViolation("perturbations", "at most one bulk_noise entry")
        p = noise[0]
        sysm.noise = bulk_chemical_noise(H, p.n, (p.low, p.high),
                                         int(rng.integers(0, 2 ** 63)))
    obs = {k: spec.vector(v) for k, v in sorted(spec.edge_labels.items())}
    targets = default_fidelity_targets(cfg)
    tvecs = [spec.vector(spec.resolve(t)) for t in targets]
    return sysm, Q0, obs, targets, tvecs, spec


def run_config(cfg, perturbations=None, seed=None, t_end=None, stop_fidelity="config",
               record_every=None, method="auto"):
    """Run one configured trajectory.

    Parameters
    ----------
    cfg : RunConfig
    perturbations : list of PerturbationSpec, optional
        Defaults to ``cfg.perturbations``.
    seed : int, optional
        Seed for randomized protocols; defaults to ``cfg.seed``.
    t_end, record_every : optional overrides
    stop_fidelity : float or None or "config"
        ``"config"`` uses the configured threshold, None disables stopping.
    """
    if cfg.integrator is None:
        raise SchemaViolation("integrator", "evolution needs an [integrator] table")
    perts = list(cfg.perturbations if perturbations is None else perturbations)
    seed = cfg.seed if seed is None else int(seed)
    rng = np.random.default_rng(seed)
    sysm, Q0, obs, targets, tvecs, spec = build_run(cfg, perts, rng)
    integ = cfg.integrator
    stop = integ.stop_fidelity if stop_fidelity == "config" else stop_fidelity
    traj = evolve(sysm, Q0, integ.t_end if t_end is None else t_end, integ.dt, obs,
                  record_every=record_every or integ.record_every,
                  stop_fidelity=stop, stop_targets=tvecs if stop is not None else None,
                  method=method)
    fid = fidelity(traj.final, tvecs)
    return RunResult(cfg, spec, traj, fid, targets, seed, perts)


def sweep_axis(sw):
    """PerturbationSpec list for one sweep table."""
    from .robustness import PerturbationSpec
    out = []
    for v in sw.values:
        if sw.kind == "bulk_noise":
            out.append(PerturbationSpec("bulk_noise", n=int(v), low=sw.low, high=sw.high))
        else:
            out.append(PerturbationSpec(sw.kind, value=float(v), site=sw.site, which=sw.which))
    return out
