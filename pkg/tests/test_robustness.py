import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from topolyap.config import loads
from topolyap.control import OverlapLaw, SquareWave
from topolyap.dynamics import ControlledSystem
from topolyap.errors import ChainTooShort, IndexOutOfRange, NormViolation
from topolyap.hamiltonian import ModeVector, Statistics
from topolyap.models import KitaevParams, boundary_number_control, build_kitaev
from topolyap.robustness import (BulkChemicalNoise, PerturbationSpec, neighbor_leakage,
                                 perturb_boundary_params, perturb_control,
                                 perturb_initial_mode, run_seed, run_sweep, site_mode)

SMALL = """
name = "small"
seed = 3
[model]
kind = "kitaev"
N = 8
J = 2.0
Delta = 1.0
mu = 2.0
[initial]
preset = "single_site"
site = 1
C = [1.0, 0.0]
[law]
kind = "p_matrix"
target = "right"
gains = [10.0, 10.0]
[integrator]
dt = 0.01
t_end = 5.0
record_every = 100
fidelity_targets = ["right"]
"""


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.integers(2, 10))
def test_initial_mixture_is_normalized(eps, j):
    Q0 = site_mode(10, 1, Statistics.FERMI)
    Q = perturb_initial_mode(Q0, eps, j)
    assert Q.check_norm(1e-12)
    assert abs(Q.q[0]) ** 2 == pytest.approx(1 - eps)
    assert abs(Q.q[j - 1]) ** 2 == pytest.approx(eps)


def test_initial_mixture_rejects_overlap():
    Q0 = site_mode(10, 3, Statistics.FERMI)
    with pytest.raises(NormViolation):
        perturb_initial_mode(Q0, 0.1, 3)
    with pytest.raises(IndexOutOfRange):
        perturb_initial_mode(Q0, 0.1, 11)
    with pytest.raises(ValueError):
        perturb_initial_mode(Q0, 1.5, 2)


def test_control_perturbation_scales_every_field():
    rng = np.random.default_rng(0)
    Hk = np.diag(rng.normal(size=4))
    u = np.eye(4)[0]
    q = rng.normal(size=4) + 1j * rng.normal(size=4)
    q /= np.linalg.norm(q)
    for law in (OverlapLaw(u, 1.0, [Hk]), SquareWave(OverlapLaw(u, 1.0, [Hk]), 0.04)):
        new = perturb_control(-0.1)(law)
        np.testing.assert_allclose(new.fields(q, 0.0), 0.9 * law.fields(q, 0.0), rtol=1e-14)
        assert law.scale == 1.0
    with pytest.raises(ValueError):
        perturb_control(-1.0)


def test_neighbor_leakage_adds_neighbour_terms():
    H = build_kitaev(KitaevParams(6, 2.0, 1.0, 3.0))
    controls = [boundary_number_control(6, 1), boundary_number_control(6, 6)]
    sysm = neighbor_leakage(ControlledSystem(H, controls), 0.2)
    mats = sysm.applied_matrices()
    assert mats[0][1, 1] == pytest.approx(0.2 * 3.0)
    assert mats[0][0, 0] == pytest.approx(1.0)
    assert mats[1][4, 4] == pytest.approx(0.2 * 3.0)
    assert mats[1][10, 10] == pytest.approx(-0.6)
    small = build_kitaev(KitaevParams(3, 2.0, 1.0, 3.0))
    with pytest.raises(ChainTooShort):
        neighbor_leakage(ControlledSystem(small, [boundary_number_control(3, 1)]), 0.1)


@pytest.mark.parametrize("which", ["J", "Delta", "mu"])
def test_boundary_perturbation_changes_only_edges(which):
    p = KitaevParams(8, 2.0, 1.0, 2.0)
    H0 = build_kitaev(p)
    H = perturb_boundary_params(p, 0.1, which)
    diff = np.argwhere((H.A != H0.A) | (H.B != H0.B))
    assert diff.size
    assert set(np.unique(diff)) <= {0, 1, 6, 7}
    assert np.max(np.abs(H.A - H0.A) + np.abs(H.B - H0.B)) == pytest.approx(
        {"J": 0.2, "Delta": 0.2, "mu": 0.2}[which])


def test_bulk_noise_draws_distinct_bulk_sites():
    H = build_kitaev(KitaevParams(30, 2.0, 1.0, 2.0))
    noise = BulkChemicalNoise(H, 5, -0.02, 0.02, seed=1)
    idx, val = noise.draw(200)
    assert idx.shape == (200, 10)
    sites = idx[:, :5]
    assert sites.min() >= 1 and sites.max() <= 28
    assert all(len(set(r)) == 5 for r in sites)
    np.testing.assert_array_equal(idx[:, 5:], idx[:, :5] + 30)
    assert np.all(np.abs(val[:, :5]) <= 0.02 * 2.0 + 1e-15)
    np.testing.assert_array_equal(val[:, 5:], -val[:, :5])
    idx2, val2 = BulkChemicalNoise(H, 5, -0.02, 0.02, seed=1).draw(200)
    np.testing.assert_array_equal(idx, idx2)
    np.testing.assert_array_equal(val, val2)


def test_bulk_noise_rejects_too_many_sites():
    H = build_kitaev(KitaevParams(6, 2.0, 1.0, 2.0))
    with pytest.raises(ValueError):
        BulkChemicalNoise(H, 5, -0.02, 0.02, seed=0)


def test_perturbation_spec_validation():
    with pytest.raises(ValueError):
        PerturbationSpec("bogus")
    with pytest.raises(ValueError):
        PerturbationSpec("boundary_param", 0.1)
    with pytest.raises(ValueError):
        PerturbationSpec("bulk_noise", n=0)
    assert PerturbationSpec("bulk_noise", n=4).axis_value == 4.0


def test_seed_rule_is_stable():
    a = run_seed(10, 3, 7)
    assert a == run_seed(10, 3, 7)
    assert len({run_seed(10, i, r) for i in range(5) for r in range(5)}) == 25
    ss = np.random.SeedSequence(10, spawn_key=(3, 7))
    assert a == int(ss.generate_state(1, np.uint64)[0])


def test_sweep_is_deterministic_and_worker_independent():
    cfg = loads(SMALL)
    axis = [PerturbationSpec("initial_mode", value=v) for v in (0.0, 0.05)]
    a = run_sweep(cfg, axis, runs_per_point=3, master_seed=5)
    b = run_sweep(cfg, axis, runs_per_point=3, master_seed=5)
    c = run_sweep(cfg, axis, runs_per_point=3, workers=2, master_seed=5)
    np.testing.assert_array_equal(a.runs, b.runs)
    np.testing.assert_array_equal(a.runs, c.runs)
    assert a.runs.shape == (2, 3)
    assert np.ptp(a.runs[0]) == 0.0
    assert np.all(a.failures == 0)
    assert a.horizon == 5.0
    d = run_sweep(cfg, axis, runs_per_point=3, master_seed=6)
    assert not np.array_equal(a.runs[1], d.runs[1])


def test_sweep_records_failures_as_nan():
    cfg = loads(SMALL.replace('C = [1.0, 0.0]', 'C = [1.0, 0.0]\nD = [0.0, 0.0]'))
    axis = [PerturbationSpec("initial_mode", value=0.1, site=1)]
    res = run_sweep(cfg, axis, runs_per_point=2, master_seed=0)
    assert np.all(np.isnan(res.runs)) and res.failures[0] == 2
    assert "NormViolation" in res.errors[0][2]


def test_empty_axis_rejected():
    from topolyap.errors import SchemaViolation
    with pytest.raises(SchemaViolation):
        run_sweep(loads(SMALL), [], 1)


def test_site_mode_structure():
    Q = site_mode(4, 2, Statistics.BOSE, C=np.sqrt(1.2), D=np.sqrt(0.2))
    assert isinstance(Q, ModeVector) and Q.check_norm()
    assert np.count_nonzero(Q.q) == 2
