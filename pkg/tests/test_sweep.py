import numpy as np
import pytest

from gridform_ssa import modal, netmodel, sensitivity, sweep
from gridform_ssa.devices import DevicePark
from gridform_ssa.model import GridModel


def decoupled_model():
    jac = netmodel.JacobianSet.from_blocks([[3.0, -1.0], [-1.0, 2.0]], np.zeros((2, 3)),
                                           np.diag([2.0, 3.0, 4.0]))
    return GridModel(case=None, reduced=None, jac=jac,
                     park=DevicePark.simple(M=[2.0, 1.0], D=[0.2, 0.1], m_p=0.05, n_i=3))


def _mode(lam, u):
    f, z = modal.mode_metrics(lam)
    return modal.Mode(0, complex(lam), f, z, np.asarray(u, dtype=complex), None, 0, 0, "inter-area", 1)


def test_decoupled_generator_loci_constant():
    sr = sweep.sweep_droop(decoupled_model(), sweep.geometric_grid(0.1, 0.01, 7),
                           band=(0.01, 5.0))
    sg = [c for c in sr.loci if np.iscomplexobj(c.lam_array) and c.lam_array.imag.max() > 0]
    assert len(sg) == 2
    for c in sg:
        assert len(c.lam) == 7
        assert np.ptp(c.lam_array.real) == 0 and np.ptp(c.lam_array.imag) == 0


def test_single_point_is_a_snapshot(toy):
    sr = sweep.sweep(toy.with_droop_setting, [0.05], "mp_hat", keep_snapshots=True)
    modes = modal.eigen_modes(toy.state_matrix())
    assert len(sr.loci) == len(modes)
    assert [c.lam[0] for c in sr.loci] == [m.lam for m in modes]


def test_axis_must_be_monotone(toy):
    with pytest.raises(ValueError, match="monotone"):
        sweep.sweep(toy.with_droop_setting, [0.05, 0.03, 0.04], "mp_hat")
    with pytest.raises(ValueError):
        sweep.sweep_droop(toy, [0.05, 0.04])


def test_tracking_break_splits_locus():
    e1, e2 = np.eye(2)
    snaps = [[_mode(-0.1 + 1j, e1), _mode(-0.1 + 2j, e2)],
             [_mode(-0.1 + 1.01j, (e1 + e2) / np.sqrt(2)), _mode(-0.1 + 2.01j, (e1 - e2) / np.sqrt(2))]]
    loci, warns = sweep._track(snaps)
    assert len(warns) == 2 and all("split" in w for w in warns)
    ids = sorted(c.mode_id for c in loci)
    assert ids == ["0", "0.1", "1", "1.1"]
    assert all(c.inter_area for c in loci)


def test_continuous_loci_have_high_overlap(toy):
    sr = sweep.sweep_droop(toy, sweep.geometric_grid(0.1, 0.0005, 41))
    assert not sr.warnings
    for c in sr.loci:
        assert np.all(np.array(c.overlap[1:]) >= 0.9)


def test_inter_area_tag_frozen_at_start(toy):
    sr = sweep.sweep_droop(toy, sweep.geometric_grid(0.1, 0.0005, 41))
    first = {m.lam for m in modal.eigen_modes(toy.with_droop_setting(0.1).state_matrix())
             if m.cls == "inter-area"}
    assert {c.lam[0] for c in sr.inter_area} == first


def test_monotone_locus_has_no_interior_reversal():
    p = np.linspace(0, 1, 9)
    z = 0.01 + 0.05 * p
    loc = sweep.Locus("0", True, list(range(9)), list(-z + 1j * np.sqrt(1 - z ** 2)))
    r = sweep.detect_reversal(sweep.SweepResult("p", p, [loc]))["0"]
    assert not r.interior and r.note == "no interior reversal"


def test_parabola_reversal():
    p = np.linspace(0.0, 1.0, 41)
    z = 1 - (p - 0.3) ** 2
    lam = -z + 1j * np.sqrt(1 - z ** 2 + 1e-300)
    loc = sweep.Locus("0", True, list(range(len(p))), list(lam))
    r = sweep.detect_reversal(sweep.SweepResult("p", p, [loc]))["0"]
    assert r.interior and abs(r.critical - 0.3) <= 0.5 * (p[1] - p[0])


def test_short_locus_not_fitted():
    p = np.linspace(0, 1, 4)
    loc = sweep.Locus("0", True, list(range(4)), [-0.1 + 1j] * 4)
    assert "fewer than 5" in sweep.detect_reversal(sweep.SweepResult("p", p, [loc]))["0"].note


def test_csv_identical_across_worker_counts(toy):
    grid = sweep.geometric_grid(0.1, 0.001, 17)
    out = {w: sweep.locus_csv(sweep.sweep_droop(toy, grid, workers=w)) for w in (1, 2, 4)}
    assert out[1] == out[2] == out[4]
    again = sweep.locus_csv(sweep.sweep_size(toy, sweep.linear_grid(0.05, 0.2, 7), workers=3))
    assert again == sweep.locus_csv(sweep.sweep_size(toy, sweep.linear_grid(0.05, 0.2, 7), workers=1))


def test_thread_env(monkeypatch):
    monkeypatch.setenv(sweep.THREADS_ENV, "3")
    assert sweep.worker_count() == 3
    monkeypatch.setenv(sweep.THREADS_ENV, "lots")
    assert sweep.worker_count(2) == 2


def test_csv_columns(toy):
    text = sweep.locus_csv(sweep.sweep_droop(toy, [0.1, 0.05, 0.02]), ["h"])
    lines = text.splitlines()
    assert lines[0] == "# h"
    assert lines[1] == "param_name,param_value,mode_id,re,im,freq_hz,damping_pct,inter_area"
    row = lines[2].split(",")
    assert row[0] == "mp_hat" and float(row[1]) == 0.1


def test_droop_size_equivalence_on_grid(toy):
    # doubling capacity at fixed setting equals halving the setting at fixed capacity
    base = toy.with_droop_setting(0.03)
    for frac in sweep.linear_grid(0.05, 0.2, 7):
        sized = base.with_capacity_fraction(frac)
        S_ratio = sized.park.S[0] / toy.park.S[0]
        A1 = sized.state_matrix().A
        A2 = toy.with_droop_setting(0.03 / S_ratio).state_matrix().A
        assert np.allclose(A1, A2, rtol=1e-14, atol=0)
    A1 = base.with_park(base.park.with_capacity(2 * base.park.S)).state_matrix().A
    assert np.array_equal(A1, toy.with_droop_setting(0.015).state_matrix().A)


def test_sign_of_real_part_matches_sensitivity(toy):
    sr = sweep.sweep_droop(toy, sweep.geometric_grid(0.1, 0.0005, 41))
    agree = total = 0
    for c in sr.inter_area:
        mp = sr.m_p[np.asarray(c.index)]
        lam = c.lam_array
        for k in range(len(lam) - 1):
            mid = np.sqrt(mp[k] * mp[k + 1])
            gm = toy.with_gain(mid)
            target = 0.5 * (lam[k] + lam[k + 1])
            m = min(modal.eigen_modes(gm.state_matrix()), key=lambda x: abs(x.lam - target))
            d = sensitivity.dlambda_dmp_analytic(gm.jac, gm.park, m).value
            step = (lam[k + 1].real - lam[k].real) / (mp[k + 1] - mp[k])
            agree += np.sign(step) == np.sign(d.real)
            total += 1
    assert total >= 80 and agree / total >= 0.95


def test_inertia_axis(toy):
    sr = sweep.sweep_inertia(toy, sweep.linear_grid(1.0, 2.0, 5))
    assert sr.param_name == "inertia_scale" and len(sr.inter_area) == 2
    assert np.all(np.diff(sr.inter_area[0].freq_hz) < 0)


def test_segments_annotation():
    p = np.arange(5.0)
    z = np.array([0.1, 0.2, 0.3, 0.2, 0.1])
    loc = sweep.Locus("0", True, list(range(5)), list(-z + 1j * np.sqrt(1 - z ** 2)))
    segs = sweep.SweepResult("p", p, [loc]).segments(loc)
    assert [s[2] for s in segs] == ["increasing", "decreasing"]
    assert segs[0][:2] == (0.0, 2.0)
