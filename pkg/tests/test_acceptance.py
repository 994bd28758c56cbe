"""Acceptance criteria.  Each test prints one PASS/FAIL line; the lines are
repeated in the terminal summary."""

import os
import time

import numpy as np
import scipy.linalg as la

from gridform_ssa import design, devices, modal, ringdown, sensitivity, statespace, sweep
from gridform_ssa.cases import near_uniform_system
from gridform_ssa.errors import NumericalError

RESULTS: dict[int, str] = {}


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    return ok


def test_criterion_1_kernel_singularity_and_residuals(random_models):
    t0 = time.perf_counter()
    models = random_models
    worst_sv = worst_res = 0.0
    n_eig = 0
    shapes_ok = True
    for gm in models:
        n_g, n_i = gm.jac.n_g, gm.jac.n_i
        shapes_ok &= 2 <= n_g <= 6 and 3 <= n_i <= 12 and n_i > n_g
        A = gm.state_matrix().A
        w = la.eigvals(A)
        shapes_ok &= bool(np.all(w.real < 0))
        for lam in w:
            s = la.svdvals(statespace.lambda_matrix(gm.jac, gm.park, lam))
            worst_sv = max(worst_sv, s[-1] / s[0])
            kv = modal.eigvec_from_kernel(gm.jac, gm.park, lam)
            worst_res = max(worst_res, kv.residual_right, kv.residual_left)
            n_eig += 1
    dt = time.perf_counter() - t0
    ok = shapes_ok and worst_sv < 1e-8 and worst_res < 1e-8 and dt < 60
    record(1, ok, f"{len(models)} cases, {n_eig} eigenvalues, max sigma ratio {worst_sv:.1e}, "
                  f"max residual {worst_res:.1e}, {dt:.1f} s")
    assert ok


def test_criterion_2_analytic_sensitivity_against_fd(random_models):
    t0 = time.perf_counter()
    worst, n = 0.0, 0
    for gm in random_models:
        for m in modal.eigen_modes(gm.state_matrix()):
            if m.cls != "inter-area":
                continue
            r = sensitivity.sensitivity_report(gm.jac, gm.park, m, m_p_list=None)
            worst = max(worst, r.rel_err)
            n += 1
    dt = time.perf_counter() - t0
    ok = n > 0 and worst < 1e-4 and dt < 120
    record(2, ok, f"{n} inter-area modes, max relative error {worst:.1e}, {dt:.1f} s")
    assert ok


def test_criterion_3_expansion_decay_exponent(toy, random_models):
    exps = []
    for gm in random_models + [toy]:
        for m in modal.eigen_modes(gm.state_matrix()):
            if m.lam.imag <= 0:
                continue
            try:
                tab = sensitivity.asymptotic_check(gm.jac, gm.park, m.lam, (10.0, 100.0, 1000.0))
            except NumericalError:
                continue
            if tab.slow:
                exps.append((tab.exponent_R, tab.exponent_Theta))
    e = np.array(exps)
    inside = (e >= 3.5) & (e <= 4.5)
    ok = len(e) > 0 and bool(inside.all())
    record(3, ok, f"{len(e)} slow modes, R exponent range [{e[:, 0].min():.3f}, {e[:, 0].max():.3f}], "
                  f"Theta exponent range [{e[:, 1].min():.3f}, {e[:, 1].max():.3f}], target [3.5, 4.5]")
    assert ok


def test_criterion_4_droop_bound_implies_condition_fails():
    fractions = (1e-6, 0.25, 0.5, 0.75, 1.0)
    instances = counter = cases = 0
    for seed in range(600):
        jac, park = near_uniform_system(seed)
        modes = modal.eigen_modes(statespace.assemble_state_matrix(jac, park), jac=jac, park=park)
        ext = devices.park_extremes(park)
        for m in modes:
            if m.cls == "real" or not m.slow_ratio < 0.1:
                continue
            m_star, pre = design.mstar(m.lam, m.zeta, ext, jac.gamma_u, jac.gamma_l)
            if not pre or not 0 < m_star < np.inf:
                continue
            cases += 1
            aset = sensitivity.asymptotic_matrices(jac, park, m.lam)
            for u in fractions:
                holds, _ = design.theorem1_condition(aset, u * m_star)
                instances += 1
                counter += holds
    ok = cases >= 200 and counter == 0
    record(4, ok, f"{cases} qualifying mode cases, {instances} gain probes with m_p <= m*, "
                  f"{counter} where the condition still holds (0 allowed)")
    assert ok


def test_criterion_5_damping_rises_as_droop_falls(toy):
    sr = sweep.sweep_droop(toy, sweep.geometric_grid(0.10, 0.02, 9))
    steps = [np.diff(100 * c.zeta) for c in sr.inter_area]
    worst = min(s.min() for s in steps)
    ok = len(steps) > 0 and worst >= -1e-3 and all(len(c.lam) == 9 for c in sr.inter_area)
    record(5, ok, f"{len(steps)} inter-area modes over 9 points, smallest step {worst:+.4f} %")
    assert ok


def test_criterion_6_reversal_below_two_percent(toy):
    sr = sweep.sweep_droop(toy, sweep.geometric_grid(0.10, 0.0005, 61))
    rev = sweep.detect_reversal(sr, [c.mode_id for c in sr.inter_area])
    crit = [r.critical for r in rev.values()]
    ok = len(rev) > 0 and all(r.interior for r in rev.values()) and all(c < 0.02 for c in crit)
    record(6, ok, "critical settings " + ", ".join(f"{100 * c:.3f} %" for c in crit))
    assert ok


def test_criterion_7_damping_rises_with_size(toy):
    grid = sweep.linear_grid(0.05, 0.20, 16)
    sr = sweep.sweep_size(toy, grid, mp_hat=0.03)
    strict = all(np.all(np.diff(c.zeta) > 0) for c in sr.inter_area)
    # sizing at a fixed setting is the same matrix as rescaling the setting
    base = toy.with_droop_setting(0.03)
    equal = True
    for frac in grid:
        sized = base.with_capacity_fraction(frac)
        A2 = toy.with_droop_setting(0.03 * toy.park.S[0] / sized.park.S[0]).state_matrix().A
        equal &= bool(np.allclose(sized.state_matrix().A, A2, rtol=1e-14, atol=0))
    A1 = base.with_park(base.park.with_capacity(2 * base.park.S)).state_matrix().A
    equal &= bool(np.array_equal(A1, toy.with_droop_setting(0.015).state_matrix().A))
    ok = len(sr.inter_area) > 0 and strict and equal
    z = [f"{100 * c.zeta[0]:.3f}->{100 * c.zeta[-1]:.3f} %" for c in sr.inter_area]
    record(7, ok, f"damping {', '.join(z)}, strictly increasing {strict}, droop/size equivalence {equal}")
    assert ok


def test_criterion_8_ringdown_consistency(toy):
    A = toy.state_matrix().A
    parts, ok = [], True
    for m in [m for m in modal.eigen_modes(toy.state_matrix()) if m.cls == "inter-area"]:
        tr = ringdown.simulate(toy, ringdown.modal_perturbation(m, 1e-3), horizon=20.0, dt=5e-4)
        e = ringdown.estimate_mode(tr, int(np.argmax(np.abs(m.u))))
        fe, ze = abs(e.freq_hz / m.freq_hz - 1), abs(e.zeta / m.zeta - 1)
        ok &= tr.completed and fe < 0.05 and ze < 0.2
        gaps = []
        for eps in (1e-4, 1e-3):
            x0 = ringdown.modal_perturbation(m, eps)
            t = ringdown.simulate(toy, x0, horizon=20.0, dt=5e-4)
            gaps.append(np.abs(t.deviation - ringdown.linear_response(A, x0, t.t)).max())
        order = np.log10(gaps[1] / gaps[0])
        ok &= 1.8 < order < 2.2
        parts.append(f"{m.freq_hz:.3f} Hz: f err {100 * fe:.2f} %, zeta err {100 * ze:.1f} %, "
                     f"mismatch order {order:.2f}")
    record(8, ok, "; ".join(parts))
    assert ok


def _run(argv, out, threads):
    from gridform_ssa.harness import main
    os.environ["GRIDFORM_SSA_THREADS"] = str(threads)
    try:
        assert main(argv + ["--out", str(out)]) == 0
    finally:
        del os.environ["GRIDFORM_SSA_THREADS"]
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_criterion_9_determinism(toy, tmp_path, capsys):
    runs = {
        "selftest": ["selftest"],
        "droop": ["sweep", "--param", "droop", "--from", "0.1", "--to", "0.0005", "--points", "61"],
        "size": ["sweep", "--param", "size", "--from", "0.05", "--to", "0.2", "--points", "16"],
        "inertia": ["sweep", "--param", "inertia", "--from", "1", "--to", "3", "--points", "9"],
    }
    same = {}
    for name, argv in runs.items():
        outs, texts = [], []
        for threads in (1, 1, 4):
            out = tmp_path / name
            out.mkdir(exist_ok=True)
            for f in out.iterdir():
                f.unlink()
            outs.append(_run(argv, out, threads))
            texts.append(capsys.readouterr().out)
        same[name] = outs[0] == outs[1] == outs[2] and texts[0] == texts[1] == texts[2]
    lib = [sweep.locus_csv(sweep.sweep_droop(toy, sweep.geometric_grid(0.1, 0.0005, 31), workers=w))
           for w in (1, 3, 8)]
    same["library"] = lib[0] == lib[1] == lib[2]
    ok = all(same.values())
    record(9, ok, ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items()))
    assert ok

