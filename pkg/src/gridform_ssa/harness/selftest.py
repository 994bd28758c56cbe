"""Built-in example suite for ``gridform-ssa selftest``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as la

from .. import design, devices, modal, netmodel, ringdown, sensitivity, statespace, sweep
from ..model import GridModel, load_bundled


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str          # PASS, FAIL, XFAIL (known failure), XPASS
    detail: str


CHECKS: list[tuple[str, Callable[[], tuple[bool, str]], bool]] = []


def check(name: str, known_failure: bool = False):
    def deco(fn):
        CHECKS.append((name, fn, known_failure))
        return fn
    return deco


_cache: dict = {}


def toy() -> GridModel:
    if "toy" not in _cache:
        _cache["toy"] = GridModel.from_case(load_bundled("toy2x3"))
    return _cache["toy"]


def scalar_system(M=1.0, D=0.1, m_p=1.0, Kgg=1.0, Kgi=-0.5, Kii=1.0):
    jac = netmodel.JacobianSet.from_blocks([[Kgg]], [[Kgi]], [[Kii]])
    return jac, devices.DevicePark.simple(M=[M], D=[D], m_p=m_p)


@check("series combination under Kron reduction")
def _series():
    b1, b2 = 2.0, 3.0
    B = np.array([[b1, -b1, 0], [-b1, b1 + b2, -b2], [0, -b2, b2]])
    red, _ = netmodel.kron_reduce_matrix(B, [0, 2])
    got = -red[0, 1]
    return abs(got - b1 * b2 / (b1 + b2)) < 1e-14, f"coupling {got:.12g}"


@check("two-node Jacobian with and without shunt")
def _two_node():
    red = netmodel.ReducedNetwork(B=np.array([[1.0, -1.0], [-1.0, 1.0]]), E=np.ones(2),
                                  delta0=np.zeros(2), n_g=1, n_i=1, labels=("G", "I"))
    K0 = netmodel.build_jacobians(red).K
    red = netmodel.ReducedNetwork(B=np.array([[1.0, -1.0], [-1.0, 1.5]]), E=np.ones(2),
                                  delta0=np.zeros(2), n_g=1, n_i=1, labels=("G", "I"))
    jac = netmodel.build_jacobians(red)
    ok = (np.array_equal(K0, [[1, -1], [-1, 1]]) and jac.K[1, 1] == 1.5
          and np.array_equal(jac.K_diag, np.diag([0.0, 0.5])))
    return ok, f"K_22 = {jac.K[1, 1]}"


@check("grid-strength bounds")
def _gamma():
    Kii = np.diag([0.8, 1.0]) + np.array([[0.5, -0.5], [-0.5, 0.5]])
    jac = netmodel.JacobianSet.from_blocks([[2.0]], [[0.0, 0.0]], Kii)
    gl, gu = netmodel.gamma_bounds(jac)
    return abs(gl - 0.8) < 1e-14 and abs(gu - 2.0) < 1e-14, f"gamma_l={gl}, gamma_u={gu}"


@check("droop normalization")
def _droop():
    got = [devices.droop_from_setting(0.03, s * 100.0, 100.0) for s in (0.5, 1.0, 2.0)]
    return np.allclose(got, [0.06, 0.03, 0.015], rtol=1e-14), f"m_p = {got}"


@check("parameter extremes and timescale margin")
def _extremes():
    park = devices.DevicePark.simple(M=[2.0, 5.0], D=[0.1, 0.4], m_p=1.0)
    ext = devices.park_extremes(park)
    ts = devices.timescale_check(devices.DevicePark.simple(M=[1.0], D=[0.1], m_p=1.0, tau=0.02))
    ok = tuple(ext) == (5.0, 2.0, 0.4, 0.1) and abs(ts.margin - 500) < 1e-9
    return ok, f"extremes {tuple(ext)}, margin {ts.margin:.6g}"


@check("one-generator one-inverter state matrix")
def _scalar_A():
    jac, park = scalar_system()
    A = statespace.assemble_state_matrix(jac, park).A
    ok = np.allclose(A, [[0, 1, 0], [-1, -0.1, 0.5], [0.5, 0, -1]], atol=0, rtol=0)
    poly = np.real(np.poly(la.eigvals(A)))
    ok = ok and np.allclose(poly, [1, 1.1, 1.1, 0.75], atol=1e-12)
    return bool(ok), f"characteristic polynomial {np.round(poly, 12).tolist()}"


@check("reduced characteristic matrix vanishes on the spectrum")
def _lambda_singular():
    jac, park = scalar_system()
    A = statespace.assemble_state_matrix(jac, park).A
    worst = max(abs(statespace.lambda_matrix(jac, park, lam)[0, 0]) for lam in la.eigvals(A))
    return worst < 1e-9, f"max |Lambda| = {worst:.2e}"


@check("toy2x3 modes and kernel eigenvectors")
def _toy_modes():
    gm = toy()
    modes = modal.eigen_modes(gm.state_matrix(), jac=gm.jac, park=gm.park)
    ia = [m for m in modes if m.cls == "inter-area"]
    worst = 0.0
    for m in modes:
        kv = modal.eigvec_from_kernel(gm.jac, gm.park, m.lam)
        worst = max(worst, kv.sigma_ratio, kv.residual_right, kv.residual_left)
    return len(ia) >= 1 and worst < 1e-8, f"{len(ia)} inter-area modes, worst ratio/residual {worst:.1e}"


@check("toy2x3 assumptions")
def _toy_assumptions():
    rep = netmodel.validate_assumptions(toy().jac)
    return rep.passed, f"A1 margin {rep.a1_min_eig:.6g}, gamma_l {rep.gamma_l:.6g}"


@check("toy2x3 analytic sensitivity against central differences")
def _toy_sensitivity():
    gm = toy()
    modes = [m for m in modal.eigen_modes(gm.state_matrix()) if m.cls == "inter-area"]
    worst = 0.0
    for m in modes:
        r = sensitivity.sensitivity_report(gm.jac, gm.park, m, m_p_list=None)
        worst = max(worst, r.rel_err, r.analytic.agreement)
    return worst < 1e-4, f"worst relative error {worst:.1e}"


@check("finite differences are second order on a closed-form system")
def _fd_order():
    m0 = 1.0

    def build(m):
        return np.array([[0.0, 1.0], [-m * m, -1.0]])

    exact = 1j * 2 * m0 / np.sqrt(4 * m0 ** 2 - 1)
    w, v = la.eig(build(m0))
    k = int(np.argmax(w.imag))
    mode = modal.Mode(0, complex(w[k]), 0.0, 0.0, v[:, k], v[:, k], 0.0, 0.0, "local")
    errs = [abs(sensitivity.dlambda_dmp_fd(build, mode, m0, h).d_h - exact) for h in (1e-3, 5e-4)]
    ratio = errs[0] / errs[1]
    return 3.5 < ratio < 4.5, f"error ratio {ratio:.3f} on halving h"


@check("scalar expansion residual, imaginary eigenvalue")
def _scalar_expansion_imag():
    jac, park = scalar_system(Kgi=-1.0, Kii=1.0)
    tab = sensitivity.asymptotic_check(jac, park, 2.0j, (10.0, 100.0, 1000.0))
    return 3.8 < tab.exponent_R < 4.2, f"exponent {tab.exponent_R:.4f}"


@check("scalar expansion residual, real eigenvalue", known_failure=True)
def _scalar_expansion_real():
    jac, park = scalar_system(Kgi=-1.0, Kii=1.0)
    tab = sensitivity.asymptotic_check(jac, park, -0.5, (10.0, 100.0, 1000.0))
    return 3.5 < tab.exponent_R < 4.5, f"exponent {tab.exponent_R:.4f} (second-order term is -2 lam U2)"


@check("toy2x3 expansion residual exponent", known_failure=True)
def _toy_expansion():
    gm = toy()
    modes = [m for m in modal.eigen_modes(gm.state_matrix()) if m.cls == "inter-area"]
    exps = [sensitivity.asymptotic_check(gm.jac, gm.park, m.lam).exponent_R for m in modes]
    return all(3.5 <= e <= 4.5 for e in exps), "exponents " + ", ".join(f"{e:.3f}" for e in exps)


@check("design variables and droop bound by substitution")
def _design_numbers():
    ext = devices.Extremes(1.0, 1.0, 0.1, 0.1)
    dv = design.design_variables(1.0, ext, 1.0, 1.0)
    ms, _ = design.mstar(1.0, 0.05, ext, 1.0, 1.0)
    lim = design.mstar_limit(1.0, 0.1, 1.0, 1.0, 1.0)
    ok = (np.allclose([dv.D_star, dv.zeta_l, dv.zeta_u], [5.0, 0.04, 20.0], rtol=1e-14)
          and abs(ms - 0.05 / 1.995) < 1e-12 and abs(lim - 0.25) < 1e-14)
    return bool(ok), f"D*={dv.D_star:.6g} zeta_l={dv.zeta_l:.6g} zeta_u={dv.zeta_u:.6g} m*={ms:.5f}"


@check("Hermitian part carries the real quadratic form")
def _hermitian():
    rng = np.random.default_rng(7)
    C = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    Ch, _ = design.hermitian_part(C)
    X = rng.standard_normal((4, 100)) + 1j * rng.standard_normal((4, 100))
    q = np.einsum("ij,ik,kj->j", X.conj(), C, X)
    qh = np.einsum("ij,ik,kj->j", X.conj(), Ch, X)
    return bool(np.allclose(q.real, qh.real, atol=1e-12)), "100 random vectors"


@check("toy2x3 theorem 1 condition at 5% droop")
def _toy_theorem1():
    gm = toy().with_droop_setting(0.05)
    modes = [m for m in modal.eigen_modes(gm.state_matrix()) if m.cls == "inter-area"]
    lhs = [design.theorem1_condition(sensitivity.asymptotic_matrices(gm.jac, gm.park, m.lam))
           for m in modes]
    return all(h for h, _ in lhs), "lhs " + ", ".join(f"{v:.6g}" for _, v in lhs)


@check("toy2x3 droop sweep 10% to 2%")
def _toy_sweep():
    sr = sweep.sweep_droop(toy(), sweep.geometric_grid(0.10, 0.02, 9))
    worst = min(np.diff(100 * c.zeta).min() for c in sr.inter_area)
    return worst >= -1e-3 and not sr.warnings, f"smallest step in damping {worst:.4f} %"


@check("reversal on a synthetic parabola")
def _parabola():
    p = np.linspace(0.0, 1.0, 21)
    z = 1 - (p - 0.3) ** 2
    loc = sweep.Locus("0", True, list(range(len(p))), list(-z + 1j * np.sqrt(1 - z ** 2)))
    r = sweep.detect_reversal(sweep.SweepResult("p", p, [loc]))["0"]
    return r.interior and abs(r.critical - 0.3) <= 0.025, f"critical p {r.critical:.4f}"


@check("droop and size are interchangeable")
def _equivalence():
    gm = toy().with_droop_setting(0.03)
    S = gm.park.S
    A1 = gm.with_park(gm.park.with_capacity(2 * S)).state_matrix().A
    A2 = gm.with_droop_setting(0.015).state_matrix().A
    return bool(np.array_equal(A1, A2)), "entrywise equality"


@check("ringdown estimate of a damped sinusoid")
def _synthetic_ringdown():
    t = np.arange(0, 30, 0.01)
    e = ringdown.estimate_signal(t, np.exp(-0.3 * t) * np.sin(4 * t))
    flat = ringdown.estimate_signal(t, np.exp(-t))
    ok = (abs(e.freq_hz - 0.6366) < 0.01 and abs(e.zeta - 0.0748) < 0.005 and not flat.oscillatory)
    return ok, f"f={e.freq_hz:.4f} Hz zeta={e.zeta:.4f}"


@check("toy2x3 ringdown against the linear modes")
def _toy_ringdown():
    gm = toy()
    modes = [m for m in modal.eigen_modes(gm.state_matrix()) if m.cls == "inter-area"]
    parts = []
    ok = True
    for m in modes:
        tr = ringdown.simulate(gm, ringdown.modal_perturbation(m, 1e-3), horizon=20.0, dt=5e-4)
        ch = int(np.argmax(np.abs(m.u)))
        e = ringdown.estimate_mode(tr, ch)
        ok = ok and tr.completed and abs(e.freq_hz / m.freq_hz - 1) < 0.05 and abs(e.zeta / m.zeta - 1) < 0.2
        parts.append(f"{tr.labels[ch]} f={e.freq_hz:.4f}/{m.freq_hz:.4f} zeta={e.zeta:.4f}/{m.zeta:.4f}")
    return ok, "; ".join(parts)


def run_selftest() -> list[CheckResult]:
    out = []
    for name, fn, known in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, reported not raised
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        if known:
            status = "XPASS" if ok else "XFAIL"
        else:
            status = "PASS" if ok else "FAIL"
        out.append(CheckResult(name, status, detail))
    return out
