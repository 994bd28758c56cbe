import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridform_ssa import design, sensitivity
from gridform_ssa.devices import Extremes

from conftest import inter_area

GOLDEN = Path(__file__).parent / "golden"
pos = st.floats(0.01, 100.0)


def test_hermitian_part_of_real_symmetric():
    C = np.array([[2.0, 1.0], [1.0, -3.0]])
    h, s = design.hermitian_part(C)
    assert np.array_equal(h, C) and not np.any(s)


def test_hermitian_part_of_skew():
    C = 1j * np.array([[2.0, 1.0], [1.0, -3.0]])
    h, s = design.hermitian_part(C)
    assert not np.any(h) and np.array_equal(s, C)


def test_quadratic_form_uses_hermitian_part():
    rng = np.random.default_rng(11)
    C = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    h, s = design.hermitian_part(C)
    assert np.abs(h + s - C).max() <= 4 * np.finfo(float).eps * np.abs(C).max()
    X = rng.standard_normal((4, 100)) + 1j * rng.standard_normal((4, 100))
    q = np.einsum("ij,ik,kj->j", X.conj(), C, X)
    qh = np.einsum("ij,ik,kj->j", X.conj(), h, X)
    assert np.allclose(q.real, qh.real, atol=1e-12) and np.allclose(qh.imag, 0, atol=1e-12)


def test_rayleigh_sampling_bounds_lambda_max():
    rng = np.random.default_rng(5)
    for _ in range(10):
        C = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        exact = design.lambda_max_h(C)
        sampled = design.rayleigh_lambda_max(C, 1000, rng)
        assert sampled <= exact + 1e-12
        assert sampled >= exact - 0.25 * np.abs(np.linalg.eigvalsh(design.hermitian_part(C)[0])).max()


def _aset(T1, T2, m_p=1.0):
    z = np.zeros_like(T1)
    return sensitivity.AsymptoticSet(U1=z, U2=z, Q=z, Theta1=T1, Theta2=T2, R=z, Theta=z,
                                     lam=1j, m_p=m_p, Theta2_exact=T2)


def test_condition_fails_for_negative_definite_parts():
    T = -np.diag([1.0, 2.0]).astype(complex)
    for m in (1e-3, 1.0, 1e3):
        assert design.theorem1_condition(_aset(T, T), m)[0] is False


def test_condition_holds_at_large_gain():
    T1 = np.diag([1.0, -1.0]).astype(complex)
    T2 = -5 * np.eye(2, dtype=complex)
    assert design.theorem1_condition(_aset(T1, T2), 1.0)[0] is False
    holds, lhs = design.theorem1_condition(_aset(T1, T2), 10.0)
    assert holds and lhs == pytest.approx(5.0)


def test_toy_condition_golden(toy):
    gm = toy.with_droop_setting(0.05)
    golden = json.loads((GOLDEN / "toy2x3_theorem1_mp5.json").read_text())
    modes = inter_area(gm)
    assert sorted(golden) == sorted(str(m.index) for m in modes)
    for m in modes:
        holds, lhs = design.theorem1_condition(sensitivity.asymptotic_matrices(gm.jac, gm.park, m.lam))
        assert holds
        assert lhs == pytest.approx(golden[str(m.index)]["theorem1_lhs"], rel=1e-9)


def test_design_variables_substitution():
    dv = design.design_variables(1.0, Extremes(1.0, 1.0, 0.1, 0.1), 1.0, 1.0)
    assert (dv.D_star, dv.zeta_l, dv.zeta_u) == pytest.approx((5.0, 0.04, 20.0), rel=1e-14)


def test_design_variables_light_damping_limit():
    dv = design.design_variables(1.0, Extremes(1.0, 1.0, 1e-12, 1e-12), 1.0, 1.0)
    assert dv.zeta_l < 1e-10 and dv.zeta_u > 1e10
    dv = design.design_variables(1.0, Extremes(1.0, 1.0, 0.0, 0.0), 1.0, 1.0)
    assert dv.zeta_u == np.inf and dv.zeta_u_infinite


def test_design_variables_strength_ratio():
    ext = Extremes(2.0, 1.0, 0.3, 0.1)
    a = design.design_variables(0.7j, ext, 2.0, 2.0)
    b = design.design_variables(0.7j, ext, 1.0, 2.0)
    assert b.D_star == pytest.approx(a.D_star / 2, rel=1e-14)
    assert b.zeta_l == pytest.approx(8 * a.zeta_l, rel=1e-14)
    assert b.zeta_u == pytest.approx(4 * a.zeta_u, rel=1e-14)


def test_design_variables_reject_nonpositive_strength():
    with pytest.raises(ValueError):
        design.design_variables(1.0, Extremes(1, 1, 0.1, 0.1), 0.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 10.0), pos, pos, st.floats(0.0, 5.0), st.floats(0.0, 5.0), pos, st.floats(1.0, 10.0))
def test_band_ordering_follows_damping_product(a, M1, M2, D1, D2, gl, r):
    ext = Extremes(max(M1, M2), min(M1, M2), max(D1, D2), min(D1, D2))
    dv = design.design_variables(a * 1j, ext, gl, gl * r)
    if ext.D_u * ext.D_l < dv.D_star * (1 - 1e-9):
        assert dv.zeta_l < dv.zeta_u


def test_mstar_vacuous_at_lower_edge():
    ext = Extremes(1.0, 1.0, 0.1, 0.1)
    assert design.mstar(1.0, 0.04, ext, 1.0, 1.0)[0] == pytest.approx(0.0, abs=1e-15)


def test_mstar_substitution():
    m, ok = design.mstar(1.0, 0.05, Extremes(1.0, 1.0, 0.1, 0.1), 1.0, 1.0)
    assert m == pytest.approx(5 * 0.01 / (0.1 * 19.95), rel=1e-12)
    assert round(m, 5) == 0.02506 and ok


def test_mstar_precondition_failure():
    # D_u D_l = 36 >= D* = 5
    _, ok = design.mstar(1.0, 0.05, Extremes(1.0, 1.0, 6.0, 6.0), 1.0, 1.0)
    assert ok is False


def test_mstar_at_upper_edge_is_infinite():
    m, _ = design.mstar(1.0, 20.0, Extremes(1.0, 1.0, 0.1, 0.1), 1.0, 1.0)
    assert m == np.inf


def test_limit_substitution():
    assert design.mstar_limit(1.0, 0.1, 1.0, 1.0, 1.0) == pytest.approx(0.25, rel=1e-14)


def test_limit_strong_grid():
    a, zeta, M = 1.3, 0.05, 2.0
    for g in (1e3, 1e5):
        lim = design.mstar_limit(a, zeta, M, M, g)
        assert lim == pytest.approx(2 * a * zeta / g, rel=1e-3 * 1e3 / g + 1e-12)
    assert design.mstar_limit(a, zeta, M, M, 1e6) < design.mstar_limit(a, zeta, M, M, 1e3)


@pytest.mark.parametrize("lam,zeta,M_l,M_u,g", [(1.0, 0.1, 1.0, 1.0, 1.0), (2.2j, 0.03, 1.5, 4.0, 7.0),
                                                (0.4 + 3j, 0.2, 3.0, 3.0, 0.5)])
def test_mstar_tends_to_limit(lam, zeta, M_l, M_u, g):
    m, _ = design.mstar(lam, zeta, Extremes(M_u, M_l, 1e-9, 1e-9), g, g)
    lim = design.mstar_limit(lam, zeta, M_l, M_u, g)
    assert abs(m - lim) / lim < 1e-6


def test_report_structure(toy):
    rep = design.design_report(toy.jac, toy.park, inter_area(toy))
    assert rep["gamma_l"] == toy.jac.gamma_l and len(rep["modes"]) == 2
    for r in rep["modes"].values():
        assert r["theorem1_lhs"] == pytest.approx(r["m_p"] * r["lmax_theta1_h"] + r["lmax_theta2_h"])
        assert r["verdict"].startswith("damping-enhancement")
        assert r["margin"] == pytest.approx(r["m_p"] - r["m_star"])
        assert 0 < r["zeta"] < 1 and r["damping_pct"] == pytest.approx(100 * r["zeta"])
    assert rep["max_m_star"] == max(r["m_star"] for r in rep["modes"].values())
