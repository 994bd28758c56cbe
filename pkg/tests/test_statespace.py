import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings
from hypothesis import strategies as st

from gridform_ssa import netmodel, statespace
from gridform_ssa.cases import random_model
from gridform_ssa.devices import DevicePark
from gridform_ssa.errors import CaseError, ResolventError

from conftest import scalar_system


def test_scalar_substitution():
    jac, park = scalar_system()
    A = statespace.assemble_state_matrix(jac, park).A
    assert np.array_equal(A, [[0, 1, 0], [-1, -0.1, 0.5], [0.5, 0, -1]])


def test_scalar_characteristic_polynomial():
    jac, park = scalar_system()
    A = statespace.assemble_state_matrix(jac, park).A
    # coefficients from the determinant expansion
    M, D, m, Kgg, Kgi, Kii = 1.0, 0.1, 1.0, 1.0, -0.5, 1.0
    expected = [1, D / M + m * Kii, (Kgg + D * m * Kii) / M, m / M * (Kgg * Kii - Kgi * Kgi)]
    assert np.allclose(expected, [1, 1.1, 1.1, 0.75])
    assert np.allclose(np.real(np.poly(la.eigvals(A))), expected, atol=1e-12)


def test_zero_gain_decouples():
    jac, _ = scalar_system()
    park = DevicePark.simple(M=[1.0], D=[0.1], m_p=1.0)
    A = statespace.assemble_state_matrix(jac, park).A.copy()
    A[2:, :] = 0.0  # m_p = 0 is not a valid park; build the limit by hand
    Ag = np.array([[0, 1], [-1, -0.1]])
    w = np.sort_complex(la.eigvals(A))
    expected = np.sort_complex(np.r_[la.eigvals(Ag), 0.0])
    assert np.allclose(w, expected, atol=1e-12)


def test_block_structure_toy(toy):
    sm = toy.state_matrix()
    n_g = sm.n_g
    assert np.array_equal(sm.block(1, 2), np.eye(n_g))
    for r, c in ((1, 1), (1, 3), (3, 2)):
        assert not sm.block(r, c).any()
    assert np.array_equal(sm.block(3, 3), -sm.m_p * toy.jac.Kii)
    assert sm.labels[:2] == ("delta_G1", "delta_G2")
    assert sm.labels[2:4] == ("omega_G1", "omega_G2")


def test_dimension_mismatch(toy):
    park = DevicePark.simple(M=[1.0], D=[0.1], m_p=1.0)
    with pytest.raises(CaseError, match="dimension mismatch"):
        statespace.assemble_state_matrix(toy.jac, park)


def test_byte_stable(toy):
    a = statespace.assemble_state_matrix(toy.jac, toy.park)
    b = statespace.assemble_state_matrix(toy.jac, toy.park)
    assert a.A.tobytes() == b.A.tobytes() and a.to_csv() == b.to_csv()
    assert a.to_csv().splitlines()[0] == ",".join(a.labels)


def test_lambda_at_zero_is_gain_independent(toy):
    J = toy.jac
    expected = (J.Kgg - J.Kgi @ np.linalg.solve(J.Kii, J.Kig)) / toy.park.M[:, None]
    for m in (0.1, 1.0, 50.0):
        got = statespace.lambda_matrix(J, toy.park, 0.0, m_p=m)
        assert np.allclose(got, expected, rtol=1e-12, atol=1e-12)


def test_lambda_decoupled():
    jac = netmodel.JacobianSet.from_blocks([[2.0]], [[0.0, 0.0]], np.eye(2))
    park = DevicePark.simple(M=[3.0], D=[0.3], m_p=7.0, n_i=2)
    lam = 0.2 + 1.1j
    got = statespace.lambda_matrix(jac, park, lam)[0, 0]
    assert got == pytest.approx(lam ** 2 + lam * 0.1 + 2.0 / 3.0, rel=1e-14)


def test_lambda_vanishes_on_scalar_spectrum():
    jac, park = scalar_system()
    roots = np.roots([1, 1.1, 1.1, 0.75])
    for lam in roots:
        assert abs(statespace.lambda_matrix(jac, park, lam)[0, 0]) < 1e-9


def test_resolvent_singular():
    jac, park = scalar_system()
    with pytest.raises(ResolventError) as exc:
        statespace.lambda_matrix(jac, park, -1.0)
    assert exc.value.lam == -1.0


def test_lemma_singularity_random(random_models):
    worst = 0.0
    for gm in random_models:
        A = gm.state_matrix().A
        for lam in la.eigvals(A):
            s = la.svdvals(statespace.lambda_matrix(gm.jac, gm.park, lam))
            worst = max(worst, s[-1] / s[0])
    assert worst < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_linear_in_gain(seed, m):
    gm = random_model(seed)
    A = lambda g: statespace.assemble_state_matrix(gm.jac, gm.park.with_gain(g)).A
    A0 = A(1.0).copy()
    A0[2 * gm.jac.n_g:] = 0.0
    lhs = A(m) - A0
    rhs = m * (A(1.0) - A0)
    assert np.abs(lhs - rhs).max() <= 1e-14 * max(1.0, np.abs(rhs).max())
