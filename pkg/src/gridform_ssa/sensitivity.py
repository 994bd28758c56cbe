"""Eigenvalue sensitivity to the droop gain and the large-gain expansions of
the coupling matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la

from .devices import DevicePark
from .errors import (NumericalError, RepeatedModeError, ResolventError,
                     SingularBlockError, TrackingError)
from .modal import Mode, eigvec_from_kernel, slow_mode_check
from .netmodel import JacobianSet
from .statespace import RESOLVENT_TOL, assemble_state_matrix

__all__ = [
    "AsymptoticSet", "SensitivityResult", "FDResult", "AsymptoticTable", "SensitivityReport",
    "asymptotic_matrices", "delta_A", "dlambda_dmp_analytic", "dlambda_dmp_fd",
    "gain_builder", "asymptotic_check", "sensitivity_report", "track_mode",
]

COND_FLOOR = 1e-8
DENOM_FLOOR = 1e-12
OVERLAP_MIN = 0.9
FD_REL_STEP = 1e-4


@dataclass(frozen=True, eq=False)
class AsymptoticSet:
    U1: np.ndarray
    U2: np.ndarray
    Q: np.ndarray
    Theta1: np.ndarray
    Theta2: np.ndarray
    R: np.ndarray
    Theta: np.ndarray
    lam: complex
    m_p: float
    # second-order term consistent with the exact resolvent expansion
    Theta2_exact: np.ndarray | None = None

    @property
    def U_min_eigs(self) -> tuple[float, float]:
        return float(la.eigvalsh(self.U1)[0]), float(la.eigvalsh(self.U2)[0])

    @property
    def U_positive(self) -> bool:
        a, b = self.U_min_eigs
        return a > 0 and b > 0

    def R_expansion(self, expansion: str = "conjugate") -> np.ndarray:
        m, lam = self.m_p, self.lam
        if expansion == "conjugate":
            return (m * self.U1 + 2 * np.conj(lam) * self.U2) / m ** 3
        if expansion == "exact":
            return (m * self.U1 - 2 * lam * self.U2) / m ** 3
        raise ValueError(f"unknown expansion {expansion!r}")

    def Theta_expansion(self, expansion: str = "conjugate") -> np.ndarray:
        T2 = {"conjugate": self.Theta2, "exact": self.Theta2_exact}.get(expansion)
        if T2 is None:
            raise ValueError(f"unknown expansion {expansion!r}")
        return (self.m_p * self.Theta1 + T2) / self.m_p ** 3


def _kii_inverse(jac: JacobianSet) -> np.ndarray:
    s = la.svdvals(jac.Kii)
    if s[-1] <= 1e-13 * max(s[0], 1.0):
        raise SingularBlockError("K_ii is singular", float(s[-1]))
    return la.inv(jac.Kii)


def asymptotic_matrices(jac: JacobianSet, park: DevicePark, lam: complex,
                        m_p: float | None = None) -> AsymptoticSet:
    m_p = park.m_p if m_p is None else float(m_p)
    lam = complex(lam)
    n_i = jac.n_i
    Kinv = _kii_inverse(jac)
    U1 = jac.Kgi @ Kinv @ Kinv @ jac.Kig
    U2 = jac.Kgi @ Kinv @ Kinv @ Kinv @ jac.Kig
    U1, U2 = (U1 + U1.T) / 2, (U2 + U2.T) / 2

    res = lam * np.eye(n_i) + m_p * jac.Kii
    margin = float(la.svdvals(res)[-1])
    if margin < RESOLVENT_TOL * max(1.0, m_p * np.abs(jac.Kii).max()):
        raise ResolventError(f"lam*I + m_p*K_ii is singular at lam = {lam!r}", lam, margin)
    X = la.solve(res, jac.Kig.astype(complex))
    R = jac.Kgi @ la.solve(res, X)

    M, D = np.diag(park.M), np.diag(park.D)
    lc = np.conj(lam)
    Q = 2 * lam * M + D
    Theta1 = U1 @ (2 * abs(lam) ** 2 * M + lam * D)
    Theta2 = lam * U1 @ U1 + 2 * abs(lam) ** 2 * U2 @ (2 * lc * M + D)
    Theta2_exact = lam * U1 @ U1 - 2 * lam ** 2 * U2 @ (2 * lc * M + D)
    Theta = lam * R @ (m_p * np.conj(R) + np.conj(Q))
    return AsymptoticSet(U1=U1, U2=U2, Q=Q, Theta1=Theta1, Theta2=Theta2, R=R, Theta=Theta,
                         lam=lam, m_p=m_p, Theta2_exact=Theta2_exact)


def delta_A(jac: JacobianSet) -> np.ndarray:
    """Derivative of the state matrix with respect to ``m_p``."""
    n_g, n_i = jac.n_g, jac.n_i
    n = 2 * n_g + n_i
    dA = np.zeros((n, n))
    dA[2 * n_g:, :n_g] = -jac.Kig
    dA[2 * n_g:, 2 * n_g:] = -jac.Kii
    return dA


@dataclass(frozen=True, eq=False)
class SensitivityResult:
    value: complex                  # kernel form when available, else the quotient
    kernel: complex | None          # lam v*^T M^-1 R u* / v*^T M^-1 (m_p R + Q) u*
    quotient: complex               # v^T dA u / v^T u
    cond: float                     # |v^T u| / (|u| |v|)
    agreement: float                # relative gap between the two forms (nan if one missing)
    w_star: np.ndarray | None = None
    U_star: np.ndarray | None = None


def dlambda_dmp_analytic(jac: JacobianSet, park: DevicePark, mode: Mode) -> SensitivityResult:
    lam = complex(mode.lam)
    u, v = mode.u, mode.v
    vu = v @ u
    cond = abs(vu) / (la.norm(u) * la.norm(v))
    if cond < COND_FLOOR:
        raise RepeatedModeError(f"mode at {lam!r} is near defective: |v^T u| = {cond:.2e}")
    quotient = complex(v @ delta_A(jac) @ u / vu)

    kernel = w_star = U_star = None
    try:
        kv = eigvec_from_kernel(jac, park, lam)
    except (ResolventError, NumericalError):
        kv = None
    if kv is not None:
        aset = asymptotic_matrices(jac, park, lam)
        Minv = 1.0 / park.M
        us, vs = kv.u_star, kv.v_star
        num = vs @ (Minv[:, None] * aset.R) @ us
        den = vs @ (Minv[:, None] * (park.m_p * aset.R + aset.Q)) @ us
        if abs(den) < DENOM_FLOOR * max(1.0, la.norm(aset.Q, 2)):
            raise NumericalError(f"sensitivity denominator vanishes at {lam!r}")
        kernel = complex(lam * num / den)
        w_star = Minv * np.conj(vs)
        U_star = np.outer(us, np.conj(us))

    agreement = float("nan")
    if kernel is not None:
        agreement = abs(kernel - quotient) / max(abs(quotient), abs(kernel), 1e-300)
        if abs(kernel) == 0 and abs(quotient) < 1e-14:
            agreement = 0.0
    value = kernel if kernel is not None else quotient
    return SensitivityResult(value=value, kernel=kernel, quotient=quotient, cond=float(cond),
                             agreement=float(agreement), w_star=w_star, U_star=U_star)


def gain_builder(jac: JacobianSet, park: DevicePark) -> Callable[[float], np.ndarray]:
    """``m_p -> A`` for the given network and devices."""
    def build(m_p: float) -> np.ndarray:
        return assemble_state_matrix(jac, park.with_gain(m_p)).A
    return build


def track_mode(A: np.ndarray, lam_ref: complex, u_ref: np.ndarray,
               min_overlap: float = OVERLAP_MIN) -> tuple[complex, np.ndarray, float]:
    """Eigenpair of ``A`` continuing ``(lam_ref, u_ref)``.

    Candidates must have eigenvector overlap of at least ``min_overlap``;
    among those the nearest eigenvalue wins.
    """
    w, vr = la.eig(A)
    vr = vr / la.norm(vr, axis=0)
    ref = u_ref / la.norm(u_ref)
    overlap = np.abs(np.conj(ref) @ vr)
    ok = np.flatnonzero(overlap >= min_overlap)
    if len(ok) == 0:
        raise TrackingError(
            f"lost mode near {complex(lam_ref):.6g}: best eigenvector overlap {overlap.max():.3f} "
            f"< {min_overlap}; shrink the step")
    k = ok[np.argmin(np.abs(w[ok] - lam_ref))]
    return complex(w[k]), vr[:, k], float(overlap[k])


@dataclass(frozen=True)
class FDResult:
    value: complex          # Richardson extrapolation over {h, h/2}
    d_h: complex
    d_h2: complex
    h: float
    order: int              # truncation order after extrapolation

    @property
    def step_gap(self) -> float:
        return abs(self.d_h - self.d_h2) / max(abs(self.d_h2), 1e-300)


def dlambda_dmp_fd(builder: Callable[[float], np.ndarray], mode: Mode, m_p: float,
                   h: float | None = None) -> FDResult:
    """Central-difference ``d lam / d m_p`` with one Richardson step."""
    h = FD_REL_STEP * m_p if h is None else float(h)
    if not 0 < h < m_p:
        raise ValueError(f"step must lie in (0, m_p), got {h}")

    def central(step):
        lp, _, _ = track_mode(builder(m_p + step), mode.lam, mode.u)
        lm, _, _ = track_mode(builder(m_p - step), mode.lam, mode.u)
        return (lp - lm) / (2 * step)

    d1, d2 = central(h), central(h / 2)
    return FDResult(value=(4 * d2 - d1) / 3, d_h=d1, d_h2=d2, h=h, order=4)


@dataclass(frozen=True, eq=False)
class AsymptoticTable:
    lam: complex
    expansion: str
    m_p: np.ndarray
    e_R: np.ndarray
    e_Theta: np.ndarray
    slow_ratio: np.ndarray
    exponent_R: float
    exponent_Theta: float

    @property
    def slow(self) -> bool:
        return bool(np.all(self.slow_ratio < 0.1))

    def rows(self):
        for k in range(len(self.m_p)):
            yield (float(self.m_p[k]), float(self.e_R[k]), float(self.e_Theta[k]),
                   float(self.slow_ratio[k]))


def _fit_exponent(m, e):
    e = np.asarray(e, dtype=float)
    if np.all(e == 0):
        return float("nan")
    if np.any(e <= 0):
        return float("nan")
    slope = np.polyfit(np.log(m), np.log(e), 1)[0]
    return float(-slope)


def asymptotic_check(jac: JacobianSet, park: DevicePark, lam: complex,
                     m_p_list: Sequence[float] = (10.0, 100.0, 1000.0),
                     expansion: str = "conjugate") -> AsymptoticTable:
    """Residuals of the large-gain expansions of ``R`` and ``Theta`` at fixed ``lam``.

    ``expansion="conjugate"`` uses the second-order coefficient ``+2 conj(lam) U2``;
    ``"exact"`` uses ``-2 lam U2``, the coefficient of the Neumann series of the
    resolvent.  The fitted exponent is minus the log-log slope.
    """
    m = np.asarray(m_p_list, dtype=float)
    eR, eT, ratio = [], [], []
    for mp in m:
        a = asymptotic_matrices(jac, park, lam, mp)
        eR.append(la.norm(a.R - a.R_expansion(expansion), 2))
        eT.append(la.norm(a.Theta - a.Theta_expansion(expansion), 2))
        ratio.append(slow_mode_check(lam, jac, park.with_gain(mp))[0])
    eR, eT = np.array(eR), np.array(eT)
    return AsymptoticTable(lam=complex(lam), expansion=expansion, m_p=m, e_R=eR, e_Theta=eT,
                           slow_ratio=np.array(ratio), exponent_R=_fit_exponent(m, eR),
                           exponent_Theta=_fit_exponent(m, eT))


@dataclass(frozen=True, eq=False)
class SensitivityReport:
    mode: Mode
    analytic: SensitivityResult
    fd: FDResult
    rel_err: float
    asymptotic: AsymptoticTable | None = None
    extra: dict = field(default_factory=dict)

    @property
    def cond(self) -> float:
        return self.analytic.cond


def sensitivity_report(jac: JacobianSet, park: DevicePark, mode: Mode, h: float | None = None,
                       m_p_list: Sequence[float] | None = (10.0, 100.0, 1000.0)) -> SensitivityReport:
    an = dlambda_dmp_analytic(jac, park, mode)
    fd = dlambda_dmp_fd(gain_builder(jac, park), mode, park.m_p, h)
    rel = abs(an.value - fd.value) / max(abs(fd.value), abs(an.value), 1e-300)
    if abs(an.value) < 1e-14 and abs(fd.value) < 1e-10:
        rel = 0.0
    asym = None
    if m_p_list and mode.lam.imag != 0:
        try:
            asym = asymptotic_check(jac, park, mode.lam, m_p_list)
        except (ResolventError, SingularBlockError):
            asym = None
    return SensitivityReport(mode=mode, analytic=an, fd=fd, rel_err=float(rel), asymptotic=asym)
