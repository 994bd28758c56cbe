"""Damping-design conditions on the droop gain."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as la

from .devices import DevicePark, Extremes, park_extremes
from .modal import Mode, slow_mode_check
from .netmodel import JacobianSet
from .sensitivity import AsymptoticSet, asymptotic_matrices

__all__ = [
    "hermitian_part", "lambda_max_h", "rayleigh_lambda_max", "theorem1_condition",
    "DesignVariables", "design_variables", "mstar", "mstar_limit", "ModeDesign",
    "design_report",
]


def hermitian_part(C) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian and skew-Hermitian parts, ``C = C_h + C_h'``."""
    C = np.asarray(C)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {C.shape}")
    CH = np.conj(C.T)
    return (C + CH) / 2, (C - CH) / 2


def lambda_max_h(C) -> float:
    """Largest eigenvalue of the Hermitian part of ``C``."""
    Ch, _ = hermitian_part(C)
    return float(la.eigvalsh(Ch)[-1])


def rayleigh_lambda_max(C, samples: int = 1000, rng=None) -> float:
    """Lower bound on ``lambda_max_h(C)`` from random unit vectors."""
    rng = np.random.default_rng(rng)
    C = np.asarray(C)
    n = C.shape[0]
    X = rng.standard_normal((n, samples)) + 1j * rng.standard_normal((n, samples))
    X /= la.norm(X, axis=0)
    q = np.einsum("ij,ik,kj->j", np.conj(X), C, X)
    return float(np.max(q.real))


def theorem1_condition(aset: AsymptoticSet, m_p: float | None = None) -> tuple[bool, float]:
    """Necessary condition for a droop decrease to raise the damping of the mode.

    Returns ``(holds, lhs)`` with ``lhs = m_p lmax(Theta1_h) + lmax(Theta2_h)``.
    """
    m_p = aset.m_p if m_p is None else m_p
    lhs = m_p * lambda_max_h(aset.Theta1) + lambda_max_h(aset.Theta2)
    return bool(lhs > 0), float(lhs)


class DesignVariables(NamedTuple):
    D_star: float
    zeta_l: float
    zeta_u: float
    zeta_u_infinite: bool


def design_variables(lam: complex, ext: Extremes, gamma_l: float, gamma_u: float) -> DesignVariables:
    if gamma_l <= 0 or gamma_u <= 0:
        raise ValueError(f"grid-strength bounds must be positive, got {gamma_l}, {gamma_u}")
    a = abs(lam)
    r = gamma_u / gamma_l
    base = 1 / gamma_u + 4 * a ** 2 * ext.M_l
    D_star = ext.M_u * base / r
    zeta_l = 2 * a * ext.D_u * r ** 3 / base
    if ext.D_l == 0:
        return DesignVariables(D_star, zeta_l, float("inf"), True)
    zeta_u = 2 * a * ext.M_u * r ** 2 / ext.D_l
    return DesignVariables(D_star, zeta_l, zeta_u, False)


def mstar(lam: complex, zeta: float, ext: Extremes, gamma_u: float,
          gamma_l: float) -> tuple[float, bool]:
    """Lower bound on the droop gain and whether its preconditions hold."""
    dv = design_variables(lam, ext, gamma_l, gamma_u)
    ok = ext.D_u * ext.D_l < dv.D_star and dv.zeta_l < zeta < dv.zeta_u
    a = abs(lam)
    r = gamma_u / gamma_l
    num = (1 + 4 * a ** 2 * ext.M_l * gamma_u) * (zeta - dv.zeta_l)
    # D_l (zeta_u - zeta), written so that D_l = 0 needs no special case
    den = gamma_u ** 2 * (2 * a * ext.M_u * r ** 2 - ext.D_l * zeta)
    if den == 0:
        return float("inf"), bool(ok)
    return float(num / den), bool(ok)


def mstar_limit(lam: complex, zeta: float, M_l: float, M_u: float, gamma_u: float) -> float:
    a = abs(lam)
    return float((1 + 4 * a ** 2 * M_l * gamma_u) * zeta / (2 * a * M_u * gamma_u ** 2))


@dataclass(frozen=True)
class ModeDesign:
    mode_id: str
    lam_re: float
    lam_im: float
    freq_hz: float
    zeta: float
    damping_pct: float
    slow_ratio: float
    lmax_theta1_h: float
    lmax_theta2_h: float
    theorem1_lhs: float
    theorem1_holds: bool
    verdict: str
    D_star: float
    zeta_l: float
    zeta_u: float
    zeta_u_infinite: bool
    preconditions_hold: bool
    m_star: float
    m_p: float
    margin: float
    m_star_limit: float


def design_mode(jac: JacobianSet, park: DevicePark, mode: Mode, mode_id: str | None = None) -> ModeDesign:
    lam = mode.lam
    aset = asymptotic_matrices(jac, park, lam)
    holds, lhs = theorem1_condition(aset)
    ext = park_extremes(park)
    gl, gu = jac.gamma_l, jac.gamma_u
    dv = design_variables(lam, ext, gl, gu)
    ms, pre = mstar(lam, mode.zeta, ext, gu, gl)
    return ModeDesign(
        mode_id=str(mode.index) if mode_id is None else mode_id,
        lam_re=lam.real, lam_im=lam.imag, freq_hz=mode.freq_hz, zeta=mode.zeta,
        damping_pct=mode.damping_pct, slow_ratio=slow_mode_check(lam, jac, park)[0],
        lmax_theta1_h=lambda_max_h(aset.Theta1), lmax_theta2_h=lambda_max_h(aset.Theta2),
        theorem1_lhs=lhs, theorem1_holds=holds,
        verdict="damping-enhancement possible" if holds else "damping-enhancement excluded",
        D_star=dv.D_star, zeta_l=dv.zeta_l, zeta_u=dv.zeta_u, zeta_u_infinite=dv.zeta_u_infinite,
        preconditions_hold=pre, m_star=ms, m_p=park.m_p, margin=park.m_p - ms,
        m_star_limit=mstar_limit(lam, mode.zeta, ext.M_l, ext.M_u, gu),
    )


def design_report(jac: JacobianSet, park: DevicePark, modes: Sequence[Mode]) -> dict:
    """Per-mode design quantities keyed by mode id, plus the largest bound."""
    rows = {str(m.index): asdict(design_mode(jac, park, m)) for m in modes}
    applicable = [r["m_star"] for r in rows.values() if r["preconditions_hold"]]
    return {
        "gamma_l": jac.gamma_l, "gamma_u": jac.gamma_u, "m_p": park.m_p,
        "modes": rows,
        "max_m_star": max((r["m_star"] for r in rows.values()), default=None),
        "max_m_star_applicable": max(applicable, default=None),
    }
