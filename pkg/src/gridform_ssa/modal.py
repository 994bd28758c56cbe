"""Eigen-analysis of the state matrix: modes, damping, classification and
eigenvectors rebuilt from the kernel of the reduced characteristic matrix."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as la

from .devices import DevicePark
from .errors import NotOnSpectrumError, NumericalError, RepeatedModeError
from .netmodel import JacobianSet
from .statespace import StateMatrix, assemble_state_matrix, lambda_matrix

__all__ = [
    "Mode", "KernelVectors", "INTER_AREA_BAND", "mode_metrics", "eigen_modes",
    "classify_inter_area", "eigvec_from_kernel", "slow_mode_check", "fix_phase",
]

INTER_AREA_BAND = (0.1, 1.0)
SINGULARITY_TOL = 1e-8
RESIDUAL_TOL = 1e-8
SLOW_RATIO = 0.1


@dataclass(frozen=True, eq=False)
class Mode:
    index: int
    lam: complex
    freq_hz: float
    zeta: float                 # fraction, not percent
    u: np.ndarray               # right eigenvector, A u = lam u
    v: np.ndarray               # left eigenvector, v^T A = lam v^T
    residual_right: float
    residual_left: float
    cls: str                    # "inter-area" | "local" | "real" | "inverter"
    n_g: int = 0
    slow_ratio: float = float("nan")
    vu: float = float("nan")    # |v^T u| / (|u| |v|)
    u_star: np.ndarray | None = None
    v_star: np.ndarray | None = None

    @property
    def damping_pct(self) -> float:
        return 100.0 * self.zeta

    @property
    def residual(self) -> float:
        return max(self.residual_right, self.residual_left)


def mode_metrics(lam: complex) -> tuple[float, float]:
    """Modal frequency (Hz) and damping ratio (fraction) of an eigenvalue."""
    lam = complex(lam)
    mag = abs(lam)
    zeta = abs(lam.real) / mag if mag > 0 else 0.0
    return lam.imag / (2 * np.pi), zeta


def fix_phase(x: np.ndarray) -> np.ndarray:
    """Scale to unit 2-norm with the largest-magnitude entry real and positive."""
    x = np.asarray(x, dtype=complex)
    k = int(np.argmax(np.abs(x)))
    if abs(x[k]) == 0:
        return x
    x = x * (abs(x[k]) / x[k])
    return x / la.norm(x)


def _classify(freq, f_lo, f_hi, u, n_g, real):
    if real:
        return "real"
    if f_lo < freq < f_hi:
        return "inter-area"
    # energy split between generator and inverter states decides the label
    sg = la.norm(u[:2 * n_g]) ** 2
    inv = la.norm(u[2 * n_g:]) ** 2
    return "inverter" if inv > sg else "local"


def eigen_modes(sm: StateMatrix, band: tuple[float, float] = INTER_AREA_BAND,
                jac: JacobianSet | None = None, park: DevicePark | None = None,
                real_tol: float = 1e-9) -> list[Mode]:
    """Full spectrum, one :class:`Mode` per conjugate pair plus the real modes.

    Ordered by ``(freq_hz, Re lam)``.  When ``jac`` and ``park`` are given the
    slow-mode ratio is filled in.
    """
    A = sm.A
    if not np.all(np.isfinite(A)):
        raise NumericalError("state matrix has non-finite entries")
    try:
        w, vl, vr = la.eig(A, left=True, right=True)
    except la.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    scale = max(la.norm(A, 2), 1.0)
    tol = real_tol * scale

    # conjugate closure
    for lam in w:
        if abs(lam.imag) > tol and np.min(np.abs(w - np.conj(lam))) > 1e3 * tol:
            raise NumericalError(f"spectrum not closed under conjugation near {lam!r}")

    kii_norm = None
    if jac is not None and park is not None:
        kii_norm = park.m_p * la.norm(jac.Kii, 2)

    modes = []
    for k, lam in enumerate(w):
        if lam.imag < -tol:
            continue
        real = abs(lam.imag) <= tol
        if real:
            lam = complex(lam.real, 0.0)
        u = fix_phase(vr[:, k])
        v = fix_phase(np.conj(vl[:, k]))
        res_r = la.norm(A @ u - lam * u) / (scale * la.norm(u))
        res_l = la.norm(v @ A - lam * v) / (scale * la.norm(v))
        freq, zeta = mode_metrics(lam)
        modes.append(Mode(
            index=-1, lam=complex(lam), freq_hz=max(freq, 0.0), zeta=zeta, u=u, v=v,
            residual_right=float(res_r), residual_left=float(res_l),
            cls=_classify(freq, band[0], band[1], u, sm.n_g, real), n_g=sm.n_g,
            slow_ratio=abs(lam) / kii_norm if kii_norm else float("nan"),
            vu=float(abs(v @ u)),
        ))
    modes.sort(key=lambda m: (round(m.freq_hz, 12), round(m.lam.real, 12)))
    return [replace(m, index=i) for i, m in enumerate(modes)]


def classify_inter_area(modes: Sequence[Mode], band: tuple[float, float] = INTER_AREA_BAND) -> list[Mode]:
    f_lo, f_hi = band
    if not f_lo < f_hi:
        raise ValueError(f"band must satisfy f_lo < f_hi, got {band}")
    out = []
    for m in modes:
        real = m.freq_hz == 0.0
        out.append(replace(m, cls=_classify(m.freq_hz, f_lo, f_hi, m.u, m.n_g, real)))
    return out


class KernelVectors(NamedTuple):
    u: np.ndarray
    v: np.ndarray
    u_star: np.ndarray
    v_star: np.ndarray
    sigma_ratio: float
    residual_right: float
    residual_left: float


def _null_vector(C: np.ndarray, tol: float, lam, scale: float = 0.0) -> tuple[np.ndarray, float]:
    # ``scale`` guards the 1x1 case, where sigma_min / sigma_max is always one
    _, s, vh = la.svd(C)
    top = max(s[0], scale)
    ratio = s[-1] / top if top > 0 else 0.0
    if ratio >= tol:
        raise NotOnSpectrumError(
            f"lam = {lam!r} is not on the spectrum: sigma_min/sigma_max = {ratio:.3e}")
    if len(s) > 1 and s[-2] / top < tol:
        raise RepeatedModeError(f"repeated mode at lam = {lam!r}: two singular values below {tol}")
    return vh[-1].conj(), float(ratio)


def eigvec_from_kernel(jac: JacobianSet, park: DevicePark, lam: complex,
                       tol: float = SINGULARITY_TOL) -> KernelVectors:
    """Right and left eigenvectors of ``A`` built from the kernels of ``Lambda``.

    ``u_star`` spans ``Ker Lambda`` and ``v_star`` spans ``Ker Lambda^T``; for
    non-uniform inertia these differ by the inertia weighting.
    """
    m_p = park.m_p
    Lam = lambda_matrix(jac, park, lam)
    # size of the individual terms of Lambda, which cancel on the spectrum
    scale = (abs(lam) ** 2 + abs(lam) * np.max(park.D / park.M)
             + la.norm(jac.Kgg / park.M[:, None], 2) + la.norm(jac.Kgi, 2) ** 2 * m_p
             / (park.M.min() * max(la.svdvals(lam * np.eye(jac.n_i) + m_p * jac.Kii)[-1], 1e-300)))
    u_star, ratio = _null_vector(Lam, tol, lam, scale)
    v_star, _ = _null_vector(Lam.T, tol, lam, scale)
    u_star, v_star = fix_phase(u_star), fix_phase(v_star)

    n_g, n_i = jac.n_g, jac.n_i
    Minv = 1.0 / park.M
    res = lam * np.eye(n_i) + m_p * jac.Kii
    u = np.concatenate([u_star, lam * u_star,
                        -m_p * la.solve(res, jac.Kig @ u_star)])
    v = np.concatenate([(lam + Minv * park.D) * v_star, v_star,
                        -la.solve(res, jac.Kig @ (Minv * v_star))])
    u, v = fix_phase(u), fix_phase(v)

    A = assemble_state_matrix(jac, park).A
    scale = max(la.norm(A, 2), 1.0)
    rr = la.norm(A @ u - lam * u) / scale
    rl = la.norm(v @ A - lam * v) / scale
    return KernelVectors(u, v, u_star, v_star, ratio, float(rr), float(rl))


def slow_mode_check(lam: complex, jac: JacobianSet, park: DevicePark,
                    threshold: float = SLOW_RATIO) -> tuple[float, bool]:
    """``|lam| / (m_p ||K_ii||_2)`` and whether it is below ``threshold``."""
    if isinstance(lam, Mode):
        lam = lam.lam
    ratio = abs(lam) / (park.m_p * la.norm(jac.Kii, 2))
    return float(ratio), bool(ratio < threshold)
