"""Synchronous-generator and grid-forming inverter parameters."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import CaseError

logger = logging.getLogger(__name__)

__all__ = [
    "DevicePark", "Extremes", "TimescaleCheck", "droop_from_setting",
    "setting_from_droop", "park_extremes", "timescale_check", "park_from_case",
]

# relative spread tolerated between normalized droop gains
_UNIFORM_RTOL = 1e-9


def droop_from_setting(mp_hat, S, base):
    """Normalize a droop setting to the system base: ``m_p = m̂_p / (S / base)``."""
    S = np.asarray(S, dtype=float)
    if np.any(S <= 0):
        raise CaseError(f"inverter capacity must be positive, got {S}")
    out = np.asarray(mp_hat, dtype=float) * base / S
    return float(out) if out.ndim == 0 else out


def setting_from_droop(mp, S, base):
    S = np.asarray(S, dtype=float)
    if np.any(S <= 0):
        raise CaseError(f"inverter capacity must be positive, got {S}")
    out = np.asarray(mp, dtype=float) * S / base
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class DevicePark:
    """Device parameters.

    ``M``, ``D`` are per-generator inertia and damping; ``S`` (MVA),
    ``mp_hat``, ``mq_hat`` and ``tau`` are per-inverter.  The normalized
    droop gain must be the same for every inverter.
    """

    M: np.ndarray
    D: np.ndarray
    S: np.ndarray
    mp_hat: np.ndarray
    tau: np.ndarray
    mq_hat: np.ndarray | None = None
    base_mva: float = 100.0
    omega0: float = 2 * np.pi * 60.0
    sg_ids: tuple[str, ...] = ()
    gfm_ids: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("M", "D", "S", "mp_hat", "tau"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if self.mq_hat is None:
            object.__setattr__(self, "mq_hat", np.zeros_like(self.S))
        else:
            object.__setattr__(self, "mq_hat", np.atleast_1d(np.asarray(self.mq_hat, dtype=float)))
        if len(self.M) == 0 or len(self.M) != len(self.D):
            raise CaseError("need one (M, D) pair per generator and at least one generator")
        n_i = len(self.S)
        if n_i == 0 or any(len(a) != n_i for a in (self.mp_hat, self.tau, self.mq_hat)):
            raise CaseError("need one (S, mp, mq, tau) set per inverter and at least one inverter")
        if np.any(self.M <= 0):
            raise CaseError("inertia M must be positive")
        if np.any(self.D < 0):
            raise CaseError("damping D must be non-negative")
        if np.any(self.S <= 0):
            raise CaseError("inverter capacity S must be positive")
        if np.any(self.mp_hat <= 0):
            raise CaseError("droop setting mp must be positive")
        if np.any(self.tau <= 0):
            raise CaseError("filter time constant tau must be positive")
        gains = droop_from_setting(self.mp_hat, self.S, self.base_mva)
        if np.ptp(gains) > _UNIFORM_RTOL * np.abs(gains).max():
            raise CaseError(
                "heterogeneous normalized droop gains "
                f"{np.array2string(gains, precision=6)}; every inverter must share one m_p "
                "(set mp proportional to S)")

    @classmethod
    def simple(cls, M, D, m_p, n_i=1, tau=0.02, base_mva=100.0) -> "DevicePark":
        """Park with unit-capacity inverters whose setting equals ``m_p``."""
        return cls(M=M, D=D, S=np.full(n_i, base_mva), mp_hat=np.full(n_i, float(m_p)),
                   tau=np.full(n_i, tau), base_mva=base_mva)

    @property
    def n_g(self) -> int:
        return len(self.M)

    @property
    def n_i(self) -> int:
        return len(self.S)

    @property
    def m_p(self) -> float:
        """Common normalized droop gain."""
        return float(np.mean(droop_from_setting(self.mp_hat, self.S, self.base_mva)))

    def with_setting(self, mp_hat: float) -> "DevicePark":
        return replace(self, mp_hat=np.full(self.n_i, float(mp_hat)))

    def with_capacity(self, S) -> "DevicePark":
        S = np.broadcast_to(np.asarray(S, dtype=float), (self.n_i,)).copy()
        # keep the per-inverter setting; uniform S keeps the gain uniform
        return replace(self, S=S)

    def with_gain(self, m_p: float) -> "DevicePark":
        return replace(self, mp_hat=setting_from_droop(np.full(self.n_i, float(m_p)), self.S, self.base_mva))

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.M, self.D, self.S, self.mp_hat, self.tau):
            h.update(np.ascontiguousarray(a).tobytes())
        h.update(np.float64(self.base_mva).tobytes())
        return h.hexdigest()[:16]


class Extremes(NamedTuple):
    M_u: float
    M_l: float
    D_u: float
    D_l: float


def park_extremes(park: DevicePark) -> Extremes:
    return Extremes(float(park.M.max()), float(park.M.min()),
                    float(park.D.max()), float(park.D.min()))


class TimescaleCheck(NamedTuple):
    margin: float
    warning: str | None


def timescale_check(park: DevicePark, threshold: float = 10.0) -> TimescaleCheck:
    """Ratio of the slowest inverter filter rate to the fastest generator decay rate.

    Below ``threshold`` the quasi-steady treatment of the inverter frequency
    loop is questionable and a warning is attached.
    """
    fastest_sg = float(np.max(park.D / park.M))
    slowest_gfm = float(np.min(1.0 / park.tau))
    margin = np.inf if fastest_sg == 0.0 else slowest_gfm / fastest_sg
    warning = None
    if margin < threshold:
        warning = (f"inverter filter is only {margin:.3g}x faster than generator damping; "
                   "quasi-steady droop reduction is suspect")
        logger.warning(warning)
    return TimescaleCheck(float(margin), warning)


def park_from_case(case) -> DevicePark:
    return DevicePark(
        M=[g.M for g in case.sgs],
        D=[g.D for g in case.sgs],
        S=[c.S for c in case.gfms],
        mp_hat=[c.mp for c in case.gfms],
        mq_hat=[c.mq for c in case.gfms],
        tau=[c.tau for c in case.gfms],
        base_mva=case.base_mva,
        omega0=2 * np.pi * case.frequency_hz,
        sg_ids=tuple(g.id for g in case.sgs),
        gfm_ids=tuple(c.id for c in case.gfms),
    )
