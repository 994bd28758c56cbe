"""Root-locus sweeps over the droop setting and the storage size."""

from __future__ import annotations

import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la
from scipy.optimize import linear_sum_assignment

from .modal import INTER_AREA_BAND, Mode, eigen_modes
from .model import GridModel

logger = logging.getLogger(__name__)

__all__ = [
    "Locus", "SweepResult", "Reversal", "sweep", "sweep_droop", "sweep_size",
    "detect_reversal", "geometric_grid", "linear_grid", "worker_count", "locus_csv",
]

OVERLAP_MIN = 0.9
THREADS_ENV = "GRIDFORM_SSA_THREADS"


def worker_count(default: int | None = None) -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            logger.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
        else:
            return max(1, n)
    return default or min(4, os.cpu_count() or 1)


def geometric_grid(start: float, stop: float, points: int) -> np.ndarray:
    return np.geomspace(start, stop, points)


def linear_grid(start: float, stop: float, points: int) -> np.ndarray:
    return np.linspace(start, stop, points)


@dataclass(eq=False)
class Locus:
    mode_id: str
    inter_area: bool
    index: list = field(default_factory=list)     # axis positions covered
    lam: list = field(default_factory=list)
    overlap: list = field(default_factory=list)   # with the previous point; nan at birth

    @property
    def lam_array(self) -> np.ndarray:
        return np.array(self.lam, dtype=complex)

    @property
    def freq_hz(self) -> np.ndarray:
        return np.abs(self.lam_array.imag) / (2 * np.pi)

    @property
    def zeta(self) -> np.ndarray:
        lam = self.lam_array
        mag = np.abs(lam)
        return np.divide(-lam.real, mag, out=np.zeros_like(mag), where=mag > 0)


@dataclass(eq=False)
class SweepResult:
    param_name: str
    values: np.ndarray
    loci: list[Locus]
    log_axis: bool = False
    m_p: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)
    snapshots: list[list[Mode]] | None = None

    def params(self, locus: Locus) -> np.ndarray:
        return self.values[np.asarray(locus.index, dtype=int)]

    @property
    def inter_area(self) -> list[Locus]:
        return [c for c in self.loci if c.inter_area]

    def locus(self, mode_id: str) -> Locus:
        for c in self.loci:
            if c.mode_id == mode_id:
                return c
        raise KeyError(mode_id)

    def segments(self, locus: Locus, tol: float = 0.0) -> list[tuple[float, float, str]]:
        """Maximal runs over which the damping ratio only rises or only falls."""
        p, z = self.params(locus), locus.zeta
        out = []
        for k in range(len(z) - 1):
            d = z[k + 1] - z[k]
            trend = "flat" if abs(d) <= tol else ("increasing" if d > 0 else "decreasing")
            if out and out[-1][2] == trend:
                out[-1] = (out[-1][0], float(p[k + 1]), trend)
            else:
                out.append((float(p[k]), float(p[k + 1]), trend))
        return out


def _strictly_monotone(v: np.ndarray) -> bool:
    d = np.diff(v)
    return bool(np.all(d > 0) or np.all(d < 0))


def _overlap(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    U = U / la.norm(U, axis=0)
    V = V / la.norm(V, axis=0)
    return np.abs(np.conj(U.T) @ V)


def _track(snapshots: list[list[Mode]]) -> tuple[list[Locus], list[str]]:
    loci: list[Locus] = []
    active: list[int] = []          # locus index for each mode of the previous snapshot
    warnings: list[str] = []
    splits: dict[str, int] = {}
    next_id = 0

    def new_locus(m: Mode, k: int, parent: Locus | None = None) -> int:
        nonlocal next_id
        if parent is None:
            mid = str(next_id)
            next_id += 1
            tag = k == 0 and m.cls == "inter-area"
        else:
            root = parent.mode_id.split(".")[0]
            splits[root] = splits.get(root, 0) + 1
            mid = f"{root}.{splits[root]}"
            tag = parent.inter_area
        loci.append(Locus(mode_id=mid, inter_area=tag, index=[k], lam=[m.lam], overlap=[float("nan")]))
        return len(loci) - 1

    for k, modes in enumerate(snapshots):
        if k == 0:
            active = [new_locus(m, 0) for m in modes]
            continue
        prev = snapshots[k - 1]
        U = np.column_stack([m.u for m in prev])
        V = np.column_stack([m.u for m in modes])
        ov = _overlap(U, V)
        lp = np.array([m.lam for m in prev])
        lc = np.array([m.lam for m in modes])
        dist = np.abs(lp[:, None] - lc[None, :]) / (np.abs(lp)[:, None] + np.abs(lc)[None, :] + 1.0)
        rows, cols = linear_sum_assignment((1.0 - ov) + dist)
        now = [-1] * len(modes)
        for r, c in zip(rows, cols):
            parent = loci[active[r]]
            if ov[r, c] >= OVERLAP_MIN:
                parent.index.append(k)
                parent.lam.append(modes[c].lam)
                parent.overlap.append(float(ov[r, c]))
                now[c] = active[r]
            else:
                msg = (f"tracking break for mode {parent.mode_id} at point {k}: "
                       f"overlap {ov[r, c]:.3f} < {OVERLAP_MIN}; locus split")
                warnings.append(msg)
                logger.warning(msg)
                now[c] = new_locus(modes[c], k, parent)
        for c, idx in enumerate(now):
            if idx < 0:
                now[c] = new_locus(modes[c], k)
        active = now
    return loci, warnings


def sweep(build: Callable[[float], GridModel], values: Sequence[float], param_name: str,
          band: tuple[float, float] = INTER_AREA_BAND, log_axis: bool | None = None,
          workers: int | None = None, keep_snapshots: bool = False) -> SweepResult:
    """Modal analysis at every axis value with continuous mode tracking.

    Grid points are evaluated concurrently; tracking runs in axis order, so
    results do not depend on scheduling.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) == 0:
        raise ValueError("sweep needs at least one axis value")
    if len(values) > 1 and not _strictly_monotone(values):
        raise ValueError("sweep axis must be strictly monotone")
    if log_axis is None:
        log_axis = bool(len(values) > 2 and np.all(values > 0)
                        and np.allclose(np.diff(np.log(values)), np.log(values[1] / values[0]))
                        and not np.allclose(np.diff(values), values[1] - values[0]))

    def point(v):
        gm = build(float(v))
        return gm.m_p, eigen_modes(gm.state_matrix(), band)

    n = worker_count() if workers is None else max(1, workers)
    if n == 1 or len(values) == 1:
        results = [point(v) for v in values]
    else:
        with ThreadPoolExecutor(max_workers=n) as ex:
            results = list(ex.map(point, values))
    m_p = np.array([r[0] for r in results])
    snaps = [r[1] for r in results]
    loci, warns = _track(snaps)
    return SweepResult(param_name=param_name, values=values, loci=loci, log_axis=log_axis,
                       m_p=m_p, warnings=warns, snapshots=snaps if keep_snapshots else None)


def sweep_droop(model: GridModel, mp_hat: Sequence[float], **kw) -> SweepResult:
    """Sweep the per-unit droop setting (fractions, 0.05 = 5%)."""
    if len(mp_hat) < 3:
        raise ValueError("a droop sweep needs at least three grid points")
    return sweep(model.with_droop_setting, mp_hat, "mp_hat", **kw)


def sweep_size(model: GridModel, capacity: Sequence[float], mp_hat: float = 0.03, **kw) -> SweepResult:
    """Sweep total inverter capacity as a fraction of system load at fixed setting."""
    base = model.with_droop_setting(mp_hat)
    kw.setdefault("log_axis", False)
    return sweep(base.with_capacity_fraction, capacity, "capacity_fraction", **kw)


@dataclass(frozen=True)
class Reversal:
    mode_id: str
    interior: bool
    critical: float | None      # parameter value of the damping maximum
    zeta_max: float | None
    note: str = ""


def _vertex(x, y) -> tuple[float, float]:
    c2, c1, c0 = np.polyfit(x, y, 2)
    if c2 >= 0:
        k = int(np.argmax(y))
        return float(x[k]), float(y[k])
    xv = -c1 / (2 * c2)
    return float(xv), float(c0 - c1 ** 2 / (4 * c2))


def detect_reversal(sr: SweepResult, mode_ids: Sequence[str] | None = None) -> dict[str, Reversal]:
    """Interior damping maximum per locus, refined by a local quadratic fit."""
    out = {}
    loci = sr.loci if mode_ids is None else [sr.locus(m) for m in mode_ids]
    for c in loci:
        p, z = sr.params(c), c.zeta
        if len(z) < 5:
            out[c.mode_id] = Reversal(c.mode_id, False, None, None, "fewer than 5 points")
            continue
        k = int(np.argmax(z))
        if k == 0 or k == len(z) - 1:
            out[c.mode_id] = Reversal(c.mode_id, False, None, float(z[k]), "no interior reversal")
            continue
        x = np.log(p[k - 1:k + 2]) if sr.log_axis else p[k - 1:k + 2]
        xv, zv = _vertex(x, z[k - 1:k + 2])
        crit = float(np.exp(xv)) if sr.log_axis else xv
        out[c.mode_id] = Reversal(c.mode_id, True, crit, zv, "")
    return out


def locus_csv(sr: SweepResult, header: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    buf.write("param_name,param_value,mode_id,re,im,freq_hz,damping_pct,inter_area\n")
    rows = []
    for c in sr.loci:
        for j, lam in zip(c.index, c.lam):
            rows.append((j, c.mode_id, lam, c.inter_area))
    rows.sort(key=lambda r: (r[0], _id_key(r[1])))
    for j, mid, lam, ia in rows:
        mag = abs(lam)
        zeta = -lam.real / mag if mag > 0 else 0.0
        buf.write(",".join([sr.param_name, repr(float(sr.values[j])), mid, repr(float(lam.real)),
                            repr(float(lam.imag)), repr(float(abs(lam.imag) / (2 * np.pi))),
                            repr(float(100 * zeta)), str(int(ia))]) + "\n")
    return buf.getvalue()


def _id_key(mid: str):
    return tuple(int(p) for p in mid.split("."))


def reversal_json(rev: dict[str, Reversal]) -> dict:
    return {k: {"interior": r.interior, "critical": r.critical, "zeta_max": r.zeta_max,
                "note": r.note} for k, r in sorted(rev.items(), key=lambda kv: _id_key(kv[0]))}


def sweep_inertia(model: GridModel, scale: Sequence[float], **kw) -> SweepResult:
    """Sweep a common multiplier on every generator inertia."""
    from dataclasses import replace
    return sweep(lambda s: model.with_park(replace(model.park, M=model.park.M * s)),
                 scale, "inertia_scale", **kw)
