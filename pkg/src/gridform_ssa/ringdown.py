"""Nonlinear ringdown of the reduced swing and droop-angle model, and
modal estimates from the resulting trajectories."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as la
from scipy import signal, stats

from .errors import CaseError
from .model import GridModel
from .netmodel import injections

__all__ = ["Equilibrium", "Trajectory", "ModeEstimate", "equilibrium", "simulate",
           "linear_response", "estimate_mode", "estimate_signal", "max_stable_dt", "default_dt",
           "modal_perturbation"]

WEDGE = np.pi / 2
_LINK_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class Equilibrium:
    delta: np.ndarray       # internal angles, SGs first
    P_m: np.ndarray         # generator mechanical power
    P_set: np.ndarray       # inverter power set-points
    omega0: float


def equilibrium(model: GridModel) -> Equilibrium:
    red = model.reduced
    P = injections(red, red.delta0)
    return Equilibrium(delta=red.delta0.copy(), P_m=P[:red.n_g].copy(),
                       P_set=P[red.n_g:].copy(), omega0=model.park.omega0)


@dataclass(eq=False)
class Trajectory:
    t: np.ndarray
    x: np.ndarray                 # rows are time points, columns follow ``labels``
    labels: tuple[str, ...]
    n_g: int
    n_i: int
    eq: Equilibrium
    events: list[str] = field(default_factory=list)

    @property
    def x_eq(self) -> np.ndarray:
        d = self.eq.delta
        return np.concatenate([d[:self.n_g], np.zeros(self.n_g), d[self.n_g:]])

    @property
    def deviation(self) -> np.ndarray:
        return self.x - self.x_eq

    @property
    def delta_g(self) -> np.ndarray:
        return self.x[:, :self.n_g]

    @property
    def omega_g(self) -> np.ndarray:
        return self.x[:, self.n_g:2 * self.n_g]

    @property
    def delta_i(self) -> np.ndarray:
        return self.x[:, 2 * self.n_g:]

    @property
    def completed(self) -> bool:
        return not self.events

    def channel(self, ch: int | str) -> int:
        if isinstance(ch, str):
            try:
                return self.labels.index(ch)
            except ValueError:
                raise CaseError(f"unknown state {ch!r}; expected one of {', '.join(self.labels)}") from None
        return int(ch)

    def to_csv(self, header: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        for ev in self.events:
            buf.write(f"# event: {ev}\n")
        buf.write("t," + ",".join(self.labels) + "\n")
        for tk, row in zip(self.t, self.x):
            buf.write(repr(float(tk)) + "," + ",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()


def max_stable_dt(model: GridModel) -> float:
    """Largest step allowed: 20 steps per period of the fastest linear mode."""
    lam = la.eigvals(model.state_matrix().A)
    f_max = np.abs(lam).max() / (2 * np.pi)
    return float("inf") if f_max == 0 else float(1.0 / (20.0 * f_max))


def modal_perturbation(mode, eps: float) -> np.ndarray:
    """State offset of size ``eps`` along the real part of a mode shape."""
    u = np.real(mode.u)
    return eps * u / np.abs(u).max()


def _initial_state(model: GridModel, eq: Equilibrium, perturbation, labels) -> np.ndarray:
    n_g = model.jac.n_g
    x0 = np.concatenate([eq.delta[:n_g], np.zeros(n_g), eq.delta[n_g:]])
    if perturbation is None:
        return x0
    if isinstance(perturbation, Mapping):
        for name, amp in perturbation.items():
            if name not in labels:
                raise CaseError(f"unknown state {name!r}; expected one of {', '.join(labels)}")
            x0[labels.index(name)] += float(amp)
        return x0
    dx = np.asarray(perturbation, dtype=float)
    if dx.shape != x0.shape:
        raise CaseError(f"perturbation has shape {dx.shape}, state has {x0.shape}")
    return x0 + dx


def default_dt(model: GridModel) -> float:
    return min(1e-3, 0.5 * max_stable_dt(model))


def simulate(model: GridModel, perturbation=None, horizon: float = 20.0, dt: float | None = None,
             check_dt: bool = True) -> Trajectory:
    """Fixed-step RK4 integration from the equilibrium plus ``perturbation``.

    ``perturbation`` is a state-offset vector or a mapping from state label to
    offset.  Leaving the angle wedge ends the run early with an event.
    ``dt`` defaults to the smaller of 1 ms and half the stability limit.
    """
    if dt is None:
        dt = default_dt(model)
    if dt <= 0 or horizon <= 0:
        raise CaseError("dt and horizon must be positive")
    if check_dt:
        lim = max_stable_dt(model)
        if dt > lim:
            raise CaseError(f"dt = {dt:g} s exceeds 1/(20 f_max) = {lim:.3g} s")
    red, park = model.reduced, model.park
    n_g, n_i = red.n_g, red.n_i
    eq = equilibrium(model)
    sm = model.state_matrix()
    labels = sm.labels
    M, D, m_p = park.M, park.D, park.m_p

    E = red.E
    EEw = E[:, None] * E[None, :] * red.coupling
    Eties = E * red.ref_v * red.ties
    linked = np.abs(red.coupling) > _LINK_EPS * max(np.abs(red.B).max(), 1.0)
    tied = np.abs(red.ties) > _LINK_EPS * max(np.abs(red.B).max(), 1.0)

    def rhs(x):
        d = np.concatenate([x[:n_g], x[2 * n_g:]])
        P = (EEw * np.sin(d[:, None] - d[None, :])).sum(axis=1) + Eties * np.sin(d - red.ref_angle)
        w = x[n_g:2 * n_g]
        return np.concatenate([w, (eq.P_m - P[:n_g] - D * w) / M, -m_p * (P[n_g:] - eq.P_set)])

    def wedge_violation(x):
        d = np.concatenate([x[:n_g], x[2 * n_g:]])
        diff = np.abs(d[:, None] - d[None, :])
        if np.any(linked & (diff >= WEDGE)):
            k, j = np.argwhere(linked & (diff >= WEDGE))[0]
            return f"{red.labels[k]}-{red.labels[j]}"
        if np.any(tied & (np.abs(d - red.ref_angle) >= WEDGE)):
            return f"{red.labels[int(np.argmax(tied & (np.abs(d - red.ref_angle) >= WEDGE)))]}-reference"
        return None

    steps = int(round(horizon / dt))
    x = _initial_state(model, eq, perturbation, labels)
    out = np.empty((steps + 1, x.size))
    out[0] = x
    events = []
    n = steps
    for k in range(steps):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * dt * k1)
        k3 = rhs(x + 0.5 * dt * k2)
        k4 = rhs(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = x
        bad = wedge_violation(x)
        if bad is not None or not np.all(np.isfinite(x)):
            events.append(f"nonlinear regime: angle wedge left on {bad} at t = {(k + 1) * dt:.6g} s")
            n = k + 1
            break
    t = np.arange(n + 1) * dt
    return Trajectory(t=t, x=out[:n + 1], labels=labels, n_g=n_g, n_i=n_i, eq=eq, events=events)


def linear_response(A: np.ndarray, x0: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``exp(A t) x0`` on a uniform grid ``t`` starting at zero."""
    t = np.asarray(t, dtype=float)
    if len(t) < 2:
        return np.asarray(x0, dtype=float)[None, :]
    Phi = la.expm(A * (t[1] - t[0]))
    out = np.empty((len(t), len(x0)))
    x = np.asarray(x0, dtype=float)
    for k in range(len(t)):
        out[k] = x
        x = Phi @ x
    return out


@dataclass(frozen=True)
class ModeEstimate:
    oscillatory: bool
    freq_hz: float = float("nan")
    zeta: float = float("nan")
    freq_err: float = float("nan")
    zeta_err: float = float("nan")
    note: str = ""


def _extrema(y: np.ndarray, fs: float) -> tuple[np.ndarray, np.ndarray]:
    """Times and absolute values of local extrema, refined by a parabola."""
    dy = np.diff(y)
    idx = np.flatnonzero(np.sign(dy[:-1]) * np.sign(dy[1:]) < 0) + 1
    ts, amps = [], []
    for k in idx:
        a, b, c = y[k - 1], y[k], y[k + 1]
        den = a - 2 * b + c
        off = 0.5 * (a - c) / den if den != 0 else 0.0
        ts.append((k + off) / fs)
        amps.append(abs(b - 0.25 * (a - c) * off))
    return np.array(ts), np.array(amps)


def estimate_signal(t: np.ndarray, y: np.ndarray, rel_peak: float = 0.05,
                    band_halfwidth: float = 0.3, pad: int = 8) -> ModeEstimate:
    """Dominant frequency and damping ratio of a ringdown signal.

    The frequency comes from the largest spectral peak; damping from a
    log-decrement regression over the extrema of the band-passed signal.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < 16:
        return ModeEstimate(False, note="too few samples")
    fs = 1.0 / (t[1] - t[0])
    nfft = int(2 ** np.ceil(np.log2(len(y) * pad)))
    # Hann window keeps leakage sidelobes under the peak threshold
    spec = np.abs(np.fft.rfft(y * signal.windows.hann(len(y)), nfft))
    freqs = np.fft.rfftfreq(nfft, 1.0 / fs)
    top = spec.max()
    if top == 0:
        return ModeEstimate(False, note="non-oscillatory: flat signal")
    peaks, props = signal.find_peaks(spec, height=rel_peak * top, prominence=0.5 * rel_peak * top)
    if len(peaks) == 0:
        return ModeEstimate(False, note="non-oscillatory: no spectral peak above threshold")
    k = peaks[np.argmax(props["peak_heights"])]
    f0 = freqs[k]
    if 0 < k < len(spec) - 1:
        a, b, c = np.log(spec[k - 1:k + 2])
        den = a - 2 * b + c
        if den != 0:
            f0 = freqs[k] + 0.5 * (a - c) / den * (freqs[1] - freqs[0])

    lo, hi = (1 - band_halfwidth) * f0, (1 + band_halfwidth) * f0
    if hi >= fs / 2:
        return ModeEstimate(False, note="peak too close to Nyquist")
    others = [p for p in peaks if not lo <= freqs[p] <= hi]
    if others:
        sos = signal.butter(2, [lo, hi], btype="bandpass", fs=fs, output="sos")
        yf = signal.sosfiltfilt(sos, y)
        # drop the filter's edge transients, which last about 1/bandwidth
        edge = int(np.ceil(max(fs / f0, 2 * fs / (hi - lo))))
        if 2 * edge >= len(yf):
            return ModeEstimate(False, f0, note="record too short for the band-pass filter")
    else:
        yf, edge = y, 0
    ts, amps = _extrema(yf[edge:len(yf) - edge], fs)
    ts = ts + edge / fs
    good = amps > 1e-12 * np.abs(yf).max()
    ts, amps = ts[good], amps[good]
    if len(ts) < 4:
        return ModeEstimate(False, f0, note="too few extrema for a log decrement")

    per = stats.linregress(np.arange(len(ts)), ts)          # half periods
    omega = np.pi / per.slope
    dec = stats.linregress(ts, np.log(amps))
    sigma = -dec.slope
    zeta = sigma / np.hypot(sigma, omega)
    f_err = omega / (2 * np.pi) * per.stderr / per.slope
    z_err = dec.stderr * omega ** 2 / np.hypot(sigma, omega) ** 3
    return ModeEstimate(True, float(omega / (2 * np.pi)), float(zeta), float(f_err), float(z_err))


def estimate_mode(traj: Trajectory, channel: int | str, **kw) -> ModeEstimate:
    """Frequency (Hz) and damping ratio of the dominant mode in one state."""
    ch = traj.channel(channel)
    return estimate_signal(traj.t, traj.deviation[:, ch], **kw)
