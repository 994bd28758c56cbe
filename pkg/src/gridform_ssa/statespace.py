"""Composite small-signal state matrix and the reduced characteristic matrix."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .devices import DevicePark
from .errors import CaseError, ResolventError
from .netmodel import JacobianSet

__all__ = ["StateMatrix", "assemble_state_matrix", "lambda_matrix", "resolvent_margin"]

RESOLVENT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class StateMatrix:
    """``A`` over the state ordering ``[d_delta_g, d_omega_g, d_delta_i]``."""

    A: np.ndarray
    n_g: int
    n_i: int
    m_p: float
    labels: tuple[str, ...]
    provenance: dict

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def block(self, r: int, c: int) -> np.ndarray:
        """Block ``(r, c)`` using 1-based block indices."""
        edges = [0, self.n_g, 2 * self.n_g, self.n]
        return self.A[edges[r - 1]:edges[r], edges[c - 1]:edges[c]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.labels) + "\n")
        for row in self.A:
            buf.write(",".join(repr(float(x)) for x in row) + "\n")
        return buf.getvalue()


def state_labels(jac: JacobianSet, park: DevicePark) -> tuple[str, ...]:
    sg = park.sg_ids or tuple(f"G{k + 1}" for k in range(park.n_g))
    gfm = park.gfm_ids or tuple(f"I{j + 1}" for j in range(park.n_i))
    return (tuple(f"delta_{s}" for s in sg) + tuple(f"omega_{s}" for s in sg)
            + tuple(f"delta_{s}" for s in gfm))


def assemble_state_matrix(jac: JacobianSet, park: DevicePark) -> StateMatrix:
    n_g, n_i = jac.n_g, jac.n_i
    if (park.n_g, park.n_i) != (n_g, n_i):
        raise CaseError(
            f"dimension mismatch: network has {n_g} SGs / {n_i} GFMs, "
            f"park has {park.n_g} / {park.n_i}")
    m_p = park.m_p
    Minv = 1.0 / park.M
    n = 2 * n_g + n_i
    A = np.zeros((n, n))
    g, w, i = slice(0, n_g), slice(n_g, 2 * n_g), slice(2 * n_g, n)
    A[g, w] = np.eye(n_g)
    A[w, g] = -Minv[:, None] * jac.Kgg
    A[w, w] = -np.diag(Minv * park.D)
    A[w, i] = -Minv[:, None] * jac.Kgi
    A[i, g] = -m_p * jac.Kig
    A[i, i] = -m_p * jac.Kii
    return StateMatrix(A=A, n_g=n_g, n_i=n_i, m_p=m_p, labels=state_labels(jac, park),
                       provenance={"jacobian": jac.digest(), "park": park.digest()})


def resolvent_margin(jac: JacobianSet, m_p: float, lam: complex) -> float:
    """Smallest singular value of ``lam I + m_p K_ii``."""
    return float(la.svdvals(lam * np.eye(jac.n_i) + m_p * jac.Kii)[-1])


def lambda_matrix(jac: JacobianSet, park: DevicePark, lam: complex, m_p: float | None = None) -> np.ndarray:
    """``Lambda(lam, m_p)``; singular exactly when ``lam`` is an eigenvalue of ``A``."""
    m_p = park.m_p if m_p is None else m_p
    n_g, n_i = jac.n_g, jac.n_i
    res = lam * np.eye(n_i) + m_p * jac.Kii
    margin = float(la.svdvals(res)[-1])
    if margin < RESOLVENT_TOL * max(1.0, m_p * np.abs(jac.Kii).max()):
        raise ResolventError(f"lam*I + m_p*K_ii is singular at lam = {lam!r} "
                             f"(smallest singular value {margin:.3e})", lam, margin)
    Minv = 1.0 / park.M
    inner = jac.Kgg - m_p * jac.Kgi @ la.solve(res, jac.Kig.astype(complex))
    return (lam ** 2 * np.eye(n_g) + lam * np.diag(Minv * park.D)
            + Minv[:, None] * inner)
