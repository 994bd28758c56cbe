"""Network ingestion, Kron reduction and the angle Jacobians.

The network is lossless.  Every device (synchronous generator or grid-forming
inverter) is represented by an internal node behind its reactance; all
physical buses are eliminated by Kron reduction, leaving a susceptance matrix
over the ``n_g + n_i`` internal nodes.  Bus shunts and constant-impedance
loads are ties to a fixed reference node (the stiff remainder of the bulk
system), which is what gives the Jacobian its positive diagonal part.

Sign convention: ``B`` is the nodal susceptance matrix with positive diagonal
and non-positive off-diagonal entries, so a line of susceptance ``b`` between
``k`` and ``j`` contributes ``-b`` at ``(k, j)``.  Injections are

    P_k = sum_j E_k E_j w_kj sin(d_k - d_j) + E_k V_ref s_k sin(d_k - d_ref)

with coupling weights ``w_kj = -B_kj`` and reference ties ``s_k = sum_j B_kj``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from typing import Mapping, Sequence

import jsonschema
import numpy as np
import scipy.linalg as la

from .errors import CaseError, SingularBlockError, WeakGridError

__all__ = [
    "Bus", "Branch", "SGRecord", "GFMRecord", "LoadRecord", "NetworkCase",
    "ReducedNetwork", "JacobianSet", "AssumptionReport",
    "load_case", "load_case_file", "case_schema", "kron_reduce_matrix",
    "kron_reduce", "injections", "build_jacobians", "gamma_bounds",
    "validate_assumptions",
]

# relative threshold below which a reduced coupling is treated as absent
_COUPLING_EPS = 1e-12


@dataclass(frozen=True)
class Bus:
    id: str
    v: float = 1.0
    angle: float = 0.0
    shunt: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: str
    to_bus: str
    b: float
    id: str = ""


@dataclass(frozen=True)
class SGRecord:
    id: str
    bus: str
    x: float
    M: float
    D: float


@dataclass(frozen=True)
class GFMRecord:
    id: str
    bus: str
    x: float
    S: float
    mp: float
    tau: float
    mq: float = 0.0


@dataclass(frozen=True)
class LoadRecord:
    id: str
    bus: str
    b: float
    p_mw: float = 0.0


@dataclass(frozen=True)
class NetworkCase:
    """Validated network case.  Build with :func:`load_case`."""

    name: str
    base_mva: float
    frequency_hz: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    sgs: tuple[SGRecord, ...]
    gfms: tuple[GFMRecord, ...]
    loads: tuple[LoadRecord, ...]
    internal: Mapping[str, tuple[float, float]]  # device id -> (E, delta0)
    ref_v: float = 1.0
    ref_angle: float = 0.0
    sha256: str = ""

    @property
    def n_g(self) -> int:
        return len(self.sgs)

    @property
    def n_i(self) -> int:
        return len(self.gfms)

    @property
    def device_ids(self) -> list[str]:
        return [g.id for g in self.sgs] + [c.id for c in self.gfms]

    @property
    def total_load_mw(self) -> float:
        return float(sum(ld.p_mw for ld in self.loads))

    def to_dict(self) -> dict:
        """Inverse of :func:`load_case` (up to defaults)."""
        return {
            "name": self.name,
            "base_mva": self.base_mva,
            "frequency_hz": self.frequency_hz,
            "buses": [{"id": b.id, "v": b.v, "angle": b.angle, "shunt": b.shunt}
                      for b in self.buses],
            "branches": [dict({"from": br.from_bus, "to": br.to_bus, "b": br.b},
                              **({"id": br.id} if br.id else {}))
                         for br in self.branches],
            "sgs": [{"id": g.id, "bus": g.bus, "x": g.x, "M": g.M, "D": g.D}
                    for g in self.sgs],
            "gfms": [{"id": c.id, "bus": c.bus, "x": c.x, "S": c.S, "mp": c.mp,
                      "mq": c.mq, "tau": c.tau} for c in self.gfms],
            "loads": [{"id": ld.id, "bus": ld.bus, "b": ld.b, "p_mw": ld.p_mw}
                      for ld in self.loads],
            "operating_point": {
                "reference": {"v": self.ref_v, "angle": self.ref_angle},
                "internal": {k: {"E": e, "delta": d}
                             for k, (e, d) in self.internal.items()},
            },
        }


def case_schema() -> dict:
    text = resources.files("gridform_ssa").joinpath("data/case-schema.json").read_text()
    return json.loads(text)


def _path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    return "/".join(parts) if parts else "<root>"


def load_case(text: str) -> NetworkCase:
    """Parse and validate a JSON case document.

    Raises :class:`CaseError` naming the line (syntax errors), the field path
    (schema violations) or the offending id (duplicates, dangling references).
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc

    validator = jsonschema.Draft202012Validator(case_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise CaseError(f"schema violation at {_path(err)}: {err.message}")

    buses = tuple(Bus(b["id"], b.get("v", 1.0), b.get("angle", 0.0), b.get("shunt", 0.0))
                  for b in doc["buses"])
    bus_ids = [b.id for b in buses]
    _check_unique(bus_ids, "bus")
    known = set(bus_ids)

    branches = tuple(Branch(br["from"], br["to"], br["b"], br.get("id", ""))
                     for br in doc["branches"])
    for k, br in enumerate(branches):
        for end in (br.from_bus, br.to_bus):
            if end not in known:
                label = br.id or f"branches/{k}"
                raise CaseError(f"branch {label} references unknown bus {end!r}")
        if br.from_bus == br.to_bus:
            raise CaseError(f"branch {br.id or k} is a self-loop on bus {br.from_bus!r}")

    sgs = tuple(SGRecord(g["id"], g["bus"], g["x"], g["M"], g["D"]) for g in doc["sgs"])
    gfms = tuple(GFMRecord(c["id"], c["bus"], c["x"], c["S"], c["mp"], c["tau"], c.get("mq", 0.0))
                 for c in doc["gfms"])
    loads = tuple(LoadRecord(ld["id"], ld["bus"], ld["b"], ld.get("p_mw", 0.0))
                  for ld in doc["loads"])
    _check_unique([d.id for d in (*sgs, *gfms, *loads)], "device")
    for kind, recs in (("sg", sgs), ("gfm", gfms), ("load", loads)):
        for r in recs:
            if r.bus not in known:
                raise CaseError(f"{kind} {r.id!r} references unknown bus {r.bus!r}")

    op = doc["operating_point"]
    ref = op.get("reference", {})
    internal_doc = op["internal"]
    device_ids = [d.id for d in (*sgs, *gfms)]
    for key in internal_doc:
        if key not in device_ids:
            raise CaseError(f"operating_point/internal references unknown device {key!r}")
    internal = {}
    for dev in device_ids:
        if dev not in internal_doc:
            raise CaseError(f"operating_point/internal is missing device {dev!r}")
        internal[dev] = (float(internal_doc[dev]["E"]), float(internal_doc[dev]["delta"]))

    return NetworkCase(
        name=doc.get("name", ""),
        base_mva=float(doc["base_mva"]),
        frequency_hz=float(doc.get("frequency_hz", 60.0)),
        buses=buses, branches=branches, sgs=sgs, gfms=gfms, loads=loads,
        internal=internal,
        ref_v=float(ref.get("v", 1.0)),
        ref_angle=float(ref.get("angle", 0.0)),
        sha256=hashlib.sha256(text.encode()).hexdigest(),
    )


def load_case_file(path) -> NetworkCase:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CaseError(f"cannot read case file {str(path)!r}: {exc.strerror}") from exc
    return load_case(text)


def _check_unique(ids: Sequence[str], what: str) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise CaseError(f"duplicate {what} id {i!r}")
        seen.add(i)


# --------------------------------------------------------------------------
# Kron reduction
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReducedNetwork:
    B: np.ndarray            # (n_g + n_i) square, SG nodes first
    E: np.ndarray
    delta0: np.ndarray
    n_g: int
    n_i: int
    labels: tuple[str, ...]
    ref_v: float = 1.0
    ref_angle: float = 0.0
    cond: float = 1.0        # condition number of the eliminated block

    @property
    def coupling(self) -> np.ndarray:
        """Pairwise coupling weights ``w_kj = -B_kj`` (zero diagonal)."""
        w = -self.B.copy()
        np.fill_diagonal(w, 0.0)
        return w

    @property
    def ties(self) -> np.ndarray:
        """Reference-tie susceptance of each internal node (row sums of B)."""
        return self.B.sum(axis=1)


def kron_reduce_matrix(B: np.ndarray, keep: Sequence[int]) -> tuple[np.ndarray, float]:
    """Schur complement ``B_kk - B_kl B_ll^{-1} B_lk``; returns it with cond(B_ll)."""
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    keep = np.asarray(keep, dtype=int)
    elim = np.setdiff1d(np.arange(n), keep)
    Bkk = B[np.ix_(keep, keep)]
    if elim.size == 0:
        return Bkk.copy(), 1.0
    Bll = B[np.ix_(elim, elim)]
    sv = la.svdvals(Bll)
    if sv[-1] <= 1e-13 * max(sv[0], 1.0):
        raise SingularBlockError(
            f"eliminated block is singular (smallest singular value {sv[-1]:.3e}); "
            "an interior bus is probably isolated", float(sv[-1]))
    Bkl = B[np.ix_(keep, elim)]
    red = Bkk - Bkl @ la.solve(Bll, Bkl.T, assume_a="sym")
    red = 0.5 * (red + red.T)
    return red, float(sv[0] / sv[-1])


def kron_reduce(case: NetworkCase) -> ReducedNetwork:
    """Reduce the case to its internal device nodes."""
    devices = [(g.id, g.bus, g.x) for g in case.sgs] + [(c.id, c.bus, c.x) for c in case.gfms]
    n_dev = len(devices)
    bus_index = {b.id: n_dev + k for k, b in enumerate(case.buses)}
    n = n_dev + len(case.buses)
    B = np.zeros((n, n))

    def link(a, b, y):
        B[a, a] += y
        B[b, b] += y
        B[a, b] -= y
        B[b, a] -= y

    for k, (_, bus, x) in enumerate(devices):
        link(k, bus_index[bus], 1.0 / x)
    for br in case.branches:
        link(bus_index[br.from_bus], bus_index[br.to_bus], br.b)
    for bus in case.buses:
        B[bus_index[bus.id], bus_index[bus.id]] += bus.shunt
    for ld in case.loads:
        B[bus_index[ld.bus], bus_index[ld.bus]] += ld.b

    red, cond = kron_reduce_matrix(B, range(n_dev))
    E = np.array([case.internal[d[0]][0] for d in devices])
    delta0 = np.array([case.internal[d[0]][1] for d in devices])
    return ReducedNetwork(B=red, E=E, delta0=delta0, n_g=case.n_g, n_i=case.n_i,
                          labels=tuple(d[0] for d in devices),
                          ref_v=case.ref_v, ref_angle=case.ref_angle, cond=cond)


def injections(red: ReducedNetwork, delta: np.ndarray) -> np.ndarray:
    """Active power injected at each internal node for angles ``delta``."""
    delta = np.asarray(delta, dtype=float)
    E = red.E
    diff = delta[:, None] - delta[None, :]
    P = (E[:, None] * E[None, :] * red.coupling * np.sin(diff)).sum(axis=1)
    P += E * red.ref_v * red.ties * np.sin(delta - red.ref_angle)
    return P


# --------------------------------------------------------------------------
# Jacobians
# --------------------------------------------------------------------------

def _block_split(K: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal / weighted-Laplacian split of a symmetric block.

    The Laplacian part carries the couplings inside the block (zero row sums);
    the diagonal part carries everything else: reference ties plus couplings
    to nodes outside the block.
    """
    diag = np.diag(K.sum(axis=1))
    return diag, K - diag


@dataclass(frozen=True, eq=False)
class JacobianSet:
    K: np.ndarray            # full (n_g + n_i) Jacobian dP/d(delta)
    n_g: int
    shunt: np.ndarray        # reference-tie terms on the diagonal of K
    labels: tuple[str, ...] = ()
    gamma_l: float = field(init=False)
    gamma_u: float = field(init=False)

    def __post_init__(self):
        Kii_diag, Kii_lap = _block_split(self.Kii)
        d = np.diag(Kii_diag)
        object.__setattr__(self, "gamma_l", float(d.min()))
        object.__setattr__(self, "gamma_u", float((d + 2.0 * np.diag(Kii_lap)).max()))

    @classmethod
    def from_blocks(cls, Kgg, Kgi, Kii, labels=()) -> "JacobianSet":
        Kgg = np.atleast_2d(np.asarray(Kgg, dtype=float))
        Kgi = np.atleast_2d(np.asarray(Kgi, dtype=float))
        Kii = np.atleast_2d(np.asarray(Kii, dtype=float))
        K = np.block([[Kgg, Kgi], [Kgi.T, Kii]])
        return cls(K=K, n_g=Kgg.shape[0], shunt=K.sum(axis=1), labels=tuple(labels))

    @property
    def n_i(self) -> int:
        return self.K.shape[0] - self.n_g

    @property
    def Kgg(self) -> np.ndarray:
        return self.K[:self.n_g, :self.n_g]

    @property
    def Kgi(self) -> np.ndarray:
        return self.K[:self.n_g, self.n_g:]

    @property
    def Kig(self) -> np.ndarray:
        return self.K[self.n_g:, :self.n_g]

    @property
    def Kii(self) -> np.ndarray:
        return self.K[self.n_g:, self.n_g:]

    @property
    def K_diag(self) -> np.ndarray:
        """Reference-tie part of the full Jacobian."""
        return np.diag(self.shunt)

    @property
    def K_lap(self) -> np.ndarray:
        """Coupling (weighted Laplacian) part of the full Jacobian."""
        return self.K - self.K_diag

    @cached_property
    def Kgg_split(self) -> tuple[np.ndarray, np.ndarray]:
        return _block_split(self.Kgg)

    @cached_property
    def Kii_split(self) -> tuple[np.ndarray, np.ndarray]:
        return _block_split(self.Kii)

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.K).tobytes()).hexdigest()[:16]


def build_jacobians(red: ReducedNetwork) -> JacobianSet:
    """Linearize the injections about the operating point."""
    w = red.coupling
    scale = max(np.abs(red.B).max(), 1.0)
    diff = red.delta0[:, None] - red.delta0[None, :]
    linked = np.abs(w) > _COUPLING_EPS * scale
    bad = linked & (np.abs(diff) >= np.pi / 2)
    if bad.any():
        k, j = map(int, np.argwhere(bad)[0])
        raise CaseError(
            f"operating point outside the stability wedge on internal link "
            f"{red.labels[k]}-{red.labels[j]}: angle difference {diff[k, j]:.4f} rad")
    ref_diff = red.delta0 - red.ref_angle
    bad_ref = (np.abs(red.ties) > _COUPLING_EPS * scale) & (np.abs(ref_diff) >= np.pi / 2)
    if bad_ref.any():
        k = int(np.argmax(bad_ref))
        raise CaseError(
            f"operating point outside the stability wedge on the reference tie of "
            f"{red.labels[k]}: angle {ref_diff[k]:.4f} rad")

    E = red.E
    W = E[:, None] * E[None, :] * w * np.cos(diff)
    shunt = E * red.ref_v * red.ties * np.cos(ref_diff)
    K = np.diag(W.sum(axis=1) + shunt) - W
    K = 0.5 * (K + K.T)
    return JacobianSet(K=K, n_g=red.n_g, shunt=shunt, labels=red.labels)


def gamma_bounds(jac: JacobianSet, check: bool = True) -> tuple[float, float]:
    """Grid-strength bounds ``(gamma_l, gamma_u)`` with ``gamma_l I <= K_ii <= gamma_u I``."""
    gl, gu = jac.gamma_l, jac.gamma_u
    if gl <= 0.0:
        raise WeakGridError(f"weak-grid violation: gamma_l = {gl:.6g} must be positive")
    if check:
        ev = la.eigvalsh(jac.Kii)
        tol = 1e-10 * max(abs(gu), 1.0)
        if ev[0] < gl - tol or ev[-1] > gu + tol:
            raise AssertionError(  # a Gershgorin-type bound cannot fail
                f"grid-strength sandwich violated: eig range [{ev[0]}, {ev[-1]}], bounds [{gl}, {gu}]")
    return gl, gu


@dataclass(frozen=True)
class AssumptionReport:
    a1_min_eig: float           # lambda_min(K_gg - K_gi K_ii^{-T} K_ig)
    a1_holds: bool
    a2_sv_gi: float             # sigma_min(K_gi K_gi^T)
    a2_sv_ig: float             # sigma_min(K_ig^T K_ig)
    a2_holds: bool
    more_gfms_than_sgs: bool    # n_i > n_g
    gamma_l: float
    gamma_u: float
    weak_grid: bool

    @property
    def passed(self) -> bool:
        return self.a1_holds and self.a2_holds and self.more_gfms_than_sgs and not self.weak_grid

    def as_dict(self) -> dict:
        return {
            "assumption1_min_eig": self.a1_min_eig,
            "assumption1_holds": self.a1_holds,
            "assumption2_sigma_min_KgiKgiT": self.a2_sv_gi,
            "assumption2_sigma_min_KigTKig": self.a2_sv_ig,
            "assumption2_holds": self.a2_holds,
            "n_i_greater_than_n_g": self.more_gfms_than_sgs,
            "gamma_l": self.gamma_l,
            "gamma_u": self.gamma_u,
            "weak_grid": self.weak_grid,
            "passed": self.passed,
        }


def validate_assumptions(jac: JacobianSet, rtol: float = 1e-12) -> AssumptionReport:
    """Evaluate the network assumptions; violations are reported, not raised."""
    Kgg, Kgi, Kig, Kii = jac.Kgg, jac.Kgi, jac.Kig, jac.Kii
    try:
        schur = Kgg - Kgi @ la.solve(Kii.T, Kig)
        a1 = float(la.eigvalsh(0.5 * (schur + schur.T))[0])
    except la.LinAlgError:
        a1 = float("-inf")
    scale = max(np.abs(jac.K).max(), 1.0)
    sv1 = float(la.svdvals(Kgi @ Kgi.T)[-1])
    sv2 = float(la.svdvals(Kig.T @ Kig)[-1])
    floor = rtol * scale ** 2
    return AssumptionReport(
        a1_min_eig=a1,
        a1_holds=a1 > rtol * scale,
        a2_sv_gi=sv1,
        a2_sv_ig=sv2,
        a2_holds=sv1 > floor and sv2 > floor,
        more_gfms_than_sgs=jac.n_i > jac.n_g,
        gamma_l=jac.gamma_l,
        gamma_u=jac.gamma_u,
        weak_grid=jac.gamma_l <= 0.0,
    )
