"""A case together with everything derived from it."""

from __future__ import annotations

from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .devices import DevicePark, park_from_case
from .errors import CaseError
from .netmodel import (JacobianSet, NetworkCase, ReducedNetwork, build_jacobians,
                       kron_reduce, load_case, load_case_file)
from .statespace import StateMatrix, assemble_state_matrix

BUNDLED_CASES = ("toy2x3", "minimal2")


@dataclass(frozen=True, eq=False)
class GridModel:
    case: NetworkCase
    reduced: ReducedNetwork
    jac: JacobianSet
    park: DevicePark

    @classmethod
    def from_case(cls, case: NetworkCase) -> "GridModel":
        red = kron_reduce(case)
        return cls(case=case, reduced=red, jac=build_jacobians(red), park=park_from_case(case))

    @property
    def m_p(self) -> float:
        return self.park.m_p

    def state_matrix(self) -> StateMatrix:
        return assemble_state_matrix(self.jac, self.park)

    def with_park(self, park: DevicePark) -> "GridModel":
        return replace(self, park=park)

    def with_droop_setting(self, mp_hat: float) -> "GridModel":
        return self.with_park(self.park.with_setting(mp_hat))

    def with_gain(self, m_p: float) -> "GridModel":
        return self.with_park(self.park.with_gain(m_p))

    def with_capacity_fraction(self, frac: float) -> "GridModel":
        """Scale inverter capacities so their total is ``frac`` of the system load."""
        load = self.case.total_load_mw
        if load <= 0:
            raise CaseError("case declares no load (p_mw); cannot size storage against it")
        S = self.park.S
        return self.with_park(self.park.with_capacity(frac * load * S / S.sum()))

    @property
    def capacity_fraction(self) -> float:
        return float(self.park.S.sum() / self.case.total_load_mw)


def bundled_case_text(name: str) -> str:
    stem = name[:-5] if name.endswith(".json") else name
    if stem not in BUNDLED_CASES:
        raise CaseError(f"no bundled case named {name!r}")
    return resources.files("gridform_ssa").joinpath(f"data/{stem}.json").read_text()


def load_bundled(name: str) -> NetworkCase:
    return load_case(bundled_case_text(name))


def resolve_case(path: str) -> NetworkCase:
    """Load ``path`` relative to the working directory, falling back to a
    bundled case of the same name."""
    p = Path(path)
    if p.exists():
        return load_case_file(p)
    stem = p.name[:-5] if p.name.endswith(".json") else p.name
    if stem in BUNDLED_CASES and p.parent == Path("."):
        return load_bundled(stem)
    return load_case_file(p)  # raises with the path in the message


def toy_model() -> GridModel:
    return GridModel.from_case(load_bundled("toy2x3"))


def lam_sort_key(lam: complex) -> tuple[float, float]:
    return (round(float(np.imag(lam)), 12), round(float(np.real(lam)), 12))
