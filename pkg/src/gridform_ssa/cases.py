"""Random case generators for property suites."""

from __future__ import annotations

import json

import numpy as np

from .devices import DevicePark
from .model import GridModel
from .netmodel import JacobianSet, NetworkCase, load_case

__all__ = ["random_case_document", "random_case", "random_model", "near_uniform_system"]


def random_case_document(rng, n_g: int | None = None, n_i: int | None = None,
                         mp_hat: float | None = None) -> dict:
    """Connected lossless network with 2-6 generators and more inverters than generators.

    Every internal node is tied to the reference through a load or shunt, so
    the Jacobian is a grounded Laplacian and the linear model is stable.
    """
    rng = np.random.default_rng(rng)
    n_g = int(rng.integers(2, 7)) if n_g is None else n_g
    n_i = int(rng.integers(max(3, n_g + 1), 13)) if n_i is None else n_i
    n_extra = int(rng.integers(1, 4))
    n_bus = n_g + n_i + n_extra
    buses = [{"id": f"b{k + 1}", "v": 1.0, "angle": 0.0,
              "shunt": float(rng.uniform(0.0, 2.0)) if rng.random() < 0.3 else 0.0}
             for k in range(n_bus)]

    # random spanning tree plus a few chords
    order = rng.permutation(n_bus)
    edges = set()
    for k in range(1, n_bus):
        a, b = int(order[k]), int(order[rng.integers(0, k)])
        edges.add((min(a, b), max(a, b)))
    for _ in range(int(rng.integers(0, n_bus // 2 + 1))):
        a, b = rng.choice(n_bus, size=2, replace=False)
        edges.add((int(min(a, b)), int(max(a, b))))
    branches = [{"id": f"l{k + 1}", "from": f"b{a + 1}", "to": f"b{b + 1}",
                 "b": float(rng.uniform(5.0, 30.0))} for k, (a, b) in enumerate(sorted(edges))]

    S = float(rng.uniform(20.0, 200.0))
    mp = float(rng.uniform(0.01, 0.1)) if mp_hat is None else mp_hat
    sgs = [{"id": f"G{k + 1}", "bus": f"b{k + 1}", "x": float(rng.uniform(0.05, 0.3)),
            "M": float(rng.uniform(2.0, 12.0)), "D": float(rng.uniform(0.05, 1.0))}
           for k in range(n_g)]
    gfms = [{"id": f"I{j + 1}", "bus": f"b{n_g + j + 1}", "x": float(rng.uniform(0.02, 0.2)),
             "S": S, "mp": mp, "mq": 0.05, "tau": 0.02} for j in range(n_i)]
    load_buses = rng.choice(n_bus, size=max(2, n_bus // 2), replace=False)
    loads = [{"id": f"L{k + 1}", "bus": f"b{int(b) + 1}", "b": float(rng.uniform(0.5, 3.0)),
              "p_mw": float(rng.uniform(20.0, 150.0))} for k, b in enumerate(sorted(load_buses))]

    internal = {}
    for d in sgs + gfms:
        internal[d["id"]] = {"E": float(rng.uniform(0.98, 1.06)), "delta": float(rng.uniform(-0.2, 0.2))}
    return {
        "name": "random", "base_mva": 100.0, "frequency_hz": 60.0,
        "buses": buses, "branches": branches, "sgs": sgs, "gfms": gfms, "loads": loads,
        "operating_point": {"reference": {"v": 1.0, "angle": 0.0}, "internal": internal},
    }


def random_case(rng, **kw) -> NetworkCase:
    return load_case(json.dumps(random_case_document(rng, **kw)))


def random_model(rng, **kw) -> GridModel:
    return GridModel.from_case(random_case(rng, **kw))


def near_uniform_system(rng, coupling: float | None = None, uniform_devices: bool = False,
                        n_g: int | None = None, n_i: int | None = None
                        ) -> tuple[JacobianSet, DevicePark]:
    """Jacobian and park with nearly uniform grid strength and light damping.

    Generators couple among themselves; each inverter hangs off one or more
    generators and is tied to the reference, with no inverter-inverter
    coupling, so ``gamma_u / gamma_l`` stays close to one.
    """
    rng = np.random.default_rng(rng)
    n_g = int(rng.integers(2, 5)) if n_g is None else n_g
    n_i = int(rng.integers(n_g + 1, 10)) if n_i is None else n_i
    c = float(rng.choice([1.0, 3.0, 10.0])) if coupling is None else coupling
    n = n_g + n_i
    W = np.zeros((n, n))
    for a in range(n_g):
        for b in range(a + 1, n_g):
            W[a, b] = W[b, a] = rng.uniform(1.0, 10.0)
    for j in range(n_g, n):
        for k in rng.choice(n_g, size=int(rng.integers(1, n_g + 1)), replace=False):
            W[j, k] = W[k, j] = rng.uniform(0.5, 1.5) * c
    shunt = np.r_[rng.uniform(0.5, 3.0, n_g), 5.0 * rng.uniform(0.5, 1.5, n_i)]
    K = np.diag(W.sum(axis=1) + shunt) - W
    jac = JacobianSet.from_blocks(K[:n_g, :n_g], K[:n_g, n_g:], K[n_g:, n_g:])
    M = rng.uniform(1.0, 8.0, n_g)
    D = rng.uniform(0.001, 0.02, n_g)
    if uniform_devices:
        M[:], D[:] = M[0], D[0]
    park = DevicePark.simple(M=M, D=D, m_p=float(rng.uniform(0.5, 5.0)), n_i=n_i)
    return jac, park
