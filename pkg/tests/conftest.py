import numpy as np
import pytest

from gridform_ssa import devices, netmodel
from gridform_ssa.cases import random_model
from gridform_ssa.model import GridModel, load_bundled


@pytest.fixture(scope="session")
def toy():
    return GridModel.from_case(load_bundled("toy2x3"))


@pytest.fixture(scope="session")
def minimal():
    return GridModel.from_case(load_bundled("minimal2"))


@pytest.fixture(scope="session")
def random_models():
    """Fifty random stable cases, fixed seeds."""
    return [random_model(1000 + k) for k in range(50)]


def scalar_system(M=1.0, D=0.1, m_p=1.0, Kgg=1.0, Kgi=-0.5, Kii=1.0):
    jac = netmodel.JacobianSet.from_blocks([[Kgg]], [[Kgi]], [[Kii]])
    return jac, devices.DevicePark.simple(M=[M], D=[D], m_p=m_p)


def inter_area(model):
    from gridform_ssa.modal import eigen_modes
    return [m for m in eigen_modes(model.state_matrix(), jac=model.jac, park=model.park)
            if m.cls == "inter-area"]


def rel(a, b):
    return np.abs(a - b) / np.maximum(np.abs(b), 1e-300)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
