"""Run configuration and artifact writers."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import CaseError

TOOL = "gridform-ssa"


@dataclass(frozen=True)
class RunConfig:
    command: str
    case: str = ""
    band: tuple[float, float] = (0.1, 1.0)
    tolerances: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    out: str = "."
    seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.band
        if not 0 <= lo < hi:
            raise CaseError(f"band must satisfy 0 <= f_lo < f_hi, got {self.band}")
        for k, v in self.tolerances.items():
            if not v > 0:
                raise CaseError(f"tolerance {k} must be positive, got {v}")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["band"] = list(self.band)
        return clean(d)


def clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, complex):
        return {"re": clean(obj.real), "im": clean(obj.imag)}
    return obj


def header_lines(cfg: RunConfig, case_sha256: str) -> list[str]:
    return [
        f"tool: {TOOL} {__version__}",
        f"case_sha256: {case_sha256}",
        "config: " + json.dumps(cfg.as_dict(), sort_keys=True, separators=(",", ":")),
    ]


def meta(cfg: RunConfig, case_sha256: str) -> dict:
    return {"tool": TOOL, "version": __version__, "case_sha256": case_sha256,
            "config": cfg.as_dict()}


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def write_json(path: Path, obj: dict) -> Path:
    return write_text(path, json.dumps(clean(obj), indent=2, sort_keys=True) + "\n")
