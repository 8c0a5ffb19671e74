"""Provenance-tagged report values, run manifests and deterministic serialization."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__

EXACT = "exact"


def grid(h: float) -> str:
    return f"grid(h={h:.6g})"


def mc(n_samples: int, seed: int) -> str:
    return f"mc({n_samples},{seed})"


def exact(v: Fraction | int) -> dict[str, Any]:
    f = Fraction(v)
    return {"num": f.numerator, "den": f.denominator, "provenance": EXACT}


def measured(value: float, provenance: str, stderr: float | None = None) -> dict[str, Any]:
    out: dict[str, Any] = {"value": _float(value), "provenance": provenance}
    if stderr is not None:
        out["stderr"] = _float(stderr)
    return out


def _float(v: float) -> float | str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _is_tagged(obj: dict[str, Any]) -> bool:
    return "provenance" in obj and ("num" in obj or "value" in obj)


def tag(obj: Any, provenance: str) -> Any:
    """Rationals and integers become exact pairs; floats carry ``provenance``; containers recurse."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (Fraction, int, np.integer)):
        return exact(int(obj) if isinstance(obj, np.integer) else obj)
    if isinstance(obj, (float, np.floating)):
        return measured(float(obj), provenance)
    if isinstance(obj, np.ndarray):
        return [tag(v, provenance) for v in obj.tolist()]
    if isinstance(obj, dict):
        if _is_tagged(obj):
            return obj
        return {str(k): tag(v, provenance) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [tag(v, provenance) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def config_hash(payload: Any) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()[:16]


@dataclass
class RunManifest:
    command: list[str]
    config_hash: Optional[str] = None
    seed: Optional[int] = None
    resolutions: list[float] = field(default_factory=list)
    version: str = __version__
    timing: Optional[float] = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "resolutions": [float(h) for h in self.resolutions],
            "version": self.version,
        }
        if self.timing is not None:
            out["timing_s"] = round(self.timing, 6)
        return out


@dataclass
class Report:
    manifest: RunManifest
    result: Any
    invariants: dict[str, bool] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def failed(self) -> list[str]:
        return [k for k, ok in self.invariants.items() if not ok]

    def to_dict(self) -> dict[str, Any]:
        return {
            "manifest": self.manifest.to_dict(),
            "result": self.result,
            "invariants": self.invariants,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _cell(v: Any) -> str:
    if isinstance(v, dict) and "num" in v:
        return f"{v['num']}/{v['den']}" if v["den"] != 1 else str(v["num"])
    if isinstance(v, dict) and "value" in v:
        return str(v["value"])
    if isinstance(v, (list, tuple)):
        return ";".join(_cell(x) for x in v)
    return "" if v is None else str(v)


def to_csv(rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def flatten(obj: Any, prefix: str = "") -> list[tuple[str, Any]]:
    """Key/value rows for CSV output of nested results."""
    if isinstance(obj, dict) and not _is_tagged(obj):
        out = []
        for k in sorted(obj):
            out += flatten(obj[k], f"{prefix}.{k}" if prefix else str(k))
        return out
    if isinstance(obj, list) and obj and any(isinstance(v, (dict, list)) and not (isinstance(v, dict) and _is_tagged(v)) for v in obj):
        out = []
        for i, v in enumerate(obj):
            out += flatten(v, f"{prefix}[{i}]")
        return out
    return [(prefix, obj)]


__all__ = [
    "EXACT",
    "Report",
    "RunManifest",
    "config_hash",
    "exact",
    "flatten",
    "grid",
    "mc",
    "measured",
    "tag",
    "to_csv",
]
