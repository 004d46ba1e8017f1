"""JSON normalization and the versioned report envelope."""

import dataclasses
import json
import math
from datetime import datetime, timezone
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel

SCHEMA_VERSION = "1.0"
VOLATILE_KEYS = ("generated_at", "runtime_s")


def to_jsonable(obj: Any) -> Any:
    if hasattr(obj, "to_dict") and not isinstance(obj, type):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, BaseModel):
        return to_jsonable(obj.model_dump())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted([to_jsonable(v) for v in obj], key=lambda x: str(x))
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable({f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)})
    try:
        json.dumps(obj)
        return obj
    except Exception:
        return str(obj)


def envelope(
    kind: str,
    payload: Any,
    status: str = "completed",
    generated_at: Optional[str] = None,
    runtime_s: Optional[float] = None,
) -> dict:
    """Versioned report; only generated_at and runtime_s differ between identical runs."""
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "status": status,
        "generated_at": generated_at or datetime.now(timezone.utc).isoformat(),
        "runtime_s": runtime_s,
        "result": to_jsonable(payload),
    }


def error_envelope(kind: str, error: Exception) -> dict:
    details = error.to_dict() if hasattr(error, "to_dict") else {"type": type(error).__name__}
    out = envelope(kind, None, status="error")
    out["error"] = str(error)
    out["details"] = to_jsonable(details)
    return out


def dumps(report: dict) -> str:
    return json.dumps(to_jsonable(report), indent=2, sort_keys=True)


def stable_view(report: dict) -> dict:
    """The report without its wall-clock fields."""
    return {k: v for k, v in report.items() if k not in VOLATILE_KEYS}


def write_report(report: dict, path: Optional[str]) -> str:
    text = dumps(report)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return text
