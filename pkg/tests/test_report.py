import json
from dataclasses import dataclass

import numpy as np

from simcut.errors import Infeasible
from simcut.pipeline import PipelineConfig
from simcut.report import SCHEMA_VERSION, envelope, error_envelope, stable_view, to_jsonable, write_report


@dataclass
class Point:
    x: float
    tags: frozenset


class Opaque:
    def __str__(self):
        return "opaque"


def test_non_finite_floats_become_strings():
    assert to_jsonable([np.nan, np.inf, -np.inf, 1.5]) == ["nan", "inf", "-inf", 1.5]
    assert to_jsonable(np.float64(np.inf)) == "inf"


def test_numpy_and_containers():
    out = to_jsonable({1: np.arange(3), "m": np.eye(2), "t": (np.int64(4),)})
    assert out == {"1": [0, 1, 2], "m": [[1.0, 0.0], [0.0, 1.0]], "t": [4]}
    json.dumps(out)


def test_models_dataclasses_and_fallback():
    cfg = to_jsonable(PipelineConfig(seed=7))
    assert cfg["seed"] == 7
    assert cfg["solver"]["max_iters"] == 10_000
    assert to_jsonable(Point(x=1.0, tags=frozenset({"b", "a"}))) == {"x": 1.0, "tags": ["a", "b"]}
    assert to_jsonable(Opaque()) == "opaque"


def test_envelope_keys():
    env = envelope("oracle", {"value": np.float64(0.5)}, generated_at="2024-01-01T00:00:00+00:00")
    assert set(env) == {"schema_version", "kind", "status", "generated_at", "runtime_s", "result"}
    assert env["runtime_s"] is None
    assert env["schema_version"] == SCHEMA_VERSION
    assert env["status"] == "completed"
    assert env["result"] == {"value": 0.5}


def test_error_envelope_carries_details():
    env = error_envelope("solve", Infeasible("no cut", {"witness": [{"family": "objective"}]}))
    assert env["status"] == "error"
    assert env["result"] is None
    assert env["error"] == "no cut"
    assert env["details"]["type"] == "Infeasible"
    assert env["details"]["details"]["witness"][0]["family"] == "objective"
    assert error_envelope("solve", KeyError("x"))["details"] == {"type": "KeyError"}


def test_write_report(tmp_path):
    path = tmp_path / "report.json"
    text = write_report(envelope("prove", {"ratio": np.nan}), str(path))
    on_disk = json.loads(path.read_text(encoding="utf-8"))
    assert on_disk == json.loads(text)
    assert on_disk["result"]["ratio"] == "nan"
    assert write_report({"a": 1}, None) == '{\n  "a": 1\n}'


def test_stable_view_drops_wall_clock_fields():
    a = envelope("prove", {"boxes": 3}, generated_at="2024-01-01T00:00:00+00:00", runtime_s=1.25)
    b = envelope("prove", {"boxes": 3}, runtime_s=9.5)
    assert a != b
    assert stable_view(a) == stable_view(b)
    assert "runtime_s" not in stable_view(a)
