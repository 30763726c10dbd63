import json
import math
from pathlib import Path

import numpy as np

from capillary_lab import __version__, reports
from capillary_lab.reports import TaskReport


class TestNormalize:
    """JSON-stable conversion of numpy values and floats."""

    def test_float_rounding(self):
        assert reports.normalize(0.1 + 0.2) == 0.3
        assert reports.normalize(math.pi) == 3.14159265359

    def test_nonfinite_become_null(self):
        assert reports.normalize([np.nan, np.inf, -np.inf]) == [None, None, None]

    def test_numpy_types(self):
        data = reports.normalize({"n": np.int64(3), "ok": np.bool_(True), "v": np.array([1.0, 2.5])})
        assert data == {"n": 3, "ok": True, "v": [1.0, 2.5]}
        assert type(data["n"]) is int
        assert type(data["ok"]) is bool

    def test_paths_and_keys(self):
        assert reports.normalize({1: Path("a") / "b"}) == {"1": "a/b"}


class TestWriters:
    """Deterministic JSON and CSV output."""

    def test_dumps_is_order_independent(self):
        assert reports.dumps({"b": 1.0, "a": [2, 3]}) == reports.dumps({"a": [2, 3], "b": 1.0})
        assert reports.dumps({}).endswith("\n")

    def test_write_json_leaves_no_temp_file(self, tmp_path):
        path = reports.write_json(tmp_path / "sub" / "x.json", {"value": 1.5})
        assert json.loads(path.read_text(encoding="utf-8")) == {"value": 1.5}
        assert [p.name for p in path.parent.iterdir()] == ["x.json"]

    def test_write_csv(self, tmp_path):
        rows = [[1.5, float("nan"), "a"], [np.float64(2.0), 0.25, "b"]]
        path = reports.write_csv(tmp_path / "t.csv", ("x", "y", "label"), rows)
        assert path.read_text(encoding="utf-8") == "x,y,label\n1.5,,a\n2,0.25,b\n"


class TestTaskReports:
    """Per-task reports and the run summary."""

    def make_report(self, status="pass", failing=()):
        return TaskReport(
            task="solve",
            index=3,
            status=status,
            checks={"residual": status == "pass"},
            result={"lam": 0.0},
            failing=list(failing),
            table=(("r", "w"), [[0.0, 1.2], [1.0, 1.2]]),
        )

    def test_stem_and_ok(self):
        report = self.make_report()
        assert report.stem == "03_solve"
        assert report.ok
        assert not self.make_report("fail", ["residual"]).ok

    def test_error_field_only_when_set(self):
        assert "error" not in self.make_report().to_dict()
        report = TaskReport(task="cone", index=1, status="error", error="GeometryError: collapsed")
        assert report.to_dict()["error"] == "GeometryError: collapsed"

    def test_write_task_report(self, tmp_path):
        written = reports.write_task_report(tmp_path, "demo", "abc", self.make_report())
        assert [p.name for p in written] == ["03_solve.json", "03_solve.csv"]
        data = json.loads(written[0].read_text(encoding="utf-8"))
        assert data["tool"] == reports.TOOL
        assert data["version"] == __version__
        assert data["scenario"] == "demo"
        assert data["scenario_hash"] == "abc"
        assert data["checks"] == {"residual": True}

    def test_write_summary(self, tmp_path):
        failed = self.make_report("fail", ["residual"])
        path = reports.write_summary(tmp_path, "demo", "abc", [failed], 1)
        data = json.loads(path.read_text(encoding="utf-8"))
        assert data["exit_code"] == 1
        assert data["tasks"] == [{"task": "solve", "status": "fail", "failing": ["residual"]}]
