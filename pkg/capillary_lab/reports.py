"""
Deterministic report writers.

JSON reports use sorted keys and a fixed float format so that two runs of the same
scenario produce identical bytes. Every report carries the tool version and the scenario hash.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from capillary_lab import __version__

FLOAT_DIGITS = 12
TOOL = "capillary-lab"


def normalize(value: Any) -> Any:
    """Convert numpy types and floats into a JSON-stable form.

    Floats are rounded to FLOAT_DIGITS significant digits; NaN and infinities become None.
    """
    if isinstance(value, dict):
        return {str(k): normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [normalize(v) for v in value]
    if isinstance(value, np.ndarray):
        return normalize(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if not math.isfinite(x):
            return None
        return float(f"{x:.{FLOAT_DIGITS}g}")
    if isinstance(value, Path):
        return value.as_posix()
    return value


def dumps(payload: Any) -> str:
    return json.dumps(normalize(payload), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)


def write_json(path: Path, payload: Any) -> Path:
    _write_text(path, dumps(payload))
    return path


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_csv_cell(x) for x in row])
    return path


def _csv_cell(x: Any) -> Any:
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "" if not math.isfinite(x) else f"{x:.{FLOAT_DIGITS}g}"
    return x


@dataclass
class TaskReport:
    """Outcome of one scenario task."""

    task: str
    index: int
    status: str
    checks: dict[str, bool] = field(default_factory=dict)
    result: dict[str, Any] = field(default_factory=dict)
    failing: list[str] = field(default_factory=list)
    error: str | None = None
    table: tuple[Sequence[str], list[list[float]]] | None = None

    @property
    def ok(self) -> bool:
        return self.status == "pass"

    @property
    def stem(self) -> str:
        return f"{self.index:02d}_{self.task}"

    def to_dict(self) -> dict[str, Any]:
        data = {
            "task": self.task,
            "status": self.status,
            "checks": dict(self.checks),
            "failing": list(self.failing),
            "result": self.result,
        }
        if self.error is not None:
            data["error"] = self.error
        return data


def envelope(scenario_name: str, scenario_hash: str, body: dict[str, Any]) -> dict[str, Any]:
    return {
        "tool": TOOL,
        "version": __version__,
        "scenario": scenario_name,
        "scenario_hash": scenario_hash,
        **body,
    }


def write_task_report(out_dir: Path, scenario_name: str, scenario_hash: str, report: TaskReport) -> list[Path]:
    """Write <index>_<task>.json and, when the task produced a table, the matching CSV."""
    written = [write_json(out_dir / f"{report.stem}.json", envelope(scenario_name, scenario_hash, report.to_dict()))]
    if report.table is not None:
        columns, rows = report.table
        written.append(write_csv(out_dir / f"{report.stem}.csv", columns, rows))
    return written


def write_summary(out_dir: Path, scenario_name: str, scenario_hash: str, reports: list[TaskReport], exit_code: int) -> Path:
    body = {
        "exit_code": exit_code,
        "tasks": [{"task": r.task, "status": r.status, "failing": list(r.failing)} for r in reports],
    }
    return write_json(out_dir / "summary.json", envelope(scenario_name, scenario_hash, body))
