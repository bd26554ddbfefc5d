"""Serialising experiment outputs: result JSON and the per-round CSV."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from ._io import atomic_write_text
from .orchestrator import ExperimentResult

CSV_COLUMNS = ("round", "test_accuracy", "selected_ids", "mean_valuation", "max_staleness")


def to_json(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def records_to_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in result.records:
        writer.writerow(
            [
                r.round,
                repr(r.test_accuracy),
                " ".join(str(k) for k in r.selected),
                repr(r.mean_valuation),
                r.max_staleness,
            ]
        )
    return buf.getvalue()


def write_result(result: ExperimentResult, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path, csv_path = out / "result.json", out / "rounds.csv"
    atomic_write_text(json_path, to_json(result.to_dict()))
    atomic_write_text(csv_path, records_to_csv(result))
    return json_path, csv_path


def write_json(doc, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(path, to_json(doc))
    return path
