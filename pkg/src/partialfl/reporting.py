"""Line-delimited metrics output and cross-seed summaries."""

from __future__ import annotations

import json
import os
import statistics
import tempfile
from pathlib import Path

SUMMARY_FIELDS = ("global_acc", "local_acc_mean", "local_acc_min", "local_acc_max", "train_loss", "payload_bytes")


def _mean_std(values):
    values = list(values)
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def summary_row(final_records, **labels) -> dict:
    """Mean and standard deviation of each final-round metric across seeds."""
    if not final_records:
        return {"summary": True, "n_seeds": 0, **labels}
    rows = [r if isinstance(r, dict) else r.__dict__ for r in final_records]
    out = {"summary": True, **labels, "n_seeds": len(rows), "seeds": [r["seed"] for r in rows], "round": rows[0]["round"]}
    for name in SUMMARY_FIELDS:
        out[f"{name}_mean"], out[f"{name}_std"] = _mean_std(r[name] for r in rows)
    return out


def write_jsonl(path, records) -> Path:
    """Write atomically: a reader never sees a half-written file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for r in records:
        lines.append(r if isinstance(r, str) else (r.to_json() if hasattr(r, "to_json") else json.dumps(r)))
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write("".join(line + "\n" for line in lines))
    os.replace(tmp, path)
    return path


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def format_table(header, rows) -> str:
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
