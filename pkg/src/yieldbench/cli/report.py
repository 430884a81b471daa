"""Report writing: versioned JSON with stable key order plus a plain table.

json.dumps with sort_keys and a fixed separator convention gives
byte-identical files for identical in-memory reports; nothing time- or
path-dependent is ever stored.
"""

from __future__ import annotations

import json
from pathlib import Path

REPORT_SCHEMA = 1


def dumps_stable(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def write_json(payload: dict, path: str | Path) -> None:
    Path(path).write_text(dumps_stable(payload), encoding="utf-8")


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_report(report: dict, out_dir: str | Path) -> Path:
    """Write report.json and a fixed-width report.txt next to it."""
    if not report.get("rows"):
        raise ValueError("empty results; nothing to report")
    report = {"schema": REPORT_SCHEMA, **report}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.json"
    write_json(report, path)
    (out / "report.txt").write_text(render_rows(report["rows"]), encoding="utf-8")
    return path


def render_rows(rows: list[dict]) -> str:
    """Fixed-width text table over the union of row keys."""
    if not rows:
        raise ValueError("no rows to render")
    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    cells = [[_fmt(row.get(c, "")) for c in columns] for row in rows]
    widths = [max(len(col), max(len(row[i]) for row in cells))
              for i, col in enumerate(columns)]
    lines = ["  ".join(col.ljust(widths[i]) for i, col in enumerate(columns))]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(v.ljust(widths[i]) for i, v in enumerate(row)))
    return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)
