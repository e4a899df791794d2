"""Metric aggregation and report rendering.

Aggregation folds cell records into one row per (method, model): success
rate, total wall time in hours, total spend, and mean tool usage. Rendering
offers a terminal table, a markdown table, and a JSON document whose parse
reproduces the report exactly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from decimal import Decimal

from buildpilot.errors import MixedManifest

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
REPORT_FORMATS = ("text", "markdown", "json")


@dataclass(frozen=True)
class ReportRow:
    method: str
    model_id: str
    csr: float
    total_time_hours: float
    total_exp_usd: Decimal
    per_tool_usage: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.csr <= 1.0:
            raise ValueError(f"csr must be in [0, 1], got {self.csr}")


@dataclass(frozen=True)
class BenchReport:
    rows: tuple
    n_projects: int


def aggregate(records) -> BenchReport:
    """Records to one report row per (method, model) pair.

    The denominator is the distinct project count; records must all come
    from the same manifest or the rates would not be comparable.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to aggregate")
    digests = {r.manifest_digest for r in records if r.manifest_digest}
    if len(digests) > 1:
        raise MixedManifest(
            f"records span {len(digests)} different manifests")

    n_projects = len({r.project for r in records})
    groups: dict[tuple, list] = {}
    for record in records:
        groups.setdefault((record.method, record.model_id), []).append(record)

    rows = []
    for (method, model_id), cells in sorted(groups.items(),
                                            key=lambda kv: (kv[0][1], kv[0][0])):
        verified = sum(1 for c in cells if c.verified)
        elapsed = sum(c.outcome.elapsed_seconds for c in cells)
        spend = sum((c.outcome.cost_usd for c in cells), Decimal(0))
        tool_totals: dict[str, int] = {}
        for cell in cells:
            for tool_id, count in cell.per_tool.items():
                tool_totals[tool_id] = tool_totals.get(tool_id, 0) + count
        per_tool = {tool_id: total / n_projects
                    for tool_id, total in sorted(tool_totals.items())}
        rows.append(ReportRow(
            method=method,
            model_id=model_id,
            csr=verified / n_projects,
            total_time_hours=elapsed / 3600.0,
            total_exp_usd=spend,
            per_tool_usage=per_tool,
        ))
    return BenchReport(rows=tuple(rows), n_projects=n_projects)


def _fmt_csr(csr: float) -> str:
    return f"{csr:.0%}"


def _fmt_hours(hours: float) -> str:
    return f"{hours:.2f}"


def _fmt_usd(spend: Decimal) -> str:
    return f"{spend:.2f}"


def _tool_columns(report: BenchReport) -> list[str]:
    tools: set[str] = set()
    for row in report.rows:
        tools.update(row.per_tool_usage)
    return sorted(tools)


def _table_cells(report: BenchReport) -> tuple[list[str], list[list[str]]]:
    tools = _tool_columns(report)
    header = ["Model", "Method", "Csr", "Time (h)", "Exp ($)"] + tools
    body = []
    for row in report.rows:
        cells = [row.model_id, row.method, _fmt_csr(row.csr),
                 _fmt_hours(row.total_time_hours), _fmt_usd(row.total_exp_usd)]
        for tool_id in tools:
            usage = row.per_tool_usage.get(tool_id)
            cells.append("-" if usage is None else f"{usage:.2f}")
        body.append(cells)
    return header, body


def _render_text(report: BenchReport) -> str:
    header, body = _table_cells(report)
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
    lines = [f"Projects: {report.n_projects}"]
    lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip())
    lines.append("  ".join("-" * w for w in widths))
    for row in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def _render_markdown(report: BenchReport) -> str:
    header, body = _table_cells(report)
    lines = [f"Projects: {report.n_projects}", ""]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("| " + " | ".join("---" for _ in header) + " |")
    for row in body:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def _render_json(report: BenchReport) -> str:
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "n_projects": report.n_projects,
        "rows": [
            {
                "method": row.method,
                "model_id": row.model_id,
                "csr": row.csr,
                "total_time_hours": row.total_time_hours,
                "total_exp_usd": str(row.total_exp_usd),
                "per_tool_usage": {k: row.per_tool_usage[k]
                                   for k in sorted(row.per_tool_usage)},
            }
            for row in report.rows
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def render_report(report: BenchReport, format: str = "text") -> str:
    if format == "text":
        return _render_text(report)
    if format == "markdown":
        return _render_markdown(report)
    if format == "json":
        return _render_json(report)
    raise ValueError(f"unknown report format {format!r} "
                     f"(want one of {', '.join(REPORT_FORMATS)})")


def report_from_json(document: str) -> BenchReport:
    """Inverse of the JSON render; floats and money round-trip exactly."""
    doc = json.loads(document)
    if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise ValueError(
            f"unsupported report schema {doc.get('schema_version')!r}")
    rows = tuple(
        ReportRow(
            method=row["method"],
            model_id=row["model_id"],
            csr=float(row["csr"]),
            total_time_hours=float(row["total_time_hours"]),
            total_exp_usd=Decimal(row["total_exp_usd"]),
            per_tool_usage={str(k): float(v)
                            for k, v in (row.get("per_tool_usage") or {}).items()},
        )
        for row in doc["rows"]
    )
    return BenchReport(rows=rows, n_projects=int(doc["n_projects"]))
