"""Benchmark harness: manifests, cell runner, verification, reporting."""

from buildpilot.bench.manifest import (
    check_ratio,
    load_manifest,
    manifest_digest,
    save_manifest,
)
from buildpilot.bench.report import (
    BenchReport,
    ReportRow,
    aggregate,
    render_report,
    report_from_json,
)
from buildpilot.bench.runner import (
    RunRecord,
    config_digest,
    load_records,
    make_cell_id,
    resolve_archive_dir,
    run_benchmark,
)
from buildpilot.bench.verify import TargetReport, verify_targets

__all__ = [
    "BenchReport",
    "ReportRow",
    "RunRecord",
    "TargetReport",
    "aggregate",
    "check_ratio",
    "config_digest",
    "load_manifest",
    "load_records",
    "make_cell_id",
    "manifest_digest",
    "render_report",
    "report_from_json",
    "resolve_archive_dir",
    "run_benchmark",
    "save_manifest",
    "verify_targets",
]
