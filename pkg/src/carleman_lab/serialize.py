"""Canonical JSON and CSV forms of experiment reports.

Floats are written with ``repr`` (shortest round-trip decimal) and JSON keys
are sorted, so equal reports serialize to equal bytes.  Missing numbers
(skipped rungs) are ``null`` in JSON and ``nan`` in CSV.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict

from .experiments import RECORD_COLUMNS, EstimateReport, Record

__all__ = [
    "report_to_dict",
    "report_from_dict",
    "dumps_report",
    "loads_report",
    "records_csv",
    "plot_data",
]


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def report_to_dict(report: EstimateReport) -> dict:
    return _clean(
        {
            "mode": report.mode,
            "records": [asdict(r) for r in report.records],
            "fits": list(report.fits),
            "flags": dict(report.flags),
            "pass": report.passed,
            "provenance": dict(report.provenance),
        }
    )


def _num(value):
    return math.nan if value is None else float(value)


def report_from_dict(data: dict) -> EstimateReport:
    records = []
    for r in data["records"]:
        kw = {c: _num(r[c]) for c in RECORD_COLUMNS}
        records.append(Record(**kw, status=r["status"], reason=r["reason"], alpha=r["alpha"]))
    return EstimateReport(
        data["mode"], tuple(records), tuple(data["fits"]), dict(data["flags"]), dict(data["provenance"])
    )


def dumps_report(report: EstimateReport) -> str:
    return json.dumps(report_to_dict(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def loads_report(text: str) -> EstimateReport:
    return report_from_dict(json.loads(text))


def _cell(value) -> str:
    return repr(float(value))


def records_csv(report: EstimateReport) -> str:
    lines = [",".join(RECORD_COLUMNS)]
    lines += [",".join(_cell(v) for v in r.row()) for r in report.records]
    return "\n".join(lines) + "\n"


def plot_data(report: EstimateReport) -> dict[str, str]:
    """Plot-ready CSVs: ``beta`` against ``log_ratio`` and ``log h`` against ``log log_ratio``."""
    scatter = ["alpha,beta,log_ratio"]
    loglog = ["alpha,log_h,log_log_ratio"]
    for r in report.records:
        if not r.ok:
            continue
        a = "" if r.alpha is None else repr(r.alpha)
        scatter.append(f"{a},{_cell(r.beta)},{_cell(r.log_ratio)}")
        if r.log_ratio > 0:
            loglog.append(f"{a},{_cell(math.log(r.h))},{_cell(math.log(r.log_ratio))}")
    return {
        "plot_beta_log_ratio.csv": "\n".join(scatter) + "\n",
        "plot_loglog.csv": "\n".join(loglog) + "\n",
    }
