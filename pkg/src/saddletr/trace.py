"""Tab-separated trace files.

Layout::

    # saddletr-trace 1
    #meta {"...": ...}          JSON, sorted keys
    k<TAB>region<TAB>...        column header
    <one row per iteration>
    #summary {"...": ...}       JSON, sorted keys (absent for partial traces)

Floats are written with 17 significant digits, so reading a file back
yields bit-identical values and rewriting it reproduces the same bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path

from .driver import (RECORD_COLUMNS, STEP_TYPES, SUCCESSFUL, UNSUCCESSFUL, VERY_SUCCESSFUL, IterationRecord,
                     TerminationReport)
from .tcg import BOUNDARY_STEP, MAX_ITER, NOT_STRONGLY_CONVEX, SMALL_RESIDUAL

MAGIC = "# saddletr-trace 1"
_TYPES = {f.name: f.type for f in fields(IterationRecord)}
_CHOICES = {
    "region": ("R1", "R2", "R3_candidate", "unknown"),
    "step_type": STEP_TYPES,
    "tcg_flag": ("-", NOT_STRONGLY_CONVEX, BOUNDARY_STEP, SMALL_RESIDUAL, MAX_ITER),
    "outcome": (VERY_SUCCESSFUL, SUCCESSFUL, UNSUCCESSFUL),
}


class TraceSchemaError(ValueError):
    pass


@dataclass
class Trace:
    meta: dict
    records: list[IterationRecord]
    summary: dict | None = field(default=None)


def fmt_float(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return fmt_float(v)
    return str(v)


def _parse(name: str, text: str):
    t = _TYPES[name]
    if t == "int":
        return int(text)
    if t == "float":
        return float(text)
    if name in _CHOICES and text not in _CHOICES[name]:
        raise ValueError(f"{name} {text!r} is not one of {', '.join(_CHOICES[name])}")
    return text


def summary_from_report(rep: TerminationReport) -> dict:
    return {
        "reason": rep.reason,
        "final_f": rep.final_f,
        "final_grad_norm": rep.final_grad_norm,
        "lambda_min_estimate": rep.min_hessian_eigenvalue_estimate,
        "total_hvp": rep.total_hvp,
        "check_hvp": rep.check_hvp,
        "iterations": rep.iterations,
        "successful": rep.successful,
    }


def trace_from_report(rep: TerminationReport, meta: dict) -> Trace:
    return Trace(dict(meta), list(rep.trace), summary_from_report(rep))


def dumps(trace: Trace) -> str:
    lines = [MAGIC, "#meta " + json.dumps(trace.meta, sort_keys=True), "\t".join(RECORD_COLUMNS)]
    for r in trace.records:
        lines.append("\t".join(_fmt(v) for v in astuple(r)))
    if trace.summary is not None:
        lines.append("#summary " + json.dumps(trace.summary, sort_keys=True))
    return "\n".join(lines) + "\n"


def loads(text: str) -> Trace:
    lines = text.splitlines()
    if not lines or lines[0] != MAGIC:
        raise TraceSchemaError("not a saddletr trace (bad magic line)")
    if len(lines) < 3 or not lines[1].startswith("#meta "):
        raise TraceSchemaError("missing #meta line")
    try:
        meta = json.loads(lines[1][len("#meta "):])
    except json.JSONDecodeError as e:
        raise TraceSchemaError(f"bad meta JSON: {e}") from None
    header = tuple(lines[2].split("\t"))
    if header != RECORD_COLUMNS:
        raise TraceSchemaError(f"unexpected columns {header}")
    records, summary = [], None
    for lineno, line in enumerate(lines[3:], start=4):
        if line.startswith("#summary "):
            summary = json.loads(line[len("#summary "):])
            continue
        cells = line.split("\t")
        if len(cells) != len(header):
            raise TraceSchemaError(f"line {lineno}: expected {len(header)} fields, got {len(cells)}")
        try:
            records.append(IterationRecord(*(_parse(n, c) for n, c in zip(header, cells))))
        except ValueError as e:
            raise TraceSchemaError(f"line {lineno}: {e}") from None
    return Trace(meta, records, summary)


def write_trace(trace: Trace, path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(dumps(trace))
    return p


def read_trace(path) -> Trace:
    return loads(Path(path).read_text())
