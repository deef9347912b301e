"""Analysis report assembly.

Builds one canonical JSON document out of the solver results and the
classified anomalies, renders it as aligned text tables, and publishes
the JSON schema the document is guaranteed to validate against. Keys and
rows are ordered deterministically so reports diff cleanly across runs.
"""

from __future__ import annotations

import json
from typing import Any

from .classify import AnomalyMetrics, AnomalyType, TYPE_COLUMNS
from .orchestrator import AnalysisConfig, AnalysisResult

_NAME_SET = {"type": "array", "items": {"type": "string"}}
_TYPE_VALUES = [t.value for t in AnomalyType]
_TYPE_CODES = [t.code for t in AnomalyType]
_EDGE_KINDS = ["ST", "SOT", "WR", "RW", "WW"]

_GROUP_ROW_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["key", "count", "types"],
    "properties": {
        "key": _NAME_SET,
        "count": {"type": "integer", "minimum": 1},
        "types": {"type": "array", "items": {"enum": _TYPE_CODES}},
    },
}

REPORT_SCHEMA: dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "mad analysis report",
    "type": "object",
    "additionalProperties": False,
    "required": ["tool", "status", "config", "totals", "anomalies",
                 "groupings", "combinations", "timing", "warnings"],
    "properties": {
        "tool": {"const": "mad"},
        "status": {"enum": ["complete", "partial"]},
        "config": {
            "type": "object",
            "additionalProperties": False,
            "required": ["mcl", "threads", "divide_and_conquer", "solver",
                         "check_timeout", "model_cap", "global_timeout"],
            "properties": {
                "mcl": {"type": "integer", "minimum": 3},
                "threads": {"type": ["integer", "null"], "minimum": 1},
                "divide_and_conquer": {"type": "boolean"},
                "solver": {"type": ["string", "null"]},
                "check_timeout": {"type": "number", "exclusiveMinimum": 0},
                "model_cap": {"type": "integer", "minimum": 1},
                "global_timeout": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "totals": {
            "type": "object",
            "additionalProperties": False,
            "required": ["core", "extensions", "total", "by_type"],
            "properties": {
                "core": {"type": "integer", "minimum": 0},
                "extensions": {"type": "integer", "minimum": 0},
                "total": {"type": "integer", "minimum": 0},
                "by_type": {
                    "type": "object",
                    "propertyNames": {"enum": _TYPE_VALUES},
                    "additionalProperties": {"type": "integer", "minimum": 0},
                },
            },
        },
        "anomalies": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "type", "kind", "core_id", "cycle", "entities",
                             "functionalities", "sub_transactions", "subset"],
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "type": {"enum": _TYPE_VALUES},
                    "kind": {"enum": ["core", "extension"]},
                    "core_id": {"type": ["integer", "null"], "minimum": 0},
                    "cycle": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["nodes", "edges"],
                        "properties": {
                            "nodes": {
                                "type": "array",
                                "minItems": 3,
                                "items": {
                                    "type": "object",
                                    "additionalProperties": False,
                                    "required": ["operation", "functionality_instance",
                                                 "sub_transaction_instance", "microservice"],
                                    "properties": {
                                        "operation": {"type": "string"},
                                        "functionality_instance": {"type": "string"},
                                        "sub_transaction_instance": {"type": "string"},
                                        "microservice": {"type": "string"},
                                    },
                                },
                            },
                            "edges": {
                                "type": "array",
                                "minItems": 3,
                                "items": {"enum": _EDGE_KINDS},
                            },
                        },
                    },
                    "entities": _NAME_SET,
                    "functionalities": _NAME_SET,
                    "sub_transactions": _NAME_SET,
                    "subset": _NAME_SET,
                },
            },
        },
        "groupings": {
            "type": "object",
            "additionalProperties": False,
            "required": ["by_entities", "by_functionalities", "by_sub_transactions"],
            "properties": {
                "by_entities": {"type": "array", "items": _GROUP_ROW_SCHEMA},
                "by_functionalities": {"type": "array", "items": _GROUP_ROW_SCHEMA},
                "by_sub_transactions": {"type": "array", "items": _GROUP_ROW_SCHEMA},
            },
        },
        "combinations": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["subset", "status", "models", "witnesses",
                             "seconds", "error"],
                "properties": {
                    "subset": _NAME_SET,
                    "status": {"enum": ["complete", "cap_reached", "timeout",
                                        "unknown", "skipped", "error"]},
                    "models": {"type": "integer", "minimum": 0},
                    "witnesses": {"type": "integer", "minimum": 0},
                    "seconds": {"type": "number", "minimum": 0},
                    "error": {"type": ["string", "null"]},
                },
            },
        },
        "timing": {
            "type": "object",
            "additionalProperties": False,
            "required": ["generation_seconds", "solving_seconds",
                         "et_seconds", "elapsed_seconds"],
            "properties": {
                "generation_seconds": {"type": "number", "minimum": 0},
                "solving_seconds": {"type": "number", "minimum": 0},
                "et_seconds": {"type": "number", "minimum": 0},
                "elapsed_seconds": {"type": "number", "minimum": 0},
            },
        },
        "warnings": {"type": "array", "items": {"type": "string"}},
    },
}


def build_report(result: AnalysisResult, metrics: AnomalyMetrics,
                 config: AnalysisConfig) -> dict[str, Any]:
    """Assemble the report document for one finished analysis."""
    warnings: list[str] = []
    for i, a in enumerate(metrics.anomalies):
        if a.type is AnomalyType.UNKNOWN:
            warnings.append(
                f"anomaly {i} matched no known pattern; reported as Unknown")
    for c in result.combinations:
        if c.status == "error":
            warnings.append(f"combination {'+'.join(c.subset)} failed: {c.error}")
        elif not c.complete:
            warnings.append(f"combination {'+'.join(c.subset)} incomplete "
                            f"({c.status}); results may miss anomalies")

    by_type = {t.value: metrics.type_counts.get(t.value, 0) for t in TYPE_COLUMNS}
    unknown = metrics.type_counts.get(AnomalyType.UNKNOWN.value, 0)
    if unknown:
        by_type[AnomalyType.UNKNOWN.value] = unknown

    anomalies = []
    for i, a in enumerate(metrics.anomalies):
        anomalies.append({
            "id": i,
            "type": a.type.value,
            "kind": a.kind,
            "core_id": a.core_id,
            "cycle": {
                "nodes": [{
                    "operation": n.oname,
                    "functionality_instance": n.origtx_instance,
                    "sub_transaction_instance": n.parent_instance,
                    "microservice": n.microservice,
                } for n in a.witness.nodes],
                "edges": list(a.witness.edges),
            },
            "entities": list(a.entities),
            "functionalities": list(a.functionalities),
            "sub_transactions": list(a.sub_transactions),
            "subset": list(a.witness.subset),
        })

    def rows(group):
        return [{"key": list(r.key), "count": r.count, "types": list(r.types)}
                for r in group]

    return {
        "tool": "mad",
        "status": "complete" if result.complete else "partial",
        "config": {
            "mcl": config.mcl,
            "threads": config.threads,
            "divide_and_conquer": config.divide_and_conquer,
            "solver": config.solver,
            "check_timeout": config.check_timeout,
            "model_cap": config.model_cap,
            "global_timeout": config.global_timeout,
        },
        "totals": {
            "core": metrics.core_count,
            "extensions": metrics.extension_count,
            "total": metrics.total_count,
            "by_type": by_type,
        },
        "anomalies": anomalies,
        "groupings": {
            "by_entities": rows(metrics.by_entities),
            "by_functionalities": rows(metrics.by_functionalities),
            "by_sub_transactions": rows(metrics.by_sub_transactions),
        },
        "combinations": [{
            "subset": list(c.subset),
            "status": c.status,
            "models": c.models,
            "witnesses": c.witnesses,
            "seconds": c.seconds,
            "error": c.error,
        } for c in result.combinations],
        "timing": {
            "generation_seconds": result.generation_seconds,
            "solving_seconds": result.solving_seconds,
            "et_seconds": result.generation_seconds + result.solving_seconds,
            "elapsed_seconds": result.elapsed_seconds,
        },
        "warnings": warnings,
    }


def report_json(report: dict[str, Any]) -> str:
    """Canonical serialization: sorted keys, stable indentation."""
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _table(headers: list[str], rows: list[list[str]]) -> list[str]:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(headers, widths))]
    for r in rows:
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
    return lines


def _name_set(names: list[str]) -> str:
    return "[" + ", ".join(names) + "]"


def render_tables(report: dict[str, Any]) -> str:
    """Human-readable tables over the same content as the JSON report."""
    totals = report["totals"]
    by_type = totals["by_type"]
    lines: list[str] = []
    lines.append(f"status: {report['status']}")
    lines.append("")
    lines.extend(_table(
        ["#CA", "#TA", "ET(s)"],
        [[str(totals["core"]), str(totals["total"]),
          f"{report['timing']['et_seconds']:.1f}"]],
    ))
    lines.append("")

    type_headers = [t.code for t in TYPE_COLUMNS]
    type_values = [str(by_type[t.value]) for t in TYPE_COLUMNS]
    if AnomalyType.UNKNOWN.value in by_type:
        type_headers.append(AnomalyType.UNKNOWN.code)
        type_values.append(str(by_type[AnomalyType.UNKNOWN.value]))
    type_headers += ["Ext", "Total"]
    type_values += [str(totals["extensions"]), str(totals["total"])]
    lines.extend(_table(type_headers, [type_values]))

    for title, key in (("anomalies by entity set", "by_entities"),
                       ("anomalies by functionality set", "by_functionalities"),
                       ("anomalies by sub-transaction set", "by_sub_transactions")):
        rows = report["groupings"][key]
        if not rows:
            continue
        lines.append("")
        lines.append(title)
        for r in rows:
            lines.append(f"  {_name_set(r['key'])}  {r['count']}  "
                         f"{_name_set(r['types'])}")

    if report["warnings"]:
        lines.append("")
        lines.append("warnings")
        for w in report["warnings"]:
            lines.append(f"  {w}")
    return "\n".join(lines) + "\n"
