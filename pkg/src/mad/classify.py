"""Anomaly classification and metrics over cycle witnesses.

Each witness (a dependency cycle over operation instances) is matched
against a pattern table keyed on its dependency-edge multiset and the
kinds of the statements on those edges. Witnesses that embed a strictly
shorter witness are extensions of it; the rest are core anomalies.
Metrics aggregate counts per anomaly type and group anomalies by the
entity, functionality, and sub-transaction sets they touch.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping, Optional, Sequence

from .ar import Statement, StatementKind
from .chopper import MicroservicesAR
from .witness import (
    DEPENDENCY_KINDS,
    CycleWitness,
    InternalConsistencyError,
    WitnessNode,
    canonical_key,
    embeds,
)


class AnomalyType(str, Enum):
    DIRTY_READ = "DirtyRead"
    DIRTY_WRITE = "DirtyWrite"
    LOST_UPDATE = "LostUpdate"
    LOST_UPDATE_OR_WRITE_SKEW = "LostUpdateOrWriteSkew"
    NON_REPEATABLE_READ = "NonRepeatableRead"
    PHANTOM_READ = "PhantomRead"
    READ_SKEW = "ReadSkew"
    UNKNOWN = "Unknown"

    @property
    def code(self) -> str:
        """Column abbreviation used in report tables."""
        return _CODES[self]


_CODES = {
    AnomalyType.DIRTY_READ: "DR",
    AnomalyType.DIRTY_WRITE: "DW",
    AnomalyType.LOST_UPDATE: "LU",
    AnomalyType.LOST_UPDATE_OR_WRITE_SKEW: "LU/WS",
    AnomalyType.NON_REPEATABLE_READ: "NRR",
    AnomalyType.PHANTOM_READ: "PR",
    AnomalyType.READ_SKEW: "RS",
    AnomalyType.UNKNOWN: "Unknown",
}

# Canonical column order for reports; Unknown appears only when present.
TYPE_COLUMNS = (
    AnomalyType.DIRTY_READ,
    AnomalyType.DIRTY_WRITE,
    AnomalyType.LOST_UPDATE,
    AnomalyType.LOST_UPDATE_OR_WRITE_SKEW,
    AnomalyType.NON_REPEATABLE_READ,
    AnomalyType.PHANTOM_READ,
    AnomalyType.READ_SKEW,
)


def statement_lookup(micro: MicroservicesAR) -> dict[str, Statement]:
    """Map every operation name to its parsed statement."""
    return {s.name: s for f in micro.monolith.functionalities for s in f.statements}


def _dependency_edges(
    w: CycleWitness,
) -> list[tuple[str, WitnessNode, WitnessNode]]:
    n = len(w)
    return [
        (w.edges[i], w.nodes[i], w.nodes[(i + 1) % n])
        for i in range(n)
        if w.edges[i] in DEPENDENCY_KINDS
    ]


def _has_phantom_edge(
    deps: Sequence[tuple[str, WitnessNode, WitnessNode]],
    statements: Mapping[str, Statement],
) -> bool:
    """A WR or RW edge whose writer inserts or deletes rows that the other
    side's predicate select may cover. Every select here is a predicate
    read (rows are chosen by WHERE, never by handle), so the check reduces
    to the writer's statement kind."""
    for kind, src, dst in deps:
        if kind == "WW":
            continue
        writer, reader = (src, dst) if kind == "WR" else (dst, src)
        ws = statements[writer.oname]
        rs = statements[reader.oname]
        if ws.kind in (StatementKind.INSERT, StatementKind.DELETE) \
                and rs.kind is StatementKind.SELECT:
            return True
    return False


def classify(w: CycleWitness, statements: Mapping[str, Statement]) -> AnomalyType:
    """Match one witness against the anomaly pattern table.

    Rotation-invariant: every pattern inspects only the dependency-edge
    multiset and the statements at each edge's endpoints. The phantom
    pattern outranks only the single-table / cross-table read splits.
    Unmatched cycles classify as Unknown; callers surface them as
    warnings rather than dropping them.
    """
    deps = _dependency_edges(w)
    kinds = sorted(kind for kind, _, _ in deps)

    if all(kind == "WW" for kind in kinds):
        return AnomalyType.DIRTY_WRITE
    if "WR" in kinds and "WW" in kinds and "RW" not in kinds:
        return AnomalyType.DIRTY_READ
    if kinds == ["RW", "WW"]:
        rw = next(e for e in deps if e[0] == "RW")
        ww = next(e for e in deps if e[0] == "WW")
        # one functionality instance read a value (the RW source) that it
        # later overwrote (the WW target), clobbering the interleaved write
        if rw[1].origtx_instance == ww[2].origtx_instance:
            return AnomalyType.LOST_UPDATE
    if kinds == ["RW", "RW"]:
        # without row identities the two-anti-dependency shape covers both
        # a lost update and a write skew, so they report merged
        return AnomalyType.LOST_UPDATE_OR_WRITE_SKEW
    if _has_phantom_edge(deps, statements):
        return AnomalyType.PHANTOM_READ
    if kinds == ["RW", "WR"]:
        rw = next(e for e in deps if e[0] == "RW")
        wr = next(e for e in deps if e[0] == "WR")
        read_tables = {statements[rw[1].oname].table, statements[wr[2].oname].table}
        if len(read_tables) == 1:
            return AnomalyType.NON_REPEATABLE_READ
        return AnomalyType.READ_SKEW
    return AnomalyType.UNKNOWN


@dataclass(frozen=True)
class Anomaly:
    """A classified witness plus the name sets it touches.

    kind is "core" or "extension"; an extension's core_id is the index of
    its shortest embedding core within the containing anomaly list.
    """

    witness: CycleWitness
    type: AnomalyType
    entities: tuple[str, ...]
    functionalities: tuple[str, ...]
    sub_transactions: tuple[str, ...]
    kind: str = "core"
    core_id: Optional[int] = None


def mark_core_extensions(anomalies: Sequence[Anomaly]) -> list[Anomaly]:
    """Split anomalies into cores and extensions, preserving list order.

    An anomaly is core iff no strictly shorter witness in the list embeds
    into its witness. Extensions reference their shortest embedding core,
    ties broken by the core's canonical cycle key.
    """
    items = list(anomalies)
    n = len(items)
    wit = [a.witness for a in items]
    embedders: list[list[int]] = [
        [j for j in range(n)
         if j != i and len(wit[j]) < len(wit[i]) and embeds(wit[j], wit[i])]
        for i in range(n)
    ]
    is_core = [not e for e in embedders]
    out: list[Anomaly] = []
    for i, anomaly in enumerate(items):
        if is_core[i]:
            out.append(replace(anomaly, kind="core", core_id=None))
            continue
        cores = [j for j in embedders[i] if is_core[j]]
        if not cores:
            # a shortest embedder cannot itself be embedded by anything
            # shorter (embedding is transitive), so it must be a core
            raise InternalConsistencyError(
                f"extension witness {canonical_key(wit[i])} has no core embedder")
        best = min(cores, key=lambda j: (len(wit[j]), canonical_key(wit[j])))
        out.append(replace(anomaly, kind="extension", core_id=best))
    return out


def classify_witnesses(
    witnesses: Sequence[CycleWitness], micro: MicroservicesAR,
) -> list[Anomaly]:
    """Classify every witness and mark cores against extensions."""
    statements = statement_lookup(micro)
    anomalies = []
    for w in witnesses:
        anomalies.append(Anomaly(
            witness=w,
            type=classify(w, statements),
            entities=tuple(sorted({statements[n.oname].table for n in w.nodes})),
            functionalities=w.functionalities(),
            sub_transactions=w.sub_transactions(),
        ))
    return mark_core_extensions(anomalies)


@dataclass(frozen=True)
class GroupRow:
    """One grouping-table row: a sorted name set, how many anomalies share
    it, and which anomaly types (column codes) occur among them."""

    key: tuple[str, ...]
    count: int
    types: tuple[str, ...]


@dataclass(frozen=True)
class AnomalyMetrics:
    """Aggregated counts and groupings over one analysis's anomalies."""

    anomalies: tuple[Anomaly, ...]
    core_count: int
    extension_count: int
    total_count: int
    type_counts: dict[str, int]  # AnomalyType.value -> count over all anomalies
    by_entities: tuple[GroupRow, ...]
    by_functionalities: tuple[GroupRow, ...]
    by_sub_transactions: tuple[GroupRow, ...]


def _group_rows(anomalies: Sequence[Anomaly], key_of) -> tuple[GroupRow, ...]:
    groups: dict[tuple[str, ...], list[Anomaly]] = {}
    for a in anomalies:
        groups.setdefault(key_of(a), []).append(a)
    rows = []
    for key, members in groups.items():
        present = {a.type for a in members}
        codes = tuple(t.code for t in (*TYPE_COLUMNS, AnomalyType.UNKNOWN)
                      if t in present)
        rows.append(GroupRow(key=key, count=len(members), types=codes))
    rows.sort(key=lambda r: (-r.count, r.key))
    return tuple(rows)


def group_metrics(anomalies: Sequence[Anomaly]) -> AnomalyMetrics:
    """Aggregate totals, per-type counts, and the three grouping tables."""
    anomalies = tuple(anomalies)
    core_count = sum(1 for a in anomalies if a.kind == "core")
    type_counts: dict[str, int] = {}
    for a in anomalies:
        type_counts[a.type.value] = type_counts.get(a.type.value, 0) + 1
    return AnomalyMetrics(
        anomalies=anomalies,
        core_count=core_count,
        extension_count=len(anomalies) - core_count,
        total_count=len(anomalies),
        type_counts=type_counts,
        by_entities=_group_rows(anomalies, lambda a: a.entities),
        by_functionalities=_group_rows(anomalies, lambda a: a.functionalities),
        by_sub_transactions=_group_rows(anomalies, lambda a: a.sub_transactions),
    )
