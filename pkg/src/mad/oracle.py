"""Brute-force ground truth for the solver pipeline.

Runs the chopped program concretely: a tiny database (a few rows per table),
every parameter valuation over a small finite domain, and every interleaving
of sub-transaction blocks (each block executes atomically, program order is
kept inside a functionality instance). Each schedule's cell-level read/write
footprints give a conflict graph over functionality instances; a cycle means
the schedule is not serializable.

Conflict detection deliberately mirrors the symbolic encoder's model rather
than full predicate semantics: only selects read (update/delete WHERE
evaluation is not a read), inserts/deletes write every column of their row,
and phantoms are the insert-after-select and delete-before-select cases.
An update that moves a row into or out of a predicate without touching the
selected columns is invisible to both sides, by design.

A statement that references a variable its select never bound (no row
matched) executes as a no-op, as does one whose path condition is false.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .ar import (
    ArType,
    ArError,
    Binary,
    Expression,
    FunctionalityAR,
    MonolithAR,
    Param,
    Statement,
    StatementKind,
    Unary,
    Value,
    Variable,
    referenced_params,
    walk,
)
from .chopper import MicroservicesAR, SubTransaction


class OracleError(ArError):
    """Concrete execution failed (for example division by zero)."""


@dataclass(frozen=True)
class ConcreteDomain:
    """Finite value domains and instance counts for exhaustive execution."""

    rows_per_table: int = 1
    int_values: tuple[int, ...] = (0, 1, 2, 3)
    real_values: tuple[float, ...] = (0.0, 1.0)
    string_values: tuple[str, ...] = ("a", "b")
    boolean_values: tuple[bool, ...] = (False, True)
    instances_per_functionality: int = 2

    def __post_init__(self) -> None:
        if self.rows_per_table < 1 or self.instances_per_functionality < 0:
            raise OracleError("domain must have at least one row and zero or more instances")
        for vals in (self.int_values, self.real_values, self.string_values, self.boolean_values):
            if not vals:
                raise OracleError("every value domain must be non-empty")

    def values_for(self, t: ArType) -> tuple:
        return {
            ArType.INT: self.int_values,
            ArType.REAL: self.real_values,
            ArType.STRING: self.string_values,
            ArType.BOOLEAN: self.boolean_values,
        }[t]


@dataclass(frozen=True)
class InstanceSpec:
    """One concrete run of a functionality: which one, and its argument values."""

    functionality: str
    index: int
    valuation: tuple[tuple[str, object], ...]

    @property
    def label(self) -> str:
        return f"{self.functionality}#{self.index}"

    def args(self) -> dict[str, object]:
        return dict(self.valuation)


# Cell = (table, slot id, column). Footprints are sets of cells.
Cell = tuple[str, int, str]


@dataclass(frozen=True)
class ExecutedOp:
    """Footprint of one executed statement instance."""

    time: int
    instance: str
    statement: str
    kind: StatementKind
    table: str
    reads: frozenset[Cell]
    writes: frozenset[Cell]


@dataclass(frozen=True)
class ConflictEdge:
    src: str  # instance label
    dst: str
    kind: str  # "WR" | "RW" | "WW"
    table: str


@dataclass
class Schedule:
    """One executed interleaving with its footprints and conflicts."""

    instances: tuple[InstanceSpec, ...]
    block_order: tuple[int, ...]  # instance position per executed block
    block_names: tuple[str, ...]  # sub-transaction name per executed block
    operations: tuple[ExecutedOp, ...]
    conflicts: tuple[ConflictEdge, ...]


# ---------------------------------------------------------------------------
# Expression evaluation
# ---------------------------------------------------------------------------

class _Unset(Exception):
    """A referenced variable was never bound (its select matched no row)."""


def _euclidean_div(a: int, b: int) -> int:
    if b == 0:
        raise OracleError("division by zero")
    q, r = divmod(a, b)
    if r != 0 and b < 0:
        q += 1
    return q


def eval_expression(expr: Expression, params: dict, variables: dict, row: Optional[dict] = None):
    """Evaluate under parameter/variable env, plus row columns for WHERE."""
    if isinstance(expr, Value):
        return expr.literal
    if isinstance(expr, Param):
        return params[expr.name]
    if isinstance(expr, Variable):
        if row is not None and expr.name in row:
            return row[expr.name]
        if expr.name in variables:
            return variables[expr.name]
        raise _Unset(expr.name)
    if isinstance(expr, Unary):
        v = eval_expression(expr.operand, params, variables, row)
        return -v if expr.op == "-" else not v
    if isinstance(expr, Binary):
        lv = eval_expression(expr.lhs, params, variables, row)
        if expr.op == "and":
            return bool(lv) and bool(eval_expression(expr.rhs, params, variables, row))
        if expr.op == "or":
            return bool(lv) or bool(eval_expression(expr.rhs, params, variables, row))
        rv = eval_expression(expr.rhs, params, variables, row)
        if expr.op == "+":
            return lv + rv
        if expr.op == "-":
            return lv - rv
        if expr.op == "*":
            return lv * rv
        if expr.op == "/":
            if isinstance(lv, bool) or isinstance(lv, float):
                if rv == 0:
                    raise OracleError("division by zero")
                return lv / rv
            return _euclidean_div(lv, rv)
        if expr.op == "=":
            return lv == rv
        if expr.op == "!=":
            return lv != rv
        if expr.op == "<":
            return lv < rv
        if expr.op == "<=":
            return lv <= rv
        if expr.op == ">":
            return lv > rv
        if expr.op == ">=":
            return lv >= rv
    raise OracleError(f"cannot evaluate {expr!r}")


# ---------------------------------------------------------------------------
# Relevant parameters: the ones whose value can change conflict structure
# ---------------------------------------------------------------------------

def relevant_parameters(m: MonolithAR, subset: tuple[str, ...]) -> dict[str, set[str]]:
    """Per functionality, the params that can reach a predicate.

    A param matters when it appears in a WHERE or path condition, or when it
    flows into a written cell whose column some WHERE mentions (possibly via
    a select bind and further writes). Everything else only changes stored
    values that no predicate ever inspects, so those params are pinned to one
    value during enumeration.
    """
    funcs = [m.functionality(f) for f in subset]
    col_names = {t.name: set(t.column_types()) for t in m.schema.tables}

    def split_names(stmt: Statement, expr: Expression) -> tuple[set[str], set[str]]:
        cols, vars_ = set(), set()
        for e in walk(expr):
            if isinstance(e, Variable):
                if e.name in col_names[stmt.table]:
                    cols.add((stmt.table, e.name))
                else:
                    vars_.add(e.name)
        return cols, vars_

    relevant_cols: set[tuple[str, str]] = set()
    relevant_vars: dict[str, set[str]] = {f.name: set() for f in funcs}
    relevant: dict[str, set[str]] = {f.name: set() for f in funcs}

    for f in funcs:
        for stmt in f.statements:
            wc, wv = split_names(stmt, stmt.where)
            relevant_cols |= wc
            relevant_vars[f.name] |= wv
            relevant[f.name] |= referenced_params(stmt.where)
            relevant[f.name] |= referenced_params(stmt.path_condition)
            relevant_vars[f.name] |= {
                e.name for e in walk(stmt.path_condition) if isinstance(e, Variable)
            }

    changed = True
    while changed:
        changed = False
        for f in funcs:
            for stmt in f.statements:
                for col, expr in stmt.write_columns:
                    if (stmt.table, col) in relevant_cols:
                        for e in walk(expr):
                            if isinstance(e, Param) and e.name not in relevant[f.name]:
                                relevant[f.name].add(e.name)
                                changed = True
                            if isinstance(e, Variable) and e.name not in relevant_vars[f.name]:
                                relevant_vars[f.name].add(e.name)
                                changed = True
                if stmt.kind is StatementKind.SELECT:
                    for col, var in stmt.bindings:
                        if var in relevant_vars[f.name] and (stmt.table, col) not in relevant_cols:
                            relevant_cols.add((stmt.table, col))
                            changed = True
    return relevant


# ---------------------------------------------------------------------------
# Concrete database
# ---------------------------------------------------------------------------

@dataclass
class _Slot:
    sid: int
    values: Optional[dict]  # None once deleted
    last: Optional[dict] = None  # values at deletion time


def _initial_value(t: ArType, row_index: int, dom: ConcreteDomain):
    if t is ArType.INT:
        return row_index
    if t is ArType.REAL:
        return float(row_index)
    if t is ArType.STRING:
        return dom.string_values[row_index % len(dom.string_values)]
    return row_index % 2 == 1


class _Database:
    def __init__(self, m: MonolithAR, dom: ConcreteDomain):
        self.slots: dict[str, list[_Slot]] = {}
        self._fresh = 1000
        for t in m.schema.tables:
            rows = []
            for i in range(dom.rows_per_table):
                rows.append(_Slot(i, {c.name: _initial_value(c.type, i, dom) for c in t.columns}))
            self.slots[t.name] = rows
        self.dom = dom

    def live(self, table: str) -> list[_Slot]:
        return [s for s in self.slots[table] if s.values is not None]

    def fresh_value(self, t: ArType):
        self._fresh += 1
        if t is ArType.INT:
            return self._fresh
        if t is ArType.REAL:
            return float(self._fresh)
        if t is ArType.STRING:
            return f"fresh{self._fresh}"
        return False

    def insert(self, table: str, values: dict) -> _Slot:
        slot = _Slot(len(self.slots[table]), values)
        self.slots[table].append(slot)
        return slot


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

@dataclass
class _PredicateRead:
    """A select's predicate at execution time, for phantom detection."""

    time: int
    instance: str
    table: str
    where: Expression
    params: dict
    variables: dict

    def matches(self, row: dict) -> bool:
        try:
            return bool(eval_expression(self.where, self.params, self.variables, row))
        except _Unset:
            return False


@dataclass
class _RowBirth:
    time: int
    instance: str
    table: str
    values: dict


@dataclass
class _RowDeath:
    time: int
    instance: str
    table: str
    last: dict


def _free_variables(stmt: Statement, table_cols: set[str]) -> set[str]:
    names: set[str] = set()
    for e in walk(stmt.where):
        if isinstance(e, Variable) and e.name not in table_cols:
            names.add(e.name)
    for e in walk(stmt.path_condition):
        if isinstance(e, Variable):
            names.add(e.name)
    for _, expr in stmt.write_columns:
        for e in walk(expr):
            if isinstance(e, Variable):
                names.add(e.name)
    return names


def execute_schedule(
    m: MicroservicesAR,
    instances: tuple[InstanceSpec, ...],
    block_order: tuple[int, ...],
    dom: ConcreteDomain,
) -> Schedule:
    """Run the blocks in the given order and collect footprints and conflicts."""
    monolith = m.monolith
    db = _Database(monolith, dom)
    blocks: list[list[SubTransaction]] = [
        list(m.of_functionality(spec.functionality)) for spec in instances
    ]
    progress = [0] * len(instances)
    variables: list[dict] = [{} for _ in instances]

    ops: list[ExecutedOp] = []
    predicate_reads: list[_PredicateRead] = []
    births: list[_RowBirth] = []
    deaths: list[_RowDeath] = []
    cell_log: dict[Cell, list[tuple[int, str, str]]] = {}  # cell -> [(time, instance, r/w)]
    time = 0
    block_names: list[str] = []

    def log(cell: Cell, t: int, inst: str, rw: str) -> None:
        cell_log.setdefault(cell, []).append((t, inst, rw))

    for inst_idx in block_order:
        spec = instances[inst_idx]
        sub = blocks[inst_idx][progress[inst_idx]]
        progress[inst_idx] += 1
        block_names.append(sub.name)
        params = spec.args()
        env = variables[inst_idx]
        table_cols = {t.name: set(t.column_types()) for t in monolith.schema.tables}

        for stmt in sub.operations:
            time += 1
            if not _free_variables(stmt, table_cols[stmt.table]) <= set(env):
                continue  # references a variable its select never bound
            try:
                if not eval_expression(stmt.path_condition, params, env):
                    continue
            except _Unset:
                continue

            reads: set[Cell] = set()
            writes: set[Cell] = set()
            if stmt.kind is StatementKind.SELECT:
                predicate_reads.append(_PredicateRead(
                    time, spec.label, stmt.table, stmt.where, dict(params), dict(env)))
                matched = [s for s in db.live(stmt.table)
                           if eval_expression(stmt.where, params, env, s.values)]
                for s in matched:
                    for col in stmt.read_columns:
                        cell = (stmt.table, s.sid, col)
                        reads.add(cell)
                        log(cell, time, spec.label, "r")
                if matched:
                    first = matched[0]
                    for col, var in stmt.bindings:
                        env[var] = first.values[col]
            elif stmt.kind is StatementKind.UPDATE:
                for s in db.live(stmt.table):
                    if not eval_expression(stmt.where, params, env, s.values):
                        continue
                    for col, expr in stmt.write_columns:
                        s.values[col] = eval_expression(expr, params, env)
                        cell = (stmt.table, s.sid, col)
                        writes.add(cell)
                        log(cell, time, spec.label, "w")
            elif stmt.kind is StatementKind.INSERT:
                table = monolith.schema.table(stmt.table)
                values = {}
                listed = dict(stmt.write_columns)
                for c in table.columns:
                    if c.name in listed:
                        values[c.name] = eval_expression(listed[c.name], params, env)
                    else:
                        values[c.name] = db.fresh_value(c.type)
                slot = db.insert(stmt.table, values)
                births.append(_RowBirth(time, spec.label, stmt.table, dict(values)))
                for c in table.columns:
                    cell = (stmt.table, slot.sid, c.name)
                    writes.add(cell)
                    log(cell, time, spec.label, "w")
            else:  # delete
                table = monolith.schema.table(stmt.table)
                for s in db.live(stmt.table):
                    if not eval_expression(stmt.where, params, env, s.values):
                        continue
                    s.last = dict(s.values)
                    s.values = None
                    deaths.append(_RowDeath(time, spec.label, stmt.table, dict(s.last)))
                    for c in table.columns:
                        cell = (stmt.table, s.sid, c.name)
                        writes.add(cell)
                        log(cell, time, spec.label, "w")
            ops.append(ExecutedOp(time, spec.label, stmt.name, stmt.kind, stmt.table,
                                  frozenset(reads), frozenset(writes)))

    conflicts: list[ConflictEdge] = []
    seen: set[tuple[str, str, str, str]] = set()

    def add(src: str, dst: str, kind: str, table: str) -> None:
        if src == dst:
            return
        key = (src, dst, kind, table)
        if key not in seen:
            seen.add(key)
            conflicts.append(ConflictEdge(src, dst, kind, table))

    for cell, accesses in cell_log.items():
        for (t1, i1, k1), (t2, i2, k2) in itertools.combinations(accesses, 2):
            if k1 == "r" and k2 == "w":
                add(i1, i2, "RW", cell[0])
            elif k1 == "w" and k2 == "r":
                add(i1, i2, "WR", cell[0])
            elif k1 == "w" and k2 == "w":
                add(i1, i2, "WW", cell[0])
    # phantoms: a select misses a row inserted later, or trusts a delete
    for pr in predicate_reads:
        for b in births:
            if b.time > pr.time and b.table == pr.table and pr.matches(b.values):
                add(pr.instance, b.instance, "RW", pr.table)
        for d in deaths:
            if d.time < pr.time and d.table == pr.table and pr.matches(d.last):
                add(d.instance, pr.instance, "WR", pr.table)

    return Schedule(instances, tuple(block_order), tuple(block_names),
                    tuple(ops), tuple(conflicts))


def is_serializable(s: Schedule) -> bool:
    """True iff the instance-level conflict graph is acyclic."""
    adjacency: dict[str, set[str]] = {}
    for e in s.conflicts:
        adjacency.setdefault(e.src, set()).add(e.dst)
        adjacency.setdefault(e.dst, set())
    state: dict[str, int] = {}  # 1 = on stack, 2 = done

    def dfs(node: str) -> bool:
        state[node] = 1
        for nxt in adjacency.get(node, ()):
            mark = state.get(nxt)
            if mark == 1:
                return False
            if mark is None and not dfs(nxt):
                return False
        state[node] = 2
        return True

    return all(state.get(n) == 2 or dfs(n) for n in adjacency)


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------

def _valuations(f: FunctionalityAR, relevant: set[str], dom: ConcreteDomain) -> list[tuple]:
    axes = []
    for name, t in f.parameters:
        values = dom.values_for(t) if name in relevant else dom.values_for(t)[:1]
        axes.append([(name, v) for v in values])
    return [tuple(combo) for combo in itertools.product(*axes)] or [()]


def _interleavings(lengths: list[int], groups: list[int]) -> Iterator[tuple[int, ...]]:
    """Merges of the block sequences; instances with equal `groups` tags are
    interchangeable, so only the variant where they start in index order is
    produced."""
    total = sum(lengths)
    progress = [0] * len(lengths)
    order: list[int] = []

    def allowed(j: int) -> bool:
        if progress[j] >= lengths[j]:
            return False
        if progress[j] == 0:
            for i in range(j):
                if groups[i] == groups[j] and progress[i] == 0:
                    return False
        return True

    def rec() -> Iterator[tuple[int, ...]]:
        if len(order) == total:
            yield tuple(order)
            return
        for j in range(len(lengths)):
            if allowed(j):
                progress[j] += 1
                order.append(j)
                yield from rec()
                order.pop()
                progress[j] -= 1

    return rec()


def instance_sets(
    m: MicroservicesAR, subset: tuple[str, ...], dom: ConcreteDomain
) -> Iterator[tuple[InstanceSpec, ...]]:
    """All assignments of valuations to instances, up to renaming of the
    instances of one functionality (combinations with replacement)."""
    relevant = relevant_parameters(m.monolith, subset)
    per_functionality = []
    for fname in subset:
        f = m.monolith.functionality(fname)
        vals = _valuations(f, relevant[fname], dom)
        count = dom.instances_per_functionality
        per_functionality.append([
            combo for combo in itertools.combinations_with_replacement(vals, count)
        ])
    for choice in itertools.product(*per_functionality):
        specs: list[InstanceSpec] = []
        for fname, valuations in zip(subset, choice):
            for i, valuation in enumerate(valuations):
                specs.append(InstanceSpec(fname, i, valuation))
        yield tuple(specs)


def enumerate_schedules(
    m: MicroservicesAR,
    subset: tuple[str, ...],
    dom: ConcreteDomain,
    bound: Optional[int] = None,
) -> Iterator[Schedule]:
    """Execute every canonical schedule; stops after `bound` schedules."""
    produced = 0
    for instances in instance_sets(m, subset, dom):
        lengths = [len(m.of_functionality(s.functionality)) for s in instances]
        tags: dict[tuple, int] = {}
        groups = []
        for s in instances:
            key = (s.functionality, s.valuation)
            groups.append(tags.setdefault(key, len(tags)))
        for order in _interleavings(lengths, groups):
            if bound is not None and produced >= bound:
                return
            produced += 1
            yield execute_schedule(m, instances, order, dom)


@dataclass
class OracleVerdict:
    anomalous: bool
    partial: bool
    schedules_checked: int
    witness: Optional[Schedule] = None

    def __bool__(self) -> bool:
        return self.anomalous


def oracle_has_anomaly(
    m: MicroservicesAR,
    subset: tuple[str, ...],
    dom: Optional[ConcreteDomain] = None,
    bound: Optional[int] = None,
) -> OracleVerdict:
    """True iff some enumerated schedule is non-serializable.

    Stops at the first witness. A false verdict with the bound exhausted while
    schedules remain is tagged partial (best effort only).
    """
    dom = dom or ConcreteDomain()
    checked = 0
    stream = enumerate_schedules(m, subset, dom)
    for schedule in stream:
        checked += 1
        if not is_serializable(schedule):
            return OracleVerdict(True, False, checked, schedule)
        if bound is not None and checked >= bound:
            more = next(stream, None) is not None
            return OracleVerdict(False, more, checked)
    return OracleVerdict(False, False, checked)
