"""Ground SMT-LIB2 encoding of bounded anomaly search for one subset.

The problem talks about mcl operation-instance constants o_1..o_mcl. Each
carries an operation name (which statement it runs), a parent sub-transaction
instance, an original functionality instance, a microservice, and an integer
timestamp. Uninterpreted sorts stand for instances; enumerated datatypes for
the name universes. Arbitration is tied directly to timestamps, visibility
implies arbitration, and intra-microservice visibility is closed under
same-transaction membership and arbitration, which makes every single
microservice serializable while services stay independent of each other.
A satisfying model is a dependency cycle of length 3..mcl whose first edge
stays inside one functionality instance and whose remaining edges are
feasible data conflicts, i.e. a concrete anomaly the decomposition enables.

Dependency-edge feasibility is value-blind on updates (an update that moves
a row into or out of a predicate without touching the read columns is not
modeled); what is modeled: column overlap plus joint satisfiability of both
WHERE clauses over one shared symbolic row, with inserted rows pinned to
their VALUES expressions, all over per-instance parameter symbols shared by
every operation of the same functionality instance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from .ar import (
    ArType,
    ArError,
    Binary,
    Expression,
    FunctionalityAR,
    Param,
    Statement,
    StatementKind,
    TRUE,
    TypeContext,
    Unary,
    Value,
    Variable,
    typecheck,
    walk,
)
from .chopper import MicroservicesAR


class EncodeError(ArError):
    """The requested combination cannot be encoded."""


_SMT_TYPE = {
    ArType.INT: "Int",
    ArType.REAL: "Real",
    ArType.BOOLEAN: "Bool",
    ArType.STRING: "Str",
}

KIND_PREDICATES = ("ST", "SOT", "WR", "RW", "WW")
DEPENDENCY_PREDICATES = ("WR", "RW", "WW")


# ---------------------------------------------------------------------------
# Name universe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NameUniverse:
    """Static name sets and oname -> owner maps for one subset."""

    onames: tuple[str, ...]
    tnames: tuple[str, ...]
    fnames: tuple[str, ...]
    mnames: tuple[str, ...]
    functionality_of: dict[str, str]
    sub_transaction_of: dict[str, str]
    microservice_of: dict[str, str]
    is_update: dict[str, bool]
    statement_of: dict[str, Statement]
    position: dict[str, int]  # program-order index within the functionality


def name_universe(m: MicroservicesAR, subset: Optional[tuple[str, ...]] = None) -> NameUniverse:
    """Collect names for the given functionalities (all of them by default)."""
    wanted = tuple(subset) if subset is not None else tuple(
        f.name for f in m.monolith.functionalities)
    for fname in wanted:
        m.monolith.functionality(fname)  # raises KeyError on unknown names
    onames: list[str] = []
    tnames: list[str] = []
    mnames: list[str] = []
    func_of: dict[str, str] = {}
    sub_of: dict[str, str] = {}
    ms_of: dict[str, str] = {}
    is_upd: dict[str, bool] = {}
    stmt_of: dict[str, Statement] = {}
    position: dict[str, int] = {}
    for fname in wanted:
        pos = 0
        for sub in m.of_functionality(fname):
            if sub.name not in tnames:
                tnames.append(sub.name)
            if sub.microservice not in mnames:
                mnames.append(sub.microservice)
            for op in sub.operations:
                onames.append(op.name)
                func_of[op.name] = fname
                sub_of[op.name] = sub.name
                ms_of[op.name] = sub.microservice
                is_upd[op.name] = op.is_update
                stmt_of[op.name] = op
                position[op.name] = pos
                pos += 1
    return NameUniverse(tuple(onames), tuple(tnames), tuple(wanted), tuple(mnames),
                        func_of, sub_of, ms_of, is_upd, stmt_of, position)


# ---------------------------------------------------------------------------
# Static conflict table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConflictCase:
    """One feasible ordered dependency: `first` happens before `second`.

    For WR the writer is first, for RW the reader is first, for WW both
    write with the earlier one first. `phantom` marks a predicate-select
    against an insert or delete.
    """

    kind: str  # WR | RW | WW
    first: str
    second: str
    table: str
    phantom: bool


@dataclass(frozen=True)
class StaticConflictTable:
    cases: tuple[ConflictCase, ...]
    index: dict[tuple[str, str, str], ConflictCase] = field(repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "index", {(c.kind, c.first, c.second): c for c in self.cases})

    def lookup(self, kind: str, first: str, second: str) -> Optional[ConflictCase]:
        return self.index.get((kind, first, second))

    def for_kind(self, kind: str, onames: tuple[str, ...]) -> list[ConflictCase]:
        wanted = set(onames)
        return [c for c in self.cases
                if c.kind == kind and c.first in wanted and c.second in wanted]


def _written_columns(stmt: Statement, all_columns: tuple[str, ...]) -> set[str]:
    if stmt.kind is StatementKind.UPDATE:
        return set(stmt.written_column_names())
    if stmt.kind in (StatementKind.INSERT, StatementKind.DELETE):
        return set(all_columns)  # the whole row appears or disappears
    return set()


def build_conflict_table(m: MicroservicesAR) -> StaticConflictTable:
    """Decide, for every ordered statement pair, which dependencies can exist.

    The first statement of a case is the earlier one. Slot-based row life
    cycle rules out writes after a delete and writes before an insert: no
    (delete, _) or (_, insert) write-write cases, and no insert-insert or
    delete-delete (two inserts make distinct rows; a dead row cannot die).
    """
    universe = name_universe(m)
    schema = m.monolith.schema
    cases: list[ConflictCase] = []
    statements = [(name, universe.statement_of[name]) for name in universe.onames]
    for (na, sa), (nb, sb) in itertools.product(statements, repeat=2):
        if sa.table != sb.table:
            continue
        cols = tuple(schema.table(sa.table).column_types())
        wa, wb = _written_columns(sa, cols), _written_columns(sb, cols)
        a_sel = sa.kind is StatementKind.SELECT
        b_sel = sb.kind is StatementKind.SELECT
        if not a_sel and b_sel and wa & set(sb.read_columns):
            phantom = sa.kind in (StatementKind.INSERT, StatementKind.DELETE)
            cases.append(ConflictCase("WR", na, nb, sa.table, phantom))
        if a_sel and not b_sel and set(sa.read_columns) & wb:
            phantom = sb.kind in (StatementKind.INSERT, StatementKind.DELETE)
            cases.append(ConflictCase("RW", na, nb, sa.table, phantom))
        if not a_sel and not b_sel and wa & wb:
            if sa.kind is StatementKind.DELETE or sb.kind is StatementKind.INSERT:
                continue
            if sa.kind is StatementKind.INSERT and sb.kind is StatementKind.INSERT:
                continue
            cases.append(ConflictCase("WW", na, nb, sa.table, False))
    return StaticConflictTable(tuple(cases))


# ---------------------------------------------------------------------------
# Expression -> SMT term
# ---------------------------------------------------------------------------

def _smt_int(n: int) -> str:
    return str(n) if n >= 0 else f"(- {-n})"

def _smt_real(x: float) -> str:
    num, den = float(abs(x)).as_integer_ratio()
    body = f"{num}.0" if den == 1 else f"(/ {num}.0 {den}.0)"
    return body if x >= 0 else f"(- {body})"


class _TermBuilder:
    """Turns expressions into ground SMT terms for one operation instance."""

    def __init__(self, strings: dict[str, str]):
        self.strings = strings

    def env(self, f: FunctionalityAR, idx: int) -> tuple[dict, dict]:
        params = {n: f"p!{idx}!{f.name}!{n}" for n, _ in f.parameters}
        variables = {v: f"v!{idx}!{f.name}!{v}" for v in _bound_variables(f)}
        return params, variables

    def term(self, expr: Expression, ctx: TypeContext,
             colmap: dict[str, str], params: dict[str, str], variables: dict[str, str]) -> str:
        if isinstance(expr, Value):
            if expr.type is ArType.BOOLEAN:
                return "true" if expr.literal else "false"
            if expr.type is ArType.INT:
                return _smt_int(int(expr.literal))
            if expr.type is ArType.REAL:
                return _smt_real(float(expr.literal))
            return self.strings[str(expr.literal)]
        if isinstance(expr, Param):
            return params[expr.name]
        if isinstance(expr, Variable):
            if expr.name in colmap:
                return colmap[expr.name]
            return variables[expr.name]
        if isinstance(expr, Unary):
            inner = self.term(expr.operand, ctx, colmap, params, variables)
            return f"(- {inner})" if expr.op == "-" else f"(not {inner})"
        if isinstance(expr, Binary):
            lhs = self.term(expr.lhs, ctx, colmap, params, variables)
            rhs = self.term(expr.rhs, ctx, colmap, params, variables)
            op = expr.op
            if op == "!=":
                return f"(not (= {lhs} {rhs}))"
            if op == "/" and typecheck(expr.lhs, ctx) is ArType.INT:
                return f"(div {lhs} {rhs})"
            return f"({op} {lhs} {rhs})"
        raise EncodeError(f"cannot encode {expr!r}")


def _bound_variables(f: FunctionalityAR) -> dict[str, ArType]:
    out: dict[str, ArType] = {}
    for stmt in f.statements:
        for col, var in stmt.bindings:
            out[var] = ArType.INT  # refined by caller with schema types
    return out


def _variable_types(f: FunctionalityAR, m: MicroservicesAR) -> dict[str, ArType]:
    out: dict[str, ArType] = {}
    for stmt in f.statements:
        col_types = m.monolith.schema.table(stmt.table).column_types()
        for col, var in stmt.bindings:
            out[var] = col_types[col]
    return out


def _string_literals(m: MicroservicesAR, fnames: tuple[str, ...]) -> list[str]:
    seen: list[str] = []
    for fname in fnames:
        f = m.monolith.functionality(fname)
        for stmt in f.statements:
            exprs = [stmt.where, stmt.path_condition] + [e for _, e in stmt.write_columns]
            for expr in exprs:
                for e in walk(expr):
                    if isinstance(e, Value) and e.type is ArType.STRING:
                        if str(e.literal) not in seen:
                            seen.append(str(e.literal))
    return seen


# ---------------------------------------------------------------------------
# Combination problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CombinationProblem:
    subset: tuple[str, ...]
    mcl: int
    script: str
    universe: NameUniverse
    constants: tuple[str, ...]   # o_1..o_mcl
    cycle_flags: tuple[str, ...]  # cyc_3..cyc_mcl
    op_const: dict[str, str]     # oname -> OName constructor
    participation: bool
    trivially_unsat: bool = False


def problem_filename(subset: tuple[str, ...]) -> str:
    return "comb_" + "_".join(sorted(subset)) + ".smt2"


class _Script:
    def __init__(self) -> None:
        self.lines: list[str] = []

    def add(self, line: str) -> None:
        self.lines.append(line)

    def comment(self, text: str) -> None:
        self.lines.append(f"; {text}")

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def encode_combination(
    m: MicroservicesAR,
    ct: StaticConflictTable,
    subset: tuple[str, ...],
    mcl: int,
    participation: bool = True,
) -> CombinationProblem:
    """Emit the ground problem for one functionality subset.

    With `participation` on (the divide-and-conquer mode), every subset
    functionality must own at least one cycle operation, so a cycle found
    here involves exactly these functionalities. The whole-program mode
    turns that off and ignores the size precondition.
    """
    if mcl < 3:
        raise EncodeError(f"mcl must be at least 3, got {mcl}")
    subset = tuple(subset)
    if participation and len(subset) > mcl - 1:
        raise EncodeError(
            f"a cycle of {mcl} operations cannot involve {len(subset)} functionalities")
    universe = name_universe(m, subset)
    consts = tuple(f"o_{i}" for i in range(1, mcl + 1))
    flags = tuple(f"cyc_{k}" for k in range(3, mcl + 1))
    op_const = {n: f"op_{n}" for n in universe.onames}

    if not universe.onames:
        return CombinationProblem(subset, mcl, "(assert false)\n", universe, consts,
                                  (), {}, participation, trivially_unsat=True)

    strings = {s: f"str!{i}" for i, s in enumerate(_string_literals(m, subset))}
    builder = _TermBuilder(strings)
    funcs = {fname: m.monolith.functionality(fname) for fname in subset}
    var_types = {fname: _variable_types(f, m) for fname, f in funcs.items()}
    schema = m.monolith.schema

    def ctx_for(stmt: Statement, fname: str) -> TypeContext:
        return TypeContext(
            columns=schema.table(stmt.table).column_types(),
            params=funcs[fname].param_types(),
            variables=var_types[fname],
        )

    out = _Script()
    out.comment(f"subset: {', '.join(subset)}; cycle length 3..{mcl}")

    # sorts and name datatypes
    out.add("(declare-sort O 0)")
    out.add("(declare-sort T 0)")
    out.add("(declare-sort F 0)")
    if strings:
        out.add("(declare-sort Str 0)")
    out.add("(declare-datatypes () ((OName " +
            " ".join(f"({op_const[n]})" for n in universe.onames) + ")))")
    out.add("(declare-datatypes () ((TName " +
            " ".join(f"(tx_{t})" for t in universe.tnames) + ")))")
    out.add("(declare-datatypes () ((FName " +
            " ".join(f"(fn_{f})" for f in universe.fnames) + ")))")
    out.add("(declare-datatypes () ((MName " +
            " ".join(f"(ms_{s})" for s in universe.mnames) + ")))")

    # functions over operation instances
    out.add("(declare-fun otime (O) Int)")
    out.add("(declare-fun oname (O) OName)")
    out.add("(declare-fun parent (O) T)")
    out.add("(declare-fun origtx (O) F)")
    out.add("(declare-fun tname (T) TName)")
    out.add("(declare-fun fname (F) FName)")
    out.add("(declare-fun mname (O) MName)")
    out.add("(declare-fun is_update (O) Bool)")
    for pred in ("ST", "SOT", "WR", "RW", "WW", "vis", "ar", "D", "X"):
        out.add(f"(declare-fun {pred} (O O) Bool)")

    for c in consts:
        out.add(f"(declare-const {c} O)")
    for s, sym in strings.items():
        out.add(f"(declare-const {sym} Str)")
    if len(strings) > 1:
        out.add(f"(assert (distinct {' '.join(strings.values())}))")

    # per-instance parameter and bound-variable symbols
    for i in range(1, mcl + 1):
        for fname, f in funcs.items():
            for pname, ptype in f.parameters:
                out.add(f"(declare-const p!{i}!{fname}!{pname} {_SMT_TYPE[ptype]})")
            for vname, vtype in var_types[fname].items():
                out.add(f"(declare-const v!{i}!{fname}!{vname} {_SMT_TYPE[vtype]})")

    pairs = [(a, b) for a in consts for b in consts if a != b]

    # operations of one functionality instance share one argument valuation
    out.comment("same functionality instance => same arguments")
    for a, b in itertools.combinations(consts, 2):
        i, j = a.split("_")[1], b.split("_")[1]
        eqs = []
        for fname, f in funcs.items():
            for pname, _ in f.parameters:
                eqs.append(f"(= p!{i}!{fname}!{pname} p!{j}!{fname}!{pname})")
            for vname in var_types[fname]:
                eqs.append(f"(= v!{i}!{fname}!{vname} v!{j}!{fname}!{vname})")
        if eqs:
            out.add(f"(assert (=> (= (origtx {a}) (origtx {b})) (and {' '.join(eqs)})))")

    # name bindings: each operation name pins sub-transaction, functionality,
    # microservice; update flag equals membership in the writer-name set
    out.comment("static name bindings")
    writers = [n for n in universe.onames if universe.is_update[n]]
    for c in consts:
        for n in universe.onames:
            out.add(
                f"(assert (=> (= (oname {c}) {op_const[n]})"
                f" (and (= (tname (parent {c})) tx_{universe.sub_transaction_of[n]})"
                f" (= (fname (origtx {c})) fn_{universe.functionality_of[n]})"
                f" (= (mname {c}) ms_{universe.microservice_of[n]}))))")
        if writers:
            upd = " ".join(f"(= (oname {c}) {op_const[n]})" for n in writers)
            out.add(f"(assert (= (is_update {c}) (or {upd})))")
        else:
            out.add(f"(assert (not (is_update {c})))")

    # instance structure: same parent means same functionality instance; one
    # instance runs a sub-transaction once and a statement once
    out.comment("instance identity")
    for a, b in itertools.combinations(consts, 2):
        out.add(f"(assert (=> (= (parent {a}) (parent {b})) (= (origtx {a}) (origtx {b}))))")
        out.add(f"(assert (=> (and (= (origtx {a}) (origtx {b}))"
                f" (= (tname (parent {a})) (tname (parent {b}))))"
                f" (= (parent {a}) (parent {b}))))")
        out.add(f"(assert (=> (and (= (origtx {a}) (origtx {b}))"
                f" (= (oname {a}) (oname {b}))) (= {a} {b})))")
        out.add(f"(assert (=> (= (otime {a}) (otime {b})) (= {a} {b})))")

    # arbitration is the timestamp order; visibility is a suborder of it
    out.comment("time, arbitration, visibility")
    for a in consts:
        for b in consts:
            out.add(f"(assert (= (ar {a} {b}) (< (otime {a}) (otime {b}))))")
        out.add(f"(assert (not (vis {a} {a})))")
    for a, b in pairs:
        out.add(f"(assert (=> (vis {a} {b}) (ar {a} {b})))")
        out.add(f"(assert (=> (WR {a} {b}) (vis {a} {b})))")
        out.add(f"(assert (=> (WW {a} {b}) (ar {a} {b})))")
        out.add(f"(assert (=> (RW {a} {b}) (not (vis {b} {a}))))")

    # program order inside one functionality instance
    out.comment("program order")
    stmt_pairs = []
    for fname, f in funcs.items():
        names = [s.name for s in f.statements]
        for x, y in itertools.combinations(range(len(names)), 2):
            stmt_pairs.append((names[x], names[y]))
    for a, b in pairs:
        rules = " ".join(
            f"(=> (and (= (oname {a}) {op_const[sa]}) (= (oname {b}) {op_const[sb]}))"
            f" (< (otime {a}) (otime {b})))"
            for sa, sb in stmt_pairs)
        if rules:
            out.add(f"(assert (=> (or (= (parent {a}) (parent {b}))"
                    f" (= (origtx {a}) (origtx {b}))) (and {rules})))")

    # edge kinds: same sub-transaction instance, same functionality instance,
    # dependency, and the cycle-step relation
    out.comment("edge definitions")
    for a in consts:
        for b in consts:
            out.add(f"(assert (= (ST {a} {b}) (= (parent {a}) (parent {b}))))")
            out.add(f"(assert (= (SOT {a} {b}) (and (= (origtx {a}) (origtx {b}))"
                    f" (not (= (parent {a}) (parent {b}))))))")
    for a, b in pairs:
        out.add(f"(assert (=> (D {a} {b}) (and (not (or (ST {a} {b}) (SOT {a} {b})))"
                f" (or (WW {a} {b}) (WR {a} {b}) (RW {a} {b})))))")
        out.add(f"(assert (=> (X {a} {b}) (or (ST {a} {b}) (SOT {a} {b}) (D {a} {b}))))")

    # inside one microservice: whatever one operation of a transaction sees or
    # exposes, its siblings do too, and arbitration implies visibility --
    # together this is serializability per service, nothing across services
    out.comment("per-microservice consistency")
    for a, b in pairs:
        out.add(f"(assert (=> (and (ar {a} {b}) (= (mname {a}) (mname {b})))"
                f" (vis {a} {b})))")
    for a, b, c in itertools.product(consts, repeat=3):
        if a == b:
            continue
        out.add(f"(assert (=> (and (ST {a} {b}) (vis {a} {c}) (= (mname {a}) (mname {c})))"
                f" (vis {b} {c})))")
        out.add(f"(assert (=> (and (ST {a} {b}) (vis {c} {a}) (= (mname {a}) (mname {c})))"
                f" (vis {c} {b})))")

    # path conditions hold for whichever statement an instance runs
    out.comment("path conditions")
    for c in consts:
        i = c.split("_")[1]
        for n in universe.onames:
            stmt = universe.statement_of[n]
            if stmt.path_condition == TRUE:
                continue
            fname = universe.functionality_of[n]
            params, variables = builder.env(funcs[fname], i)
            term = builder.term(stmt.path_condition, ctx_for(stmt, fname), {}, params, variables)
            out.add(f"(assert (=> (= (oname {c}) {op_const[n]}) {term}))")

    # dependency feasibility: an asserted edge needs a concrete row on which
    # both operations act, under the instances' own arguments
    out.comment("dependency feasibility")
    row_counter = itertools.count()
    row_decls: list[str] = []
    guard_asserts: list[str] = []

    def row_condition(stmt: Statement, fname: str, idx: str, colmap: dict[str, str]) -> str:
        params, variables = builder.env(funcs[fname], idx)
        ctx = ctx_for(stmt, fname)
        if stmt.kind is StatementKind.INSERT:
            eqs = [
                f"(= {colmap[col]} {builder.term(expr, ctx, {}, params, variables)})"
                for col, expr in stmt.write_columns if col in colmap
            ]
            return f"(and {' '.join(eqs)})" if eqs else "true"
        if stmt.where == TRUE:
            return "true"
        return builder.term(stmt.where, ctx, colmap, params, variables)

    def referenced_row_columns(stmt: Statement, table: str) -> set[str]:
        if stmt.kind is StatementKind.INSERT:
            return set(stmt.written_column_names())
        cols = set(schema.table(table).column_types())
        return {e.name for e in walk(stmt.where) if isinstance(e, Variable) and e.name in cols}

    for a, b in pairs:
        ia, ib = a.split("_")[1], b.split("_")[1]
        for kind in DEPENDENCY_PREDICATES:
            disjuncts = []
            for case in ct.for_kind(kind, universe.onames):
                sa = universe.statement_of[case.first]
                sb = universe.statement_of[case.second]
                cols = referenced_row_columns(sa, case.table) | referenced_row_columns(sb, case.table)
                rid = next(row_counter)
                colmap = {col: f"row!{rid}!{col}" for col in sorted(cols)}
                col_types = schema.table(case.table).column_types()
                for col, sym in colmap.items():
                    row_decls.append(f"(declare-const {sym} {_SMT_TYPE[col_types[col]]})")
                fa = universe.functionality_of[case.first]
                fb = universe.functionality_of[case.second]
                disjuncts.append(
                    "(and "
                    f"(= (oname {a}) {op_const[case.first]}) "
                    f"(= (oname {b}) {op_const[case.second]}) "
                    f"{row_condition(sa, fa, ia, colmap)} "
                    f"{row_condition(sb, fb, ib, colmap)})")
            if disjuncts:
                guard_asserts.append(f"(assert (=> ({kind} {a} {b}) (or {' '.join(disjuncts)})))")
            else:
                guard_asserts.append(f"(assert (not ({kind} {a} {b})))")
    for c in consts:
        for kind in DEPENDENCY_PREDICATES:
            guard_asserts.append(f"(assert (not ({kind} {c} {c})))")
    for line in row_decls:
        out.add(line)
    for line in guard_asserts:
        out.add(line)

    # cycle shapes: one same-transaction edge, then dependency edges with
    # arbitrary linking steps in between, closing back on the start
    out.comment("cycle assertions")
    for k in range(3, mcl + 1):
        cyc = f"cyc_{k}"
        members = consts[:k]
        parts = [f"(distinct {' '.join(members)})"]
        parts.append(f"(or (ST {members[0]} {members[1]}) (SOT {members[0]} {members[1]}))")
        parts.append(f"(D {members[1]} {members[2]})")
        for t in range(2, k - 1):
            parts.append(f"(X {members[t]} {members[t + 1]})")
        parts.append(f"(D {members[k - 1]} {members[0]})")
        if participation:
            for fname in subset:
                owns = " ".join(f"(= (fname (origtx {c})) fn_{fname})" for c in members)
                parts.append(f"(or {owns})")
        out.add(f"(declare-const {cyc} Bool)")
        out.add(f"(assert (=> {cyc} (and {' '.join(parts)})))")
    if len(flags) == 1:
        out.add(f"(assert {flags[0]})")
    else:
        out.add(f"(assert (or {' '.join(flags)}))")

    return CombinationProblem(subset, mcl, out.text(), universe, consts, flags,
                              op_const, participation)
