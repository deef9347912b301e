"""Abstract representation of a monolith's data model and functionalities.

The analyzer works on a small relational core: a schema of typed tables, and
functionalities given as ordered lists of parameterized SQL statements
(select / update / insert / delete, one table per statement). Expressions
appear in WHERE clauses, SET/VALUES right-hand sides and per-statement path
conditions. This module defines those types, the expression type checker and
pretty printers used for round-trip tests and for dumping the chopped program.

Name resolution inside expressions is positional: a bare identifier names a
column of the statement's own table when one matches, otherwise a variable
bound by an earlier select of the same functionality. `:name` always names a
functionality parameter. SET/VALUES expressions must not reference columns
(that would be a read-modify-write inside one statement, which is rejected).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional, Union


class ArType(str, Enum):
    """Column / parameter / expression types supported by the representation."""

    INT = "int"
    REAL = "real"
    STRING = "string"
    BOOLEAN = "boolean"


NUMERIC_TYPES = (ArType.INT, ArType.REAL)


class ArError(Exception):
    """Base class for representation-level validation errors."""


class TypeCheckError(ArError):
    """An expression or statement fails type checking."""


class ValidationError(ArError):
    """A structural invariant of the representation is violated."""


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Value:
    """Literal constant. `literal` is int, float, str or bool per `type`."""

    type: ArType
    literal: object

    def __repr__(self) -> str:
        return f"Value({self.type.value}, {self.literal!r})"


@dataclass(frozen=True)
class Variable:
    """Bare identifier: a column of the statement's table or a bound variable."""

    name: str


@dataclass(frozen=True)
class Param:
    """Functionality parameter reference, written `:name` in source."""

    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "-" | "not"
    operand: "Expression"


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / = != < <= > >= and or
    lhs: "Expression"
    rhs: "Expression"


Expression = Union[Value, Variable, Param, Unary, Binary]

TRUE = Value(ArType.BOOLEAN, True)

ARITH_OPS = {"+", "-", "*", "/"}
EQUALITY_OPS = {"=", "!="}
ORDER_OPS = {"<", "<=", ">", ">="}
COMPARISON_OPS = EQUALITY_OPS | ORDER_OPS
BOOLEAN_OPS = {"and", "or"}


@dataclass(frozen=True)
class TypeContext:
    """Name environment for type checking one expression.

    `columns` holds the statement's own table columns (empty for path
    conditions and SET/VALUES expressions), `params` the functionality
    parameters, `variables` the select-bound variables in scope.
    """

    columns: dict[str, ArType] = field(default_factory=dict)
    params: dict[str, ArType] = field(default_factory=dict)
    variables: dict[str, ArType] = field(default_factory=dict)


def typecheck(expr: Expression, ctx: TypeContext) -> ArType:
    """Return the type of `expr` under `ctx`, raising TypeCheckError."""
    if isinstance(expr, Value):
        return expr.type
    if isinstance(expr, Param):
        try:
            return ctx.params[expr.name]
        except KeyError:
            raise TypeCheckError(f"unknown parameter :{expr.name}") from None
    if isinstance(expr, Variable):
        if expr.name in ctx.columns:
            return ctx.columns[expr.name]
        if expr.name in ctx.variables:
            return ctx.variables[expr.name]
        raise TypeCheckError(f"unknown column or variable '{expr.name}'")
    if isinstance(expr, Unary):
        inner = typecheck(expr.operand, ctx)
        if expr.op == "-":
            if inner not in NUMERIC_TYPES:
                raise TypeCheckError(f"unary '-' needs a numeric operand, got {inner.value}")
            return inner
        if expr.op == "not":
            if inner is not ArType.BOOLEAN:
                raise TypeCheckError(f"'not' needs a boolean operand, got {inner.value}")
            return ArType.BOOLEAN
        raise TypeCheckError(f"unknown unary operator '{expr.op}'")
    if isinstance(expr, Binary):
        lt = typecheck(expr.lhs, ctx)
        rt = typecheck(expr.rhs, ctx)
        if expr.op in ARITH_OPS:
            if lt not in NUMERIC_TYPES or rt not in NUMERIC_TYPES:
                raise TypeCheckError(f"arithmetic '{expr.op}' needs numeric operands, got {lt.value} and {rt.value}")
            if lt is not rt:
                raise TypeCheckError(f"mixed int/real arithmetic is not supported ({lt.value} {expr.op} {rt.value})")
            return lt
        if expr.op in EQUALITY_OPS:
            if lt is not rt:
                raise TypeCheckError(f"'{expr.op}' compares values of different types ({lt.value} vs {rt.value})")
            return ArType.BOOLEAN
        if expr.op in ORDER_OPS:
            if lt is not rt:
                raise TypeCheckError(f"'{expr.op}' compares values of different types ({lt.value} vs {rt.value})")
            if lt not in NUMERIC_TYPES:
                raise TypeCheckError(f"order comparison '{expr.op}' is not defined for {lt.value} values")
            return ArType.BOOLEAN
        if expr.op in BOOLEAN_OPS:
            if lt is not ArType.BOOLEAN or rt is not ArType.BOOLEAN:
                raise TypeCheckError(f"'{expr.op}' needs boolean operands, got {lt.value} and {rt.value}")
            return ArType.BOOLEAN
        raise TypeCheckError(f"unknown binary operator '{expr.op}'")
    raise TypeCheckError(f"not an expression: {expr!r}")


def walk(expr: Expression) -> Iterator[Expression]:
    """Yield `expr` and every sub-expression."""
    yield expr
    if isinstance(expr, Unary):
        yield from walk(expr.operand)
    elif isinstance(expr, Binary):
        yield from walk(expr.lhs)
        yield from walk(expr.rhs)


def referenced_params(expr: Expression) -> set[str]:
    return {e.name for e in walk(expr) if isinstance(e, Param)}


def referenced_names(expr: Expression) -> set[str]:
    """Bare identifiers (columns or bound variables) used by `expr`."""
    return {e.name for e in walk(expr) if isinstance(e, Variable)}


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Column:
    name: str
    type: ArType


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[Column, ...]
    primary_key: tuple[str, ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(self.columns) == 0:
            raise ValidationError(f"table {self.name} has no columns")
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise ValidationError(f"table {self.name}: duplicate column {sorted(dupes)[0]!r}")
        if len(self.primary_key) == 0:
            raise ValidationError(f"table {self.name} has no PRIMARY KEY")
        for k in self.primary_key:
            if k not in names:
                raise ValidationError(f"table {self.name}: PRIMARY KEY column {k!r} does not exist")
        if len(set(self.primary_key)) != len(self.primary_key):
            raise ValidationError(f"table {self.name}: PRIMARY KEY lists a column twice")

    def column_types(self) -> dict[str, ArType]:
        return {c.name: c.type for c in self.columns}

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)


@dataclass(frozen=True)
class Schema:
    tables: tuple[Table, ...]

    def __post_init__(self) -> None:
        names = [t.name for t in self.tables]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise ValidationError(f"duplicate table {sorted(dupes)[0]!r}")

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def table_names(self) -> list[str]:
        return [t.name for t in self.tables]

    def __contains__(self, name: str) -> bool:
        return any(t.name == name for t in self.tables)


# ---------------------------------------------------------------------------
# Statements and functionalities
# ---------------------------------------------------------------------------

class StatementKind(str, Enum):
    SELECT = "select"
    UPDATE = "update"
    INSERT = "insert"
    DELETE = "delete"

    @property
    def is_write(self) -> bool:
        return self is not StatementKind.SELECT


@dataclass(frozen=True)
class Statement:
    """One parsed SQL statement of a functionality.

    read_columns is the select list (select only). write_columns maps written
    column names to their right-hand-side expressions (update SET / insert
    VALUES). bindings maps result columns to variable names (select only).
    where defaults to the constant true, meaning a whole-table predicate.
    """

    name: str
    kind: StatementKind
    table: str
    read_columns: tuple[str, ...] = ()
    write_columns: tuple[tuple[str, Expression], ...] = ()
    where: Expression = TRUE
    bindings: tuple[tuple[str, str], ...] = ()  # (column, variable)
    path_condition: Expression = TRUE

    @property
    def is_update(self) -> bool:
        """Writer flag, true for update/insert/delete."""
        return self.kind.is_write

    def written_column_names(self) -> tuple[str, ...]:
        return tuple(c for c, _ in self.write_columns)

    def write_expr(self, column: str) -> Expression:
        for c, e in self.write_columns:
            if c == column:
                return e
        raise KeyError(column)


@dataclass(frozen=True)
class FunctionalityAR:
    """A monolith functionality: name, typed parameters, ordered statements."""

    name: str
    parameters: tuple[tuple[str, ArType], ...]
    statements: tuple[Statement, ...]

    def param_types(self) -> dict[str, ArType]:
        return dict(self.parameters)


@dataclass(frozen=True)
class MonolithAR:
    schema: Schema
    functionalities: tuple[FunctionalityAR, ...]

    def functionality(self, name: str) -> FunctionalityAR:
        for f in self.functionalities:
            if f.name == name:
                return f
        raise KeyError(name)

    def functionality_names(self) -> list[str]:
        return [f.name for f in self.functionalities]


@dataclass(frozen=True)
class DecompositionSpec:
    """Partition of the schema's tables into named microservice clusters."""

    clusters: tuple[tuple[str, tuple[str, ...]], ...]

    def microservice_names(self) -> list[str]:
        return [m for m, _ in self.clusters]

    def cluster(self, microservice: str) -> tuple[str, ...]:
        for m, tables in self.clusters:
            if m == microservice:
                return tables
        raise KeyError(microservice)

    def table_to_service(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for m, tables in self.clusters:
            for t in tables:
                out[t] = m
        return out

    @property
    def is_mono(self) -> bool:
        return sum(1 for _, tables in self.clusters if tables) <= 1


def validate_decomposition(d: DecompositionSpec, schema: Schema) -> None:
    """Check that `d` partitions the schema's table set exactly."""
    seen: dict[str, str] = {}
    names = [m for m, _ in d.clusters]
    dupes = {n for n in names if names.count(n) > 1}
    if dupes:
        raise ValidationError(f"microservice {sorted(dupes)[0]!r} declared twice")
    for m, tables in d.clusters:
        for t in tables:
            if t not in schema:
                raise ValidationError(f"microservice {m!r} lists unknown entity {t!r}")
            if t in seen:
                raise ValidationError(f"entity {t!r} assigned to both {seen[t]!r} and {m!r}")
            seen[t] = m
    missing = [t for t in schema.table_names() if t not in seen]
    if missing:
        raise ValidationError(f"entity {missing[0]!r} is not assigned to any microservice")


# ---------------------------------------------------------------------------
# Statement-level checking (used by the frontend after parsing)
# ---------------------------------------------------------------------------

def statement_context(
    schema: Schema,
    stmt: Statement,
    params: dict[str, ArType],
    variables: dict[str, ArType],
    with_columns: bool,
) -> TypeContext:
    cols = schema.table(stmt.table).column_types() if with_columns else {}
    return TypeContext(columns=cols, params=params, variables=variables)


def check_statement(
    schema: Schema,
    stmt: Statement,
    params: dict[str, ArType],
    variables: dict[str, ArType],
) -> dict[str, ArType]:
    """Validate one statement; return variables bound by it (select binds).

    `variables` holds the bindings visible before this statement. SET/VALUES
    expressions are checked without columns in scope; a name shadowed by a
    column of the target table is reported as an implicit update.
    """
    if stmt.table not in schema:
        raise ValidationError(f"statement {stmt.name}: unknown table {stmt.table!r}")
    table = schema.table(stmt.table)
    col_types = table.column_types()

    where_ctx = TypeContext(columns=col_types, params=params, variables=variables)
    if typecheck(stmt.where, where_ctx) is not ArType.BOOLEAN:
        raise TypeCheckError(f"statement {stmt.name}: WHERE clause is not boolean")
    if typecheck(stmt.path_condition, TypeContext(params=params, variables=variables)) is not ArType.BOOLEAN:
        raise TypeCheckError(f"statement {stmt.name}: path condition is not boolean")

    if stmt.kind is StatementKind.SELECT:
        if not stmt.read_columns:
            raise ValidationError(f"statement {stmt.name}: select list is empty")
        for c in stmt.read_columns:
            if c not in col_types:
                raise ValidationError(f"statement {stmt.name}: unknown column {c!r} in table {stmt.table}")
        if stmt.write_columns:
            raise ValidationError(f"statement {stmt.name}: select cannot write columns")
        new_vars: dict[str, ArType] = {}
        bound_cols: set[str] = set()
        for col, var in stmt.bindings:
            if col not in stmt.read_columns:
                raise ValidationError(f"statement {stmt.name}: bind of {col!r}, which is not selected")
            if col in bound_cols:
                raise ValidationError(f"statement {stmt.name}: column {col!r} bound twice")
            if var in variables or var in new_vars:
                raise ValidationError(f"statement {stmt.name}: variable {var!r} already bound")
            if any(var in t.column_types() for t in schema.tables):
                raise ValidationError(
                    f"statement {stmt.name}: variable {var!r} shadows a column name"
                )
            bound_cols.add(col)
            new_vars[var] = col_types[col]
        return new_vars

    if stmt.bindings:
        raise ValidationError(f"statement {stmt.name}: only select statements can bind variables")
    if stmt.read_columns:
        raise ValidationError(f"statement {stmt.name}: only select statements read columns")

    if stmt.kind in (StatementKind.UPDATE, StatementKind.INSERT):
        if not stmt.write_columns:
            raise ValidationError(f"statement {stmt.name}: no written columns")
        seen_cols: set[str] = set()
        for col, expr in stmt.write_columns:
            if col not in col_types:
                raise ValidationError(f"statement {stmt.name}: unknown column {col!r} in table {stmt.table}")
            if col in seen_cols:
                raise ValidationError(f"statement {stmt.name}: column {col!r} written twice")
            seen_cols.add(col)
            for name in referenced_names(expr):
                if name in col_types and name not in variables:
                    raise ValidationError(
                        f"statement {stmt.name}: expression for {col!r} reads column {name!r}"
                        " (implicit updates are unsupported)"
                    )
            value_ctx = TypeContext(params=params, variables=variables)
            et = typecheck(expr, value_ctx)
            if et is not col_types[col]:
                raise TypeCheckError(
                    f"statement {stmt.name}: column {col!r} is {col_types[col].value}"
                    f" but the expression is {et.value}"
                )
    else:  # delete
        if stmt.write_columns:
            raise ValidationError(f"statement {stmt.name}: delete takes no SET/VALUES")

    if stmt.kind is StatementKind.INSERT and stmt.where is not TRUE and stmt.where != TRUE:
        raise ValidationError(f"statement {stmt.name}: insert takes no WHERE clause")
    return {}


def check_functionality(schema: Schema, f: FunctionalityAR) -> None:
    params = f.param_types()
    if len(params) != len(f.parameters):
        raise ValidationError(f"functionality {f.name}: duplicate parameter name")
    variables: dict[str, ArType] = {}
    stmt_names: set[str] = set()
    for stmt in f.statements:
        if stmt.name in stmt_names:
            raise ValidationError(f"functionality {f.name}: duplicate statement name {stmt.name!r}")
        stmt_names.add(stmt.name)
        variables.update(check_statement(schema, stmt, params, variables))


def check_monolith(m: MonolithAR) -> None:
    fnames = [f.name for f in m.functionalities]
    dupes = {n for n in fnames if fnames.count(n) > 1}
    if dupes:
        raise ValidationError(f"duplicate functionality name {sorted(dupes)[0]!r}")
    all_stmt_names: dict[str, str] = {}
    for f in m.functionalities:
        check_functionality(m.schema, f)
        for stmt in f.statements:
            if stmt.name in all_stmt_names:
                raise ValidationError(
                    f"statement name {stmt.name!r} used by both"
                    f" {all_stmt_names[stmt.name]!r} and {f.name!r}"
                )
            all_stmt_names[stmt.name] = f.name


# ---------------------------------------------------------------------------
# Pretty printers (round-trip companions of the parsers)
# ---------------------------------------------------------------------------

_PRECEDENCE = {
    "or": 1,
    "and": 2,
    "not": 3,
    "=": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5,
    "*": 6, "/": 6,
    "neg": 7,
}


def print_expression(expr: Expression, parent_prec: int = 0) -> str:
    if isinstance(expr, Value):
        if expr.type is ArType.BOOLEAN:
            return "true" if expr.literal else "false"
        if expr.type is ArType.STRING:
            escaped = str(expr.literal).replace("'", "''")
            return f"'{escaped}'"
        if expr.type is ArType.REAL:
            text = repr(float(expr.literal))
            return text if ("." in text or "e" in text or "E" in text) else text + ".0"
        return str(expr.literal)
    if isinstance(expr, Variable):
        return expr.name
    if isinstance(expr, Param):
        return f":{expr.name}"
    if isinstance(expr, Unary):
        prec = _PRECEDENCE["neg"] if expr.op == "-" else _PRECEDENCE["not"]
        inner = print_expression(expr.operand, prec)
        if expr.op == "-":
            # "--x" would start a comment, so parenthesize a nested minus
            text = f"-({inner})" if inner.startswith("-") else f"-{inner}"
        else:
            text = f"NOT {inner}"
        return f"({text})" if prec < parent_prec else text
    if isinstance(expr, Binary):
        prec = _PRECEDENCE[expr.op]
        op = expr.op.upper() if expr.op in BOOLEAN_OPS else expr.op
        # left-associative grammar: the right child needs strictly higher
        # precedence; comparisons do not chain, so both sides do
        lhs_prec = prec + 1 if expr.op in COMPARISON_OPS else prec
        text = f"{print_expression(expr.lhs, lhs_prec)} {op} {print_expression(expr.rhs, prec + 1)}"
        return f"({text})" if prec < parent_prec else text
    raise ValueError(f"not an expression: {expr!r}")


def print_statement(stmt: Statement) -> str:
    where = "" if stmt.where == TRUE else f" WHERE {print_expression(stmt.where)}"
    if stmt.kind is StatementKind.SELECT:
        cols = ", ".join(stmt.read_columns)
        return f"SELECT {cols} FROM {stmt.table}{where}"
    if stmt.kind is StatementKind.UPDATE:
        sets = ", ".join(f"{c} = {print_expression(e)}" for c, e in stmt.write_columns)
        return f"UPDATE {stmt.table} SET {sets}{where}"
    if stmt.kind is StatementKind.INSERT:
        cols = ", ".join(c for c, _ in stmt.write_columns)
        vals = ", ".join(print_expression(e) for _, e in stmt.write_columns)
        return f"INSERT INTO {stmt.table} ({cols}) VALUES ({vals})"
    return f"DELETE FROM {stmt.table}{where}"


def print_schema(schema: Schema) -> str:
    chunks = []
    for t in schema.tables:
        cols = [f"    {c.name} {c.type.value.upper()}" for c in t.columns]
        cols.append(f"    PRIMARY KEY ({', '.join(t.primary_key)})")
        body = ",\n".join(cols)
        chunks.append(f"CREATE TABLE {t.name} (\n{body}\n);")
    return "\n\n".join(chunks) + ("\n" if chunks else "")


def statement_to_json(stmt: Statement, auto_name: Optional[str] = None) -> dict:
    out: dict = {}
    if stmt.name != auto_name:
        out["name"] = stmt.name
    out["sql"] = print_statement(stmt)
    if stmt.bindings:
        out["bind"] = {var: col for col, var in stmt.bindings}
    if stmt.path_condition != TRUE:
        out["path"] = print_expression(stmt.path_condition)
    return out


def monolith_to_json(m: MonolithAR) -> dict:
    funcs = []
    for f in m.functionalities:
        funcs.append(
            {
                "name": f.name,
                "params": [{"name": n, "type": t.value} for n, t in f.parameters],
                "statements": [
                    statement_to_json(s, auto_name=f"{f.name}_s{i}")
                    for i, s in enumerate(f.statements)
                ],
            }
        )
    return {"functionalities": funcs}
