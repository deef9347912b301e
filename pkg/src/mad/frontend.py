"""Parsers for the three input files: SQL schema, functionalities, decomposition.

The SQL subset is deliberately small: CREATE TABLE with typed columns and one
PRIMARY KEY clause; single-table SELECT / UPDATE / INSERT / DELETE with
conjunctive/disjunctive WHERE clauses over columns, `:name` parameters, bound
variables and literals. Joins, foreign keys, and implicit updates (SET or
VALUES expressions reading columns) are rejected with named errors rather than
guessed at.

Functionality definitions arrive as JSON: each functionality has typed params
and an ordered statement list, where a statement is an SQL string plus
optional `bind` (select column -> variable) and `path` (boolean expression
over params and previously bound variables) annotations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NoReturn, Optional

from .ar import (
    ArType,
    ArError,
    Binary,
    Column,
    DecompositionSpec,
    Expression,
    FunctionalityAR,
    MonolithAR,
    Param,
    Schema,
    Statement,
    StatementKind,
    Table,
    TRUE,
    Unary,
    ValidationError,
    Value,
    Variable,
    check_monolith,
    validate_decomposition,
)


class ParseError(ArError):
    """Syntax or input-format error with source position."""

    def __init__(self, message: str, source: str = "<input>", line: int = 0, col: int = 0):
        self.source = source
        self.line = line
        self.col = col
        prefix = f"{source}:{line}:{col}: " if line else f"{source}: "
        super().__init__(prefix + message)


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TYPE_KEYWORDS = {
    "INT": ArType.INT,
    "INTEGER": ArType.INT,
    "REAL": ArType.REAL,
    "FLOAT": ArType.REAL,
    "DOUBLE": ArType.REAL,
    "STRING": ArType.STRING,
    "VARCHAR": ArType.STRING,
    "TEXT": ArType.STRING,
    "CHAR": ArType.STRING,
    "BOOLEAN": ArType.BOOLEAN,
    "BOOL": ArType.BOOLEAN,
}

_UNSUPPORTED_FEATURES = {
    "FOREIGN": "FOREIGN KEY is unsupported",
    "REFERENCES": "FOREIGN KEY is unsupported",
    "JOIN": "joins are unsupported",
    "INNER": "joins are unsupported",
    "OUTER": "joins are unsupported",
    "LEFT": "joins are unsupported",
    "RIGHT": "joins are unsupported",
    "UNIQUE": "UNIQUE constraints are unsupported",
    "CHECK": "CHECK constraints are unsupported",
    "CONSTRAINT": "named constraints are unsupported",
    "DEFAULT": "DEFAULT values are unsupported",
    "GROUP": "GROUP BY is unsupported",
    "ORDER": "ORDER BY is unsupported",
    "LIMIT": "LIMIT is unsupported",
    "HAVING": "HAVING is unsupported",
    "DISTINCT": "DISTINCT is unsupported",
    "NULL": "NULL is unsupported",
}


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT PARAM INT REAL STRING OP LPAREN RPAREN COMMA SEMI EOF
    text: str
    line: int
    col: int

    def keyword(self) -> str:
        """Upper-cased text, used for case-insensitive keyword matching."""
        return self.text.upper()


def _tokenize(text: str, source: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    line = 1
    col = 1
    n = len(text)

    def error(msg: str) -> NoReturn:
        raise ParseError(msg, source, line, col)

    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("--", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token("IDENT", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if ch == ":":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            if j == i + 1:
                error("expected a parameter name after ':'")
            tokens.append(Token("PARAM", text[i + 1 : j], start_line, start_col))
            col += j - i
            i = j
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            is_real = False
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
                is_real = True
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    is_real = True
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            tokens.append(Token("REAL" if is_real else "INT", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if ch == "'":
            j = i + 1
            chunks: list[str] = []
            while True:
                if j >= n:
                    error("unterminated string literal")
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":
                        chunks.append("'")
                        j += 2
                        continue
                    j += 1
                    break
                chunks.append(text[j])
                j += 1
            tokens.append(Token("STRING", "".join(chunks), start_line, start_col))
            col += j - i
            i = j
            continue
        two = text[i : i + 2]
        if two in ("<=", ">=", "!=", "<>"):
            tokens.append(Token("OP", "!=" if two == "<>" else two, start_line, start_col))
            i += 2
            col += 2
            continue
        if ch in "=<>+-*/":
            tokens.append(Token("OP", ch, start_line, start_col))
            i += 1
            col += 1
            continue
        if ch == "(":
            tokens.append(Token("LPAREN", ch, start_line, start_col))
        elif ch == ")":
            tokens.append(Token("RPAREN", ch, start_line, start_col))
        elif ch == ",":
            tokens.append(Token("COMMA", ch, start_line, start_col))
        elif ch == ";":
            tokens.append(Token("SEMI", ch, start_line, start_col))
        else:
            error(f"unexpected character {ch!r}")
        i += 1
        col += 1
    tokens.append(Token("EOF", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str, source: str):
        self.tokens = _tokenize(text, source)
        self.source = source
        self.pos = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def error(self, message: str, tok: Optional[Token] = None) -> NoReturn:
        tok = tok or self.peek()
        raise ParseError(message, self.source, tok.line, tok.col)

    def check_unsupported(self, tok: Token) -> None:
        if tok.kind == "IDENT" and tok.keyword() in _UNSUPPORTED_FEATURES:
            self.error(_UNSUPPORTED_FEATURES[tok.keyword()], tok)

    def expect_kind(self, kind: str, what: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            self.check_unsupported(tok)
            self.error(f"expected {what} but found {tok.text!r}" if tok.text else f"expected {what} but input ended")
        return self.advance()

    def expect_keyword(self, word: str) -> Token:
        tok = self.peek()
        if tok.kind != "IDENT" or tok.keyword() != word:
            self.check_unsupported(tok)
            found = tok.text if tok.text else "end of input"
            self.error(f"expected {word} but found {found!r}")
        return self.advance()

    def at_keyword(self, *words: str) -> bool:
        tok = self.peek()
        return tok.kind == "IDENT" and tok.keyword() in words

    def identifier(self, what: str) -> str:
        tok = self.peek()
        if tok.kind != "IDENT":
            self.check_unsupported(tok)
            self.error(f"expected {what} but found {tok.text!r}" if tok.text else f"expected {what} but input ended")
        if tok.keyword() in _UNSUPPORTED_FEATURES:
            self.error(_UNSUPPORTED_FEATURES[tok.keyword()], tok)
        return self.advance().text

    # -- expressions --------------------------------------------------------

    def expression(self) -> Expression:
        return self._or_expr()

    def _or_expr(self) -> Expression:
        left = self._and_expr()
        while self.at_keyword("OR"):
            self.advance()
            left = Binary("or", left, self._and_expr())
        return left

    def _and_expr(self) -> Expression:
        left = self._not_expr()
        while self.at_keyword("AND"):
            self.advance()
            left = Binary("and", left, self._not_expr())
        return left

    def _not_expr(self) -> Expression:
        if self.at_keyword("NOT"):
            self.advance()
            return Unary("not", self._not_expr())
        return self._comparison()

    def _comparison(self) -> Expression:
        left = self._additive()
        tok = self.peek()
        if tok.kind == "OP" and tok.text in ("=", "!=", "<", "<=", ">", ">="):
            self.advance()
            return Binary(tok.text, left, self._additive())
        return left

    def _additive(self) -> Expression:
        left = self._multiplicative()
        while self.peek().kind == "OP" and self.peek().text in ("+", "-"):
            op = self.advance().text
            left = Binary(op, left, self._multiplicative())
        return left

    def _multiplicative(self) -> Expression:
        left = self._unary()
        while self.peek().kind == "OP" and self.peek().text in ("*", "/"):
            op = self.advance().text
            left = Binary(op, left, self._unary())
        return left

    def _unary(self) -> Expression:
        tok = self.peek()
        if tok.kind == "OP" and tok.text == "-":
            self.advance()
            return Unary("-", self._unary())
        return self._atom()

    def _atom(self) -> Expression:
        tok = self.peek()
        if tok.kind == "LPAREN":
            self.advance()
            inner = self._or_expr()
            self.expect_kind("RPAREN", "')'")
            return inner
        if tok.kind == "INT":
            self.advance()
            return Value(ArType.INT, int(tok.text))
        if tok.kind == "REAL":
            self.advance()
            return Value(ArType.REAL, float(tok.text))
        if tok.kind == "STRING":
            self.advance()
            return Value(ArType.STRING, tok.text)
        if tok.kind == "PARAM":
            self.advance()
            return Param(tok.text)
        if tok.kind == "IDENT":
            if tok.keyword() == "TRUE":
                self.advance()
                return Value(ArType.BOOLEAN, True)
            if tok.keyword() == "FALSE":
                self.advance()
                return Value(ArType.BOOLEAN, False)
            self.check_unsupported(tok)
            self.advance()
            if self.peek().kind == "LPAREN":
                self.error(f"function calls are unsupported ({tok.text!r})", tok)
            return Variable(tok.text)
        self.error(f"expected an expression but found {tok.text!r}" if tok.text else "expected an expression but input ended")


# ---------------------------------------------------------------------------
# Schema parsing
# ---------------------------------------------------------------------------

def parse_schema(text: str, source: str = "<schema>") -> Schema:
    """Parse a sequence of CREATE TABLE statements into a Schema."""
    p = _Parser(text, source)
    tables: list[Table] = []
    while p.peek().kind != "EOF":
        p.expect_keyword("CREATE")
        p.expect_keyword("TABLE")
        tname = p.identifier("a table name")
        p.expect_kind("LPAREN", "'('")
        columns: list[Column] = []
        primary_key: Optional[tuple[str, ...]] = None
        while True:
            if p.at_keyword("PRIMARY"):
                pk_tok = p.peek()
                p.advance()
                p.expect_keyword("KEY")
                if primary_key is not None:
                    p.error("duplicate PRIMARY KEY clause", pk_tok)
                p.expect_kind("LPAREN", "'('")
                keys = [p.identifier("a column name")]
                while p.peek().kind == "COMMA":
                    p.advance()
                    keys.append(p.identifier("a column name"))
                p.expect_kind("RPAREN", "')'")
                primary_key = tuple(keys)
            else:
                cname = p.identifier("a column name")
                type_tok = p.peek()
                type_word = p.identifier("a column type").upper()
                if type_word not in _TYPE_KEYWORDS:
                    p.error(f"unknown column type {type_word!r}", type_tok)
                if p.peek().kind == "LPAREN":  # VARCHAR(32) style length, ignored
                    p.advance()
                    p.expect_kind("INT", "a length")
                    p.expect_kind("RPAREN", "')'")
                columns.append(Column(cname, _TYPE_KEYWORDS[type_word]))
            if p.peek().kind == "COMMA":
                p.advance()
                continue
            p.expect_kind("RPAREN", "')' or ','")
            break
        if p.peek().kind == "SEMI":
            p.advance()
        if primary_key is None:
            p.error(f"table {tname} has no PRIMARY KEY clause")
        names = [c.name for c in columns]
        for nm in names:
            if names.count(nm) > 1:
                p.error(f"table {tname}: duplicate column {nm!r}")
        for t in tables:
            if t.name == tname:
                p.error(f"duplicate table {tname!r}")
        try:
            tables.append(Table(tname, tuple(columns), primary_key))
        except ValidationError as exc:
            p.error(str(exc))
    return Schema(tuple(tables))


# ---------------------------------------------------------------------------
# Statement parsing
# ---------------------------------------------------------------------------

def parse_sql_statement(text: str, source: str = "<sql>") -> Statement:
    """Parse one SQL statement into an (unnamed, unchecked) Statement."""
    p = _Parser(text, source)
    tok = p.peek()
    if tok.kind != "IDENT":
        p.error("expected SELECT, UPDATE, INSERT or DELETE")
    word = tok.keyword()
    if word == "SELECT":
        stmt = _parse_select(p)
    elif word == "UPDATE":
        stmt = _parse_update(p)
    elif word == "INSERT":
        stmt = _parse_insert(p)
    elif word == "DELETE":
        stmt = _parse_delete(p)
    else:
        p.check_unsupported(tok)
        p.error(f"expected SELECT, UPDATE, INSERT or DELETE but found {tok.text!r}")
    if p.peek().kind == "SEMI":
        p.advance()
    if p.peek().kind != "EOF":
        p.check_unsupported(p.peek())
        p.error(f"unexpected {p.peek().text!r} after the statement")
    return stmt


def _parse_where(p: _Parser) -> Expression:
    if p.at_keyword("WHERE"):
        p.advance()
        return p.expression()
    return TRUE


def _parse_select(p: _Parser) -> Statement:
    p.expect_keyword("SELECT")
    if p.peek().kind == "OP" and p.peek().text == "*":
        p.error("SELECT * is unsupported, list the columns explicitly")
    cols = [p.identifier("a column name")]
    while p.peek().kind == "COMMA":
        p.advance()
        cols.append(p.identifier("a column name"))
    p.expect_keyword("FROM")
    table = p.identifier("a table name")
    if p.peek().kind == "COMMA":
        p.error("multi-table FROM is unsupported")
    p.check_unsupported(p.peek())
    return Statement(name="", kind=StatementKind.SELECT, table=table,
                     read_columns=tuple(cols), where=_parse_where(p))


def _parse_update(p: _Parser) -> Statement:
    p.expect_keyword("UPDATE")
    table = p.identifier("a table name")
    p.expect_keyword("SET")
    writes: list[tuple[str, Expression]] = []
    while True:
        col = p.identifier("a column name")
        tok = p.peek()
        if not (tok.kind == "OP" and tok.text == "="):
            p.error(f"expected '=' but found {tok.text!r}")
        p.advance()
        writes.append((col, p.expression()))
        if p.peek().kind == "COMMA":
            p.advance()
            continue
        break
    return Statement(name="", kind=StatementKind.UPDATE, table=table,
                     write_columns=tuple(writes), where=_parse_where(p))


def _parse_insert(p: _Parser) -> Statement:
    p.expect_keyword("INSERT")
    p.expect_keyword("INTO")
    table = p.identifier("a table name")
    p.expect_kind("LPAREN", "'('")
    cols = [p.identifier("a column name")]
    while p.peek().kind == "COMMA":
        p.advance()
        cols.append(p.identifier("a column name"))
    p.expect_kind("RPAREN", "')'")
    p.expect_keyword("VALUES")
    p.expect_kind("LPAREN", "'('")
    exprs = [p.expression()]
    while p.peek().kind == "COMMA":
        p.advance()
        exprs.append(p.expression())
    p.expect_kind("RPAREN", "')'")
    if len(cols) != len(exprs):
        p.error(f"INSERT lists {len(cols)} columns but {len(exprs)} values")
    return Statement(name="", kind=StatementKind.INSERT, table=table,
                     write_columns=tuple(zip(cols, exprs)))


def _parse_delete(p: _Parser) -> Statement:
    p.expect_keyword("DELETE")
    p.expect_keyword("FROM")
    table = p.identifier("a table name")
    return Statement(name="", kind=StatementKind.DELETE, table=table, where=_parse_where(p))


def parse_expression(text: str, source: str = "<expr>") -> Expression:
    """Parse a standalone boolean/arithmetic expression (path conditions)."""
    p = _Parser(text, source)
    expr = p.expression()
    if p.peek().kind != "EOF":
        p.error(f"unexpected {p.peek().text!r} after the expression")
    return expr


# ---------------------------------------------------------------------------
# Functionality file
# ---------------------------------------------------------------------------

_PARAM_TYPES = {t.value: t for t in ArType}


def _require(cond: bool, message: str, source: str) -> None:
    if not cond:
        raise ParseError(message, source)


def _reject_unknown_keys(doc: dict, allowed: set[str], where: str, source: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ParseError(f"{where}: unknown key {unknown[0]!r}", source)


def parse_functionalities(text: str, schema: Schema, source: str = "<functionalities>") -> MonolithAR:
    """Parse and type-check the functionality definition file."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}", source, exc.lineno, exc.colno) from None
    _require(isinstance(doc, dict), "top level must be a JSON object", source)
    _reject_unknown_keys(doc, {"functionalities"}, "top level", source)
    _require("functionalities" in doc, "missing 'functionalities' key", source)
    _require(isinstance(doc["functionalities"], list), "'functionalities' must be an array", source)

    functionalities: list[FunctionalityAR] = []
    for fidx, fdoc in enumerate(doc["functionalities"]):
        where = f"functionalities[{fidx}]"
        _require(isinstance(fdoc, dict), f"{where} must be an object", source)
        _reject_unknown_keys(fdoc, {"name", "params", "statements"}, where, source)
        _require(isinstance(fdoc.get("name"), str) and fdoc.get("name"), f"{where}: missing 'name'", source)
        fname = fdoc["name"]
        _require(fname.isidentifier(), f"{where}: name {fname!r} is not an identifier", source)

        params: list[tuple[str, ArType]] = []
        for pidx, pdoc in enumerate(fdoc.get("params", [])):
            pwhere = f"{where}.params[{pidx}]"
            _require(isinstance(pdoc, dict), f"{pwhere} must be an object", source)
            _reject_unknown_keys(pdoc, {"name", "type"}, pwhere, source)
            _require(isinstance(pdoc.get("name"), str) and pdoc["name"].isidentifier(),
                     f"{pwhere}: missing or invalid 'name'", source)
            _require(pdoc.get("type") in _PARAM_TYPES,
                     f"{pwhere}: type must be one of {sorted(_PARAM_TYPES)}", source)
            params.append((pdoc["name"], _PARAM_TYPES[pdoc["type"]]))

        statements: list[Statement] = []
        _require(isinstance(fdoc.get("statements", []), list), f"{where}: 'statements' must be an array", source)
        for sidx, sdoc in enumerate(fdoc.get("statements", [])):
            swhere = f"{where}.statements[{sidx}]"
            _require(isinstance(sdoc, dict), f"{swhere} must be an object", source)
            _reject_unknown_keys(sdoc, {"name", "sql", "bind", "path"}, swhere, source)
            _require(isinstance(sdoc.get("sql"), str), f"{swhere}: missing 'sql'", source)
            stmt = parse_sql_statement(sdoc["sql"], source=f"{source}:{fname}[{sidx}]")
            name = sdoc.get("name", f"{fname}_s{sidx}")
            _require(isinstance(name, str) and name.isidentifier(),
                     f"{swhere}: statement name {name!r} is not an identifier", source)
            bindings: list[tuple[str, str]] = []
            if "bind" in sdoc:
                _require(isinstance(sdoc["bind"], dict), f"{swhere}: 'bind' must be an object", source)
                _require(stmt.kind is StatementKind.SELECT, f"{swhere}: 'bind' is only valid on select", source)
                for var, col in sdoc["bind"].items():
                    _require(isinstance(col, str), f"{swhere}: bind target for {var!r} must be a column name", source)
                    _require(var.isidentifier(), f"{swhere}: variable {var!r} is not an identifier", source)
                    bindings.append((col, var))
            path = TRUE
            if "path" in sdoc:
                _require(isinstance(sdoc["path"], str), f"{swhere}: 'path' must be a string", source)
                path = parse_expression(sdoc["path"], source=f"{source}:{fname}[{sidx}].path")
            statements.append(
                Statement(
                    name=name,
                    kind=stmt.kind,
                    table=stmt.table,
                    read_columns=stmt.read_columns,
                    write_columns=stmt.write_columns,
                    where=stmt.where,
                    bindings=tuple(bindings),
                    path_condition=path,
                )
            )
        functionalities.append(FunctionalityAR(fname, tuple(params), tuple(statements)))

    monolith = MonolithAR(schema, tuple(functionalities))
    check_monolith(monolith)  # raises TypeCheckError/ValidationError with statement names
    return monolith


# ---------------------------------------------------------------------------
# Decomposition file
# ---------------------------------------------------------------------------

def parse_decomposition(text: str, schema: Schema, source: str = "<decomposition>") -> DecompositionSpec:
    """Parse the microservice -> entity list JSON and check it partitions the schema."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}", source, exc.lineno, exc.colno) from None
    _require(isinstance(doc, dict), "top level must be a JSON object", source)
    clusters: list[tuple[str, tuple[str, ...]]] = []
    for mname, entities in doc.items():
        _require(isinstance(entities, list) and all(isinstance(e, str) for e in entities),
                 f"microservice {mname!r} must map to an array of entity names", source)
        _require(mname.isidentifier(), f"microservice name {mname!r} is not an identifier", source)
        clusters.append((mname, tuple(entities)))
    spec = DecompositionSpec(tuple(clusters))
    validate_decomposition(spec, schema)
    return spec


def mono_decomposition(schema: Schema, name: str = "mono") -> DecompositionSpec:
    """Single-cluster decomposition over all tables (the undivided baseline)."""
    return DecompositionSpec(((name, tuple(schema.table_names())),))
