"""Type checker, schema validation and pretty printer tests."""

from __future__ import annotations

import pytest

from mad.ar import (
    ArType,
    Binary,
    Column,
    DecompositionSpec,
    FunctionalityAR,
    MonolithAR,
    Param,
    Schema,
    Statement,
    StatementKind,
    Table,
    TRUE,
    TypeCheckError,
    TypeContext,
    ValidationError,
    Unary,
    Value,
    Variable,
    check_monolith,
    check_statement,
    print_expression,
    print_statement,
    referenced_params,
    typecheck,
    validate_decomposition,
)


def ctx(**kwargs):
    return TypeContext(
        columns=kwargs.get("columns", {}),
        params=kwargs.get("params", {}),
        variables=kwargs.get("variables", {}),
    )


def test_typecheck_arithmetic():
    c = ctx(columns={"a": ArType.INT}, params={"p": ArType.INT})
    expr = Binary("+", Variable("a"), Param("p"))
    assert typecheck(expr, c) is ArType.INT


def test_typecheck_rejects_mixed_numeric_arithmetic():
    c = ctx(columns={"a": ArType.INT, "r": ArType.REAL})
    with pytest.raises(TypeCheckError):
        typecheck(Binary("+", Variable("a"), Variable("r")), c)


def test_typecheck_rejects_string_order():
    c = ctx(columns={"s": ArType.STRING})
    with pytest.raises(TypeCheckError):
        typecheck(Binary("<", Variable("s"), Value(ArType.STRING, "x")), c)


def test_typecheck_equality_needs_same_type():
    c = ctx(columns={"a": ArType.INT, "s": ArType.STRING})
    assert typecheck(Binary("=", Variable("a"), Value(ArType.INT, 1)), c) is ArType.BOOLEAN
    with pytest.raises(TypeCheckError):
        typecheck(Binary("=", Variable("a"), Variable("s")), c)


def test_typecheck_boolean_ops_and_not():
    c = ctx(columns={"a": ArType.INT})
    eq = Binary("=", Variable("a"), Value(ArType.INT, 0))
    assert typecheck(Binary("and", eq, Unary("not", eq)), c) is ArType.BOOLEAN
    with pytest.raises(TypeCheckError):
        typecheck(Unary("not", Variable("a")), c)


def test_typecheck_unknown_names():
    with pytest.raises(TypeCheckError):
        typecheck(Variable("ghost"), ctx())
    with pytest.raises(TypeCheckError):
        typecheck(Param("ghost"), ctx())


def test_referenced_params():
    expr = Binary("and",
                  Binary("=", Variable("a"), Param("x")),
                  Binary("<", Param("y"), Value(ArType.INT, 3)))
    assert referenced_params(expr) == {"x", "y"}


def test_table_validation():
    with pytest.raises(ValidationError):
        Table("T", (), ("id",))
    with pytest.raises(ValidationError):
        Table("T", (Column("id", ArType.INT),), ())
    with pytest.raises(ValidationError):
        Table("T", (Column("id", ArType.INT),), ("nope",))
    with pytest.raises(ValidationError):
        Table("T", (Column("id", ArType.INT), Column("id", ArType.INT)), ("id",))


def one_table_schema():
    return Schema((
        Table("Account",
              (Column("clientId", ArType.INT), Column("balance", ArType.INT)),
              ("clientId",)),
    ))


def test_check_statement_rejects_implicit_update():
    schema = one_table_schema()
    stmt = Statement(
        name="s", kind=StatementKind.UPDATE, table="Account",
        write_columns=(("balance", Binary("+", Variable("balance"), Value(ArType.INT, 1))),),
    )
    with pytest.raises(ValidationError, match="implicit update"):
        check_statement(schema, stmt, {}, {})


def test_check_statement_set_may_use_bound_variable():
    schema = one_table_schema()
    stmt = Statement(
        name="s", kind=StatementKind.UPDATE, table="Account",
        write_columns=(("balance", Binary("+", Variable("old"), Value(ArType.INT, 1))),),
    )
    assert check_statement(schema, stmt, {}, {"old": ArType.INT}) == {}


def test_check_statement_bind_rules():
    schema = one_table_schema()
    good = Statement(name="s", kind=StatementKind.SELECT, table="Account",
                     read_columns=("balance",), bindings=(("balance", "b"),))
    assert check_statement(schema, good, {}, {}) == {"b": ArType.INT}

    not_selected = Statement(name="s", kind=StatementKind.SELECT, table="Account",
                             read_columns=("clientId",), bindings=(("balance", "b"),))
    with pytest.raises(ValidationError):
        check_statement(schema, not_selected, {}, {})

    shadows = Statement(name="s", kind=StatementKind.SELECT, table="Account",
                        read_columns=("balance",), bindings=(("balance", "balance"),))
    with pytest.raises(ValidationError, match="shadows"):
        check_statement(schema, shadows, {}, {})

    rebound = Statement(name="s", kind=StatementKind.SELECT, table="Account",
                        read_columns=("balance",), bindings=(("balance", "b"),))
    with pytest.raises(ValidationError, match="already bound"):
        check_statement(schema, rebound, {}, {"b": ArType.INT})


def test_check_statement_write_type_mismatch():
    schema = one_table_schema()
    stmt = Statement(name="s", kind=StatementKind.UPDATE, table="Account",
                     write_columns=(("balance", Value(ArType.STRING, "no")),))
    with pytest.raises(TypeCheckError):
        check_statement(schema, stmt, {}, {})


def test_check_statement_insert_where_rejected():
    schema = one_table_schema()
    stmt = Statement(
        name="s", kind=StatementKind.INSERT, table="Account",
        write_columns=(("clientId", Value(ArType.INT, 1)), ("balance", Value(ArType.INT, 0))),
        where=Binary("=", Variable("clientId"), Value(ArType.INT, 1)),
    )
    with pytest.raises(ValidationError):
        check_statement(schema, stmt, {}, {})


def test_check_monolith_duplicate_statement_names_across_functionalities():
    schema = one_table_schema()
    sel = Statement(name="dup", kind=StatementKind.SELECT, table="Account",
                    read_columns=("balance",))
    m = MonolithAR(schema, (
        FunctionalityAR("F1", (), (sel,)),
        FunctionalityAR("F2", (), (sel,)),
    ))
    with pytest.raises(ValidationError, match="dup"):
        check_monolith(m)


def test_validate_decomposition():
    schema = Schema((
        Table("A", (Column("id", ArType.INT),), ("id",)),
        Table("B", (Column("id", ArType.INT),), ("id",)),
    ))
    validate_decomposition(DecompositionSpec((("m1", ("A",)), ("m2", ("B",)))), schema)
    with pytest.raises(ValidationError):
        validate_decomposition(DecompositionSpec((("m1", ("A",)),)), schema)
    with pytest.raises(ValidationError):
        validate_decomposition(DecompositionSpec((("m1", ("A", "B")), ("m2", ("B",)))), schema)
    with pytest.raises(ValidationError):
        validate_decomposition(DecompositionSpec((("m1", ("A", "B", "C")),)), schema)


def test_print_expression_precedence():
    a, b, c = Variable("a"), Variable("b"), Variable("c")
    assert print_expression(Binary("+", a, Binary("*", b, c))) == "a + b * c"
    assert print_expression(Binary("*", Binary("+", a, b), c)) == "(a + b) * c"
    assert print_expression(Binary("-", Binary("-", a, b), c)) == "a - b - c"
    assert print_expression(Binary("-", a, Binary("-", b, c))) == "a - (b - c)"
    assert print_expression(Unary("-", Binary("+", a, b))) == "-(a + b)"
    assert print_expression(Unary("-", Unary("-", a))) == "-(-a)"


def test_print_expression_booleans_and_strings():
    eq = Binary("=", Variable("s"), Value(ArType.STRING, "it's"))
    assert print_expression(eq) == "s = 'it''s'"
    both = Binary("or", Binary("and", eq, TRUE), Unary("not", eq))
    assert print_expression(both) == "s = 'it''s' AND true OR NOT s = 'it''s'"
    assert print_expression(Value(ArType.REAL, 2.0)) == "2.0"


def test_print_statement_forms():
    sel = Statement(name="s", kind=StatementKind.SELECT, table="T",
                    read_columns=("a", "b"),
                    where=Binary("=", Variable("a"), Param("x")))
    assert print_statement(sel) == "SELECT a, b FROM T WHERE a = :x"

    upd = Statement(name="s", kind=StatementKind.UPDATE, table="T",
                    write_columns=(("a", Param("x")),))
    assert print_statement(upd) == "UPDATE T SET a = :x"

    ins = Statement(name="s", kind=StatementKind.INSERT, table="T",
                    write_columns=(("a", Value(ArType.INT, 1)), ("b", Param("x"))))
    assert print_statement(ins) == "INSERT INTO T (a, b) VALUES (1, :x)"

    dele = Statement(name="s", kind=StatementKind.DELETE, table="T",
                     where=Binary(">", Variable("a"), Value(ArType.INT, 0)))
    assert print_statement(dele) == "DELETE FROM T WHERE a > 0"
