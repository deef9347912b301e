"""Concrete-execution oracle tests."""

from __future__ import annotations

import json
from math import comb

import pytest

from mad.ar import DecompositionSpec, StatementKind
from mad.chopper import chop
from mad.frontend import mono_decomposition, parse_functionalities, parse_schema
from mad.oracle import (
    ConcreteDomain,
    InstanceSpec,
    _euclidean_div,
    enumerate_schedules,
    execute_schedule,
    instance_sets,
    is_serializable,
    oracle_has_anomaly,
    relevant_parameters,
)

from test_frontend import BANK_FUNCTIONALITIES, BANK_SQL


SMALL = ConcreteDomain(int_values=(0, 1), instances_per_functionality=2)


def bank_micro():
    schema = parse_schema(BANK_SQL)
    m = parse_functionalities(json.dumps(BANK_FUNCTIONALITIES), schema)
    d = DecompositionSpec((("AccountService", ("Account",)), ("WalletService", ("Wallet",))))
    return chop(m, d)


def bank_mono():
    schema = parse_schema(BANK_SQL)
    m = parse_functionalities(json.dumps(BANK_FUNCTIONALITIES), schema)
    return chop(m, mono_decomposition(schema))


def micro_app(sql, functionalities, decomposition):
    schema = parse_schema(sql)
    m = parse_functionalities(json.dumps(functionalities), schema)
    d = DecompositionSpec(tuple((k, tuple(v)) for k, v in decomposition.items()))
    return chop(m, d)


def test_relevant_parameters_bank():
    m = bank_micro().monolith
    rel = relevant_parameters(m, ("Total", "Transfer"))
    assert rel == {"Total": {"clientId"}, "Transfer": {"clientId"}}


def test_bank_split_is_anomalous():
    verdict = oracle_has_anomaly(bank_micro(), ("Total", "Transfer"), SMALL)
    assert verdict.anomalous and not verdict.partial
    assert verdict.witness is not None
    assert not is_serializable(verdict.witness)


def test_bank_mono_is_serializable():
    chopped = bank_mono()
    verdict = oracle_has_anomaly(chopped, ("Total", "Transfer"), SMALL)
    assert not verdict.anomalous and not verdict.partial
    for s in enumerate_schedules(chopped, ("Total", "Transfer"), SMALL):
        assert is_serializable(s)


def test_read_only_subset_is_clean():
    assert not oracle_has_anomaly(bank_micro(), ("Total",), SMALL)


def test_transfer_alone_is_anomalous_when_split():
    # two Transfer instances on the same client double-write both balances
    verdict = oracle_has_anomaly(bank_micro(), ("Transfer",), SMALL)
    assert verdict.anomalous
    kinds = {e.kind for e in verdict.witness.conflicts}
    assert kinds == {"WW"}


def test_interleaving_total_reads_mixed_state():
    chopped = bank_micro()
    instances = (
        InstanceSpec("Total", 0, (("clientId", 0),)),
        InstanceSpec("Transfer", 0, (
            ("clientId", 0), ("amount", 0), ("accountBalance", 0), ("walletBalance", 0))),
    )
    schedule = execute_schedule(chopped, instances, (0, 1, 1, 0), SMALL)
    assert schedule.block_names == ("Total_0", "Transfer_0", "Transfer_1", "Total_1")
    edges = {(e.src, e.dst, e.kind) for e in schedule.conflicts}
    assert ("Total#0", "Transfer#0", "RW") in edges
    assert ("Transfer#0", "Total#0", "WR") in edges
    assert not is_serializable(schedule)
    # the serial order of the same instances is fine
    serial = execute_schedule(chopped, instances, (0, 0, 1, 1), SMALL)
    assert is_serializable(serial)


def test_schedule_count_two_functionalities():
    app = micro_app(
        "CREATE TABLE A (id INT, PRIMARY KEY (id));"
        "CREATE TABLE B (id INT, PRIMARY KEY (id));",
        {"functionalities": [
            {"name": "F1", "statements": [
                {"sql": "SELECT id FROM A"}, {"sql": "SELECT id FROM B"}]},
            {"name": "F2", "statements": [
                {"sql": "SELECT id FROM A"}, {"sql": "SELECT id FROM B"}]},
        ]},
        {"m1": ["A"], "m2": ["B"]},
    )
    dom = ConcreteDomain(instances_per_functionality=1)
    schedules = list(enumerate_schedules(app, ("F1", "F2"), dom))
    assert len(schedules) == comb(4, 2)
    assert all(is_serializable(s) for s in schedules)


def test_identical_instances_deduplicated():
    app = micro_app(
        "CREATE TABLE A (id INT, PRIMARY KEY (id));"
        "CREATE TABLE B (id INT, PRIMARY KEY (id));",
        {"functionalities": [
            {"name": "F", "statements": [
                {"sql": "SELECT id FROM A"}, {"sql": "SELECT id FROM B"}]},
        ]},
        {"m1": ["A"], "m2": ["B"]},
    )
    dom = ConcreteDomain(instances_per_functionality=2)
    assert len(list(enumerate_schedules(app, ("F",), dom))) == comb(4, 2) // 2


def test_zero_instances_single_empty_schedule():
    dom = ConcreteDomain(instances_per_functionality=0)
    schedules = list(enumerate_schedules(bank_micro(), ("Total",), dom))
    assert len(schedules) == 1
    assert schedules[0].operations == ()
    assert is_serializable(schedules[0])


def test_unset_variable_makes_statement_noop():
    app = micro_app(
        "CREATE TABLE A (id INT, v INT, PRIMARY KEY (id));"
        "CREATE TABLE B (id INT, v INT, PRIMARY KEY (id));",
        {"functionalities": [
            {"name": "F",
             "params": [{"name": "p", "type": "int"}],
             "statements": [
                 {"sql": "SELECT v FROM A WHERE id = :p", "bind": {"seen": "v"}},
                 {"sql": "UPDATE B SET v = seen"},
             ]},
        ]},
        {"m1": ["A"], "m2": ["B"]},
    )
    instances = (InstanceSpec("F", 0, (("p", 1),)),)  # row 0 only, no match
    dom = ConcreteDomain(int_values=(0, 1), instances_per_functionality=1)
    schedule = execute_schedule(app, instances, (0, 0), dom)
    update = [op for op in schedule.operations if op.kind is StatementKind.UPDATE]
    assert update == [] or all(not op.writes for op in update)

    hit = execute_schedule(app, (InstanceSpec("F", 0, (("p", 0),)),), (0, 0), dom)
    assert any(op.kind is StatementKind.UPDATE and op.writes for op in hit.operations)


def test_false_path_condition_skips_statement():
    app = micro_app(
        "CREATE TABLE A (id INT, v INT, PRIMARY KEY (id));",
        {"functionalities": [
            {"name": "F",
             "params": [{"name": "p", "type": "int"}],
             "statements": [
                 {"sql": "UPDATE A SET v = 9 WHERE id = 0", "path": ":p > 0"},
             ]},
        ]},
        {"m1": ["A"]},
    )
    dom = ConcreteDomain(int_values=(0, 1), instances_per_functionality=1)
    off = execute_schedule(app, (InstanceSpec("F", 0, (("p", 0),)),), (0,), dom)
    assert all(not op.writes for op in off.operations)
    on = execute_schedule(app, (InstanceSpec("F", 0, (("p", 1),)),), (0,), dom)
    assert any(op.writes for op in on.operations)


def test_phantom_insert_after_select():
    app = micro_app(
        "CREATE TABLE A (id INT, dept INT, PRIMARY KEY (id));"
        "CREATE TABLE B (id INT, PRIMARY KEY (id));",
        {"functionalities": [
            {"name": "Scan", "statements": [
                {"sql": "SELECT id FROM A WHERE dept = 0"},
                {"sql": "SELECT id FROM B"}]},
            {"name": "Add", "statements": [
                {"sql": "INSERT INTO A (id, dept) VALUES (7, 0)"}]},
        ]},
        {"m1": ["A"], "m2": ["B"]},
    )
    instances = (InstanceSpec("Scan", 0, ()), InstanceSpec("Add", 0, ()))
    dom = ConcreteDomain(instances_per_functionality=1)
    schedule = execute_schedule(app, instances, (0, 1, 0), dom)
    edges = {(e.src, e.dst, e.kind) for e in schedule.conflicts}
    assert ("Scan#0", "Add#0", "RW") in edges


def test_phantom_select_after_delete():
    app = micro_app(
        "CREATE TABLE A (id INT, dept INT, PRIMARY KEY (id));"
        "CREATE TABLE B (id INT, PRIMARY KEY (id));",
        {"functionalities": [
            {"name": "Scan", "statements": [
                {"sql": "SELECT id FROM B"},
                {"sql": "SELECT id FROM A WHERE dept = 0"}]},
            {"name": "Drop", "statements": [
                {"sql": "DELETE FROM A WHERE dept = 0"}]},
        ]},
        {"m1": ["A"], "m2": ["B"]},
    )
    instances = (InstanceSpec("Scan", 0, ()), InstanceSpec("Drop", 0, ()))
    dom = ConcreteDomain(instances_per_functionality=1)
    schedule = execute_schedule(app, instances, (0, 1, 0), dom)
    edges = {(e.src, e.dst, e.kind) for e in schedule.conflicts}
    assert ("Drop#0", "Scan#0", "WR") in edges


def test_bound_gives_partial_verdict():
    verdict = oracle_has_anomaly(bank_micro(), ("Total",), SMALL, bound=2)
    assert not verdict.anomalous
    assert verdict.partial
    assert verdict.schedules_checked >= 2


def test_euclidean_division():
    assert _euclidean_div(7, 2) == 3
    assert _euclidean_div(-7, 2) == -4  # remainder stays non-negative
    assert _euclidean_div(7, -2) == -3
    with pytest.raises(Exception, match="division by zero"):
        _euclidean_div(1, 0)


def test_instance_sets_share_functionality_valuations():
    chopped = bank_micro()
    dom = ConcreteDomain(int_values=(0, 1), instances_per_functionality=2)
    sets = list(instance_sets(chopped, ("Total",), dom))
    # 2 relevant values, 2 interchangeable instances -> 3 multisets
    assert len(sets) == 3
    for specs in sets:
        assert [s.label for s in specs] == ["Total#0", "Total#1"]
