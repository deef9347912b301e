"""Witness canonicalization, validation and embedding tests."""

from __future__ import annotations

import pytest

from mad.witness import (
    CycleWitness,
    InternalConsistencyError,
    WitnessNode,
    canonical_key,
    canonicalize,
    embeds,
    rotate,
    validate_witness,
)


def node(oname, tx="F#0", parent=None, ms="m1", otime=0):
    return WitnessNode(oname, tx, parent or tx + "/0", ms, otime)


def cycle(spec, subset=("F", "G")):
    """spec: list of (oname, origtx, parent, kind-to-next)."""
    nodes = tuple(
        WitnessNode(o, tx, parent, "m1", i) for i, (o, tx, parent, _) in enumerate(spec)
    )
    edges = tuple(kind for _, _, _, kind in spec)
    return CycleWitness(nodes, edges, subset)


def fig_cycle():
    # the bank scenario: Total reads around a Transfer that it half-sees
    return cycle([
        ("Total_s0", "Total#0", "Total_0#0", "SOT"),
        ("Total_s1", "Total#0", "Total_1#0", "RW"),
        ("Transfer_s0", "Transfer#0", "Transfer_0#0", "SOT"),
        ("Transfer_s1", "Transfer#0", "Transfer_1#0", "WR"),
    ])


def test_validate_accepts_good_cycle():
    validate_witness(fig_cycle())


def test_validate_rejects_short_or_depless_cycles():
    w = fig_cycle()
    with pytest.raises(InternalConsistencyError, match="at least 3"):
        validate_witness(CycleWitness(w.nodes[:2], w.edges[:2], w.subset))
    only_one_dep = cycle([
        ("a", "F#0", "F_0#0", "ST"),
        ("b", "F#0", "F_0#0", "ST"),
        ("c", "F#0", "F_0#0", "WW"),
    ])
    with pytest.raises(InternalConsistencyError, match="dependency"):
        validate_witness(only_one_dep)


def test_validate_checks_instance_consistency():
    bad_st = cycle([
        ("a", "F#0", "F_0#0", "ST"),
        ("b", "F#0", "F_1#0", "WR"),  # ST edge crosses sub-transactions
        ("c", "G#0", "G_0#0", "RW"),
    ])
    with pytest.raises(InternalConsistencyError, match="ST edge"):
        validate_witness(bad_st)
    dep_within_instance = cycle([
        ("a", "F#0", "F_0#0", "SOT"),
        ("b", "F#0", "F_1#0", "WW"),  # dependency edge must leave the instance
        ("c", "F#0", "F_0#0", "RW"),
    ])
    with pytest.raises(InternalConsistencyError, match="WW edge"):
        validate_witness(dep_within_instance)


def test_canonical_rotation_invariance():
    w = fig_cycle()
    keys = {canonical_key(rotate(w, r)) for r in range(len(w))}
    assert len(keys) == 1
    canon = canonicalize(w)
    assert canon.labeled_sequence()[0][0] == min(n.oname for n in w.nodes)
    assert canonical_key(canon) == canon.labeled_sequence()


def test_canonical_key_distinguishes_kinds():
    a = fig_cycle()
    b = cycle([
        ("Total_s0", "Total#0", "Total_0#0", "SOT"),
        ("Total_s1", "Total#0", "Total_1#0", "WR"),
        ("Transfer_s0", "Transfer#0", "Transfer_0#0", "SOT"),
        ("Transfer_s1", "Transfer#0", "Transfer_1#0", "RW"),
    ])
    assert canonical_key(a) != canonical_key(b)


def test_dependency_kinds_multiset():
    assert fig_cycle().dependency_kinds() == ("RW", "WR")


def test_functionality_and_sub_transaction_sets():
    w = fig_cycle()
    assert w.functionalities() == ("Total", "Transfer")
    assert w.sub_transactions() == ("Total_0", "Total_1", "Transfer_0", "Transfer_1")


def test_embeds_inserted_operation_on_same_tx_stretch():
    core = fig_cycle()
    extended = cycle([
        ("Total_s0", "Total#0", "Total_0#0", "SOT"),
        ("Total_mid", "Total#0", "Total_1#0", "SOT"),  # extra hop on the SOT stretch
        ("Total_s1", "Total#0", "Total_2#0", "RW"),
        ("Transfer_s0", "Transfer#0", "Transfer_0#0", "SOT"),
        ("Transfer_s1", "Transfer#0", "Transfer_1#0", "WR"),
    ])
    assert embeds(core, extended)
    assert not embeds(extended, core)
    assert not embeds(core, core)  # strictly shorter only


def test_embeds_requires_matching_dependency_edges():
    core = fig_cycle()
    wrong_kind = cycle([
        ("Total_s0", "Total#0", "Total_0#0", "SOT"),
        ("Total_mid", "Total#0", "Total_1#0", "SOT"),
        ("Total_s1", "Total#0", "Total_2#0", "WW"),  # RW in the core
        ("Transfer_s0", "Transfer#0", "Transfer_0#0", "SOT"),
        ("Transfer_s1", "Transfer#0", "Transfer_1#0", "WR"),
    ])
    assert not embeds(core, wrong_kind)
    missing_node = cycle([
        ("Total_s0", "Total#0", "Total_0#0", "SOT"),
        ("Other", "Total#0", "Total_1#0", "RW"),
        ("Transfer_s0", "Transfer#0", "Transfer_0#0", "SOT"),
        ("Transfer_s1", "Transfer#0", "Transfer_1#0", "WR"),
        ("Pad", "Pad#0", "Pad_0#0", "WR"),
    ])
    assert not embeds(core, missing_node)


def test_embeds_dependency_edges_must_be_adjacent():
    core = cycle([
        ("a", "F#0", "F_0#0", "WW"),
        ("b", "G#0", "G_0#0", "WW"),
        ("c", "H#0", "H_0#0", "ST"),
    ])
    # same onames and kinds, but a stranger sits inside the WW edge
    split = cycle([
        ("a", "F#0", "F_0#0", "WW"),
        ("x", "X#0", "X_0#0", "WW"),
        ("b", "G#0", "G_0#0", "WW"),
        ("c", "H#0", "H_0#0", "ST"),
    ])
    assert not embeds(core, split)
