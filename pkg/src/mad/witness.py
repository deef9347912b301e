"""Cycle witnesses decoded from solver models.

A witness is a directed cycle over operation instances. Edges are either
same-transaction links (ST: same sub-transaction instance, SOT: same original
functionality instance but different sub-transactions) or dependency edges
(WR, RW, WW). Witness identity for counting and blocking is the rotation
of the (operation name, edge kind) sequence, not the arbitrary instance ids
the solver happened to pick.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .ar import ArError

SAME_TX_KINDS = ("ST", "SOT")
DEPENDENCY_KINDS = ("WR", "RW", "WW")
EDGE_KINDS = SAME_TX_KINDS + DEPENDENCY_KINDS


class InternalConsistencyError(ArError):
    """A decoded model violates the cycle shape the problem asserted."""


@dataclass(frozen=True)
class WitnessNode:
    oname: str
    origtx_instance: str  # functionality instance id, e.g. "Transfer#0"
    parent_instance: str  # sub-transaction instance id, e.g. "Transfer_1#0"
    microservice: str
    otime: int


@dataclass(frozen=True)
class CycleWitness:
    """nodes[i] --edges[i]--> nodes[(i+1) % n], closing a cycle."""

    nodes: tuple[WitnessNode, ...]
    edges: tuple[str, ...]
    subset: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.nodes)

    def labeled_sequence(self) -> tuple[tuple[str, str], ...]:
        return tuple((n.oname, e) for n, e in zip(self.nodes, self.edges))

    def dependency_kinds(self) -> tuple[str, ...]:
        """Multiset of dependency-edge kinds, sorted."""
        return tuple(sorted(e for e in self.edges if e in DEPENDENCY_KINDS))

    def functionalities(self) -> tuple[str, ...]:
        return tuple(sorted({n.origtx_instance.rsplit("#", 1)[0] for n in self.nodes}))

    def sub_transactions(self) -> tuple[str, ...]:
        return tuple(sorted({n.parent_instance.rsplit("#", 1)[0] for n in self.nodes}))


def validate_witness(w: CycleWitness) -> None:
    """Check the shape every asserted cycle must have; a failure here means
    the encoder or decoder is wrong, not the input."""
    n = len(w.nodes)
    if n < 3:
        raise InternalConsistencyError(f"cycle of {n} nodes, need at least 3")
    if len(w.edges) != n:
        raise InternalConsistencyError("edge count does not close the node cycle")
    for e in w.edges:
        if e not in EDGE_KINDS:
            raise InternalConsistencyError(f"unknown edge kind {e!r}")
    same_tx = sum(1 for e in w.edges if e in SAME_TX_KINDS)
    deps = sum(1 for e in w.edges if e in DEPENDENCY_KINDS)
    if same_tx < 1:
        raise InternalConsistencyError("cycle has no ST/SOT edge")
    if deps < 2:
        raise InternalConsistencyError(f"cycle has {deps} dependency edges, need at least 2")
    for i, kind in enumerate(w.edges):
        a, b = w.nodes[i], w.nodes[(i + 1) % n]
        if kind == "ST":
            if a.parent_instance != b.parent_instance:
                raise InternalConsistencyError(
                    f"ST edge between different sub-transaction instances {a.oname}->{b.oname}")
        elif kind == "SOT":
            if a.origtx_instance != b.origtx_instance:
                raise InternalConsistencyError(
                    f"SOT edge between different functionality instances {a.oname}->{b.oname}")
            if a.parent_instance == b.parent_instance:
                raise InternalConsistencyError(
                    f"SOT edge inside one sub-transaction instance {a.oname}->{b.oname}")
        else:
            if a.origtx_instance == b.origtx_instance:
                raise InternalConsistencyError(
                    f"{kind} edge inside one functionality instance {a.oname}->{b.oname}")


def rotate(w: CycleWitness, offset: int) -> CycleWitness:
    n = len(w.nodes)
    offset %= n
    return replace(
        w,
        nodes=w.nodes[offset:] + w.nodes[:offset],
        edges=w.edges[offset:] + w.edges[:offset],
    )


def canonical_key(w: CycleWitness) -> tuple[tuple[str, str], ...]:
    """Rotation-invariant identity: least rotation of the (oname, kind) list."""
    seq = w.labeled_sequence()
    n = len(seq)
    return min(tuple(seq[(i + r) % n] for i in range(n)) for r in range(n))


def canonicalize(w: CycleWitness) -> CycleWitness:
    seq = w.labeled_sequence()
    n = len(seq)
    best = min(range(n), key=lambda r: tuple(seq[(i + r) % n] for i in range(n)))
    return rotate(w, best)


def embeds(core: CycleWitness, w: CycleWitness) -> bool:
    """True iff `w` contains `core`: the core's nodes appear around `w` in
    order with matching onames, every core dependency edge maps to one `w`
    edge of the same kind, and every core ST/SOT edge maps to a path of one
    or more `w` edges (the inserted operations live on those stretches)."""
    n, m = len(core), len(w)
    if n >= m:
        return False

    def walk(ci: int, pos: int, consumed: int) -> bool:
        # core edge ci leaves core node ci at w position pos (mod m)
        if ci == n:
            return consumed == m
        kind = core.edges[ci]
        target = core.nodes[(ci + 1) % n].oname
        if kind in DEPENDENCY_KINDS:
            if w.edges[pos % m] != kind or w.nodes[(pos + 1) % m].oname != target:
                return False
            return walk(ci + 1, pos + 1, consumed + 1)
        for steps in range(1, m - consumed - (n - ci - 1) + 1):
            if w.nodes[(pos + steps) % m].oname == target:
                if walk(ci + 1, pos + steps, consumed + steps):
                    return True
        return False

    for start in range(m):
        if w.nodes[start].oname == core.nodes[0].oname and walk(0, start, 0):
            return True
    return False
