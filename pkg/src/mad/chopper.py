"""Transaction chopping: split each functionality at microservice boundaries.

After a decomposition, a functionality no longer runs as one transaction. It
becomes a chain of sub-transactions, one per maximal run of consecutive
statements whose tables live in the same microservice. Each sub-transaction
commits independently, which is where the anomalies come from.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ar import (
    DecompositionSpec,
    MonolithAR,
    Statement,
    monolith_to_json,
    validate_decomposition,
)


@dataclass(frozen=True)
class SubTransaction:
    """Maximal run of one functionality's statements inside one microservice."""

    name: str  # <functionality>_<k>, k is the 0-based split index
    operations: tuple[Statement, ...]
    original_transaction: str
    microservice: str


@dataclass(frozen=True)
class MicroservicesAR:
    monolith: MonolithAR
    decomposition: DecompositionSpec
    sub_transactions: tuple[SubTransaction, ...]

    def of_functionality(self, fname: str) -> tuple[SubTransaction, ...]:
        return tuple(s for s in self.sub_transactions if s.original_transaction == fname)

    def sub_transaction(self, name: str) -> SubTransaction:
        for s in self.sub_transactions:
            if s.name == name:
                return s
        raise KeyError(name)


def chop(ar: MonolithAR, d: DecompositionSpec) -> MicroservicesAR:
    """Split every functionality into sub-transactions along service boundaries.

    A new sub-transaction starts exactly when a statement's table belongs to a
    different microservice than the previous statement's table. Statement-less
    functionalities produce no sub-transactions.
    """
    validate_decomposition(d, ar.schema)
    service_of = d.table_to_service()
    subs: list[SubTransaction] = []
    for f in ar.functionalities:
        run: list[Statement] = []
        run_service = ""
        k = 0

        def close(run: list[Statement], service: str, k: int) -> None:
            subs.append(SubTransaction(
                name=f"{f.name}_{k}",
                operations=tuple(run),
                original_transaction=f.name,
                microservice=service,
            ))

        for stmt in f.statements:
            service = service_of[stmt.table]
            if run and service != run_service:
                close(run, run_service, k)
                k += 1
                run = []
            run.append(stmt)
            run_service = service
        if run:
            close(run, run_service, k)
    return MicroservicesAR(ar, d, tuple(subs))


def chop_to_json(m: MicroservicesAR) -> dict:
    """JSON view of the chopped program for the --emit-chop review dump."""
    from .ar import print_statement

    return {
        "decomposition": {name: list(tables) for name, tables in m.decomposition.clusters},
        "functionalities": monolith_to_json(m.monolith)["functionalities"],
        "sub_transactions": [
            {
                "name": s.name,
                "original_transaction": s.original_transaction,
                "microservice": s.microservice,
                "operations": [
                    {"name": op.name, "sql": print_statement(op)} for op in s.operations
                ],
            }
            for s in m.sub_transactions
        ],
    }
