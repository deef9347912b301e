"""Analysis orchestration: subset generation, parallel solving, collection.

A cycle of at most mcl operations with at least one same-transaction edge
touches at most mcl-1 distinct functionalities, so searching every subset
of size 1..mcl-1 (each problem forced to use all of its subset) covers
exactly the cycles the whole-program search finds, in many small
independent problems instead of one large one. All subsets are generated
up front, then solved concurrently; one failing subset never aborts the
others, and a global deadline turns missing results into a partial report
rather than an error.
"""

from __future__ import annotations

import itertools
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

from .ar import ArError
from .chopper import MicroservicesAR
from .encoder import EncodeError, build_conflict_table, encode_combination, problem_filename
from .solver import (
    DEFAULT_CHECK_TIMEOUT,
    DEFAULT_MODEL_CAP,
    SolverError,
    SolverPool,
    enumerate_cycles,
    find_solver,
)
from .witness import CycleWitness, InternalConsistencyError, canonical_key, canonicalize

DEFAULT_GLOBAL_TIMEOUT = 14_400.0


class ConfigError(ArError):
    """Rejected analysis configuration."""


@dataclass(frozen=True)
class AnalysisConfig:
    mcl: int = 4
    threads: Optional[int] = None  # None picks a small CPU-based default
    divide_and_conquer: bool = True
    solver: Optional[str] = None
    check_timeout: float = DEFAULT_CHECK_TIMEOUT
    model_cap: int = DEFAULT_MODEL_CAP
    global_timeout: float = DEFAULT_GLOBAL_TIMEOUT

    def __post_init__(self) -> None:
        if self.mcl < 3:
            raise ConfigError(f"maximum cycle length must be at least 3, got {self.mcl}")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("thread count must be positive")
        if self.check_timeout <= 0 or self.global_timeout <= 0:
            raise ConfigError("timeouts must be positive")
        if self.model_cap < 1:
            raise ConfigError("model cap must be positive")


def generate_combinations(names: tuple[str, ...], mcl: int) -> list[tuple[str, ...]]:
    """All functionality subsets a length-mcl cycle can involve.

    Sizes run from 1 to mcl-1; within a size, subsets are in sorted name
    order. Every subset is itself sorted.
    """
    if mcl < 3:
        raise ConfigError(f"maximum cycle length must be at least 3, got {mcl}")
    ordered = sorted(names)
    out: list[tuple[str, ...]] = []
    for size in range(1, min(mcl - 1, len(ordered)) + 1):
        out.extend(itertools.combinations(ordered, size))
    return out


@dataclass(frozen=True)
class CombinationOutcome:
    subset: tuple[str, ...]
    status: str  # complete | cap_reached | timeout | unknown | skipped | error
    models: int = 0
    witnesses: int = 0
    seconds: float = 0.0
    error: Optional[str] = None

    @property
    def complete(self) -> bool:
        return self.status == "complete"


@dataclass(frozen=True)
class AnalysisResult:
    micro: MicroservicesAR
    mcl: int
    divide_and_conquer: bool
    combinations: tuple[CombinationOutcome, ...]
    witnesses: tuple[CycleWitness, ...]  # canonical, deduplicated, sorted
    generation_seconds: float
    solving_seconds: float
    elapsed_seconds: float

    @property
    def complete(self) -> bool:
        return all(c.complete for c in self.combinations)


def _default_threads() -> int:
    return min(8, os.cpu_count() or 1)


def run_analysis(micro: MicroservicesAR, config: AnalysisConfig = AnalysisConfig(),
                 dump_dir: Optional[str] = None) -> AnalysisResult:
    """Search every relevant functionality subset for dependency cycles."""
    started = time.monotonic()
    deadline = started + config.global_timeout
    fnames = tuple(micro.monolith.functionality_names())

    gen_started = time.monotonic()
    if config.divide_and_conquer:
        subsets = generate_combinations(fnames, config.mcl)
        participation = True
    else:
        subsets = [tuple(sorted(fnames))]
        participation = False
    table = build_conflict_table(micro)
    generation_seconds = time.monotonic() - gen_started

    solver_path = find_solver(config.solver)

    solve_started = time.monotonic()
    outcomes: list[Optional[CombinationOutcome]] = [None] * len(subsets)
    collected: dict[tuple, CycleWitness] = {}

    with SolverPool(solver_path) as pool:

        def solve(subset: tuple[str, ...]) -> tuple[CombinationOutcome, list[CycleWitness]]:
            t0 = time.monotonic()
            if t0 >= deadline:
                return CombinationOutcome(subset, "skipped"), []
            try:
                problem = encode_combination(micro, table, subset, config.mcl,
                                             participation=participation)
                if dump_dir is not None:
                    path = os.path.join(dump_dir, problem_filename(subset))
                    with open(path, "w", encoding="utf-8") as fh:
                        fh.write(problem.script)
            except (EncodeError, InternalConsistencyError, OSError) as exc:
                return CombinationOutcome(subset, "error", seconds=time.monotonic() - t0,
                                          error=str(exc)), []
            # A broken session (crashed process, garbled reply) is recoverable:
            # enumeration restarts from scratch, so retry on a fresh one.
            result = None
            error_text = None
            for _ in range(3):
                session = pool.session()
                try:
                    result = enumerate_cycles(problem, session,
                                              check_timeout=config.check_timeout,
                                              model_cap=config.model_cap,
                                              deadline=deadline)
                    break
                except (SolverError, InternalConsistencyError, OSError) as exc:
                    session.kill()
                    error_text = str(exc)
                    if time.monotonic() >= deadline:
                        break
            if result is None:
                return CombinationOutcome(subset, "error", seconds=time.monotonic() - t0,
                                          error=error_text), []
            return (CombinationOutcome(subset, result.status, result.models,
                                       len(result.witnesses), time.monotonic() - t0),
                    list(result.witnesses))

        with ThreadPoolExecutor(max_workers=config.threads or _default_threads()) as executor:
            futures = [executor.submit(solve, subset) for subset in subsets]
            for i, future in enumerate(futures):
                outcome, found = future.result()
                outcomes[i] = outcome
                for w in found:
                    key = canonical_key(w)
                    if key not in collected:
                        collected[key] = canonicalize(w)
    solving_seconds = time.monotonic() - solve_started

    witnesses = tuple(collected[k] for k in sorted(collected))
    return AnalysisResult(
        micro=micro,
        mcl=config.mcl,
        divide_and_conquer=config.divide_and_conquer,
        combinations=tuple(o for o in outcomes if o is not None),
        witnesses=witnesses,
        generation_seconds=generation_seconds,
        solving_seconds=solving_seconds,
        elapsed_seconds=time.monotonic() - started,
    )
