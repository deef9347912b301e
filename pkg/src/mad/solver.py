"""External SMT solver driver.

Talks SMT-LIB2 to a `z3 -in`-compatible process over pipes, enumerates the
satisfying models of a combination problem, decodes each into one or more
labeled dependency cycles, and blocks every placement of each labeled cycle
before asking again. Sessions are reused across problems within one thread
(a `(reset)` separates problems) because process startup dominates small
solves; a wall-clock watchdog kills a stuck process and surrenders the
session instead of hanging. Sessions heal themselves after a backend crash
or a garbled reply by respawning the process and replaying their state.
"""

from __future__ import annotations

import itertools
import os
import queue
import re
import shutil
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .ar import ArError
from .encoder import CombinationProblem, DEPENDENCY_PREDICATES
from .witness import CycleWitness, InternalConsistencyError, WitnessNode, validate_witness


class SolverError(ArError):
    """The solver process misbehaved (bad output, crash, protocol error)."""


class SolverUnavailable(SolverError):
    """No usable solver binary could be found."""


class SolverTimeout(SolverError):
    """A solver call exceeded its wall-clock budget and was killed."""


DEFAULT_CHECK_TIMEOUT = 300.0
DEFAULT_MODEL_CAP = 10_000


def find_solver(explicit: Optional[str] = None) -> str:
    """Pick the solver binary: explicit path, then MAD_SOLVER, then z3."""
    for candidate in (explicit, os.environ.get("MAD_SOLVER")):
        if candidate:
            found = shutil.which(candidate) or (candidate if os.path.isfile(candidate) else None)
            if not found:
                raise SolverUnavailable(f"solver not found: {candidate}")
            return found
    found = shutil.which("z3")
    if not found:
        raise SolverUnavailable(
            "no SMT solver found: pass --solver, set MAD_SOLVER, or put z3 on PATH")
    return found


# ---------------------------------------------------------------------------
# S-expressions
# ---------------------------------------------------------------------------

Sexp = Union[str, list]


def parse_sexps(text: str) -> list[Sexp]:
    """Parse a sequence of s-expressions (atoms are plain strings)."""
    tokens: list[str] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in "()":
            tokens.append(ch)
            i += 1
        elif ch.isspace():
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch == '"':
            j = i + 1
            while j < n:
                if text[j] == '"':
                    if j + 1 < n and text[j + 1] == '"':
                        j += 2
                        continue
                    break
                j += 1
            tokens.append(text[i:j + 1])
            i = j + 1
        elif ch == "|":
            j = text.index("|", i + 1)
            tokens.append(text[i:j + 1])
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in '();"|':
                j += 1
            tokens.append(text[i:j])
            i = j
    out: list[Sexp] = []
    stack: list[list] = []
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if not stack:
                raise SolverError(f"unbalanced solver output: {text[:200]!r}")
            done = stack.pop()
            (stack[-1] if stack else out).append(done)
        else:
            (stack[-1] if stack else out).append(tok)
    if stack:
        raise SolverError(f"unterminated solver output: {text[:200]!r}")
    return out


def _as_int(value: Sexp) -> int:
    if isinstance(value, str):
        return int(value)
    if isinstance(value, list) and len(value) == 2 and value[0] == "-":
        return -_as_int(value[1])
    raise SolverError(f"expected an integer, got {value!r}")


def _as_bool(value: Sexp) -> bool:
    if value == "true":
        return True
    if value == "false":
        return False
    raise SolverError(f"expected a boolean, got {value!r}")


# ---------------------------------------------------------------------------
# Session
# ---------------------------------------------------------------------------

class _SessionDied(Exception):
    """Internal: the solver process exited before answering."""


# Reply fragments that indicate the solver misread its input (seen with
# WASM builds that occasionally garble a batch in flight) rather than a
# genuine semantic error in the commands themselves.
_GARBLED_REPLY = re.compile(
    r"unexpected character|invalid s-expression|unexpected end of file")

# Replay transcripts beyond this size stop being worth the respawn.
_REPLAY_LIMIT = 8_000_000


class SolverSession:
    """One interactive solver process; commands are answered up to a marker.

    Every successful command is recorded (a `(reset)` starts the record
    over), so when the process dies unexpectedly or answers with a
    parse-level error for well-formed input, the session respawns the
    process, replays the recorded state, and retries the command.
    """

    def __init__(self, path: str):
        self.path = path
        self._seq = itertools.count()
        self._transcript: list[str] = []
        self._transcript_len = 0
        self._last_marker: Optional[str] = None
        self._closed = False
        self._spawn()

    def _spawn(self) -> None:
        self._proc = subprocess.Popen(
            [self.path, "-in"],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
        )
        self._lines: queue.Queue[Optional[str]] = queue.Queue()
        reader = threading.Thread(target=self._pump,
                                  args=(self._proc, self._lines), daemon=True)
        reader.start()

    @staticmethod
    def _pump(proc: subprocess.Popen, lines: "queue.Queue[Optional[str]]") -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            lines.put(line.rstrip("\n"))
        lines.put(None)

    @property
    def alive(self) -> bool:
        return not self._closed and self._proc.poll() is None

    def kill(self) -> None:
        self._closed = True
        if self._proc.poll() is None:
            self._proc.kill()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            pass

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                assert self._proc.stdin is not None
                self._proc.stdin.write("(exit)\n")
                self._proc.stdin.flush()
                self._proc.wait(timeout=2)
            except (OSError, subprocess.TimeoutExpired, ValueError):
                pass
        self.kill()

    def _write(self, payload: str) -> None:
        assert self._proc.stdin is not None
        try:
            self._proc.stdin.write(payload)
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise _SessionDied() from exc

    def _collect(self, marker: str, timeout: float) -> list[str]:
        deadline = time.monotonic() + timeout
        collected: list[str] = []
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self.kill()
                raise SolverTimeout(f"solver call exceeded {timeout:.0f}s")
            try:
                line = self._lines.get(timeout=min(remaining, 0.5))
            except queue.Empty:
                continue
            if line is None:
                raise _SessionDied()
            if line.strip() == marker:
                return collected
            if line.strip() and not line.lstrip().startswith("(warning"):
                collected.append(line)

    def _record(self, body: str, payload: str, marker: str) -> None:
        if body.strip() == "(reset)":
            self._transcript = []
            self._transcript_len = 0
        self._transcript.append(payload)
        self._transcript_len += len(payload)
        self._last_marker = marker

    def _respawn_and_replay(self, timeout: float) -> None:
        if self._proc.poll() is None:
            self._proc.kill()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                pass
        self._spawn()
        if not self._transcript:
            return
        assert self._last_marker is not None
        self._write("".join(self._transcript))
        self._collect(self._last_marker, max(timeout, 60.0))

    def command(self, text: str, timeout: float) -> list[str]:
        """Send commands plus an echo marker; return output lines before it.

        On timeout the process is killed and the session becomes unusable.
        """
        if self._closed:
            raise SolverError("solver session is closed")
        body = text.rstrip("\n")
        last_attempt = 2
        for attempt in range(last_attempt + 1):
            marker = f"sync-{next(self._seq)}"
            payload = body + f'\n(echo "{marker}")\n'
            lines: Optional[list[str]] = None
            try:
                if self._proc.poll() is not None:
                    raise _SessionDied()
                self._write(payload)
                lines = self._collect(marker, timeout)
                garbled = any(_GARBLED_REPLY.search(line) for line in lines
                              if line.lstrip().startswith("(error"))
            except _SessionDied:
                garbled = True
            if garbled and attempt < last_attempt and self._transcript_len <= _REPLAY_LIMIT:
                try:
                    self._respawn_and_replay(timeout)
                except _SessionDied as exc:
                    raise SolverError("solver died while replaying state") from exc
                continue
            if lines is None:
                raise SolverError("solver process exited unexpectedly")
            self._record(body, payload, marker)
            return lines
        raise SolverError("unreachable")  # pragma: no cover

    def run(self, text: str, timeout: float = 60.0) -> None:
        """Send commands that must produce no output."""
        lines = self.command(text, timeout)
        if lines:
            raise SolverError(f"unexpected solver output: {' '.join(lines)[:500]}")

    def reset(self, timeout: float = 30.0) -> None:
        self.run("(reset)", timeout)

    def check_sat(self, timeout: float) -> str:
        lines = self.command("(check-sat)", timeout)
        if not lines:
            raise SolverError("no answer to (check-sat)")
        answer = lines[-1].strip()
        if answer in ("sat", "unsat", "unknown"):
            return answer
        raise SolverError(f"unexpected (check-sat) answer: {' '.join(lines)[:500]}")

    def get_values(self, terms: Sequence[str], timeout: float) -> list[Sexp]:
        """Fetch model values for `terms`, in the same order."""
        lines = self.command(f"(get-value ({' '.join(terms)}))", timeout)
        body = "\n".join(lines)
        if "(error" in body:
            raise SolverError(f"(get-value) failed: {body[:500]}")
        parsed = parse_sexps(body)
        if len(parsed) != 1 or not isinstance(parsed[0], list) or len(parsed[0]) != len(terms):
            raise SolverError(f"malformed (get-value) answer: {body[:500]}")
        out = []
        for entry in parsed[0]:
            if not isinstance(entry, list) or len(entry) != 2:
                raise SolverError(f"malformed value pair: {entry!r}")
            out.append(entry[1])
        return out


class SolverPool:
    """Thread-local solver sessions over one binary."""

    def __init__(self, path: str):
        self.path = path
        self._local = threading.local()
        self._all: list[SolverSession] = []
        self._lock = threading.Lock()

    def session(self) -> SolverSession:
        s = getattr(self._local, "session", None)
        if s is None or not s.alive:
            s = SolverSession(self.path)
            self._local.session = s
            with self._lock:
                self._all.append(s)
        return s

    def close(self) -> None:
        with self._lock:
            sessions, self._all = self._all[:], []
        for s in sessions:
            s.close()

    def __enter__(self) -> "SolverPool":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# ---------------------------------------------------------------------------
# Model decoding
# ---------------------------------------------------------------------------

def _model_queries(problem: CombinationProblem) -> list[str]:
    consts = problem.constants
    terms = list(problem.cycle_flags)
    for c in consts:
        terms.append(f"(oname {c})")
        terms.append(f"(otime {c})")
    for a, b in itertools.combinations(consts, 2):
        terms.append(f"(= (origtx {a}) (origtx {b}))")
    for a, b in itertools.permutations(consts, 2):
        for kind in ("ST", "SOT", "WR", "RW", "WW"):
            terms.append(f"({kind} {a} {b})")
    return terms


def decode_model(problem: CombinationProblem, session: SolverSession,
                 timeout: float) -> list[CycleWitness]:
    """Read the current model and return every labeled cycle it shows."""
    consts = problem.constants
    terms = _model_queries(problem)
    values = dict(zip(terms, session.get_values(terms, timeout)))

    k = None
    for flag in problem.cycle_flags:
        if _as_bool(values[flag]):
            k = int(flag.split("_")[1])
            break
    if k is None:
        raise InternalConsistencyError("model satisfies no cycle length flag")
    members = consts[:k]

    const_to_op = {v: n for n, v in problem.op_const.items()}
    onames = {}
    otimes = {}
    for c in members:
        raw = values[f"(oname {c})"]
        if not isinstance(raw, str) or raw not in const_to_op:
            raise InternalConsistencyError(f"unknown operation name value {raw!r}")
        onames[c] = const_to_op[raw]
        otimes[c] = _as_int(values[f"(otime {c})"])

    # group cycle members into functionality instances, then number the
    # instances of each functionality by their earliest timestamp
    group_of = {c: c for c in members}
    for a, b in itertools.combinations(members, 2):
        if _as_bool(values[f"(= (origtx {a}) (origtx {b}))"]):
            ra, rb = group_of[a], group_of[b]
            if ra != rb:
                for c in members:
                    if group_of[c] == rb:
                        group_of[c] = ra
    groups: dict[str, list[str]] = {}
    for c in members:
        groups.setdefault(group_of[c], []).append(c)
    order = sorted(groups.values(), key=lambda g: min(otimes[c] for c in g))
    instance_index: dict[str, int] = {}
    per_functionality: dict[str, int] = {}
    for g in order:
        fname = problem.universe.functionality_of[onames[g[0]]]
        idx = per_functionality.get(fname, 0)
        per_functionality[fname] = idx + 1
        for c in g:
            instance_index[c] = idx

    nodes = []
    for c in members:
        name = onames[c]
        fname = problem.universe.functionality_of[name]
        tname = problem.universe.sub_transaction_of[name]
        idx = instance_index[c]
        nodes.append(WitnessNode(
            oname=name,
            origtx_instance=f"{fname}#{idx}",
            parent_instance=f"{tname}#{idx}",
            microservice=problem.universe.microservice_of[name],
            otime=otimes[c],
        ))

    choices: list[list[str]] = []
    for i, c in enumerate(members):
        d = members[(i + 1) % k]
        if _as_bool(values[f"(ST {c} {d})"]):
            choices.append(["ST"])
        elif _as_bool(values[f"(SOT {c} {d})"]):
            choices.append(["SOT"])
        else:
            kinds = [kind for kind in DEPENDENCY_PREDICATES
                     if _as_bool(values[f"({kind} {c} {d})"])]
            if not kinds:
                raise InternalConsistencyError(
                    f"edge {c} -> {d} carries no relation in the model")
            choices.append(kinds)

    witnesses = []
    for combo in itertools.product(*choices):
        w = CycleWitness(nodes=tuple(nodes), edges=tuple(combo), subset=problem.subset)
        validate_witness(w)
        witnesses.append(w)
    return witnesses


def blocking_clauses(problem: CombinationProblem, witness: CycleWitness) -> list[str]:
    """Forbid re-reporting this labeled cycle, in any rotation.

    Each clause is anchored to the reported cycle of its length — the cyc_n
    flag plus the first n constants — rather than to any n constants of the
    model. An unanchored block would also kill every model that merely
    CONTAINS the ring (a longer cycle built around it always does), making
    extension discovery depend on enumeration order.
    """
    n = len(witness)
    flag = f"cyc_{n}"
    members = problem.constants[:n]
    clauses = []
    for r in range(n):
        atoms = [flag]
        for i in range(n):
            node = witness.nodes[(r + i) % n]
            kind = witness.edges[(r + i) % n]
            atoms.append(f"(= (oname {members[i]}) {problem.op_const[node.oname]})")
            atoms.append(f"({kind} {members[i]} {members[(i + 1) % n]})")
        clauses.append(f"(assert (not (and {' '.join(atoms)})))")
    return clauses


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnumerationResult:
    """Everything one combination problem yielded."""

    witnesses: tuple[CycleWitness, ...]
    status: str  # complete | cap_reached | timeout | unknown
    models: int
    solve_seconds: float

    @property
    def complete(self) -> bool:
        return self.status == "complete"


def enumerate_cycles(
    problem: CombinationProblem,
    session: SolverSession,
    check_timeout: float = DEFAULT_CHECK_TIMEOUT,
    model_cap: int = DEFAULT_MODEL_CAP,
    deadline: Optional[float] = None,
) -> EnumerationResult:
    """Enumerate all labeled cycles of one combination problem."""
    started = time.monotonic()

    def done(status: str, witnesses: list, models: int) -> EnumerationResult:
        return EnumerationResult(tuple(witnesses), status, models,
                                 time.monotonic() - started)

    if problem.trivially_unsat:
        return done("complete", [], 0)

    def budget() -> float:
        if deadline is None:
            return check_timeout
        return min(check_timeout, deadline - time.monotonic())

    witnesses: list[CycleWitness] = []
    models = 0
    try:
        session.reset()
        session.run(problem.script, max(budget(), 30.0))
        while True:
            if models >= model_cap:
                return done("cap_reached", witnesses, models)
            remaining = budget()
            if remaining <= 0:
                session.kill()
                return done("timeout", witnesses, models)
            answer = session.check_sat(remaining)
            if answer == "unsat":
                return done("complete", witnesses, models)
            if answer == "unknown":
                return done("unknown", witnesses, models)
            models += 1
            found = decode_model(problem, session, max(budget(), 5.0))
            blocks = []
            for w in found:
                witnesses.append(w)
                blocks.extend(blocking_clauses(problem, w))
            session.run("\n".join(blocks), max(budget(), 5.0))
    except SolverTimeout:
        return done("timeout", witnesses, models)
