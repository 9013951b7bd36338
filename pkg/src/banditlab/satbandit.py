"""SAT-based class that needs two queries but hides a SAT instance.

Actions are ``Star`` (reveals the formula code), ``Assignment`` (n-bit
assignments) and ``Index`` (integers ``1..2^n``). Assignments are stored as
integers with variable 1 in the most significant bit, so the natural order on
assignments is integer order.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .core import DomainError, History, ImplicitClass, Learner, ProtocolError, Query, Stop

BRUTE_FORCE_CAP = 24
Literal = tuple[int, bool]
Clause = tuple[Literal, Literal, Literal]


class DecodeError(ValueError):
    pass


class NoConsistentFunctionError(ValueError):
    pass


@dataclass(frozen=True)
class Formula3CNF:
    """3-CNF formula over variables ``0..n-1``; a literal is ``(var, negated)``."""

    n: int
    clauses: tuple[Clause, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("a formula needs n >= 1 variables")
        clauses = tuple(tuple((int(v), bool(neg)) for v, neg in c) for c in self.clauses)
        if len(clauses) > self.n**2:
            raise DomainError(f"{len(clauses)} clauses exceeds n^2 = {self.n ** 2}")
        for c in clauses:
            if len(c) != 3:
                raise DomainError("every clause needs exactly 3 literals")
            for v, _ in c:
                if not 0 <= v < self.n:
                    raise DomainError(f"variable {v} out of range for n={self.n}")
        object.__setattr__(self, "clauses", clauses)

    def satisfied_by(self, assignment: int) -> bool:
        """O(n^2) check of one assignment."""
        n = self.n
        for clause in self.clauses:
            if not any(((assignment >> (n - 1 - v)) & 1) != neg for v, neg in clause):
                return False
        return True


@dataclass(frozen=True)
class Star:
    pass


@dataclass(frozen=True)
class Assignment:
    bits: int


@dataclass(frozen=True)
class Index:
    c: int


SatAction = Star | Assignment | Index


def action_to_id(a: SatAction, n: int) -> int:
    """Dense index: Star -> 0, assignments -> 1..2^n, indices -> 2^n+1..2^{n+1}."""
    if isinstance(a, Star):
        return 0
    if isinstance(a, Assignment):
        return 1 + a.bits
    return 2**n + a.c


def id_to_action(i: int, n: int) -> SatAction:
    if i == 0:
        return Star()
    if i <= 2**n:
        return Assignment(i - 1)
    if i <= 2 ** (n + 1):
        return Index(i - 2**n)
    raise DomainError(f"action id {i} out of range")


def _check_action(a: SatAction, n: int) -> None:
    if isinstance(a, Assignment) and not 0 <= a.bits < 2**n:
        raise DomainError(f"assignment {a.bits} out of range for n={n}")
    if isinstance(a, Index) and not 1 <= a.c <= 2**n:
        raise DomainError(f"index {a.c} out of range for n={n}")


# -- codec -------------------------------------------------------------------

def _widths(n: int) -> tuple[int, int]:
    header = math.ceil(math.log2(n * n + 1))
    literal = math.ceil(math.log2(n)) + 1
    return header, literal


def _bitstring(phi: Formula3CNF) -> tuple[int, int]:
    header, lit = _widths(phi.n)
    value, length = len(phi.clauses), header
    for clause in phi.clauses:
        for v, neg in clause:
            value = (value << lit) | (v << 1) | int(neg)
            length += lit
    return value, length


def encode_formula(phi: Formula3CNF) -> Fraction:
    """Map a formula injectively into [1/4, 1/2).

    Bit layout: clause count in ``ceil(log2(n^2+1))`` bits, then each literal
    as its variable index in ``ceil(log2 n)`` bits followed by a negation bit.
    The bitstring ``b`` becomes ``1/4 + 0.b / 5``.
    """
    if len(phi.clauses) > phi.n**2:
        raise DomainError("too many clauses")
    value, length = _bitstring(phi)
    return Fraction(1, 4) + Fraction(value, 2**length) / 5


def decode_formula(r: Fraction | float, n: int) -> Formula3CNF:
    """Exact inverse of :func:`encode_formula` for ``n`` variables."""
    x = (Fraction(r) - Fraction(1, 4)) * 5
    if not 0 <= x < 1:
        raise DecodeError(f"{r} is outside the codec range")
    den = x.denominator
    if den & (den - 1):
        raise DecodeError(f"{r} does not decode to a finite bitstring")
    header, lit = _widths(n)
    m = int(x * 2**header)
    if m > n * n:
        raise DecodeError(f"header announces {m} clauses, more than n^2")
    length = header + 3 * m * lit
    scaled = x * 2**length
    if scaled.denominator != 1:
        raise DecodeError(f"{r} has bits beyond the announced formula length")
    bits = int(scaled) - (m << (length - header))
    clauses = []
    mask = (1 << lit) - 1
    for j in range(m):
        lits = []
        for k in range(3):
            shift = length - header - (3 * j + k + 1) * lit
            chunk = (bits >> shift) & mask
            v, neg = chunk >> 1, bool(chunk & 1)
            if v >= n:
                raise DecodeError(f"literal variable {v} out of range for n={n}")
            lits.append((v, neg))
        clauses.append(tuple(lits))
    return Formula3CNF(n, tuple(clauses))


# -- SAT ground truth --------------------------------------------------------

def min_sat_assignment(phi: Formula3CNF, cap: int = BRUTE_FORCE_CAP) -> int | None:
    """Smallest satisfying assignment in integer order, by exhaustive search."""
    n = phi.n
    if n > cap:
        raise DomainError(f"brute force refused: n={n} exceeds cap {cap}")
    if not phi.clauses:
        return 0
    block = 1 << min(n, 20)
    for start in range(0, 2**n, block):
        xs = np.arange(start, min(start + block, 2**n), dtype=np.int64)
        ok = np.ones(len(xs), dtype=bool)
        for clause in phi.clauses:
            sat = np.zeros(len(xs), dtype=bool)
            for v, neg in clause:
                bit = ((xs >> (n - 1 - v)) & 1).astype(bool)
                sat |= ~bit if neg else bit
            ok &= sat
        hits = np.flatnonzero(ok)
        if len(hits):
            return int(xs[hits[0]])
    return None


def unique_assignment_formula(n: int, assignment: int) -> Formula3CNF:
    """Formula whose only satisfying assignment is ``assignment``.

    One clause per variable, the literal that ``assignment`` makes true
    repeated three times.
    """
    clauses = []
    for v in range(n):
        neg = not (assignment >> (n - 1 - v)) & 1
        clauses.append(((v, neg),) * 3)
    return Formula3CNF(n, tuple(clauses))


# -- the class ---------------------------------------------------------------

@dataclass(frozen=True)
class SatFunction:
    """``f_phi`` when ``c`` is None, else ``f_{phi,c}`` (phi must be satisfiable).

    ``astar`` caches the minimal satisfying assignment when it is known
    without search.
    """

    phi: Formula3CNF
    c: int | None = None
    astar: int | None = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return self.phi.n

    def minimal_assignment(self) -> int | None:
        if self.astar is not None:
            return self.astar
        a = min_sat_assignment(self.phi)
        object.__setattr__(self, "astar", a)
        return a


def eval_sat_function(f: SatFunction, a: SatAction) -> Fraction:
    n = f.n
    _check_action(a, n)
    if isinstance(a, Star):
        return encode_formula(f.phi)
    if f.c is None:
        return Fraction(0)
    if isinstance(a, Index):
        return Fraction(1) if a.c == f.c else Fraction(0)
    astar = f.minimal_assignment()
    if astar is None:
        raise DomainError("f_{phi,c} requires a satisfiable formula")
    return Fraction(f.c, 2 ** (n + 1)) if a.bits == astar else Fraction(0)


def sat_class(n: int) -> ImplicitClass:
    def contains(f: SatFunction) -> bool:
        if f.n != n or len(f.phi.clauses) > n * n:
            return False
        if f.c is None:
            return True
        return 1 <= f.c <= 2**n and f.minimal_assignment() is not None

    return ImplicitClass(
        evaluator=eval_sat_function,
        n_actions=2 ** (n + 1) + 1,
        contains=contains,
        name="sat",
        params={"n": n},
    )


def maximize_sat(f: SatFunction, epsilon: float = 0.0) -> SatAction:
    """Optimal action read off the representation; any eps < 1/2 gives the same answer."""
    return Index(f.c) if f.c is not None else Star()


# -- oracles -----------------------------------------------------------------

def erm_consistent(
    n: int,
    S: Iterable[tuple[SatAction, Fraction]],
    verify: bool = False,
) -> SatFunction:
    """Return a member of the class agreeing with every observed pair.

    The work is linear in ``|S|`` plus ``O(n^2)`` formula handling; it never
    searches over assignments. With ``verify=True`` the result is also
    re-evaluated on ``S`` (which may run the brute-force SAT search).
    """
    S = [(a, Fraction(r)) for a, r in S]
    star_vals: set[Fraction] = set()
    a2_hits: dict[int, Fraction] = {}
    a2_zeros: set[int] = set()
    a3_hits: set[int] = set()
    a3_zeros: set[int] = set()
    for a, r in S:
        _check_action(a, n)
        if isinstance(a, Star):
            star_vals.add(r)
        elif isinstance(a, Assignment):
            if r == 0:
                a2_zeros.add(a.bits)
            else:
                a2_hits[a.bits] = r
        else:
            if r == 0:
                a3_zeros.add(a.c)
            elif r == 1:
                a3_hits.add(a.c)
            else:
                raise NoConsistentFunctionError(f"index action {a.c} observed {r}, not 0 or 1")

    if len(star_vals) > 1:
        raise NoConsistentFunctionError("two different values observed at Star")
    if len(set(a2_hits)) > 1 or len(set(a2_hits.values())) > 1:
        raise NoConsistentFunctionError("nonzero values at two different assignments")
    if len(a3_hits) > 1:
        raise NoConsistentFunctionError("value 1 at two different index actions")
    if set(a2_hits) & a2_zeros:
        raise NoConsistentFunctionError("one assignment observed with two values")

    phi = None
    if star_vals:
        try:
            phi = decode_formula(next(iter(star_vals)), n)
        except DecodeError as exc:
            raise NoConsistentFunctionError(f"Star value is not a formula code: {exc}") from exc

    c = None
    astar = None
    if a2_hits:
        astar, v = next(iter(a2_hits.items()))
        scaled = v * 2 ** (n + 1)
        if scaled.denominator != 1 or not 1 <= scaled <= 2**n:
            raise NoConsistentFunctionError(f"assignment value {v} is not c/2^(n+1)")
        c = int(scaled)
    if a3_hits:
        c3 = next(iter(a3_hits))
        if c is not None and c3 != c:
            raise NoConsistentFunctionError("index and assignment observations disagree on c")
        c = c3
    if c is not None and c in a3_zeros:
        raise NoConsistentFunctionError(f"index {c} observed both 0 and as optimal")

    if phi is not None:
        if astar is not None and not phi.satisfied_by(astar):
            raise NoConsistentFunctionError("nonzero assignment does not satisfy the formula")
        out = SatFunction(phi, c, astar)
    elif c is None:
        out = SatFunction(Formula3CNF(n, ()), None)
    elif astar is not None:
        out = SatFunction(unique_assignment_formula(n, astar), c, astar)
    else:
        # only c is known: plant the optimum's breadcrumb at an unobserved assignment
        y = next((x for x in range(2**n) if x not in a2_zeros), None)
        if y is None:
            raise NoConsistentFunctionError("every assignment observed 0 but an index read 1")
        out = SatFunction(unique_assignment_formula(n, y), c, y)

    if verify:
        for a, r in S:
            if eval_sat_function(out, a) != r:
                raise NoConsistentFunctionError(f"no member agrees with ({a}, {r})")
    return out


class OnlineEstimator:
    """Predicts with a consistent member of the class fitted to the prefix so far."""

    def __init__(self, n: int):
        self.n = n

    def step(self, history: Sequence[tuple[SatAction, Fraction]]) -> SatFunction:
        return erm_consistent(self.n, history)


def online_estimator(n: int) -> OnlineEstimator:
    return OnlineEstimator(n)


def random_trace(
    n: int, f: SatFunction, length: int, rng: random.Random
) -> list[SatAction]:
    """Random action sequence mixing Star, assignments (including a*) and indices."""
    astar = f.minimal_assignment() if f.c is not None else None
    out: list[SatAction] = []
    for _ in range(length):
        u = rng.random()
        if u < 0.15:
            out.append(Star())
        elif u < 0.25 and astar is not None:
            out.append(Assignment(astar))
        elif u < 0.35 and f.c is not None:
            out.append(Index(f.c))
        elif u < 0.7:
            out.append(Assignment(rng.randrange(2**n)))
        else:
            out.append(Index(rng.randint(1, 2**n)))
    return out


def estimation_error(n: int, f: SatFunction, actions: Sequence[SatAction]) -> Fraction:
    """Cumulative squared prediction error of :class:`OnlineEstimator` along ``actions``."""
    est = OnlineEstimator(n)
    hist: list[tuple[SatAction, Fraction]] = []
    total = Fraction(0)
    for a in actions:
        guess = est.step(hist)
        truth = eval_sat_function(f, a)
        total += (eval_sat_function(guess, a) - truth) ** 2
        hist.append((a, truth))
    return total


# -- learners and the reduction ---------------------------------------------

class TwoQueryLearner(Learner):
    """Reads the formula at Star, brute-forces its minimal assignment, then reads c there."""

    def __init__(self, n: int):
        if n > BRUTE_FORCE_CAP:
            raise DomainError(f"n={n} exceeds the brute-force cap {BRUTE_FORCE_CAP}")
        self.n = n
        self._astar: int | None = None

    def act(self, history: History) -> Query | Stop:
        t = len(history)
        if t == 0:
            return Query(Star())
        if t == 1:
            a, r = history[0]
            try:
                phi = decode_formula(r, self.n)
            except DecodeError as exc:
                raise ProtocolError(f"Star returned a non-code value {r}") from exc
            self._astar = min_sat_assignment(phi)
            if self._astar is None:
                return Stop(Star())
            return Query(Assignment(self._astar))
        _, r = history[1]
        r = Fraction(r)
        if r == 0:
            return Stop(Star())
        scaled = r * 2 ** (self.n + 1)
        if scaled.denominator != 1 or not 1 <= scaled <= 2**self.n:
            raise ProtocolError(f"assignment value {r} does not encode an index")
        return Stop(Index(int(scaled)))


def two_query_identify(n: int, f: SatFunction) -> tuple[SatAction, int]:
    """Run :class:`TwoQueryLearner` against a hidden member; returns (output, queries)."""
    learner = TwoQueryLearner(n)
    history = History()
    while True:
        d = learner.act(history)
        if isinstance(d, Stop):
            return d.output, len(history)
        history.append(d.action, eval_sat_function(f, d.action))


def sat_reduction(phi: Formula3CNF, learner: Learner, budget: int) -> bool:
    """Simulate ``learner`` against ``f_phi`` and accept iff it queries a satisfying assignment.

    Star is answered with the formula code and everything else with 0. The
    run rejects when the learner stops or ``budget`` queries are used.
    """
    if budget <= 0:
        raise DomainError("budget must be positive")
    code = encode_formula(phi)
    history = History()
    while len(history) < budget:
        d = learner.act(history)
        if isinstance(d, Stop):
            return False
        for _ in range(d.repeat):
            a = d.action
            if isinstance(a, Assignment) and phi.satisfied_by(a.bits):
                return True
            history.append(a, code if isinstance(a, Star) else Fraction(0))
            if len(history) >= budget:
                break
    return False


# -- random instances and DIMACS --------------------------------------------

def random_formula(n: int, rng: random.Random, max_clauses: int | None = None) -> Formula3CNF:
    limit = n * n if max_clauses is None else min(max_clauses, n * n)
    m = rng.randint(0, limit)
    clauses = tuple(
        tuple((rng.randrange(n), rng.random() < 0.5) for _ in range(3)) for _ in range(m)
    )
    return Formula3CNF(n, clauses)


def parse_dimacs(text: str, n: int | None = None) -> Formula3CNF:
    """Parse DIMACS CNF; every clause must have exactly 3 literals."""
    header_n = None
    lits: list[int] = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise DomainError(f"bad DIMACS header: {line!r}")
            header_n = int(parts[2])
            continue
        lits.extend(int(tok) for tok in line.split())
    if header_n is None:
        raise DomainError("DIMACS input has no 'p cnf' header")
    if n is not None and n != header_n:
        raise DomainError(f"--n {n} disagrees with DIMACS header n={header_n}")
    clauses, cur = [], []
    for x in lits:
        if x == 0:
            if len(cur) != 3:
                raise DomainError(f"clause with {len(cur)} literals; exactly 3 required")
            clauses.append(tuple(cur))
            cur = []
        else:
            cur.append((abs(x) - 1, x < 0))
    if cur:
        raise DomainError("last clause is not terminated by 0")
    return Formula3CNF(header_n, tuple(clauses))


def to_dimacs(phi: Formula3CNF) -> str:
    lines = [f"p cnf {phi.n} {len(phi.clauses)}"]
    for clause in phi.clauses:
        lines.append(" ".join(str(-(v + 1) if neg else v + 1) for v, neg in clause) + " 0")
    return "\n".join(lines) + "\n"
