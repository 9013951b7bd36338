"""Exact noise-free query complexity of explicit classes.

The state of a deterministic learner against a noise-free class is its
version space, so the minimax recursion

    QC(V) = 0                         if one action is eps-optimal for all of V
    QC(V) = 1 + min_a max_r QC(V|a,r) otherwise

is memoized on the version-space bitset. Only actions that split ``V`` are
considered; an action with a single achievable value wastes a query.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Union

from .core import DomainError, ExplicitClass, eps_optimal_set, format_exact, to_exact

DEFAULT_CAP = 20
INF = math.inf


@dataclass(frozen=True)
class StopNode:
    output: int


@dataclass(frozen=True)
class QueryNode:
    action: int
    branches: dict[Fraction, "PolicyTree"]


PolicyTree = Union[StopNode, QueryNode]


def tree_depth(tree: PolicyTree) -> int:
    if isinstance(tree, StopNode):
        return 0
    return 1 + max(tree_depth(child) for child in tree.branches.values())


def tree_to_json(tree: PolicyTree) -> dict[str, Any]:
    if isinstance(tree, StopNode):
        return {"stop": tree.output}
    return {
        "query": tree.action,
        "branches": {format_exact(r): tree_to_json(c) for r, c in sorted(tree.branches.items())},
    }


def tree_from_json(obj: Any) -> PolicyTree:
    if not isinstance(obj, dict):
        raise DomainError("policy node must be a JSON object")
    if "stop" in obj:
        return StopNode(int(obj["stop"]))
    if "query" not in obj or "branches" not in obj:
        raise DomainError("policy node needs 'stop' or 'query' + 'branches'")
    return QueryNode(
        int(obj["query"]),
        {to_exact(k): tree_from_json(v) for k, v in obj["branches"].items()},
    )


class _ClassTables:
    """Per-class bitmask tables shared by the solver routines."""

    def __init__(self, cls: ExplicitClass, epsilon: Any):
        self.cls = cls
        self.eps = to_exact(epsilon)
        nf, na = cls.n_functions, cls.n_actions
        self.full = (1 << nf) - 1
        # good[a]: functions for which a is eps-optimal
        self.good = [0] * na
        for f in range(nf):
            for a in eps_optimal_set(cls.rewards[f], self.eps):
                self.good[a] |= 1 << f
        # parts[a]: list of (value, mask of functions with that value), ascending
        self.parts: list[list[tuple[Fraction, int]]] = []
        for a in range(na):
            groups: dict[Fraction, int] = {}
            for f in range(nf):
                v = cls.rewards[f][a]
                groups[v] = groups.get(v, 0) | (1 << f)
            self.parts.append(sorted(groups.items()))
        # version space -> proven lower bound on its QC
        self.lower: dict[int, float] = {}

    def stop_action(self, V: int) -> int | None:
        for a, g in enumerate(self.good):
            if V & ~g == 0:
                return a
        return None

    def split(self, V: int, a: int) -> list[tuple[Fraction, int]]:
        out = []
        for v, m in self.parts[a]:
            sub = V & m
            if sub:
                out.append((v, sub))
        return out


@dataclass
class QcResult:
    qc: int
    tree: PolicyTree
    memo: dict[int, tuple[int, frozenset[int]]] = field(repr=False)
    """Version-space bitset -> (qc, set of optimal first actions)."""


def _check_cap(cls: ExplicitClass, cap: int) -> None:
    if cls.n_functions > cap:
        raise DomainError(
            f"class has {cls.n_functions} functions; exact solver cap is {cap}"
        )


def _solve(
    tab: _ClassTables,
    V: int,
    memo: dict[int, tuple[int, frozenset[int]]],
    limit: float = INF,
) -> int | float:
    """QC of ``V``, exact whenever it is below ``limit``.

    Otherwise returns a lower bound that is at least ``limit``; such bounds
    are cached in ``tab.lower`` and never enter ``memo``.
    """
    hit = memo.get(V)
    if hit is not None:
        return hit[0]
    lb = tab.lower.get(V, 0)
    if lb >= limit:
        return lb
    if tab.stop_action(V) is not None:
        memo[V] = (0, frozenset())
        return 0
    best = INF
    best_actions: set[int] = set()
    for a in range(tab.cls.n_actions):
        parts = tab.split(V, a)
        if len(parts) < 2:
            continue
        # only values <= u matter: ties with the incumbent, or below limit
        u = min(best, limit - 1)
        worst = 0
        for _, sub in parts:
            worst = max(worst, _solve(tab, sub, memo, u))
            if worst >= u:
                break
        if worst >= u:
            continue
        val = worst + 1
        if val < best:
            best, best_actions = val, {a}
        elif val == best:
            best_actions.add(a)
    if best < limit:
        memo[V] = (int(best), frozenset(best_actions))
        return int(best)
    tab.lower[V] = max(lb, limit)
    return limit


def exact_qc(cls: ExplicitClass, epsilon: Any = 0, cap: int = DEFAULT_CAP) -> QcResult:
    """Minimum worst-case number of noise-free queries to output an eps-optimal action.

    Returns the value, one optimal policy tree (lowest action index at every
    tie), and the memo of every reachable version space.
    """
    _check_cap(cls, cap)
    tab = _ClassTables(cls, epsilon)
    memo: dict[int, tuple[int, frozenset[int]]] = {}
    qc = _solve(tab, tab.full, memo)

    def build(V: int) -> PolicyTree:
        q, acts = memo[V]
        if q == 0:
            return StopNode(tab.stop_action(V))
        a = min(acts)
        return QueryNode(a, {v: build(sub) for v, sub in tab.split(V, a)})

    return QcResult(qc, build(tab.full), memo)


def brute_force_qc(cls: ExplicitClass, epsilon: Any = 0) -> int:
    """Unmemoized minimax over histories; an independent check for small classes."""
    eps = to_exact(epsilon)
    rows = cls.rewards

    def done(fs: list[int]) -> bool:
        common = set(range(cls.n_actions))
        for f in fs:
            common &= eps_optimal_set(rows[f], eps)
        return bool(common)

    def rec(fs: list[int], depth_left: int) -> bool:
        # can we finish within depth_left queries?
        if done(fs):
            return True
        if depth_left == 0:
            return False
        for a in range(cls.n_actions):
            groups: dict[Fraction, list[int]] = {}
            for f in fs:
                groups.setdefault(rows[f][a], []).append(f)
            if len(groups) < 2:
                continue
            if all(rec(g, depth_left - 1) for g in groups.values()):
                return True
        return False

    fs = list(range(cls.n_functions))
    depth = 0
    while not rec(fs, depth):
        depth += 1
    return depth


def run_policy(tree: PolicyTree, row: tuple[Fraction, ...]) -> tuple[int, int]:
    """Replay a policy against one function; returns (output, queries)."""
    node, queries = tree, 0
    while isinstance(node, QueryNode):
        r = row[node.action]
        if r not in node.branches:
            raise DomainError(f"observation {r} at action {node.action} has no branch")
        node = node.branches[r]
        queries += 1
    return node.output, queries


def _spacing(values: list[Fraction]) -> float | Fraction:
    if len(values) < 2:
        return INF
    return min(b - a for a, b in zip(values, values[1:]))


def gap_of_policy(tree: PolicyTree, cls: ExplicitClass) -> float | Fraction:
    """Smallest distance between the observed value and a competing achievable value.

    Walks every trajectory the policy can realize against ``cls``. Returns
    ``math.inf`` when no query ever has two achievable values.
    """
    best: float | Fraction = INF

    def walk(node: PolicyTree, members: list[int]) -> None:
        nonlocal best
        if isinstance(node, StopNode):
            return
        a = node.action
        groups: dict[Fraction, list[int]] = {}
        for f in members:
            groups.setdefault(cls.rewards[f][a], []).append(f)
        s = _spacing(sorted(groups))
        if s < best:
            best = s
        for v, fs in groups.items():
            if v not in node.branches:
                raise DomainError(f"policy has no branch for value {v} at action {a}")
            walk(node.branches[v], fs)

    walk(tree, list(range(cls.n_functions)))
    return best


@dataclass
class GapResult:
    gap: float | Fraction
    tree: PolicyTree | None
    partial: bool
    qc: int


def gap_of_class(
    cls: ExplicitClass,
    epsilon: Any = 0,
    cap: int = DEFAULT_CAP,
    node_budget: int = 2_000_000,
) -> GapResult:
    """Largest policy Gap over deterministic trees of optimal worst-case depth.

    A subtree only needs to respect the remaining depth budget, so the
    search state is (version space, queries left). Branch-and-bound skips
    actions whose own spacing cannot beat the incumbent. When the node budget
    runs out the best value found so far is returned with ``partial=True``;
    it is a certified lower bound because it is realized by an actual tree.
    """
    res = exact_qc(cls, epsilon, cap)
    tab = _ClassTables(cls, epsilon)
    memo_qc = dict(res.memo)
    visited = 0
    partial = False

    def qc_of(V: int) -> int:
        return _solve(tab, V, memo_qc)

    memo: dict[tuple[int, int], tuple[float | Fraction, Any]] = {}

    def search(V: int, budget: int) -> tuple[float | Fraction, Any]:
        nonlocal visited, partial
        key = (V, budget)
        if key in memo:
            return memo[key]
        if qc_of(V) == 0:
            out = (INF, ("stop", tab.stop_action(V)))
            memo[key] = out
            return out
        visited += 1
        best: tuple[float | Fraction, Any] = (-INF, None)
        cands = []
        for a in range(cls.n_actions):
            parts = tab.split(V, a)
            if len(parts) < 2:
                continue
            if 1 + max(qc_of(sub) for _, sub in parts) > budget:
                continue
            cands.append((_spacing([v for v, _ in parts]), a, parts))
        cands.sort(key=lambda t: (-t[0], t[1]))
        for s, a, parts in cands:
            if s <= best[0]:
                break
            if visited > node_budget:
                partial = True
                if best[1] is not None:
                    break
            val = s
            kids = {}
            for v, sub in parts:
                g, plan = search(sub, budget - 1)
                kids[v] = (sub, plan)
                if g < val:
                    val = g
                if val <= best[0]:
                    break
            if val > best[0]:
                best = (val, ("query", a, kids))
        memo[key] = best
        return best

    g, plan = search(tab.full, res.qc)

    def build(plan: Any) -> PolicyTree:
        if plan[0] == "stop":
            return StopNode(plan[1])
        _, a, kids = plan
        return QueryNode(a, {v: build(p) for v, (_, p) in kids.items()})

    return GapResult(g, build(plan), partial, res.qc)
