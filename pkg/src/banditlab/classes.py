"""Constructors for the explicit function classes used throughout the lab.

Every constructor returns an :class:`~banditlab.core.ExplicitClass` with exact
rational entries. ``class_from_spec`` builds one from its JSON description.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Mapping

from .core import DomainError, ExplicitClass, argmax_lowest, to_exact


@dataclass(frozen=True)
class TreeClassParams:
    d: int
    Delta: Fraction

    def __post_init__(self):
        object.__setattr__(self, "Delta", to_exact(self.Delta))
        if self.d < 1:
            raise DomainError("tree depth d must be >= 1")
        if not 0 < self.Delta < 1:
            raise DomainError("Delta must lie in (0, 1)")


@dataclass(frozen=True)
class InfoLockParams:
    K: int
    eps1: Fraction
    eps2: Fraction

    def __post_init__(self):
        object.__setattr__(self, "eps1", to_exact(self.eps1))
        object.__setattr__(self, "eps2", to_exact(self.eps2))
        if self.K < 2:
            raise DomainError("info-lock needs K >= 2")
        if not 0 < self.eps1 <= Fraction(1, 4):
            raise DomainError("eps1 must lie in (0, 1/4]")
        if not 0 < self.eps2 <= self.eps1:
            raise DomainError("eps2 must lie in (0, eps1]")

    @property
    def n_bits(self) -> int:
        return math.ceil(math.log2(self.K))


@dataclass(frozen=True)
class InformativeKParams:
    K: int

    def __post_init__(self):
        if self.K < 2:
            raise DomainError("informative_K needs K >= 2")


def make_informative_chain(N: int) -> ExplicitClass:
    """Truncated informative-action class over actions ``0..N``.

    ``f_i(0) = 1/(2i)``, ``f_i(i) = 1`` and zero elsewhere, for ``i`` in ``1..N``.
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    rows = []
    for i in range(1, N + 1):
        row = [Fraction(0)] * (N + 1)
        row[0] = Fraction(1, 2 * i)
        row[i] = Fraction(1)
        rows.append(row)
    return ExplicitClass(rows, name="informative_chain", params={"N": N})


def make_informative_K(params: InformativeKParams | int) -> ExplicitClass:
    """Action 0 reads ``i/(4K)``; action ``i`` reads 1; everything else 1/2."""
    if isinstance(params, int):
        params = InformativeKParams(params)
    K = params.K
    rows = []
    for i in range(1, K + 1):
        row = [Fraction(1, 2)] * (K + 1)
        row[0] = Fraction(i, 4 * K)
        row[i] = Fraction(1)
        rows.append(row)
    labels = tuple(f"a_{j}" for j in range(K + 1))
    return ExplicitClass(rows, name="informative_k", params={"K": K}, action_labels=labels)


def tree_index(level: int, position: int) -> int:
    """Heap index of node ``a_{level,position}`` (both 1-based)."""
    return 2 ** (level - 1) - 1 + (position - 1)


def tree_node(index: int) -> tuple[int, int]:
    level = (index + 1).bit_length()
    return level, index - (2 ** (level - 1) - 1) + 1


def make_tree_class(params: TreeClassParams) -> ExplicitClass:
    """Binary-tree class with one function per root-to-leaf path.

    The target leaf reads 1, other leaves 0, internal nodes on the path
    (below the root) read 0, and the root plus every off-path internal node
    reads ``1 - Delta``. Functions are ordered by leaf position.
    """
    d, delta = params.d, params.Delta
    n_actions = 2 ** (d + 1) - 1
    high = 1 - delta
    rows = []
    for leaf in range(1, 2**d + 1):
        row = [high] * n_actions
        for pos in range(1, 2**d + 1):
            row[tree_index(d + 1, pos)] = Fraction(1) if pos == leaf else Fraction(0)
        # ancestors of the leaf at levels 2..d
        pos = leaf
        for level in range(d, 1, -1):
            pos = (pos + 1) // 2
            row[tree_index(level, pos)] = Fraction(0)
        rows.append(row)
    labels = tuple("a_{%d,%d}" % tree_node(i) for i in range(n_actions))
    return ExplicitClass(
        rows, name="tree", params={"d": d, "Delta": delta}, action_labels=labels
    )


def info_lock_bits(k: int, n_bits: int) -> tuple[int, ...]:
    """Code of function ``k``: bits of ``k - 1``, most significant first."""
    return tuple((k - 1) >> (n_bits - 1 - j) & 1 for j in range(n_bits))


def make_info_lock(params: InfoLockParams) -> ExplicitClass:
    """Information-lock class: ``ceil(log2 K)`` code actions then ``K`` arms.

    Code action ``j`` reads ``1/2 + eps1`` when bit ``j`` of ``k - 1`` is set
    and ``1/2 - eps1`` otherwise; arm ``k`` reads 1 and the other arms
    ``1 - eps2``.
    """
    K, e1, e2 = params.K, params.eps1, params.eps2
    m = params.n_bits
    half = Fraction(1, 2)
    rows = []
    for k in range(1, K + 1):
        code = [half + e1 if b else half - e1 for b in info_lock_bits(k, m)]
        arms = [Fraction(1) if j == k else 1 - e2 for j in range(1, K + 1)]
        rows.append(code + arms)
    labels = tuple(f"a1_{j}" for j in range(1, m + 1)) + tuple(
        f"a2_{j}" for j in range(1, K + 1)
    )
    return ExplicitClass(
        rows,
        name="info_lock",
        params={"K": K, "eps1": e1, "eps2": e2},
        action_labels=labels,
    )


def info_lock_arm(cls: ExplicitClass, k: int) -> int:
    """Action index of arm ``a^{(2)}_k`` in an info-lock class."""
    m = math.ceil(math.log2(cls.params["K"]))
    return m + k - 1


def oracle_code(argmax_index: int, n_base_actions: int) -> Fraction:
    return Fraction(1 + argmax_index, 2 * n_base_actions + 2)


def decode_oracle_code(value: Fraction, n_base_actions: int) -> int:
    idx = Fraction(value) * (2 * n_base_actions + 2) - 1
    if idx.denominator != 1 or not 0 <= idx < n_base_actions:
        raise DomainError(f"{value} is not an oracle-point code")
    return int(idx)


def augment_with_oracle_point(base: ExplicitClass) -> ExplicitClass:
    """Append an action whose value encodes each function's lowest-index argmax.

    The new action (index ``base.n_actions``) reads
    ``(1 + argmax) / (2 * n_actions + 2)``. Codes must not coincide with any
    value already present in the base matrix.
    """
    n = base.n_actions
    present = {v for row in base.rewards for v in row}
    rows = []
    for row in base.rewards:
        code = oracle_code(argmax_lowest(row), n)
        if code in present:
            raise DomainError(f"oracle code {code} collides with an existing base value")
        rows.append(tuple(row) + (code,))
    labels = None
    if base.action_labels is not None:
        labels = base.action_labels + ("x_0",)
    return ExplicitClass(
        rows,
        name="oracle_augmented",
        params={"base": base.name, **base.params},
        action_labels=labels,
    )


def drop_actions(cls: ExplicitClass, actions: set[int] | list[int]) -> ExplicitClass:
    """Remove actions from every row; rows must stay distinct."""
    keep = [a for a in range(cls.n_actions) if a not in set(actions)]
    rows = [tuple(row[a] for a in keep) for row in cls.rewards]
    labels = None if cls.action_labels is None else tuple(cls.action_labels[a] for a in keep)
    return ExplicitClass(rows, name=f"{cls.name}_dropped", params=dict(cls.params), action_labels=labels)


def class_from_spec(spec: Mapping[str, Any]) -> ExplicitClass:
    """Build a class from its JSON description.

    Kinds: ``tree`` (d, Delta), ``info_lock`` (K, eps1, eps2),
    ``informative_k`` (K), ``informative_chain`` (N),
    ``oracle_augmented`` (base: nested spec) and ``explicit`` (rewards).
    """
    if not isinstance(spec, Mapping):
        raise DomainError("class spec must be a JSON object")
    kind = spec.get("kind")

    def need(key: str) -> Any:
        if key not in spec:
            raise DomainError(f"class spec of kind {kind!r} is missing field {key!r}")
        return spec[key]

    def need_int(key: str) -> int:
        v = need(key)
        if not isinstance(v, int) or isinstance(v, bool):
            raise DomainError(f"field {key!r} must be an integer, got {v!r}")
        return v

    try:
        if kind == "tree":
            return make_tree_class(TreeClassParams(need_int("d"), to_exact(need("Delta"))))
        if kind == "info_lock":
            return make_info_lock(
                InfoLockParams(need_int("K"), to_exact(need("eps1")), to_exact(need("eps2")))
            )
        if kind == "informative_k":
            return make_informative_K(InformativeKParams(need_int("K")))
        if kind == "informative_chain":
            return make_informative_chain(need_int("N"))
        if kind == "oracle_augmented":
            return augment_with_oracle_point(class_from_spec(need("base")))
        if kind == "explicit":
            rewards = need("rewards")
            if not isinstance(rewards, list) or not all(isinstance(r, list) for r in rewards):
                raise DomainError("field 'rewards' must be a list of lists")
            return ExplicitClass([[to_exact(v) for v in row] for row in rewards])
    except DomainError:
        raise
    except (TypeError, ValueError) as exc:
        raise DomainError(f"bad class spec field: {exc}") from exc
    raise DomainError(f"unknown class kind {kind!r} (field 'kind')")
