"""Foundational types: rewards, function classes, histories, version spaces.

Noise-free logic works on exact :class:`fractions.Fraction` values throughout;
floats only appear as noisy observations.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Hashable, Iterator, Mapping, Sequence

import numpy as np

Reward = Fraction | float


class DomainError(ValueError):
    """An argument lies outside the operation's domain."""


class InconsistentHistoryError(ValueError):
    """A noise-free observation is not achievable by any remaining function."""


class ProtocolError(RuntimeError):
    """A learner received feedback its protocol cannot interpret."""


def to_exact(value: Any) -> Fraction:
    """Convert ints, floats, Fractions and ``"p/q"`` / ``"p/2^e"`` strings to a Fraction.

    Floats convert exactly (they are dyadic), so ``to_exact(0.1)`` is the
    binary value of the double, not 1/10.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise DomainError(f"not a reward value: {value!r}")
    if isinstance(value, (int, float)):
        if isinstance(value, float) and not math.isfinite(value):
            raise DomainError(f"not a finite value: {value!r}")
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        if "/2^" in text:
            num, exp = text.split("/2^")
            return Fraction(int(num), 2 ** int(exp))
        try:
            return Fraction(text)
        except ValueError as exc:
            raise DomainError(f"cannot parse rational {value!r}") from exc
    raise DomainError(f"cannot convert {type(value).__name__} to an exact rational")


def format_exact(value: Fraction) -> str:
    """Render a rational as ``"num/2^exp"`` when dyadic, else ``"num/den"``."""
    value = Fraction(value)
    den = value.denominator
    if den & (den - 1) == 0:
        return f"{value.numerator}/2^{den.bit_length() - 1}"
    return f"{value.numerator}/{den}"


@dataclass(frozen=True)
class ActionId:
    index: int
    label: Hashable | None = None


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise DomainError(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def noise_free(self) -> bool:
        return self.sigma == 0


@dataclass(frozen=True, eq=False)
class ExplicitClass:
    """A finite function class stored as an exact reward matrix.

    ``rewards[i][a]`` is the mean reward of function ``i`` at action ``a``.
    """

    rewards: tuple[tuple[Fraction, ...], ...]
    name: str = "explicit"
    params: Mapping[str, Any] = field(default_factory=dict)
    action_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        rows = tuple(tuple(to_exact(v) for v in row) for row in self.rewards)
        if not rows:
            raise DomainError("a function class needs at least one function")
        width = len(rows[0])
        if width == 0:
            raise DomainError("a function class needs at least one action")
        for row in rows:
            if len(row) != width:
                raise DomainError("reward matrix is ragged")
            for v in row:
                if not 0 <= v <= 1:
                    raise DomainError(f"reward {v} outside [0, 1]")
        if len(set(rows)) != len(rows):
            raise DomainError("function rows must be pairwise distinct")
        if self.action_labels is not None and len(self.action_labels) != width:
            raise DomainError("one label per action required")
        object.__setattr__(self, "rewards", rows)
        object.__setattr__(self, "params", dict(self.params))

    @property
    def n_functions(self) -> int:
        return len(self.rewards)

    @property
    def n_actions(self) -> int:
        return len(self.rewards[0])

    def value(self, f: int, a: int) -> Fraction:
        return self.rewards[f][a]

    def row(self, f: int) -> tuple[Fraction, ...]:
        return self.rewards[f]

    def label(self, a: int) -> str:
        if self.action_labels is None:
            return str(a)
        return self.action_labels[a]

    def action(self, a: int) -> ActionId:
        check_action(a, self.n_actions)
        return ActionId(a, None if self.action_labels is None else self.action_labels[a])

    def full_space(self) -> VersionSpace:
        return VersionSpace(self, (1 << self.n_functions) - 1)

    def float_matrix(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.rewards])


@dataclass(frozen=True, eq=False)
class ImplicitClass:
    """A class too large to materialize, given by an evaluator."""

    evaluator: Callable[[Any, Any], Fraction]
    n_actions: int
    contains: Callable[[Any], bool]
    name: str = "implicit"
    params: Mapping[str, Any] = field(default_factory=dict)

    def value(self, f: Any, a: Any) -> Fraction:
        return self.evaluator(f, a)


def check_action(a: int, n_actions: int) -> None:
    if not isinstance(a, (int, np.integer)) or not 0 <= a < n_actions:
        raise DomainError(f"action {a!r} not in [0, {n_actions})")


def sample_reward(
    row: Sequence[Fraction],
    action: int,
    noise: NoiseModel,
    rng: np.random.Generator | None = None,
) -> Reward:
    """Observe ``row[action]`` under the noise model.

    Returns the exact mean when ``sigma == 0`` (``rng`` is not touched),
    otherwise the mean plus one Gaussian draw from ``rng``.
    """
    check_action(action, len(row))
    mean = row[action]
    if noise.sigma == 0:
        return mean
    if rng is None:
        raise DomainError("noisy sampling needs an rng")
    return float(mean) + noise.sigma * float(rng.standard_normal())


def eps_optimal_set(row: Sequence[Fraction], epsilon: Any) -> frozenset[int]:
    """Actions whose value is within ``epsilon`` of the row maximum (exact)."""
    eps = to_exact(epsilon)
    top = max(row)
    return frozenset(a for a, v in enumerate(row) if v >= top - eps)


def argmax_lowest(values: Sequence[Any]) -> int:
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


@dataclass(frozen=True, eq=False)
class VersionSpace:
    """Functions of an explicit class consistent with a noise-free history.

    ``members`` is a bitset: bit ``i`` set means function ``i`` is consistent.
    """

    cls: ExplicitClass
    members: int

    def __iter__(self) -> Iterator[int]:
        m = self.members
        while m:
            low = m & -m
            yield low.bit_length() - 1
            m ^= low

    def __len__(self) -> int:
        return bin(self.members).count("1")

    def __contains__(self, f: int) -> bool:
        return bool(self.members >> f & 1)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VersionSpace):
            return NotImplemented
        return self.cls is other.cls and self.members == other.members

    def __hash__(self) -> int:
        return hash((id(self.cls), self.members))

    def values_at(self, action: int) -> list[Fraction]:
        """Distinct achievable values at ``action``, ascending."""
        return sorted({self.cls.rewards[f][action] for f in self})

    def restrict(self, action: int, observed: Any) -> VersionSpace:
        return restrict(self, action, observed)


def restrict(space: VersionSpace, action: int, observed: Any) -> VersionSpace:
    """Keep the functions with ``f(action) == observed`` exactly."""
    check_action(action, space.cls.n_actions)
    if isinstance(observed, float):
        # a float can only match an exact value if it is that dyadic value
        observed = Fraction(observed)
    r = to_exact(observed)
    rows = space.cls.rewards
    members = 0
    for f in space:
        if rows[f][action] == r:
            members |= 1 << f
    if members == 0:
        raise InconsistentHistoryError(
            f"no function in the version space has value {r} at action {action}"
        )
    return VersionSpace(space.cls, members)


@dataclass(frozen=True)
class Query:
    """Ask for ``repeat`` independent observations of ``action``."""

    action: Any
    repeat: int = 1

    def __post_init__(self):
        if self.repeat < 1:
            raise DomainError("repeat must be at least 1")


@dataclass(frozen=True)
class Stop:
    output: Any


LearnerDecision = Query | Stop


class History:
    """Append-only list of (action, observed reward) pairs with per-action tallies."""

    def __init__(self, entries: Sequence[tuple[Any, Reward]] = ()):
        self.actions: list[Any] = []
        self.rewards: list[Reward] = []
        self._count: dict[Any, int] = defaultdict(int)
        self._sum: dict[Any, Any] = defaultdict(int)
        for a, r in entries:
            self.append(a, r)

    def append(self, action: Any, reward: Reward) -> None:
        self.actions.append(action)
        self.rewards.append(reward)
        self._count[action] += 1
        self._sum[action] += reward

    def extend(self, action: Any, rewards: Sequence[Reward]) -> None:
        rewards = list(rewards)
        if not rewards:
            return
        self.actions.extend([action] * len(rewards))
        self.rewards.extend(rewards)
        self._count[action] += len(rewards)
        self._sum[action] += sum(rewards)

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self) -> Iterator[tuple[Any, Reward]]:
        return zip(self.actions, self.rewards)

    def __getitem__(self, i: int) -> tuple[Any, Reward]:
        return self.actions[i], self.rewards[i]

    def count(self, action: Any) -> int:
        return self._count.get(action, 0)

    def total(self, action: Any) -> Any:
        return self._sum.get(action, 0)

    def mean(self, action: Any) -> float:
        n = self.count(action)
        if n == 0:
            raise DomainError(f"action {action!r} never observed")
        return float(self._sum[action]) / n


class Learner:
    """Interface every learner implements.

    ``act`` sees the full history so far and returns the next decision.
    Learners are single-trial state machines; build a fresh one per run.
    ``tag`` is set when a run ends through a degenerate path worth recording.
    """

    tag: str | None = None

    def reset(self, rng: np.random.Generator | None = None) -> None:
        pass

    def act(self, history: History) -> LearnerDecision:
        raise NotImplementedError


def trial_seed(master_seed: int, trial: int) -> int:
    """Order-independent 64-bit seed for one trial of a batch."""
    ss = np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(trial)])
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(key=seed))


class NormalStream:
    """Buffered standard-normal draws from one generator; deterministic per seed."""

    def __init__(self, rng: np.random.Generator, block: int = 4096):
        self._rng = rng
        self._block = block
        self._buf = np.empty(0)
        self._pos = 0

    def draw(self, k: int) -> np.ndarray:
        out = []
        while k > 0:
            if self._pos >= len(self._buf):
                self._buf = self._rng.standard_normal(max(self._block, k))
                self._pos = 0
            take = min(k, len(self._buf) - self._pos)
            out.append(self._buf[self._pos:self._pos + take])
            self._pos += take
            k -= take
        return out[0] if len(out) == 1 else np.concatenate(out)

    def one(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._rng.standard_normal(self._block)
            self._pos = 0
        z = self._buf[self._pos]
        self._pos += 1
        return float(z)
