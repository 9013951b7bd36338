"""Learners over explicit classes, all behind the ``Learner.act`` interface.

Actions are integer indices into the class's reward matrix. Noisy learners
batch their pulls with ``Query(action, repeat=k)``; the harness draws all
``k`` observations before asking again.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .classes import tree_index, tree_node
from .core import (
    DomainError,
    ExplicitClass,
    History,
    Learner,
    ProtocolError,
    Query,
    Stop,
    to_exact,
)
from .metrics import _tolerant_ceil, sample_size
from .solver import DEFAULT_CAP, PolicyTree, QueryNode, StopNode, exact_qc

LearnerFactory = Callable[[], Learner]


class VersionSpaceGreedy(Learner):
    """Replays an optimal noise-free policy tree from the exact solver."""

    def __init__(self, tree: PolicyTree):
        self.tree = tree
        self._node = tree
        self._seen = 0

    @classmethod
    def for_class(cls, klass: ExplicitClass, epsilon: Any = 0) -> "VersionSpaceGreedy":
        return cls(exact_qc(klass, epsilon).tree)

    def act(self, history: History) -> Query | Stop:
        while self._seen < len(history):
            a, r = history[self._seen]
            node = self._node
            if not isinstance(node, QueryNode) or a != node.action:
                raise ProtocolError(f"history action {a} does not follow the policy")
            key = Fraction(r) if isinstance(r, float) else r
            if key not in node.branches:
                raise ProtocolError(f"observation {r} at action {a} has no branch")
            self._node = node.branches[key]
            self._seen += 1
        if isinstance(self._node, StopNode):
            return Stop(self._node.output)
        return Query(self._node.action)


class DenoiseWrapper(Learner):
    """Runs a noise-free learner on noisy feedback by projecting each observation.

    Each noisy reward at action ``a`` is replaced by the value at ``a`` closest
    to it among the functions still consistent with the reconstructed history
    (ties go to the smaller value). The inner learner only ever sees that
    reconstructed history.
    """

    def __init__(self, inner: Learner, klass: ExplicitClass):
        self.inner = inner
        self.cls = klass
        self.space = klass.full_space()
        self.clean = History()
        self._seen = 0

    def reset(self, rng: np.random.Generator | None = None) -> None:
        self.inner.reset(rng)

    def project(self, action: int, observed: Any) -> Fraction:
        values = self.space.values_at(action)
        if isinstance(observed, float):
            dist = [abs(float(v) - observed) for v in values]
        else:
            dist = [abs(v - to_exact(observed)) for v in values]
        best = min(dist)
        # values are ascending, so the first minimizer is the smaller value
        return values[dist.index(best)]

    def act(self, history: History) -> Query | Stop:
        while self._seen < len(history):
            a, r = history[self._seen]
            r_clean = self.project(a, r)
            self.space = self.space.restrict(a, r_clean)
            self.clean.append(a, r_clean)
            self._seen += 1
        return self.inner.act(self.clean)


def denoise_threshold(gap: float, qc: int, delta: float, delta_prime: float = 0.0) -> float:
    """Noise level below which projection keeps the inner learner's guarantee.

    ``sigma_bar = sqrt(gap^2 / (4 log(2 qc / (delta - delta_prime))))``.
    """
    if not delta > delta_prime >= 0:
        raise DomainError("need delta > delta_prime >= 0")
    if qc < 1:
        raise DomainError("threshold needs qc >= 1")
    return math.sqrt(float(gap) ** 2 / (4.0 * math.log(2.0 * qc / (delta - delta_prime))))


def two_phase_alpha(K: int) -> float:
    """Accuracy of the a_0 estimate in the many-candidates regime."""
    return (math.log(16) / (32 * K * math.log(32 * K))) ** (1 / 3)


def two_phase_boundary_sigma(K: int) -> float:
    """Noise level where the a_0 phase of the many-candidates case costs 32 pulls.

    ``sigma^2 = 16 alpha^2 / log 16``; below it the first-phase bound is
    dominated by its constant floor, above it by the sigma-dependent term.
    """
    return math.sqrt(16 * two_phase_alpha(K) ** 2 / math.log(16))


class TwoPhaseInformative(Learner):
    """Estimate a_0 to shortlist candidate indices, then compare the shortlist.

    With ``sigma == 0`` one query of a_0 decodes the optimal index. Otherwise
    the learner picks a case from ``K``:

    * many candidates (``alpha >= 1/K``): ``sample_size(alpha, 1/8, sigma)``
      pulls of a_0, then ``ceil(32 sigma^2 log(32 alpha K))`` pulls of every
      shortlisted arm and a Stop at the best empirical mean;
    * few candidates: a_0 is estimated to half the code spacing,
      ``1/(8K)``, with ``delta_0 = 1/4``, and the nearest code is output.
    """

    def __init__(self, K: int, sigma: float):
        if K < 2:
            raise DomainError("two_phase needs K >= 2")
        if sigma < 0:
            raise DomainError("sigma must be nonnegative")
        self.K = K
        self.sigma = float(sigma)
        alpha2 = two_phase_alpha(K)
        self.case = 2 if alpha2 >= 1 / K - 1e-12 else 1
        if self.case == 2:
            self.alpha = alpha2
            self.n0 = sample_size(alpha2, 1 / 8, sigma)
            self.n_arm = max(1, _tolerant_ceil(32 * self.sigma**2 * math.log(32 * alpha2 * K)))
        else:
            self.alpha = 1 / (8 * K)
            self.n0 = sample_size(self.alpha, 1 / 4, sigma)
            self.n_arm = 0
        self.candidates: list[int] | None = None
        self._next = 0

    def budget(self, n_candidates: int) -> int:
        """Total queries for a shortlist of the given size (1 when noise-free)."""
        if self.sigma == 0:
            return 1
        return self.n0 + (n_candidates * self.n_arm if self.case == 2 else 0)

    def shortlist(self, mu0: float) -> list[int]:
        K, a = self.K, self.alpha
        return [i for i in range(1, K + 1) if abs(mu0 - i / (4 * K)) <= a]

    def _fallback(self, history: History) -> Stop:
        self.tag = "fallback_empty_candidates"
        seen = sorted(set(history.actions))
        return Stop(max(seen, key=lambda a: (history.mean(a), -a)))

    def act(self, history: History) -> Query | Stop:
        K = self.K
        if len(history) == 0:
            return Query(0, repeat=self.n0)
        if self.sigma == 0:
            r = Fraction(history[0][1])
            i = r * 4 * K
            if i.denominator != 1 or not 1 <= i <= K:
                raise ProtocolError(f"a_0 reading {r} is not a code i/(4K)")
            return Stop(int(i))
        if self.candidates is None:
            mu0 = history.mean(0)
            self.candidates = self.shortlist(mu0)
            if not self.candidates:
                return self._fallback(history)
            if self.case == 1:
                return Stop(min(self.candidates, key=lambda i: (abs(mu0 - i / (4 * K)), i)))
        if self.case == 1:
            raise ProtocolError("few-candidates case already stopped")
        if self._next < len(self.candidates):
            arm = self.candidates[self._next]
            self._next += 1
            return Query(arm, repeat=self.n_arm)
        best = max(self.candidates, key=lambda i: (history.mean(i), -i))
        return Stop(best)


class TreeDescent(Learner):
    """Walks the binary tree querying left children only.

    A 0 at an internal node means the node is on the target path; a
    ``1 - Delta`` means its sibling is. At the leaf level the queried leaf or
    its sibling is the answer, so exactly ``d`` queries are used.
    """

    def __init__(self, d: int, Delta: Any):
        if d < 1:
            raise DomainError("tree depth d must be >= 1")
        self.d = d
        self.Delta = to_exact(Delta)
        self._pos = (2, 1)
        self._seen = 0

    def act(self, history: History) -> Query | Stop:
        high = 1 - self.Delta
        while self._seen < len(history):
            a, r = history[self._seen]
            self._seen += 1
            level, pos = tree_node(a)
            r = Fraction(r) if isinstance(r, float) else r
            if level == self.d + 1:
                if r == 1:
                    return Stop(a)
                if r == 0:
                    return Stop(tree_index(level, pos + 1))
                raise ProtocolError(f"leaf reading {r} is neither 0 nor 1")
            if r == 0:
                self._pos = (level + 1, 2 * pos - 1)
            elif r == high:
                self._pos = (level + 1, 2 * (pos + 1) - 1)
            else:
                raise ProtocolError(f"internal reading {r} is neither 0 nor 1-Delta")
        return Query(tree_index(*self._pos))


class UCB(Learner):
    """Upper confidence bound index policy for regret minimization; never stops.

    The bonus uses ``max(sigma, 1e-6)`` so the noise-free case stays well defined.
    """

    def __init__(self, sigma: float, arms: Sequence[int], horizon: int | None = None):
        if not arms:
            raise DomainError("ucb needs at least one arm")
        if horizon is not None and horizon < len(arms):
            raise DomainError("horizon must be at least the number of arms")
        self.arms = list(arms)
        self.sigma_eff = max(float(sigma), 1e-6)
        self.counts = [0] * len(self.arms)
        self.sums = [0.0] * len(self.arms)
        self._slot = {a: j for j, a in enumerate(self.arms)}
        self._seen = 0

    def act(self, history: History) -> Query:
        acts, rews = history.actions, history.rewards
        for t in range(self._seen, len(history)):
            j = self._slot[acts[t]]
            self.counts[j] += 1
            self.sums[j] += float(rews[t])
        self._seen = len(history)
        for j, n in enumerate(self.counts):
            if n == 0:
                return Query(self.arms[j])
        c = 2.0 * self.sigma_eff**2 * math.log(self._seen)
        best_j, best_v = 0, -math.inf
        for j, n in enumerate(self.counts):
            v = self.sums[j] / n + math.sqrt(c / n)
            if v > best_v:
                best_j, best_v = j, v
        return Query(self.arms[best_j])


class InfoLockDecode(Learner):
    """Reads the binary code of an info-lock class, then names the arm.

    Every code action gets ``sample_size(eps1, delta / m, sigma)`` pulls; the
    sign of its mean minus 1/2 is one bit of ``k - 1``.
    """

    def __init__(self, K: int, eps1: Any, sigma: float, delta: float = 0.25):
        if K < 2:
            raise DomainError("info_lock_decode needs K >= 2")
        self.K = K
        self.m = math.ceil(math.log2(K))
        self.eps1 = float(to_exact(eps1))
        self.n_code = sample_size(self.eps1, delta / self.m, sigma)
        self._j = 0

    def act(self, history: History) -> Query | Stop:
        if self._j < self.m:
            self._j += 1
            return Query(self._j - 1, repeat=self.n_code)
        k = 1
        for j in range(self.m):
            bit = history.mean(j) > 0.5
            k += int(bit) << (self.m - 1 - j)
        return Stop(self.m + min(k, self.K) - 1)


# -- spec deserialization ------------------------------------------------------

def _need(spec: Mapping[str, Any], key: str) -> Any:
    if key not in spec:
        raise DomainError(f"learner spec of kind {spec.get('kind')!r} is missing field {key!r}")
    return spec[key]


def _check_class(klass: ExplicitClass, name: str, **params: Any) -> None:
    if klass.name != name:
        raise DomainError(f"learner expects a {name!r} class, got {klass.name!r}")
    for k, v in params.items():
        if k in klass.params and klass.params[k] != v:
            raise DomainError(f"learner parameter {k}={v} disagrees with class {k}={klass.params[k]}")


def learner_factory(
    spec: Mapping[str, Any],
    klass: ExplicitClass,
    sigma: float,
    epsilon: Any = 0,
) -> LearnerFactory:
    """Validate a learner spec against ``klass`` and return a fresh-instance factory.

    Expensive setup (policy trees) happens once here, not per trial.
    """
    if not isinstance(spec, Mapping):
        raise DomainError("learner spec must be a JSON object")
    kind = spec.get("kind")
    try:
        if kind == "vs_greedy":
            eps = spec.get("epsilon", epsilon)
            tree = exact_qc(klass, eps, cap=int(spec.get("cap", DEFAULT_CAP))).tree
            return lambda: VersionSpaceGreedy(tree)
        if kind == "denoise":
            inner_spec = _need(spec, "inner")
            inner = learner_factory(inner_spec, klass, 0.0, epsilon)
            return lambda: DenoiseWrapper(inner(), klass)
        if kind == "two_phase":
            K = int(_need(spec, "K"))
            s = float(spec.get("sigma", sigma))
            _check_class(klass, "informative_k", K=K)
            TwoPhaseInformative(K, s)
            return lambda: TwoPhaseInformative(K, s)
        if kind == "tree_descent":
            d, Delta = int(_need(spec, "d")), to_exact(_need(spec, "Delta"))
            _check_class(klass, "tree", d=d, Delta=Delta)
            return lambda: TreeDescent(d, Delta)
        if kind == "ucb":
            horizon = spec.get("horizon")
            arms = list(spec.get("arms", range(klass.n_actions)))
            for a in arms:
                if not isinstance(a, int) or not 0 <= a < klass.n_actions:
                    raise DomainError(f"ucb arm {a!r} is not an action of the class")
            s = float(spec.get("sigma", sigma))
            UCB(s, arms, horizon)
            return lambda: UCB(s, arms, horizon)
        if kind == "info_lock_decode":
            K = int(_need(spec, "K"))
            eps1 = to_exact(_need(spec, "eps1"))
            s = float(spec.get("sigma", sigma))
            delta = float(spec.get("delta", 0.25))
            _check_class(klass, "info_lock", K=K, eps1=eps1)
            return lambda: InfoLockDecode(K, eps1, s, delta)
    except DomainError:
        raise
    except (TypeError, ValueError) as exc:
        raise DomainError(f"bad learner spec field: {exc}") from exc
    raise DomainError(f"unknown learner kind {kind!r} (field 'kind')")
