"""Generalized maximin volume and Gaussian information-theory helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from scipy.optimize import linprog

from .core import DomainError, ExplicitClass, eps_optimal_set


@dataclass
class GammaResult:
    value: float
    witness: np.ndarray
    achieved: np.ndarray
    """Probability mass the witness puts on each function's eps-optimal set."""


def gamma(cls: ExplicitClass, epsilon: Any) -> GammaResult:
    """Best guaranteed probability that one fixed action distribution hits an eps-optimal action.

    Solves ``max t`` subject to ``sum_{a in S_f} p_a >= t`` for every
    function ``f``, ``sum p = 1``, ``p >= 0`` where ``S_f`` is the exact
    eps-optimal set of ``f``.
    """
    na, nf = cls.n_actions, cls.n_functions
    member = np.zeros((nf, na))
    for f in range(nf):
        for a in eps_optimal_set(cls.rewards[f], epsilon):
            member[f, a] = 1.0
    # variables: p_0..p_{na-1}, t ; minimize -t
    c = np.zeros(na + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-member, np.ones((nf, 1))])
    b_ub = np.zeros(nf)
    A_eq = np.hstack([np.ones((1, na)), np.zeros((1, 1))])
    b_eq = np.array([1.0])
    bounds = [(0, None)] * na + [(0, 1)]
    res = linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
        method="highs", options={"primal_feasibility_tolerance": 1e-10,
                                 "dual_feasibility_tolerance": 1e-10},
    )
    if not res.success:
        raise RuntimeError(f"maximin LP failed: {res.message}")
    p = np.clip(res.x[:na], 0.0, None)
    p = p / p.sum()
    achieved = member @ p
    return GammaResult(float(achieved.min()), p, achieved)


def gaussian_kl(mu1: float, mu2: float, sigma: float) -> float:
    """KL between N(mu1, sigma^2) and N(mu2, sigma^2)."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    return (float(mu1) - float(mu2)) ** 2 / (2.0 * sigma**2)


def divergence_budget(counts: Sequence[float], gaps: Sequence[float], sigma: float) -> float:
    """KL between two bandit interaction laws: pull counts times per-arm Gaussian KL."""
    if len(counts) != len(gaps):
        raise DomainError("counts and gaps must have the same length")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    return sum(float(n) * float(g) ** 2 for n, g in zip(counts, gaps)) / (2.0 * sigma**2)


def _tolerant_ceil(x: float) -> int:
    # absorb float noise in closed forms that are integral in exact arithmetic
    return math.ceil(x - 1e-9 * max(1.0, abs(x)))


def sample_size(accuracy: float, delta: float, sigma: float) -> int:
    """Samples so the empirical mean is within ``accuracy`` w.p. at least ``1 - delta``.

    ``ceil(2 sigma^2 log(2/delta) / accuracy^2)``, and 1 when ``sigma == 0``.
    """
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    if not accuracy > 0:
        raise DomainError("accuracy must be positive")
    if sigma < 0:
        raise DomainError("sigma must be nonnegative")
    if sigma == 0:
        return 1
    return max(1, _tolerant_ceil(2.0 * sigma**2 * math.log(2.0 / delta) / accuracy**2))


def pinsker_bound(kl: float) -> float:
    """Upper bound on total variation from KL."""
    if kl < 0:
        raise DomainError("KL must be nonnegative")
    return math.sqrt(kl / 2.0)


def huber_bretagnolle_bound(kl: float) -> float:
    """Lower bound on P(E) + Q(not E)."""
    if kl < 0:
        raise DomainError("KL must be nonnegative")
    return math.exp(-kl)
