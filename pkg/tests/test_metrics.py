import itertools
import math
from fractions import Fraction as F

import numpy as np
import pytest

from banditlab.classes import make_informative_K
from banditlab.core import DomainError, ExplicitClass, eps_optimal_set, make_rng
from banditlab.metrics import (
    divergence_budget,
    gamma,
    gaussian_kl,
    huber_bretagnolle_bound,
    pinsker_bound,
    sample_size,
)


def grid_gamma(cls, eps, steps=60):
    """Brute force over a simplex grid; independent of the LP."""
    na = cls.n_actions
    sets = [eps_optimal_set(row, eps) for row in cls.rewards]
    best = 0.0
    for combo in itertools.product(range(steps + 1), repeat=na - 1):
        if sum(combo) > steps:
            continue
        p = list(combo) + [steps - sum(combo)]
        val = min(sum(p[a] for a in s) for s in sets) / steps
        best = max(best, val)
    return best


class TestGamma:
    @pytest.mark.parametrize("K", [2, 4, 8])
    def test_informative(self, K):
        res = gamma(make_informative_K(K), F(2, 5))
        assert abs(res.value - 1 / K) < 1e-9
        assert abs(res.witness.sum() - 1) < 1e-12

    def test_singleton(self):
        assert gamma(ExplicitClass([[0, 1]]), 0).value == pytest.approx(1.0)

    def test_matches_grid(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            na, nf = int(rng.integers(2, 4)), int(rng.integers(1, 4))
            rows = set()
            while len(rows) < nf:
                rows.add(tuple(F(int(v), 4) for v in rng.integers(0, 5, na)))
            cls = ExplicitClass(list(rows))
            assert abs(gamma(cls, F(1, 4)).value - grid_gamma(cls, F(1, 4))) < 2e-2


class TestKl:
    def test_values(self):
        assert gaussian_kl(0, 1, 1) == 0.5
        assert gaussian_kl(0.2, 0.2, 3) == 0
        with pytest.raises(DomainError):
            gaussian_kl(0, 1, 0)

    def test_divergence_budget(self):
        assert divergence_budget([10, 0, 4], [0.5, 1.0, 0.25], 1.0) == pytest.approx(10 * 0.125 + 4 * 0.03125)
        with pytest.raises(DomainError):
            divergence_budget([1], [1, 2], 1)

    def test_bounds(self):
        assert pinsker_bound(0.5) == 0.5
        assert huber_bretagnolle_bound(0) == 1
        with pytest.raises(DomainError):
            pinsker_bound(-1)


class TestSampleSize:
    def test_closed_form(self):
        assert sample_size(0.25, 0.1, 1) == math.ceil(32 * math.log(20))
        assert sample_size(0.5, 0.05, 2) == math.ceil(32 * math.log(40))
        assert sample_size(0.3, 0.2, 0) == 1

    def test_integral_values_not_bumped(self):
        # 2 * 2 * log(2 / (2 / e)) / 1 = 4 exactly in real arithmetic
        assert sample_size(1.0, 2 / math.e, math.sqrt(2)) == 4

    def test_domain(self):
        with pytest.raises(DomainError):
            sample_size(0.1, 1.0, 1)
        with pytest.raises(DomainError):
            sample_size(0, 0.1, 1)

    def test_concentration_small(self):
        n = sample_size(0.5, 0.1, 1.0)
        rng = make_rng(3)
        means = rng.standard_normal((4000, n)).mean(axis=1)
        assert np.mean(np.abs(means) > 0.5) <= 0.1
