import math
from fractions import Fraction as F

import pytest

from banditlab.classes import (
    InfoLockParams,
    TreeClassParams,
    info_lock_arm,
    make_info_lock,
    make_informative_chain,
    make_informative_K,
    make_tree_class,
    tree_index,
)
from banditlab.core import DomainError, ExplicitClass, History, ProtocolError, Query, Stop, make_rng
from banditlab.harness import play
from banditlab.learners import (
    UCB,
    DenoiseWrapper,
    InfoLockDecode,
    TreeDescent,
    TwoPhaseInformative,
    VersionSpaceGreedy,
    denoise_threshold,
    learner_factory,
    two_phase_alpha,
)
from banditlab.metrics import sample_size

HALF = F(1, 2)


def run_noise_free(cls, f, learner):
    res = play(cls.row(f), learner, 0.0, make_rng(0))
    return res.output, len(res.history), res.history


class TestVersionSpaceGreedy:
    def test_tree(self):
        cls = make_tree_class(TreeClassParams(3, HALF))
        for f in range(cls.n_functions):
            out, q, _ = run_noise_free(cls, f, VersionSpaceGreedy.for_class(cls, F(1, 10)))
            assert cls.value(f, out) == 1 and q <= 3

    def test_singleton_and_chain(self):
        out, q, _ = run_noise_free(ExplicitClass([[0, 1]]), 0, VersionSpaceGreedy.for_class(ExplicitClass([[0, 1]])))
        assert (out, q) == (1, 0)
        chain = make_informative_chain(8)
        _, q, hist = run_noise_free(chain, 5, VersionSpaceGreedy.for_class(chain))
        assert q == 1 and hist.actions == [0]

    def test_unknown_branch(self):
        learner = VersionSpaceGreedy.for_class(make_informative_chain(4))
        with pytest.raises(ProtocolError):
            learner.act(History([(0, F(1, 3))]))


class TestDenoise:
    def test_sigma_zero_matches_inner(self):
        cls = make_tree_class(TreeClassParams(3, HALF))
        for f in range(cls.n_functions):
            inner = VersionSpaceGreedy.for_class(cls, F(1, 10))
            wrapped = DenoiseWrapper(VersionSpaceGreedy.for_class(cls, F(1, 10)), cls)
            h = History()
            while True:
                a, b = inner.act(h), wrapped.act(h)
                assert a == b
                if isinstance(a, Stop):
                    break
                h.append(a.action, cls.value(f, a.action))

    def test_projection_ties_to_smaller(self):
        cls = make_tree_class(TreeClassParams(2, HALF))
        w = DenoiseWrapper(VersionSpaceGreedy.for_class(cls, F(1, 10)), cls)
        assert w.project(1, 0.25) == 0
        assert w.project(1, 0.26) == HALF
        assert w.project(1, -3.0) == 0

    def test_threshold(self):
        sb = denoise_threshold(0.5, 3, 0.1)
        assert sb**2 == pytest.approx(0.25 / (4 * math.log(60)))
        assert sb**2 == pytest.approx(0.01526, abs=1e-5)
        with pytest.raises(DomainError):
            denoise_threshold(0.5, 3, 0.1, 0.1)


class TestTwoPhase:
    def test_alpha(self):
        assert two_phase_alpha(64) == pytest.approx(0.05620, abs=1e-5)

    def test_noise_free(self):
        cls = make_informative_K(8)
        out, q, _ = run_noise_free(cls, 4, TwoPhaseInformative(8, 0.0))
        assert (out, q) == (5, 1)

    def test_case_switch(self):
        assert TwoPhaseInformative(8, 1.0).case == 2
        assert TwoPhaseInformative(7, 1.0).case == 1
        assert TwoPhaseInformative(64, 1.0).case == 2

    def test_budget_closed_form(self):
        K, s = 64, 1.0
        learner = TwoPhaseInformative(K, s)
        a = two_phase_alpha(K)
        assert learner.n0 == math.ceil(2 * s**2 * math.log(16) / a**2)
        assert learner.n_arm == math.ceil(32 * s**2 * math.log(32 * a * K))
        res = play(make_informative_K(K).row(10), learner, s, make_rng(3))
        assert len(res.history) == learner.budget(len(learner.candidates))

    def test_case_one_budget(self):
        learner = TwoPhaseInformative(4, 0.5)
        assert learner.n0 == sample_size(1 / 32, 0.25, 0.5)
        res = play(make_informative_K(4).row(0), learner, 0.5, make_rng(1))
        assert len(res.history) == learner.n0

    def test_fallback(self):
        learner = TwoPhaseInformative(8, 1.0)
        h = History()
        h.extend(0, [5.0] * learner.n0)
        d = learner.act(h)
        assert d == Stop(0) and learner.tag == "fallback_empty_candidates"

    def test_deterministic(self):
        row = make_informative_K(16).row(3)
        a = play(row, TwoPhaseInformative(16, 1.0), 1.0, make_rng(9))
        b = play(row, TwoPhaseInformative(16, 1.0), 1.0, make_rng(9))
        assert a.history.actions == b.history.actions and a.history.rewards == b.history.rewards


class TestTreeDescent:
    def test_trace(self):
        cls = make_tree_class(TreeClassParams(2, HALF))
        # function 1: path through a_{2,1} and leaf a_{3,2}
        out, q, hist = run_noise_free(cls, 1, TreeDescent(2, HALF))
        assert hist.actions == [tree_index(2, 1), tree_index(3, 1)]
        assert out == tree_index(3, 2)

    @pytest.mark.parametrize("d", range(1, 7))
    def test_exhaustive(self, d):
        cls = make_tree_class(TreeClassParams(d, F(1, 3)))
        for f in range(cls.n_functions):
            out, q, _ = run_noise_free(cls, f, TreeDescent(d, F(1, 3)))
            assert cls.value(f, out) == 1 and q == d

    def test_bad_reading(self):
        with pytest.raises(ProtocolError):
            TreeDescent(2, HALF).act(History([(1, F(1, 3))]))


class TestUCB:
    def test_single_arm(self):
        res = play((F(1, 2),), UCB(1.0, [0]), 1.0, make_rng(0), horizon=50)
        assert res.regret == 0 and res.pulls == [50]

    def test_noise_free_locks_on_best(self):
        row = (F(9, 10), F(1))
        res = play(row, UCB(0.0, [0, 1]), 0.0, make_rng(0), horizon=100)
        assert res.history.actions[:2] == [0, 1]
        assert set(res.history.actions[2:]) == {1}

    def test_arms_subset(self):
        cls = make_info_lock(InfoLockParams(2, F(1, 10), F(1, 25)))
        arms = [info_lock_arm(cls, 1), info_lock_arm(cls, 2)]
        res = play(cls.row(0), UCB(1.0, arms), 1.0, make_rng(2), horizon=200)
        assert res.pulls[0] == 0 and sum(res.pulls) == 200

    def test_horizon_check(self):
        with pytest.raises(DomainError):
            UCB(1.0, [0, 1, 2], horizon=2)


class TestInfoLockDecode:
    @pytest.mark.parametrize("K", [2, 5, 8])
    def test_noise_free(self, K):
        cls = make_info_lock(InfoLockParams(K, F(1, 10), F(1, 25)))
        for f in range(K):
            out, q, _ = run_noise_free(cls, f, InfoLockDecode(K, F(1, 10), 0.0))
            assert out == info_lock_arm(cls, f + 1) and q == math.ceil(math.log2(K))

    def test_budget(self):
        learner = InfoLockDecode(2, F(1, 10), 1.0)
        assert learner.n_code == sample_size(0.1, 0.25, 1.0)


class TestFactory:
    def test_kinds(self):
        tree = make_tree_class(TreeClassParams(2, HALF))
        assert isinstance(learner_factory({"kind": "vs_greedy"}, tree, 0)(), VersionSpaceGreedy)
        assert isinstance(learner_factory({"kind": "tree_descent", "d": 2, "Delta": 0.5}, tree, 0)(), TreeDescent)
        den = learner_factory({"kind": "denoise", "inner": {"kind": "vs_greedy"}, "delta": 0.1}, tree, 0.1)
        assert isinstance(den(), DenoiseWrapper)
        assert isinstance(learner_factory({"kind": "ucb", "horizon": 10}, tree, 1)(), UCB)
        k = make_informative_K(4)
        assert isinstance(learner_factory({"kind": "two_phase", "K": 4}, k, 1)(), TwoPhaseInformative)

    @pytest.mark.parametrize(
        "spec, word",
        [
            ({"kind": "two_phase", "K": 4}, "informative_k"),
            ({"kind": "tree_descent", "d": 3, "Delta": 0.5}, "d=3"),
            ({"kind": "tree_descent", "d": 2}, "Delta"),
            ({"kind": "ucb", "arms": [9]}, "arm"),
            ({"kind": "what"}, "kind"),
        ],
    )
    def test_validation(self, spec, word):
        tree = make_tree_class(TreeClassParams(2, HALF))
        with pytest.raises(DomainError, match=word):
            learner_factory(spec, tree, 0)

    def test_fresh_instances(self):
        tree = make_tree_class(TreeClassParams(2, HALF))
        fac = learner_factory({"kind": "vs_greedy"}, tree, 0)
        assert fac() is not fac()
