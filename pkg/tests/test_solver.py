import math
import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from banditlab.classes import (
    TreeClassParams,
    make_informative_chain,
    make_informative_K,
    make_tree_class,
)
from banditlab.core import DomainError, ExplicitClass, eps_optimal_set
from banditlab.solver import (
    QueryNode,
    StopNode,
    brute_force_qc,
    exact_qc,
    gap_of_class,
    gap_of_policy,
    run_policy,
    tree_depth,
    tree_from_json,
    tree_to_json,
)

HALF = F(1, 2)
TENTH = F(1, 10)


@st.composite
def small_classes(draw, max_f=6, max_a=6):
    na = draw(st.integers(1, max_a))
    nf = draw(st.integers(1, min(max_f, 4**na)))
    rows = draw(
        st.lists(
            st.tuples(*[st.sampled_from([F(0), F(1, 4), F(1, 2), F(3, 4)])] * na),
            min_size=nf, max_size=nf, unique=True,
        )
    )
    return ExplicitClass(rows)


class TestExactQc:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_tree(self, d):
        assert exact_qc(make_tree_class(TreeClassParams(d, HALF)), TENTH).qc == d

    def test_informative(self):
        assert exact_qc(make_informative_K(8), F(2, 5)).qc == 1
        assert exact_qc(make_informative_chain(8)).qc == 1

    def test_singleton(self):
        res = exact_qc(ExplicitClass([[0, 1]]))
        assert res.qc == 0 and res.tree == StopNode(1)

    def test_cap(self):
        with pytest.raises(DomainError, match="cap is 20"):
            exact_qc(make_informative_chain(21))
        assert exact_qc(make_informative_chain(40), cap=40).qc == 1

    def test_lowest_index_tree(self):
        tree = exact_qc(make_informative_chain(8)).tree
        assert isinstance(tree, QueryNode) and tree.action == 0

    @settings(max_examples=150, deadline=None)
    @given(small_classes(), st.sampled_from([F(0), F(1, 4), F(1, 2)]))
    def test_matches_brute_force_and_replays(self, cls, eps):
        res = exact_qc(cls, eps)
        assert res.qc == brute_force_qc(cls, eps)
        assert tree_depth(res.tree) == res.qc
        for f in range(cls.n_functions):
            out, q = run_policy(res.tree, cls.row(f))
            assert out in eps_optimal_set(cls.row(f), eps)
            assert q <= res.qc

    @settings(max_examples=60, deadline=None)
    @given(small_classes(), st.data())
    def test_monotone(self, cls, data):
        e1 = data.draw(st.sampled_from([F(0), F(1, 4)]))
        assert exact_qc(cls, e1 + F(1, 4)).qc <= exact_qc(cls, e1).qc
        if cls.n_functions > 1:
            drop = data.draw(st.integers(0, cls.n_functions - 1))
            sub = ExplicitClass([r for i, r in enumerate(cls.rewards) if i != drop])
            assert exact_qc(sub, e1).qc <= exact_qc(cls, e1).qc

    def test_policy_json_round_trip(self):
        tree = exact_qc(make_tree_class(TreeClassParams(2, HALF)), TENTH).tree
        obj = tree_to_json(tree)
        assert tree_from_json(obj) == tree
        assert "1/2^1" in obj["branches"]
        with pytest.raises(DomainError):
            tree_from_json({"query": 0})


class TestGap:
    def test_chain(self):
        c = make_informative_chain(4)
        assert gap_of_policy(exact_qc(c).tree, c) == F(1, 24)
        assert gap_of_class(c).gap == F(1, 24)

    def test_tree(self):
        c = make_tree_class(TreeClassParams(2, HALF))
        assert gap_of_policy(exact_qc(c, TENTH).tree, c) == HALF
        assert gap_of_class(c, TENTH).gap == HALF
        assert gap_of_class(make_tree_class(TreeClassParams(3, HALF)), TENTH).gap == HALF

    def test_tree_depth_one_leaves_only(self):
        # both optimal first queries are leaves, whose achievable values are {0, 1}
        res = gap_of_class(make_tree_class(TreeClassParams(1, HALF)), TENTH)
        assert res.gap == 1 and res.qc == 1 and not res.partial

    def test_singleton_and_constant(self):
        c = ExplicitClass([[0, 1]])
        assert gap_of_class(c).gap == math.inf
        two = ExplicitClass([[0, 1, F(1, 2)], [1, 0, F(1, 2)]])
        tree = QueryNode(2, {F(1, 2): QueryNode(0, {F(0): StopNode(1), F(1): StopNode(0)})})
        assert gap_of_policy(tree, two) == 1

    @settings(max_examples=40, deadline=None)
    @given(small_classes(max_f=5, max_a=4))
    def test_gap_dominates_solver_tree(self, cls):
        res = gap_of_class(cls)
        assert res.gap >= gap_of_policy(exact_qc(cls).tree, cls)
        assert tree_depth(res.tree) <= res.qc
        assert gap_of_policy(res.tree, cls) == res.gap

    def test_node_budget_partial(self):
        rng = random.Random(1)
        rows = set()
        while len(rows) < 12:
            rows.add(tuple(F(rng.randint(0, 7), 8) for _ in range(6)))
        cls = ExplicitClass(list(rows))
        res = gap_of_class(cls, node_budget=1)
        full = gap_of_class(cls)
        assert res.partial and res.gap <= full.gap
        assert gap_of_policy(res.tree, cls) == res.gap
