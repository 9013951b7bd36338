import csv
import io
import json
import math
from fractions import Fraction as F

import pytest

from banditlab.classes import InfoLockParams, class_from_spec, make_info_lock, make_informative_K
from banditlab.core import DomainError, Learner, Query, Stop, make_rng
from banditlab.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    binomial_ci95,
    chain_diagnostic,
    dumps_json,
    info_lock_eps,
    pinsker_check,
    play,
    records_to_csv,
    records_to_json,
    run_trials,
    sandwich_bounds,
)
from banditlab.learners import InfoLockDecode, TwoPhaseInformative

TREE3 = {"kind": "tree", "d": 3, "Delta": "1/2"}


def tree_config(**kw):
    base = dict(class_spec=TREE3, learner_spec={"kind": "vs_greedy"}, epsilon="1/10", trials=16)
    base.update(kw)
    return ExperimentConfig(**base)


class _Wanders(Learner):
    def act(self, history):
        return Query(0, repeat=3)


class _Bad(Learner):
    def act(self, history):
        return Query(99)


class TestPlay:
    def test_budget_exhausted(self):
        res = play((F(1, 2), F(1)), _Wanders(), 0.0, make_rng(0), budget=10)
        assert res.error_tag == "budget_exhausted" and len(res.history) == 10

    def test_protocol_error_becomes_tag(self):
        res = play((F(1),), _Bad(), 0.0, make_rng(0))
        assert res.error_tag == "ProtocolError" and res.output is None

    def test_commit_after_stop_in_regret_mode(self):
        class StopAt1(Learner):
            def act(self, history):
                return Query(1) if len(history) == 0 else Stop(0)

        res = play((F(1, 2), F(1)), StopAt1(), 0.0, make_rng(0), horizon=10)
        assert res.pulls == [9, 1] and res.regret == F(9, 2)


class TestRunTrials:
    def test_tree_all_functions(self):
        records, summary = run_trials(tree_config())
        assert summary.success_rate == 1.0
        assert max(r.queries for r in records) <= 3
        assert {r.function_index for r in records} == set(range(8))

    def test_deterministic_and_thread_invariant(self):
        cfg = ExperimentConfig(
            class_spec={"kind": "informative_k", "K": 8},
            learner_spec={"kind": "two_phase", "K": 8},
            sigma=1.0, trials=40, seed=3,
        )
        a, sa = run_trials(cfg)
        b, sb = run_trials(cfg)
        c, sc = run_trials(cfg, threads=2)
        assert records_to_csv(a) == records_to_csv(b) == records_to_csv(c)
        assert sa.as_dict() == sc.as_dict()

    def test_fixed_adversary(self):
        records, summary = run_trials(tree_config(adversary="fixed", function_index=5))
        assert {r.function_index for r in records} == {5}
        assert summary.worst_function["index"] == 5

    def test_regret_accounting(self):
        cfg = ExperimentConfig(
            class_spec={"kind": "info_lock", "K": 2, "eps1": "1/10", "eps2": "1/25"},
            learner_spec={"kind": "ucb", "arms": [1, 2]},
            sigma=1.0, trials=6, horizon=300, seed=1,
        )
        records, summary = run_trials(cfg)
        cls = class_from_spec(cfg.class_spec)
        for r in records:
            row = cls.row(r.function_index)
            assert r.regret == pytest.approx(float(sum(n * (max(row) - row[a]) for a, n in enumerate(r.pulls))))
            assert r.regret >= 0 and r.success is None and sum(r.pulls) == 300
        assert summary.success_rate is None

    def test_config_validation(self):
        with pytest.raises(DomainError):
            tree_config(trials=0)
        with pytest.raises(DomainError):
            tree_config(adversary="mean")
        with pytest.raises(DomainError, match="learner"):
            ExperimentConfig.from_dict({"class": TREE3})
        with pytest.raises(DomainError, match="bogus"):
            ExperimentConfig.from_dict({"class": TREE3, "learner": {}, "bogus": 1})
        with pytest.raises(DomainError):
            run_trials(tree_config(adversary="fixed", function_index=99))

    def test_ci(self):
        lo, hi = binomial_ci95(50, 100)
        assert lo == pytest.approx(0.5 - 1.96 * 0.05) and hi == pytest.approx(0.5 + 1.96 * 0.05)
        assert binomial_ci95(10, 10) == (1.0, 1.0)


class TestSerialization:
    def test_csv_and_json_agree(self):
        records, _ = run_trials(tree_config(trials=4))
        rows = list(csv.DictReader(io.StringIO(records_to_csv(records))))
        assert tuple(rows[0]) == CSV_COLUMNS
        js = json.loads(records_to_json(records))
        for r, j in zip(rows, js):
            assert int(r["queries"]) == j["queries"] and int(r["output_action"]) == j["output_action"]
            assert bool(int(r["success"])) == j["success"]

    def test_float_digits(self):
        assert dumps_json(0.1) == "0.10000000000000001"
        assert dumps_json({"b": F(1, 4), "a": [math.inf, None]}) == '{\n  "a": [\n    "inf",\n    null\n  ],\n  "b": "1/2^2"\n}'


class TestDiagnostics:
    def test_identical_rows(self):
        cls = make_informative_K(4)
        rep = pinsker_check(
            cls.row(0), cls.row(0), lambda: TwoPhaseInformative(4, 1.0),
            lambda r: r.output_action == 1, 10**6, 300, 1.0, seed=2,
        )
        assert rep.kl == 0 and rep.passed

    def test_sigma_zero_rejected(self):
        with pytest.raises(DomainError):
            pinsker_check((F(0),), (F(1),), lambda: None, lambda r: True, 1, 10, 0.0)

    def test_info_lock_pair(self):
        cls = make_info_lock(InfoLockParams(2, F(1, 10), F(1, 25)))
        f0 = (F(1, 2), F(1), F(1))
        rep = pinsker_check(f0, cls.row(0), lambda: InfoLockDecode(2, F(1, 10), 1.0),
                            lambda r: r.output_action == 1, 10**6, 500, 1.0, seed=4)
        assert rep.passed and rep.kl == pytest.approx(416 * 0.01 / 2)

    def test_info_lock_eps_and_sandwich(self):
        e1, e2 = info_lock_eps(64)
        assert float(e1) == pytest.approx(math.sqrt(math.log(4 / 3) / 128))
        assert e2 == 4 * e1**2
        lo, hi = sandwich_bounds(2, float(e1))
        assert lo == pytest.approx(64.0)
        assert lo < InfoLockDecode(2, e1, 1.0).n_code <= hi

    def test_chain_diagnostic_labelled(self):
        rep = chain_diagnostic(1, trials=32)
        assert rep["probative"] is False and rep["N"] == 16
        assert 0 <= rep["worst_success"] <= 1
