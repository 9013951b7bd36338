"""Seeded Monte Carlo runner, record serialization and information diagnostics.

Each trial draws its own generator from ``(master seed, trial index)``, so
results do not depend on execution order or on how trials are split across
worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import __version__
from .classes import class_from_spec
from .core import (
    DomainError,
    ExplicitClass,
    History,
    InconsistentHistoryError,
    Learner,
    NormalStream,
    ProtocolError,
    Stop,
    eps_optimal_set,
    format_exact,
    make_rng,
    to_exact,
    trial_seed,
)
from .learners import LearnerFactory, learner_factory
from .metrics import divergence_budget, huber_bretagnolle_bound, pinsker_bound

DEFAULT_BUDGET = 10_000_000
ADVERSARIES = ("worst_over_class", "fixed")
CSV_COLUMNS = (
    "trial", "seed", "function_index", "queries", "output_action",
    "success", "regret", "error_tag", "wallclock_ns",
)


@dataclass
class TrialRecord:
    trial: int
    seed: int
    function_index: int
    queries: int
    output_action: int | None
    success: bool | None
    """None in regret mode when the learner never stopped."""
    regret: float
    error_tag: str = ""
    wallclock_ns: int = 0
    pulls: tuple[int, ...] = field(default=(), repr=False)

    def row(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in CSV_COLUMNS}


@dataclass
class ExperimentConfig:
    class_spec: dict[str, Any]
    learner_spec: dict[str, Any]
    sigma: float = 0.0
    epsilon: Fraction = Fraction(0)
    trials: int = 1
    seed: int = 0
    budget: int | None = None
    horizon: int | None = None
    adversary: str = "worst_over_class"
    function_index: int = 0
    timing: bool = False

    def __post_init__(self):
        self.epsilon = to_exact(self.epsilon)
        self.sigma = float(self.sigma)
        if self.trials < 1:
            raise DomainError("trials must be >= 1")
        if self.budget is not None and self.budget < 1:
            raise DomainError("budget must be >= 1")
        if self.horizon is not None and self.horizon < 1:
            raise DomainError("horizon must be >= 1")
        if self.sigma < 0:
            raise DomainError("sigma must be nonnegative")
        if self.adversary not in ADVERSARIES:
            raise DomainError(f"adversary must be one of {ADVERSARIES}, got {self.adversary!r}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExperimentConfig":
        if not isinstance(d, Mapping):
            raise DomainError("config must be a JSON object")
        for key in ("class", "learner"):
            if key not in d:
                raise DomainError(f"config is missing field {key!r}")
        known = {"class", "learner", "sigma", "epsilon", "trials", "seed", "budget",
                 "horizon", "adversary", "function_index"}
        extra = set(d) - known
        if extra:
            raise DomainError(f"unknown config field(s): {sorted(extra)}")
        try:
            return cls(
                class_spec=dict(d["class"]),
                learner_spec=dict(d["learner"]),
                sigma=d.get("sigma", 0.0),
                epsilon=d.get("epsilon", 0),
                trials=int(d.get("trials", 1)),
                seed=int(d.get("seed", 0)),
                budget=d.get("budget"),
                horizon=d.get("horizon"),
                adversary=d.get("adversary", "worst_over_class"),
                function_index=int(d.get("function_index", 0)),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise DomainError(f"bad config field: {exc}") from exc

    def echo(self) -> dict[str, Any]:
        return {
            "class": self.class_spec,
            "learner": self.learner_spec,
            "sigma": self.sigma,
            "epsilon": format_exact(self.epsilon),
            "trials": self.trials,
            "seed": self.seed,
            "budget": self.budget,
            "horizon": self.horizon,
            "adversary": self.adversary,
            "function_index": self.function_index,
        }


@dataclass
class PlayResult:
    output: int | None
    history: History
    pulls: list[int]
    regret: Fraction
    error_tag: str = ""


def play(
    row: Sequence[Fraction],
    learner: Learner,
    sigma: float,
    rng: np.random.Generator,
    budget: int | None = None,
    horizon: int | None = None,
) -> PlayResult:
    """Run one learner against one reward row.

    Identification mode (``horizon is None``) ends at Stop or when ``budget``
    queries are spent. Regret mode runs exactly ``horizon`` rounds; a learner
    that stops keeps playing its output for the remaining rounds. Regret is
    computed exactly from the pull counts.
    """
    limit = horizon if horizon is not None else (budget or DEFAULT_BUDGET)
    learner.reset(rng)
    stream = NormalStream(rng)
    history = History()
    n_actions = len(row)
    output, tag = None, ""
    try:
        while len(history) < limit:
            d = learner.act(history)
            if isinstance(d, Stop):
                output = int(d.output)
                if not 0 <= output < n_actions:
                    raise ProtocolError(f"learner output {output} is not an action")
                break
            a = d.action
            if not isinstance(a, (int, np.integer)) or not 0 <= a < n_actions:
                raise ProtocolError(f"learner queried invalid action {a!r}")
            k = min(d.repeat, limit - len(history))
            mean = row[a]
            if sigma == 0:
                if k == 1:
                    history.append(a, mean)
                else:
                    history.extend(a, [mean] * k)
            elif k == 1:
                history.append(a, float(mean) + sigma * stream.one())
            else:
                history.extend(a, (float(mean) + sigma * stream.draw(k)).tolist())
        else:
            if horizon is None:
                tag = "budget_exhausted"
    except (ProtocolError, InconsistentHistoryError, DomainError) as exc:
        tag = type(exc).__name__
        output = None
    if not tag and learner.tag:
        tag = learner.tag
    pulls = [history.count(a) for a in range(n_actions)]
    top = max(row)
    regret = sum((n * (top - row[a]) for a, n in enumerate(pulls) if n), Fraction(0))
    if horizon is not None and output is not None:
        regret += (horizon - len(history)) * (top - row[output])
        pulls[output] += horizon - len(history)
    return PlayResult(output, history, pulls, regret, tag)


def run_one(
    cls: ExplicitClass,
    factory: LearnerFactory,
    config: ExperimentConfig,
    trial: int,
    function_index: int | None = None,
) -> TrialRecord:
    if function_index is None:
        function_index = (
            trial % cls.n_functions if config.adversary == "worst_over_class"
            else config.function_index
        )
    if not 0 <= function_index < cls.n_functions:
        raise DomainError(f"function_index {function_index} out of range")
    row = cls.rewards[function_index]
    seed = trial_seed(config.seed, trial)
    t0 = time.perf_counter_ns() if config.timing else 0
    res = play(row, factory(), config.sigma, make_rng(seed), config.budget, config.horizon)
    elapsed = time.perf_counter_ns() - t0 if config.timing else 0
    if res.output is None:
        # a regret-mode learner that never stops has nothing to judge
        success = None if (config.horizon is not None and not res.error_tag) else False
    else:
        success = res.output in eps_optimal_set(row, config.epsilon)
    return TrialRecord(
        trial=trial,
        seed=seed,
        function_index=function_index,
        queries=len(res.history),
        output_action=res.output,
        success=success,
        regret=float(res.regret),
        error_tag=res.error_tag,
        wallclock_ns=elapsed,
        pulls=tuple(res.pulls),
    )


def _build(config: ExperimentConfig) -> tuple[ExplicitClass, LearnerFactory]:
    cls = class_from_spec(config.class_spec)
    if config.adversary == "fixed" and not 0 <= config.function_index < cls.n_functions:
        raise DomainError(f"function_index {config.function_index} out of range")
    return cls, learner_factory(config.learner_spec, cls, config.sigma, config.epsilon)


def _run_range(config: ExperimentConfig, start: int, stop: int) -> list[TrialRecord]:
    cls, factory = _build(config)
    return [run_one(cls, factory, config, t) for t in range(start, stop)]


@dataclass
class Summary:
    success_rate: float | None
    success_ci95: tuple[float, float] | None
    mean_queries: float
    mean_regret: float
    worst_function: dict[str, Any]
    config_echo: dict[str, Any]
    code_version: str = __version__

    def as_dict(self) -> dict[str, Any]:
        return {
            "success_rate": self.success_rate,
            "success_ci95": None if self.success_ci95 is None else list(self.success_ci95),
            "mean_queries": self.mean_queries,
            "mean_regret": self.mean_regret,
            "worst_function": self.worst_function,
            "config_echo": self.config_echo,
            "code_version": self.code_version,
        }


def binomial_ci95(successes: int, n: int) -> tuple[float, float]:
    """Normal-approximation 95% interval, clipped to [0, 1]."""
    p = successes / n
    half = 1.96 * math.sqrt(p * (1 - p) / n)
    return max(0.0, p - half), min(1.0, p + half)


def mean_and_se(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if len(arr) < 2:
        return float(arr.mean()), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(len(arr)))


def summarize(records: Sequence[TrialRecord], config: ExperimentConfig) -> Summary:
    judged = [r for r in records if r.success is not None]
    rate = ci = None
    if judged:
        wins = sum(r.success for r in judged)
        rate = wins / len(judged)
        ci = binomial_ci95(wins, len(judged))
    by_f: dict[int, list[TrialRecord]] = {}
    for r in records:
        by_f.setdefault(r.function_index, []).append(r)
    stats = []
    for f, rs in sorted(by_f.items()):
        js = [r for r in rs if r.success is not None]
        s = sum(r.success for r in js) / len(js) if js else None
        stats.append({
            "index": f,
            "trials": len(rs),
            "success_rate": s,
            "mean_regret": sum(r.regret for r in rs) / len(rs),
            "mean_queries": sum(r.queries for r in rs) / len(rs),
        })
    # lowest success first, then highest regret, then lowest index
    worst = min(stats, key=lambda s: (
        s["success_rate"] if s["success_rate"] is not None else 1.0, -s["mean_regret"], s["index"]
    ))
    return Summary(
        success_rate=rate,
        success_ci95=ci,
        mean_queries=sum(r.queries for r in records) / len(records),
        mean_regret=sum(r.regret for r in records) / len(records),
        worst_function=worst,
        config_echo=config.echo(),
    )


def run_trials(config: ExperimentConfig, threads: int = 1) -> tuple[list[TrialRecord], Summary]:
    """Run every trial of ``config``; records come back in trial order."""
    if threads < 1:
        raise DomainError("threads must be >= 1")
    n = config.trials
    if threads == 1 or n < 2 * threads:
        records = _run_range(config, 0, n)
    else:
        _build(config)  # surface spec errors before forking
        bounds = np.linspace(0, n, threads + 1).astype(int)
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_run_range, config, int(lo), int(hi))
                for lo, hi in zip(bounds, bounds[1:]) if hi > lo
            ]
            records = [r for fut in futures for r in fut.result()]
        records.sort(key=lambda r: r.trial)
    return records, summarize(records, config)


# -- serialization -------------------------------------------------------------

def _scalar(v: Any) -> Any:
    if isinstance(v, bool):
        return v
    if isinstance(v, Fraction):
        return format_exact(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def dumps_json(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits, rationals as strings."""
    obj = _scalar(obj)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return '"inf"' if obj > 0 else ('"-inf"' if obj < 0 else '"nan"')
        return format(obj, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = [
            f"{pad}{dumps_json(str(k))}: {dumps_json(v, indent, _level + 1)}"
            for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))
        ]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + dumps_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _csv_cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def records_to_csv(records: Sequence[TrialRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([_csv_cell(v) for v in r.row().values()])
    return buf.getvalue()


def records_to_json(records: Sequence[TrialRecord]) -> str:
    return dumps_json([r.row() for r in records]) + "\n"


# -- information-theoretic diagnostics ----------------------------------------

@dataclass
class PinskerReport:
    p0: float
    p1: float
    se0: float
    se1: float
    kl: float
    mean_pulls0: list[float]
    pinsker: float
    huber_bretagnolle: float
    pinsker_slack: float
    """Bound plus 3 SE minus |p0 - p1|; nonnegative when the check passes."""
    hb_slack: float
    """p0 + (1 - p1) + 3 SE minus the bound; nonnegative when the check passes."""

    @property
    def passed(self) -> bool:
        return self.pinsker_slack >= 0 and self.hb_slack >= 0


def pinsker_check(
    f0: Sequence[Any],
    f1: Sequence[Any],
    factory: LearnerFactory,
    event: Callable[[TrialRecord], bool],
    budget: int,
    trials: int,
    sigma: float,
    seed: int = 0,
) -> PinskerReport:
    """Compare event frequencies under two reward rows with the KL they allow.

    The KL between the two interaction laws is the pull-count-weighted sum of
    per-action Gaussian KLs, with counts estimated under ``f0``.
    """
    if not sigma > 0:
        raise DomainError("pinsker_check needs sigma > 0; KL is infinite without noise")
    if len(f0) != len(f1):
        raise DomainError("f0 and f1 must share an action space")
    if trials < 2:
        raise DomainError("need at least 2 trials per side")
    rows = [tuple(to_exact(v) for v in f) for f in (f0, f1)]
    hits: list[list[bool]] = [[], []]
    pulls0 = np.zeros(len(f0))
    for side, row in enumerate(rows):
        for t in range(trials):
            s = trial_seed(seed, side * trials + t)
            res = play(row, factory(), sigma, make_rng(s), budget)
            rec = TrialRecord(
                trial=t, seed=s, function_index=side, queries=len(res.history),
                output_action=res.output, success=None, regret=float(res.regret),
                error_tag=res.error_tag, pulls=tuple(res.pulls),
            )
            hits[side].append(bool(event(rec)))
            if side == 0:
                pulls0 += res.pulls
    pulls0 /= trials
    p0, p1 = float(np.mean(hits[0])), float(np.mean(hits[1]))
    se0 = math.sqrt(p0 * (1 - p0) / trials)
    se1 = math.sqrt(p1 * (1 - p1) / trials)
    gaps = [float(a) - float(b) for a, b in zip(rows[0], rows[1])]
    kl = divergence_budget(pulls0, gaps, sigma)
    pin, hb = pinsker_bound(kl), huber_bretagnolle_bound(kl)
    slack = 3 * (se0 + se1)
    return PinskerReport(
        p0=p0, p1=p1, se0=se0, se1=se1, kl=kl, mean_pulls0=pulls0.tolist(),
        pinsker=pin, huber_bretagnolle=hb,
        pinsker_slack=pin + slack - abs(p0 - p1),
        hb_slack=p0 + (1 - p1) + slack - hb,
    )


# -- desk-scale experiments ----------------------------------------------------

def info_lock_eps(d: int) -> tuple[Fraction, Fraction]:
    """``eps1 = sqrt(log(4/3) / (2d))`` (as the exact double) and ``eps2 = 4 eps1^2``."""
    if d < 1:
        raise DomainError("d must be >= 1")
    eps1 = Fraction(math.sqrt(math.log(4 / 3) / (2 * d)))
    return eps1, 4 * eps1**2


def sandwich_bounds(K: int, eps1: float) -> tuple[float, float]:
    """Lower and upper query bounds for identifying an info-lock member at sigma 1."""
    lo = math.log(4 / 3) / (2 * eps1**2)
    hi = 16 * math.log(K) * math.log(4 * math.log(K)) / eps1**2
    return lo, hi


@dataclass
class SeparationReport:
    d: int
    horizon: int
    id_worst_mean_regret: float
    id_worst_se: float
    id_queries: int
    ucb_mean_regret: float
    ucb_se: float
    lower_target: float
    upper_target: float

    @property
    def passed(self) -> bool:
        return (
            self.id_worst_mean_regret >= self.lower_target - 3 * self.id_worst_se
            and self.ucb_mean_regret <= self.upper_target + 3 * self.ucb_se
        )


def separation_experiment(
    d: int = 64,
    horizon: int = 10_000,
    trials: int = 500,
    seed: int = 0,
    sigma: float = 1.0,
    threads: int = 1,
) -> SeparationReport:
    """Identification vs regret on the two-arm information-lock class.

    The identification learner's figure is its largest per-function mean
    regret, the quantity the lower bound speaks about.

    The identification learner reads the code action and commits; UCB is
    restricted to the arm actions. Both are judged at the same horizon.
    """
    eps1, eps2 = info_lock_eps(d)
    K = 2
    m = math.ceil(math.log2(K))
    class_spec = {"kind": "info_lock", "K": K, "eps1": format_exact(eps1), "eps2": format_exact(eps2)}
    base = dict(class_spec=class_spec, sigma=sigma, trials=trials, seed=seed, horizon=horizon)
    id_cfg = ExperimentConfig(
        learner_spec={"kind": "info_lock_decode", "K": K, "eps1": format_exact(eps1)}, **base
    )
    ucb_cfg = ExperimentConfig(
        learner_spec={"kind": "ucb", "horizon": horizon, "arms": list(range(m, m + K))},
        **{**base, "seed": seed + 1},
    )
    id_recs, _ = run_trials(id_cfg, threads)
    ucb_recs, _ = run_trials(ucb_cfg, threads)
    worst = None
    for f in range(K):
        mu, se = mean_and_se([r.regret for r in id_recs if r.function_index == f])
        if worst is None or mu > worst[0]:
            worst = (mu, se)
    ucb_mu, ucb_se = mean_and_se([r.regret for r in ucb_recs])
    return SeparationReport(
        d=d,
        horizon=horizon,
        id_worst_mean_regret=worst[0],
        id_worst_se=worst[1],
        id_queries=max(r.queries for r in id_recs if r.output_action is not None),
        ucb_mean_regret=ucb_mu,
        ucb_se=ucb_se,
        lower_target=d / 128,
        upper_target=8 * math.sqrt(2 * horizon * math.log(horizon)),
    )


def chain_diagnostic(n: int, sigma: float = 1.0, trials: int = 200, seed: int = 0) -> dict[str, Any]:
    """Noise-robust replay of the optimal noise-free policy on a truncated chain.

    Runs the denoised solver policy on ``informative_chain(16 n)`` with a
    budget of ``n`` queries and reports the worst-function success rate. This
    only probes implemented learners; it proves nothing about all learners.
    """
    N = 16 * n
    cfg = ExperimentConfig(
        class_spec={"kind": "informative_chain", "N": N},
        learner_spec={"kind": "denoise", "inner": {"kind": "vs_greedy", "cap": N}},
        sigma=sigma, trials=trials, seed=seed, budget=n,
    )
    _, summary = run_trials(cfg)
    return {
        "N": N,
        "budget": n,
        "sigma": sigma,
        "worst_success": summary.worst_function["success_rate"],
        "below_three_quarters": summary.worst_function["success_rate"] < 0.75,
        "probative": False,
    }
