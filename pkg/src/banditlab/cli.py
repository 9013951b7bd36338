"""Command-line front end: ``banditlab {qc,gamma,gap,simulate,regret,sat}``.

Exit codes: 0 on success, 2 on usage errors (including an unreadable config
path), 1 on domain or parse errors in otherwise well-formed invocations.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .classes import class_from_spec
from .core import DomainError, format_exact, to_exact
from .harness import ExperimentConfig, dumps_json, records_to_csv, records_to_json, run_trials
from .metrics import gamma
from .satbandit import (
    DecodeError,
    Index,
    SatFunction,
    Star,
    TwoQueryLearner,
    encode_formula,
    erm_consistent,
    estimation_error,
    eval_sat_function,
    maximize_sat,
    min_sat_assignment,
    parse_dimacs,
    random_trace,
    sat_reduction,
    two_query_identify,
)
from .solver import exact_qc, gap_of_class, gap_of_policy, tree_from_json, tree_to_json


class UsageError(Exception):
    pass


def _default_seed() -> int:
    env = os.environ.get("BANDITLAB_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"BANDITLAB_SEED must be an integer, got {env!r}")


def _read_json(path: str, what: str) -> Any:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise DomainError(f"{what} file {path} is not valid JSON: {exc}") from exc


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _fmt_value(v: Any) -> str:
    if isinstance(v, Fraction):
        return format_exact(v)
    if isinstance(v, float):
        return "inf" if v == float("inf") else format(v, ".17g")
    return str(v)


def cmd_qc(args: argparse.Namespace) -> None:
    cls = class_from_spec(_read_json(args.klass, "class"))
    res = exact_qc(cls, to_exact(args.epsilon))
    if args.policy_out:
        Path(args.policy_out).write_text(dumps_json(tree_to_json(res.tree)) + "\n")
    _emit(f"{res.qc}\n", args.out)


def cmd_gamma(args: argparse.Namespace) -> None:
    cls = class_from_spec(_read_json(args.klass, "class"))
    res = gamma(cls, to_exact(args.epsilon))
    # LP output carries solver round-off; report the nearest short rational when within 1e-9
    snapped = Fraction(res.value).limit_denominator(10**6)
    value = float(snapped) if abs(float(snapped) - res.value) <= 1e-9 else res.value
    payload = dumps_json({"value": value, "witness": res.witness.tolist()}) + "\n"
    if args.witness_out:
        Path(args.witness_out).write_text(payload)
    _emit(payload if args.json else f"{_fmt_value(value)}\n", args.out)


def cmd_gap(args: argparse.Namespace) -> None:
    cls = class_from_spec(_read_json(args.klass, "class"))
    if args.policy:
        g = gap_of_policy(tree_from_json(_read_json(args.policy, "policy")), cls)
        _emit(f"{_fmt_value(g)}\n", args.out)
        return
    res = gap_of_class(cls, to_exact(args.epsilon))
    if args.policy_out and res.tree is not None:
        Path(args.policy_out).write_text(dumps_json(tree_to_json(res.tree)) + "\n")
    suffix = " (partial: node budget exhausted)" if res.partial else ""
    _emit(f"{_fmt_value(res.gap)}{suffix}\n", args.out)


def _load_config(args: argparse.Namespace, regret: bool) -> ExperimentConfig:
    raw = _read_json(args.config, "config")
    if not isinstance(raw, dict):
        raise DomainError("config must be a JSON object")
    raw = dict(raw)
    if args.seed is not None:
        raw["seed"] = args.seed
    elif "BANDITLAB_SEED" in os.environ or "seed" not in raw:
        raw["seed"] = _default_seed()
    if args.trials is not None:
        raw["trials"] = args.trials
    if regret:
        if args.horizon is not None:
            raw["horizon"] = args.horizon
        if raw.get("horizon") is None:
            raise DomainError("regret needs a horizon (config field 'horizon' or --horizon)")
    elif raw.get("horizon") is not None:
        raise DomainError("simulate runs identification; drop 'horizon' or use the regret command")
    cfg = ExperimentConfig.from_dict(raw)
    cfg.timing = args.timing
    return cfg


def cmd_run(args: argparse.Namespace, regret: bool) -> None:
    cfg = _load_config(args, regret)
    threads = args.threads or os.cpu_count() or 1
    records, summary = run_trials(cfg, threads=threads)
    body = records_to_csv(records) if args.format == "csv" else records_to_json(records)
    summary_text = dumps_json(summary.as_dict()) + "\n"
    if args.out is None:
        sys.stdout.write(summary_text)
        return
    Path(args.out).write_text(body)
    summary_path = args.summary_out or str(args.out) + ".summary.json"
    Path(summary_path).write_text(summary_text)
    sys.stdout.write(summary_text)


def cmd_sat(args: argparse.Namespace) -> None:
    text = sys.stdin.read() if args.formula == "-" else Path(args.formula).read_text()
    phi = parse_dimacs(text, args.n)
    n = phi.n
    if args.mode == "encode":
        _emit(format_exact(encode_formula(phi)) + "\n", args.out)
    elif args.mode == "solve":
        a = min_sat_assignment(phi)
        _emit("UNSAT\n" if a is None else f"SAT {a:0{n}b}\n", args.out)
    elif args.mode == "reduce":
        ok = sat_reduction(phi, TwoQueryLearner(n), budget=args.budget)
        _emit(("accept" if ok else "reject") + "\n", args.out)
    elif args.mode == "two-query":
        if args.c is not None and not 1 <= args.c <= 2**n:
            raise DomainError(f"--c must lie in 1..2^n = 1..{2 ** n}")
        f = SatFunction(phi, args.c)
        if args.c is not None and f.minimal_assignment() is None:
            raise DomainError("--c needs a satisfiable formula")
        out, q = two_query_identify(n, f)
        optimal = out == maximize_sat(f)
        _emit(dumps_json({"output": _sat_action_text(out), "queries": q, "optimal": optimal}) + "\n",
              args.out)
    else:  # oracle-test
        rng = random.Random(args.seed if args.seed is not None else _default_seed())
        sat = min_sat_assignment(phi) is not None
        worst = Fraction(0)
        for _ in range(args.traces):
            c = rng.randint(1, 2**n) if sat else None
            f = SatFunction(phi, c)
            trace = random_trace(n, f, args.length, rng)
            worst = max(worst, estimation_error(n, f, trace))
            pairs = [(a, eval_sat_function(f, a)) for a in trace]
            erm_consistent(n, pairs, verify=True)
        _emit(dumps_json({"traces": args.traces, "max_estimation_error": worst,
                          "erm_consistent": True}) + "\n", args.out)


def _sat_action_text(a: Any) -> str:
    if isinstance(a, Star):
        return "star"
    if isinstance(a, Index):
        return f"index:{a.c}"
    return f"assignment:{a.bits}"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="banditlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"banditlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def with_class(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--class", dest="klass", required=True, help="class spec JSON file")
        sp.add_argument("--epsilon", default="0", help="exact rational, e.g. 0.1 or 1/8")
        sp.add_argument("--out", help="write the result here instead of stdout")

    sp = sub.add_parser("qc", help="exact noise-free query complexity")
    with_class(sp)
    sp.add_argument("--policy-out", help="write an optimal policy tree as JSON")
    sp.set_defaults(func=cmd_qc)

    sp = sub.add_parser("gamma", help="generalized maximin volume")
    with_class(sp)
    sp.add_argument("--witness-out", help="write the optimal action distribution as JSON")
    sp.add_argument("--json", action="store_true", help="print value and witness as JSON")
    sp.set_defaults(func=cmd_gamma)

    sp = sub.add_parser("gap", help="gap of a class or of a given policy")
    with_class(sp)
    sp.add_argument("--policy", help="policy tree JSON; reports that policy's gap")
    sp.add_argument("--policy-out", help="write the gap-maximizing tree as JSON")
    sp.set_defaults(func=cmd_gap)

    for name, regret in (("simulate", False), ("regret", True)):
        sp = sub.add_parser(name, help=f"run seeded {'regret' if regret else 'identification'} trials")
        sp.add_argument("--config", required=True, help="experiment config JSON file")
        sp.add_argument("--out", help="records file (CSV or JSON per --format)")
        sp.add_argument("--summary-out", help="summary JSON path (default: <out>.summary.json)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--seed", type=int, help="master seed (default: $BANDITLAB_SEED, then config)")
        sp.add_argument("--trials", type=int)
        sp.add_argument("--threads", type=int, default=0, help="worker processes (default: all cores)")
        sp.add_argument("--timing", action="store_true", help="record wall-clock time per trial")
        if regret:
            sp.add_argument("--horizon", type=int)
        sp.set_defaults(func=lambda a, r=regret: cmd_run(a, r))

    sp = sub.add_parser("sat", help="SAT-embedded class utilities on a DIMACS 3-CNF")
    sp.add_argument("--formula", required=True, help="DIMACS 3-CNF file, or - for stdin")
    sp.add_argument(
        "--mode", choices=("reduce", "oracle-test", "two-query", "solve", "encode"), default="reduce"
    )
    sp.add_argument("--n", type=int, help="expected variable count (checked against the header)")
    sp.add_argument("--c", type=int, help="hidden index for two-query mode (omit for f_phi)")
    sp.add_argument("--budget", type=int, default=2, help="query budget for reduce mode")
    sp.add_argument("--seed", type=int, help="seed for oracle-test traces")
    sp.add_argument("--traces", type=int, default=50, help="oracle-test trace count")
    sp.add_argument("--length", type=int, default=100, help="oracle-test trace length")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sat)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"banditlab: error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, DecodeError, ValueError) as exc:
        print(f"banditlab: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"banditlab: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
