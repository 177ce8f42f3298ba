"""Command-line front end: ``gen``, ``simulate``, ``verify``, ``bench``, ``counters``.

Exit codes: 0 success, 1 invariant or verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import logging
import random
import sys
from typing import Iterator, TextIO

from chargematch.bench import CSV_COLUMNS, BenchConfig, bench_crypto, ratio
from chargematch.harness import (
    ScenarioConfig,
    diff_histories,
    generate_scenario,
    simulate,
    verify,
)
from chargematch.matching import DemandPolicy, oracle_simulate
from chargematch.model import Scenario

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
MATCH_COLUMNS = ("buyer_id", "seller_id", "W", "round")
COUNTER_COLUMNS = ("round", "quantity", "expected", "observed", "ok")

POLICIES = {"strict": DemandPolicy.STRICT_PAPER, "relaxed": DemandPolicy.RELAXED}


@contextlib.contextmanager
def _output(path: str | None) -> Iterator[TextIO]:
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _load(path: str) -> Scenario:
    try:
        return Scenario.load(path)
    except (OSError, ValueError) as exc:
        print(f"error: cannot load scenario {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE) from exc


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = ScenarioConfig(
        I=args.buyers,
        J=args.sellers,
        k=args.k,
        area=args.area,
        demand_density=args.density,
        seed=args.seed,
    )
    text = generate_scenario(cfg).dumps()
    with _output(args.out) as fh:
        fh.write(text)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario)
    report = simulate(
        scenario,
        POLICIES[args.policy],
        bits=args.bits,
        seed=args.seed,
        proxies=args.proxies,
        return_results=not args.no_return,
    )
    matches = report.result.all_matches()
    with _output(args.out) as fh:
        if args.format == "csv":
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(MATCH_COLUMNS)
            w.writerows((m.buyer_id, m.seller_id, m.w_index, m.round) for m in matches)
        else:
            fh.write(f"scenario: I={scenario.I} J={scenario.J} k={scenario.k} policy={args.policy} bits={args.bits}\n")
            fh.write(f"rounds: {len(report.result.rounds)}  matches: {len(matches)}\n")
            for m in matches:
                fh.write(f"  round {m.round}: buyer {m.buyer_id} -> seller {m.seller_id}  W={m.w_index}\n")
            fh.write("operation counts (expected / observed):\n")
            for row in report.counters:
                mark = "ok" if row.ok else "MISMATCH"
                fh.write(f"  r{row.round} {row.quantity:20s} {row.expected:8d} {row.observed:8d}  {mark}\n")
            fh.write("checks:\n")
            for c in report.checks:
                fh.write(f"  {'PASS' if c.ok else 'FAIL'} {c.name}{': ' + c.detail if c.detail else ''}\n")
    if args.counters:
        _write_counters(args.counters, report.counters)
    if args.log:
        report.result.network.export(args.log)
    for c in report.checks:
        if not c.ok:
            print(f"invariant failed: {c.name}: {c.detail}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_FAIL


def _write_counters(path: str, rows) -> None:
    with _output(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COUNTER_COLUMNS)
        w.writerows((r.round, r.quantity, r.expected, r.observed, int(r.ok)) for r in rows)


def cmd_verify(args: argparse.Namespace) -> int:
    if args.scenario is None and args.random is None:
        print("error: give a scenario file or --random N", file=sys.stderr)
        return EXIT_USAGE
    if args.scenario is not None:
        scenarios = [(args.scenario, _load(args.scenario))]
    else:
        scenarios = []
        for seed in range(1, args.random + 1):
            rng = random.Random(seed)
            cfg = ScenarioConfig(rng.randint(0, args.max_buyers), rng.randint(0, args.max_sellers), rng.randint(0, args.max_k), seed=seed)
            scenarios.append((f"random seed={seed}", generate_scenario(cfg)))

    policies = list(POLICIES) if args.policy == "both" else [args.policy]
    failures = 0
    out = io.StringIO()
    for label, scenario in scenarios:
        for name in policies:
            diffs = verify(scenario, POLICIES[name], bits=args.bits, seed=args.seed)
            failures += bool(diffs)
            status = "ok" if not diffs else "DIFF"
            out.write(f"{label} [{name}]: {status}\n")
            for d in diffs:
                out.write(f"    {d}\n")
        if len(policies) == 2:
            strict = oracle_simulate(scenario, DemandPolicy.STRICT_PAPER)
            relaxed = oracle_simulate(scenario, DemandPolicy.RELAXED)
            between = diff_histories(strict, relaxed, ("strict", "relaxed"))
            if between:
                out.write(f"{label}: strict and relaxed policies differ (expected when a demand is absent on both sides)\n")
                for d in between:
                    out.write(f"    {d}\n")
    out.write(f"{len(scenarios)} scenario(s), {failures} with pipeline/oracle differences\n")
    with _output(args.out) as fh:
        fh.write(out.getvalue())
    return EXIT_FAIL if failures else EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    try:
        cfg = BenchConfig(bits=args.bits, trials=args.trials, warmup=args.warmup, repeats=args.repeats, seed=args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    rows = bench_crypto(cfg, progress=lambda msg: logging.getLogger("chargematch.bench").info(msg))
    with _output(args.out) as fh:
        if args.format == "csv":
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            w.writerows(r.as_tuple() for r in rows)
        else:
            for r in rows:
                fh.write(f"{r.variant:10s} {r.op:8s} {r.bits:5d} bits  median {r.median_ns / 1e6:9.3f} ms  mean {r.mean_ns / 1e6:9.3f} ms  sd {r.stddev_ns / 1e6:7.3f} ms  n={r.trials}\n")
            fh.write(f"crt/standard decrypt median ratio: {ratio(rows, ('crt', 'decrypt'), ('standard', 'decrypt')):.3f}\n")
            fh.write(f"optimized/standard encrypt median ratio: {ratio(rows, ('optimized', 'encrypt'), ('standard', 'encrypt')):.3f}\n")
    return EXIT_OK


def cmd_counters(args: argparse.Namespace) -> int:
    if args.scenario is not None:
        scenario = _load(args.scenario)
    elif None not in (args.buyers, args.sellers, args.k):
        scenario = generate_scenario(ScenarioConfig(args.buyers, args.sellers, args.k, seed=args.seed))
    else:
        print("error: give a scenario file or all of -I, -J, --k", file=sys.stderr)
        return EXIT_USAGE
    report = simulate(scenario, POLICIES[args.policy], bits=args.bits, seed=args.seed, return_results=False)
    rows = [r for r in report.counters if r.round == 1] if not args.all_rounds else report.counters
    if args.format == "csv":
        _write_counters(args.out or "-", rows)
    else:
        with _output(args.out) as fh:
            fh.write(f"cost model, I={scenario.I} J={scenario.J} k={scenario.k}\n")
            for r in rows:
                fh.write(f"  r{r.round} {r.quantity:20s} expected {r.expected:8d}  observed {r.observed:8d}  {'ok' if r.ok else 'MISMATCH'}\n")
    return EXIT_OK if all(r.ok for r in rows) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chargematch", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, bits: int = 512) -> None:
        p.add_argument("--bits", type=int, default=bits, help="Paillier modulus size")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "text"), default="csv")

    p = sub.add_parser("gen", help="write a random scenario JSON file")
    p.add_argument("-I", "--buyers", type=int, required=True)
    p.add_argument("-J", "--sellers", type=int, required=True)
    p.add_argument("--k", type=int, default=2, help="number of optional demands")
    p.add_argument("--area", type=int, default=3000, help="side of the square area in meters")
    p.add_argument("--density", type=float, default=0.5, help="probability a demand bit is 1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("simulate", help="run the encrypted protocol on a scenario")
    p.add_argument("scenario")
    common(p)
    p.add_argument("--policy", choices=sorted(POLICIES), default="relaxed")
    p.add_argument("--proxies", type=int, default=1)
    p.add_argument("--counters", help="write the per-round cost-model table (CSV) here")
    p.add_argument("--log", help="write the message log (JSON lines) here")
    p.add_argument("--no-return", action="store_true", help="skip the result-return step")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="diff the encrypted pipeline against the plaintext oracle")
    p.add_argument("scenario", nargs="?")
    common(p)
    p.add_argument("--policy", choices=[*sorted(POLICIES), "both"], default="relaxed")
    p.add_argument("--random", type=int, metavar="N", help="verify N generated scenarios (seeds 1..N)")
    p.add_argument("--max-buyers", type=int, default=10)
    p.add_argument("--max-sellers", type=int, default=10)
    p.add_argument("--max-k", type=int, default=4)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="time encryption/decryption variants")
    common(p, bits=2048)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--warmup", type=int, default=20)
    p.add_argument("--repeats", type=int, default=50)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("counters", help="check operation counts against the cost model")
    p.add_argument("scenario", nargs="?")
    common(p)
    p.add_argument("-I", "--buyers", type=int)
    p.add_argument("-J", "--sellers", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--policy", choices=sorted(POLICIES), default="relaxed")
    p.add_argument("--all-rounds", action="store_true")
    p.set_defaults(func=cmd_counters)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
