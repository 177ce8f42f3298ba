"""Timing harness for the encryption and decryption variants.

Timed regions contain exactly one cryptographic call; inputs (plaintexts,
nonces, ciphertexts) are prepared beforehand and the CRT/standard decryption
agreement is checked after timing.
"""

from __future__ import annotations

import random
import statistics
import time
from dataclasses import dataclass
from typing import Callable, Sequence

from chargematch.paillier import (
    GMode,
    decrypt_crt,
    decrypt_standard,
    encrypt_optimized,
    encrypt_standard,
    keygen,
    random_unit,
)

CSV_COLUMNS = ("variant", "op", "bits", "trials", "mean_ns", "median_ns", "stddev_ns")


@dataclass(frozen=True)
class BenchConfig:
    """Per repeat and operation: ``warmup`` discarded calls, then ``trials`` timed calls."""

    bits: int = 2048
    trials: int = 200
    warmup: int = 20
    repeats: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if self.trials < 1 or self.warmup < 0:
            raise ValueError("need trials >= 1 and warmup >= 0")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


@dataclass(frozen=True)
class TimingRow:
    variant: str
    op: str
    bits: int
    trials: int
    mean_ns: float
    median_ns: float
    stddev_ns: float

    def as_tuple(self) -> tuple:
        return (self.variant, self.op, self.bits, self.trials, self.mean_ns, self.median_ns, self.stddev_ns)


def time_calls(fn: Callable, args: Sequence[tuple], warmup: int) -> tuple[list[int], list]:
    """Per-call wall time in ns and the call results; the first ``warmup`` timings are discarded."""
    samples, outputs = [], []
    clock = time.perf_counter_ns
    for i, a in enumerate(args):
        t0 = clock()
        out = fn(*a)
        t1 = clock()
        outputs.append(out)
        if i >= warmup:
            samples.append(t1 - t0)
    return samples, outputs


def summarize(variant: str, op: str, bits: int, runs: list[list[int]]) -> TimingRow:
    """Median of per-repeat medians; mean and stddev over all samples."""
    flat = [s for run in runs for s in run]
    return TimingRow(
        variant,
        op,
        bits,
        len(flat),
        statistics.fmean(flat),
        statistics.median(statistics.median(run) for run in runs),
        statistics.pstdev(flat),
    )


def bench_crypto(cfg: BenchConfig, progress: Callable[[str], None] | None = None) -> list[TimingRow]:
    rng = random.Random(cfg.seed)
    std_pk, std_sk = keygen(cfg.bits, GMode.RANDOM_G, rng)
    opt_pk, _ = keygen(cfg.bits, GMode.N_PLUS_ONE, rng)

    timings: dict[tuple[str, str], list[list[int]]] = {}
    for rep in range(cfg.repeats):
        if progress:
            progress(f"repeat {rep + 1}/{cfg.repeats}")
        # Full-range plaintexts so the random-g baseline pays a full g^m exponentiation.
        n_calls = cfg.warmup + cfg.trials
        enc_std_args = [(std_pk, rng.randrange(std_pk.n), random_unit(std_pk.n, rng)) for _ in range(n_calls)]
        enc_opt_args = [(opt_pk, rng.randrange(opt_pk.n), random_unit(opt_pk.n, rng)) for _ in range(n_calls)]

        samples, cts = time_calls(encrypt_standard, enc_std_args, cfg.warmup)
        timings.setdefault(("standard", "encrypt"), []).append(samples)
        samples, _ = time_calls(encrypt_optimized, enc_opt_args, cfg.warmup)
        timings.setdefault(("optimized", "encrypt"), []).append(samples)
        dec_args = [(std_sk, std_pk, ct) for ct in cts]
        samples, plain_std = time_calls(decrypt_standard, dec_args, cfg.warmup)
        timings.setdefault(("standard", "decrypt"), []).append(samples)
        samples, plain_crt = time_calls(decrypt_crt, dec_args, cfg.warmup)
        timings.setdefault(("crt", "decrypt"), []).append(samples)

        expected = [m for _, m, _ in enc_std_args]
        if not plain_crt == plain_std == expected:
            raise AssertionError("CRT and standard decryption disagree on benchmark input")

    return [summarize(variant, op, cfg.bits, runs) for (variant, op), runs in timings.items()]


def ratio(rows: Sequence[TimingRow], num: tuple[str, str], den: tuple[str, str]) -> float:
    by_key = {(r.variant, r.op): r for r in rows}
    return by_key[num].median_ns / by_key[den].median_ns
