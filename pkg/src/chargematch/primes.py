"""Probabilistic prime generation for Paillier key material."""

from __future__ import annotations

import random

import gmpy2

# 64 Miller-Rabin rounds bound the false-positive rate by 4**-64 = 2**-128.
MR_ROUNDS = 64


def is_probable_prime(n: int, rounds: int = MR_ROUNDS) -> bool:
    """Trial division then ``rounds`` Miller-Rabin rounds (GMP)."""
    return n >= 2 and bool(gmpy2.is_prime(n, rounds))


def random_prime(bits: int, rng: random.Random, max_attempts: int = 100_000) -> int:
    """Draw a prime of exactly ``bits`` bits with the top two bits set.

    Setting both top bits makes the product of two such primes exactly
    ``2 * bits`` bits long.
    """
    if bits < 3:
        raise ValueError(f"prime size must be at least 3 bits, got {bits}")
    top = (1 << (bits - 1)) | (1 << (bits - 2))
    for _ in range(max_attempts):
        candidate = rng.getrandbits(bits) | top | 1
        if is_probable_prime(candidate):
            return candidate
    raise RuntimeError(f"no {bits}-bit prime found in {max_attempts} attempts")
