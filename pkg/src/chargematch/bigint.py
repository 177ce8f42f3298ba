"""Modular exponentiation backed by GMP; CPython's pow is several times slower at Paillier sizes."""

from __future__ import annotations

import gmpy2


def powmod(base: int, exp: int, mod: int) -> int:
    """``pow(base, exp, mod)`` for exp >= 0, returned as a plain int."""
    return int(gmpy2.powmod(base, exp, mod))
