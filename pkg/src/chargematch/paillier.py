"""Paillier cryptosystem with standard, g = n + 1 and CRT-accelerated paths.

Plaintexts live in ``Z_n`` and ciphertexts in ``Z_{n^2}``. Every ciphertext
carries the fingerprint of the public key it was produced under so that
material from a retired round key is rejected instead of silently decrypting
to garbage.
"""

from __future__ import annotations

import enum
import hashlib
import math
import random
import secrets
import struct
from dataclasses import dataclass, field

from chargematch.bigint import powmod
from chargematch.primes import is_probable_prime, random_prime

__all__ = [
    "GMode",
    "KeyMismatchError",
    "KeyGenerationError",
    "PaillierPublicKey",
    "PaillierPrivateKey",
    "CrtPrecomp",
    "Ciphertext",
    "keygen",
    "keypair_from_primes",
    "encrypt_standard",
    "encrypt_optimized",
    "decrypt_standard",
    "decrypt_optimized",
    "decrypt_crt",
    "he_add",
    "he_sub",
    "encode_signed",
    "decode_signed",
    "random_unit",
    "as_rng",
]

KEY_ID_BYTES = 16
_LEN = struct.Struct(">I")


class GMode(enum.Enum):
    RANDOM_G = "random_g"
    N_PLUS_ONE = "n_plus_one"


class KeyMismatchError(ValueError):
    """A ciphertext was used with a key other than the one that produced it."""


class KeyGenerationError(RuntimeError):
    pass


def as_rng(rng: random.Random | int | None) -> random.Random:
    """Normalise a seed / generator argument.

    ``None`` gives an OS-entropy generator, an int gives a seeded
    ``random.Random``.
    """
    if rng is None:
        return secrets.SystemRandom()
    if isinstance(rng, random.Random):
        return rng
    return random.Random(rng)


def _fingerprint(n: int) -> str:
    raw = n.to_bytes((n.bit_length() + 7) // 8, "big")
    return hashlib.sha256(b"paillier-n:" + raw).hexdigest()[: 2 * KEY_ID_BYTES]


@dataclass(frozen=True)
class PaillierPublicKey:
    n: int
    g: int
    g_mode: GMode
    n_sq: int = field(init=False, repr=False)
    key_id: str = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_sq", self.n * self.n)
        object.__setattr__(self, "key_id", _fingerprint(self.n))
        if (self.g_mode is GMode.N_PLUS_ONE) != (self.g == self.n + 1):
            raise ValueError("g_mode must be N_PLUS_ONE exactly when g == n + 1")

    @property
    def bits(self) -> int:
        return self.n.bit_length()

    @property
    def max_signed(self) -> int:
        """Largest magnitude accepted by :func:`encode_signed`."""
        return (self.n - 1) // 2


@dataclass(frozen=True)
class CrtPrecomp:
    p_sq: int
    q_sq: int
    h_p: int
    h_q: int
    p_inv_mod_q: int


@dataclass(frozen=True)
class PaillierPrivateKey:
    p: int
    q: int
    lam: int
    mu: int
    crt: CrtPrecomp = field(repr=False)
    key_id: str = field(repr=False)


@dataclass(frozen=True)
class Ciphertext:
    c: int
    key_id: str

    def to_bytes(self) -> bytes:
        """Length-prefixed big-endian ``c`` followed by the raw key fingerprint."""
        body = self.c.to_bytes(max(1, (self.c.bit_length() + 7) // 8), "big")
        return _LEN.pack(len(body)) + body + bytes.fromhex(self.key_id)

    @classmethod
    def from_bytes(cls, data: bytes) -> Ciphertext:
        if len(data) < _LEN.size:
            raise ValueError("truncated ciphertext header")
        (length,) = _LEN.unpack_from(data)
        end = _LEN.size + length
        if len(data) != end + KEY_ID_BYTES:
            raise ValueError(f"expected {end + KEY_ID_BYTES} bytes, got {len(data)}")
        c = int.from_bytes(data[_LEN.size : end], "big")
        return cls(c, data[end:].hex())


def _L(x: int, d: int) -> int:
    return (x - 1) // d


def _crt_precomp(p: int, q: int, g: int) -> CrtPrecomp:
    p_sq, q_sq = p * p, q * q
    h_p = pow(_L(powmod(g, p - 1, p_sq), p), -1, p)
    h_q = pow(_L(powmod(g, q - 1, q_sq), q), -1, q)
    return CrtPrecomp(p_sq, q_sq, h_p, h_q, pow(p, -1, q))


def _assemble(p: int, q: int, g: int, g_mode: GMode):
    n = p * q
    n_sq = n * n
    lam = math.lcm(p - 1, q - 1)
    if math.gcd(g, n) != 1:
        return None
    u = _L(powmod(g, lam, n_sq), n)
    if math.gcd(u, n) != 1:
        return None
    pk = PaillierPublicKey(n, g, g_mode)
    return pk, PaillierPrivateKey(p, q, lam, pow(u, -1, n), _crt_precomp(p, q, g), pk.key_id)


def _build(p: int, q: int, g: int | None, g_mode: GMode, rng: random.Random):
    n = p * q
    if g_mode is GMode.N_PLUS_ONE:
        g = n + 1
    if g is not None:
        keys = _assemble(p, q, g, g_mode)
        if keys is None:
            raise KeyGenerationError(f"g={g} is not a valid generator for n={n}")
        return keys
    for _ in range(1000):
        keys = _assemble(p, q, rng.randrange(1, n * n), g_mode)
        if keys is not None:
            return keys
    raise KeyGenerationError(f"no valid generator found for n={n}")


def keypair_from_primes(
    p: int,
    q: int,
    g_mode: GMode = GMode.N_PLUS_ONE,
    rng: random.Random | int | None = None,
    g: int | None = None,
) -> tuple[PaillierPublicKey, PaillierPrivateKey]:
    """Build a keypair from known primes.

    Used for fixed small test keys and for rebuilding a transported round key
    (pass the broadcast ``g`` so the rebuilt key matches the public one).
    """
    if p == q:
        raise ValueError("p and q must be distinct")
    for x in (p, q):
        if not is_probable_prime(x):
            raise ValueError(f"{x} is not prime")
    if math.gcd(p * q, (p - 1) * (q - 1)) != 1:
        raise ValueError("gcd(n, (p-1)(q-1)) != 1")
    if g is not None and g_mode is GMode.RANDOM_G and g == p * q + 1:
        raise ValueError("g == n + 1 requires g_mode N_PLUS_ONE")
    return _build(p, q, g, g_mode, as_rng(rng))


def keygen(
    bits: int,
    g_mode: GMode = GMode.N_PLUS_ONE,
    rng: random.Random | int | None = None,
    max_attempts: int = 100,
) -> tuple[PaillierPublicKey, PaillierPrivateKey]:
    """Generate a keypair whose modulus is exactly ``bits`` bits long."""
    if bits < 16 or bits % 2:
        raise ValueError(f"bits must be an even number >= 16, got {bits}")
    rng = as_rng(rng)
    half = bits // 2
    for _ in range(max_attempts):
        try:
            p = random_prime(half, rng)
            q = random_prime(half, rng)
        except RuntimeError as exc:
            raise KeyGenerationError(str(exc)) from exc
        if p == q or math.gcd(p * q, (p - 1) * (q - 1)) != 1:
            continue
        try:
            return _build(p, q, None, g_mode, rng)
        except KeyGenerationError:
            continue
    raise KeyGenerationError(f"gave up after {max_attempts} prime pairs at {bits} bits")


def random_unit(n: int, rng: random.Random) -> int:
    while True:
        r = rng.randrange(1, n)
        if math.gcd(r, n) == 1:
            return r


def _check_plaintext(pk: PaillierPublicKey, m: int) -> None:
    if not 0 <= m < pk.n:
        raise ValueError(f"plaintext must lie in [0, n), got {m}")


def _nonce(pk: PaillierPublicKey, r: int | None, rng) -> int:
    if r is None:
        return random_unit(pk.n, as_rng(rng))
    if not 0 < r < pk.n or math.gcd(r, pk.n) != 1:
        raise ValueError("r must be a unit of Z_n")
    return r


def encrypt_standard(pk: PaillierPublicKey, m: int, r: int | None = None, rng=None) -> Ciphertext:
    """``g^m * r^n mod n^2`` with a full exponentiation of ``g``."""
    _check_plaintext(pk, m)
    r = _nonce(pk, r, rng)
    c = powmod(pk.g, m, pk.n_sq) * powmod(r, pk.n, pk.n_sq) % pk.n_sq
    return Ciphertext(c, pk.key_id)


def encrypt_optimized(pk: PaillierPublicKey, m: int, r: int | None = None, rng=None) -> Ciphertext:
    """``(1 + m*n) * r^n mod n^2``; only valid for ``g = n + 1``."""
    if pk.g_mode is not GMode.N_PLUS_ONE:
        raise ValueError("encrypt_optimized requires a g = n + 1 key")
    _check_plaintext(pk, m)
    r = _nonce(pk, r, rng)
    c = (1 + m * pk.n) * powmod(r, pk.n, pk.n_sq) % pk.n_sq
    return Ciphertext(c, pk.key_id)


def _check_ct(pk: PaillierPublicKey, ct: Ciphertext) -> None:
    if ct.key_id != pk.key_id:
        raise KeyMismatchError(f"ciphertext key {ct.key_id[:8]} does not match key {pk.key_id[:8]}")
    if not 0 < ct.c < pk.n_sq or math.gcd(ct.c, pk.n) != 1:
        raise ValueError("ciphertext is not a unit of Z_{n^2}")


def _check_pair(pk: PaillierPublicKey, sk: PaillierPrivateKey) -> None:
    if sk.key_id != pk.key_id:
        raise KeyMismatchError("private key does not belong to this public key")


def decrypt_standard(sk: PaillierPrivateKey, pk: PaillierPublicKey, ct: Ciphertext) -> int:
    _check_pair(pk, sk)
    _check_ct(pk, ct)
    return _L(powmod(ct.c, sk.lam, pk.n_sq), pk.n) * sk.mu % pk.n


def decrypt_optimized(sk: PaillierPrivateKey, pk: PaillierPublicKey, ct: Ciphertext) -> int:
    # With g = n + 1, L(g^lam mod n^2) = lam, so mu is simply lam^-1 mod n.
    if pk.g_mode is not GMode.N_PLUS_ONE:
        raise ValueError("decrypt_optimized requires a g = n + 1 key")
    _check_pair(pk, sk)
    _check_ct(pk, ct)
    lam_inv = pow(sk.lam, -1, pk.n)
    return _L(powmod(ct.c, sk.lam, pk.n_sq), pk.n) * lam_inv % pk.n


def decrypt_crt(sk: PaillierPrivateKey, pk: PaillierPublicKey, ct: Ciphertext) -> int:
    """Decrypt modulo p^2 and q^2 separately and recombine."""
    _check_pair(pk, sk)
    _check_ct(pk, ct)
    p, q, pre = sk.p, sk.q, sk.crt
    m_p = _L(powmod(ct.c % pre.p_sq, p - 1, pre.p_sq), p) * pre.h_p % p
    m_q = _L(powmod(ct.c % pre.q_sq, q - 1, pre.q_sq), q) * pre.h_q % q
    return m_p + (m_q - m_p) * pre.p_inv_mod_q % q * p


def _check_operands(pk: PaillierPublicKey, a: Ciphertext, b: Ciphertext) -> None:
    if a.key_id != b.key_id:
        raise KeyMismatchError("operands were encrypted under different keys")
    if a.key_id != pk.key_id:
        raise KeyMismatchError("operands do not belong to this public key")


def he_add(pk: PaillierPublicKey, a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Ciphertext whose plaintext is ``(m_a + m_b) mod n``."""
    _check_operands(pk, a, b)
    return Ciphertext(a.c * b.c % pk.n_sq, pk.key_id)


def he_sub(pk: PaillierPublicKey, a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Ciphertext whose plaintext is ``(m_a - m_b) mod n``."""
    _check_operands(pk, a, b)
    try:
        inv = pow(b.c, -1, pk.n_sq)
    except ValueError:
        raise ValueError("subtrahend ciphertext is not invertible mod n^2") from None
    return Ciphertext(a.c * inv % pk.n_sq, pk.key_id)


def encode_signed(v: int, n: int) -> int:
    if 2 * abs(v) >= n:
        raise ValueError(f"|{v}| is outside the signed half-range of n={n}")
    return v % n


def decode_signed(m: int, n: int) -> int:
    if not 0 <= m < n:
        raise ValueError(f"residue {m} outside [0, {n})")
    return m if m <= n // 2 else m - n
