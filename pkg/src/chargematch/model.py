"""Buyer/seller profiles, their encrypted forms and the scenario file format.

All plaintext quantities are integers: coordinates in whole meters, prices in
minor currency units, preference weights in fixed point with scale 1000.
"""

from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from chargematch.counters import RoleCounts
from chargematch.paillier import (
    Ciphertext,
    KeyMismatchError,
    PaillierPublicKey,
    encode_signed,
    encrypt_standard,
    he_add,
    he_sub,
)

WEIGHT_SCALE = 1000
DEFAULT_AREA = 3000


class Role(enum.Enum):
    BUYER = "buyer"
    SELLER = "seller"


def _require_int(name: str, value: Any) -> None:
    if isinstance(value, bool) or not isinstance(value, int):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")


def _check_demands(demands: Sequence[int], prices: Sequence[int]) -> None:
    if len(demands) != len(prices):
        raise ValueError("demands and demand_prices must have the same length")
    for bit, price in zip(demands, prices):
        _require_int("demand bit", bit)
        _require_int("demand price", price)
        if bit not in (0, 1):
            raise ValueError(f"demand bits must be 0 or 1, got {bit}")
        if price < 0:
            raise ValueError("demand prices must be non-negative")
        if bit == 0 and price != 0:
            raise ValueError("demand price must be 0 where the demand bit is 0")


@dataclass(frozen=True)
class PreferenceWeights:
    w_d: int
    w_r: int
    w_alpha: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "w_alpha", tuple(self.w_alpha))
        for w in self.as_vector():
            _require_int("weight", w)
            if w < 0:
                raise ValueError("weights must be non-negative")
        if not any(self.as_vector()):
            raise ValueError("at least one weight must be positive")

    def as_vector(self) -> tuple[int, ...]:
        return (self.w_d, self.w_r, *self.w_alpha)

    @classmethod
    def from_vector(cls, values: Sequence[int]) -> PreferenceWeights:
        return cls(values[0], values[1], tuple(values[2:]))

    def scaled(self, factor: int) -> PreferenceWeights:
        return PreferenceWeights.from_vector([w * factor for w in self.as_vector()])


@dataclass(frozen=True)
class BuyerRequest:
    id: int
    x: int
    y: int
    price: int
    d_max: int
    demands: tuple[int, ...]
    demand_prices: tuple[int, ...]
    weights: PreferenceWeights

    def __post_init__(self) -> None:
        object.__setattr__(self, "demands", tuple(self.demands))
        object.__setattr__(self, "demand_prices", tuple(self.demand_prices))
        for name in ("id", "x", "y", "price", "d_max"):
            _require_int(name, getattr(self, name))
        if self.x < 0 or self.y < 0:
            raise ValueError("coordinates must be non-negative")
        if self.price < 0:
            raise ValueError("price must be non-negative")
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")
        _check_demands(self.demands, self.demand_prices)
        if len(self.weights.w_alpha) != len(self.demands):
            raise ValueError("need one demand weight per demand")

    @property
    def k(self) -> int:
        return len(self.demands)


@dataclass(frozen=True)
class SellerOffer:
    id: int
    x: int
    y: int
    price: int
    demands: tuple[int, ...]
    demand_prices: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "demands", tuple(self.demands))
        object.__setattr__(self, "demand_prices", tuple(self.demand_prices))
        for name in ("id", "x", "y", "price"):
            _require_int(name, getattr(self, name))
        if self.x < 0 or self.y < 0:
            raise ValueError("coordinates must be non-negative")
        if self.price < 0:
            raise ValueError("price must be non-negative")
        _check_demands(self.demands, self.demand_prices)

    @property
    def k(self) -> int:
        return len(self.demands)


@dataclass(frozen=True)
class EncryptedProfile:
    id: int
    role: Role
    ct_x: Ciphertext
    ct_y: Ciphertext
    ct_price: Ciphertext
    ct_demands: tuple[Ciphertext, ...]
    ct_demand_prices: tuple[Ciphertext, ...]
    ct_dmax: Ciphertext | None = None
    ct_weights: tuple[Ciphertext, ...] = ()

    @property
    def k(self) -> int:
        return len(self.ct_demands)

    def ciphertexts(self) -> list[Ciphertext]:
        cts = [self.ct_x, self.ct_y, self.ct_price, *self.ct_demands, *self.ct_demand_prices]
        if self.ct_dmax is not None:
            cts.append(self.ct_dmax)
        return cts + list(self.ct_weights)

    @property
    def key_id(self) -> str:
        return self.ct_x.key_id


@dataclass(frozen=True)
class PairRecord:
    buyer_id: int
    seller_id: int
    ct_dx: Ciphertext
    ct_dy: Ciphertext
    ct_dr: Ciphertext
    ct_alpha_sum: tuple[Ciphertext, ...]
    ct_dr_alpha: tuple[Ciphertext, ...]


@dataclass(frozen=True)
class DecryptedPair:
    buyer_id: int
    seller_id: int
    dx: int
    dy: int
    dr: int
    alpha_sum: tuple[int, ...]
    dr_alpha: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha_sum", tuple(self.alpha_sum))
        object.__setattr__(self, "dr_alpha", tuple(self.dr_alpha))
        if any(a not in (0, 1, 2) for a in self.alpha_sum):
            raise ValueError(f"alpha_sum entries must be in {{0, 1, 2}}, got {self.alpha_sum}")
        if len(self.alpha_sum) != len(self.dr_alpha):
            raise ValueError("alpha_sum and dr_alpha must have the same length")


def _enc(pk: PaillierPublicKey, v: int, rng: random.Random, counts: RoleCounts | None) -> Ciphertext:
    ct = encrypt_standard(pk, encode_signed(v, pk.n), rng=rng)
    if counts is not None:
        counts.encryptions += 1
    return ct


def encrypt_buyer(
    pk: PaillierPublicKey, req: BuyerRequest, rng: random.Random, counts: RoleCounts | None = None
) -> EncryptedProfile:
    enc = lambda v: _enc(pk, v, rng, counts)  # noqa: E731
    return EncryptedProfile(
        id=req.id,
        role=Role.BUYER,
        ct_x=enc(req.x),
        ct_y=enc(req.y),
        ct_price=enc(req.price),
        ct_demands=tuple(enc(a) for a in req.demands),
        ct_demand_prices=tuple(enc(r) for r in req.demand_prices),
        ct_dmax=enc(req.d_max),
        ct_weights=tuple(enc(w) for w in req.weights.as_vector()),
    )


def encrypt_seller(
    pk: PaillierPublicKey, offer: SellerOffer, rng: random.Random, counts: RoleCounts | None = None
) -> EncryptedProfile:
    enc = lambda v: _enc(pk, v, rng, counts)  # noqa: E731
    return EncryptedProfile(
        id=offer.id,
        role=Role.SELLER,
        ct_x=enc(offer.x),
        ct_y=enc(offer.y),
        ct_price=enc(offer.price),
        ct_demands=tuple(enc(a) for a in offer.demands),
        ct_demand_prices=tuple(enc(r) for r in offer.demand_prices),
    )


def pair_process(
    pk: PaillierPublicKey,
    buyer: EncryptedProfile,
    seller: EncryptedProfile,
    counts: RoleCounts | None = None,
) -> PairRecord:
    """Combine one buyer and one seller profile without decrypting anything.

    Differences are buyer minus seller; demand bits are summed.
    """
    if buyer.role is not Role.BUYER or seller.role is not Role.SELLER:
        raise ValueError("pair_process expects (buyer, seller) profiles")
    if buyer.k != seller.k:
        raise ValueError(f"demand dimension mismatch: {buyer.k} vs {seller.k}")
    for ct in (*buyer.ciphertexts(), *seller.ciphertexts()):
        if ct.key_id != pk.key_id:
            raise KeyMismatchError(f"profile ciphertext is not under round key {pk.key_id[:8]}")

    def sub(a: Ciphertext, b: Ciphertext) -> Ciphertext:
        if counts is not None:
            counts.he_subs += 1
        return he_sub(pk, a, b)

    def add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
        if counts is not None:
            counts.he_adds += 1
        return he_add(pk, a, b)

    return PairRecord(
        buyer_id=buyer.id,
        seller_id=seller.id,
        ct_dx=sub(buyer.ct_x, seller.ct_x),
        ct_dy=sub(buyer.ct_y, seller.ct_y),
        ct_dr=sub(buyer.ct_price, seller.ct_price),
        ct_alpha_sum=tuple(add(a, b) for a, b in zip(buyer.ct_demands, seller.ct_demands)),
        ct_dr_alpha=tuple(sub(a, b) for a, b in zip(buyer.ct_demand_prices, seller.ct_demand_prices)),
    )


# ---------------------------------------------------------------------------
# Scenario files


@dataclass(frozen=True)
class Scenario:
    k: int
    buyers: tuple[BuyerRequest, ...]
    sellers: tuple[SellerOffer, ...]
    area: int = DEFAULT_AREA
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "buyers", tuple(self.buyers))
        object.__setattr__(self, "sellers", tuple(self.sellers))
        _require_int("k", self.k)
        _require_int("area", self.area)
        if self.k < 0 or self.area <= 0:
            raise ValueError("k must be >= 0 and area > 0")
        for role, group in (("buyer", self.buyers), ("seller", self.sellers)):
            ids = [p.id for p in group]
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate {role} id")
            for p in group:
                if p.k != self.k:
                    raise ValueError(f"{role} {p.id} has {p.k} demands, scenario k={self.k}")
                if p.x > self.area or p.y > self.area:
                    raise ValueError(f"{role} {p.id} lies outside the {self.area} m area")

    @property
    def I(self) -> int:  # noqa: E743
        return len(self.buyers)

    @property
    def J(self) -> int:
        return len(self.sellers)

    def buyer(self, bid: int) -> BuyerRequest:
        return next(b for b in self.buyers if b.id == bid)

    def seller(self, sid: int) -> SellerOffer:
        return next(s for s in self.sellers if s.id == sid)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"k": self.k, "area": self.area}
        if self.meta:
            out["meta"] = self.meta
        out["buyers"] = [
            {
                "id": b.id,
                "x": b.x,
                "y": b.y,
                "price": b.price,
                "d_max": b.d_max,
                "demands": list(b.demands),
                "demand_prices": list(b.demand_prices),
                "weights": {"w_d": b.weights.w_d, "w_r": b.weights.w_r, "w_alpha": list(b.weights.w_alpha)},
            }
            for b in self.buyers
        ]
        out["sellers"] = [
            {
                "id": s.id,
                "x": s.x,
                "y": s.y,
                "price": s.price,
                "demands": list(s.demands),
                "demand_prices": list(s.demand_prices),
            }
            for s in self.sellers
        ]
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Scenario:
        try:
            buyers = [
                BuyerRequest(
                    id=b["id"],
                    x=b["x"],
                    y=b["y"],
                    price=b["price"],
                    d_max=b["d_max"],
                    demands=b["demands"],
                    demand_prices=b["demand_prices"],
                    weights=PreferenceWeights(b["weights"]["w_d"], b["weights"]["w_r"], b["weights"]["w_alpha"]),
                )
                for b in data["buyers"]
            ]
            sellers = [
                SellerOffer(
                    id=s["id"],
                    x=s["x"],
                    y=s["y"],
                    price=s["price"],
                    demands=s["demands"],
                    demand_prices=s["demand_prices"],
                )
                for s in data["sellers"]
            ]
            return cls(
                k=data["k"], buyers=buyers, sellers=sellers, area=data.get("area", DEFAULT_AREA), meta=data.get("meta", {})
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"invalid scenario: {exc!r}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def loads(cls, text: str) -> Scenario:
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> Scenario:
        return cls.loads(Path(path).read_text())
