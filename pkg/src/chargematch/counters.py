"""Per-role operation counters used to check the closed-form cost model."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

ROLES = ("ca", "buyer", "seller", "proxy", "cloud")


@dataclass
class RoleCounts:
    encryptions: int = 0
    he_adds: int = 0
    he_subs: int = 0
    decryptions: int = 0
    matchings: int = 0

    @property
    def he_ops(self) -> int:
        return self.he_adds + self.he_subs

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class OpCounters:
    roles: dict[str, RoleCounts] = field(default_factory=lambda: {r: RoleCounts() for r in ROLES})

    def __getitem__(self, role: str) -> RoleCounts:
        return self.roles[role]

    def total(self, attr: str) -> int:
        return sum(getattr(c, attr) for c in self.roles.values())

    def rows(self) -> list[dict[str, int | str]]:
        return [{"role": role, **counts.as_dict()} for role, counts in self.roles.items()]


def expected_counts(I: int, J: int, k: int) -> dict[str, int]:
    """Closed-form operation counts for one round with I buyers, J sellers, k demands.

    A buyer encrypts x, y, price, d_max, k demand bits, k demand prices and
    2 + k preference weights; a seller encrypts x, y, price and its 2k demand
    fields. The proxy does 3 subtractions plus k additions and k subtractions
    per pair, and the cloud decrypts every pair field plus each buyer's d_max
    and weights.
    """
    per_pair = 2 * k + 3
    return {
        "buyer_encryptions": I * (6 + 3 * k),
        "seller_encryptions": J * (3 + 2 * k),
        "proxy_he_ops": I * J * per_pair,
        "proxy_decryptions": 0,
        "cloud_decryptions": I * J * per_pair + I * (3 + k),
    }


def observed_counts(counters: OpCounters) -> dict[str, int]:
    return {
        "buyer_encryptions": counters["buyer"].encryptions,
        "seller_encryptions": counters["seller"].encryptions,
        "proxy_he_ops": counters["proxy"].he_ops,
        "proxy_decryptions": counters["proxy"].decryptions,
        "cloud_decryptions": counters["cloud"].decryptions,
    }
