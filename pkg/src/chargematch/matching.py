"""Cloud-side matching on decrypted pair differences, plus a plaintext oracle.

The encrypted pipeline only ever hands this module :class:`DecryptedPair`
values. :func:`oracle_match` recomputes the same greedy assignment straight
from the plaintext scenario and shares no code with the pipeline path, so the
two can be compared for exact equality.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from chargematch.counters import RoleCounts
from chargematch.model import DecryptedPair, PreferenceWeights, Scenario


class DemandPolicy(enum.Enum):
    STRICT_PAPER = "strict"
    RELAXED = "relaxed"


@dataclass(frozen=True, order=True)
class MatchCandidate:
    w_index: int
    seller_id: int


@dataclass(frozen=True)
class MatchResult:
    buyer_id: int
    seller_id: int
    w_index: int
    round: int


def distance_ok(pair: DecryptedPair, d_max: int) -> bool:
    """Strict ``sqrt(dx^2 + dy^2) < d_max``, evaluated on squares."""
    return pair.dx * pair.dx + pair.dy * pair.dy < d_max * d_max


def demand_ok(alpha_sum: Sequence[int], dr_alpha: Sequence[int], policy: DemandPolicy = DemandPolicy.RELAXED) -> bool:
    """Every demand must be provided (sum 2) at a price the buyer covers.

    A sum of 1 means only one side has the demand and always rejects. A sum
    of 0 means neither side cares; it rejects only under ``STRICT_PAPER``.
    A demand-price difference of exactly 0 is accepted.
    """
    for a, d in zip(alpha_sum, dr_alpha, strict=True):
        if a == 2:
            if d < 0:
                return False
        elif a == 1:
            return False
        elif a == 0:
            if policy is DemandPolicy.STRICT_PAPER:
                return False
        else:
            raise ValueError(f"alpha_sum entry {a} not in {{0, 1, 2}}")
    return True


def matching_index(pair: DecryptedPair, weights: PreferenceWeights) -> int:
    """Weighted score of a pair; lower is a better match.

    Distance is the floor square root of the squared distance. Price terms use
    the magnitude of the difference so that the score is non-negative and
    grows with every difference.
    """
    dist = math.isqrt(pair.dx * pair.dx + pair.dy * pair.dy)
    w = dist * weights.w_d + abs(pair.dr) * weights.w_r
    for d, wa in zip(pair.dr_alpha, weights.w_alpha, strict=True):
        w += abs(d) * wa
    return w


def select_for_buyer(candidates: Iterable[MatchCandidate]) -> int | None:
    """Seller id with the lowest index, ties to the smaller id."""
    best = min(candidates, key=lambda c: (c.w_index, c.seller_id), default=None)
    return None if best is None else best.seller_id


def run_round_matching(
    buyers: Sequence[int],
    pairs: Mapping[tuple[int, int], DecryptedPair],
    d_max: Mapping[int, int],
    weights: Mapping[int, PreferenceWeights],
    policy: DemandPolicy = DemandPolicy.RELAXED,
    round: int = 1,
    counts: RoleCounts | None = None,
) -> list[MatchResult]:
    """Greedy assignment: buyers in ascending id order each take their best free seller."""
    available = sorted({sid for (_, sid) in pairs})
    results: list[MatchResult] = []
    for bid in sorted(buyers):
        if not available:
            break
        candidates = []
        for sid in available:
            pair = pairs[(bid, sid)]
            if not distance_ok(pair, d_max[bid]):
                continue
            if not demand_ok(pair.alpha_sum, pair.dr_alpha, policy):
                continue
            candidates.append(MatchCandidate(matching_index(pair, weights[bid]), sid))
            if counts is not None:
                counts.matchings += 1
        chosen = select_for_buyer(candidates)
        if chosen is None:
            continue
        w = next(c.w_index for c in candidates if c.seller_id == chosen)
        results.append(MatchResult(bid, chosen, w, round))
        available.remove(chosen)
    return results


# ---------------------------------------------------------------------------
# Plaintext oracle


def _oracle_round(buyers, sellers, policy: DemandPolicy, round_no: int) -> list[MatchResult]:
    free = {s.id: s for s in sellers}
    out = []
    for b in sorted(buyers, key=lambda b: b.id):
        scored = []
        for s in free.values():
            if math.sqrt((b.x - s.x) ** 2 + (b.y - s.y) ** 2) >= b.d_max:
                continue
            ok = True
            for t in range(len(b.demands)):
                total = b.demands[t] + s.demands[t]
                gap = b.demand_prices[t] - s.demand_prices[t]
                if total == 1 or (total == 2 and gap < 0) or (total == 0 and policy is DemandPolicy.STRICT_PAPER):
                    ok = False
                    break
            if not ok:
                continue
            score = int(math.sqrt((b.x - s.x) ** 2 + (b.y - s.y) ** 2)) * b.weights.w_d
            score += abs(b.price - s.price) * b.weights.w_r
            score += sum(
                abs(b.demand_prices[t] - s.demand_prices[t]) * b.weights.w_alpha[t] for t in range(len(b.demands))
            )
            scored.append((score, s.id))
        if scored:
            scored.sort()
            score, sid = scored[0]
            out.append(MatchResult(b.id, sid, score, round_no))
            del free[sid]
    return out


def oracle_match(scenario: Scenario, policy: DemandPolicy = DemandPolicy.RELAXED, round: int = 1) -> list[MatchResult]:
    """Single-round greedy matching computed directly on plaintext profiles."""
    return _oracle_round(scenario.buyers, scenario.sellers, policy, round)


def oracle_simulate(scenario: Scenario, policy: DemandPolicy = DemandPolicy.RELAXED) -> list[list[MatchResult]]:
    """Multi-round plaintext reference for the orchestrated protocol.

    Matched buyers and sellers leave the pool; unmatched buyers re-enter the
    next round. Rounds continue while both pools are non-empty and the last
    round made progress.
    """
    buyers = list(scenario.buyers)
    sellers = list(scenario.sellers)
    history: list[list[MatchResult]] = []
    round_no = 1
    while True:
        matches = _oracle_round(buyers, sellers, policy, round_no)
        history.append(matches)
        taken_b = {m.buyer_id for m in matches}
        taken_s = {m.seller_id for m in matches}
        buyers = [b for b in buyers if b.id not in taken_b]
        sellers = [s for s in sellers if s.id not in taken_s]
        if not matches or not buyers or not sellers:
            return history
        round_no += 1
