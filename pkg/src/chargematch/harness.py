"""Scenario generation, full-protocol simulation with invariant checks, oracle diffing."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from chargematch.counters import OpCounters, expected_counts, observed_counts
from chargematch.matching import DemandPolicy, MatchResult, oracle_simulate
from chargematch.model import DEFAULT_AREA, BuyerRequest, PreferenceWeights, Role, Scenario, SellerOffer
from chargematch.orchestrator import Marketplace, SimulationResult
from chargematch.paillier import GMode


@dataclass(frozen=True)
class ScenarioConfig:
    I: int  # noqa: E741
    J: int
    k: int
    area: int = DEFAULT_AREA
    price_range: tuple[int, int] = (500, 2000)
    demand_price_range: tuple[int, int] = (50, 500)
    d_max_range: tuple[int, int] = (300, 2000)
    weight_range: tuple[int, int] = (0, 2000)
    demand_density: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.I < 0 or self.J < 0 or self.k < 0:
            raise ValueError("I, J and k must be non-negative")
        if self.area <= 0:
            raise ValueError("area must be positive")
        for name in ("price_range", "demand_price_range", "d_max_range", "weight_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} must be a non-empty non-negative range")
        if self.d_max_range[0] <= 0:
            raise ValueError("d_max_range must be positive")
        if not 0.0 <= self.demand_density <= 1.0:
            raise ValueError("demand_density must lie in [0, 1]")


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    rng = random.Random(cfg.seed)

    def demands() -> tuple[tuple[int, ...], tuple[int, ...]]:
        bits = tuple(int(rng.random() < cfg.demand_density) for _ in range(cfg.k))
        prices = tuple(rng.randint(*cfg.demand_price_range) if b else 0 for b in bits)
        return bits, prices

    buyers = []
    for bid in range(1, cfg.I + 1):
        x, y = rng.randint(0, cfg.area), rng.randint(0, cfg.area)
        price = rng.randint(*cfg.price_range)
        d_max = rng.randint(*cfg.d_max_range)
        bits, prices = demands()
        w = [rng.randint(*cfg.weight_range) for _ in range(2 + cfg.k)]
        if not any(w):
            w[0] = max(1, cfg.weight_range[1])
        buyers.append(BuyerRequest(bid, x, y, price, d_max, bits, prices, PreferenceWeights.from_vector(w)))
    sellers = []
    for sid in range(1, cfg.J + 1):
        x, y = rng.randint(0, cfg.area), rng.randint(0, cfg.area)
        price = rng.randint(*cfg.price_range)
        bits, prices = demands()
        sellers.append(SellerOffer(sid, x, y, price, bits, prices))
    meta = {"generator": "chargematch", "seed": cfg.seed, "demand_density": cfg.demand_density}
    return Scenario(cfg.k, buyers, sellers, cfg.area, meta)


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class CounterRow:
    round: int
    quantity: str
    expected: int
    observed: int

    @property
    def ok(self) -> bool:
        return self.expected == self.observed


def report_table2(counters: OpCounters, I: int, J: int, k: int, round: int = 1) -> list[CounterRow]:  # noqa: E741
    """Compare observed per-round operation counts with the closed-form cost model."""
    exp = expected_counts(I, J, k)
    obs = observed_counts(counters)
    return [CounterRow(round, key, exp[key], obs[key]) for key in exp]


def diff_histories(
    got: list[list[MatchResult]], want: list[list[MatchResult]], names: tuple[str, str] = ("pipeline", "oracle")
) -> list[str]:
    a_name, b_name = names
    diffs = []
    if len(got) != len(want):
        diffs.append(f"round count: {a_name} {len(got)} vs {b_name} {len(want)}")
    for r, (a, b) in enumerate(zip(got, want), start=1):
        if a != b:
            only_a = [(m.buyer_id, m.seller_id) for m in a if m not in b]
            only_b = [(m.buyer_id, m.seller_id) for m in b if m not in a]
            diffs.append(f"round {r}: {a_name}-only {only_a}, {b_name}-only {only_b}")
    return diffs


def return_fidelity(scenario: Scenario, result: SimulationResult) -> list[str]:
    """Mismatches between what matched users recovered and the true counterparty data."""
    problems = []
    for state in result.rounds:
        for m in state.matched:
            b, s = scenario.buyer(m.buyer_id), scenario.seller(m.seller_id)
            got_b = state.returns.get((Role.BUYER, b.id))
            got_s = state.returns.get((Role.SELLER, s.id))
            if got_b is None or (got_b.counterparty_id, got_b.x, got_b.y, got_b.price) != (s.id, s.x, s.y, s.price):
                problems.append(f"round {state.round}: buyer {b.id} recovered {got_b}")
            if got_s is None or (got_s.counterparty_id, got_s.x, got_s.y) != (b.id, b.x, b.y):
                problems.append(f"round {state.round}: seller {s.id} recovered {got_s}")
    return problems


@dataclass
class SimulationReport:
    scenario: Scenario
    result: SimulationResult
    checks: list[Check] = field(default_factory=list)
    counters: list[CounterRow] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)


def simulate(
    scenario: Scenario,
    policy: DemandPolicy = DemandPolicy.RELAXED,
    bits: int = 512,
    seed: int | None = 0,
    g_mode: GMode = GMode.RANDOM_G,
    proxies: int = 1,
    return_results: bool = True,
) -> SimulationReport:
    """Run the full protocol and check every invariant that can be checked after the fact."""
    market = Marketplace(bits, g_mode, policy, seed, proxies, return_results=return_results)
    result = market.run(scenario)
    report = SimulationReport(scenario, result)

    diffs = diff_histories(result.matches, oracle_simulate(scenario, policy))
    report.checks.append(Check("oracle_equivalence", not diffs, "; ".join(diffs)))

    for state in result.rounds:
        report.counters.extend(report_table2(state.counters, state.I, state.J, scenario.k, state.round))
    bad = [f"r{c.round} {c.quantity}: {c.observed} != {c.expected}" for c in report.counters if not c.ok]
    report.checks.append(Check("cost_model", not bad, "; ".join(bad)))

    proxy_decs = sum(s.counters["proxy"].decryptions for s in result.rounds)
    report.checks.append(Check("proxy_never_decrypts", proxy_decs == 0, f"{proxy_decs} proxy decryptions"))

    leaks = result.network.leaks()
    report.checks.append(
        Check("no_plaintext_on_wire", not leaks, "; ".join(f"{m.kind}:{p}" for m, p in leaks[:5]))
    )

    key_ids = [s.round_pk.key_id for s in result.rounds if s.round_pk is not None]
    report.checks.append(Check("fresh_round_keys", len(set(key_ids)) == len(key_ids)))

    if return_results:
        problems = return_fidelity(scenario, result)
        report.checks.append(Check("return_fidelity", not problems, "; ".join(problems[:5])))
    return report


def verify(
    scenario: Scenario,
    policy: DemandPolicy = DemandPolicy.RELAXED,
    bits: int = 512,
    seed: int | None = 0,
) -> list[str]:
    """Diff the encrypted pipeline against the plaintext oracle; empty means agreement."""
    result = Marketplace(bits, GMode.RANDOM_G, policy, seed, return_results=False).run(scenario)
    return diff_histories(result.matches, oracle_simulate(scenario, policy))
