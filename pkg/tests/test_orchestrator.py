import json
import random

import pytest

from chargematch.counters import expected_counts, observed_counts
from chargematch.harness import ScenarioConfig, generate_scenario
from chargematch.matching import DemandPolicy, oracle_simulate
from chargematch.model import BuyerRequest, PreferenceWeights, Role, Scenario, SellerOffer, encrypt_seller
from chargematch.orchestrator import (
    Marketplace,
    Phase,
    RoundClosedError,
    pack_round_secret,
    plaintext_fields,
    unpack_round_secret,
)
from chargematch.paillier import KeyMismatchError, keygen

BITS = 256


def market(**kw):
    kw.setdefault("seed", 11)
    return Marketplace(BITS, **kw)


def b(bid, x, y, d_max=500, price=1000):
    return BuyerRequest(bid, x, y, price, d_max, (), (), PreferenceWeights(1000, 1))


def s(sid, x, y, price=900):
    return SellerOffer(sid, x, y, price, (), ())


@pytest.fixture(scope="module")
def mid_scenario():
    return generate_scenario(ScenarioConfig(I=5, J=6, k=2, d_max_range=(1000, 3000), seed=1))


def test_run_matches_oracle_and_cost_model(mid_scenario):
    result = market().run(mid_scenario)
    assert result.matches == oracle_simulate(mid_scenario)
    for state in result.rounds:
        assert observed_counts(state.counters) == expected_counts(state.I, state.J, mid_scenario.k)
        assert state.counters["proxy"].decryptions == 0
        assert state.phase is Phase.CLOSED


def test_proxy_never_holds_private_key():
    m = market(proxies=2)
    for p in (b(1, 0, 0), b(2, 10, 10), s(1, 5, 5), s(2, 40, 0)):
        m.join(p)
    m.open_round()
    for proxy in m.proxies:
        assert not any(hasattr(proxy, name) for name in ("sk", "_sk", "lam", "mu"))
    assert m.cloud.holds_private_key()
    m.run_round()
    assert m.state.counters["proxy"].decryptions == 0


def test_cloud_never_decrypts_raw_profile_fields(mid_scenario):
    m = market(return_results=False)
    m.run(mid_scenario)
    assert set(m.cloud.decrypted_fields) <= {"dx", "dy", "dr", "alpha_sum", "dr_alpha", "d_max", "weight"}


def test_round_keys_are_fresh_and_stale_profiles_rejected():
    m = market()
    for p in (b(1, 0, 0), b(2, 3000, 3000, d_max=1), s(1, 5, 5), s(2, 2000, 0)):
        m.join(p)
    first = m.open_round()
    old_pk = first.round_pk
    stale = encrypt_seller(old_pk, s(2, 2000, 0), random.Random(0))
    m.run_round()
    second = m.advance_round()
    assert second.round == 2 and second.round_pk.key_id != old_pk.key_id
    with pytest.raises(KeyMismatchError):
        m.proxy_for(2).receive(stale)
    assert not m.cloud.holds_private_key() or m.cloud.pk == second.round_pk


def test_cloud_forgets_key_after_close(mid_scenario):
    m = market()
    m.run(mid_scenario)
    assert not m.cloud.holds_private_key()


def test_resubmission_replaces_previous_profile():
    m = market()
    buyer = m.join(b(1, 0, 0))
    m.join(s(1, 5, 5))
    m.open_round()
    first = m.proxy_for(1).profiles[Role.BUYER][1]
    m.submit(buyer)
    assert m.proxy_for(1).profiles[Role.BUYER][1] is not first
    assert m.state.buyer_ids == [1]
    pairs = m.proxy_phase()
    assert len(pairs) == 1


def test_submit_after_processing_raises():
    m = market()
    buyer = m.join(b(1, 0, 0))
    m.join(s(1, 5, 5))
    m.open_round()
    m.proxy_phase()
    with pytest.raises(RoundClosedError):
        m.submit(buyer)


def test_late_joiner_submits_into_open_round():
    m = market()
    m.join(b(1, 0, 0))
    m.open_round()
    m.join(s(1, 3, 4))
    state = m.run_round()
    assert [(x.buyer_id, x.seller_id) for x in state.matched] == [(1, 1)]


def test_withdrawn_user_is_not_matched():
    m = market()
    m.join(b(1, 0, 0))
    m.join(s(1, 3, 4))
    m.join(s(2, 30, 40))
    m.open_round()
    m.withdraw(Role.SELLER, 1)
    state = m.run_round()
    assert [(x.buyer_id, x.seller_id) for x in state.matched] == [(1, 2)]


def test_result_return_recovers_counterparty():
    sc = Scenario(0, [b(1, 100, 200), b(2, 2900, 2900, d_max=1)], [s(7, 40, 250, price=700)])
    m = market()
    result = m.run(sc)
    state = result.rounds[0]
    assert [(x.buyer_id, x.seller_id) for x in state.matched] == [(1, 7)]
    got_b = state.returns[(Role.BUYER, 1)]
    got_s = state.returns[(Role.SELLER, 7)]
    assert (got_b.counterparty_id, got_b.x, got_b.y, got_b.price) == (7, 40, 250, 700)
    assert (got_s.counterparty_id, got_s.x, got_s.y) == (1, 100, 200)
    assert (Role.BUYER, 2) not in state.returns
    packages = [msg for msg in result.network.messages if msg.kind == "return_package"]
    assert {msg.receiver for msg in packages} == {"buyer:1", "seller:7"}


def test_unmatched_buyer_reenters_next_round():
    m = market()
    m.join(b(1, 0, 0))
    m.join(b(2, 1, 0))
    m.join(s(1, 0, 0))
    m.open_round()
    first = m.run_round()
    assert [(x.buyer_id, x.seller_id) for x in first.matched] == [(1, 1)]
    m.join(s(2, 300, 0))
    second = m.advance_round()
    assert second.phase is Phase.OPEN and second.buyer_ids == [2]
    m.run_round()
    assert [(x.buyer_id, x.seller_id, x.round) for x in second.matched] == [(2, 2, 2)]
    assert second.returns[(Role.BUYER, 2)].x == 300


def test_static_pool_never_matches_after_first_round(mid_scenario):
    result = market().run(mid_scenario)
    assert result.rounds[0].matched
    assert all(not state.matched for state in result.rounds[1:])


def test_exhausted_seller_pool_refuses_new_round():
    m = market()
    m.join(b(1, 0, 0))
    m.join(b(2, 0, 0))
    m.join(s(1, 0, 0))
    m.open_round()
    m.run_round()
    closed = m.advance_round()
    assert closed.phase is Phase.CLOSED and not m.sellers
    with pytest.raises(RoundClosedError):
        m.open_round()


def test_empty_round_closes_cleanly():
    result = market().run(Scenario(0, [], []))
    assert result.matches == [[]]
    assert result.rounds[0].phase is Phase.CLOSED


def test_deterministic_under_seed(mid_scenario):
    a = market(seed=5).run(mid_scenario)
    c = market(seed=5).run(mid_scenario)
    assert [m.record() for m in a.network.messages] == [m.record() for m in c.network.messages]
    assert a.rounds[0].round_pk == c.rounds[0].round_pk


@pytest.mark.parametrize("proxies", [2, 3])
def test_multi_proxy_same_matches(mid_scenario, proxies):
    single = market().run(mid_scenario)
    multi = market(proxies=proxies).run(mid_scenario)
    assert multi.matches == single.matches
    for state in multi.rounds:
        assert observed_counts(state.counters) == expected_counts(state.I, state.J, mid_scenario.k)
    kinds = {msg.kind for msg in multi.network.messages}
    assert "seller_profiles" in kinds


def test_policy_is_honored():
    w = PreferenceWeights(1, 1, (1,))
    sc = Scenario(1, [BuyerRequest(1, 0, 0, 0, 10, (0,), (0,), w)], [SellerOffer(1, 0, 0, 0, (0,), (0,))])
    assert market(policy=DemandPolicy.STRICT_PAPER).run(sc).matches == [[]]
    assert len(market(policy=DemandPolicy.RELAXED).run(sc).all_matches()) == 1


def test_no_plaintext_on_wire_and_auditor_catches_plant(mid_scenario):
    m = market()
    result = m.run(mid_scenario)
    assert result.network.leaks() == []
    m.network.send("submit", "buyer:1", "proxy", "encrypted_profile", {"id": 1, "x": 17})
    leaks = m.network.leaks()
    assert [path for _, path in leaks] == ["x"]


def test_plaintext_fields_paths():
    payload = [{"buyer_id": 1, "stuff": [1, {"round": 2, "price": 5}]}]
    assert list(plaintext_fields(payload)) == ["[0].stuff[0]", "[0].stuff[1].price"]


def test_log_export(tmp_path, mid_scenario):
    result = market().run(mid_scenario)
    path = tmp_path / "log.jsonl"
    result.network.export(path)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(rows) == len(result.network.messages)
    assert set(rows[0]) == {"round", "step", "sender", "receiver", "kind", "bytes"}
    assert all(r["bytes"] > 0 for r in rows)
    assert {r["step"] for r in rows} >= {"keys", "submit", "proxy", "return"}


def test_round_secret_packing_round_trip():
    round_pk, round_sk = keygen(BITS, rng=1)
    for user_bits in (64, 128, BITS, 512):
        user_pk, _ = keygen(user_bits, rng=user_bits)
        chunks = pack_round_secret(round_sk, round_pk, user_pk)
        assert all(0 <= c < user_pk.n // 2 for c in chunks)
        assert unpack_round_secret(chunks, round_pk, user_pk) == (round_sk.p, round_sk.q)
    with pytest.raises(ValueError):
        unpack_round_secret(chunks[:-1], round_pk, user_pk)


def test_personal_key_size_is_configurable():
    sc = Scenario(0, [b(1, 0, 0)], [s(1, 0, 0)])
    result = Marketplace(BITS, seed=2, personal_bits=128).run(sc)
    assert result.rounds[0].returns[(Role.BUYER, 1)].x == 0


def test_k_mismatch_rejected():
    m = market()
    m.join(b(1, 0, 0))
    with pytest.raises(ValueError):
        m.join(SellerOffer(1, 0, 0, 0, (1,), (5,)))


def test_phase_order_enforced():
    m = market()
    m.join(b(1, 0, 0))
    m.join(s(1, 0, 0))
    with pytest.raises(RoundClosedError):
        m.proxy_phase()
    m.open_round()
    with pytest.raises(RuntimeError):
        m.open_round()
    with pytest.raises(RoundClosedError):
        m.cloud_phase([])
    with pytest.raises(RuntimeError):
        m.advance_round()
