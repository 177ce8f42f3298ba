"""In-process simulation of the five-party matching protocol.

Entities talk only through :class:`Network`, which records every message
(round, step, sender, receiver, payload kind, size) so that role isolation
and the absence of plaintext profile data on the wire can be audited after a
run.

Known weakness, kept on purpose: matched users receive the round private key
and can therefore decrypt any ciphertext of the closing round. The only
mitigation is the mandatory key refresh in :meth:`Marketplace.advance_round`.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from chargematch.counters import OpCounters, RoleCounts
from chargematch.matching import DemandPolicy, MatchResult, run_round_matching
from chargematch.model import (
    BuyerRequest,
    DecryptedPair,
    EncryptedProfile,
    PairRecord,
    PreferenceWeights,
    Role,
    Scenario,
    SellerOffer,
    encrypt_buyer,
    encrypt_seller,
    pair_process,
)
from chargematch.paillier import (
    Ciphertext,
    GMode,
    KeyMismatchError,
    PaillierPrivateKey,
    PaillierPublicKey,
    as_rng,
    decode_signed,
    decrypt_crt,
    decrypt_optimized,
    decrypt_standard,
    encrypt_optimized,
    keygen,
    keypair_from_primes,
)

log = logging.getLogger(__name__)

CA, PROXY, CLOUD = "ca", "proxy", "cloud"

# Payload fields allowed to travel as plaintext: identifiers and match metadata.
PLAINTEXT_METADATA = frozenset(
    {"id", "role", "buyer_id", "seller_id", "recipient_id", "recipient_role", "counterparty_id", "round", "w_index"}
)


class RoundClosedError(RuntimeError):
    pass


class Phase(enum.Enum):
    OPEN = "open"
    PROCESSED = "processed"
    MATCHED = "matched"
    CLOSED = "closed"


def buyer_name(bid: int) -> str:
    return f"buyer:{bid}"


def seller_name(sid: int) -> str:
    return f"seller:{sid}"


# ---------------------------------------------------------------------------
# Message log


@dataclass(frozen=True)
class Message:
    round: int
    step: str
    sender: str
    receiver: str
    kind: str
    nbytes: int
    payload: Any = field(repr=False, compare=False)

    def record(self) -> dict[str, Any]:
        return {
            "round": self.round,
            "step": self.step,
            "sender": self.sender,
            "receiver": self.receiver,
            "kind": self.kind,
            "bytes": self.nbytes,
        }


def payload_size(obj: Any) -> int:
    if isinstance(obj, Ciphertext):
        return len(obj.to_bytes())
    if isinstance(obj, PaillierPublicKey):
        return (obj.n.bit_length() + 7) // 8 + (obj.g.bit_length() + 7) // 8
    if isinstance(obj, PaillierPrivateKey):
        return (obj.p.bit_length() + 7) // 8 + (obj.q.bit_length() + 7) // 8
    if isinstance(obj, enum.Enum):
        return len(str(obj.value))
    if isinstance(obj, bool) or obj is None:
        return 1
    if isinstance(obj, int):
        return 8
    if isinstance(obj, str):
        return len(obj.encode())
    if dataclasses.is_dataclass(obj):
        return sum(payload_size(getattr(obj, f.name)) for f in dataclasses.fields(obj))
    if isinstance(obj, dict):
        return sum(payload_size(v) for v in obj.values())
    if isinstance(obj, (list, tuple)):
        return sum(payload_size(v) for v in obj)
    raise TypeError(f"cannot size payload of type {type(obj).__name__}")


def plaintext_fields(obj: Any, path: str = "") -> Iterator[str]:
    """Yield paths of plaintext scalars that are not whitelisted metadata.

    Ciphertexts and key objects are opaque and not descended into.
    """
    if isinstance(obj, (Ciphertext, PaillierPublicKey, PaillierPrivateKey, enum.Enum)) or obj is None:
        return
    name = path.rsplit(".", 1)[-1].split("[", 1)[0]
    if isinstance(obj, (int, float, str)):
        if name not in PLAINTEXT_METADATA:
            yield path
        return
    if dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            yield from plaintext_fields(getattr(obj, f.name), f"{path}.{f.name}" if path else f.name)
    elif isinstance(obj, dict):
        for key, value in obj.items():
            yield from plaintext_fields(value, f"{path}.{key}" if path else str(key))
    elif isinstance(obj, (list, tuple)):
        for i, value in enumerate(obj):
            yield from plaintext_fields(value, f"{path}[{i}]")
    else:
        yield path


class Network:
    """Direct delivery with an audit log."""

    def __init__(self) -> None:
        self.messages: list[Message] = []
        self.round = 0

    def send(self, step: str, sender: str, receiver: str, kind: str, payload: Any) -> Any:
        self.messages.append(Message(self.round, step, sender, receiver, kind, payload_size(payload), payload))
        return payload

    def leaks(self) -> list[tuple[Message, str]]:
        """Messages carrying plaintext values other than ids and match metadata."""
        return [(m, p) for m in self.messages for p in plaintext_fields(m.payload)]

    def export(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for m in self.messages:
                fh.write(json.dumps(m.record()) + "\n")


# ---------------------------------------------------------------------------
# Entities


class CertificateAuthority:
    def __init__(self, bits: int, g_mode: GMode, rng: random.Random) -> None:
        self.bits = bits
        self.g_mode = g_mode
        self.rng = rng
        self.counts = RoleCounts()

    def issue_round_keys(self) -> tuple[PaillierPublicKey, PaillierPrivateKey]:
        return keygen(self.bits, self.g_mode, self.rng)


@dataclass
class Recovered:
    """What a matched user learns about its counterparty after result return."""

    counterparty_id: int
    x: int
    y: int
    price: int | None = None


@dataclass(frozen=True)
class ReturnPackage:
    recipient_id: int
    recipient_role: Role
    counterparty_id: int
    ct_sk: tuple[Ciphertext, ...]
    ct_counterparty_location: tuple[Ciphertext, Ciphertext]
    ct_counterparty_price: Ciphertext | None = None


class User:
    """A buyer or seller device: holds its plaintext profile and personal keys."""

    def __init__(self, profile: BuyerRequest | SellerOffer, role: Role, rng: random.Random) -> None:
        self.profile = profile
        self.role = role
        self.rng = rng
        self.round_pk: PaillierPublicKey | None = None
        self.personal: tuple[PaillierPublicKey, PaillierPrivateKey] | None = None
        self.recovered: Recovered | None = None

    @property
    def name(self) -> str:
        return buyer_name(self.profile.id) if self.role is Role.BUYER else seller_name(self.profile.id)

    def encrypt_profile(self, counts: RoleCounts) -> EncryptedProfile:
        if self.round_pk is None:
            raise RoundClosedError(f"{self.name} has no round key")
        if self.role is Role.BUYER:
            return encrypt_buyer(self.round_pk, self.profile, self.rng, counts)
        return encrypt_seller(self.round_pk, self.profile, self.rng, counts)

    def make_personal_key(self, bits: int) -> PaillierPublicKey:
        self.personal = keygen(bits, GMode.N_PLUS_ONE, self.rng)
        return self.personal[0]

    def open_package(self, pkg: ReturnPackage, counts: RoleCounts) -> Recovered:
        """Recover the round key, then the counterparty's location (and price)."""
        assert self.personal is not None and self.round_pk is not None
        my_pk, my_sk = self.personal
        chunks = []
        for ct in pkg.ct_sk:
            chunks.append(decrypt_optimized(my_sk, my_pk, ct))
            counts.decryptions += 1
        p, q = unpack_round_secret(chunks, self.round_pk, my_pk)
        round_pk, round_sk = keypair_from_primes(p, q, self.round_pk.g_mode, g=self.round_pk.g)
        if round_pk != self.round_pk:
            raise KeyMismatchError("transported key does not match the round public key")

        def dec(ct: Ciphertext) -> int:
            counts.decryptions += 1
            return decode_signed(decrypt_standard(round_sk, round_pk, ct), round_pk.n)

        x, y = (dec(ct) for ct in pkg.ct_counterparty_location)
        price = dec(pkg.ct_counterparty_price) if pkg.ct_counterparty_price is not None else None
        self.recovered = Recovered(pkg.counterparty_id, x, y, price)
        return self.recovered


class ProxyServer:
    def __init__(self, name: str, counts: RoleCounts) -> None:
        self.name = name
        self.counts = counts
        self.pk: PaillierPublicKey | None = None
        self.profiles: dict[Role, dict[int, EncryptedProfile]] = {Role.BUYER: {}, Role.SELLER: {}}
        # Retained for result return: (x, y) ciphertexts and the price ciphertext.
        self.store: dict[tuple[Role, int], tuple[tuple[Ciphertext, Ciphertext], Ciphertext]] = {}

    def reset(self, pk: PaillierPublicKey, counts: RoleCounts) -> None:
        self.pk = pk
        self.counts = counts
        self.profiles = {Role.BUYER: {}, Role.SELLER: {}}
        self.store = {}

    def receive(self, profile: EncryptedProfile) -> None:
        if self.pk is None:
            raise RoundClosedError("proxy has no round key")
        for ct in profile.ciphertexts():
            if ct.key_id != self.pk.key_id:
                raise KeyMismatchError(f"profile {profile.role.value}:{profile.id} is not under the current round key")
        if profile.role is Role.BUYER and (profile.ct_dmax is None or not profile.ct_weights):
            raise ValueError("buyer profile lacks d_max or weights")
        self.profiles[profile.role][profile.id] = profile
        self.store[(profile.role, profile.id)] = ((profile.ct_x, profile.ct_y), profile.ct_price)

    def process(self, sellers: list[EncryptedProfile]) -> list[PairRecord]:
        assert self.pk is not None
        return [
            pair_process(self.pk, b, s, self.counts)
            for _, b in sorted(self.profiles[Role.BUYER].items())
            for s in sorted(sellers, key=lambda s: s.id)
        ]


class CloudServer:
    def __init__(self, counts: RoleCounts) -> None:
        self.counts = counts
        self.pk: PaillierPublicKey | None = None
        self._sk: PaillierPrivateKey | None = None
        self.decrypted_fields: list[str] = []

    def install_keys(self, pk: PaillierPublicKey, sk: PaillierPrivateKey, counts: RoleCounts) -> None:
        self.pk, self._sk, self.counts = pk, sk, counts

    def _dec(self, ct: Ciphertext, label: str) -> int:
        assert self._sk is not None and self.pk is not None
        self.counts.decryptions += 1
        self.decrypted_fields.append(label)
        return decode_signed(decrypt_crt(self._sk, self.pk, ct), self.pk.n)

    def decrypt_pair(self, rec: PairRecord) -> DecryptedPair:
        return DecryptedPair(
            buyer_id=rec.buyer_id,
            seller_id=rec.seller_id,
            dx=self._dec(rec.ct_dx, "dx"),
            dy=self._dec(rec.ct_dy, "dy"),
            dr=self._dec(rec.ct_dr, "dr"),
            alpha_sum=tuple(self._dec(ct, "alpha_sum") for ct in rec.ct_alpha_sum),
            dr_alpha=tuple(self._dec(ct, "dr_alpha") for ct in rec.ct_dr_alpha),
        )

    def decrypt_buyer_meta(self, ct_dmax: Ciphertext, ct_weights: tuple[Ciphertext, ...]):
        d_max = self._dec(ct_dmax, "d_max")
        weights = PreferenceWeights.from_vector([self._dec(ct, "weight") for ct in ct_weights])
        return d_max, weights

    def encrypt_secret_for(self, user_pk: PaillierPublicKey, rng: random.Random) -> tuple[Ciphertext, ...]:
        assert self._sk is not None and self.pk is not None
        cts = []
        for chunk in pack_round_secret(self._sk, self.pk, user_pk):
            cts.append(encrypt_optimized(user_pk, chunk, rng=rng))
            self.counts.encryptions += 1
        return tuple(cts)

    def holds_private_key(self) -> bool:
        return self._sk is not None


def _secret_width(round_pk: PaillierPublicKey) -> int:
    return ((round_pk.n.bit_length() + 1) // 2 + 7) // 8


def _chunk_bytes(user_pk: PaillierPublicKey) -> int:
    # Each chunk stays below 2**(bits - 2) < n / 2.
    size = (user_pk.n.bit_length() - 2) // 8
    if size < 1:
        raise ValueError("personal key too small to carry any key material")
    return size


def pack_round_secret(sk: PaillierPrivateKey, round_pk: PaillierPublicKey, user_pk: PaillierPublicKey) -> list[int]:
    """Serialize (p, q) as fixed-width big-endian bytes split into plaintext-sized chunks."""
    width = _secret_width(round_pk)
    try:
        blob = sk.p.to_bytes(width, "big") + sk.q.to_bytes(width, "big")
    except OverflowError:
        raise ValueError("round primes are not balanced; cannot serialize") from None
    size = _chunk_bytes(user_pk)
    return [int.from_bytes(blob[i : i + size], "big") for i in range(0, len(blob), size)]


def unpack_round_secret(chunks: list[int], round_pk: PaillierPublicKey, user_pk: PaillierPublicKey) -> tuple[int, int]:
    width = _secret_width(round_pk)
    total = 2 * width
    size = _chunk_bytes(user_pk)
    lengths = [min(size, total - i) for i in range(0, total, size)]
    if len(lengths) != len(chunks):
        raise ValueError(f"expected {len(lengths)} key chunks, got {len(chunks)}")
    blob = b"".join(c.to_bytes(n, "big") for c, n in zip(chunks, lengths))
    return int.from_bytes(blob[:width], "big"), int.from_bytes(blob[width:], "big")


# ---------------------------------------------------------------------------
# Round lifecycle


@dataclass
class RoundState:
    round: int
    round_pk: PaillierPublicKey | None
    phase: Phase
    counters: OpCounters
    buyer_ids: list[int] = field(default_factory=list)
    seller_ids: list[int] = field(default_factory=list)
    k: int | None = None
    matched: list[MatchResult] = field(default_factory=list)
    returns: dict[tuple[Role, int], Recovered] = field(default_factory=dict)

    @property
    def I(self) -> int:  # noqa: E743
        return len(self.buyer_ids)

    @property
    def J(self) -> int:
        return len(self.seller_ids)


@dataclass
class SimulationResult:
    rounds: list[RoundState]
    network: Network

    @property
    def matches(self) -> list[list[MatchResult]]:
        return [r.matched for r in self.rounds]

    def all_matches(self) -> list[MatchResult]:
        return [m for r in self.rounds for m in r.matched]


class Marketplace:
    """Drives CA, users, proxies and the cloud through matching rounds.

    Typical use is :meth:`run`; the individual phase methods exist so tests
    and scripts can interleave arrivals, withdrawals and stale submissions.
    """

    def __init__(
        self,
        bits: int = 512,
        g_mode: GMode = GMode.RANDOM_G,
        policy: DemandPolicy = DemandPolicy.RELAXED,
        seed: int | None = None,
        proxies: int = 1,
        personal_bits: int | None = None,
        return_results: bool = True,
    ) -> None:
        if proxies < 1:
            raise ValueError("need at least one proxy")
        self.rng = as_rng(seed)
        self.bits = bits
        self.personal_bits = personal_bits or bits
        self.policy = policy
        self.return_results = return_results
        self.network = Network()
        self.ca = CertificateAuthority(bits, g_mode, self.rng)
        counters = OpCounters()
        self.proxies = [ProxyServer(f"{PROXY}:{i}" if proxies > 1 else PROXY, counters["proxy"]) for i in range(proxies)]
        self.cloud = CloudServer(counters["cloud"])
        self.buyers: dict[int, User] = {}
        self.sellers: dict[int, User] = {}
        self.history: list[RoundState] = []
        self.state = RoundState(0, None, Phase.CLOSED, counters)
        self._k: int | None = None

    # -- registration -----------------------------------------------------

    def join(self, profile: BuyerRequest | SellerOffer) -> User:
        """Register a participant; it submits in the current (if open) and later rounds."""
        if self._k is not None and profile.k != self._k:
            raise ValueError(f"profile has {profile.k} demands, market uses k={self._k}")
        self._k = profile.k
        if isinstance(profile, BuyerRequest):
            user = self.buyers[profile.id] = User(profile, Role.BUYER, self.rng)
        else:
            user = self.sellers[profile.id] = User(profile, Role.SELLER, self.rng)
        if self.state.phase is Phase.OPEN:
            user.round_pk = self.network.send("keys", CA, user.name, "round_public_key", self.state.round_pk)
            self.submit(user)
        return user

    def withdraw(self, role: Role, uid: int) -> None:
        pool = self.buyers if role is Role.BUYER else self.sellers
        pool.pop(uid, None)
        for proxy in self.proxies:
            proxy.profiles[role].pop(uid, None)
            proxy.store.pop((role, uid), None)
        ids = self.state.buyer_ids if role is Role.BUYER else self.state.seller_ids
        if uid in ids:
            ids.remove(uid)

    def proxy_for(self, uid: int) -> ProxyServer:
        return self.proxies[uid % len(self.proxies)]

    # -- phases -----------------------------------------------------------

    def open_round(self) -> RoundState:
        """CA issues fresh round keys; every registered user submits."""
        if self.state.phase is not Phase.CLOSED:
            raise RuntimeError("previous round is still open")
        if self.history and not self.sellers:
            raise RoundClosedError("seller pool is empty")
        counters = OpCounters()
        number = self.state.round + 1
        self.network.round = number
        pk, sk = self.ca.issue_round_keys()
        self.state = RoundState(number, pk, Phase.OPEN, counters, k=self._k)
        for proxy in self.proxies:
            self.network.send("keys", CA, proxy.name, "round_public_key", pk)
            proxy.reset(pk, counters["proxy"])
        self.network.send("keys", CA, CLOUD, "round_private_key", sk)
        self.cloud.install_keys(pk, sk, counters["cloud"])
        log.debug("round %d opened, key %s", number, pk.key_id[:8])
        for user in [*self.buyers.values(), *self.sellers.values()]:
            self.network.send("keys", CA, user.name, "round_public_key", pk)
            user.round_pk = pk
        for user in [*sorted_users(self.buyers), *sorted_users(self.sellers)]:
            self.submit(user)
        return self.state

    def submit(self, user: User) -> EncryptedProfile:
        if self.state.phase is not Phase.OPEN:
            raise RoundClosedError(f"round {self.state.round} is not accepting submissions")
        counts = self.state.counters["buyer" if user.role is Role.BUYER else "seller"]
        profile = user.encrypt_profile(counts)
        proxy = self.proxy_for(profile.id)
        self.network.send("submit", user.name, proxy.name, "encrypted_profile", profile)
        proxy.receive(profile)
        ids = self.state.buyer_ids if user.role is Role.BUYER else self.state.seller_ids
        if profile.id not in ids:
            ids.append(profile.id)
        return profile

    def proxy_phase(self) -> list[PairRecord]:
        if self.state.phase is not Phase.OPEN:
            raise RoundClosedError(f"round {self.state.round} is not open for processing")
        records: list[PairRecord] = []
        for proxy in self.proxies:
            sellers = []
            for peer in self.proxies:
                mine = list(peer.profiles[Role.SELLER].values())
                if peer is not proxy and mine:
                    self.network.send("proxy", peer.name, proxy.name, "seller_profiles", mine)
                sellers.extend(mine)
            batch = proxy.process(sellers)
            if batch:
                self.network.send("proxy", proxy.name, CLOUD, "pair_records", batch)
            meta = [
                {"buyer_id": b.id, "ct_dmax": b.ct_dmax, "ct_weights": b.ct_weights}
                for _, b in sorted(proxy.profiles[Role.BUYER].items())
            ]
            if meta:
                self.network.send("proxy", proxy.name, CLOUD, "buyer_metadata", meta)
            records.extend(batch)
        records.sort(key=lambda r: (r.buyer_id, r.seller_id))
        self.state.phase = Phase.PROCESSED
        return records

    def _buyer_profiles(self) -> dict[int, EncryptedProfile]:
        out: dict[int, EncryptedProfile] = {}
        for proxy in self.proxies:
            out.update(proxy.profiles[Role.BUYER])
        return out

    def cloud_phase(self, pairs: list[PairRecord]) -> list[MatchResult]:
        if self.state.phase is not Phase.PROCESSED:
            raise RoundClosedError("cloud phase requires a processed round")
        decrypted = {(r.buyer_id, r.seller_id): self.cloud.decrypt_pair(r) for r in pairs}
        d_max: dict[int, int] = {}
        weights: dict[int, PreferenceWeights] = {}
        for bid, prof in sorted(self._buyer_profiles().items()):
            assert prof.ct_dmax is not None
            d_max[bid], weights[bid] = self.cloud.decrypt_buyer_meta(prof.ct_dmax, prof.ct_weights)
        matches = run_round_matching(
            sorted(d_max), decrypted, d_max, weights, self.policy, self.state.round, self.state.counters["cloud"]
        )
        self.state.matched = matches
        self.state.phase = Phase.MATCHED
        return matches

    def result_return(self, match: MatchResult) -> tuple[Recovered, Recovered]:
        """Deliver the round key and counterparty ciphertexts to a matched pair."""
        if self.state.phase is not Phase.MATCHED or match not in self.state.matched:
            raise RuntimeError("result_return needs a finalized match of the current round")
        buyer, seller = self.buyers[match.buyer_id], self.sellers[match.seller_id]
        user_pks = {}
        for user in (buyer, seller):
            self.network.send("return", CLOUD, user.name, "personal_key_request", {"round": self.state.round})
            user_pks[user.role] = self.network.send(
                "return", user.name, CLOUD, "personal_public_key", user.make_personal_key(self.personal_bits)
            )
        ct_sk = {role: self.cloud.encrypt_secret_for(pk, self.rng) for role, pk in user_pks.items()}
        proxy_b, proxy_s = self.proxy_for(buyer.profile.id), self.proxy_for(seller.profile.id)
        self.network.send(
            "return",
            CLOUD,
            proxy_b.name,
            "match_result",
            {"buyer_id": match.buyer_id, "seller_id": match.seller_id, "ct_sk_buyer": ct_sk[Role.BUYER], "ct_sk_seller": ct_sk[Role.SELLER]},
        )
        seller_loc, seller_price = self._stored(Role.SELLER, seller.profile.id)
        buyer_loc, _ = self._stored(Role.BUYER, buyer.profile.id)
        to_buyer = ReturnPackage(buyer.profile.id, Role.BUYER, seller.profile.id, ct_sk[Role.BUYER], seller_loc, seller_price)
        to_seller = ReturnPackage(seller.profile.id, Role.SELLER, buyer.profile.id, ct_sk[Role.SELLER], buyer_loc)
        self.network.send("return", proxy_b.name, buyer.name, "return_package", to_buyer)
        self.network.send("return", proxy_s.name, seller.name, "return_package", to_seller)
        got_b = buyer.open_package(to_buyer, self.state.counters["buyer"])
        got_s = seller.open_package(to_seller, self.state.counters["seller"])
        self.state.returns[(Role.BUYER, buyer.profile.id)] = got_b
        self.state.returns[(Role.SELLER, seller.profile.id)] = got_s
        return got_b, got_s

    def _stored(self, role: Role, uid: int):
        for proxy in self.proxies:
            if (role, uid) in proxy.store:
                return proxy.store[(role, uid)]
        raise KeyError(f"no stored ciphertexts for {role.value} {uid}")

    def advance_round(self) -> RoundState:
        """Close the round, drop matched users and refresh keys if sellers remain."""
        if self.state.phase is not Phase.MATCHED:
            raise RuntimeError("cannot advance before the cloud phase")
        for m in self.state.matched:
            self.buyers.pop(m.buyer_id, None)
            self.sellers.pop(m.seller_id, None)
        closed = self.state
        closed.phase = Phase.CLOSED
        self.history.append(closed)
        self.cloud._sk = None
        for user in [*self.buyers.values(), *self.sellers.values()]:
            user.round_pk = None
        if not self.sellers:
            return closed
        return self.open_round()

    def run_round(self) -> RoundState:
        pairs = self.proxy_phase()
        matches = self.cloud_phase(pairs)
        if self.return_results:
            for m in matches:
                self.result_return(m)
        return self.state

    def run(self, scenario: Scenario, max_rounds: int | None = None) -> SimulationResult:
        """Play a scenario until no seller is left, no buyer is left, or a round matches nobody."""
        self._k = scenario.k
        for b in scenario.buyers:
            self.join(b)
        for s in scenario.sellers:
            self.join(s)
        self.open_round()
        while True:
            state = self.run_round()
            made_progress = bool(state.matched)
            last = max_rounds is not None and state.round >= max_rounds
            remaining_buyers = {b for b in self.buyers} - {m.buyer_id for m in state.matched}
            if not made_progress or last or not remaining_buyers:
                self._close_final()
                break
            if self.advance_round().phase is Phase.CLOSED:
                break
        return SimulationResult(list(self.history), self.network)

    def _close_final(self) -> None:
        for m in self.state.matched:
            self.buyers.pop(m.buyer_id, None)
            self.sellers.pop(m.seller_id, None)
        self.state.phase = Phase.CLOSED
        self.history.append(self.state)
        self.cloud._sk = None


def sorted_users(pool: dict[int, User]) -> list[User]:
    return [pool[i] for i in sorted(pool)]
