"""Privacy-preserving matching of EV buyers to shared private charging piles.

Buyers and sellers encrypt their profiles under a per-round Paillier key, an
edge proxy combines ciphertexts homomorphically, and a cloud server decrypts
only pairwise sums and differences (with CRT acceleration) to run a greedy,
demand-aware matching.
"""

from chargematch.matching import DemandPolicy, MatchResult, oracle_match, oracle_simulate
from chargematch.model import BuyerRequest, PreferenceWeights, Scenario, SellerOffer
from chargematch.orchestrator import Marketplace
from chargematch.paillier import GMode, keygen

__all__ = [
    "BuyerRequest",
    "DemandPolicy",
    "GMode",
    "Marketplace",
    "MatchResult",
    "PreferenceWeights",
    "Scenario",
    "SellerOffer",
    "keygen",
    "oracle_match",
    "oracle_simulate",
]

__version__ = "0.1.0"
