import random

import pytest

from chargematch.paillier import GMode, keygen, keypair_from_primes

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_key():
    """n = 35, g = 36: small enough for brute-force oracles."""
    return keypair_from_primes(5, 7, GMode.N_PLUS_ONE)


@pytest.fixture(scope="session")
def small_key_random_g():
    return keypair_from_primes(5, 7, GMode.RANDOM_G, rng=7)


@pytest.fixture(scope="session")
def key512():
    return keygen(512, GMode.RANDOM_G, rng=512)


@pytest.fixture(scope="session")
def key512_opt():
    return keygen(512, GMode.N_PLUS_ONE, rng=513)


@pytest.fixture
def rng():
    return random.Random(1234)
