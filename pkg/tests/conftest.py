import sys

import pytest

from fwforge import packer
from fwforge.keystore import KeyRecord, KeyRole, KeyStore


@pytest.fixture(scope="session")
def signing_key():
    return packer.load_test_signing_key()


@pytest.fixture(scope="session")
def store(signing_key):
    return packer.synthetic_keystore(1234, signing_key=signing_key)


@pytest.fixture
def rrek_key():
    return KeyRecord("RREK", "RREK-2017-01", KeyRole.PAYLOAD_CIPHER, bytes(range(16)))


@pytest.fixture
def decoy_key():
    return KeyRecord("RREK", "RREK-DECOY", KeyRole.PAYLOAD_CIPHER, bytes(range(100, 116)))


@pytest.fixture
def store_of():
    def make(*records):
        return KeyStore(records)
    return make


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
