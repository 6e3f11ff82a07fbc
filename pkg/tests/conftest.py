import numpy as np
import pytest

from dpdb import Record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_records(keys, attrs=None, payload_len=16):
    attrs = attrs if attrs is not None else [None] * len(keys)
    return [
        Record(payload=f"row-{i}".encode().ljust(payload_len, b"."), key=None if k is None else int(k),
               attrs=None if a is None else tuple(int(x) for x in a), rid=i)
        for i, (k, a) in enumerate(zip(keys, attrs))
    ]


def random_records(rng, n, N, k=0):
    keys = rng.integers(1, N + 1, size=n)
    bits = rng.integers(0, 2, size=(n, k)) if k else None
    return make_records(keys, None if bits is None else list(bits))


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[num])
