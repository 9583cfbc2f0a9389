import numpy as np
import pytest

from tasnet.model import ModelConfig

# criterion number -> (title, passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record_acceptance(number: int, title: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE[number] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        line = f"AC{number:<2} {'PASS' if passed else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


# small configurations shared by several test modules
MICRO = ModelConfig(n_filters=8, filter_len=4, bottleneck=4, skip_channels=4, block_channels=6,
                    kernel=3, blocks_per_repeat=2, repeats=1)
MICRO_CAUSAL = ModelConfig(n_filters=8, filter_len=4, bottleneck=4, skip_channels=4, block_channels=6,
                           kernel=3, blocks_per_repeat=2, repeats=1, causal=True)
SMALL_CAUSAL = ModelConfig(n_filters=32, filter_len=16, bottleneck=16, skip_channels=16, block_channels=32,
                           kernel=3, blocks_per_repeat=4, repeats=2, causal=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
