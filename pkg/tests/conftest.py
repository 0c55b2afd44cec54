import numpy as np
import pytest

from risofdma._validation import check_channel_batch
from risofdma.channel import draw_frequency_channel
from risofdma.scenario import ScenarioConfig


def draw_batch(cfg, n, seed):
    """``(hd_f, hr_f)`` for ``n`` realizations, one child seed each."""
    children = np.random.SeedSequence(seed).spawn(n)
    return check_channel_batch([draw_frequency_channel(cfg, np.random.default_rng(s))
                                for s in children])


def tiny_config(**overrides):
    """Small dimensions and narrow layers so that networks train in seconds."""
    base = dict(M=2, N=2, K=2, Q=2, N_t=2, L0=2, L1=1, L2=2, N1=2, N2=4, N3=6, N4=8, N5=10,
                B=4, val_every=2, conv_channels=4, deep_channels=4, fc_width=8, se_reduction=2,
                R_qos=0.5e6)
    base.update(overrides)
    return ScenarioConfig(**base)


@pytest.fixture
def tiny_cfg():
    return tiny_config()


@pytest.fixture
def tiny_data(tiny_cfg):
    return draw_batch(tiny_cfg, 12, 7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    def report(number, passed, detail):
        line = f"[criterion {number}] {'PASS' if passed else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
