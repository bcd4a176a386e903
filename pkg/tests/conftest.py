import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nvhom.model import AutocorrParams, EmitterModel, PairConfig

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

GAMMA = 1 / 12e-9

# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_emitter(f_ex=0.0, sd=0.0, tau1=12e-9, a=0.0, tau2=100e-9, purity=1.0, gamma=GAMMA):
    return EmitterModel(f_ex, f_ex + 2e9, gamma, sd, AutocorrParams(a, tau1, tau2), purity)


@pytest.fixture
def paper_pair():
    e1 = make_emitter(93e6, 88e6, 6.67e-9, 1.0, 150e-9, 0.94)
    e2 = make_emitter(0.0, 106e6, 8.58e-9, 1.0, 150e-9, 0.94)
    return PairConfig(e1, e2, 0.6)


def fraction_within_3sigma(hist, model_g2, tau_max=50e-9):
    """Share of bins with |tau| <= tau_max whose counts lie within 3 sigma of the model.

    Sigma is the Poisson spread of the model's expected count, floored at one
    count so that near-empty bins are not judged on a vanishing width.
    """
    sel = np.abs(hist.tau) <= tau_max
    norm = hist.rate_C * hist.rate_D * hist.duration * hist.bin_width
    expected = norm * np.asarray(model_g2(hist.tau[sel]))
    sigma = np.sqrt(np.maximum(expected, 1.0))
    return float(np.mean(np.abs(hist.counts[sel] - expected) <= 3 * sigma))
