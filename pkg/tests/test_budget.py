import math
import warnings

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvhom.budget import (Measured, NoiseBudget, RateConfig, background_contribution, compose,
                          entanglement_time, interference_amplitude_for, paper_budget,
                          spectral_impurity_contribution, visibility)
from nvhom.errors import DomainError

PAPER_RATE = RateConfig(4e-5, 1e8, 50e6, 13.3e6)


def test_background_contribution():
    b = 80 / 1100
    assert background_contribution(1100, 80) == pytest.approx(2 * b - b * b, rel=1e-15)
    assert background_contribution(1100, 80) == pytest.approx(0.140, abs=0.005)
    assert background_contribution(1100, 0) == 0.0
    with pytest.raises(DomainError):
        background_contribution(0, 0)
    with pytest.raises(DomainError):
        background_contribution(100, 200)


def test_spectral_impurity():
    assert spectral_impurity_contribution(0.94) == 0.13
    assert spectral_impurity_contribution(0.94, "model") == pytest.approx(1 - 0.94**2)
    assert spectral_impurity_contribution(1.0) == 0.0
    with pytest.raises(DomainError):
        spectral_impurity_contribution(0.9)
    with pytest.raises(DomainError):
        spectral_impurity_contribution(0.0)
    with pytest.raises(DomainError):
        spectral_impurity_contribution(0.9, "guess")


def test_compose_paper_budget():
    nb = paper_budget()
    assert compose(nb) == 0.34
    assert [k for k, _ in nb.contributions] == ["background+dark", "spectral impurity",
                                                 "fiber polarization"]
    assert compose(paper_budget(derived=True)) == pytest.approx(0.3402, abs=1e-4)
    assert "total" in nb.table() and nb.to_dict()["total"] == 0.34


def test_budget_validation_and_warning():
    with pytest.raises(DomainError):
        NoiseBudget([("x", -0.1)])
    with pytest.raises(DomainError):
        NoiseBudget().add("x", float("nan"))
    with pytest.warns(UserWarning):
        compose(NoiseBudget([("a", 0.3), ("b", 0.3)]))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        compose(NoiseBudget([("a", 0.3), ("b", 0.2)]))


deltas = st.lists(st.floats(0, 0.05, allow_subnormal=False), max_size=8)


@given(deltas, st.randoms())
def test_compose_permutation_invariant(ds, rnd):
    items = [(f"t{i}", d) for i, d in enumerate(ds)]
    shuffled = list(items)
    rnd.shuffle(shuffled)
    assert compose(NoiseBudget(items)) == compose(NoiseBudget(shuffled))


def test_visibility_example():
    eta = visibility((0.54, 0.04), (0.35, 0.04))
    assert eta.value == pytest.approx(0.35, abs=0.01)
    assert eta.sigma == pytest.approx(0.09, abs=0.01)
    assert tuple(eta) == (eta.value, eta.sigma)
    assert visibility(Measured(0.5, 0), Measured(0.0, 0)).value == 1.0
    with pytest.raises(DomainError):
        visibility((0.0, 0.1), (0.3, 0.1))


@given(st.floats(0.05, 1), st.floats(0, 1), st.floats(0, 0.1), st.floats(0, 0.1), st.floats(0.1, 10))
def test_visibility_scale_invariant(gp, gq, sp, sq, k):
    a = visibility((gp, sp), (gq, sq))
    b = visibility((k * gp, k * sp), (k * gq, k * sq))
    assert b.value == pytest.approx(a.value, rel=1e-9, abs=1e-12)
    assert b.sigma == pytest.approx(a.sigma, rel=1e-9, abs=1e-12)


def test_entanglement_time():
    T = entanglement_time(PAPER_RATE)
    assert T == pytest.approx(12.5, rel=1e-12)
    assert 6 <= T <= 20
    assert entanglement_time(RateConfig(8e-5, 1e8)) == pytest.approx(T / 4)
    assert entanglement_time(RateConfig(4e-5, 2e8)) == pytest.approx(T / 2)
    with_overlap = RateConfig(4e-5, 1e8, 50e6, 13.3e6, apply_overlap=True)
    assert entanglement_time(with_overlap) == pytest.approx(T * 50 / 13.3)
    assert entanglement_time(RateConfig(0.0, 1e8)) == math.inf
    with pytest.raises(DomainError):
        RateConfig(1.5, 1e8)
    with pytest.raises(DomainError):
        RateConfig(1e-4, -1.0)


def test_interference_amplitude_round_trip():
    b, q = 80 / 1100, 0.94
    xi = interference_amplitude_for(0.34, b, q)
    rho2 = (1 - b) ** 2
    assert 1 - rho2 + rho2 * 0.5 * (1 - q * q * xi) == pytest.approx(0.34, abs=1e-12)
    assert xi == pytest.approx(0.6057, abs=1e-4)
    with pytest.raises(DomainError):
        interference_amplitude_for(0.05, b, q)
