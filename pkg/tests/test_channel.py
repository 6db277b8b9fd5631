import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spadaac.channel import (
    ChannelEstimate,
    Constellation,
    CountModel,
    ReceiverConfig,
    count_pmf,
    k_max,
    square_root_constellation,
    trigger_probability,
)
from spadaac.exceptions import (
    ConfigError,
    DegenerateConstellationError,
    DomainError,
    InvalidOrderError,
    NormalizationError,
)


@pytest.mark.parametrize(
    "kwargs, expected",
    [
        ({"symbol_duration_ns": 100.0, "dead_time_ns": 0.9, "gate_duration_ns": 0.1}, 100),
        ({"symbol_duration_ns": 100.0, "dead_time_ns": 0.9, "gate_duration_ns": 0.11}, 100),
        ({"array_size": 4, "symbol_duration_ns": 25.0, "dead_time_ns": 0.5, "gate_duration_ns": 0.5}, 100),
        ({"symbol_duration_ns": 200.0, "dead_time_ns": 1.9, "gate_duration_ns": 0.1}, 100),
        ({"symbol_duration_ns": 100.5, "dead_time_ns": 0.5, "gate_duration_ns": 0.5}, 101),
    ],
)
def test_k_max(kwargs, expected):
    assert k_max(ReceiverConfig(**kwargs)) == expected


def test_k_max_ignores_division_roundoff():
    # 0.7 / 0.07 is 10.000000000000002 in binary floating point
    cfg = ReceiverConfig(symbol_duration_ns=0.7, dead_time_ns=0.05, gate_duration_ns=0.02)
    assert cfg.k_max == 10


def test_with_gates_sets_k_max():
    cfg = ReceiverConfig(array_size=2)
    for g in (1, 20, 37, 200):
        assert cfg.with_gates(g).gates_per_pixel == g
        assert cfg.with_gates(g).k_max == 2 * g


@pytest.mark.parametrize(
    "bad",
    [
        {"pde": 0.0}, {"pde": 1.5}, {"array_size": 0}, {"symbol_duration_ns": 0.0},
        {"dead_time_ns": -1.0}, {"gate_duration_ns": 0.0}, {"dark_rate_cpns": -0.1},
    ],
)
def test_receiver_validation(bad):
    with pytest.raises(ConfigError):
        ReceiverConfig(**bad)


def test_square_root_constellation():
    assert square_root_constellation(9.0, 4).levels_cpns == (0.0, 1.0, 4.0, 9.0)
    assert square_root_constellation(1.0, 2).levels_cpns == (0.0, 1.0)
    zero = square_root_constellation(0.0, 4)
    assert zero.levels_cpns == (0.0,) * 4
    assert not zero.is_strictly_increasing
    with pytest.raises(InvalidOrderError):
        square_root_constellation(1.0, 1)


def test_trigger_probability_examples(unit_gate_cfg):
    cfg = unit_gate_cfg
    est = ChannelEstimate(10.0, 5.0)
    p = trigger_probability(cfg, est, Constellation((0.0, 10.0)), 1, 1.0)
    assert p == pytest.approx(1.0 - math.exp(-3.01), rel=1e-14)
    # the commonly quoted rounding 0.95074 is off in the fifth digit
    assert p == pytest.approx(0.95074, abs=5e-5)

    dark_free = ReceiverConfig(dark_rate_cpns=0.0)
    assert trigger_probability(dark_free, ChannelEstimate(1.0, 0.0), Constellation((0.0, 1.0)), 0, 0.3) == 0.0

    # alpha * lam_tot = ln 2 gives one half
    lam = math.log(2.0) / (cfg.pde * cfg.gate_duration_ns)
    half = trigger_probability(
        ReceiverConfig(gate_duration_ns=1.0, dead_time_ns=1.0, dark_rate_cpns=0.0),
        ChannelEstimate(lam, 0.0), Constellation((0.0, lam)), 1, 1.0,
    )
    assert half == pytest.approx(0.5, abs=1e-15)


def test_trigger_probability_domain(cfg):
    con = square_root_constellation(10.0, 4)
    for alpha in (0.0, -0.1, 1.0 + 1e-9, math.nan):
        with pytest.raises(DomainError):
            trigger_probability(cfg, ChannelEstimate(10.0, 1.0), con, 0, alpha)


def test_point_masses():
    m = CountModel.from_trigger_probs(50, [0.0, 1.0])
    assert m.pmfs[0, 0] == 1.0 and m.pmfs[0, 1:].sum() == 0.0
    assert m.pmfs[1, 50] == 1.0 and m.pmfs[1, :50].sum() == 0.0


def test_half_probability_moments():
    m = CountModel.from_trigger_probs(100, [0.5])
    k = np.arange(101)
    mean = m.pmfs[0] @ k
    assert mean == pytest.approx(50.0, rel=1e-12)
    assert m.pmfs[0] @ (k - mean) ** 2 == pytest.approx(25.0, rel=1e-12)


def test_count_pmf_rejects_duplicate_levels(cfg):
    with pytest.raises(DegenerateConstellationError):
        count_pmf(cfg, ChannelEstimate(0.0, 1.0), square_root_constellation(0.0, 4), 0.5)
    with pytest.raises(DegenerateConstellationError):
        count_pmf(cfg, ChannelEstimate(5.0, 1.0), Constellation((0.0, 5.0, 5.0)), 0.5)


def test_count_model_is_read_only(cfg):
    m = count_pmf(cfg, ChannelEstimate(10.0, 1.0), square_root_constellation(10.0, 4), 1.0)
    with pytest.raises(ValueError):
        m.pmfs[0, 0] = 1.0


def test_normalization_guard():
    with pytest.raises(NormalizationError):
        CountModel._assemble(4, np.array([0.5]), np.log([0.5]), np.log([0.4]), 1.0, [1.0])


def test_saturation_limit():
    for x in (5.0, 20.0, 60.0):
        m = CountModel.from_exponents(100, [x])
        assert m.pmfs[0, 100] == pytest.approx(math.exp(100 * math.log1p(-math.exp(-x))), rel=1e-12)
    assert CountModel.from_exponents(100, [800.0]).pmfs[0, 100] == 1.0


@settings(max_examples=60, deadline=None)
@given(
    kmax=st.integers(1, 400),
    x=st.lists(st.floats(0.0, 40.0), min_size=2, max_size=6),
    alpha=st.floats(1e-6, 1.0),
)
def test_pmf_properties(kmax, x, alpha):
    m = CountModel.from_exponents(kmax, np.asarray(x) * alpha, alpha)
    k = np.arange(kmax + 1)
    assert np.all(np.abs(m.pmfs.sum(axis=1) - 1.0) <= 1e-12)
    mean = m.pmfs @ k
    np.testing.assert_allclose(mean, m.mean_counts(), rtol=1e-9, atol=1e-12)
    var = m.pmfs @ (k * k) - mean**2
    np.testing.assert_allclose(var, m.variances(), rtol=1e-9, atol=1e-9 * kmax)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(1e-4, 1.0), b=st.floats(1e-4, 1.0), ls=st.floats(0.1, 200.0), lb=st.floats(0.0, 200.0))
def test_trigger_monotone_in_alpha(a, b, ls, lb):
    cfg = ReceiverConfig()
    con = square_root_constellation(ls, 4)
    est = ChannelEstimate(ls, lb)
    lo, hi = sorted((a, b))
    for m in range(4):
        assert trigger_probability(cfg, est, con, m, lo) <= trigger_probability(cfg, est, con, m, hi)


def test_dark_counts_not_attenuated():
    cfg = ReceiverConfig(attenuate_dark_counts=False, dark_rate_cpns=0.5)
    con = square_root_constellation(10.0, 4)
    p = trigger_probability(cfg, ChannelEstimate(10.0, 0.0), con, 0, 1e-9)
    assert p == pytest.approx(-math.expm1(-0.5 * cfg.gate_duration_ns), rel=1e-6)
