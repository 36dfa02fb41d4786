import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from voltsim.dram_core import Geometry, NOMINAL_TIMINGS
from voltsim.fault_model import (BitModel, cell_error_probability, error_fraction_curve, generate_error_map,
                                 inject_errors, monte_carlo_error_fraction)
from voltsim.presets import VENDOR_B, VENDORS
from voltsim.voltage_model import ErrorOnsetParams, VoltageProfile, WeakRegion, scaled_timings

T10 = NOMINAL_TIMINGS.with_core(10.0, 35.0, 10.0)
UNIFORM = VoltageProfile(v_min=1.20, error_onset=ErrorOnsetParams(p0=1e-4, k=50.0))
SMALL = Geometry(rows_per_bank=1024)


def test_exponential_onset_value():
    # 0.10 V below onset: 1e-4 * exp(50 * 0.1)
    assert cell_error_probability(1.10, T10, 0, 0, UNIFORM) == pytest.approx(1.484e-2, rel=1e-3)
    curve = error_fraction_curve([1.10], T10, UNIFORM, SMALL)
    assert curve[0][1] == pytest.approx(1e-4 * math.exp(5.0), rel=1e-12)


def test_zero_at_and_above_onset():
    for v in (1.20, 1.25, 1.35):
        assert cell_error_probability(v, T10, 3, 10, UNIFORM) == 0.0


def test_weak_region_weight():
    prof = VoltageProfile(v_min=1.20, error_onset=ErrorOnsetParams(p0=1e-4, k=50.0),
                          weak_regions=(WeakRegion(1, 100, 199, 10.0),))
    inside = cell_error_probability(1.10, T10, 1, 150, prof)
    outside = cell_error_probability(1.10, T10, 0, 150, prof)
    assert inside == pytest.approx(10 * outside)


def test_table_timings_produce_empty_maps():
    for prof in VENDORS.values():
        for v in prof.grid:
            assert generate_error_map(v, scaled_timings(v, prof), prof).total_mass == 0.0


@pytest.mark.parametrize("label", sorted(VENDORS))
def test_error_fraction_strictly_rises_below_vmin(label):
    prof = VENDORS[label]
    vs = [v for v in prof.grid]
    fr = dict(error_fraction_curve(vs, T10, prof))
    for v in vs:
        if v >= prof.v_min:
            assert fr[v] == 0.0
    below = sorted(v for v in vs if v < prof.v_min)
    assert all(fr[a] > fr[b] for a, b in zip(below, below[1:]))


def test_vendor_b_errors_confined_to_weak_regions():
    m = generate_error_map(1.05, T10, VENDOR_B)
    nz = np.argwhere(m.grid > 0)
    assert len(nz) > 0
    for b, r in nz:
        assert any(reg.covers(int(b), int(r)) for reg in VENDOR_B.weak_regions)


def test_monte_carlo_matches_analytic():
    m = generate_error_map(1.05, T10, UNIFORM, SMALL)
    frac, se = monte_carlo_error_fraction(m, 1_000_000, 11)
    assert abs(frac - m.mean_probability) <= 4 * se


def test_inject_errors_single_flip():
    line = bytes(64)
    out, pos = inject_errors(line, 1.0, BitModel.single_flip(), 5)
    assert len(pos) == 1
    assert int.from_bytes(out, "little") == 1 << pos[0]
    assert inject_errors(line, 0.0, BitModel.single_flip(), 5) == (line, ())


@given(st.integers(0, 2**32 - 1), st.floats(0.001, 0.2))
def test_inject_errors_flips_exactly_reported_bits(seed, p_bit):
    line = bytes(range(64))
    out, pos = inject_errors(line, 1.0, BitModel.binomial(p_bit), seed)
    diff = int.from_bytes(out, "little") ^ int.from_bytes(line, "little")
    assert len(pos) >= 1
    assert diff == sum(1 << p for p in pos)


def test_inject_errors_deterministic_and_rate():
    line = bytes(64)
    assert inject_errors(line, 0.5, BitModel(), 42) == inject_errors(line, 0.5, BitModel(), 42)
    rng = np.random.default_rng(0)
    n = 20000
    hits = sum(1 for _ in range(n) if inject_errors(line, 0.1, BitModel(), rng)[1])
    assert abs(hits / n - 0.1) <= 4 * math.sqrt(0.09 / n)


def test_inject_errors_rejects_bad_probability():
    with pytest.raises(ValueError):
        inject_errors(bytes(64), 1.5)


@pytest.mark.parametrize("v", [1.00, 1.05])
def test_error_mass_concentrates_in_weak_regions(v):
    from voltsim.fault_model import region_masks
    prof = VoltageProfile(v_min=1.10, error_onset=ErrorOnsetParams(p0=1e-4, k=40.0),
                          weak_regions=(WeakRegion(3, 0, 99, 5.0),))
    m = generate_error_map(v, T10, prof)
    weak, _ = region_masks(Geometry(), prof)
    assert m.grid[weak].sum() / m.total_mass > weak.mean()


def test_same_seed_same_error_positions():
    line = bytes(64)
    a = [inject_errors(line, 0.3, BitModel.binomial(0.02), s) for s in range(50)]
    b = [inject_errors(line, 0.3, BitModel.binomial(0.02), s) for s in range(50)]
    assert a == b
