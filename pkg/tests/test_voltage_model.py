import pytest
from hypothesis import given, strategies as st

from voltsim.dram_core import NOMINAL_TIMINGS
from voltsim.errors import RangeError
from voltsim.presets import VENDOR_A, VENDOR_B, VENDOR_C, VENDORS
from voltsim.voltage_model import (VoltageProfile, is_reliable, is_row_reliable, onset_voltage,
                                   safe_voltage_for_timings, scaled_timings)

# two anchors only, so the midpoint interpolation is easy to check by hand
TWO_ANCHOR = VoltageProfile(
    v_min=1.10, v_floor=1.05,
    timing_anchors=((1.35, NOMINAL_TIMINGS), (1.05, NOMINAL_TIMINGS.with_core(17.5, 40.0, 17.5))),
)


def test_nominal_voltage_gives_nominal_timings():
    for prof in VENDORS.values():
        assert scaled_timings(1.35, prof) == NOMINAL_TIMINGS


def test_midpoint_interpolation():
    t = scaled_timings(1.20, TWO_ANCHOR)
    assert t.core() == pytest.approx((15.625, 37.5, 15.625))


def test_safe_voltage_round_trip_example():
    t = NOMINAL_TIMINGS.with_core(15.625, 37.5, 15.625)
    assert safe_voltage_for_timings(t, TWO_ANCHOR) == 1.20


@pytest.mark.parametrize("prof", [VENDOR_A, VENDOR_B, VENDOR_C, TWO_ANCHOR])
def test_round_trip_on_grid(prof):
    for v in prof.grid:
        assert safe_voltage_for_timings(scaled_timings(v, prof), prof) == v


@pytest.mark.parametrize("prof", [VENDOR_A, VENDOR_B, VENDOR_C])
@given(a=st.floats(1.0, 1.35), b=st.floats(1.0, 1.35))
def test_timings_monotone_in_voltage(prof, a, b):
    lo, hi = sorted((a, b))
    for x, y in zip(scaled_timings(lo, prof).core(), scaled_timings(hi, prof).core()):
        assert x >= y - 1e-12


@given(v=st.floats(1.0, 1.35))
def test_refresh_and_peripheral_timings_unchanged(v):
    t = scaled_timings(v, VENDOR_B)
    assert (t.tREFI, t.tRFC, t.tCL, t.tBURST) == (NOMINAL_TIMINGS.tREFI, NOMINAL_TIMINGS.tRFC,
                                                  NOMINAL_TIMINGS.tCL, NOMINAL_TIMINGS.tBURST)


@pytest.mark.parametrize("v", [0.95, 1.40])
def test_out_of_range_voltage(v):
    with pytest.raises(RangeError):
        scaled_timings(v, VENDOR_B)


def test_table_timings_always_reliable():
    for prof in VENDORS.values():
        for v in prof.grid:
            assert is_reliable(v, scaled_timings(v, prof), prof)


def test_aggressive_timings_below_vmin_unreliable():
    t10 = NOMINAL_TIMINGS.with_core(10.0, 35.0, 10.0)
    assert VENDOR_B.v_min == 1.10
    assert not is_reliable(1.05, t10, VENDOR_B)
    assert is_reliable(1.10, t10, VENDOR_B)
    assert onset_voltage(t10, VENDOR_B) == 1.10
    assert onset_voltage(t10, VENDOR_A) == 1.20
    assert onset_voltage(t10, VENDOR_C) == 1.25


def test_weak_rows_fail_first():
    t10 = NOMINAL_TIMINGS.with_core(10.0, 35.0, 10.0)
    assert onset_voltage(t10, VENDOR_B, weak=False) < onset_voltage(t10, VENDOR_B, weak=True)
    assert is_row_reliable(1.05, t10, VENDOR_B, weak=False)


def test_profile_validation():
    with pytest.raises(RangeError):
        VoltageProfile(v_min=1.40)
    with pytest.raises(RangeError):
        VoltageProfile(timing_anchors=((1.35, NOMINAL_TIMINGS),))
    with pytest.raises(RangeError):
        VoltageProfile(temp_latency_factor=0.9)


def test_temperature_slows_low_voltage_only():
    hot = scaled_timings(1.10, VENDOR_B, temperature=70.0)
    cold = scaled_timings(1.10, VENDOR_B, temperature=20.0)
    assert hot.tRCD > cold.tRCD
    assert scaled_timings(1.35, VENDOR_B, temperature=70.0) == NOMINAL_TIMINGS
