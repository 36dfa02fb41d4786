"""Array-voltage to timing and reliability mapping.

Two timing notions are kept apart:

* the *timing table* (:func:`scaled_timings`), which the controller
  programs. It equals the datasheet timings at nominal voltage and grows as
  the array voltage drops;
* the device's *physical requirement* (:func:`reliable_timings`), the
  latency below which cells actually fail. Real parts carry a latency
  guardband, so the requirement is the table scaled by a margin < 1. The
  margin is pinned by the profile's ``v_min``: the lowest voltage that is
  error free at ``vmin_reference_timings``.

Everything the controller programs from the table is therefore reliable,
while aggressive characterization timings (10 ns tRCD/tRP) expose a Vmin
below nominal.
"""
from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass, field, replace
from functools import cached_property

from .dram_core import NOMINAL_TIMINGS, TimingParams
from .errors import RangeError

# timing comparisons tolerate float noise from interpolation
EPS_NS = 1e-9
VOLT_DIGITS = 6


class OnsetShape(enum.Enum):
    EXPONENTIAL = "Exponential"
    LINEAR = "Linear"


@dataclass(frozen=True)
class ErrorOnsetParams:
    p0: float = 1e-5
    k: float = 40.0
    shape: OnsetShape = OnsetShape.EXPONENTIAL
    pattern_scale: float = 1.0  # data-pattern multiplier on p0

    def __post_init__(self):
        if not 0 < self.p0 <= 1:
            raise RangeError("error_onset.p0 must be in (0, 1]")
        if not self.k > 0:
            raise RangeError("error_onset.k must be > 0")
        if self.pattern_scale < 0:
            raise RangeError("error_onset.pattern_scale must be >= 0")


@dataclass(frozen=True)
class WeakRegion:
    bank: int
    row_start: int
    row_end: int
    weight: float = 10.0

    def __post_init__(self):
        if not 0 <= self.row_start <= self.row_end:
            raise RangeError("weak region needs 0 <= row_start <= row_end")
        if self.weight < 1:
            raise RangeError("weak region weight must be >= 1")

    def covers(self, bank: int, row: int) -> bool:
        return bank == self.bank and self.row_start <= row <= self.row_end

    @property
    def rows(self) -> int:
        return self.row_end - self.row_start + 1


@dataclass(frozen=True)
class VoltageProfile:
    """Per-device calibration of the voltage/latency/reliability relation.

    The anchors of the shipped presets are illustrative, not measured.
    """

    vendor_label: str = "generic"
    v_nominal: float = 1.35
    v_min: float = 1.10
    v_floor: float = 1.00
    v_step: float = 0.05
    timing_anchors: tuple[tuple[float, TimingParams], ...] = ()
    error_onset: ErrorOnsetParams = ErrorOnsetParams()
    weak_regions: tuple[WeakRegion, ...] = ()
    temp_latency_factor: float = 1.0
    temp_reference: float = 20.0
    vmin_reference_timings: TimingParams = field(
        default_factory=lambda: NOMINAL_TIMINGS.with_core(10.0, 35.0, 10.0))
    strong_margin_ratio: float = 1.0

    def __post_init__(self):
        if not self.timing_anchors:
            object.__setattr__(self, "timing_anchors", default_anchors())
        anchors = tuple(sorted(((round(v, VOLT_DIGITS), t) for v, t in self.timing_anchors), key=lambda a: a[0]))
        object.__setattr__(self, "timing_anchors", anchors)
        object.__setattr__(self, "weak_regions", tuple(self.weak_regions))
        if not self.v_floor <= self.v_min <= self.v_nominal:
            raise RangeError("voltage profile needs v_floor <= v_min <= v_nominal")
        if not self.v_step > 0:
            raise RangeError("voltage profile v_step must be > 0")
        volts = [v for v, _ in anchors]
        if len(set(volts)) != len(volts):
            raise RangeError("duplicate timing anchor voltage")
        if volts[0] > self.v_floor + 1e-12:
            raise RangeError("timing anchors must reach down to v_floor")
        if round(self.v_nominal, VOLT_DIGITS) not in volts:
            raise RangeError("timing anchors must include v_nominal")
        for (_, lo), (_, hi) in zip(anchors, anchors[1:]):
            if any(h > l + EPS_NS for l, h in zip(lo.core(), hi.core())):
                raise RangeError("anchor timings must not increase with voltage")
        if not self.temp_latency_factor >= 1.0:
            raise RangeError("temp_latency_factor must be >= 1")
        if not 0 < self.strong_margin_ratio <= 1:
            raise RangeError("strong_margin_ratio must be in (0, 1]")

    @property
    def nominal_timings(self) -> TimingParams:
        return dict(self.timing_anchors)[round(self.v_nominal, VOLT_DIGITS)]

    @cached_property
    def grid(self) -> tuple[float, ...]:
        """Candidate voltages v_floor, v_floor + v_step, ..., v_nominal."""
        n = int(round((self.v_nominal - self.v_floor) / self.v_step))
        pts = [round(self.v_floor + i * self.v_step, VOLT_DIGITS) for i in range(n + 1)]
        pts = [v for v in pts if v <= self.v_nominal + 1e-12]
        if pts[-1] != round(self.v_nominal, VOLT_DIGITS):
            pts.append(round(self.v_nominal, VOLT_DIGITS))
        return tuple(pts)

    @cached_property
    def latency_margin(self) -> float:
        """Ratio of physical requirement to table timing for the weakest rows."""
        table = _interp(self, self.v_min)
        ref = self.vmin_reference_timings.core()
        return min(r / s for r, s in zip(ref, table))

    def row_margin(self, weak: bool) -> float:
        if weak or not self.weak_regions:
            return self.latency_margin
        return self.latency_margin * self.strong_margin_ratio


def default_anchors(nominal: TimingParams = NOMINAL_TIMINGS) -> tuple[tuple[float, TimingParams], ...]:
    """Illustrative (non-measured) timing table shared by the vendor presets."""
    return (
        (1.35, nominal),
        (1.15, nominal.with_core(15.0, 37.5, 15.0)),
        (1.05, nominal.with_core(17.5, 40.0, 17.5)),
        (1.00, nominal.with_core(18.75, 41.25, 18.75)),
    )


def _check_range(v: float, p: VoltageProfile) -> None:
    if not p.v_floor - 1e-9 <= v <= p.v_nominal + 1e-9:
        raise RangeError(f"voltage {v} outside [{p.v_floor}, {p.v_nominal}]")


def _interp(p: VoltageProfile, v: float) -> tuple[float, float, float]:
    volts = [a for a, _ in p.timing_anchors]
    i = bisect.bisect_left(volts, round(v, VOLT_DIGITS))
    if i < len(volts) and volts[i] == round(v, VOLT_DIGITS):
        return p.timing_anchors[i][1].core()
    lo_v, lo_t = p.timing_anchors[i - 1]
    hi_v, hi_t = p.timing_anchors[i]
    frac = (v - lo_v) / (hi_v - lo_v)
    return tuple(a + (b - a) * frac for a, b in zip(lo_t.core(), hi_t.core()))


def _temp_scale(v: float, p: VoltageProfile, temperature: float | None) -> float:
    # the slowdown is a low-voltage effect; nominal operation keeps datasheet timings
    if temperature is None or temperature <= p.temp_reference or v >= p.v_nominal - 1e-12:
        return 1.0
    return p.temp_latency_factor ** (temperature - p.temp_reference)


def scaled_timings(v: float, p: VoltageProfile, temperature: float | None = None) -> TimingParams:
    """Timing table entry for array voltage ``v``.

    tRCD/tRAS/tRP are interpolated linearly between anchors; peripheral and
    refresh timings keep their nominal values.
    """
    _check_range(v, p)
    rcd, ras, rp = _interp(p, v)
    s = _temp_scale(v, p, temperature)
    return p.nominal_timings.with_core(rcd * s, ras, rp * s)


def reliable_timings(v: float, p: VoltageProfile, weak: bool = True,
                     temperature: float | None = None) -> tuple[float, float, float]:
    """Physical (tRCD, tRAS, tRP) requirement of a row class at ``v``."""
    m = p.row_margin(weak)
    return tuple(m * x for x in scaled_timings(v, p, temperature).core())


def _covers(t: TimingParams, need) -> bool:
    return all(have >= req - EPS_NS for have, req in zip(t.core(), need))


def is_row_reliable(v: float, t: TimingParams, p: VoltageProfile, weak: bool = True,
                    temperature: float | None = None) -> bool:
    return _covers(t, reliable_timings(v, p, weak, temperature))


def is_reliable(v: float, t: TimingParams, p: VoltageProfile, temperature: float | None = None) -> bool:
    """True when every row of the device is error free at (v, t).

    Anything at or above the timing table is reliable; so is anything above
    the weakest rows' physical requirement.
    """
    _check_range(v, p)
    if _covers(t, scaled_timings(v, p, temperature).core()):
        return True
    return is_row_reliable(v, t, p, True, temperature)


def safe_voltage_for_timings(t: TimingParams, p: VoltageProfile, temperature: float | None = None) -> float:
    """Lowest grid voltage whose table timings fit inside ``t``."""
    for v in p.grid:
        if _covers(t, scaled_timings(v, p, temperature).core()):
            return v
    return round(p.v_nominal, VOLT_DIGITS)


def onset_voltage(t: TimingParams, p: VoltageProfile, weak: bool = True,
                  temperature: float | None = None) -> float:
    """Vmin of a row class at timings ``t``: lowest error-free grid voltage.

    Returns one step above nominal when ``t`` fails even at nominal voltage.
    """
    for v in p.grid:
        if is_row_reliable(v, t, p, weak, temperature) or _covers(t, scaled_timings(v, p, temperature).core()):
            return v
    return round(p.v_nominal + p.v_step, VOLT_DIGITS)


def with_temperature_factor(p: VoltageProfile, factor: float) -> VoltageProfile:
    return replace(p, temp_latency_factor=factor)
