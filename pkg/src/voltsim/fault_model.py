"""Voltage-induced error probabilities, error maps and bit-flip injection."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .dram_core import Geometry, TimingParams
from .seeding import as_rng
from .voltage_model import (ErrorOnsetParams, OnsetShape, VoltageProfile, WeakRegion,
                            _check_range, is_row_reliable, onset_voltage)

__all__ = [
    "BitModel", "ErrorMap", "ErrorOnsetParams", "WeakRegion", "LINE_BITS",
    "cell_error_probability", "class_error_probability", "generate_error_map",
    "inject_errors", "error_fraction_curve", "monte_carlo_error_fraction",
    "region_masks",
]

LINE_BITS = 512


class BitModelKind(enum.Enum):
    SINGLE_FLIP = "SingleFlip"
    BINOMIAL = "Binomial"


@dataclass(frozen=True)
class BitModel:
    kind: BitModelKind = BitModelKind.SINGLE_FLIP
    p_bit: float = 0.0

    @classmethod
    def single_flip(cls) -> "BitModel":
        return cls(BitModelKind.SINGLE_FLIP)

    @classmethod
    def binomial(cls, p_bit: float) -> "BitModel":
        if not 0 < p_bit <= 1:
            raise ValueError("p_bit must be in (0, 1]")
        return cls(BitModelKind.BINOMIAL, p_bit)

    def to_dict(self) -> dict:
        if self.kind is BitModelKind.SINGLE_FLIP:
            return {"kind": "SingleFlip"}
        return {"kind": "Binomial", "p_bit": self.p_bit}

    @classmethod
    def from_dict(cls, d: dict) -> "BitModel":
        if d.get("kind", "SingleFlip") == "SingleFlip":
            return cls.single_flip()
        return cls.binomial(float(d["p_bit"]))


def _base(v: float, v_onset: float, onset: ErrorOnsetParams) -> float:
    depth = v_onset - v
    if onset.shape is OnsetShape.EXPONENTIAL:
        g = math.exp(onset.k * depth)
    else:
        g = 1.0 + onset.k * depth
    return onset.p0 * onset.pattern_scale * g


def class_error_probability(v: float, t: TimingParams, p: VoltageProfile, weak: bool,
                            temperature: float | None = None) -> float:
    """Per-line error probability of a row class before its region weight."""
    if is_row_reliable(v, t, p, weak, temperature):
        return 0.0
    return _base(v, onset_voltage(t, p, weak, temperature), p.error_onset)


def _region_for(p: VoltageProfile, bank: int, row: int) -> WeakRegion | None:
    for reg in p.weak_regions:
        if reg.covers(bank, row):
            return reg
    return None


def cell_error_probability(v: float, t: TimingParams, bank: int, row: int, p: VoltageProfile,
                           temperature: float | None = None) -> float:
    """Probability that one cache-line access in (bank, row) has >= 1 bit error."""
    _check_range(v, p)
    reg = _region_for(p, bank, row)
    base = class_error_probability(v, t, p, reg is not None, temperature)
    if base == 0.0:
        return 0.0
    return min(1.0, base * (reg.weight if reg else 1.0))


def region_masks(geo: Geometry, p: VoltageProfile) -> tuple[np.ndarray, np.ndarray]:
    """(weak mask, weight grid), both shaped (banks, rows)."""
    weak = np.zeros((geo.num_banks, geo.rows_per_bank), dtype=bool)
    weight = np.ones((geo.num_banks, geo.rows_per_bank), dtype=np.float64)
    # first matching region wins, as in cell_error_probability
    for reg in reversed(p.weak_regions):
        if reg.bank >= geo.num_banks or reg.row_end >= geo.rows_per_bank:
            raise ValueError(f"weak region {reg} outside geometry")
        weak[reg.bank, reg.row_start:reg.row_end + 1] = True
        weight[reg.bank, reg.row_start:reg.row_end + 1] = reg.weight
    return weak, weight


@dataclass(frozen=True, eq=False)
class ErrorMap:
    grid: np.ndarray
    voltage: float
    timings: TimingParams

    @property
    def operating_point(self) -> tuple[float, TimingParams]:
        return (self.voltage, self.timings)

    @property
    def mean_probability(self) -> float:
        return float(self.grid.mean())

    @property
    def total_mass(self) -> float:
        return float(self.grid.sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bank", "row", "probability"])
            for b in range(self.grid.shape[0]):
                for r, prob in enumerate(self.grid[b].tolist()):
                    w.writerow([b, r, repr(prob)])

    def to_npy(self, path) -> None:
        """Dense (banks, rows) float64 grid for plotting."""
        with open(Path(path), "wb") as fh:
            np.save(fh, self.grid, allow_pickle=False)


def generate_error_map(v: float, t: TimingParams, p: VoltageProfile, geo: Geometry | None = None,
                       temperature: float | None = None) -> ErrorMap:
    geo = geo or Geometry()
    _check_range(v, p)
    weak, weight = region_masks(geo, p)
    pw = class_error_probability(v, t, p, True, temperature)
    ps = class_error_probability(v, t, p, False, temperature)
    grid = np.where(weak, pw, ps) * weight
    np.clip(grid, 0.0, 1.0, out=grid)
    return ErrorMap(grid, v, t)


@lru_cache(maxsize=64)
def _flip_count_cdf(p_bit: float, n: int) -> np.ndarray:
    pmf = np.array([math.comb(n, k) * p_bit**k * (1 - p_bit) ** (n - k) for k in range(n + 1)])
    return np.cumsum(pmf)


def sample_flip_count(p_bit: float, n: int, rng: np.random.Generator) -> int:
    """Draw K ~ Binomial(n, p_bit) conditioned on K >= 1."""
    cdf = _flip_count_cdf(p_bit, n)
    u = cdf[0] + rng.random() * (cdf[-1] - cdf[0])
    k = int(np.searchsorted(cdf, u, side="right"))
    return min(max(k, 1), n)


def inject_errors(line: bytes, p_line: float, bit_model: BitModel = BitModel(), rng_seed=None) -> tuple[bytes, tuple[int, ...]]:
    """Corrupt a 64-byte line with probability ``p_line``.

    ``rng_seed`` may be an int seed or a numpy Generator. Bit positions count
    from the least significant bit of the little-endian payload.
    """
    if not 0.0 <= p_line <= 1.0:
        raise ValueError("p_line must be in [0, 1]")
    if p_line == 0.0:
        return line, ()
    rng = as_rng(rng_seed)
    if rng.random() >= p_line:
        return line, ()
    nbits = len(line) * 8
    if bit_model.kind is BitModelKind.SINGLE_FLIP:
        positions = (int(rng.integers(nbits)),)
    else:
        k = sample_flip_count(bit_model.p_bit, nbits, rng)
        positions = tuple(sorted(int(x) for x in rng.choice(nbits, size=k, replace=False)))
    mask = 0
    for pos in positions:
        mask |= 1 << pos
    value = int.from_bytes(line, "little") ^ mask
    return value.to_bytes(len(line), "little"), positions


def error_fraction_curve(voltages, t: TimingParams, p: VoltageProfile, geo: Geometry | None = None,
                         temperature: float | None = None) -> list[tuple[float, float]]:
    """Expected fraction of cache lines with >= 1 error at each voltage.

    Every line in a row shares that row's probability, so the mean over
    lines equals the mean over the (bank, row) grid.
    """
    return [(v, generate_error_map(v, t, p, geo, temperature).mean_probability) for v in voltages]


def monte_carlo_error_fraction(error_map: ErrorMap, n_lines: int, rng) -> tuple[float, float]:
    """Empirical erroneous-line fraction over uniformly sampled lines.

    Returns (fraction, analytic standard error of the estimate).
    """
    rng = as_rng(rng)
    flat = error_map.grid.ravel()
    idx = rng.integers(flat.size, size=n_lines)
    hits = int(np.count_nonzero(rng.random(n_lines) < flat[idx]))
    mean = float(flat.mean())
    # per-sample variance of a Bernoulli mixture is mean * (1 - mean)
    se = math.sqrt(mean * (1.0 - mean) / n_lines)
    return hits / n_lines, se
