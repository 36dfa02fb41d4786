"""Shipped vendor archetypes, power constants and loss-model calibration.

All numbers here are illustrative placeholders chosen to give three
qualitatively different devices, not measurements of real parts.
"""
from __future__ import annotations

from .energy import PowerProfile
from .errors import RangeError
from .policies import LossModel, LossModelSet
from .voltage_model import ErrorOnsetParams, VoltageProfile, WeakRegion

VENDOR_A = VoltageProfile(
    vendor_label="A",
    v_min=1.20,
    error_onset=ErrorOnsetParams(p0=1e-6, k=60.0),
)

VENDOR_B = VoltageProfile(
    vendor_label="B",
    v_min=1.10,
    error_onset=ErrorOnsetParams(p0=1e-5, k=40.0),
    weak_regions=(
        WeakRegion(bank=2, row_start=4096, row_end=6143, weight=10.0),
        WeakRegion(bank=5, row_start=20480, row_end=22527, weight=10.0),
    ),
    temp_latency_factor=1.002,
    strong_margin_ratio=0.85,
)

VENDOR_C = VoltageProfile(
    vendor_label="C",
    v_min=1.25,
    error_onset=ErrorOnsetParams(p0=1e-5, k=40.0),
    temp_latency_factor=1.002,
)

VENDORS = {"A": VENDOR_A, "B": VENDOR_B, "C": VENDOR_C}

DEFAULT_POWER = PowerProfile()

# least-squares fit from `voltsim fit-loss-model --config configs/calibration.yaml`
DEFAULT_LOSS_MODELS = LossModelSet(
    memory_intensive=LossModel(beta=0.450),
    non_memory_intensive=LossModel(beta=0.106),
)


def vendor_profile(label: str) -> VoltageProfile:
    try:
        return VENDORS[label.upper()]
    except KeyError:
        raise RangeError(f"unknown vendor archetype {label!r}; choose from {sorted(VENDORS)}") from None
