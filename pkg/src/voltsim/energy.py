"""DRAM and CPU energy accounting.

DRAM energy is split into the array, whose dynamic and background energy
scale with the square of the array voltage, and the peripheral/IO part,
which stays at nominal voltage under array-only scaling. Frequency/voltage
scaling of the channel additionally scales the peripheral side.

Default constants are illustrative placeholders, not measurements.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .dram_core import BankState, BankStatus, Command, CommandKind
from .errors import RangeError

KINDS = tuple(CommandKind)


@dataclass(frozen=True)
class PowerProfile:
    act_array_nj: float = 2.0
    pre_array_nj: float = 1.0
    rd_array_nj: float = 1.1
    wr_array_nj: float = 1.2
    ref_array_nj: float = 40.0
    act_periph_nj: float = 0.6
    pre_periph_nj: float = 0.3
    rd_periph_nj: float = 1.5
    wr_periph_nj: float = 1.5
    ref_periph_nj: float = 6.0
    bg_array_open_mw: float = 60.0
    bg_array_closed_mw: float = 45.0
    bg_periph_mw: float = 55.0
    io_energy_per_line_nj: float = 1.0
    cpu_static_w: float = 0.05
    cpu_energy_per_instruction_nj: float = 0.02
    v_nominal: float = 1.35
    leakage_scaling: str = "quadratic"

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, float) and val < 0:
                raise RangeError(f"power_profile.{f.name} must be >= 0")
        if self.leakage_scaling not in ("quadratic", "linear"):
            raise RangeError("power_profile.leakage_scaling must be 'quadratic' or 'linear'")

    def array_nj(self, kind: CommandKind) -> float:
        return getattr(self, f"{kind.value.lower()}_array_nj")

    def periph_nj(self, kind: CommandKind) -> float:
        return getattr(self, f"{kind.value.lower()}_periph_nj")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EnergyBreakdown:
    """Joules."""

    dram_array: float = 0.0
    dram_peripheral: float = 0.0
    dram_io: float = 0.0
    cpu: float = 0.0

    @property
    def dram(self) -> float:
        return self.dram_array + self.dram_peripheral + self.dram_io

    @property
    def total(self) -> float:
        return self.dram + self.cpu

    def __add__(self, other: "EnergyBreakdown") -> "EnergyBreakdown":
        return EnergyBreakdown(self.dram_array + other.dram_array, self.dram_peripheral + other.dram_peripheral,
                               self.dram_io + other.dram_io, self.cpu + other.cpu)

    def to_dict(self) -> dict:
        return {"dram_array": self.dram_array, "dram_peripheral": self.dram_peripheral,
                "dram_io": self.dram_io, "cpu": self.cpu, "dram": self.dram, "total": self.total}


def _vsq(v: float, prof: PowerProfile) -> float:
    return (v / prof.v_nominal) ** 2


def command_energy(cmd, v_array: float, freq_ratio: float, prof: PowerProfile,
                   v_peripheral: float | None = None) -> tuple[float, float]:
    """(array nJ, peripheral nJ) for one command.

    Peripheral energy only moves when the channel voltage itself is scaled
    (``v_peripheral``); ``freq_ratio`` is validated here and matters for
    background power.
    """
    kind = cmd.kind if isinstance(cmd, Command) else CommandKind(cmd)
    if v_array > prof.v_nominal + 1e-9:
        raise RangeError("v_array above nominal")
    if not 0 < freq_ratio <= 1:
        raise RangeError("freq_ratio must be in (0, 1]")
    vp = prof.v_nominal if v_peripheral is None else v_peripheral
    return prof.array_nj(kind) * _vsq(v_array, prof), prof.periph_nj(kind) * _vsq(vp, prof)


def _bg_array_scale(v_array: float, prof: PowerProfile) -> float:
    if prof.leakage_scaling == "linear":
        return v_array / prof.v_nominal
    return _vsq(v_array, prof)


def background_power_mw(open_fraction: float, v_array: float, prof: PowerProfile,
                        freq_ratio: float = 1.0, v_peripheral: float | None = None) -> tuple[float, float]:
    closed = prof.bg_array_closed_mw * (1.0 - open_fraction)
    opened = prof.bg_array_open_mw * open_fraction
    vp = prof.v_nominal if v_peripheral is None else v_peripheral
    return (closed + opened) * _bg_array_scale(v_array, prof), prof.bg_periph_mw * freq_ratio * _vsq(vp, prof)


def background_energy(elapsed: float, bank_states, v_array: float, prof: PowerProfile,
                      freq_ratio: float = 1.0, v_peripheral: float | None = None) -> tuple[float, float]:
    """(array nJ, peripheral nJ) of standby power over ``elapsed`` ns.

    Array standby power interpolates between the all-closed and all-open
    figures by the fraction of banks with an open row.
    """
    if elapsed < 0:
        raise RangeError("elapsed must be >= 0")
    states = list(bank_states)
    n_open = sum(1 for s in states if isinstance(s, BankState) and s.status is BankStatus.ROW_OPEN)
    frac = n_open / len(states) if states else 0.0
    pa, pp = background_power_mw(frac, v_array, prof, freq_ratio, v_peripheral)
    # mW * ns = pJ
    return pa * elapsed * 1e-3, pp * elapsed * 1e-3


@dataclass(frozen=True)
class OperatingPoint:
    """Voltage/frequency state the energy of an interval is charged at."""

    v_array: float = 1.35
    v_peripheral: float = 1.35
    freq_ratio: float = 1.0


def interval_energy(counts: dict, elapsed_ns: float, open_bank_ns: float, n_banks: int, lines: int,
                    op: OperatingPoint, prof: PowerProfile) -> EnergyBreakdown:
    """DRAM energy of one interval spent at a single operating point.

    ``counts`` maps CommandKind to issued-command counts, ``open_bank_ns``
    is the sum over banks of time spent with an open row.
    """
    arr = per = 0.0
    for kind in KINDS:
        n = counts.get(kind, 0)
        if n:
            a, p = command_energy(kind, op.v_array, op.freq_ratio, prof, op.v_peripheral)
            arr += n * a
            per += n * p
    frac = open_bank_ns / (n_banks * elapsed_ns) if elapsed_ns > 0 else 0.0
    pa, pp = background_power_mw(frac, op.v_array, prof, op.freq_ratio, op.v_peripheral)
    arr += pa * elapsed_ns * 1e-3
    per += pp * elapsed_ns * 1e-3
    io = lines * prof.io_energy_per_line_nj * _vsq(op.v_peripheral, prof)
    return EnergyBreakdown(arr * 1e-9, per * 1e-9, io * 1e-9, 0.0)


def cpu_energy(wall_ns: float, instructions: int, cores: int, prof: PowerProfile) -> float:
    """Joules: static power of every core over the run plus per-instruction energy."""
    return prof.cpu_static_w * cores * wall_ns * 1e-9 + prof.cpu_energy_per_instruction_nj * instructions * 1e-9


def system_energy(sim, prof: PowerProfile) -> EnergyBreakdown:
    """Recompute the full breakdown of a finished run from its epoch records."""
    dram = EnergyBreakdown()
    for rec in sim.epochs:
        dram = dram + interval_energy(rec.command_counts, rec.cycles * sim.clock_ns,
                                      rec.open_bank_cycles * sim.clock_ns, sim.num_banks,
                                      rec.command_counts.get(CommandKind.RD, 0) + rec.command_counts.get(CommandKind.WR, 0),
                                      rec.operating_point, prof)
    cpu = cpu_energy(sim.total_cycles * sim.clock_ns, sum(sim.instructions), len(sim.instructions), prof)
    return EnergyBreakdown(dram.dram_array, dram.dram_peripheral, dram.dram_io, cpu)
