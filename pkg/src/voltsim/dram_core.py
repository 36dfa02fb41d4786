"""DRAM geometry, command set and the per-bank timing state machine.

This module is the reference statement of the timing rules. The fast
simulation engine in :mod:`voltsim.engine` re-implements the same rules over
arrays; tests replay engine command logs through :func:`apply_command` to
keep the two in agreement.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields, replace
from typing import NamedTuple

from .errors import ProtocolError, RangeError, TimingViolation

NEVER = -(10**12)
RETENTION_NS = 64e6


def ns_to_cycles(ns: float, clock_ns: float) -> int:
    """Round a duration up to whole bus cycles.

    The quotient is rounded to 1e-9 first so exact multiples such as
    13.75 / 0.625 do not pick up an extra cycle from float noise.
    """
    if ns <= 0:
        return 0
    return math.ceil(round(ns / clock_ns, 9))


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


@dataclass(frozen=True)
class Geometry:
    channels: int = 1
    ranks_per_channel: int = 1
    banks_per_rank: int = 8
    rows_per_bank: int = 32768
    columns_per_row: int = 128
    cache_line_bytes: int = 64

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise RangeError(f"geometry.{f.name} must be >= 1")
        if not _is_pow2(self.banks_per_rank):
            raise RangeError("geometry.banks_per_rank must be a power of two")
        if not _is_pow2(self.rows_per_bank):
            raise RangeError("geometry.rows_per_bank must be a power of two")

    @property
    def num_banks(self) -> int:
        """Banks in one channel, counted across ranks."""
        return self.ranks_per_channel * self.banks_per_rank

    @property
    def row_bytes(self) -> int:
        return self.columns_per_row * self.cache_line_bytes

    @property
    def capacity_bytes(self) -> int:
        """Addressable bytes of one channel."""
        return self.num_banks * self.rows_per_bank * self.row_bytes

    @property
    def total_rows(self) -> int:
        return self.num_banks * self.rows_per_bank


class DecodedAddress(NamedTuple):
    rank: int
    bank: int
    row: int
    column: int


def decode_address(addr: int, geo: Geometry) -> DecodedAddress:
    """Split a byte address into (rank, bank, row, column).

    Field order from most to least significant is
    row : rank : bank : column : line offset.
    """
    if addr < 0 or addr >= geo.capacity_bytes:
        raise RangeError(f"address {addr:#x} outside capacity {geo.capacity_bytes:#x}")
    x = addr // geo.cache_line_bytes
    x, column = divmod(x, geo.columns_per_row)
    x, bank = divmod(x, geo.banks_per_rank)
    row, rank = divmod(x, geo.ranks_per_channel)
    return DecodedAddress(rank, bank, row, column)


def encode_address(rank: int, bank: int, row: int, column: int, geo: Geometry) -> int:
    """Inverse of :func:`decode_address` (line offset zero)."""
    if not (0 <= rank < geo.ranks_per_channel and 0 <= bank < geo.banks_per_rank
            and 0 <= row < geo.rows_per_bank and 0 <= column < geo.columns_per_row):
        raise RangeError(f"coordinates out of range: {(rank, bank, row, column)}")
    x = (row * geo.ranks_per_channel + rank) * geo.banks_per_rank + bank
    return (x * geo.columns_per_row + column) * geo.cache_line_bytes


@dataclass(frozen=True)
class TimingParams:
    """DRAM timing constraints in nanoseconds."""

    tRCD: float = 13.75
    tRAS: float = 35.0
    tRP: float = 13.75
    tRFC: float = 260.0
    tREFI: float = 7812.5
    tCL: float = 13.75
    tBURST: float = 4.0

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise RangeError(f"timing.{f.name} must be > 0")
        if self.tRAS < self.tRCD:
            raise RangeError("timing.tRAS must be >= timing.tRCD")
        if self.tREFI <= self.tRFC:
            raise RangeError("timing.tREFI must be > timing.tRFC")

    def core(self) -> tuple[float, float, float]:
        """The voltage-sensitive triple (tRCD, tRAS, tRP)."""
        return (self.tRCD, self.tRAS, self.tRP)

    def with_core(self, tRCD: float, tRAS: float, tRP: float) -> "TimingParams":
        return replace(self, tRCD=tRCD, tRAS=tRAS, tRP=tRP)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


NOMINAL_TIMINGS = TimingParams()


@dataclass(frozen=True)
class TimingCycles:
    rcd: int
    ras: int
    rp: int
    rfc: int
    refi: int
    cl: int
    burst: int

    @classmethod
    def from_ns(cls, t: TimingParams, clock_ns: float) -> "TimingCycles":
        return cls(
            rcd=ns_to_cycles(t.tRCD, clock_ns),
            ras=ns_to_cycles(t.tRAS, clock_ns),
            rp=ns_to_cycles(t.tRP, clock_ns),
            rfc=ns_to_cycles(t.tRFC, clock_ns),
            refi=ns_to_cycles(t.tREFI, clock_ns),
            cl=ns_to_cycles(t.tCL, clock_ns),
            burst=ns_to_cycles(t.tBURST, clock_ns),
        )


class BankStatus(enum.Enum):
    PRECHARGED = "Precharged"
    ACTIVATING = "Activating"
    ROW_OPEN = "RowOpen"
    PRECHARGING = "Precharging"
    REFRESHING = "Refreshing"


class CommandKind(enum.Enum):
    ACT = "ACT"
    RD = "RD"
    WR = "WR"
    PRE = "PRE"
    REF = "REF"


@dataclass(frozen=True)
class Command:
    kind: CommandKind
    bank: int
    row: int | None = None
    column: int | None = None

    def __post_init__(self):
        k = self.kind
        if k is CommandKind.ACT and self.row is None:
            raise ProtocolError("ACT must carry a row")
        if k in (CommandKind.RD, CommandKind.WR) and self.column is None:
            raise ProtocolError(f"{k.value} must carry a column")
        if k in (CommandKind.PRE, CommandKind.REF) and (self.row is not None or self.column is not None):
            raise ProtocolError(f"{k.value} carries neither row nor column")


@dataclass(frozen=True)
class BankState:
    """Stored state of one bank.

    Stored statuses are Precharged, RowOpen and Refreshing; the transient
    Activating/Precharging views are reported by :meth:`status_at`.
    """

    status: BankStatus = BankStatus.PRECHARGED
    open_row: int | None = None
    busy_until: int = 0
    last_activate: int = NEVER

    def __post_init__(self):
        if (self.status is BankStatus.ROW_OPEN) != (self.open_row is not None):
            raise ProtocolError("open_row must be set exactly when the row is open")

    def settled(self, cycle: int) -> "BankState":
        """Collapse a finished refresh into Precharged."""
        if self.status is BankStatus.REFRESHING and cycle >= self.busy_until:
            return replace(self, status=BankStatus.PRECHARGED)
        return self

    def status_at(self, cycle: int) -> BankStatus:
        if cycle < self.busy_until:
            if self.status is BankStatus.ROW_OPEN:
                return BankStatus.ACTIVATING
            if self.status is BankStatus.PRECHARGED:
                return BankStatus.PRECHARGING
            return self.status
        return self.settled(cycle).status


_LEGAL = {
    CommandKind.ACT: (BankStatus.PRECHARGED, BankStatus.REFRESHING),
    CommandKind.RD: (BankStatus.ROW_OPEN,),
    CommandKind.WR: (BankStatus.ROW_OPEN,),
    CommandKind.PRE: (BankStatus.ROW_OPEN,),
    CommandKind.REF: (BankStatus.PRECHARGED, BankStatus.REFRESHING),
}


def min_issue_cycle(state: BankState, cmd: Command, t: TimingParams, clock_ns: float, now: int = 0) -> int:
    """Earliest cycle >= ``now`` at which ``cmd`` may issue to this bank.

    ACT and REF wait for a precharge (tRP) or refresh (tRFC) to finish,
    RD/WR wait tRCD after ACT, PRE waits tRAS after ACT.
    """
    if state.status not in _LEGAL[cmd.kind]:
        raise ProtocolError(f"{cmd.kind.value} illegal in state {state.status.value}")
    earliest = max(now, state.busy_until)
    if cmd.kind is CommandKind.PRE:
        earliest = max(earliest, state.last_activate + ns_to_cycles(t.tRAS, clock_ns))
    return earliest


def apply_command(state: BankState, cmd: Command, cycle: int, t: TimingParams, clock_ns: float) -> BankState:
    """Return the bank state after issuing ``cmd`` at ``cycle``."""
    earliest = min_issue_cycle(state, cmd, t, clock_ns, now=cycle)
    if cycle < earliest:
        raise TimingViolation(f"{cmd.kind.value} to bank {cmd.bank} at cycle {cycle}, earliest {earliest}")
    # busy_until can only be in the past here, so max() keeps it monotone
    kind = cmd.kind
    if kind is CommandKind.ACT:
        return BankState(BankStatus.ROW_OPEN, cmd.row, max(state.busy_until, cycle + ns_to_cycles(t.tRCD, clock_ns)), cycle)
    if kind is CommandKind.PRE:
        return BankState(BankStatus.PRECHARGED, None, max(state.busy_until, cycle + ns_to_cycles(t.tRP, clock_ns)), state.last_activate)
    if kind is CommandKind.REF:
        return BankState(BankStatus.REFRESHING, None, max(state.busy_until, cycle + ns_to_cycles(t.tRFC, clock_ns)), state.last_activate)
    return state


def refs_per_window(t: TimingParams) -> int:
    """REF commands the controller issues per retention window."""
    return max(1, round(RETENTION_NS / t.tREFI))


def rows_per_ref(geo: Geometry, t: TimingParams) -> int:
    return max(1, math.ceil(geo.rows_per_bank / refs_per_window(t)))
