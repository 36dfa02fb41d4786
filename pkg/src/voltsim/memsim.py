"""Trace-driven multi-core memory system simulation.

Cores retire one instruction per bus cycle and stall only when the next
request is a read and the core already has ``max_outstanding_reads`` reads
in flight, or when the next request is a write and the write buffer is
full. A single channel is shared through an FR-FCFS controller with
all-bank refresh. The policy is consulted at every epoch boundary.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import engine as E
from .dram_core import (RETENTION_NS, BankState, BankStatus, Command, CommandKind, Geometry,
                        TimingCycles, TimingParams, NOMINAL_TIMINGS, apply_command, min_issue_cycle,
                        refs_per_window)
from .energy import EnergyBreakdown, OperatingPoint, PowerProfile, cpu_energy, interval_energy
from .errors import RangeError, RefreshDeadlineMissed, TimingViolation
from .fault_model import BitModel, BitModelKind, class_error_probability, region_masks
from .policies import EpochObservation, NominalPolicy, Policy, PolicyDecision
from .seeding import child_int_seed
from .voltage_model import VoltageProfile, is_row_reliable

DEFAULT_EPOCH_CYCLES = 4_000_000
# a REF may be postponed by up to eight intervals
REFRESH_POSTPONE_LIMIT = 8


class RequestKind(enum.Enum):
    READ = "R"
    WRITE = "W"


@dataclass(frozen=True)
class MemRequest:
    core: int
    addr: int
    kind: RequestKind
    insn_gap: int

    def __post_init__(self):
        if self.insn_gap < 0:
            raise RangeError("insn_gap must be >= 0")


@dataclass(eq=False)
class Trace:
    """One core's post-LLC request stream, stored column-wise."""

    gaps: np.ndarray
    is_write: np.ndarray
    addrs: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.gaps = np.asarray(self.gaps, dtype=np.int64)
        self.is_write = np.asarray(self.is_write, dtype=bool)
        self.addrs = np.asarray(self.addrs, dtype=np.int64)
        if not (len(self.gaps) == len(self.is_write) == len(self.addrs)):
            raise ValueError("trace columns differ in length")
        if len(self.gaps) and self.gaps.min() < 0:
            raise RangeError("insn_gap must be >= 0")

    @classmethod
    def from_requests(cls, reqs: Sequence[MemRequest], name: str = "") -> "Trace":
        return cls([r.insn_gap for r in reqs], [r.kind is RequestKind.WRITE for r in reqs],
                   [r.addr for r in reqs], name)

    @classmethod
    def empty(cls, name: str = "") -> "Trace":
        return cls(np.zeros(0), np.zeros(0), np.zeros(0), name)

    def __len__(self) -> int:
        return len(self.gaps)

    def requests(self, core: int = 0) -> Iterator[MemRequest]:
        for g, w, a in zip(self.gaps.tolist(), self.is_write.tolist(), self.addrs.tolist()):
            yield MemRequest(core, a, RequestKind.WRITE if w else RequestKind.READ, g)

    @property
    def instructions(self) -> int:
        return int(self.gaps.sum())

    @property
    def mpki(self) -> float:
        n = self.instructions
        return 1000.0 * len(self) / n if n else 0.0

    def equals(self, other: "Trace") -> bool:
        return (np.array_equal(self.gaps, other.gaps) and np.array_equal(self.is_write, other.is_write)
                and np.array_equal(self.addrs, other.addrs))


@dataclass(frozen=True)
class SimConfig:
    geometry: Geometry = Geometry()
    timing: TimingParams = NOMINAL_TIMINGS
    voltage_profile: VoltageProfile | None = None
    power_profile: PowerProfile = PowerProfile()
    clock_ns: float = 0.625
    max_outstanding_reads: int = 4
    write_buffer: int = 32
    page_policy: str = "open"
    epoch_cycles: int = DEFAULT_EPOCH_CYCLES
    refresh: bool = True
    horizon: int | None = None
    temperature: float | None = None
    bit_model: BitModel = BitModel()
    seed: int = 0
    log_commands: int = 0

    def __post_init__(self):
        if self.geometry.channels != 1:
            raise RangeError("only single-channel geometries are simulated")
        if self.page_policy not in ("open", "closed"):
            raise RangeError("page_policy must be 'open' or 'closed'")
        if self.max_outstanding_reads < 1 or self.write_buffer < 1 or self.epoch_cycles < 1:
            raise RangeError("queue sizes and epoch length must be >= 1")

    @property
    def profile(self) -> VoltageProfile:
        if self.voltage_profile is not None:
            return self.voltage_profile
        return VoltageProfile()


@dataclass(frozen=True)
class EpochRecord:
    index: int
    start_cycle: int
    cycles: int
    operating_point: OperatingPoint
    timings: TimingParams
    strong_timings: TimingParams | None
    predicted_loss: float
    command_counts: dict
    open_bank_cycles: int
    bus_busy_cycles: int
    row_hits: int
    row_misses: int
    instructions: tuple[int, ...]
    reads: tuple[int, ...]
    writes: tuple[int, ...]
    energy: EnergyBreakdown

    def observation(self) -> EpochObservation:
        mpki, apki, ipc = [], [], []
        for n, r, w in zip(self.instructions, self.reads, self.writes):
            mpki.append(1000.0 * r / n if n else 0.0)
            apki.append(1000.0 * (r + w) / n if n else 0.0)
            ipc.append(n / self.cycles if self.cycles else 0.0)
        served = self.row_hits + self.row_misses
        return EpochObservation(tuple(mpki), tuple(apki),
                                min(1.0, self.bus_busy_cycles / self.cycles) if self.cycles else 0.0,
                                tuple(ipc), self.row_hits / served if served else 0.0)


@dataclass(frozen=True)
class SimStats:
    total_cycles: int
    clock_ns: float
    num_banks: int
    instructions: tuple[int, ...]
    core_cycles: tuple[int, ...]
    reads: tuple[int, ...]
    writes: tuple[int, ...]
    command_counts: dict
    bus_busy_cycles: int
    row_hits: int
    row_misses: int
    energy: EnergyBreakdown
    corrected_error_count: int
    uncorrected_error_count: int
    epochs: tuple[EpochRecord, ...]
    policy: str
    command_log: np.ndarray | None = field(default=None, repr=False)

    @property
    def ipc(self) -> tuple[float, ...]:
        return tuple(n / c if c else 0.0 for n, c in zip(self.instructions, self.core_cycles))

    @property
    def mpki(self) -> tuple[float, ...]:
        return tuple(1000.0 * (r + w) / n if n else 0.0
                     for n, r, w in zip(self.instructions, self.reads, self.writes))

    @property
    def bandwidth_utilization(self) -> float:
        return min(1.0, self.bus_busy_cycles / self.total_cycles) if self.total_cycles else 0.0

    @property
    def row_hit_rate(self) -> float:
        n = self.row_hits + self.row_misses
        return self.row_hits / n if n else 0.0

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "total_cycles": self.total_cycles,
            "clock_ns": self.clock_ns,
            "cores": [
                {"instructions": n, "cycles": c, "ipc": ipc, "mpki": m, "reads": r, "writes": w}
                for n, c, ipc, m, r, w in zip(self.instructions, self.core_cycles, self.ipc, self.mpki,
                                              self.reads, self.writes)
            ],
            "bandwidth_utilization": self.bandwidth_utilization,
            "row_hit_rate": self.row_hit_rate,
            "command_counts": {k.value: int(v) for k, v in self.command_counts.items()},
            "energy": self.energy.to_dict(),
            "corrected_error_count": self.corrected_error_count,
            "uncorrected_error_count": self.uncorrected_error_count,
            "epochs": len(self.epochs),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def policy_log_rows(self) -> list[dict]:
        rows = []
        for rec in self.epochs:
            obs = rec.observation()
            rows.append({
                "epoch": rec.index,
                "voltage": rec.operating_point.v_array,
                "tRCD": rec.timings.tRCD,
                "tRAS": rec.timings.tRAS,
                "tRP": rec.timings.tRP,
                "predicted_loss": rec.predicted_loss,
                "mpki": max(obs.epoch_mpki) if obs.epoch_mpki else 0.0,
                "bw_util": obs.bandwidth_utilization,
                "tREFI": rec.timings.tREFI,
            })
        return rows


# ----------------------------------------------------------------------------
# reference FR-FCFS scheduler


@dataclass(frozen=True)
class QueuedRequest:
    """A request waiting in the controller, already decoded to a flat bank."""

    seq: int
    core: int
    bank: int
    row: int
    column: int
    is_write: bool = False
    arrival: int = 0


def schedule(queue: Sequence[QueuedRequest], banks: Sequence[BankState], cycle: int, t: TimingParams,
             clock_ns: float, bus_free: int = 0) -> Command | None:
    """FR-FCFS: the oldest issuable row hit, else the oldest issuable request.

    A row miss opens its row (ACT) or closes a conflicting one (PRE); a PRE
    is withheld from a bank while some queued request still hits its open
    row. Age is (arrival, core, seq). Returns ``None`` when nothing can issue
    at ``cycle``.
    """
    cl = TimingCycles.from_ns(t, clock_ns).cl
    order = sorted(queue, key=lambda r: (r.arrival, r.core, r.seq))
    hit_banks = {r.bank for r in order if banks[r.bank].status is BankStatus.ROW_OPEN
                 and banks[r.bank].open_row == r.row}
    for r in order:
        st = banks[r.bank]
        if st.status is BankStatus.ROW_OPEN and st.open_row == r.row:
            cmd = Command(CommandKind.WR if r.is_write else CommandKind.RD, r.bank, column=r.column)
            if max(min_issue_cycle(st, cmd, t, clock_ns, cycle), bus_free - cl) <= cycle:
                return cmd
    for r in order:
        st = banks[r.bank].settled(cycle)
        if st.status is BankStatus.ROW_OPEN:
            if st.open_row == r.row or r.bank in hit_banks:
                continue
            cmd = Command(CommandKind.PRE, r.bank)
        else:
            cmd = Command(CommandKind.ACT, r.bank, row=r.row)
        if min_issue_cycle(st, cmd, t, clock_ns, cycle) <= cycle:
            return cmd
    return None


# ----------------------------------------------------------------------------
# simulation driver


def decode_columns(addrs: np.ndarray, geo: Geometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised decode to (flat bank, row, column)."""
    if len(addrs) and (addrs.min() < 0 or addrs.max() >= geo.capacity_bytes):
        raise RangeError("trace address outside device capacity")
    x = addrs // geo.cache_line_bytes
    col = x % geo.columns_per_row
    x //= geo.columns_per_row
    bank = x % geo.banks_per_rank
    x //= geo.banks_per_rank
    rank = x % geo.ranks_per_channel
    row = x // geo.ranks_per_channel
    return (rank * geo.banks_per_rank + bank).astype(np.int64), row.astype(np.int64), col.astype(np.int64)


_KIND_SLOTS = ((CommandKind.ACT, E.N_ACT), (CommandKind.RD, E.N_RD), (CommandKind.WR, E.N_WR),
               (CommandKind.PRE, E.N_PRE), (CommandKind.REF, E.N_REF))
_LOG_KINDS = (CommandKind.ACT, CommandKind.RD, CommandKind.WR, CommandKind.PRE, CommandKind.REF)


class _Run:
    def __init__(self, traces: Sequence[Trace], cfg: SimConfig, policy: Policy):
        self.cfg = cfg
        self.policy = policy
        geo = cfg.geometry
        self.vp = cfg.profile
        self.n_cores = len(traces)
        gaps, wr, bank, row = [], [], [], []
        bounds = [0]
        for tr in traces:
            b, r, _ = decode_columns(tr.addrs, geo)
            gaps.append(tr.gaps)
            wr.append(tr.is_write.astype(np.int64))
            bank.append(b)
            row.append(r)
            bounds.append(bounds[-1] + len(tr))
        cat = lambda xs: np.ascontiguousarray(np.concatenate(xs) if xs else np.zeros(0), dtype=np.int64)
        self.req_gap, self.req_wr, self.req_bank, self.req_row = cat(gaps), cat(wr), cat(bank), cat(row)
        t = cfg.timing
        self.refi = TimingCycles.from_ns(t, cfg.clock_ns).refi
        self.groups = refs_per_window(t)
        self.ret_limit = math.ceil(RETENTION_NS / cfg.clock_ns) + REFRESH_POSTPONE_LIMIT * self.refi
        (self.S, self.banks, self.cores, self.comp, self.q, self.last_ref,
         self.log) = E.new_state(geo.num_banks, self.n_cores, cfg.max_outstanding_reads, cfg.write_buffer,
                                 self.groups, cfg.log_commands)
        for c in range(self.n_cores):
            lo, hi = bounds[c], bounds[c + 1]
            self.cores[c, E.C_NEXT] = lo
            self.cores[c, E.C_END] = hi
            self.cores[c, E.C_ARRIVE] = self.req_gap[lo] if hi > lo else 0
            if hi == lo:
                self.cores[c, E.C_DONE] = 0
        self.S[E.NEXT_REF_DUE] = self.refi
        weak, _ = region_masks(geo, self.vp)
        self.weak_mask = weak
        # class 0 = weak (or every row without region awareness), class 1 = strong
        self.row_class = np.ascontiguousarray(np.where(weak, 0, 1).astype(np.int8)) if self.vp.weak_regions \
            else np.ones((geo.num_banks, geo.rows_per_bank), dtype=np.int8)
        self.no_err = np.zeros((1, 1), dtype=np.float64)

    def _error_grid(self, d: PolicyDecision, weak_t: TimingParams, strong_t: TimingParams) -> np.ndarray | None:
        v, T = d.v_array, self.cfg.temperature
        if is_row_reliable(v, weak_t, self.vp, True, T) and is_row_reliable(v, strong_t, self.vp, False, T):
            return None
        geo = self.cfg.geometry
        _, weight = region_masks(geo, self.vp)
        pw = class_error_probability(v, weak_t, self.vp, True, T)
        ps = class_error_probability(v, strong_t, self.vp, False, T)
        if not self.vp.weak_regions:
            pw = ps
        grid = np.where(self.weak_mask, pw, ps) * weight
        return np.ascontiguousarray(np.clip(grid, 0.0, 1.0))

    def _params(self, d: PolicyDecision, epoch: int, stop: int) -> tuple:
        cfg = self.cfg
        clk = cfg.clock_ns
        weak_t = d.timings
        region = d.strong_timings is not None
        strong_t = d.strong_timings if region else weak_t
        tw = TimingCycles.from_ns(weak_t, clk)
        ts = TimingCycles.from_ns(strong_t, clk)
        tcls = np.array([[tw.rcd, tw.ras, tw.rp], [ts.rcd, ts.ras, ts.rp]], dtype=np.int64)
        if not region:
            tcls[1] = tcls[0]
        grid = self._error_grid(d, weak_t, strong_t)
        P = np.zeros(E.N_PARAMS, dtype=np.int64)
        P[E.P_CL] = tw.cl
        P[E.P_BURST] = tw.burst
        P[E.P_RFC] = tw.rfc
        P[E.P_REFI] = self.refi
        P[E.P_MAXOUT] = cfg.max_outstanding_reads
        P[E.P_WBUF] = cfg.write_buffer
        P[E.P_DRAIN_HI] = max(1, (cfg.write_buffer * 3) // 4)
        P[E.P_DRAIN_LO] = cfg.write_buffer // 4
        P[E.P_CLOSED] = 1 if cfg.page_policy == "closed" else 0
        P[E.P_REFRESH] = 1 if cfg.refresh else 0
        P[E.P_STOP] = stop
        P[E.P_RUN_TO_STOP] = 1 if cfg.horizon is not None else 0
        P[E.P_ERR] = 0 if grid is None else 1
        P[E.P_BINOMIAL] = 1 if cfg.bit_model.kind is BitModelKind.BINOMIAL else 0
        P[E.P_GROUPS] = self.groups
        P[E.P_RET_LIMIT] = self.ret_limit
        P[E.P_LOG_CAP] = cfg.log_commands
        P[E.P_SEED] = child_int_seed(cfg.seed, epoch)
        P[E.P_REGION] = 1 if region else 0
        return tcls, P, (self.no_err if grid is None else grid), float(cfg.bit_model.p_bit)

    def _snapshot(self):
        return self.S.copy(), self.cores.copy()

    def run(self) -> SimStats:
        cfg = self.cfg
        geo = cfg.geometry
        horizon = cfg.horizon
        decision = self.policy.start()
        records = []
        epoch = 0
        energy = EnergyBreakdown()
        while True:
            start = int(self.S[E.NOW])
            stop = (epoch + 1) * cfg.epoch_cycles
            if horizon is not None:
                stop = min(stop, horizon)
            tcls, P, err, p_bit = self._params(decision, epoch, stop)
            S0, C0 = self._snapshot()
            status = E.run_kernel(self.S, self.banks, self.cores, self.comp, self.q, self.last_ref, self.log,
                                  self.req_gap, self.req_wr, self.req_bank, self.req_row,
                                  tcls, self.row_class, P, err, p_bit)
            if status == E.STATUS_TIMING:
                raise TimingViolation(f"engine timing violation at cycle {self.S[E.VIOL_CYCLE]} bank {self.S[E.VIOL_BANK]}")
            if status == E.STATUS_REFRESH:
                raise RefreshDeadlineMissed(f"refresh group {self.S[E.VIOL_BANK]} missed its deadline at cycle {self.S[E.VIOL_CYCLE]}")
            rec = self._record(epoch, start, decision, S0, C0)
            energy = energy + rec.energy
            records.append(rec)
            now = int(self.S[E.NOW])
            if status == E.STATUS_DONE or (horizon is not None and now >= horizon):
                break
            decision = self.policy.on_epoch(rec.observation())
            epoch += 1
        total = int(self.S[E.NOW])
        if cfg.refresh:
            stale = total - int(self.last_ref.min()) if self.groups else 0
            if stale > self.ret_limit:
                raise RefreshDeadlineMissed(f"refresh group starved for {stale} cycles at end of run")
        instructions = tuple(int(x) for x in self.cores[:, E.C_INSNS])
        core_cycles = []
        for c in range(self.n_cores):
            done = int(self.cores[c, E.C_DONE])
            core_cycles.append(done if done >= 0 else total)
        if horizon is not None:
            core_cycles = [horizon if c > horizon or self.cores[i, E.C_NEXT] < self.cores[i, E.C_END] else c
                           for i, c in enumerate(core_cycles)]
        cpu = cpu_energy(total * cfg.clock_ns, sum(instructions), self.n_cores, cfg.power_profile)
        energy = EnergyBreakdown(energy.dram_array, energy.dram_peripheral, energy.dram_io, cpu)
        counts = {k: int(self.S[slot]) for k, slot in _KIND_SLOTS}
        log = None
        if cfg.log_commands:
            if self.S[E.LOG_OVERFLOW]:
                raise RangeError("command log capacity exceeded")
            log = self.log[: int(self.S[E.LOG_N])].copy()
        return SimStats(
            total_cycles=total, clock_ns=cfg.clock_ns, num_banks=geo.num_banks,
            instructions=instructions, core_cycles=tuple(core_cycles),
            reads=tuple(int(x) for x in self.cores[:, E.C_READS]),
            writes=tuple(int(x) for x in self.cores[:, E.C_WRITES]),
            command_counts=counts, bus_busy_cycles=int(self.S[E.BUS_BUSY]),
            row_hits=int(self.S[E.ROW_HITS]), row_misses=int(self.S[E.ROW_MISSES]),
            energy=energy, corrected_error_count=int(self.S[E.ERR_CORR]),
            uncorrected_error_count=int(self.S[E.ERR_UNCORR]), epochs=tuple(records),
            policy=self.policy.name, command_log=log)

    def _record(self, epoch, start, d: PolicyDecision, S0, C0) -> EpochRecord:
        S, C = self.S, self.cores
        cycles = int(S[E.NOW]) - start
        counts = {k: int(S[slot] - S0[slot]) for k, slot in _KIND_SLOTS}
        op = OperatingPoint(d.v_array, d.v_peripheral, d.freq_ratio)
        open_cycles = int(S[E.OPEN_BANK_CYCLES] - S0[E.OPEN_BANK_CYCLES])
        lines = counts[CommandKind.RD] + counts[CommandKind.WR]
        clk = self.cfg.clock_ns
        en = interval_energy(counts, cycles * clk, open_cycles * clk, self.cfg.geometry.num_banks, lines, op,
                             self.cfg.power_profile)
        return EpochRecord(
            index=epoch, start_cycle=start, cycles=cycles, operating_point=op, timings=d.timings,
            strong_timings=d.strong_timings, predicted_loss=d.predicted_loss, command_counts=counts,
            open_bank_cycles=open_cycles, bus_busy_cycles=int(S[E.BUS_BUSY] - S0[E.BUS_BUSY]),
            row_hits=int(S[E.ROW_HITS] - S0[E.ROW_HITS]), row_misses=int(S[E.ROW_MISSES] - S0[E.ROW_MISSES]),
            instructions=tuple(int(x) for x in C[:, E.C_INSNS] - C0[:, E.C_INSNS]),
            reads=tuple(int(x) for x in C[:, E.C_READS] - C0[:, E.C_READS]),
            writes=tuple(int(x) for x in C[:, E.C_WRITES] - C0[:, E.C_WRITES]),
            energy=en)


def simulate(traces: Sequence[Trace], cfg: SimConfig | None = None, policy: Policy | None = None) -> SimStats:
    """Run ``traces`` (one per core) to completion, or to ``cfg.horizon`` cycles."""
    cfg = cfg or SimConfig()
    if not traces:
        raise RangeError("at least one trace is required")
    policy = policy or NominalPolicy(cfg.profile, clock_ns=cfg.clock_ns, temperature=cfg.temperature)
    return _Run(traces, cfg, policy).run()


def weighted_speedup(shared: Sequence[float], alone: Sequence[float]) -> float:
    if len(shared) != len(alone):
        raise RangeError("shared and alone IPC lists differ in length")
    if any(a <= 0 for a in alone):
        raise RangeError("alone IPC must be > 0")
    return math.fsum(s / a for s, a in zip(shared, alone))


def replay_command_log(log: np.ndarray, geo: Geometry, t: TimingParams, clock_ns: float) -> int:
    """Re-issue an engine command log through the reference bank state machine.

    Raises on the first protocol or timing violation; returns the number of
    commands checked. Valid for runs with fixed, uniform timings.
    """
    banks = [BankState() for _ in range(geo.num_banks)]
    for cycle, kind_code, bank, row in log.tolist():
        kind = _LOG_KINDS[kind_code]
        if kind is CommandKind.REF:
            cmd = Command(CommandKind.REF, 0)
            banks = [apply_command(b.settled(cycle), cmd, cycle, t, clock_ns) for b in banks]
            continue
        st = banks[bank].settled(cycle)
        if kind is CommandKind.ACT:
            cmd = Command(kind, bank, row=row)
        elif kind is CommandKind.PRE:
            cmd = Command(kind, bank)
        else:
            if st.open_row != row:
                raise TimingViolation(f"column command to row {row} but row {st.open_row} is open")
            cmd = Command(kind, bank, column=0)
        banks[bank] = apply_command(st, cmd, cycle, t, clock_ns)
    return len(log)
