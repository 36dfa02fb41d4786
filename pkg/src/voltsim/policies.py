"""Epoch-level voltage control policies.

``VoltronPolicy`` lowers only the array voltage, programming the matching
timing-table entry, and picks the lowest voltage whose predicted slowdown
stays within the target. ``MemDVFSPolicy`` is the frequency/voltage
scaling baseline gated by bandwidth utilization.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

from .dram_core import TimingParams, ns_to_cycles
from .errors import FitError, RangeError
from .fault_model import class_error_probability
from .voltage_model import VoltageProfile, scaled_timings

MEMORY_INTENSIVE_MPKI = 15.0


class WorkloadClass(enum.Enum):
    MEMORY_INTENSIVE = "MemoryIntensive"
    NON_MEMORY_INTENSIVE = "NonMemoryIntensive"


def classify(mpki: float) -> WorkloadClass:
    if mpki < 0:
        raise RangeError("mpki must be >= 0")
    return WorkloadClass.MEMORY_INTENSIVE if mpki >= MEMORY_INTENSIVE_MPKI else WorkloadClass.NON_MEMORY_INTENSIVE


@dataclass(frozen=True)
class EpochObservation:
    """Per-epoch counters a policy sees.

    ``epoch_mpki`` counts demand reads, ``epoch_apki`` all memory accesses
    (reads and write-backs), both per kilo-instruction and per core.
    """

    epoch_mpki: tuple[float, ...]
    epoch_apki: tuple[float, ...]
    bandwidth_utilization: float
    epoch_ipc: tuple[float, ...]
    row_hit_rate: float = 0.0

    def __post_init__(self):
        vals = [*self.epoch_mpki, *self.epoch_apki, *self.epoch_ipc, self.bandwidth_utilization, self.row_hit_rate]
        if any(x < 0 for x in vals):
            raise RangeError("epoch observation fields must be >= 0")


@dataclass(frozen=True)
class LossModel:
    """Linear slowdown predictor, optionally piecewise over added latency.

    With ``breakpoints`` (b1 < b2 < ...), ``betas[j]`` applies to added
    latencies in [b_j, b_{j+1}); ``beta`` alone is the single-segment form.
    """

    beta: float = 0.0
    breakpoints: tuple[float, ...] = ()
    betas: tuple[float, ...] = ()

    def __post_init__(self):
        if self.beta < 0 or any(b < 0 for b in self.betas):
            raise RangeError("loss model beta must be >= 0")
        if self.breakpoints:
            if len(self.betas) != len(self.breakpoints) + 1:
                raise RangeError("piecewise loss model needs len(betas) == len(breakpoints) + 1")
            if list(self.breakpoints) != sorted(set(self.breakpoints)):
                raise RangeError("loss model breakpoints must be strictly increasing")

    def beta_for(self, delta_l: float) -> float:
        if not self.breakpoints:
            return self.beta
        j = 0
        while j < len(self.breakpoints) and delta_l >= self.breakpoints[j]:
            j += 1
        return self.betas[j]

    def to_dict(self) -> dict:
        return {"beta": self.beta, "breakpoints": list(self.breakpoints), "betas": list(self.betas)}

    @classmethod
    def from_dict(cls, d: dict) -> "LossModel":
        return cls(float(d.get("beta", 0.0)), tuple(d.get("breakpoints", ())), tuple(d.get("betas", ())))


@dataclass(frozen=True)
class LossModelSet:
    """One loss model per workload class, chosen by each core's MPKI."""

    memory_intensive: LossModel
    non_memory_intensive: LossModel

    def for_mpki(self, mpki: float) -> LossModel:
        if classify(mpki) is WorkloadClass.MEMORY_INTENSIVE:
            return self.memory_intensive
        return self.non_memory_intensive

    def to_dict(self) -> dict:
        return {"memory_intensive": self.memory_intensive.to_dict(),
                "non_memory_intensive": self.non_memory_intensive.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "LossModelSet":
        return cls(LossModel.from_dict(d["memory_intensive"]), LossModel.from_dict(d["non_memory_intensive"]))


def added_latency_cycles(v: float, vp: VoltageProfile, clock_ns: float, row_hit_rate: float,
                         temperature: float | None = None) -> float:
    """Extra cycles per access at ``v`` relative to nominal timings.

    Row hits pay nothing; every miss is charged a precharge and an
    activation at the longer latencies.
    """
    t = scaled_timings(v, vp, temperature)
    n = vp.nominal_timings
    d_rcd = ns_to_cycles(t.tRCD, clock_ns) - ns_to_cycles(n.tRCD, clock_ns)
    d_rp = ns_to_cycles(t.tRP, clock_ns) - ns_to_cycles(n.tRP, clock_ns)
    return (1.0 - row_hit_rate) * (d_rcd + d_rp)


def loss_from_parts(apki: float, delta_l: float, cpi: float, m: LossModel) -> float:
    if apki <= 0 or delta_l <= 0:
        return 0.0
    return min(1.0, max(0.0, m.beta_for(delta_l) * (apki / 1000.0) * delta_l / cpi))


def predict_loss(obs: EpochObservation, v: float, m, vp: VoltageProfile, clock_ns: float,
                 temperature: float | None = None) -> float:
    """Predicted fractional slowdown at ``v``; the worst core decides."""
    dl = added_latency_cycles(v, vp, clock_ns, obs.row_hit_rate, temperature)
    worst = 0.0
    for mpki, apki, ipc in zip(obs.epoch_mpki, obs.epoch_apki, obs.epoch_ipc):
        if ipc <= 0:
            continue
        model = m.for_mpki(mpki) if isinstance(m, LossModelSet) else m
        worst = max(worst, loss_from_parts(apki, dl, 1.0 / ipc, model))
    return worst


@dataclass(frozen=True)
class TrainingPoint:
    apki: float
    cpi: float
    delta_l: float
    loss: float

    @property
    def x(self) -> float:
        return (self.apki / 1000.0) * self.delta_l / self.cpi


@dataclass(frozen=True)
class LossFit:
    model: LossModel
    rss: float
    rmse: float
    n: int


def _fit_through_origin(pts) -> tuple[float, float]:
    sxx = math.fsum(p.x * p.x for p in pts)
    if sxx == 0:
        raise FitError("all training inputs are zero")
    beta = max(0.0, math.fsum(p.x * p.loss for p in pts) / sxx)
    rss = math.fsum((p.loss - beta * p.x) ** 2 for p in pts)
    return beta, rss


def fit_loss_model(training: Sequence[TrainingPoint], breakpoints: Sequence[float] = ()) -> LossFit:
    """Least-squares fit of loss = beta * (APKI/1000) * dL / CPI through the origin."""
    pts = list(training)
    if len(pts) < 2 or len({p.delta_l for p in pts}) < 2:
        raise FitError("need at least two training points with distinct added latency")
    if not breakpoints:
        beta, rss = _fit_through_origin(pts)
        model = LossModel(beta)
    else:
        edges = sorted(breakpoints)
        segments: list[list[TrainingPoint]] = [[] for _ in range(len(edges) + 1)]
        for p in pts:
            segments[sum(1 for e in edges if p.delta_l >= e)].append(p)
        betas = []
        rss = 0.0
        for seg in segments:
            if not seg:
                raise FitError("a piecewise segment has no training points")
            b, r = _fit_through_origin(seg)
            betas.append(b)
            rss += r
        model = LossModel(max(betas), tuple(edges), tuple(betas))
    return LossFit(model, rss, math.sqrt(rss / len(pts)), len(pts))


def training_point(obs: EpochObservation, v: float, measured_loss: float, vp: VoltageProfile,
                   clock_ns: float, temperature: float | None = None) -> TrainingPoint:
    """Collapse an observation into one training sample.

    The core with the largest APKI/CPI is used, matching the worst-core
    aggregation of :func:`predict_loss`.
    """
    cores = [(a * i, a, 1.0 / i) for a, i in zip(obs.epoch_apki, obs.epoch_ipc) if i > 0]
    if not cores:
        raise FitError("observation has no executing core")
    _, apki, cpi = max(cores)
    return TrainingPoint(apki, cpi, added_latency_cycles(v, vp, clock_ns, obs.row_hit_rate, temperature), measured_loss)


class VoltageChoice(NamedTuple):
    v: float
    timings: TimingParams
    predicted_loss: float


def select_voltage(obs: EpochObservation, m, vp: VoltageProfile, target_loss: float, clock_ns: float = 0.625,
                   temperature: float | None = None) -> VoltageChoice:
    """Lowest grid voltage whose predicted loss stays within ``target_loss``."""
    if not 0 <= target_loss <= 1:
        raise RangeError("target_loss must be in [0, 1]")
    for v in vp.grid:
        loss = predict_loss(obs, v, m, vp, clock_ns, temperature)
        if loss <= target_loss:
            return VoltageChoice(v, scaled_timings(v, vp, temperature), loss)
    v = vp.grid[-1]
    return VoltageChoice(v, scaled_timings(v, vp, temperature), 0.0)


class RegionTimings(NamedTuple):
    weak: TimingParams
    strong: TimingParams


def region_aware_timings(v: float, vp: VoltageProfile, temperature: float | None = None) -> RegionTimings:
    """Timings for rows inside weak regions and for all other rows.

    Weak rows keep the table entry for ``v``. Other rows get the most
    aggressive table entry (highest voltage v' on the grid) under which the
    model gives them zero error probability at ``v``.
    """
    weak = scaled_timings(v, vp, temperature)
    for v2 in reversed(vp.grid):
        if v2 < v:
            break
        cand = scaled_timings(v2, vp, temperature)
        if class_error_probability(v, cand, vp, False, temperature) == 0.0:
            return RegionTimings(weak, cand)
    return RegionTimings(weak, weak)


@dataclass(frozen=True)
class PolicyDecision:
    v_array: float
    timings: TimingParams
    v_peripheral: float = 1.35
    freq_ratio: float = 1.0
    strong_timings: TimingParams | None = None
    predicted_loss: float = 0.0


class PolicyKind(enum.Enum):
    VOLTRON = "Voltron"
    VOLTRON_REGION_AWARE = "VoltronRegionAware"
    MEMDVFS = "MemDVFS"
    STATIC = "StaticV"
    NOMINAL = "Nominal"


@dataclass(frozen=True)
class FrequencyRung:
    mts: float
    voltage: float


DEFAULT_LADDER = (FrequencyRung(1333, 1.35), FrequencyRung(1066, 1.25), FrequencyRung(800, 1.15))


@dataclass(frozen=True)
class PolicyHandle:
    kind: PolicyKind = PolicyKind.NOMINAL
    target_loss: float = 0.05
    static_voltage: float | None = None
    static_timings: TimingParams | None = None
    bw_threshold: float = 0.5
    ladder: tuple[FrequencyRung, ...] = DEFAULT_LADDER

    def __post_init__(self):
        if not 0 <= self.target_loss <= 1:
            raise RangeError("target_loss must be in [0, 1]")
        if self.kind is PolicyKind.STATIC and self.static_voltage is None:
            raise RangeError("StaticV policy needs a voltage")

    @property
    def label(self) -> str:
        if self.kind is PolicyKind.STATIC:
            return f"StaticV({self.static_voltage:.2f})"
        return self.kind.value


class Policy:
    """Base policy: nominal voltage and timings forever."""

    name = "Nominal"

    def __init__(self, vp: VoltageProfile, clock_ns: float = 0.625, temperature: float | None = None):
        self.vp = vp
        self.clock_ns = clock_ns
        self.temperature = temperature

    def _decision(self, v: float, timings: TimingParams | None = None, **kw) -> PolicyDecision:
        t = timings or scaled_timings(v, self.vp, self.temperature)
        return PolicyDecision(v, t, v_peripheral=self.vp.v_nominal, **kw)

    def start(self) -> PolicyDecision:
        return self._decision(self.vp.v_nominal)

    def on_epoch(self, obs: EpochObservation) -> PolicyDecision:
        return self.start()


class NominalPolicy(Policy):
    pass


class StaticVoltagePolicy(Policy):
    """Fixed array voltage; timings default to the table entry but may be forced."""

    def __init__(self, vp, v: float, timings: TimingParams | None = None, **kw):
        super().__init__(vp, **kw)
        self.v = v
        self.timings = timings
        self.name = f"StaticV({v:.2f})"

    def start(self) -> PolicyDecision:
        return self._decision(self.v, self.timings)

    def on_epoch(self, obs):
        return self.start()


class VoltronPolicy(Policy):
    name = "Voltron"

    def __init__(self, vp, models, target_loss: float = 0.05, region_aware: bool = False, **kw):
        super().__init__(vp, **kw)
        self.models = models
        self.target_loss = target_loss
        self.region_aware = region_aware
        if region_aware:
            self.name = "VoltronRegionAware"

    def _apply(self, v: float, predicted: float) -> PolicyDecision:
        if self.region_aware:
            rt = region_aware_timings(v, self.vp, self.temperature)
            return self._decision(v, rt.weak, strong_timings=rt.strong, predicted_loss=predicted)
        return self._decision(v, predicted_loss=predicted)

    def start(self) -> PolicyDecision:
        # no history yet: stay at nominal
        return self._apply(self.vp.v_nominal, 0.0)

    def on_epoch(self, obs: EpochObservation) -> PolicyDecision:
        choice = select_voltage(obs, self.models, self.vp, self.target_loss, self.clock_ns, self.temperature)
        return self._apply(choice.v, choice.predicted_loss)


def voltron_epoch(obs: EpochObservation, policy: VoltronPolicy) -> PolicyDecision:
    return policy.on_epoch(obs)


def memdvfs_step(utilization: float, rung: int, ladder: Sequence[FrequencyRung], threshold: float) -> int:
    """Next ladder index (0 = fastest) given the utilization measured at ``rung``."""
    if utilization >= threshold:
        return 0
    target = rung
    for j in range(rung, len(ladder)):
        modeled = utilization * ladder[rung].mts / ladder[j].mts
        if modeled < threshold:
            target = j
        else:
            break
    return min(rung + 1, target) if target > rung else target


class MemDVFSPolicy(Policy):
    """Channel frequency/voltage scaling gated by bandwidth utilization.

    Both array and peripheral voltage follow the rung; the burst time grows
    with the slower clock and the array runs the timing-table entry of the
    rung voltage.
    """

    name = "MemDVFS"

    def __init__(self, vp, ladder: Sequence[FrequencyRung] = DEFAULT_LADDER, threshold: float = 0.5, **kw):
        super().__init__(vp, **kw)
        self.ladder = tuple(ladder)
        self.threshold = threshold
        self.rung = 0

    def _rung_decision(self) -> PolicyDecision:
        r = self.ladder[self.rung]
        ratio = r.mts / self.ladder[0].mts
        t = scaled_timings(r.voltage, self.vp, self.temperature)
        t = replace(t, tBURST=t.tBURST / ratio)
        return PolicyDecision(r.voltage, t, v_peripheral=r.voltage, freq_ratio=ratio)

    def start(self) -> PolicyDecision:
        self.rung = 0
        return self._rung_decision()

    def on_epoch(self, obs: EpochObservation) -> PolicyDecision:
        self.rung = memdvfs_step(obs.bandwidth_utilization, self.rung, self.ladder, self.threshold)
        return self._rung_decision()


def memdvfs_epoch(obs: EpochObservation, policy: MemDVFSPolicy) -> tuple[FrequencyRung, float]:
    d = policy.on_epoch(obs)
    return policy.ladder[policy.rung], d.v_array


def make_policy(handle: PolicyHandle, vp: VoltageProfile, models=None, clock_ns: float = 0.625,
                temperature: float | None = None) -> Policy:
    kw = dict(clock_ns=clock_ns, temperature=temperature)
    k = handle.kind
    if k is PolicyKind.NOMINAL:
        return NominalPolicy(vp, **kw)
    if k is PolicyKind.STATIC:
        return StaticVoltagePolicy(vp, handle.static_voltage, handle.static_timings, **kw)
    if k is PolicyKind.MEMDVFS:
        return MemDVFSPolicy(vp, handle.ladder, handle.bw_threshold, **kw)
    if models is None:
        raise RangeError("Voltron needs a loss model")
    return VoltronPolicy(vp, models, handle.target_loss, k is PolicyKind.VOLTRON_REGION_AWARE, **kw)
