"""YAML experiment configuration.

A config is a nested mapping. Every section has defaults, so an empty file
is valid. ``load_config`` merges the file over the defaults, applies
``a.b.c=value`` overrides, and validates everything before any run starts.
Errors name the offending key. ``to_tree`` serialises a validated config
back to plain data so that parse, serialise, parse is the identity.
"""
from __future__ import annotations

import copy
import os
import re
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import yaml

from .dram_core import Geometry, TimingParams
from .energy import PowerProfile
from .errors import ConfigError
from .fault_model import BitModel
from .memsim import DEFAULT_EPOCH_CYCLES, SimConfig
from .policies import DEFAULT_LADDER, FrequencyRung, LossModelSet, PolicyHandle, PolicyKind
from .presets import DEFAULT_LOSS_MODELS, vendor_profile
from .voltage_model import ErrorOnsetParams, OnsetShape, VoltageProfile, WeakRegion
from .workload import SynthParams

ENV_VAR = "VOLTSIM_CONFIG"


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a dot, such as 1e-5."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def _load_yaml(text: str):
    return yaml.load(text, Loader=_Loader)

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "output": "out",
    "epoch_cycles": DEFAULT_EPOCH_CYCLES,
    "target_loss": 0.05,
    "temperature": None,
    "clock_ns": 0.625,
    "geometry": {f.name: f.default for f in fields(Geometry)},
    "timing": TimingParams().to_dict(),
    "voltage_profile": {"preset": "B"},
    "power_profile": PowerProfile().to_dict(),
    "policy": {"kind": "Nominal"},
    "loss_models": DEFAULT_LOSS_MODELS.to_dict(),
    "sim": {
        "max_outstanding_reads": 4,
        "write_buffer": 32,
        "page_policy": "open",
        "refresh": True,
        "horizon": None,
        "bit_model": {"kind": "SingleFlip"},
    },
    "workloads": [],
    "workload_suite": None,
    "sweep": {"voltages": None, "timings": {"tRCD": 10.0, "tRAS": 35.0, "tRP": 10.0}, "lines": 1_000_000,
              "vendors": None, "energy_instructions": 200_000},
    "compare": {"policies": ["Nominal", "MemDVFS", "Voltron"]},
    "errmap": {"voltage": None, "timings": None, "trials": 1_000_000},
    "fit": {"voltages": None, "breakpoints": []},
}


@dataclass(frozen=True)
class TraceSource:
    path: str | None = None
    synth: SynthParams | None = None

    def to_tree(self) -> dict:
        return {"path": self.path} if self.path is not None else {"synth": self.synth.to_dict()}


@dataclass(frozen=True)
class WorkloadSpec:
    name: str
    traces: tuple[TraceSource, ...]

    def to_tree(self) -> dict:
        return {"name": self.name, "traces": [t.to_tree() for t in self.traces]}


@dataclass(frozen=True)
class SweepOptions:
    voltages: tuple[float, ...] | None
    timings: tuple[float, float, float] | None  # None means the compensated table entry at each voltage
    lines: int
    vendors: tuple[str, ...] | None
    energy_instructions: int


@dataclass(frozen=True)
class ErrmapOptions:
    voltage: float | None
    timings: tuple[float, float, float] | None
    trials: int


@dataclass(frozen=True)
class FitOptions:
    voltages: tuple[float, ...] | None
    breakpoints: tuple[float, ...]


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    output: str
    epoch_cycles: int
    target_loss: float
    temperature: float | None
    clock_ns: float
    geometry: Geometry
    timing: TimingParams
    voltage_profile: VoltageProfile
    power_profile: PowerProfile
    policy: PolicyHandle
    loss_models: LossModelSet
    max_outstanding_reads: int
    write_buffer: int
    page_policy: str
    refresh: bool
    horizon: int | None
    bit_model: BitModel
    workloads: tuple[WorkloadSpec, ...]
    sweep: SweepOptions
    compare_policies: tuple[PolicyHandle, ...]
    errmap: ErrmapOptions
    fit: FitOptions

    def sim_config(self, **kw) -> SimConfig:
        base = dict(geometry=self.geometry, timing=self.timing, voltage_profile=self.voltage_profile,
                    power_profile=self.power_profile, clock_ns=self.clock_ns,
                    max_outstanding_reads=self.max_outstanding_reads, write_buffer=self.write_buffer,
                    page_policy=self.page_policy, epoch_cycles=self.epoch_cycles, refresh=self.refresh,
                    horizon=self.horizon, temperature=self.temperature, bit_model=self.bit_model, seed=self.seed)
        base.update(kw)
        return SimConfig(**base)

    def to_tree(self) -> dict:
        return to_tree(self)


# ----------------------------------------------------------------------------
# tree helpers


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "voltage_profile":
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(tree: dict, spec: str) -> dict:
    """Apply one ``dotted.key=value`` override; the value is parsed as YAML."""
    if "=" not in spec:
        raise ConfigError(spec, "override must look like key.path=value")
    key, raw = spec.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(key, "empty path component")
    try:
        value = _load_yaml(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(key, f"cannot parse value: {exc}") from None
    out = copy.deepcopy(tree)
    node = out
    for i, p in enumerate(parts[:-1]):
        nxt = node.get(p)
        if nxt is None:
            nxt = node[p] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(".".join(parts[: i + 1]), "is not a section")
        node = nxt
    node[parts[-1]] = value
    return out


def _section(tree: dict, key: str) -> dict:
    val = tree.get(key)
    if val is None:
        return {}
    if not isinstance(val, dict):
        raise ConfigError(key, "must be a mapping")
    return val


def _check_keys(d: dict, allowed, prefix: str) -> None:
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{prefix}.{k}" if prefix else k, "unknown key")


def _build(key: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(key, str(exc)) from None


def _num(d: dict, key: str, prefix: str, kind=float, allow_none=False):
    v = d.get(key)
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{prefix}.{key}" if prefix else key, f"expected a number, got {v!r}")
    if kind is int:
        if float(v) != int(v):
            raise ConfigError(f"{prefix}.{key}" if prefix else key, f"expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _typed_dataclass(cls, d: dict, prefix: str):
    _check_keys(d, {f.name for f in fields(cls)}, prefix)
    kw = {}
    for f in fields(cls):
        if f.name not in d:
            continue
        v = d[f.name]
        if isinstance(f.default, bool):
            if not isinstance(v, bool):
                raise ConfigError(f"{prefix}.{f.name}", f"expected true/false, got {v!r}")
            kw[f.name] = v
        elif isinstance(f.default, int):
            kw[f.name] = _num(d, f.name, prefix, int)
        elif isinstance(f.default, float):
            kw[f.name] = _num(d, f.name, prefix, float)
        else:
            kw[f.name] = v
    return _build(prefix, cls, **kw)


def _triple(v, key: str) -> tuple[float, float, float]:
    if isinstance(v, dict):
        _check_keys(v, {"tRCD", "tRAS", "tRP"}, key)
        try:
            return (float(v["tRCD"]), float(v["tRAS"]), float(v["tRP"]))
        except KeyError as exc:
            raise ConfigError(f"{key}.{exc.args[0]}", "missing") from None
    if isinstance(v, (list, tuple)) and len(v) == 3:
        return tuple(float(x) for x in v)
    raise ConfigError(key, "expected {tRCD, tRAS, tRP}")


def _volt_list(v, key: str) -> tuple[float, ...] | None:
    if v is None:
        return None
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError(key, "expected a non-empty list of voltages")
    return tuple(round(float(x), 6) for x in v)


# ----------------------------------------------------------------------------
# sections


_PROFILE_KEYS = {"preset", "vendor_label", "v_nominal", "v_min", "v_floor", "v_step", "timing_anchors",
                 "error_onset", "weak_regions", "temp_latency_factor", "temp_reference",
                 "vmin_reference_timings", "strong_margin_ratio"}


def _profile(d: dict, timing: TimingParams) -> VoltageProfile:
    key = "voltage_profile"
    _check_keys(d, _PROFILE_KEYS, key)
    base = _build(f"{key}.preset", vendor_profile, d["preset"]) if d.get("preset") is not None else VoltageProfile()
    kw: dict[str, Any] = {}
    for name in ("v_nominal", "v_min", "v_floor", "v_step", "temp_latency_factor", "temp_reference",
                 "strong_margin_ratio"):
        kw[name] = _num(d, name, key) if name in d else getattr(base, name)
    kw["vendor_label"] = str(d.get("vendor_label", base.vendor_label))
    if "timing_anchors" in d:
        anchors = d["timing_anchors"]
        if not isinstance(anchors, list) or not anchors:
            raise ConfigError(f"{key}.timing_anchors", "expected a list of {v, tRCD, tRAS, tRP}")
        kw["timing_anchors"] = []
        for i, a in enumerate(anchors):
            k = f"{key}.timing_anchors[{i}]"
            if not isinstance(a, dict) or "v" not in a:
                raise ConfigError(k, "expected {v, tRCD, tRAS, tRP}")
            core = _triple({x: a[x] for x in a if x != "v"}, k)
            kw["timing_anchors"].append((float(a["v"]), _build(k, timing.with_core, *core)))
    else:
        kw["timing_anchors"] = [(v, timing.with_core(*t.core())) for v, t in base.timing_anchors]
    nominal = dict((round(v, 6), t) for v, t in kw["timing_anchors"]).get(round(kw["v_nominal"], 6))
    if nominal is not None and nominal.core() != timing.core():
        raise ConfigError(f"{key}.timing_anchors", "the anchor at v_nominal must equal timing.tRCD/tRAS/tRP")
    if "error_onset" in d:
        eo = dict(d["error_onset"] or {})
        _check_keys(eo, {"p0", "k", "shape", "pattern_scale"}, f"{key}.error_onset")
        shape = _build(f"{key}.error_onset.shape", OnsetShape, eo.pop("shape", base.error_onset.shape.value))
        kw["error_onset"] = _build(f"{key}.error_onset", ErrorOnsetParams,
                                   p0=float(eo.get("p0", base.error_onset.p0)),
                                   k=float(eo.get("k", base.error_onset.k)), shape=shape,
                                   pattern_scale=float(eo.get("pattern_scale", base.error_onset.pattern_scale)))
    else:
        kw["error_onset"] = base.error_onset
    if "weak_regions" in d:
        regs = d["weak_regions"] or []
        if not isinstance(regs, list):
            raise ConfigError(f"{key}.weak_regions", "expected a list")
        kw["weak_regions"] = tuple(
            _typed_dataclass(WeakRegion, r, f"{key}.weak_regions[{i}]") if isinstance(r, dict)
            else _build(f"{key}.weak_regions[{i}]", WeakRegion, *r)
            for i, r in enumerate(regs))
    else:
        kw["weak_regions"] = base.weak_regions
    if "vmin_reference_timings" in d:
        core = _triple(d["vmin_reference_timings"], f"{key}.vmin_reference_timings")
        kw["vmin_reference_timings"] = _build(f"{key}.vmin_reference_timings", timing.with_core, *core)
    else:
        kw["vmin_reference_timings"] = timing.with_core(*base.vmin_reference_timings.core())
    return _build(key, VoltageProfile, **kw)


def _policy(d, key: str, target_loss: float) -> PolicyHandle:
    if isinstance(d, str):
        d = {"kind": d}
    if not isinstance(d, dict):
        raise ConfigError(key, "expected a policy name or mapping")
    _check_keys(d, {"kind", "static_voltage", "static_timings", "bw_threshold", "ladder", "target_loss"}, key)
    kind = _build(f"{key}.kind", PolicyKind, d.get("kind", "Nominal"))
    st = d.get("static_timings")
    static_t = _build(f"{key}.static_timings", TimingParams().with_core, *_triple(st, f"{key}.static_timings")) \
        if st is not None else None
    ladder = DEFAULT_LADDER
    if d.get("ladder") is not None:
        try:
            ladder = tuple(FrequencyRung(float(m), float(v)) for m, v in d["ladder"])
        except (TypeError, ValueError):
            raise ConfigError(f"{key}.ladder", "expected a list of [MT/s, volts] pairs") from None
        if not ladder or any(a.mts <= b.mts for a, b in zip(ladder, ladder[1:])):
            raise ConfigError(f"{key}.ladder", "rungs must be listed fastest first")
    tl = _num(d, "target_loss", key) if "target_loss" in d else target_loss
    return _build(key, PolicyHandle, kind=kind, target_loss=tl,
                  static_voltage=_num(d, "static_voltage", key, allow_none=True),
                  static_timings=static_t, bw_threshold=_num(d, "bw_threshold", key) if "bw_threshold" in d else 0.5,
                  ladder=ladder)


def _policy_tree(h: PolicyHandle, target_loss: float) -> dict:
    out: dict[str, Any] = {"kind": h.kind.value}
    if h.target_loss != target_loss:
        out["target_loss"] = h.target_loss
    if h.static_voltage is not None:
        out["static_voltage"] = h.static_voltage
    if h.static_timings is not None:
        out["static_timings"] = dict(zip(("tRCD", "tRAS", "tRP"), h.static_timings.core()))
    if h.bw_threshold != 0.5:
        out["bw_threshold"] = h.bw_threshold
    if h.ladder != DEFAULT_LADDER:
        out["ladder"] = [[r.mts, r.voltage] for r in h.ladder]
    return out


def _workloads(items, base_dir: Path | None) -> tuple[WorkloadSpec, ...]:
    if items is None:
        return ()
    if not isinstance(items, list):
        raise ConfigError("workloads", "expected a list")
    out = []
    names = set()
    for i, w in enumerate(items):
        key = f"workloads[{i}]"
        if not isinstance(w, dict):
            raise ConfigError(key, "expected {name, traces}")
        _check_keys(w, {"name", "traces"}, key)
        name = str(w.get("name", f"w{i:02d}"))
        if name in names:
            raise ConfigError(f"{key}.name", f"duplicate workload name {name!r}")
        names.add(name)
        traces = w.get("traces")
        if not isinstance(traces, list) or not traces:
            raise ConfigError(f"{key}.traces", "expected a non-empty list")
        srcs = []
        for j, t in enumerate(traces):
            tk = f"{key}.traces[{j}]"
            if isinstance(t, dict) and "path" in t:
                _check_keys(t, {"path"}, tk)
                p = Path(str(t["path"]))
                if not p.is_absolute() and base_dir is not None:
                    p = base_dir / p
                if not p.exists():
                    raise ConfigError(f"{tk}.path", f"trace file {str(p)!r} does not exist")
                srcs.append(TraceSource(path=str(p)))
            elif isinstance(t, dict) and "synth" in t:
                _check_keys(t, {"synth"}, tk)
                srcs.append(TraceSource(synth=_typed_dataclass(SynthParams, t["synth"] or {}, f"{tk}.synth")))
            else:
                raise ConfigError(tk, "expected {path: ...} or {synth: {...}}")
        out.append(WorkloadSpec(name, tuple(srcs)))
    return tuple(out)


def synthetic_suite(count: int = 20, mpki_min: float = 1.0, mpki_max: float = 40.0, cores: int = 4,
                    instructions: int = 10_000_000, row_buffer_hit_rate: float = 0.5, read_fraction: float = 0.7,
                    seed: int = 0) -> list[dict]:
    """Workload tree entries whose mean MPKI is spaced geometrically over [mpki_min, mpki_max]."""
    out = []
    for i in range(count):
        frac = i / (count - 1) if count > 1 else 0.0
        mean = mpki_min * (mpki_max / mpki_min) ** frac
        traces = []
        for c in range(cores):
            # spread the per-core intensity +-20% around the mix mean
            scale = 0.8 + 0.4 * c / (cores - 1) if cores > 1 else 1.0
            traces.append({"synth": {"target_mpki": round(mean * scale, 4),
                                     "row_buffer_hit_rate": row_buffer_hit_rate, "bank_spread": 8,
                                     "read_fraction": read_fraction, "instruction_count": instructions,
                                     "seed": seed * 1000 + i * 16 + c}})
        out.append({"name": f"mix{i:02d}_mpki{mean:05.1f}", "traces": traces})
    return out


_SUITE_KEYS = {"count", "mpki_min", "mpki_max", "cores", "instructions", "row_buffer_hit_rate", "read_fraction",
               "seed"}


def from_tree(tree: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate a full config tree (defaults already merged) into an ExperimentConfig."""
    _check_keys(tree, DEFAULTS.keys(), "")
    seed = _num(tree, "seed", "", int)
    if seed < 0:
        raise ConfigError("seed", "must be >= 0")
    epoch_cycles = _num(tree, "epoch_cycles", "", int)
    if epoch_cycles < 1:
        raise ConfigError("epoch_cycles", "must be >= 1")
    target_loss = _num(tree, "target_loss", "")
    if not 0 <= target_loss <= 1:
        raise ConfigError("target_loss", "must be in [0, 1]")
    clock_ns = _num(tree, "clock_ns", "")
    if clock_ns <= 0:
        raise ConfigError("clock_ns", "must be > 0")
    temperature = _num(tree, "temperature", "", allow_none=True)
    geometry = _typed_dataclass(Geometry, _section(tree, "geometry"), "geometry")
    if geometry.channels != 1:
        raise ConfigError("geometry.channels", "only one channel is simulated")
    timing = _typed_dataclass(TimingParams, _section(tree, "timing"), "timing")
    vp = _profile(_section(tree, "voltage_profile"), timing)
    power = _typed_dataclass(PowerProfile, _section(tree, "power_profile"), "power_profile")
    policy = _policy(tree.get("policy") or {}, "policy", target_loss)
    lm = _section(tree, "loss_models")
    _check_keys(lm, {"memory_intensive", "non_memory_intensive"}, "loss_models")
    models = _build("loss_models", LossModelSet.from_dict, lm)
    sim = _section(tree, "sim")
    _check_keys(sim, DEFAULTS["sim"].keys(), "sim")
    page = sim.get("page_policy", "open")
    if page not in ("open", "closed"):
        raise ConfigError("sim.page_policy", "must be 'open' or 'closed'")
    if not isinstance(sim.get("refresh", True), bool):
        raise ConfigError("sim.refresh", "expected true/false")
    horizon = _num(sim, "horizon", "sim", int, allow_none=True)
    if horizon is not None and horizon < 1:
        raise ConfigError("sim.horizon", "must be >= 1")
    bm = sim.get("bit_model") or {}
    if not isinstance(bm, dict):
        raise ConfigError("sim.bit_model", "expected {kind, p_bit}")
    _check_keys(bm, {"kind", "p_bit"}, "sim.bit_model")
    if bm.get("kind", "SingleFlip") not in ("SingleFlip", "Binomial"):
        raise ConfigError("sim.bit_model.kind", "must be SingleFlip or Binomial")
    bit_model = _build("sim.bit_model", BitModel.from_dict, bm)
    mor = _num(sim, "max_outstanding_reads", "sim", int)
    wbuf = _num(sim, "write_buffer", "sim", int)
    if mor < 1:
        raise ConfigError("sim.max_outstanding_reads", "must be >= 1")
    if wbuf < 1:
        raise ConfigError("sim.write_buffer", "must be >= 1")

    items = list(tree.get("workloads") or [])
    suite = tree.get("workload_suite")
    if suite is not None:
        if not isinstance(suite, dict):
            raise ConfigError("workload_suite", "must be a mapping")
        _check_keys(suite, _SUITE_KEYS, "workload_suite")
        items += _build("workload_suite", synthetic_suite, **suite)
    workloads = _workloads(items, base_dir)

    sw = _section(tree, "sweep")
    _check_keys(sw, DEFAULTS["sweep"].keys(), "sweep")
    sweep_t = sw.get("timings")
    sweep = SweepOptions(
        voltages=_volt_list(sw.get("voltages"), "sweep.voltages"),
        timings=None if sweep_t in (None, "compensated") else _triple(sweep_t, "sweep.timings"),
        lines=_num(sw, "lines", "sweep", int), energy_instructions=_num(sw, "energy_instructions", "sweep", int),
        vendors=None if sw.get("vendors") is None else tuple(str(v).upper() for v in sw["vendors"]))
    if sweep.lines < 1:
        raise ConfigError("sweep.lines", "must be >= 1")
    for v in sweep.vendors or ():
        _build("sweep.vendors", vendor_profile, v)

    cmp_ = _section(tree, "compare")
    _check_keys(cmp_, {"policies"}, "compare")
    pols = cmp_.get("policies") or []
    if not isinstance(pols, list) or len(pols) < 2:
        raise ConfigError("compare.policies", "need at least two policies")
    compare = tuple(_policy(p, f"compare.policies[{i}]", target_loss) for i, p in enumerate(pols))

    em = _section(tree, "errmap")
    _check_keys(em, DEFAULTS["errmap"].keys(), "errmap")
    errmap = ErrmapOptions(voltage=_num(em, "voltage", "errmap", allow_none=True),
                           timings=None if em.get("timings") in (None, "compensated")
                           else _triple(em["timings"], "errmap.timings"),
                           trials=_num(em, "trials", "errmap", int))
    if errmap.trials < 1:
        raise ConfigError("errmap.trials", "must be >= 1")

    ft = _section(tree, "fit")
    _check_keys(ft, DEFAULTS["fit"].keys(), "fit")
    fit = FitOptions(voltages=_volt_list(ft.get("voltages"), "fit.voltages"),
                     breakpoints=tuple(float(b) for b in ft.get("breakpoints") or ()))

    return ExperimentConfig(
        seed=seed, output=str(tree.get("output", "out")), epoch_cycles=epoch_cycles, target_loss=target_loss,
        temperature=temperature, clock_ns=clock_ns, geometry=geometry, timing=timing, voltage_profile=vp,
        power_profile=power, policy=policy, loss_models=models, max_outstanding_reads=mor, write_buffer=wbuf,
        page_policy=page, refresh=sim.get("refresh", True), horizon=horizon, bit_model=bit_model,
        workloads=workloads, sweep=sweep, compare_policies=compare, errmap=errmap, fit=fit)


def to_tree(cfg: ExperimentConfig) -> dict:
    vp = cfg.voltage_profile
    core = lambda t: dict(zip(("tRCD", "tRAS", "tRP"), t.core()))
    return {
        "seed": cfg.seed,
        "output": cfg.output,
        "epoch_cycles": cfg.epoch_cycles,
        "target_loss": cfg.target_loss,
        "temperature": cfg.temperature,
        "clock_ns": cfg.clock_ns,
        "geometry": {f.name: getattr(cfg.geometry, f.name) for f in fields(Geometry)},
        "timing": cfg.timing.to_dict(),
        "voltage_profile": {
            "vendor_label": vp.vendor_label, "v_nominal": vp.v_nominal, "v_min": vp.v_min, "v_floor": vp.v_floor,
            "v_step": vp.v_step,
            "timing_anchors": [{"v": v, **core(t)} for v, t in vp.timing_anchors],
            "error_onset": {"p0": vp.error_onset.p0, "k": vp.error_onset.k, "shape": vp.error_onset.shape.value,
                            "pattern_scale": vp.error_onset.pattern_scale},
            "weak_regions": [{"bank": r.bank, "row_start": r.row_start, "row_end": r.row_end, "weight": r.weight}
                             for r in vp.weak_regions],
            "temp_latency_factor": vp.temp_latency_factor, "temp_reference": vp.temp_reference,
            "vmin_reference_timings": core(vp.vmin_reference_timings),
            "strong_margin_ratio": vp.strong_margin_ratio,
        },
        "power_profile": cfg.power_profile.to_dict(),
        "policy": _policy_tree(cfg.policy, cfg.target_loss),
        "loss_models": cfg.loss_models.to_dict(),
        "sim": {"max_outstanding_reads": cfg.max_outstanding_reads, "write_buffer": cfg.write_buffer,
                "page_policy": cfg.page_policy, "refresh": cfg.refresh, "horizon": cfg.horizon,
                "bit_model": cfg.bit_model.to_dict()},
        "workloads": [w.to_tree() for w in cfg.workloads],
        "workload_suite": None,
        "sweep": {"voltages": None if cfg.sweep.voltages is None else list(cfg.sweep.voltages),
                  "timings": None if cfg.sweep.timings is None
                  else dict(zip(("tRCD", "tRAS", "tRP"), cfg.sweep.timings)),
                  "lines": cfg.sweep.lines,
                  "vendors": None if cfg.sweep.vendors is None else list(cfg.sweep.vendors),
                  "energy_instructions": cfg.sweep.energy_instructions},
        "compare": {"policies": [_policy_tree(h, cfg.target_loss) for h in cfg.compare_policies]},
        "errmap": {"voltage": cfg.errmap.voltage,
                   "timings": None if cfg.errmap.timings is None
                   else dict(zip(("tRCD", "tRAS", "tRP"), cfg.errmap.timings)),
                   "trials": cfg.errmap.trials},
        "fit": {"voltages": None if cfg.fit.voltages is None else list(cfg.fit.voltages),
                "breakpoints": list(cfg.fit.breakpoints)},
    }


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_tree(cfg), sort_keys=False)


def parse_config(text: str, overrides=(), base_dir: Path | None = None) -> ExperimentConfig:
    try:
        user = _load_yaml(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    if not isinstance(user, dict):
        raise ConfigError("<file>", "top level must be a mapping")
    tree = deep_merge(DEFAULTS, user)
    for spec in overrides:
        tree = apply_override(tree, spec)
    return from_tree(tree, base_dir)


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Read ``path`` (or ``$VOLTSIM_CONFIG``; defaults only when neither is set)."""
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    if path is None:
        return parse_config("", overrides)
    p = Path(path)
    if not p.is_file():
        raise ConfigError("--config", f"config file {str(p)!r} not found")
    return parse_config(p.read_text(encoding="utf-8"), overrides, p.resolve().parent)
