"""Experiment orchestration shared by the command line and the acceptance suite.

Every experiment is broken into independent simulation tasks identified by
a sortable key. Tasks are pure functions of (config, key), so running them
serially or in a process pool gives the same results, which are always
merged in key order.
"""
from __future__ import annotations

import csv
import functools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Iterable

import numpy as np
import yaml

from .config import ExperimentConfig, TraceSource, WorkloadSpec
from .dram_core import Geometry
from .errors import ConfigError, FitError
from .fault_model import generate_error_map, monte_carlo_error_fraction, region_masks
from .memsim import SimStats, Trace, simulate, weighted_speedup
from .policies import (EpochObservation, LossModelSet, PolicyHandle, PolicyKind, StaticVoltagePolicy,
                       WorkloadClass, classify, fit_loss_model, make_policy, training_point)
from .presets import vendor_profile
from .reliability import OUTCOME_ORDER, clustering_stats, ecc_coverage, write_ecc_report
from .seeding import child_rng
from .voltage_model import VoltageProfile, scaled_timings
from .workload import SynthParams, load_trace, synthesize_trace

NOMINAL = PolicyHandle(PolicyKind.NOMINAL)


# ----------------------------------------------------------------------------
# output helpers


def fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path: Path, header: list[str], rows: Iterable[Iterable[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_tasks(fn: Callable, cfg: ExperimentConfig, keys: list, jobs: int = 1) -> dict:
    """Evaluate ``fn(cfg, key)`` for every key; the result dict is ordered by key."""
    keys = sorted(set(keys))
    if jobs <= 1 or len(keys) <= 1:
        results = [fn(cfg, k) for k in keys]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(functools.partial(fn, cfg), keys, chunksize=1))
    return dict(zip(keys, results))


# ----------------------------------------------------------------------------
# traces and single runs


@functools.lru_cache(maxsize=64)
def build_trace(src: TraceSource, geo: Geometry) -> Trace:
    if src.path is not None:
        return load_trace(src.path)
    return synthesize_trace(src.synth, geo)


def workload_traces(w: WorkloadSpec, geo: Geometry) -> list[Trace]:
    return [build_trace(s, geo) for s in w.traces]


def workload_mpki(w: WorkloadSpec, geo: Geometry) -> float:
    return float(np.mean([t.mpki for t in workload_traces(w, geo)]))


def workload_by_name(cfg: ExperimentConfig, name: str) -> WorkloadSpec:
    for w in cfg.workloads:
        if w.name == name:
            return w
    raise KeyError(name)


def policy_for(cfg: ExperimentConfig, handle: PolicyHandle, vp: VoltageProfile | None = None):
    return make_policy(handle, vp or cfg.voltage_profile, cfg.loss_models, cfg.clock_ns, cfg.temperature)


def run_observation(s: SimStats) -> EpochObservation:
    """Whole-run counters in the shape a policy sees per epoch."""
    mpki = tuple(1000.0 * r / n if n else 0.0 for r, n in zip(s.reads, s.instructions))
    return EpochObservation(mpki, s.mpki, s.bandwidth_utilization, s.ipc, s.row_hit_rate)


def summarize(s: SimStats) -> dict:
    return {
        "ipc": list(s.ipc),
        "instructions": list(s.instructions),
        "reads": list(s.reads),
        "writes": list(s.writes),
        "mpki": list(s.mpki),
        "total_cycles": s.total_cycles,
        "bandwidth_utilization": s.bandwidth_utilization,
        "row_hit_rate": s.row_hit_rate,
        "energy": s.energy.to_dict(),
        "corrected_error_count": s.corrected_error_count,
        "uncorrected_error_count": s.uncorrected_error_count,
        "policy_log": s.policy_log_rows(),
        "stats": s.to_dict(),
    }


def simulate_workload(cfg: ExperimentConfig, w: WorkloadSpec, handle: PolicyHandle, **sim_kw) -> SimStats:
    traces = workload_traces(w, cfg.geometry)
    return simulate(traces, cfg.sim_config(**sim_kw), policy_for(cfg, handle))


def _handle_from_key(cfg: ExperimentConfig, label: str) -> PolicyHandle:
    if label == NOMINAL.label:
        return NOMINAL
    for h in (cfg.policy, *cfg.compare_policies):
        if h.label == label:
            return h
    if label.startswith("StaticV("):
        return PolicyHandle(PolicyKind.STATIC, static_voltage=float(label[8:-1]))
    raise KeyError(label)


def _perf_task(cfg: ExperimentConfig, key) -> dict:
    kind, wname, arg = key
    w = workload_by_name(cfg, wname)
    if kind == "alone":
        t = workload_traces(w, cfg.geometry)[arg]
        s = simulate([t], cfg.sim_config(), policy_for(cfg, NOMINAL))
        return {"ipc": s.ipc[0]}
    return summarize(simulate_workload(cfg, w, _handle_from_key(cfg, arg)))


# ----------------------------------------------------------------------------
# simulate


def cmd_simulate(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> dict:
    if not cfg.workloads:
        raise ConfigError("workloads", "at least one workload is required")
    label = cfg.policy.label
    keys = [("shared", w.name, label) for w in cfg.workloads]
    res = run_tasks(_perf_task, cfg, keys, jobs)
    out.mkdir(parents=True, exist_ok=True)
    stats = {k[1]: r["stats"] for k, r in res.items()}
    write_json(out / "stats.json", stats)
    write_csv(out / "energy.csv", ["workload", "dram_array_j", "dram_peripheral_j", "dram_io_j", "dram_j", "cpu_j",
                                   "total_j"],
              ([k[1]] + [r["energy"][c] for c in ("dram_array", "dram_peripheral", "dram_io", "dram", "cpu", "total")]
               for k, r in res.items()))
    write_csv(out / "policy_log.csv", ["workload"] + POLICY_LOG_COLUMNS,
              ([k[1]] + [row[c] for c in POLICY_LOG_COLUMNS] for k, r in res.items() for row in r["policy_log"]))
    return stats


POLICY_LOG_COLUMNS = ["epoch", "voltage", "tRCD", "tRAS", "tRP", "predicted_loss", "mpki", "bw_util", "tREFI"]


# ----------------------------------------------------------------------------
# compare


@dataclass(frozen=True)
class WorkloadResult:
    workload: str
    mpki: float
    klass: WorkloadClass
    policy: str
    weighted_speedup: float
    perf_loss: float
    dram_savings: float
    system_savings: float
    bandwidth_utilization: float
    uncorrected_errors: int
    max_predicted_loss: float
    min_bw_util_epoch: float
    refresh_intervals: tuple[float, ...] = ()


def compare_results(cfg: ExperimentConfig, policies, jobs: int = 1) -> list[WorkloadResult]:
    """Per-workload, per-policy comparison against the nominal baseline."""
    if not cfg.workloads:
        raise ConfigError("workloads", "at least one workload is required")
    labels = sorted({NOMINAL.label, *(h.label for h in policies)})
    keys = []
    for w in cfg.workloads:
        keys += [("alone", w.name, i) for i in range(len(w.traces))]
        keys += [("shared", w.name, lab) for lab in labels]
    cfg = replace(cfg, compare_policies=tuple({h.label: h for h in policies}.values()) or cfg.compare_policies)
    res = run_tasks(_perf_task, cfg, keys, jobs)
    out = []
    for w in cfg.workloads:
        alone = [res[("alone", w.name, i)]["ipc"] for i in range(len(w.traces))]
        base = res[("shared", w.name, NOMINAL.label)]
        ws_base = weighted_speedup(base["ipc"], alone)
        mpki = workload_mpki(w, cfg.geometry)
        for h in policies:
            r = res[("shared", w.name, h.label)]
            ws = weighted_speedup(r["ipc"], alone)
            log = r["policy_log"]
            out.append(WorkloadResult(
                workload=w.name, mpki=mpki, klass=classify(mpki), policy=h.label, weighted_speedup=ws,
                perf_loss=1.0 - ws / ws_base,
                dram_savings=1.0 - r["energy"]["dram"] / base["energy"]["dram"],
                system_savings=1.0 - r["energy"]["total"] / base["energy"]["total"],
                bandwidth_utilization=r["bandwidth_utilization"],
                uncorrected_errors=r["uncorrected_error_count"],
                max_predicted_loss=max((row["predicted_loss"] for row in log), default=0.0),
                min_bw_util_epoch=min((row["bw_util"] for row in base["policy_log"]), default=0.0),
                refresh_intervals=tuple(sorted({row["tREFI"] for row in log}))))
    return out


def cmd_compare(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> list[WorkloadResult]:
    results = compare_results(cfg, cfg.compare_policies, jobs)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "compare_workloads.csv",
              ["workload", "class", "mpki", "policy", "weighted_speedup", "perf_loss_pct", "dram_energy_savings_pct",
               "system_energy_savings_pct", "bw_util", "uncorrected_errors", "max_predicted_loss"],
              ([r.workload, r.klass.value, r.mpki, r.policy, r.weighted_speedup, 100 * r.perf_loss,
                100 * r.dram_savings, 100 * r.system_savings, r.bandwidth_utilization, r.uncorrected_errors,
                r.max_predicted_loss] for r in results))
    rows = []
    for h in cfg.compare_policies:
        for klass in WorkloadClass:
            sel = [r for r in results if r.policy == h.label and r.klass is klass]
            if not sel:
                continue
            rows.append([h.label, klass.value, len(sel),
                         100 * float(np.mean([r.perf_loss for r in sel])), 100 * max(r.perf_loss for r in sel),
                         100 * float(np.mean([r.dram_savings for r in sel])),
                         100 * float(np.mean([r.system_savings for r in sel])),
                         float(np.mean([r.weighted_speedup for r in sel]))])
    write_csv(out / "compare_summary.csv",
              ["policy", "class", "workloads", "mean_perf_loss_pct", "max_perf_loss_pct", "mean_dram_energy_savings_pct",
               "mean_system_energy_savings_pct", "mean_weighted_speedup"], rows)
    return results


# ----------------------------------------------------------------------------
# voltage sweep


def sweep_voltages(cfg: ExperimentConfig, vp: VoltageProfile) -> tuple[float, ...]:
    if cfg.sweep.voltages is not None:
        return cfg.sweep.voltages
    return tuple(reversed(vp.grid))


def _sweep_profiles(cfg: ExperimentConfig) -> list[tuple[str, VoltageProfile]]:
    if cfg.sweep.vendors is None:
        return [(cfg.voltage_profile.vendor_label, cfg.voltage_profile)]
    out = []
    for label in cfg.sweep.vendors:
        p = vendor_profile(label)
        anchors = tuple((v, cfg.timing.with_core(*t.core())) for v, t in p.timing_anchors)
        out.append((label, replace(p, timing_anchors=anchors,
                                   vmin_reference_timings=cfg.timing.with_core(*p.vmin_reference_timings.core()))))
    return out


def _sweep_timings(cfg: ExperimentConfig, vp: VoltageProfile, v: float):
    if cfg.sweep.timings is None:
        return scaled_timings(v, vp, cfg.temperature)
    return cfg.timing.with_core(*cfg.sweep.timings)


def _sweep_task(cfg: ExperimentConfig, key) -> dict:
    vendor_idx, volt_idx = key
    label, vp = _sweep_profiles(cfg)[vendor_idx]
    v = sweep_voltages(cfg, vp)[volt_idx]
    t = _sweep_timings(cfg, vp, v)
    emap = generate_error_map(v, t, vp, cfg.geometry, cfg.temperature)
    frac, se = monte_carlo_error_fraction(emap, cfg.sweep.lines, child_rng(cfg.seed, 1, vendor_idx, volt_idx))
    energy = {}
    if cfg.sweep.energy_instructions > 0:
        tr = synthesize_trace(SynthParams(target_mpki=20.0, instruction_count=cfg.sweep.energy_instructions,
                                          seed=cfg.seed), cfg.geometry)
        s = simulate([tr], cfg.sim_config(voltage_profile=vp), StaticVoltagePolicy(vp, v, t, clock_ns=cfg.clock_ns,
                                                                                  temperature=cfg.temperature))
        energy = {"dram": s.energy.dram, "dram_array": s.energy.dram_array, "uncorrected": s.uncorrected_error_count,
                  "corrected": s.corrected_error_count}
    return {"vendor": label, "voltage": v, "timings": t.core(), "analytic": emap.mean_probability, "mc": frac,
            "se": se, "energy": energy}


def sweep_results(cfg: ExperimentConfig, jobs: int = 1) -> list[dict]:
    keys = []
    for i, (_, vp) in enumerate(_sweep_profiles(cfg)):
        keys += [(i, j) for j in range(len(sweep_voltages(cfg, vp)))]
    return list(run_tasks(_sweep_task, cfg, keys, jobs).values())


def cmd_sweep_voltage(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> list[dict]:
    rows = sweep_results(cfg, jobs)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "error_curve.csv",
              ["vendor", "voltage", "tRCD", "tRAS", "tRP", "analytic_error_fraction", "mc_error_fraction", "mc_stderr"],
              ([r["vendor"], r["voltage"], *r["timings"], r["analytic"], r["mc"], r["se"]] for r in rows))
    write_csv(out / "energy_curve.csv",
              ["vendor", "voltage", "dram_energy_j", "dram_array_energy_j", "corrected_errors", "uncorrected_errors"],
              ([r["vendor"], r["voltage"], r["energy"].get("dram", 0.0), r["energy"].get("dram_array", 0.0),
                r["energy"].get("corrected", 0), r["energy"].get("uncorrected", 0)] for r in rows))
    return rows


# ----------------------------------------------------------------------------
# error map


def errmap_point(cfg: ExperimentConfig):
    vp = cfg.voltage_profile
    v = cfg.errmap.voltage
    if v is None:
        v = round(max(vp.v_floor, vp.v_min - vp.v_step), 6)
    if cfg.errmap.timings is None:
        t = vp.vmin_reference_timings
    else:
        t = cfg.timing.with_core(*cfg.errmap.timings)
    return v, t


def cmd_errmap(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> dict:
    vp = cfg.voltage_profile
    v, t = errmap_point(cfg)
    emap = generate_error_map(v, t, vp, cfg.geometry, cfg.temperature)
    gini, top = clustering_stats(emap)
    cov = ecc_coverage(emap, cfg.bit_model, cfg.errmap.trials, child_rng(cfg.seed, 2))
    weak, _ = region_masks(cfg.geometry, vp)
    total = emap.total_mass
    inside = float(emap.grid[weak].sum())
    report = {
        "voltage": v,
        "timings": dict(zip(("tRCD", "tRAS", "tRP"), t.core())),
        "vendor": vp.vendor_label,
        "mean_error_probability": emap.mean_probability,
        "error_mass": total,
        "mass_inside_weak_regions": inside,
        "mass_outside_weak_regions": total - inside,
        "gini": gini,
        "top1pct_share": top,
        "ecc": {k.value: cov[k] for k in OUTCOME_ORDER},
        "trials": cfg.errmap.trials,
        "bit_model": cfg.bit_model.to_dict(),
    }
    out.mkdir(parents=True, exist_ok=True)
    emap.to_csv(out / "errmap.csv")
    write_json(out / "errmap_report.json", report)
    write_ecc_report(out / "ecc.csv", [(v, cov)])
    return report


# ----------------------------------------------------------------------------
# loss-model fitting


def fit_voltages(cfg: ExperimentConfig) -> tuple[float, ...]:
    if cfg.fit.voltages is not None:
        return cfg.fit.voltages
    vp = cfg.voltage_profile
    return tuple(v for v in vp.grid if v < vp.v_nominal - 1e-9)


def fit_results(cfg: ExperimentConfig, jobs: int = 1) -> tuple[LossModelSet, list[dict]]:
    if not cfg.workloads:
        raise ConfigError("workloads", "at least one workload is required")
    volts = fit_voltages(cfg)
    statics = [PolicyHandle(PolicyKind.STATIC, static_voltage=v) for v in volts]
    cfg = replace(cfg, compare_policies=tuple(statics))
    keys = []
    for w in cfg.workloads:
        keys += [("alone", w.name, i) for i in range(len(w.traces))]
        keys += [("shared", w.name, lab) for lab in [NOMINAL.label] + [h.label for h in statics]]
    res = run_tasks(_perf_task, cfg, keys, jobs)
    points: dict[WorkloadClass, list] = {k: [] for k in WorkloadClass}
    rows = []
    for w in cfg.workloads:
        alone = [res[("alone", w.name, i)]["ipc"] for i in range(len(w.traces))]
        base = res[("shared", w.name, NOMINAL.label)]
        ws_base = weighted_speedup(base["ipc"], alone)
        ipc = tuple(base["ipc"])
        obs = EpochObservation(tuple(1000.0 * r / n if n else 0.0 for r, n in zip(base["reads"], base["instructions"])),
                               tuple(base["mpki"]), base["bandwidth_utilization"], ipc, base["row_hit_rate"])
        worst = max(range(len(ipc)), key=lambda i: obs.epoch_apki[i] * ipc[i])
        klass = classify(obs.epoch_mpki[worst])
        for h in statics:
            r = res[("shared", w.name, h.label)]
            loss = 1.0 - weighted_speedup(r["ipc"], alone) / ws_base
            tp = training_point(obs, h.static_voltage, loss, cfg.voltage_profile, cfg.clock_ns, cfg.temperature)
            points[klass].append(tp)
            rows.append([w.name, klass.value, h.static_voltage, tp.apki, tp.cpi, tp.delta_l, tp.x, loss])
    models = {}
    for klass, pts in points.items():
        try:
            fit = fit_loss_model(pts, cfg.fit.breakpoints)
            models[klass] = fit.model
        except FitError:
            models[klass] = (cfg.loss_models.memory_intensive if klass is WorkloadClass.MEMORY_INTENSIVE
                             else cfg.loss_models.non_memory_intensive)
    return LossModelSet(models[WorkloadClass.MEMORY_INTENSIVE], models[WorkloadClass.NON_MEMORY_INTENSIVE]), rows


def cmd_fit_loss_model(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> LossModelSet:
    models, rows = fit_results(cfg, jobs)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "fit_points.csv", ["workload", "class", "voltage", "apki", "cpi", "delta_l_cycles", "x",
                                       "measured_loss"], rows)
    with open(out / "loss_models.yaml", "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump({"loss_models": models.to_dict()}, fh, sort_keys=True)
    return models
