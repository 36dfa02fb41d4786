import csv
import json
from pathlib import Path

import pytest

from voltsim.cli import EXIT_CONFIG, EXIT_OK, main

SMALL = """
seed: 3
epoch_cycles: 50000
workload_suite: {count: 3, mpki_min: 2, mpki_max: 30, cores: 2, instructions: 100000}
errmap: {trials: 20000}
sweep: {lines: 20000, energy_instructions: 20000}
fit: {voltages: [1.0, 1.1, 1.2]}
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return p


def run(cfg, out, *extra):
    return main([extra[0], "--config", str(cfg), "--out", str(out), *extra[1:]])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("cmd,files", [
    ("simulate", ["stats.json", "energy.csv", "policy_log.csv"]),
    ("compare", ["compare_workloads.csv", "compare_summary.csv"]),
    ("sweep-voltage", ["error_curve.csv", "energy_curve.csv"]),
    ("errmap", ["errmap.csv", "errmap_report.json", "ecc.csv"]),
    ("fit-loss-model", ["fit_points.csv", "loss_models.yaml"]),
])
def test_commands_write_outputs(cfg_path, tmp_path, cmd, files):
    out = tmp_path / "out"
    assert run(cfg_path, out, cmd) == EXIT_OK
    for f in files:
        assert (out / f).stat().st_size > 0


def test_simulate_is_byte_identical(cfg_path, tmp_path):
    for d in ("a", "b"):
        assert run(cfg_path, tmp_path / d, "simulate", "--set", "policy.kind=Voltron") == EXIT_OK
    for f in ("stats.json", "energy.csv", "policy_log.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    stats = json.loads((tmp_path / "a" / "stats.json").read_text())
    assert all(s["uncorrected_error_count"] == 0 for s in stats.values())


@pytest.mark.parametrize("cmd,files", [("compare", ["compare_workloads.csv", "compare_summary.csv"]),
                                       ("sweep-voltage", ["error_curve.csv", "energy_curve.csv"])])
def test_parallel_matches_serial(cfg_path, tmp_path, cmd, files):
    assert run(cfg_path, tmp_path / "s", cmd) == EXIT_OK
    assert run(cfg_path, tmp_path / "p", cmd, "--jobs", "2") == EXIT_OK
    for f in files:
        assert (tmp_path / "s" / f).read_bytes() == (tmp_path / "p" / f).read_bytes()


def test_seed_changes_monte_carlo(cfg_path, tmp_path):
    for d, seed in (("a", "1"), ("b", "1"), ("c", "2")):
        run(cfg_path, tmp_path / d, "errmap", "--seed", seed, "--set", "errmap.voltage=1.0", "--set", "voltage_profile={preset: C}",
            "--set", "sim.bit_model={kind: Binomial, p_bit: 0.05}")
    a, b, c = ((tmp_path / d / "ecc.csv").read_text() for d in "abc")
    assert a == b
    assert a != c


def test_compare_nominal_against_itself(cfg_path, tmp_path):
    out = tmp_path / "o"
    assert run(cfg_path, out, "compare", "--set", "compare.policies=[Nominal, Nominal]") == EXIT_OK
    for r in rows(out / "compare_workloads.csv"):
        for k in ("perf_loss_pct", "dram_energy_savings_pct", "system_energy_savings_pct"):
            assert float(r[k]) == 0.0


def test_voltron_saves_array_energy(cfg_path, tmp_path):
    run(cfg_path, tmp_path / "n", "simulate")
    run(cfg_path, tmp_path / "v", "simulate", "--set", "policy.kind=Voltron", "--set", "target_loss=0.2")
    nom = {r["workload"]: float(r["dram_array_j"]) for r in rows(tmp_path / "n" / "energy.csv")}
    vol = {r["workload"]: float(r["dram_array_j"]) for r in rows(tmp_path / "v" / "energy.csv")}
    assert all(vol[w] < nom[w] for w in nom)


def test_sweep_curves(cfg_path, tmp_path):
    out = tmp_path / "o"
    assert run(cfg_path, out, "sweep-voltage") == EXIT_OK
    r = rows(out / "error_curve.csv")
    assert [float(x["voltage"]) for x in r] == pytest.approx([1.35, 1.30, 1.25, 1.20, 1.15, 1.10, 1.05, 1.00])
    fr = [float(x["analytic_error_fraction"]) for x in r]
    assert fr == sorted(fr)
    assert fr[-1] > 0
    assert run(cfg_path, tmp_path / "c", "sweep-voltage", "--set", "sweep.timings=null") == EXIT_OK
    assert all(float(x["analytic_error_fraction"]) == 0.0 for x in rows(tmp_path / "c" / "error_curve.csv"))


def test_errmap_mass_confined_to_weak_regions(cfg_path, tmp_path):
    out = tmp_path / "o"
    assert run(cfg_path, out, "errmap") == EXIT_OK
    rep = json.loads((out / "errmap_report.json").read_text())
    assert rep["mass_inside_weak_regions"] > 0
    assert rep["mass_outside_weak_regions"] == 0.0


def test_errmap_reliable_point_is_clean(cfg_path, tmp_path):
    out = tmp_path / "o"
    assert run(cfg_path, out, "errmap", "--set", "errmap.voltage=1.35") == EXIT_OK
    rep = json.loads((out / "errmap_report.json").read_text())
    assert rep["error_mass"] == 0.0 and rep["gini"] == 0.0
    assert rep["ecc"]["Clean"] == 1.0


def test_bad_config_key_exits_nonzero(cfg_path, tmp_path, capsys):
    assert run(cfg_path, tmp_path / "o", "simulate", "--set", "sim.page_policy=diagonal") == EXIT_CONFIG
    assert "sim.page_policy" in capsys.readouterr().err


def test_missing_config_and_bad_args(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG
    assert main(["no-such-command"]) == EXIT_CONFIG
    assert main(["simulate", "--jobs", "0"]) == EXIT_CONFIG


def test_trace_parse_error_reported(tmp_path, capsys):
    (tmp_path / "bad.trace").write_text("1 R 0x0\n2 X 0x40\n")
    (tmp_path / "c.yaml").write_text("workloads: [{name: w, traces: [{path: bad.trace}]}]\n")
    assert main(["simulate", "--config", str(tmp_path / "c.yaml"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "bad.trace:2" in capsys.readouterr().err


def test_module_entry_point_exists():
    assert (Path(__file__).parents[1] / "src" / "voltsim" / "__main__.py").exists()


SCHEMAS = {
    "simulate": {"energy.csv": "workload,dram_array_j,dram_peripheral_j,dram_io_j,dram_j,cpu_j,total_j",
                 "policy_log.csv": "workload,epoch,voltage,tRCD,tRAS,tRP,predicted_loss,mpki,bw_util,tREFI"},
    "compare": {"compare_workloads.csv": "workload,class,mpki,policy,weighted_speedup,perf_loss_pct,"
                                         "dram_energy_savings_pct,system_energy_savings_pct,bw_util,"
                                         "uncorrected_errors,max_predicted_loss",
                "compare_summary.csv": "policy,class,workloads,mean_perf_loss_pct,max_perf_loss_pct,"
                                       "mean_dram_energy_savings_pct,mean_system_energy_savings_pct,"
                                       "mean_weighted_speedup"},
    "sweep-voltage": {"error_curve.csv": "vendor,voltage,tRCD,tRAS,tRP,analytic_error_fraction,mc_error_fraction,"
                                         "mc_stderr",
                      "energy_curve.csv": "vendor,voltage,dram_energy_j,dram_array_energy_j,corrected_errors,"
                                          "uncorrected_errors"},
    "errmap": {"errmap.csv": "bank,row,probability",
               "ecc.csv": "voltage,Clean,Corrected,DetectedUncorrectable,SilentOrMiscorrected"},
    "fit-loss-model": {"fit_points.csv": "workload,class,voltage,apki,cpi,delta_l_cycles,x,measured_loss"},
}


@pytest.mark.parametrize("cmd", sorted(SCHEMAS))
def test_output_schemas(cfg_path, tmp_path, cmd):
    out = tmp_path / "o"
    assert run(cfg_path, out, cmd) == EXIT_OK
    for name, header in SCHEMAS[cmd].items():
        data = (out / name).read_bytes()
        assert b"\r" not in data
        assert data.decode("utf-8").split("\n", 1)[0] == header
