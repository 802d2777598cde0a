"""End-to-end subcommand behavior: artifacts, exit codes, determinism."""

import json
import os

import numpy as np
import pytest

from ttlaw.als import TrainingSet
from ttlaw.cli import main
from ttlaw.dictionaries import make_dictionary
from ttlaw.rng import INIT, substream
from ttlaw.selection import local_selection_table, random_ensemble
from ttlaw.serialize import (
    load_model,
    read_results,
    save_dataset,
    save_ensemble_model,
)
from ttlaw.systems import PlantedSpec, SamplerSpec


def _write_config(tmp_path, name="study.json", **overrides):
    raw = {
        "seed": 11,
        "out_dir": str(tmp_path / "out"),
        "system": {"kind": "planted", "d": 6},
        "dictionary": {"kind": "monomial", "max_degree": 2},
        "model": {"lam": 2, "rho": 2, "L": 1},
        "train": {"max_sweeps": 8, "restarts": 1},
        "grid": {"M": [300]},
    }
    raw.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def _generate(tmp_path, cfg_path, capsys):
    assert main(["generate", "--config", cfg_path]) == 0
    return capsys.readouterr().out.strip().splitlines()[-1]


# -- generate ---------------------------------------------------------------------


def test_generate_is_byte_identical_on_regeneration(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    path = _generate(tmp_path, cfg, capsys)
    first = open(path, "rb").read()
    path2 = _generate(tmp_path, cfg, capsys)
    assert path2 == path
    assert open(path, "rb").read() == first


def test_generate_covers_the_grid_and_single_cell_flags(tmp_path, capsys):
    cfg = _write_config(tmp_path, grid={"M": [100, 200], "sigma": [0.0, 0.01]})
    assert main(["generate", "--config", cfg]) == 0
    paths = capsys.readouterr().out.strip().splitlines()
    assert len(paths) == 4
    assert all(os.path.exists(p) for p in paths)
    assert main(["generate", "--config", cfg, "--m", "50", "--csv"]) == 0
    path = capsys.readouterr().out.strip()
    assert "M50" in path
    assert os.path.exists(path[: -len(".json")] + ".csv")


def test_generate_rejects_unknown_system_kind(tmp_path):
    cfg = _write_config(tmp_path, system={"kind": "heisenberg", "d": 6})
    assert main(["generate", "--config", cfg]) == 2


def test_generate_rejects_overlapping_particle_intervals(tmp_path):
    cfg = _write_config(
        tmp_path,
        system={"kind": "lj", "d": 3},
        sampler={"intervals": [[0.5, 2.0], [1.5, 3.0], [2.5, 4.0]]},
        dictionary={"kind": "legendre", "max_degree": 3},
    )
    assert main(["generate", "--config", cfg]) == 2


def test_missing_config_flag_is_a_config_error(tmp_path):
    assert main(["generate"]) == 2


# -- train ------------------------------------------------------------------------


def test_train_recovers_planted_law_and_writes_artifacts(tmp_path, capsys):
    cfg = _write_config(tmp_path, train={"max_sweeps": 10, "restarts": 3})
    data_path = _generate(tmp_path, cfg, capsys)
    assert main(["train", "--config", cfg, "--data", data_path]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert os.path.exists(summary["model"])
    assert os.path.exists(summary["history"])

    assert main(["evaluate", "--config", cfg, "--model", summary["model"]]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["residuum"] <= 1e-8
    assert report["m_prime"] == 20000

    model = load_model(summary["model"])
    meta = model.meta
    assert meta["M"] == 300 and meta["sigma"] == 0.0
    assert meta["best_restart"] == summary["best_restart"]


def test_train_rejects_dimension_mismatch(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    data_path = _generate(tmp_path, cfg, capsys)
    cfg5 = _write_config(tmp_path, "five.json", system={"kind": "planted", "d": 5})
    assert main(["train", "--config", cfg5, "--data", data_path]) == 2


def test_train_on_noisy_data_accounts_every_step(tmp_path, capsys):
    cfg = _write_config(
        tmp_path,
        train={"max_sweeps": 4, "restarts": 1, "loss_rel_tol": 0.0},
        grid={"M": [300], "sigma": [0.05]},
    )
    data_path = _generate(tmp_path, cfg, capsys)
    assert main(["train", "--config", cfg, "--data", data_path]) == 0
    summary = json.loads(capsys.readouterr().out)
    lines = open(summary["history"]).read().splitlines()
    assert lines[0].startswith("#")
    assert lines[1] == "sweep,step,ell,type,restricted_loss,full_loss,millis"
    body = [line.split(",") for line in lines[2:]]
    sweeps = {int(row[0]) for row in body}
    assert sweeps == {1, 2, 3, 4}  # noise keeps it from converging early
    step_rows = [row for row in body if row[1] != "0"]
    per_sweep = {s: sum(1 for row in step_rows if int(row[0]) == s) for s in sweeps}
    assert set(per_sweep.values()) == {per_sweep[1]}  # same step count every sweep
    assert len(step_rows) == 4 * per_sweep[1]


def test_train_exits_3_on_numerical_abort(tmp_path, capsys):
    cfg = _write_config(tmp_path, system={"kind": "planted", "d": 4}, grid={"M": [50]})
    spec = PlantedSpec(d=4, seed=11)
    sampler = SamplerSpec(intervals=((-1.0, 1.0),) * 4, sigma=0.0, seed=11)
    rng = np.random.default_rng(0)
    data = TrainingSet(
        rng.uniform(-1, 1, (50, 4)), np.full((50, 4), 1e200), domains=sampler.intervals
    )
    path = tmp_path / "huge.json"
    save_dataset(path, spec, sampler, data)
    assert main(["train", "--config", cfg, "--data", str(path)]) == 3


# -- evaluate ---------------------------------------------------------------------


def test_evaluate_is_deterministic_and_appends_rows(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    data_path = _generate(tmp_path, cfg, capsys)
    assert main(["train", "--config", cfg, "--data", data_path]) == 0
    model_path = json.loads(capsys.readouterr().out)["model"]

    values = []
    for _ in range(2):
        assert main(["evaluate", "--config", cfg, "--model", model_path]) == 0
        values.append(json.loads(capsys.readouterr().out)["residuum"])
    assert values[0] == values[1]
    _, rows = read_results(str(tmp_path / "out" / "results.csv"))
    assert len(rows) == 2 and rows[0]["residuum"] == values[0]
    assert rows[0]["system"] == "planted" and rows[0]["status"] == "ok"


def test_evaluate_zero_model_has_unit_residuum(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    dic = make_dictionary("monomial", max_degree=2, domains=((-1.0, 1.0),) * 6)
    table = local_selection_table(6, 1)
    ens = random_ensemble(dic, table, lam=2, rho=2, rng=substream(0, INIT, 0))
    for core in ens.cores.values():
        core.set_vector(np.zeros(core.pattern.n_free))
    path = tmp_path / "zero.json"
    save_ensemble_model(path, ens)
    assert main(["evaluate", "--config", cfg, "--model", str(path)]) == 0
    assert json.loads(capsys.readouterr().out)["residuum"] == 1.0


def test_evaluate_exact_witness_model_is_truth(tmp_path, capsys):
    cfg = _write_config(tmp_path, system={"kind": "fput", "d": 6})
    model_path = str(tmp_path / "exact.json")
    assert (
        main(["exact", "--system", "fput", "--d", "6", "--save-model", model_path])
        == 0
    )
    capsys.readouterr()
    assert main(["evaluate", "--config", cfg, "--model", model_path]) == 0
    assert json.loads(capsys.readouterr().out)["residuum"] <= 1e-10


# -- sweep ------------------------------------------------------------------------


def test_sweep_covers_grid_and_resumes_without_work(tmp_path, capsys):
    cfg = _write_config(
        tmp_path,
        train={"max_sweeps": 4, "restarts": 2},
        grid={"M": [100, 200], "sigma": [0.0, 0.05]},
    )
    assert main(["sweep", "--config", cfg]) == 0
    capsys.readouterr()
    out = tmp_path / "out"
    results = out / "results.csv"
    _, rows = read_results(str(results))
    assert len(rows) == 2 * 2 * 2
    assert [(r["M"], r["sigma"], r["restart"]) for r in rows] == sorted(
        (M, s, r) for M in (100, 200) for s in (0.0, 0.05) for r in (0, 1)
    )
    assert all(r["status"] == "ok" for r in rows)
    histories = sorted(p for p in os.listdir(out) if p.startswith("history_"))
    assert len(histories) == 8

    before = results.read_bytes()
    stamps = {p: os.path.getmtime(out / p) for p in histories}
    assert main(["sweep", "--config", cfg]) == 0
    capsys.readouterr()
    assert results.read_bytes() == before
    assert sorted(p for p in os.listdir(out) if p.startswith("history_")) == histories
    assert {p: os.path.getmtime(out / p) for p in histories} == stamps


def test_sweep_retries_failed_cells_without_duplicates(tmp_path, capsys):
    cfg = _write_config(tmp_path, grid={"M": [100]}, train={"max_sweeps": 2})
    assert main(["sweep", "--config", cfg]) == 0
    capsys.readouterr()
    results = tmp_path / "out" / "results.csv"
    cfg_hash, rows = read_results(str(results))
    rows[0]["status"] = "abort:1"
    from ttlaw.serialize import write_results

    write_results(str(results), cfg_hash, rows)
    assert main(["sweep", "--config", cfg]) == 0
    capsys.readouterr()
    _, rows = read_results(str(results))
    assert len(rows) == 1 and rows[0]["status"] == "ok"


def test_sweep_refuses_foreign_results_file(tmp_path, capsys):
    cfg = _write_config(tmp_path, grid={"M": [100]}, train={"max_sweeps": 2})
    assert main(["sweep", "--config", cfg]) == 0
    capsys.readouterr()
    other = _write_config(tmp_path, "other.json", seed=99, grid={"M": [100]})
    assert main(["sweep", "--config", other]) == 2


def test_sweep_worker_pool_matches_sequential(tmp_path, capsys):
    cfg = _write_config(
        tmp_path,
        out_dir=str(tmp_path / "seq"),
        system={"kind": "planted", "d": 4},
        train={"max_sweeps": 3, "restarts": 2},
        grid={"M": [80, 120]},
    )
    assert main(["sweep", "--config", cfg]) == 0
    capsys.readouterr()
    assert main(["sweep", "--config", cfg, "--out-dir", str(tmp_path / "par"), "--threads", "2"]) == 0
    capsys.readouterr()
    _, seq = read_results(str(tmp_path / "seq" / "results.csv"))
    _, par = read_results(str(tmp_path / "par" / "results.csv"))
    for a, b in zip(seq, par):
        del a["seconds"], b["seconds"]
    assert seq == par


# -- exact ------------------------------------------------------------------------


def test_exact_fput_reports_low_interior_ranks(tmp_path, capsys):
    assert main(["exact", "--system", "fput", "--d", "8"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["max_interior_rank"] <= 4
    assert report["verification"]["max_rel_error"] <= 1e-10
    assert report["schema"] == 1 and report["config"]


def test_exact_dipole_ranks_within_printed_bound(tmp_path, capsys):
    report_path = str(tmp_path / "report.json")
    assert main(["exact", "--system", "dipole", "--d", "6", "--report", report_path]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report == json.loads(open(report_path).read())
    assert report["max_interior_rank"] <= 10  # 2(d-1)
    assert report["verification"]["max_rel_error"] <= 1e-10


# -- diagnose ---------------------------------------------------------------------


def test_diagnose_emits_interface_spectra(tmp_path, capsys):
    model_path = str(tmp_path / "exact.json")
    assert (
        main(["exact", "--system", "dipole", "--d", "5", "--save-model", model_path])
        == 0
    )
    capsys.readouterr()
    assert main(["diagnose", "--model", model_path]) == 0
    report = json.loads(capsys.readouterr().out)
    assert [c["k"] for c in report["components"]] == [1, 2, 3, 4, 5]
    first = report["components"][0]["interfaces"][0]
    assert first["rank"] >= 1
    assert "singular_values" in first and "renyi_entropy" in first


def test_diagnose_trained_model(tmp_path, capsys):
    cfg = _write_config(tmp_path, grid={"M": [200]}, train={"max_sweeps": 3})
    data_path = _generate(tmp_path, cfg, capsys)
    assert main(["train", "--config", cfg, "--data", data_path]) == 0
    model_path = json.loads(capsys.readouterr().out)["model"]
    assert main(["diagnose", "--model", model_path]) == 0
    report = json.loads(capsys.readouterr().out)
    assert len(report["components"]) == 6
