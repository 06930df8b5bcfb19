import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from rhfl import cli, containers
from rhfl.config import ABLATION_PRESETS, loads
from rhfl.data import empirical_flip_rate
from rhfl.errors import FormatError
from rhfl.experiment import METRICS_HEADER, ablation_sweep, emit_plot_data, read_metrics, run_experiment

from _configs import TINY_TOML

GOLDEN_HEADER = (
    "schema,run,seed,noise_kind,noise_rate,partition,beta,schedule_scale,ce_weight,rce_weight,"
    "temperature,confidence_gain,hfl,sl,dlr,eccr,phase,round,client,arch,accuracy,sl_loss,"
    "confidence,weight,realized_noise_rate"
)


def _spec(extra=""):
    return loads(TINY_TOML + extra)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_golden_header(tmp_path):
    assert ",".join(METRICS_HEADER) == GOLDEN_HEADER
    run_experiment(_spec(), tmp_path)
    assert (tmp_path / "metrics.csv").read_text().splitlines()[0] == GOLDEN_HEADER


def test_row_accounting_and_files(tmp_path):
    status, entries = run_experiment(_spec(), tmp_path)
    assert status == 0 and len(entries) == 1
    rows = _rows(tmp_path / "metrics.csv")
    k, rounds, pre = 4, 2, 3
    assert len(rows) == rounds * k + pre * k
    assert sum(r["phase"] == "round" for r in rows) == rounds * k
    run_dir = tmp_path / "runs" / entries[0]["run"]
    assert (run_dir / "config.toml").exists() and (run_dir / "metrics.csv").exists()
    assert loads((tmp_path / "config.toml").read_text()) == _spec()
    summary = json.loads((tmp_path / "summary.json").read_text())
    e = summary["entries"][0]
    assert e["average_accuracy"] == pytest.approx(np.mean(e["final_accuracy"]), abs=1e-15)


def test_round_weights_sum_to_one_in_metrics(tmp_path):
    run_experiment(_spec(), tmp_path)
    rows = [r for r in _rows(tmp_path / "metrics.csv") if r["phase"] == "round"]
    for rnd in {r["round"] for r in rows}:
        assert sum(float(r["weight"]) for r in rows if r["round"] == rnd) == pytest.approx(1.0, abs=1e-12)


def test_rerun_is_byte_identical(tmp_path):
    run_experiment(_spec(), tmp_path / "a")
    run_experiment(_spec(), tmp_path / "b")
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_parallel_workers_match_serial(tmp_path, monkeypatch):
    extra = '\n[sweep]\n"noise.rate" = [0.1, 0.3]\n'
    run_experiment(_spec(extra), tmp_path / "serial")
    monkeypatch.setenv("RHFL_THREADS", "2")
    run_experiment(_spec(extra), tmp_path / "pool")
    assert (tmp_path / "serial" / "metrics.csv").read_bytes() == (tmp_path / "pool" / "metrics.csv").read_bytes()


def test_two_by_two_grid_times_five_seeds(tmp_path):
    extra = '\n[sweep]\n"noise.rate" = [0.1, 0.2]\n"noise.kind" = ["symflip", "pairflip"]\n'
    spec = loads(TINY_TOML.replace("rounds = 2", "rounds = 1") + extra)
    status, entries = run_experiment(spec, tmp_path, seeds=[0, 1, 2, 3, 4])
    assert status == 0 and len(entries) == 20
    assert len(json.loads((tmp_path / "summary.json").read_text())["entries"]) == 20
    assert len({e["run"] for e in entries}) == 20


def test_failed_run_is_recorded_and_sweep_continues(tmp_path):
    extra = '\n[sweep]\n"data.partition" = ["iid", "dirichlet"]\n'
    spec = loads(TINY_TOML.replace("classes = 4", "classes = 4\nmin_per_client = 200") + extra)
    status, entries = run_experiment(spec, tmp_path)
    assert status == 1
    assert [e["status"] for e in entries] == ["ok", "failed"]
    assert "PartitionError" in entries[1]["error"]


def test_ablation_table(tmp_path):
    base = _spec('\n[sweep]\n"noise.rate" = [0.2]\n')
    status, entries = ablation_sweep(base, tmp_path)
    assert status == 0
    rows = _rows(tmp_path / "ablation.csv")
    assert len(rows) == 6
    got = [tuple(r[f] == "1" for f in ("hfl", "sl", "dlr", "eccr")) for r in rows]
    want = [(f.hfl, f.sl, f.dlr, f.eccr) for f in ABLATION_PRESETS.values()]
    assert got == want

    # the "none" row is the plain local-only baseline run
    baseline = loads(TINY_TOML + "\n[ablation]\nhfl = false\nsl = false\ndlr = false\neccr = false\n")
    _, (base_entry,) = run_experiment(baseline, tmp_path / "baseline")
    none = next(e for e in entries if e["ablation"] == "none")
    assert none["final_accuracy"] == base_entry["final_accuracy"]
    assert float(rows[0]["avg"]) == base_entry["average_accuracy"]


def test_plot_data_projection(tmp_path):
    run_experiment(_spec(), tmp_path)
    files = emit_plot_data(tmp_path / "metrics.csv")
    assert len([f for f in files if f.name.endswith("_loss.csv")]) == 4
    assert len([f for f in files if f.name.endswith("_accuracy.csv")]) == 4
    rows = _rows(tmp_path / "metrics.csv")
    for k in range(4):
        mine = [r for r in rows if r["client"] == str(k)]
        run = mine[0]["run"]
        loss = _rows(tmp_path / "curves" / f"{run}_client{k}_loss.csv")
        acc = _rows(tmp_path / "curves" / f"{run}_client{k}_accuracy.csv")
        assert [c["value"] for c in loss] == [r["sl_loss"] for r in mine]
        assert [c["value"] for c in acc] == [r["accuracy"] for r in mine]
        assert [(c["phase"], c["round"]) for c in acc] == [(r["phase"], r["round"]) for r in mine]


def test_plot_data_from_empty_metrics(tmp_path):
    (tmp_path / "metrics.csv").write_text("")
    assert emit_plot_data(tmp_path / "metrics.csv", tmp_path / "curves") == []
    (tmp_path / "header_only.csv").write_text(GOLDEN_HEADER + "\n")
    assert emit_plot_data(tmp_path / "header_only.csv", tmp_path / "curves") == []


def test_malformed_metrics_names_line(tmp_path):
    run_experiment(_spec(), tmp_path)
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    lines[4] = lines[4] + ",extra"
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError, match=r"bad\.csv:5:"):
        read_metrics(bad)
    with pytest.raises(FormatError, match=r":5:"):
        emit_plot_data(bad)


def test_realized_noise_matches_saved_datasets(tmp_path):
    spec = replace(_spec(), save_datasets=True, checkpoints=True)
    _, (entry,) = run_experiment(spec, tmp_path)
    run_dir = tmp_path / "runs" / entry["run"]
    rows = _rows(tmp_path / "metrics.csv")
    for k in range(4):
        noisy = containers.load_dataset(run_dir / "datasets" / f"client{k}_noisy.rhds")
        clean = containers.load_dataset(run_dir / "datasets" / f"client{k}_clean.rhds")
        rate = empirical_flip_rate(clean.labels, noisy.labels)
        assert {float(r["realized_noise_rate"]) for r in rows if r["client"] == str(k)} == {rate}
    assert len(list((run_dir / "checkpoints").glob("*.rhck"))) == 4 * 3


# command line ----------------------------------------------------------------------

def _write_config(tmp_path, text=TINY_TOML):
    path = tmp_path / "exp.toml"
    path.write_text(text)
    return path


def test_cli_print_config(tmp_path, capsys):
    assert cli.main(["run", str(_write_config(tmp_path, "")), "--print-config"]) == 0
    out = capsys.readouterr().out
    assert loads(out) == loads("")
    assert "confidence_gain = 1.4" in out


def test_cli_run_with_plots(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "o"), "--seeds", "0,1", "--plots"]) == 0
    assert len(list((tmp_path / "o" / "curves").glob("*.csv"))) == 2 * 4 * 2
    assert "avg acc" in capsys.readouterr().out


def test_cli_config_errors_exit_nonzero(tmp_path, capsys):
    bad = _write_config(tmp_path, "[train]\nnonsense = 1\n")
    assert cli.main(["run", str(bad)]) == 2
    assert "train.nonsense" in capsys.readouterr().err
    assert cli.main(["run", str(tmp_path / "missing.toml")]) == 2


def test_cli_failed_run_exit_status(tmp_path):
    text = TINY_TOML.replace("classes = 4", 'classes = 4\npartition = "dirichlet"\nmin_per_client = 200')
    assert cli.main(["run", str(_write_config(tmp_path, text)), "--out", str(tmp_path / "o")]) == 1


def test_cli_export_and_inspect(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    assert cli.main(["export-data", str(cfg), "--seed", "0", "--out", str(tmp_path / "d")]) == 0
    assert cli.main(["inspect-data", str(tmp_path / "d" / "client0_noisy.rhds"),
                     "--clean", str(tmp_path / "d" / "client0_clean.rhds")]) == 0
    assert "flip rate" in capsys.readouterr().out
