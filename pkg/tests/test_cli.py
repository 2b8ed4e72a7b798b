import csv
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from mblbfgs.cli import main

BASE = ["--synthetic", "1000,50,10,1", "--problem", "logistic", "--method", "robust",
        "--strategy", "partition", "--r", "0.1", "--o", "0.2", "--alpha", "1",
        "--memory", "10", "--epochs", "3", "--seed", "1"]

HEADER = "k,epoch,F_batch,grad_norm_batch,F_full,grad_norm_full,skipped,batch_size,overlap_size,elapsed_ns"


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_writes_trace_and_manifest(tmp_path):
    out = tmp_path / "trace.csv"
    assert main(["run"] + BASE + ["--out", str(out)]) == 0
    text = out.read_text()
    assert text.splitlines()[0] == HEADER
    assert "\r" not in text
    rows = read_rows(out)
    assert rows[0]["k"] == "0"
    assert rows[0]["F_full"] != ""
    manifest = Path(str(out) + ".manifest").read_text()
    assert "method=robust_lbfgs" in manifest
    assert "dataset=synthetic:1000,50,10,1" in manifest
    assert "dataset_sha256=" in manifest


def test_run_byte_identical_across_executions(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run"] + BASE + ["--out", str(a)]) == 0
    assert main(["run"] + BASE + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_timing_flag_breaks_emptiness_not_determinism_columns(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["run"] + BASE + ["--timing", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert all(row["elapsed_ns"] != "" for row in rows)
    assert all(int(row["elapsed_ns"]) > 0 for row in rows)


def test_gd_trace_skipped_na_and_same_plans(tmp_path):
    gd_out = tmp_path / "gd.csv"
    rb_out = tmp_path / "rb.csv"
    flags = [f if f != "robust" else "gd" for f in BASE]
    assert main(["run"] + flags + ["--out", str(gd_out)]) == 0
    assert main(["run"] + BASE + ["--out", str(rb_out)]) == 0
    gd_rows = read_rows(gd_out)
    rb_rows = read_rows(rb_out)
    assert all(row["skipped"] == "" for row in gd_rows)
    assert any(row["skipped"] == "false" for row in rb_rows[:-1])
    for rg, rr in zip(gd_rows, rb_rows):
        assert rg["batch_size"] == rr["batch_size"]
        assert rg["overlap_size"] == rr["overlap_size"]


def test_paper_grid_values_accepted(tmp_path):
    for i, r in enumerate(("0.01", "0.05", "0.1")):
        for j, alpha in enumerate(("1", "0.1")):
            out = tmp_path / f"g{i}{j}.csv"
            code = main(["run", "--synthetic", "2000,20,5,1", "--problem", "logistic",
                         "--method", "robust", "--strategy", "partition",
                         "--r", r, "--o", "0.2", "--alpha", alpha,
                         "--max-iters", "5", "--seed", "1", "--out", str(out)])
            assert code == 0
    for k, p in enumerate(("0.1", "0.3", "0.5")):
        out = tmp_path / f"p{k}.csv"
        code = main(["run", "--synthetic", "2000,20,5,1", "--problem", "logistic",
                     "--method", "robust", "--strategy", "fault", "--nodes", "16",
                     "--p", p, "--alpha", "0.1", "--max-iters", "5", "--seed", "1",
                     "--out", str(out)])
        assert code == 0


def test_exit_codes_config_and_usage_errors(tmp_path, capsys):
    out = str(tmp_path / "x.csv")
    assert main(["run"] + BASE + ["--out", out, "--bogus-flag"]) == 1
    assert "error:" in capsys.readouterr().err
    assert main(["run", "--synthetic", "100,10,3,1", "--problem", "logistic",
                 "--method", "robust", "--alpha", "0", "--epochs", "1",
                 "--out", out]) == 1
    assert main(["run", "--dataset", str(tmp_path / "missing.svm"), "--problem", "logistic",
                 "--method", "robust", "--alpha", "1", "--epochs", "1", "--out", out]) == 1
    assert main(["run", "--synthetic", "100,10,3", "--problem", "logistic",
                 "--method", "robust", "--alpha", "1", "--epochs", "1", "--out", out]) == 1


def test_exit_code_two_on_divergence(tmp_path):
    out = tmp_path / "div.csv"
    code = main(["run", "--synthetic", "500,20,5,1", "--problem", "quadratic",
                 "--quad-noise", "0", "--method", "gd", "--strategy", "subsample",
                 "--r", "1.0", "--o", "0.2", "--alpha", "50", "--max-iters", "500",
                 "--seed", "1", "--out", str(out)])
    assert code == 2
    assert out.exists()


def test_dataset_file_and_manifest_hash(tmp_path):
    data = tmp_path / "toy.svm"
    data.write_text("+1 1:1.0 3:0.5\n-1 2:2.0\n+1 1:0.25 2:1.0\n-1 3:1.5\n" * 25)
    out = tmp_path / "trace.csv"
    args = ["run", "--dataset", str(data), "--problem", "logistic", "--method", "sgd",
            "--alpha", "0.1", "--epochs", "1", "--seed", "2", "--out", str(out)]
    assert main(args) == 0
    first = Path(str(out) + ".manifest").read_text()
    assert main(args) == 0
    second = Path(str(out) + ".manifest").read_text()
    line = next(l for l in first.splitlines() if l.startswith("dataset_sha256="))
    assert line in second
    data.write_text(data.read_text() + "+1 1:9.0\n")
    assert main(args) == 0
    third = Path(str(out) + ".manifest").read_text()
    assert line not in third


def test_sweep_summary_and_figure(tmp_path):
    out_dir = tmp_path / "sweep"
    assert main(["sweep"] + BASE + ["--seeds", "3", "--out", str(out_dir)]) == 0
    traces = sorted(out_dir.glob("trace_seed*.csv"))
    assert [t.name for t in traces] == ["trace_seed1.csv", "trace_seed2.csv", "trace_seed3.csv"]
    assert all(Path(str(t) + ".manifest").exists() for t in traces)

    summary = read_rows(out_dir / "summary.csv")
    assert summary, "summary should not be empty"
    # Oracle: recompute the statistics from the per-seed trace files.
    per_seed = []
    for trace in traces:
        series = {}
        for row in read_rows(trace):
            if row["grad_norm_full"] and int(row["epoch"]) not in series:
                series[int(row["epoch"])] = float(row["grad_norm_full"])
        per_seed.append(series)
    for row in summary:
        epoch = int(row["epoch"])
        values = np.array([s[epoch] for s in per_seed])
        assert abs(float(row["grad_norm_full_mean"]) - values.mean()) <= 1e-12 * max(1, values.mean())
        assert float(row["grad_norm_full_min"]) == values.min()
        assert float(row["grad_norm_full_max"]) == values.max()
    assert (out_dir / "summary.svg").exists()


def test_sweep_concurrent_jobs_match_sequential(tmp_path):
    seq_dir = tmp_path / "seq"
    par_dir = tmp_path / "par"
    flags = ["sweep"] + BASE + ["--seeds", "3", "--no-figure"]
    assert main(flags + ["--out", str(seq_dir)]) == 0
    assert main(flags + ["--jobs", "3", "--out", str(par_dir)]) == 0
    assert (seq_dir / "summary.csv").read_bytes() == (par_dir / "summary.csv").read_bytes()
    for i in (1, 2, 3):
        assert (seq_dir / f"trace_seed{i}.csv").read_bytes() == \
            (par_dir / f"trace_seed{i}.csv").read_bytes()


def test_sweep_single_seed_summary_equals_trace(tmp_path):
    out_dir = tmp_path / "one"
    assert main(["sweep"] + BASE + ["--seeds", "1", "--no-figure", "--out", str(out_dir)]) == 0
    summary = read_rows(out_dir / "summary.csv")
    trace = read_rows(out_dir / "trace_seed1.csv")
    firsts = {}
    for row in trace:
        if row["grad_norm_full"] and int(row["epoch"]) not in firsts:
            firsts[int(row["epoch"])] = row["grad_norm_full"]
    for row in summary:
        val = firsts[int(row["epoch"])]
        assert row["grad_norm_full_mean"] == val
        assert row["grad_norm_full_min"] == val
        assert row["grad_norm_full_max"] == val


def _write_summary(path, epochs, mean, lo, hi):
    lines = ["epoch,grad_norm_full_mean,grad_norm_full_min,grad_norm_full_max"]
    for row in zip(epochs, mean, lo, hi):
        lines.append(",".join(str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def test_plot_svg_structure(tmp_path):
    s1 = tmp_path / "alpha.csv"
    s2 = tmp_path / "beta.csv"
    _write_summary(s1, [0, 1, 2], [1.0, 0.5, 0.25], [0.9, 0.4, 0.2], [1.1, 0.6, 0.3])
    _write_summary(s2, [0, 1, 2], [2.0, 1.0, 0.5], [1.8, 0.8, 0.4], [2.2, 1.2, 0.6])
    out = tmp_path / "plot.svg"
    assert main(["plot", "--traces", f"{s1},{s2}", "--out", str(out), "--logy"]) == 0

    svg = out.read_text()
    root = ET.fromstring(svg)
    ns = {"svg": "http://www.w3.org/2000/svg"}
    styles = {}
    for group in root.iter("{http://www.w3.org/2000/svg}g"):
        gid = group.get("id", "")
        if gid.startswith("series"):
            path = group.find("svg:path", ns)
            styles[gid] = path.get("style", "")
    for i in (0, 1):
        assert "stroke-dasharray" not in styles[f"series{i}_mean"]
        assert "stroke-dasharray" in styles[f"series{i}_min"]
        assert "stroke-dasharray" in styles[f"series{i}_max"]
    # Legend entries in input order.
    assert svg.index("alpha") < svg.index("beta")


def test_plot_logy_clamps_zero_with_warning(tmp_path):
    s1 = tmp_path / "zero.csv"
    _write_summary(s1, [0, 1], [1.0, 0.0], [0.5, 0.0], [1.5, 0.0])
    out = tmp_path / "plot.svg"
    with pytest.warns(UserWarning, match="clamping"):
        assert main(["plot", "--traces", str(s1), "--out", str(out), "--logy"]) == 0
    assert out.exists()


def test_plot_missing_columns_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("epoch,grad_norm_full_mean\n0,1.0\n")
    assert main(["plot", "--traces", str(bad), "--out", str(tmp_path / "p.svg")]) == 1
    assert "missing columns" in capsys.readouterr().err


def test_verify_subcommand_and_report(tmp_path):
    report = tmp_path / "verify.csv"
    code = main(["verify", "--check", "two-loop", "--check", "gradient",
                 "--instances", "10", "--out", str(report)])
    assert code == 0
    rows = read_rows(report)
    assert {row["check"] for row in rows} == {"two-loop", "gradient"}
    assert all(row["passed"] == "true" for row in rows)


def test_verify_unknown_check(capsys):
    assert main(["verify", "--check", "telepathy"]) == 1
    assert "unknown check" in capsys.readouterr().err
