import csv
import json

import numpy as np
import pytest

from h22cascade.cli import EXIT_INVARIANT, EXIT_OK, EXIT_USAGE, main
from h22cascade.config import OUTPUT_ENV
from h22cascade.io import load_realization


def run(args, capsys=None):
    try:
        return main(args)
    except SystemExit as exc:
        return exc.code


def test_usage_errors(tmp_path):
    assert run(["grow", "--bogus"]) == EXIT_USAGE
    assert run([]) == EXIT_USAGE
    assert run(["grow", "--rho", "0.5", "--out", str(tmp_path)]) == EXIT_USAGE
    assert run(["grow", "--set", "nonsense", "--out", str(tmp_path)]) == EXIT_USAGE
    assert run(["measure", str(tmp_path / "missing.h22"), "--out", str(tmp_path)]) == EXIT_USAGE
    assert run(["stats", "--s", "0.7", "--out", str(tmp_path)]) == EXIT_USAGE


def test_grow_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert run(["grow", "--seed", "11", "--level", "6", "--replicates", "2",
                    "--out", str(tmp_path / d)]) == EXIT_OK
    # run_config.txt records the output directory, so it is left out here
    for name in ("realization_0000.h22", "realization_0001.h22", "grow_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    r0 = load_realization(tmp_path / "a" / "realization_0000.h22")
    r1 = load_realization(tmp_path / "a" / "realization_0001.h22")
    assert r0.depth == 6 and r0.gamma != r1.gamma


def test_grow_workers_match_serial(tmp_path):
    assert run(["grow", "--seed", "2", "--level", "4", "--replicates", "3",
                "--out", str(tmp_path / "s")]) == EXIT_OK
    assert run(["grow", "--seed", "2", "--level", "4", "--replicates", "3", "--workers", "2",
                "--out", str(tmp_path / "p")]) == EXIT_OK
    for k in range(3):
        name = f"realization_{k:04d}.h22"
        assert (tmp_path / "s" / name).read_bytes() == (tmp_path / "p" / name).read_bytes()


def test_measure(tmp_path):
    assert run(["grow", "--seed", "4", "--level", "7", "--format", "json",
                "--out", str(tmp_path)]) == EXIT_OK
    path = tmp_path / "realization_0000.json"
    assert run(["measure", str(path), "--depth", "5", "--out", str(tmp_path)]) == EXIT_OK
    with open(tmp_path / "measure.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 32
    r = load_realization(path)
    total = sum(float(row["cell_mass"]) for row in rows)
    assert total == pytest.approx(r.total_mass(), rel=1e-12)
    assert (tmp_path / "measure.svg").read_text().startswith("<svg")
    assert run(["measure", str(path), "--depth", "9", "--out", str(tmp_path)]) == EXIT_USAGE


def test_verify_exit_codes(tmp_path):
    base = ["verify", "--seed", "7", "--samples", "2000", "--max-level", "8"]
    assert run(base + ["--suite", "graining,conservation,walk", "--out", str(tmp_path / "ok")]) \
        == EXIT_OK
    assert run(base + ["--suite", "graining", "--inject-fault",
                       "--out", str(tmp_path / "bad")]) == EXIT_INVARIANT
    rep = json.loads((tmp_path / "bad" / "verify_report.json").read_text())
    assert rep["exit_code"] == EXIT_INVARIANT
    assert any(not r["passed"] for r in rep["reports"])


def test_verify_statistical_suites(tmp_path):
    assert run(["verify", "--seed", "7", "--samples", "5000", "--suite",
                "laplace,ward,martingale,expmart,totalmass", "--lam", "0.5,1",
                "--s", "0.2,0.3", "--out", str(tmp_path)]) == EXIT_OK
    text = (tmp_path / "verify_report.txt").read_text()
    assert "ward identity level 3 s=0.2" in text


def test_stats_command(tmp_path):
    assert run(["stats", "--wbar", "0.1", "--level", "6", "--max-level", "12",
                "--samples", "5000", "--out", str(tmp_path)]) == EXIT_OK
    info = json.loads((tmp_path / "singularity.json").read_text())
    assert info["conserved"] and len(info["depths"]) == 13
    with open(tmp_path / "fractional_moments.csv") as fh:
        assert len(list(csv.reader(fh))) == 1 + 7


def test_output_env(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "envout"))
    assert run(["grow", "--level", "2"]) == EXIT_OK
    assert (tmp_path / "envout" / "realization_0000.h22").exists()


def test_config_file_flag(tmp_path):
    cfg = tmp_path / "run.txt"
    cfg.write_text(f"level = 3\nseed = 5\nout = {tmp_path / 'o'}\n")
    assert run(["grow", "--config", str(cfg), "--set", "wbar=0.5"]) == EXIT_OK
    text = (tmp_path / "o" / "run_config.txt").read_text()
    assert "wbar = 0.5" in text and "seed = 5" in text
