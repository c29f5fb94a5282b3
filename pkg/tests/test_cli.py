import json
import subprocess
import sys

import pytest

import ringdeph.cli as cli
from ringdeph.cli import main
from ringdeph.sampler import DephasingPool
from ringdeph.synthesis import load_controllers

from test_campaign import SMOKE


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["sample-dephasing", "--N", "5", "--pool-target", "120", "--batch-size", "256",
                 "--out", str(d)]) == 0
    assert main(["synthesize", "--N", "5", "--in", "1", "--out", "2", "--top", "12",
                 "--restarts", "12", "--seed", "5", "--out-dir", str(d)]) == 0
    ctrl = d / "controllers_fidelity_N5_1-2.jsonl"
    assert main(["scan", "--controllers", str(ctrl), "--pool", str(d / "pool_N5.jsonl"),
                 "--grid", "51", "--heatmaps", "1", "--out", str(d)]) == 0
    return d


def test_pipeline_outputs(pipeline):
    d = pipeline
    assert len(DephasingPool.load(d / "pool_N5.jsonl")) == 120
    assert len(load_controllers(d / "controllers_fidelity_N5_1-2.jsonl")) == 12
    rec = d / "records_controllers_fidelity_N5_1-2.jsonl"
    assert rec.exists() and (d / "heatmap_controllers_fidelity_N5_1-2_c000.svg").exists()
    assert main(["test", "--records", str(rec), "--out", str(d)]) == 0
    rows = (d / "tests.csv").read_text().splitlines()
    assert len(rows) == 4
    assert main(["report", "--records", str(rec), "--out", str(d)]) == 0
    assert (d / "scatter_records_controllers_fidelity_N5_1-2.svg").exists()
    assert (d / "orthogonal.csv").exists()


def test_config_file_supplies_options(pipeline, tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({"N": 3, "pool_target": 40, "batch_size": 64}))
    assert main(["sample-dephasing", "--config", str(cfg), "--N", "5", "--out", str(tmp_path)]) == 0
    pool = DephasingPool.load(tmp_path / "pool_N5.jsonl")
    assert len(pool) == 40 and pool.config.N == 5


def test_exit_code_config_errors(pipeline, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nope": 1}))
    assert main(["sample-dephasing", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["sample-dephasing", "--out", str(tmp_path)]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["scan", "--controllers", str(tmp_path / "none.jsonl"), "--pool",
                 str(pipeline / "pool_N5.jsonl")]) == 2
    assert main(["scan", "--controllers", str(pipeline / "controllers_fidelity_N5_1-2.jsonl"),
                 "--pool", str(pipeline / "pool_N5.jsonl"), "--draw", "10",
                 "--out", str(tmp_path)]) == 2
    assert main(["synthesize", "--N", "4", "--objective", "dephasing", "--out-dir",
                 str(tmp_path)]) == 2
    assert main(["campaign", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["sample-dephasing", "--N", "4", "--seed", "-3", "--out", str(tmp_path)]) == 2


def test_exit_code_numerical_failure(monkeypatch, tmp_path):
    def boom(*a, **k):
        raise FloatingPointError("overflow in propagator")
    monkeypatch.setattr(cli, "generate_pool", boom)
    assert main(["sample-dephasing", "--N", "4", "--out", str(tmp_path)]) == 3


def test_campaign_exit_codes(monkeypatch, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(SMOKE))
    assert main(["campaign", "--config", str(cfg), "--out", str(tmp_path / "ok")]) == 0
    import ringdeph.campaign as campaign
    def boom(*a, **k):
        raise RuntimeError("diverged")
    monkeypatch.setattr(campaign, "synthesize_top", boom)
    assert main(["campaign", "--config", str(cfg), "--out", str(tmp_path / "bad")]) == 4


def test_console_entry_help():
    out = subprocess.run([sys.executable, "-m", "ringdeph.cli", "--help"], capture_output=True,
                         text=True)
    assert out.returncode == 0
    for cmd in ("synthesize", "sample-dephasing", "scan", "test", "report", "campaign"):
        assert cmd in out.stdout


def test_scan_all_zero_error_is_partial(tmp_path):
    # mirror-symmetric 1 -> 3 transfer on a 4-ring reaches e = 0, so nothing is scannable
    assert main(["sample-dephasing", "--N", "4", "--pool-target", "20", "--batch-size", "64",
                 "--out", str(tmp_path)]) == 0
    assert main(["synthesize", "--N", "4", "--in", "1", "--out", "3", "--top", "3",
                 "--restarts", "6", "--seed", "5", "--out-dir", str(tmp_path)]) == 0
    ctrls = load_controllers(tmp_path / "controllers_fidelity_N4_1-3.jsonl")
    assert all(c.nominal_error <= 1e-12 for c in ctrls)
    assert main(["scan", "--controllers", str(tmp_path / "controllers_fidelity_N4_1-3.jsonl"),
                 "--pool", str(tmp_path / "pool_N4.jsonl"), "--grid", "11",
                 "--out", str(tmp_path)]) == 4
