import json

import pytest

from bayeslrp.cli import main

SMALL = ["--set", "dataset=synthetic-manifold", "--set", "train_size=120", "--set", "test_size=8",
         "--set", "hidden=6,6", "--set", "sgd_epochs=10", "--set", "hmc_draws=20", "--set", "hmc_thinning=1",
         "--set", "hmc_step_size=0.01", "--set", "hmc_leapfrog_steps=4", "--set", "vi_steps=10",
         "--set", "vi_batch_size=40", "--set", "sample_counts=1,3", "--set", "kgrid=2,4",
         "--set", "layers=0,2", "--set", "inference=hmc"]


def test_pipeline_through_checkpoints(tmp_path, capsys):
    det, hmc, vi = tmp_path / "det.bslb", tmp_path / "hmc.bslb", tmp_path / "vi.bslb"
    assert main(["train", *SMALL, "--out", str(det)]) == 0
    assert main(["infer-hmc", *SMALL, "--init", str(det), "--out", str(hmc)]) == 0
    assert main(["infer-vi", *SMALL, "--init", str(det), "--out", str(vi)]) == 0
    assert main(["attack", *SMALL, "--model", str(hmc), "--out", str(tmp_path / "atk")]) == 0
    assert len((tmp_path / "atk" / "attack.csv").read_text().splitlines()) == 9
    assert main(["lrp", *SMALL, "--model", str(det), "--point", "2", "--k", "3",
                 "--out", str(tmp_path / "lrp")]) == 0
    assert len((tmp_path / "lrp" / "heatmap.csv").read_text().splitlines()) == 11
    out = tmp_path / "rob"
    assert main(["robustness", *SMALL, "--model", str(det), "--ensemble", str(hmc), "--ensemble", str(vi),
                 "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert {"deterministic/N=1", "bayes-hmc/N=3", "bayes-vi/N=3"} <= set(summary["groups"])
    assert (out / "klrp_histograms.png").exists()
    assert main(["report", "--records", str(out / "records.csv"), "--out", str(tmp_path / "rep"),
                 "--no-figures"]) == 0
    assert (tmp_path / "rep" / "records.csv").read_bytes() == (out / "records.csv").read_bytes()


def test_geometry_command(tmp_path):
    args = ["geometry", "--set", "n_train=60", "--set", "n_eval=10", "--set", "hidden=6",
            "--set", "sgd_epochs=5", "--set", "hmc_draws=20", "--set", "hmc_leapfrog_steps=3",
            "--set", "sample_counts=1,4", "--out", str(tmp_path)]
    assert main(args) == 0
    assert len((tmp_path / "zero_average.csv").read_text().splitlines()) == 3
    assert (tmp_path / "zero_average.png").exists()


@pytest.mark.parametrize("argv, code", [
    (["train", "--set", "bogus=1", "--out", "x"], 2),
    (["train", "--set", "noequals", "--out", "x"], 2),
    (["report", "--records", "/nonexistent/records.csv", "--out", "/tmp/x"], 6),
])
def test_exit_codes(argv, code, capsys):
    assert main(argv) == code
    assert "error:" in capsys.readouterr().err


def test_bad_checkpoint_exit_code(tmp_path):
    bad = tmp_path / "bad.bslb"
    bad.write_bytes(b"NOPE" + bytes(20))
    assert main(["attack", *SMALL, "--model", str(bad), "--out", str(tmp_path)]) == 4
