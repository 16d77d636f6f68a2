import json
import os
import subprocess
import sys

import pytest

from sclab.cli import run


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    out = str(d / "out")
    assert run(["generate", "--seed", "3", "-o", out]) == 0
    assert run(["train", "--data", f"{out}/transactions.csv", "--seed", "3", "-o", out, "--epochs", "5"]) == 0
    return d, out


def files_of(path):
    return {n: open(os.path.join(path, n), "rb").read() for n in sorted(os.listdir(path))
            if not n.endswith(".manifest.json")}


def test_generate_outputs(workdir):
    _, out = workdir
    for name in ("transactions.csv", "dataset.json", "prodgraph.jsonl", "supply.jsonl", "shocks.csv",
                 "scenario.cfg", "generate.manifest.json"):
        assert os.path.exists(os.path.join(out, name)), name
    meta = json.load(open(os.path.join(out, "dataset.json")))
    assert meta["n_products"] == 50
    manifest = json.load(open(os.path.join(out, "generate.manifest.json")))
    assert manifest["command"] == "generate" and manifest["config"]["seed"] == 3


def test_train_outputs(workdir):
    _, out = workdir
    log = open(os.path.join(out, "train_log.csv")).read().splitlines()
    assert 2 <= len(log) <= 6
    assert os.path.exists(os.path.join(out, "alpha.mat")) and os.path.exists(os.path.join(out, "ranking.csv"))


def test_eval_pf(workdir):
    _, out = workdir
    assert run(["eval-pf", "--data", f"{out}/transactions.csv", "--weights", f"{out}/alpha.mat",
                "--truth", f"{out}/prodgraph", "-o", out]) == 0
    text = open(os.path.join(out, "eval_pf.txt")).read()
    for name in ("inventory", "temporal_correlation", "pmi", "random"):
        assert f"{name}" in text


def test_eval_links_and_stats(workdir):
    _, out = workdir
    assert run(["eval-links", "--data", f"{out}/transactions.csv", "--weights", f"{out}/alpha.mat",
                "--apply-penalties", "-o", out]) == 0
    assert "mrr=" in open(os.path.join(out, "eval_links.txt")).read()
    assert run(["stats", "--data", f"{out}/transactions.csv", "-o", out]) == 0
    assert "modularity=" in open(os.path.join(out, "stats.txt")).read()


def test_usage_errors_exit_2(tmp_path, capsys):
    assert run(["generate", "--scenario", "bogus"]) == 2
    assert run(["train", "-o", str(tmp_path)]) == 2
    assert run(["frobnicate"]) == 2


def test_runtime_errors_exit_1(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_key = 1\n")
    assert run(["generate", "--config", str(bad), "-o", str(tmp_path)]) == 1
    assert run(["stats", "--data", str(tmp_path / "missing.csv"), "-o", str(tmp_path)]) == 1
    broken = tmp_path / "tx.csv"
    broken.write_text("t,supplier,buyer,product,amount\n0,1,2,3,not-a-number\n")
    assert run(["stats", "--data", str(broken), "-o", str(tmp_path)]) == 1


def test_seed_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("SCLAB_SEED", "11")
    assert run(["generate", "--steps", "20", "-o", str(tmp_path)]) == 0
    assert json.load(open(tmp_path / "generate.manifest.json"))["config"]["seed"] == 11
    monkeypatch.setenv("SCLAB_SEED", "eleven")
    assert run(["generate", "--steps", "20", "-o", str(tmp_path)]) == 1


def test_manifest_rerun_is_byte_identical(workdir, tmp_path):
    _, out = workdir
    again = str(tmp_path / "again")
    assert run(["generate", "--config", f"{out}/generate.manifest.json", "-o", again]) == 0
    first, second = files_of(out), files_of(again)
    for name, blob in second.items():
        assert first[name] == blob, name


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sclab", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout
