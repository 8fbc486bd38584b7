import json

import pytest

from app.core.ledger import CostLedger
from app.scripts.verify_ledger import main as verify_main

@pytest.fixture
def ledger(tmp_path):
    """Ledger with one train and one estimate run"""
    ledger = CostLedger(tmp_path / "ledger.jsonl")
    run = ledger.begin_run("train", "abc")
    ledger.record("train", run, "hf", "train", 30, 1.0, 3.0, "abc")
    ledger.record("train", run, "hf", "train", 10, 1.0, 1.0, "abc")
    run = ledger.begin_run("estimate", "def")
    ledger.record("estimate", run, "hf", "eval", 110, 1.0, 11.0, "def")
    ledger.record("estimate", run, "lf", "eval", 39980, 1e-4, 4.0, "def")
    return ledger

def test_totals_by_stage(ledger):
    """Test that totals aggregate by kind/purpose within a stage"""
    assert ledger.totals("train") == {"hf/train": 40}
    assert ledger.count("lf", "eval", stage="estimate") == 39980
    assert ledger.totals()["hf/eval"] == 110

def test_latest_run_only(ledger):
    """Test that a rerun of a stage replaces the counted run"""
    run = ledger.begin_run("train", "abc")
    assert run == 2
    ledger.record("train", run, "hf", "train", 20, 1.0)
    assert ledger.count("hf", "train", stage="train") == 20
    assert ledger.count("hf", "train", stage="train", run=1) == 40

def test_declared_cost(ledger):
    """Test count x unit cost accumulation"""
    assert ledger.cost("estimate") == pytest.approx(110 + 3.998)

def test_mean_wall_seconds(ledger):
    """Test per-kind wall time per evaluation"""
    means = ledger.mean_wall_seconds()
    assert means["hf"] == pytest.approx(15.0 / 150)
    assert means["lf"] == pytest.approx(4.0 / 39980)

def test_invalid_kind_and_purpose(ledger):
    """Test that unknown kinds and purposes are rejected"""
    with pytest.raises(ValueError):
        ledger.record("train", 1, "mf", "train", 1, 1.0)
    with pytest.raises(ValueError):
        ledger.record("train", 1, "hf", "warmup", 1, 1.0)
    with pytest.raises(ValueError):
        ledger.record("train", 1, "hf", "train", -1, 1.0)

def test_reload_and_verify(ledger):
    """Test that a reloaded ledger verifies and keeps its totals"""
    reloaded = CostLedger(ledger.path)
    result = reloaded.verify()
    assert result["valid"]
    assert result["verified_entries"] == len(ledger.entries)
    assert reloaded.totals() == ledger.totals()

def test_tampering_detected(ledger):
    """Test that an edited count breaks the hash chain"""
    lines = ledger.path.read_text().splitlines()
    entry = json.loads(lines[2])
    entry["count"] = 1
    lines[2] = json.dumps(entry, sort_keys=True)
    ledger.path.write_text("\n".join(lines) + "\n")
    result = CostLedger(ledger.path).verify()
    assert not result["valid"]
    assert result["invalid_entries"][0]["line"] == 3

def test_removal_detected(ledger):
    """Test that a deleted entry breaks the chain"""
    lines = ledger.path.read_text().splitlines()
    del lines[1]
    ledger.path.write_text("\n".join(lines) + "\n")
    assert not CostLedger(ledger.path).verify()["valid"]

def test_in_memory_ledger():
    """Test a ledger without a file"""
    ledger = CostLedger()
    run = ledger.begin_run("phase1", "x")
    ledger.record("phase1", run, "sv", "phase1", 1000, 1e-3)
    assert ledger.totals("phase1") == {"sv/phase1": 1000}
    assert ledger.verify()["file"] is None

def test_verify_script(ledger, capsys):
    """Test the ledger verification utility"""
    assert verify_main(["--ledger", str(ledger.path), "--totals"]) == 0
    out = capsys.readouterr().out
    assert "Chain valid: yes" in out
    assert "hf/eval" in out

def test_verify_script_missing_file(tmp_path):
    """Test the utility on a missing ledger"""
    assert verify_main(["--ledger", str(tmp_path / "none.jsonl")]) == 1
