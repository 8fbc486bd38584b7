import numpy as np
import pandas as pd
import pytest

from app.core.ledger import CostLedger
from app.core.models import EstimatorReport, LimitStateEstimate
from app.services.estimators import exceedance_curve
from app.services.reporter import ReportWriter
from app.services.strata import Stratification

REFERENCE_COUNTS = [9214, 409884, 1727907, 1992292, 1149570, 472190, 164928, 52417, 15599, 5999]

def _report(method, estimate, cov):
    return EstimatorReport(
        version=1,
        config_hash="abc",
        method=method,
        limit_states=[LimitStateEstimate(name="roof", channel=2, threshold=0.08, method=method,
                                         estimate_raw=estimate, estimate=estimate,
                                         variance=(estimate * cov) ** 2 if cov else 0.0, cov=cov)],
    )

@pytest.fixture
def reference_strata():
    """Ten strata carrying reference Phase-I counts"""
    return Stratification(
        boundaries=np.array([0.0, 1, 2, 3, 4, 5, 6, 7, 8, 9.5, np.inf]),
        counts=np.array(REFERENCE_COUNTS),
        seed=0,
        n_mc=6_000_000,
        pools=[np.array([], dtype=int) for _ in REFERENCE_COUNTS],
    )

def test_strata_table(reference_strata):
    """Test that the table prints four-decimal probabilities and the totals"""
    text = ReportWriter.strata_table(reference_strata.summary_frame())
    lines = text.splitlines()
    assert len(lines) == 12
    assert "0.0015" in lines[1]
    assert "0.0010" in lines[10]
    assert "inf" in lines[10]
    assert lines[-1].split()[-2:] == ["1.0000", "6000000"]

def test_comparison_table():
    """Test one column pair per method and an undefined COV marker"""
    text = ReportWriter.comparison_table([_report("MC", 1.1e-3, 0.1), _report("MFSS", 0.0, None)])
    header, row = text.splitlines()
    assert "MC H" in header and "MFSS COV" in header
    assert row.startswith("roof")
    assert "1.1000e-03" in row
    assert "10.00%" in row
    assert "n/a" in row

def test_comparison_table_missing_limit_state():
    """Test that a limit state absent from one report shows a dash"""
    other = _report("GSS", 1e-3, 0.2)
    other.limit_states[0].name = "first_floor"
    lines = ReportWriter.comparison_table([_report("MC", 1e-3, 0.1), other]).splitlines()
    assert len(lines) == 3
    assert "-" in lines[1].split()

def test_cost_report_flags_slow_sv():
    """Test that an SV under 100x cheaper than HF is flagged"""
    ledger = CostLedger()
    run = ledger.begin_run("train", "abc")
    ledger.record("train", run, "hf", "train", 10, 1.0, wall_seconds=10.0)
    ledger.record("train", run, "sv", "phase1", 100, 0.001, wall_seconds=2.0)
    text, flags = ReportWriter.cost_report(ledger)
    assert flags == ["sv_cost_ratio_below_100"]
    assert "HF/SV cost ratio  50.0" in text
    assert "hf/train          10" in text

def test_cost_report_without_flags():
    """Test a cheap SV and a ledger without SV entries"""
    ledger = CostLedger()
    run = ledger.begin_run("phase1", "abc")
    ledger.record("phase1", run, "sv", "phase1", 1000, 0.001, wall_seconds=1.0)
    ledger.record("phase1", run, "hf", "train", 10, 1.0, wall_seconds=10.0)
    assert ReportWriter.cost_report(ledger)[1] == []
    assert ReportWriter.cost_report(CostLedger())[1] == []

def test_json_round_trip(tmp_path):
    """Test that a written report reads back equal"""
    report = _report("GSS", 2e-3, 0.3)
    path = tmp_path / "reports" / "baseline_report.json"
    ReportWriter.write_json(report, path)
    assert ReportWriter.read_json(path) == report
    assert ReportWriter.read_json(tmp_path / "missing.json") is None

def test_write_curves(tmp_path):
    """Test one CSV per monitored channel"""
    curves = [
        exceedance_curve(1, "MFSS", [0.03, 0.04], [0.1, 0.05], [0.1, 0.2]),
        exceedance_curve(1, "GSS-LF", [0.03, 0.04], [0.12, 0.06], [None, None]),
        exceedance_curve(2, "MFSS", [0.05], [0.01], [0.3]),
    ]
    written = ReportWriter.write_curves(curves, tmp_path)
    assert sorted(p.name for p in written) == ["curves_1.csv", "curves_2.csv"]
    frame = pd.read_csv(tmp_path / "curves_1.csv")
    assert len(frame) == 4
    assert set(frame["method"]) == {"MFSS", "GSS-LF"}

def test_plot_curves(tmp_path):
    """Test that the plot is written even when a curve is all zero"""
    curves = [
        exceedance_curve(1, "MFSS", [0.03, 0.04], [0.1, 0.05], [0.1, 0.2]),
        exceedance_curve(1, "GSS-LF", [0.03, 0.04], [0.0, 0.0], [None, None]),
    ]
    path = tmp_path / "curves.png"
    ReportWriter.plot_curves(curves, path)
    assert path.exists() and path.stat().st_size > 0

def test_write_rows(tmp_path):
    """Test CSV rows keep their column order"""
    path = tmp_path / "rows.csv"
    ReportWriter.write_rows([{"n_hf": 2, "beta": None}, {"n_hf": 3, "beta": 0.01}], path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["n_hf", "beta"]
    assert frame["beta"].iloc[1] == pytest.approx(0.01)
