import math

import numpy as np
import pytest

from app.core.exceptions import BudgetError, EstimatorConvergenceError, PairingError, UnboundedRatioError
from app.services.estimators import (
    ConsequenceMeasure,
    budget_allocation,
    coefficient_of_variation,
    consequence,
    convergence_index,
    convergence_loop,
    equivalent_count,
    equivalent_counts,
    exceedance_curve,
    gss_estimate,
    mc_estimate,
    mfmc_stratum_estimate,
    mfmc_variance,
    mfss_aggregate,
    optimal_a,
    optimal_ratio,
    speedup,
    stratum_a,
    stratum_variance,
)

KERNEL = ConsequenceMeasure("kernel", 0.1)

def test_indicator_consequence():
    """Test the strict-exceedance indicator"""
    assert consequence(2.0, 1.0).tolist() == 1.0
    assert consequence([0.5, 1.0, 1.5], 1.0).tolist() == [0.0, 0.0, 1.0]

def test_kernel_consequence():
    """Test the log-kernel at and above the threshold"""
    assert float(consequence(1.0, 1.0, KERNEL)) == pytest.approx(0.5)
    assert float(consequence(math.exp(0.1), 1.0, KERNEL)) == pytest.approx(0.8413, abs=1e-4)

def test_kernel_monotone_and_tends_to_indicator():
    """Test the kernel is nondecreasing in Z and closes on the indicator as b shrinks"""
    z = np.concatenate([np.linspace(0.5, 0.95, 50), np.linspace(1.05, 2.0, 50)])
    indicator = consequence(z, 1.0)
    gaps = []
    for b in (0.1, 0.01, 0.001):
        h = consequence(z, 1.0, ConsequenceMeasure("kernel", b))
        assert np.all(np.diff(h) >= 0)
        assert np.all((h >= 0) & (h <= 1))
        gaps.append(float(np.max(np.abs(h - indicator))))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-12

def test_kernel_needs_positive_response():
    """Test that the kernel rejects Z <= 0"""
    with pytest.raises(ValueError):
        consequence([0.0, 1.0], 1.0, KERNEL)

def test_consequence_measure_validation():
    """Test unknown kinds and bandwidths"""
    with pytest.raises(ValueError):
        ConsequenceMeasure("gaussian")
    with pytest.raises(ValueError):
        ConsequenceMeasure("kernel", 0.0)

def test_single_stratum_gss_is_plain_mc():
    """Test that one stratum reduces GSS to the plain MC mean"""
    h = [0.0, 1.0, 0.0, 0.0, 1.0]
    gss = gss_estimate([h], [1.0])
    mc = mc_estimate(h)
    assert gss.estimate == pytest.approx(mc.estimate)
    assert gss.variance == pytest.approx(mc.variance)

def test_gss_two_strata():
    """Test P = {0.9, 0.1} with stratum means {0, 0.5}"""
    result = gss_estimate([[0.0, 0.0], [1.0, 0.0]], [0.9, 0.1])
    assert result.estimate == pytest.approx(0.05)
    assert result.variance == pytest.approx(0.01 * 0.5 / 2)
    assert result.stratum_means == [0.0, 0.5]

def test_gss_certain_failure():
    """Test that h = 1 everywhere gives H = 1 with no variance"""
    result = gss_estimate([[1.0, 1.0], [1.0, 1.0, 1.0]], [0.4, 0.6])
    assert result.estimate == pytest.approx(1.0)
    assert result.variance == 0.0
    assert result.cov == 0.0

def test_gss_zero_estimate_has_no_cov():
    """Test that a zero estimate reports an undefined COV instead of failing"""
    assert gss_estimate([[0.0, 0.0]], [1.0]).cov is None
    assert coefficient_of_variation(0.0, 1.0) is None

def test_gss_needs_two_evaluations():
    """Test that a stratum with one evaluation is rejected"""
    with pytest.raises(ValueError):
        gss_estimate([[1.0], [0.0, 1.0]], [0.5, 0.5])

def test_optimal_a():
    """Test the control-variate weight"""
    assert optimal_a(0.0, 0.04, 0.01) == 0.0
    assert optimal_a(0.5, 0.2, 0.2) == pytest.approx(0.5)
    assert optimal_a(0.96, 0.04, 0.01) == pytest.approx(1.92)

def test_optimal_a_constant_lf():
    """Test that a constant LF output disables the control variate"""
    assert optimal_a(0.9, 0.04, 0.0) == 0.0
    assert stratum_a(0.9, [1.0, 0.0, 1.0], [1.0, 1.0, 1.0]) == 0.0

def test_optimal_ratio():
    """Test r* at the reference correlation and a hand-worked case"""
    assert optimal_ratio(1e4, 1.0, 0.0) == 0.0
    assert optimal_ratio(1e4, 1.0, 0.9640) == pytest.approx(362.5, abs=0.5)
    assert optimal_ratio(2.0, 1.0, math.sqrt(0.5)) == pytest.approx(math.sqrt(2))

def test_optimal_ratio_unbounded():
    """Test that a perfectly correlated LF model has no finite ratio"""
    with pytest.raises(UnboundedRatioError) as excinfo:
        optimal_ratio(1e4, 1.0, 1.0)
    assert "cap rho" in excinfo.value.detail

def test_mfmc_stratum_estimate():
    """Test the hand-worked control-variate estimate"""
    result = mfmc_stratum_estimate([1.0, 0.0], [1.0, 1.0], [1.0, 1.0, 0.0, 0.0], 0.5)
    assert result.raw == pytest.approx(0.25)
    assert result.n_hf == 2
    assert result.n_lf == 4

def test_mfmc_without_control_variate():
    """Test that a = 0 gives the plain HF mean"""
    result = mfmc_stratum_estimate([1.0, 0.0, 0.0], [0.3, 0.2, 0.1], [0.3, 0.2, 0.1, 0.9], 0.0)
    assert result.raw == pytest.approx(1 / 3)

def test_mfmc_identical_models():
    """Test that the correction vanishes when LF equals HF on the same samples"""
    h = [1.0, 0.0, 1.0]
    for a in (0.0, 0.7, 2.0):
        assert mfmc_stratum_estimate(h, h, h, a).raw == pytest.approx(2 / 3)

def test_mfmc_clamps_but_keeps_raw():
    """Test that an estimate outside [0, 1] is clamped and the raw value kept"""
    result = mfmc_stratum_estimate([0.0, 0.0], [1.0, 1.0], [1.0, 1.0, 0.0, 0.0], 1.0)
    assert result.raw == pytest.approx(-0.5)
    assert result.clamped == 0.0

def test_mfmc_pairing_violations():
    """Test that mispaired evaluations are hard errors"""
    with pytest.raises(PairingError):
        mfmc_stratum_estimate([1.0, 0.0], [1.0], [1.0, 1.0, 0.0], 0.5)
    with pytest.raises(PairingError):
        mfmc_stratum_estimate([1.0, 0.0], [1.0, 1.0], [0.0, 1.0, 0.0], 0.5)
    with pytest.raises(PairingError):
        mfmc_stratum_estimate([1.0, 0.0], [1.0, 1.0], [1.0, 1.0, 0.0], 0.5,
                              hf_indices=[4, 9], lf_indices=[9, 4, 2])
    with pytest.raises(PairingError):
        mfmc_stratum_estimate([1.0, 0.0], [1.0, 1.0], [1.0, 1.0, 0.0], 0.5, hf_indices=[4, 9])

def test_mfmc_pairing_by_index():
    """Test that matching index lists pass the pairing check"""
    result = mfmc_stratum_estimate([1.0, 0.0], [1.0, 1.0], [1.0, 1.0, 0.0], 0.5,
                                   hf_indices=[4, 9], lf_indices=[4, 9, 2])
    assert result.raw == pytest.approx(0.5 + 0.5 * (2 / 3 - 1.0))

def test_mfmc_variance():
    """Test the minimized variance and its limits"""
    assert mfmc_variance(0.09, 10, 9.0, 0.0) == pytest.approx(0.009)
    assert mfmc_variance(0.09, 10, 9.0, 0.9) == pytest.approx(0.00252)
    assert mfmc_variance(0.09, 10, 1e12, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert mfmc_variance(0.09, 10, 0.0, 0.9) == pytest.approx(0.009)

def test_stratum_variance_without_control_variate():
    """Test that a constant LF output reports the plain HF variance of the stratum"""
    hf_h = consequence([2.0, 0.5, 0.5, 0.5], 1.0)
    lf_h = consequence([0.5] * 12, 1.0)
    a = stratum_a(0.9, hf_h, lf_h[:4])
    assert a == 0.0
    assert mfmc_stratum_estimate(hf_h, lf_h[:4], lf_h, a).raw == pytest.approx(0.25)
    assert stratum_variance(hf_h, 3.0, 0.9, a) == pytest.approx(0.0625)

def test_stratum_variance_with_control_variate():
    """Test that an active control variate uses the minimized variance"""
    hf_h = [1.0, 0.0, 1.0, 0.0]
    expected = mfmc_variance(float(np.var(hf_h, ddof=1)), 4, 9.0, 0.9)
    assert stratum_variance(hf_h, 9.0, 0.9, 1.2) == pytest.approx(expected)
    with pytest.raises(ValueError):
        stratum_variance([], 9.0, 0.9, 1.2)

def test_equivalent_counts():
    """Test the GSS-equivalent HF count at the reference and a hand-worked case"""
    assert equivalent_count(11, 363.45, 0.0) == pytest.approx(11)
    assert equivalent_count(10, 2.0, math.sqrt(0.5)) == pytest.approx(13.333, abs=1e-3)
    counts = equivalent_counts(11, 363.45, 0.9640, n_strata=10)
    assert abs(counts.n_gss - 150) <= 1
    assert counts.n_gss_raw == pytest.approx(150.15, abs=0.1)
    assert counts.n_sim == round(counts.n_sim_raw)
    assert counts.n_sim_raw == pytest.approx(10 * counts.n_gss_raw)

def test_speedup():
    """Test the reference speedup and its limits"""
    assert speedup(150, 11, 13, 3998, 1e4) == pytest.approx(6.15, abs=0.01)
    assert speedup(150, 11, 0, 3998, float("inf")) == pytest.approx(150 / 11)
    assert speedup(150, 11, 0, 0, 1e4) == pytest.approx(150 / 11)

def test_mfss_aggregate():
    """Test total-probability aggregation"""
    result = mfss_aggregate([0.0, 0.05], [0.0, 1e-4], [0.99, 0.01])
    assert result.estimate == pytest.approx(5e-4)
    assert result.variance == pytest.approx(1e-8)
    assert mfss_aggregate([0.3, 0.3, 0.3], [0.0] * 3, [0.2, 0.5, 0.3]).estimate == pytest.approx(0.3)
    assert mfss_aggregate([0.02], [1e-5], [1.0]).estimate == pytest.approx(0.02)

def test_mfss_aggregate_floors_negative():
    """Test that a negative total is reported raw and floored at zero"""
    result = mfss_aggregate([-0.01, 0.0], [1e-6, 1e-6], [0.5, 0.5])
    assert result.estimate_raw == pytest.approx(-0.005)
    assert result.estimate == 0.0
    assert result.cov is None

def test_budget_allocation():
    """Test per-stratum counts bought by a budget"""
    assert budget_allocation(20.0, 1.0, 0.01, 100.0) == (10, 1000)
    assert budget_allocation(7.5, 1.0, 0.01, 0.0) == (7, 0)
    assert budget_allocation(4.0, 1.0, 0.01, 100.0) == (2, 200)

def test_budget_below_minimum():
    """Test that fewer than two HF evaluations per stratum is a budget error"""
    with pytest.raises(BudgetError) as excinfo:
        budget_allocation(3.9, 1.0, 0.01, 100.0)
    assert excinfo.value.exit_code == 2

def test_convergence_index():
    """Test the relative change between consecutive estimates"""
    assert convergence_index(0.001, 0.00103) == pytest.approx(0.03)
    assert convergence_index(0.001, 0.001) == 0.0
    assert convergence_index(0.0, 0.001) is None

def test_convergence_loop_stops_on_identical_estimates():
    """Test that an unchanged estimate stops the loop after one step"""
    result = convergence_loop(lambda n: {"roof": 0.002}, beta_target=0.03, start=2)
    assert result.n_hf == 3
    assert [row["n_hf"] for row in result.trajectory] == [2, 3]

def test_convergence_loop_continues_past_zero():
    """Test that a zero estimate flags the iteration instead of stopping"""
    values = {2: 0.0, 3: 0.001, 4: 0.0012, 5: 0.00121}
    result = convergence_loop(lambda n: {"roof": values[n]}, beta_target=0.03, start=2)
    assert result.n_hf == 5
    assert result.trajectory[1]["flagged"] is True
    assert result.trajectory[2]["beta"] == pytest.approx(0.2)

def test_convergence_loop_uses_worst_limit_state():
    """Test that every limit state must settle"""
    values = {2: (0.01, 0.1), 3: (0.0101, 0.2), 4: (0.0102, 0.201)}
    result = convergence_loop(lambda n: {"a": values[n][0], "b": values[n][1]}, beta_target=0.03, start=2)
    assert result.n_hf == 4

def test_convergence_loop_gives_up():
    """Test that an oscillating estimate exhausts the iteration cap"""
    with pytest.raises(EstimatorConvergenceError):
        convergence_loop(lambda n: {"roof": 0.001 * (1 + n % 2)}, beta_target=0.03, max_iterations=5)

def test_exceedance_curve_monotone_flag():
    """Test that rising probabilities are flagged, not corrected"""
    curve = exceedance_curve(1, "MFSS", [0.03, 0.04, 0.05], [0.1, 0.02, 0.03], [0.1, 0.2, None])
    assert curve.monotone is False
    assert [p.probability for p in curve.points] == [0.1, 0.02, 0.03]
    assert exceedance_curve(1, "MFSS", [0.03, 0.04], [0.1, 0.1], [None, None]).monotone is True

def _gaussian_pair(rng, n):
    """HF = 1 + X + 0.5 e and LF = X, so E[HF] = 1, V[HF] = 1.25, rho = 1/sqrt(1.25), a* = 1"""
    x = rng.standard_normal(n)
    return 1.0 + x + 0.5 * rng.standard_normal(n), x

GAUSS_VAR_HF = 1.25
GAUSS_RHO = 1 / math.sqrt(1.25)

def _mfmc_replications(n_hf, n_lf, replications, seed, a=1.0):
    rng = np.random.default_rng(seed)
    estimates, corrections = [], []
    for _ in range(replications):
        hf, lf_all = _gaussian_pair(rng, n_lf)
        result = mfmc_stratum_estimate(hf[:n_hf], lf_all[:n_hf], lf_all, a)
        estimates.append(result.raw)
        corrections.append(lf_all.mean() - lf_all[:n_hf].mean())
    return np.asarray(estimates), np.asarray(corrections)

@pytest.mark.slow
def test_mfmc_estimate_is_unbiased():
    """Test that the control-variate estimate averages to the HF mean and its LF correction to zero"""
    estimates, corrections = _mfmc_replications(20, 80, 2000, seed=11)
    assert estimates.mean() == pytest.approx(1.0, abs=0.02)
    assert corrections.mean() == pytest.approx(0.0, abs=0.01)

@pytest.mark.slow
def test_mfmc_estimate_with_fitted_weight_is_unbiased():
    """Test unbiasedness when a is fitted from the paired evaluations"""
    rng = np.random.default_rng(12)
    estimates = []
    for _ in range(1000):
        hf, lf_all = _gaussian_pair(rng, 100)
        a = stratum_a(GAUSS_RHO, hf[:25], lf_all[:25])
        estimates.append(mfmc_stratum_estimate(hf[:25], lf_all[:25], lf_all, a).raw)
    assert np.mean(estimates) == pytest.approx(1.0, abs=0.03)

@pytest.mark.slow
def test_mfmc_variance_matches_replications():
    """Test the variance law against the spread of repeated estimates"""
    for n_hf, r in ((20, 4.0), (10, 20.0)):
        estimates, _ = _mfmc_replications(n_hf, int(r * n_hf), 2000, seed=int(r))
        predicted = mfmc_variance(GAUSS_VAR_HF, n_hf, r, GAUSS_RHO)
        assert estimates.var(ddof=1) == pytest.approx(predicted, rel=0.2)

@pytest.mark.slow
def test_optimal_ratio_minimizes_variance_at_fixed_budget():
    """Test that r* beats a quarter and four times r* for the same budget"""
    c_hf, c_lf, budget = 1.0, 0.01, 40.0
    r_star = optimal_ratio(c_hf, c_lf, GAUSS_RHO)
    assert r_star == pytest.approx(20.0)
    spread = {}
    for r in (r_star / 4, r_star, 4 * r_star):
        n_hf, n_lf = budget_allocation(budget, c_hf, c_lf, r)
        estimates, _ = _mfmc_replications(n_hf, n_lf, 1500, seed=int(r))
        spread[r] = estimates.var(ddof=1)
    assert spread[r_star] < spread[r_star / 4]
    assert spread[r_star] < spread[4 * r_star]
