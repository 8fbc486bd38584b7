# app/services/estimators.py
"""Failure-probability estimators, control-variate weights and sample allocation."""
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from app.core.exceptions import (
    BudgetError,
    EstimatorConvergenceError,
    PairingError,
    UnboundedRatioError,
)
from app.core.logging import logger
from app.core.models import CurvePoint, ExceedanceCurve

@dataclass(frozen=True)
class ConsequenceMeasure:
    kind: str = "indicator"
    bandwidth: float = 0.1

    def __post_init__(self):
        if self.kind not in ("indicator", "kernel"):
            raise ValueError(f"unknown consequence kind '{self.kind}'")
        if self.bandwidth <= 0:
            raise ValueError("kernel bandwidth must be positive")

def consequence(Z, threshold: float, measure: ConsequenceMeasure = ConsequenceMeasure()) -> np.ndarray:
    """
    Consequence h of QoI values against a threshold

    Args:
        Z: QoI value(s)
        threshold: Limit-state threshold z_i > 0
        measure: Indicator 1{Z > z} or log-kernel 1 - Phi(ln(z / Z) / b)

    Returns:
        np.ndarray: Values in [0, 1], same shape as Z
    """
    Z = np.asarray(Z, dtype=float)
    if threshold <= 0:
        raise ValueError("thresholds must be positive")
    if measure.kind == "indicator":
        return (Z > threshold).astype(float)
    if np.any(Z <= 0):
        raise ValueError("kernel consequence needs Z > 0")
    return 1.0 - norm.cdf(np.log(threshold / Z) / measure.bandwidth)

@dataclass
class EstimateResult:
    estimate: float
    variance: float
    cov: Optional[float]
    stratum_means: List[float] = field(default_factory=list)
    stratum_variances: List[float] = field(default_factory=list)

def coefficient_of_variation(estimate: float, variance: float) -> Optional[float]:
    """sqrt(V) / H, or None when H is zero"""
    if estimate == 0:
        return None
    return math.sqrt(max(variance, 0.0)) / abs(estimate)

def mc_estimate(h: Sequence[float]) -> EstimateResult:
    """Plain Monte Carlo mean of h with its variance V[h] / N"""
    h = np.asarray(h, dtype=float)
    if h.size < 2:
        raise ValueError("plain MC needs at least two evaluations")
    mean, var = float(h.mean()), float(h.var(ddof=1)) / h.size
    return EstimateResult(mean, var, coefficient_of_variation(mean, var), [mean], [float(h.var(ddof=1))])

def gss_estimate(h_per_stratum: Sequence[Sequence[float]], probabilities: Sequence[float]) -> EstimateResult:
    """
    Stratified estimate sum_k s_k P(E^k) with variance sum_k P(E^k)^2 V_k[h] / N^k

    Args:
        h_per_stratum: Consequence values per stratum, at least two each
        probabilities: Strata probabilities P(E^k)

    Returns:
        EstimateResult: Estimate, variance, COV (None when the estimate is 0)
    """
    if len(h_per_stratum) != len(probabilities):
        raise ValueError(f"{len(h_per_stratum)} strata of samples vs {len(probabilities)} probabilities")
    estimate, variance = 0.0, 0.0
    means, variances = [], []
    for k, (h, p) in enumerate(zip(h_per_stratum, probabilities)):
        h = np.asarray(h, dtype=float)
        if h.size < 2:
            raise ValueError(f"stratum {k} has {h.size} evaluations; need at least 2")
        mean, var = float(h.mean()), float(h.var(ddof=1))
        means.append(mean)
        variances.append(var)
        estimate += mean * p
        variance += p * p * var / h.size
    return EstimateResult(estimate, variance, coefficient_of_variation(estimate, variance), means, variances)

def optimal_a(rho: float, var_hf: float, var_lf: float) -> float:
    """Control-variate weight a* = rho sqrt(V_HF / V_LF); 0 when the LF output is constant"""
    if var_lf <= 0:
        logger.warning("LF consequence has zero variance in this stratum; control variate disabled (a = 0)")
        return 0.0
    return rho * math.sqrt(var_hf / var_lf)

def stratum_a(rho: float, hf_h: Sequence[float], lf_h_paired: Sequence[float]) -> float:
    """a* from the sample variances of the paired HF and LF evaluations"""
    hf_h = np.asarray(hf_h, dtype=float)
    lf_h_paired = np.asarray(lf_h_paired, dtype=float)
    if hf_h.size < 2:
        return 0.0
    return optimal_a(rho, float(hf_h.var(ddof=1)), float(lf_h_paired.var(ddof=1)))

def optimal_ratio(c_hf: float, c_lf: float, rho: float) -> float:
    """r* = sqrt(c_HF rho^2 / (c_LF (1 - rho^2)))"""
    if c_lf <= 0 or c_hf <= 0:
        raise ValueError("model costs must be positive")
    if abs(rho) >= 1:
        raise UnboundedRatioError(rho)
    return math.sqrt(c_hf * rho * rho / (c_lf * (1 - rho * rho)))

@dataclass
class MFStratumEstimate:
    raw: float
    clamped: float
    a: float
    n_hf: int
    n_lf: int

def mfmc_stratum_estimate(
    hf_h: Sequence[float],
    lf_h_paired: Sequence[float],
    lf_h_all: Sequence[float],
    a: float,
    hf_indices: Optional[Sequence[int]] = None,
    lf_indices: Optional[Sequence[int]] = None,
) -> MFStratumEstimate:
    """
    Control-variate estimate mean(hf) + a (mean(lf_all) - mean(lf_paired)) of one stratum

    The paired LF values must be the first N_HF entries of the LF draw, evaluated at the
    same samples as the HF values; index lists, when given, are checked.
    """
    hf_h = np.asarray(hf_h, dtype=float)
    lf_h_paired = np.asarray(lf_h_paired, dtype=float)
    lf_h_all = np.asarray(lf_h_all, dtype=float)
    n_hf = hf_h.size
    if lf_h_paired.size != n_hf:
        raise PairingError(f"{lf_h_paired.size} paired LF values for {n_hf} HF values")
    if lf_h_all.size < n_hf:
        raise PairingError(f"LF draw of {lf_h_all.size} is shorter than the HF draw of {n_hf}")
    if hf_indices is not None or lf_indices is not None:
        if hf_indices is None or lf_indices is None:
            raise PairingError("both HF and LF index lists are needed to check pairing")
        if list(lf_indices[:n_hf]) != list(hf_indices):
            raise PairingError("paired LF samples are not the HF samples")
    if not np.array_equal(lf_h_all[:n_hf], lf_h_paired):
        raise PairingError("paired LF values differ from the first N_HF LF values")
    if n_hf == 0:
        raise PairingError("no HF evaluations in stratum")
    raw = float(hf_h.mean() + a * (lf_h_all.mean() - lf_h_paired.mean()))
    return MFStratumEstimate(raw, min(max(raw, 0.0), 1.0), float(a), n_hf, int(lf_h_all.size))

def mfmc_variance(var_hf_h: float, n_hf: int, r: float, rho: float) -> float:
    """(V_HF / N_HF) (1 - (1 - 1/r) rho^2); plain MC variance when r <= 0"""
    if n_hf < 1:
        raise ValueError("n_hf must be positive")
    if r <= 0:
        return var_hf_h / n_hf
    return var_hf_h / n_hf * (1 - (1 - 1 / r) * rho * rho)

def stratum_variance(hf_h: Sequence[float], r: float, rho: float, a: float) -> float:
    """Per-stratum estimator variance; plain HF sample variance when the control variate is off (a = 0)"""
    hf_h = np.asarray(hf_h, dtype=float)
    n_hf = hf_h.size
    if n_hf < 1:
        raise ValueError("n_hf must be positive")
    var_hf = float(hf_h.var(ddof=1)) if n_hf > 1 else 0.0
    if a == 0:
        return var_hf / n_hf
    return mfmc_variance(var_hf, n_hf, r, rho)

def equivalent_count(n_hf: float, r: float, rho: float) -> float:
    """HF-only sample count with the same variance as an MFMC run, unrounded"""
    if r <= 0:
        return float(n_hf)
    return n_hf / (1 - (1 - 1 / r) * rho * rho)

@dataclass
class EquivalentCounts:
    n_gss: int
    n_gss_raw: float
    n_sim: int
    n_sim_raw: float

def equivalent_counts(n_hf: int, r: float, rho: float, n_strata: int = 1) -> EquivalentCounts:
    """Per-stratum GSS-equivalent count and the total over all strata"""
    per_stratum = equivalent_count(n_hf, r, rho)
    total = equivalent_count(n_hf * n_strata, r, rho)
    return EquivalentCounts(int(round(per_stratum)), per_stratum, int(round(total)), total)

@dataclass
class AggregateResult:
    estimate_raw: float
    estimate: float
    variance: float
    cov: Optional[float]

def mfss_aggregate(estimates: Sequence[float], variances: Sequence[float],
                   probabilities: Sequence[float]) -> AggregateResult:
    """Total-probability aggregation sum_k H^k P(E^k), V = sum_k P(E^k)^2 V^k"""
    if not (len(estimates) == len(variances) == len(probabilities)) or not estimates:
        raise ValueError("need one estimate and variance per stratum")
    p = np.asarray(probabilities, dtype=float)
    raw = float(np.dot(np.asarray(estimates, dtype=float), p))
    variance = float(np.dot(np.asarray(variances, dtype=float), p * p))
    floored = raw
    if raw < 0:
        logger.warning(f"MFSS estimate {raw:.3e} is negative; reporting 0 alongside the raw value")
        floored = 0.0
    return AggregateResult(raw, floored, variance, coefficient_of_variation(floored, variance))

def budget_allocation(c_b: float, c_hf: float, c_lf: float, r: float) -> Tuple[int, int]:
    """
    Per-stratum counts N_HF = floor(c_B / (r c_LF + c_HF)), N_LF = round(r N_HF)

    Raises:
        BudgetError: When the budget buys fewer than two HF evaluations
    """
    unit = r * c_lf + c_hf
    n_hf = int(math.floor(c_b / unit * (1 + 1e-12)))
    if n_hf < 2:
        raise BudgetError(f"budget {c_b} buys {n_hf} HF evaluations per stratum; at least 2 needed "
                          f"(minimum budget {2 * unit})")
    return n_hf, int(math.floor(r * n_hf + 0.5))

def speedup(n_gss: float, n_hf: int, n_train: int, n_lf: int, cost_ratio: float) -> float:
    """N_GSS / (N_HF + N_train + N_LF / (c_HF / c_LF)), all per stratum"""
    return n_gss / (n_hf + n_train + n_lf / cost_ratio)

def convergence_index(previous: float, current: float) -> Optional[float]:
    """|H_(n+1) - H_(n)| / H_(n); None when H_(n) is zero"""
    if previous == 0:
        return None
    return abs(current - previous) / abs(previous)

@dataclass
class ConvergenceResult:
    n_hf: int
    estimates: Dict[str, float]
    trajectory: List[Dict]

def convergence_loop(
    estimate_at: Callable[[int], Dict[str, float]],
    beta_target: float,
    start: int = 2,
    step: int = 1,
    max_iterations: int = 200,
) -> ConvergenceResult:
    """
    Add `step` HF samples per stratum until every limit state's estimate settles

    Args:
        estimate_at: Per-limit-state estimates at a per-stratum HF count
        beta_target: Stopping threshold on max_i beta_i
        start: First per-stratum HF count
        step: HF samples added per stratum per iteration
        max_iterations: Iteration cap

    Returns:
        ConvergenceResult: Final count, estimates and the (n_hf, beta, estimates) trajectory
    """
    n = start
    previous = estimate_at(n)
    trajectory = [{"n_hf": n, "beta": None, "flagged": False, **previous}]
    for _ in range(max_iterations):
        n += step
        current = estimate_at(n)
        betas = [convergence_index(previous[name], current[name]) for name in current]
        flagged = any(b is None for b in betas)
        beta = max((b for b in betas if b is not None), default=None)
        trajectory.append({"n_hf": n, "beta": beta, "flagged": flagged, **current})
        if flagged:
            logger.warning(f"Convergence index undefined at N_HF = {n} (zero estimate); continuing")
        elif beta <= beta_target:
            logger.info(f"Estimator converged at N_HF = {n} per stratum (beta = {beta:.4f})")
            return ConvergenceResult(n, current, trajectory)
        previous = current
    raise EstimatorConvergenceError(f"beta target {beta_target} not met within {max_iterations} iterations")

def exceedance_curve(channel: int, method: str, thresholds: Sequence[float],
                     probabilities: Sequence[float], covs: Sequence[Optional[float]]) -> ExceedanceCurve:
    """Curve of P(Z > z); a probability that rises with z is flagged, never corrected"""
    points = [CurvePoint(threshold=float(z), probability=float(p), cov=c)
              for z, p, c in zip(thresholds, probabilities, covs)]
    monotone = all(b.probability <= a.probability for a, b in zip(points, points[1:]))
    if not monotone:
        logger.warning(f"{method} exceedance curve for channel {channel} is not monotone nonincreasing")
    return ExceedanceCurve(channel=channel, method=method, points=points, monotone=monotone)
