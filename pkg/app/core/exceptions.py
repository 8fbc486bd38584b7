# app/core/exceptions.py
from typing import Any, Dict, List, Optional

EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_POOL_EXHAUSTED = 4

class TailSiftError(Exception):
    """Base exception for tailsift; exit_code is what the CLI returns"""
    def __init__(self, detail: str, exit_code: int = EXIT_FAILURE):
        self.detail = detail
        self.exit_code = exit_code
        super().__init__(detail)

class ConfigError(TailSiftError):
    """Exception for invalid run configurations"""
    def __init__(self, detail: str):
        super().__init__(detail=f"Invalid configuration: {detail}", exit_code=EXIT_CONFIG)

class ArtifactMismatchError(TailSiftError):
    """Exception for stage artifacts produced under a different config hash"""
    def __init__(self, artifact: str, expected: str, found: str):
        self.artifact = artifact
        super().__init__(
            detail=(f"Artifact {artifact} was produced under config hash {found[:12]}, "
                    f"current config hashes to {expected[:12]}; rerun the stage or pass --force"),
            exit_code=EXIT_CONFIG,
        )

class ArtifactMissingError(TailSiftError):
    """Exception for a stage whose upstream artifact does not exist"""
    def __init__(self, artifact: str):
        super().__init__(detail=f"Required artifact not found: {artifact}", exit_code=EXIT_CONFIG)

class ConvergenceError(TailSiftError):
    """Base exception for anything that failed to converge"""
    def __init__(self, detail: str):
        super().__init__(detail=detail, exit_code=EXIT_CONVERGENCE)

class HFNonconvergenceError(ConvergenceError):
    """Exception raised when every stage of the solver cascade fails at a step"""
    def __init__(self, time: float, sample_index: Optional[int] = None):
        self.time = time
        self.sample_index = sample_index
        where = f" (sample {sample_index})" if sample_index is not None else ""
        super().__init__(f"High-fidelity solver failed to converge at t = {time:.4f} s{where}")

    def with_sample(self, sample_index: int) -> "HFNonconvergenceError":
        return HFNonconvergenceError(self.time, sample_index)

class AdaptiveTrainingError(ConvergenceError):
    """Exception raised when the adaptive loop exhausts its iterations"""
    def __init__(self, trajectory: List[Dict[str, Any]]):
        self.trajectory = trajectory
        last = trajectory[-1] if trajectory else {}
        super().__init__(
            "Surrogate correlation targets not met within max_iterations "
            f"(last: n={last.get('total_samples')}, rho={last.get('rho_bar')}, delta={last.get('delta')})"
        )

class EstimatorConvergenceError(ConvergenceError):
    """Exception raised when the budget convergence loop runs out of iterations"""
    def __init__(self, detail: str):
        super().__init__(f"Estimator did not converge: {detail}")

class PoolExhaustedError(TailSiftError):
    """Exception for a stratum pool that cannot supply the requested draws"""
    def __init__(self, stratum: int, requested: int, available: int):
        self.stratum = stratum
        super().__init__(
            detail=f"Stratum {stratum} pool exhausted: requested {requested}, {available} undrawn",
            exit_code=EXIT_POOL_EXHAUSTED,
        )

class DimensionMismatchError(TailSiftError):
    """Exception for arrays whose shapes do not agree"""
    def __init__(self, detail: str):
        super().__init__(detail=f"Dimension mismatch: {detail}")

class EnvelopeError(TailSiftError):
    """Exception for envelopes that do not fit inside a series"""
    def __init__(self, detail: str):
        super().__init__(detail=f"Envelope error: {detail}")

class ModalCacheError(TailSiftError):
    """Exception for structural models without enough cached modes"""
    def __init__(self, detail: str):
        super().__init__(detail=f"Modal cache error: {detail}")

class SampleEvaluationError(TailSiftError):
    """Exception for a sample evaluation that failed, carrying its index"""
    def __init__(self, sample_index: int, detail: str):
        self.sample_index = sample_index
        super().__init__(detail=f"Evaluation of sample {sample_index} failed: {detail}")

class EmptyStratumError(TailSiftError):
    """Exception for a stratification rule that leaves a stratum empty"""
    def __init__(self, stratum: int):
        self.stratum = stratum
        super().__init__(detail=f"Stratum {stratum} is empty under the chosen boundary rule")

class ReductionError(TailSiftError):
    """Exception for POD and wavelet reduction errors"""
    def __init__(self, detail: str):
        super().__init__(detail=f"Reduction error: {detail}")

class SurrogateTrainingError(TailSiftError):
    """Exception for a training run whose loss became non-finite"""
    def __init__(self, detail: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(detail=f"Surrogate training failed: {detail}")

class CorrelationError(TailSiftError):
    """Exception for correlation estimates that cannot be formed"""
    def __init__(self, detail: str):
        super().__init__(detail=f"Correlation error: {detail}")

class PairingError(TailSiftError):
    """Exception for LF evaluations not paired with the HF samples"""
    def __init__(self, detail: str):
        super().__init__(detail=f"Pairing violation: {detail}")

class UnboundedRatioError(TailSiftError):
    """Exception for a perfectly correlated LF model (r* is unbounded)"""
    def __init__(self, rho: float):
        super().__init__(
            detail=f"|rho| = {abs(rho):.6f} makes the optimal LF/HF ratio unbounded; cap rho below 1"
        )

class BudgetError(TailSiftError):
    """Exception for budgets that cannot buy the minimum HF allocation"""
    def __init__(self, detail: str):
        super().__init__(detail=f"Budget error: {detail}", exit_code=EXIT_CONFIG)
