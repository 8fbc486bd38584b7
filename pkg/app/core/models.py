# app/core/models.py
"""Pydantic schemas: the run configuration and the serialized reports."""
import hashlib
import json
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, ValidationError, root_validator, validator

from app.core.exceptions import ConfigError

# Run configuration

class PSDParams(BaseModel):
    """One-sided low-pass PSD S(f) = intensity / (1 + (f / corner_frequency)^2)"""
    intensity: float = Field(..., ge=0)
    corner_frequency: float = Field(..., gt=0)

class EnvelopeConfig(BaseModel):
    ramp_up: float = Field(0.0, ge=0)
    ramp_down: float = Field(0.0, ge=0)
    tail_zero: float = Field(0.0, ge=0)

class ExcitationConfig(BaseModel):
    n_channels: int = Field(..., ge=1)
    dt: float = Field(..., gt=0)
    duration: float = Field(..., gt=0)
    psd: List[PSDParams]
    coherence_decay: float = Field(0.0, ge=0)
    n_freq: int = Field(..., ge=1)
    envelope: EnvelopeConfig = EnvelopeConfig()

    @validator("psd")
    def psd_matches_channels(cls, v, values):
        n_channels = values.get("n_channels")
        if n_channels is not None and len(v) not in (1, n_channels):
            raise ValueError(f"psd needs 1 or {n_channels} entries, got {len(v)}")
        return v

    @root_validator(skip_on_failure=True)
    def envelope_fits(cls, values):
        env = values["envelope"]
        if env.ramp_up + env.ramp_down + env.tail_zero > values["duration"]:
            raise ValueError("envelope ramps and tail exceed the duration")
        return values

class BoucWenConfig(BaseModel):
    yield_displacement: List[float]
    post_yield_ratio: float = Field(0.1, ge=0, le=1)
    A: float = Field(1.0, gt=0)
    beta: float = 0.5
    gamma: float = 0.5
    n: float = Field(2.0, ge=1)

    @validator("yield_displacement", each_item=True)
    def positive_yield(cls, v):
        if v <= 0:
            raise ValueError("yield displacements must be positive")
        return v

class DampingConfig(BaseModel):
    zeta: float = Field(0.025, ge=0)
    # Calibration frequencies in Hz; defaults to the first two modes
    frequencies: Optional[List[float]] = None

class SolverConfig(BaseModel):
    dt: float = Field(0.02, gt=0)
    record_dt: float = Field(0.1, gt=0)
    tolerance: float = Field(1e-8, gt=0)
    max_iterations: int = Field(25, ge=1)
    line_search_steps: int = Field(8, ge=1)
    # Relative QoI change tolerated when the base step is refined tenfold
    refinement_tolerance: float = Field(0.01, gt=0)

    @root_validator(skip_on_failure=True)
    def record_is_multiple(cls, values):
        ratio = values["record_dt"] / values["dt"]
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("record_dt must be an integer multiple of dt")
        return values

class StructureConfig(BaseModel):
    masses: List[float]
    stiffness: List[float]
    story_heights: List[float]
    bouc_wen: BoucWenConfig
    damping: DampingConfig = DampingConfig()
    solver: SolverConfig = SolverConfig()

    @root_validator(skip_on_failure=True)
    def consistent_stories(cls, values):
        n = len(values["masses"])
        for name in ("stiffness", "story_heights"):
            if len(values[name]) != n:
                raise ValueError(f"{name} must have one entry per story ({n})")
        if len(values["bouc_wen"].yield_displacement) not in (1, n):
            raise ValueError("bouc_wen.yield_displacement needs 1 or n_dof entries")
        if min(values["masses"]) <= 0 or min(values["stiffness"]) <= 0:
            raise ValueError("masses and stiffness must be positive")
        return values

class SVConfig(BaseModel):
    n_modes: int = Field(2, ge=2)

class StratificationConfig(BaseModel):
    n_mc: int = Field(..., ge=1)
    n_strata: int = Field(10, ge=1)
    tail_exceedance: float = Field(1e-3, gt=0, lt=1)
    boundary_rule: Literal["equal_probability", "explicit"] = "equal_probability"
    explicit_boundaries: Optional[List[float]] = None
    domain_lower_bound: Optional[float] = 0.0

    @root_validator(skip_on_failure=True)
    def explicit_needs_list(cls, values):
        if values["boundary_rule"] == "explicit":
            bounds = values.get("explicit_boundaries")
            if bounds is None or len(bounds) != max(values["n_strata"] - 2, 0):
                raise ValueError("explicit rule needs n_strata - 2 interior boundaries")
        return values

class ReductionConfig(BaseModel):
    eta: float = Field(0.99999, gt=0, le=1)
    snapshots_per_sample: int = Field(120, ge=1)
    wavelet_family: str = "db4"
    wavelet_level: int = Field(4, ge=1)
    padding: str = "symmetric"

class TrainingConfig(BaseModel):
    hidden_size: int = Field(200, ge=1)
    dropout: float = Field(0.5, ge=0, lt=1)
    learning_rate: float = Field(1e-3, gt=0)
    max_epochs: int = Field(300, ge=1)
    batch_size: int = Field(16, ge=1)
    validation_fraction: float = Field(0.1, gt=0, lt=1)
    patience: int = Field(30, ge=1)
    seed: Optional[int] = None

class AdaptiveConfig(BaseModel):
    n_init: int = Field(3, ge=1)
    n_add: int = Field(1, ge=1)
    rho_target: float = Field(0.95, gt=-1, le=1)
    delta_target: float = Field(0.03, ge=0)
    max_iterations: int = Field(20, ge=0)
    folds: int = Field(5, ge=5, le=10)

class LimitState(BaseModel):
    name: str
    channel: int = Field(..., ge=0)
    threshold: float = Field(..., gt=0)

class ConsequenceConfig(BaseModel):
    kind: Literal["indicator", "kernel"] = "indicator"
    bandwidth: float = Field(0.1, gt=0)

class CostConfig(BaseModel):
    c_hf: float = Field(1.0, gt=0)
    c_lf: float = Field(1e-4, gt=0)
    # Declared cost of one SV evaluation, for the ledger only
    c_sv: float = Field(1e-4, gt=0)

    @property
    def ratio(self) -> float:
        return self.c_hf / self.c_lf

class AllocationConfig(BaseModel):
    mode: Literal["fixed", "convergence"] = "convergence"
    budget: Optional[float] = None
    beta_target: float = Field(0.03, gt=0)
    step: int = Field(1, ge=1)
    start: int = Field(2, ge=2)
    max_iterations: int = Field(200, ge=1)
    # Upper bound applied to rho before computing r*
    rho_cap: float = Field(0.999, gt=0, lt=1)

    @root_validator(skip_on_failure=True)
    def fixed_needs_budget(cls, values):
        if values["mode"] == "fixed" and values.get("budget") is None:
            raise ValueError("allocation mode 'fixed' requires a budget")
        return values

class CurveConfig(BaseModel):
    channel: int = Field(..., ge=0)
    thresholds: List[float]

    @validator("thresholds")
    def ascending_positive(cls, v):
        if not v or min(v) <= 0 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("curve thresholds must be positive and strictly ascending")
        return v

class BaselineConfig(BaseModel):
    n_per_stratum: int = Field(150, ge=2)

class OracleConfig(BaseModel):
    n_samples: int = Field(200000, ge=1)
    quantiles: List[float] = [0.99, 0.999]

STAGE_SECTIONS: Dict[str, List[str]] = {
    "phase1": ["version", "seed", "excitation", "structure", "sv", "stratification"],
}
STAGE_SECTIONS["train"] = STAGE_SECTIONS["phase1"] + ["reduction", "training", "adaptive"]
STAGE_SECTIONS["estimate"] = STAGE_SECTIONS["train"] + [
    "limit_states", "consequence", "costs", "allocation", "curves",
]
STAGE_SECTIONS["baseline"] = STAGE_SECTIONS["phase1"] + [
    "limit_states", "consequence", "baseline", "curves",
]
STAGE_SECTIONS["oracle"] = ["version", "seed", "excitation", "structure", "limit_states",
                            "consequence", "oracle"]

class RunConfig(BaseModel):
    """Versioned run configuration, validated before any compute"""
    version: int = 1
    seed: int = Field(..., ge=0)
    output_dir: str = "runs/default"
    n_workers: Optional[int] = Field(None, ge=1)
    excitation: ExcitationConfig
    structure: StructureConfig
    sv: SVConfig = SVConfig()
    stratification: StratificationConfig
    reduction: ReductionConfig = ReductionConfig()
    training: TrainingConfig = TrainingConfig()
    adaptive: AdaptiveConfig = AdaptiveConfig()
    limit_states: List[LimitState]
    consequence: ConsequenceConfig = ConsequenceConfig()
    costs: CostConfig = CostConfig()
    allocation: AllocationConfig = AllocationConfig()
    curves: List[CurveConfig] = []
    baseline: BaselineConfig = BaselineConfig()
    oracle: OracleConfig = OracleConfig()

    @root_validator(skip_on_failure=True)
    def channels_match_structure(cls, values):
        n_dof = len(values["structure"].masses)
        if values["excitation"].n_channels != n_dof:
            raise ValueError(f"excitation has {values['excitation'].n_channels} channels, "
                             f"structure has {n_dof} stories")
        for ls in values["limit_states"]:
            if ls.channel >= n_dof:
                raise ValueError(f"limit state {ls.name} monitors channel {ls.channel} >= {n_dof}")
        for curve in values["curves"]:
            if curve.channel >= n_dof:
                raise ValueError(f"curve channel {curve.channel} >= {n_dof}")
        return values

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        """Read and validate a JSON run config, raising ConfigError on any problem"""
        try:
            return cls.parse_file(path)
        except ValidationError as e:
            raise ConfigError(str(e)) from e
        except (OSError, ValueError) as e:
            raise ConfigError(f"could not read {path}: {e}") from e

    def stage_hash(self, stage: str) -> str:
        """SHA-256 over the canonical JSON of the sections a stage depends on"""
        if stage not in STAGE_SECTIONS:
            raise ConfigError(f"unknown stage '{stage}'")
        payload = self.dict(include=set(STAGE_SECTIONS[stage]))
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

# Reports

class AllocationPlan(BaseModel):
    rho: float
    c_hf: float
    c_lf: float
    r_star: float
    n_hf: int
    n_lf: int
    budget: Optional[float] = None

class StratumEstimate(BaseModel):
    stratum: int
    probability: float
    n_hf: int
    n_lf: int = 0
    estimate: float
    estimate_clamped: float
    variance: float
    a: Optional[float] = None

class LimitStateEstimate(BaseModel):
    name: str
    channel: int
    threshold: float
    method: Literal["GSS", "MFSS", "MC"]
    estimate_raw: float
    estimate: float
    variance: float
    cov: Optional[float]
    strata: List[StratumEstimate] = []

class CurvePoint(BaseModel):
    threshold: float
    probability: float
    cov: Optional[float]

class ExceedanceCurve(BaseModel):
    channel: int
    method: str
    points: List[CurvePoint]
    monotone: bool

class EstimatorReport(BaseModel):
    version: int
    config_hash: str
    method: Literal["GSS", "MFSS", "MC"]
    limit_states: List[LimitStateEstimate]
    allocation: Optional[AllocationPlan] = None
    n_train: Optional[int] = None
    n_gss: Optional[int] = None
    n_gss_raw: Optional[float] = None
    n_sim: Optional[int] = None
    n_sim_raw: Optional[float] = None
    speedup: Optional[float] = None
    ledger_totals: Dict[str, int] = {}
    curves: List[ExceedanceCurve] = []
    flags: List[str] = []
    extra: Dict[str, Any] = {}

    def to_json(self) -> str:
        return json.dumps(json.loads(self.json()), indent=2, sort_keys=True)
