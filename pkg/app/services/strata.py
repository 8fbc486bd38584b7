# app/services/strata.py
"""Phase-I exploration of the stratification variable and the strata built from it."""
import json
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.core.config import settings
from app.core.exceptions import (
    ArtifactMismatchError,
    ArtifactMissingError,
    EmptyStratumError,
    PoolExhaustedError,
    SampleEvaluationError,
)
from app.core.logging import logger
from app.core.parallel import map_samples
from app.services.dynamics import StructuralModel, evaluate_sv
from app.services.excitation import SpectralLoadModel, phases_for_sample

PURPOSES = ("train", "eval")
MIN_PHASE1_SAMPLES = 1000
MIN_TAIL_COUNT = 100

class SVEvaluator:
    """Picklable SV evaluator: regenerates theta from (seed, index) and returns the elastic base moment"""

    def __init__(self, model: StructuralModel, load_model: SpectralLoadModel, substream: str = "phase1"):
        self.model = model
        self.load_model = load_model
        self.substream = substream

    def __call__(self, seed: int, index: int) -> float:
        theta = phases_for_sample(seed, index, self.load_model, self.substream)
        return evaluate_sv(self.model, self.load_model, theta)

def _evaluate_index(evaluator: Callable[[int, int], float], seed: int, index: int) -> float:
    try:
        value = float(evaluator(seed, index))
    except SampleEvaluationError:
        raise
    except Exception as e:
        raise SampleEvaluationError(index, str(e)) from e
    if not np.isfinite(value):
        raise SampleEvaluationError(index, f"non-finite SV value {value}")
    return value

@dataclass
class Phase1Result:
    sv_values: np.ndarray
    seed: int

    @property
    def n_samples(self) -> int:
        return int(self.sv_values.size)

    def save(self, path: Union[str, Path]) -> None:
        np.save(Path(path), self.sv_values)

    @classmethod
    def load(cls, path: Union[str, Path], seed: int) -> "Phase1Result":
        path = Path(path)
        if not path.exists():
            raise ArtifactMissingError(str(path))
        return cls(np.load(path), seed)

def phase1_sample(
    sv_evaluator: Callable[[int, int], float],
    n_mc: int,
    seed: int,
    n_workers: int = 1,
) -> Phase1Result:
    """
    Evaluate the SV for samples 0..n_mc-1 of the master seed

    Args:
        sv_evaluator: Picklable callable (seed, index) -> SV
        n_mc: Number of Phase-I samples
        seed: Master seed
        n_workers: Worker processes; the result does not depend on it

    Returns:
        Phase1Result: SV values in sample-index order
    """
    if n_mc < 1:
        raise ValueError("n_mc must be positive")
    if n_mc < MIN_PHASE1_SAMPLES:
        logger.warning(f"Phase I with {n_mc} samples (< {MIN_PHASE1_SAMPLES}); strata will be coarse")
    logger.info(f"Phase I: evaluating the SV on {n_mc} samples with {n_workers} worker(s)")
    values = map_samples(partial(_evaluate_index, sv_evaluator, seed), range(n_mc), n_workers)
    return Phase1Result(np.asarray(values, dtype=float), seed)

def strata_probabilities(counts: Sequence[int], n_mc: int) -> List[Fraction]:
    """Exact P(E^k) = N^k / N; sums to one whenever the counts partition n_mc"""
    if sum(counts) != n_mc:
        raise ValueError(f"counts sum to {sum(counts)}, expected {n_mc}")
    return [Fraction(int(c), int(n_mc)) for c in counts]

@dataclass
class Stratification:
    boundaries: np.ndarray
    counts: np.ndarray
    seed: int
    n_mc: int
    pools: List[np.ndarray]
    drawn_train: List[List[int]] = field(default_factory=list)
    drawn_eval: List[List[int]] = field(default_factory=list)
    boundary_rule: str = "equal_probability"
    config_hash: str = ""

    def __post_init__(self):
        if not self.drawn_train:
            self.drawn_train = [[] for _ in range(self.n_strata)]
        if not self.drawn_eval:
            self.drawn_eval = [[] for _ in range(self.n_strata)]
        self._lock = threading.Lock()

    @property
    def n_strata(self) -> int:
        return len(self.pools)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([float(p) for p in strata_probabilities(self.counts.tolist(), self.n_mc)])

    def stratum_of(self, value: float) -> int:
        """Stratum index of an SV value under half-open [low, high) intervals"""
        return int(np.searchsorted(self.boundaries[1:-1], value, side="right"))

    def drawn(self, k: int, purpose: str) -> List[int]:
        if purpose not in PURPOSES:
            raise ValueError(f"purpose must be one of {PURPOSES}")
        return list((self.drawn_train if purpose == "train" else self.drawn_eval)[k])

    def undrawn(self, k: int) -> np.ndarray:
        used = set(self.drawn_train[k]) | set(self.drawn_eval[k])
        pool = self.pools[k]
        if not used:
            return pool.copy()
        return pool[~np.isin(pool, list(used))]

    def draw(self, k: int, n: int, purpose: str, rng: np.random.Generator) -> List[int]:
        """
        Draw n indices of stratum k uniformly without replacement

        Args:
            k: Stratum index
            n: Number of indices
            purpose: 'train' or 'eval'; the two ledgers never intersect
            rng: Stream for this draw

        Returns:
            List[int]: Phase-I sample indices, in draw order
        """
        if purpose not in PURPOSES:
            raise ValueError(f"purpose must be one of {PURPOSES}")
        if not 0 <= k < self.n_strata:
            raise IndexError(f"stratum {k} outside 0..{self.n_strata - 1}")
        if n < 0:
            raise ValueError("n must be non-negative")
        with self._lock:
            available = self.undrawn(k)
            if available.size < n:
                raise PoolExhaustedError(k, n, int(available.size))
            picked = available[rng.choice(available.size, size=n, replace=False)].tolist() if n else []
            ledger = self.drawn_train if purpose == "train" else self.drawn_eval
            ledger[k].extend(int(i) for i in picked)
            if set(self.drawn_train[k]) & set(self.drawn_eval[k]):
                raise AssertionError(f"train and eval draws overlap in stratum {k}")
        logger.debug(f"Drew {n} {purpose} samples from stratum {k}")
        return [int(i) for i in picked]

    def nu_k(self, evaluated: Sequence[int]) -> np.ndarray:
        """Fraction of each pool that was evaluated"""
        evaluated = np.asarray(evaluated, dtype=float)
        return evaluated / self.counts

    def summary_frame(self) -> pd.DataFrame:
        """Bounds, probability and pool size per stratum"""
        return pd.DataFrame({
            "stratum": np.arange(1, self.n_strata + 1),
            "lower": self.boundaries[:-1],
            "upper": self.boundaries[1:],
            "probability": self.probabilities,
            "count": self.counts,
        })

    def to_dict(self) -> Dict:
        return {
            "version": settings.ARTIFACT_VERSION,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "n_mc": self.n_mc,
            "boundary_rule": self.boundary_rule,
            "boundaries": [None if not np.isfinite(b) else float(b) for b in self.boundaries],
            "counts": [int(c) for c in self.counts],
            "drawn_train": [list(map(int, d)) for d in self.drawn_train],
            "drawn_eval": [list(map(int, d)) for d in self.drawn_eval],
        }

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path: Union[str, Path], phase1: Phase1Result, expected_hash: Optional[str] = None,
             force: bool = False) -> "Stratification":
        """Restore a stratification; pools are rebuilt from the Phase-I SV values"""
        path = Path(path)
        if not path.exists():
            raise ArtifactMissingError(str(path))
        with open(path) as f:
            data = json.load(f)
        if expected_hash is not None and data.get("config_hash") != expected_hash:
            if not force:
                raise ArtifactMismatchError(str(path), expected_hash, data.get("config_hash", ""))
            logger.warning(f"Using {path} despite a config hash mismatch (--force)")
        boundaries = np.array([np.inf if b is None else b for b in data["boundaries"]], dtype=float)
        pools = assign_pools(phase1.sv_values, boundaries)
        counts = np.array([p.size for p in pools])
        if counts.tolist() != data["counts"] or data["n_mc"] != phase1.n_samples:
            raise ArtifactMismatchError(str(path), "phase1 SV values", "different strata counts")
        return cls(
            boundaries=boundaries,
            counts=counts,
            seed=data["seed"],
            n_mc=data["n_mc"],
            pools=pools,
            drawn_train=data.get("drawn_train") or [],
            drawn_eval=data.get("drawn_eval") or [],
            boundary_rule=data.get("boundary_rule", "equal_probability"),
            config_hash=data.get("config_hash", ""),
        )

def assign_pools(sv_values: np.ndarray, boundaries: np.ndarray) -> List[np.ndarray]:
    """Sorted sample indices per stratum under [low, high) intervals"""
    labels = np.searchsorted(boundaries[1:-1], sv_values, side="right")
    return [np.flatnonzero(labels == k) for k in range(len(boundaries) - 1)]

def build_strata(
    phase1: Phase1Result,
    n_strata: int,
    tail_exceedance: float,
    boundary_rule: str = "equal_probability",
    explicit_boundaries: Optional[Sequence[float]] = None,
    domain_lower_bound: Optional[float] = 0.0,
) -> Stratification:
    """
    Partition the Phase-I samples into strata of the SV

    Args:
        phase1: Phase-I SV values
        n_strata: Number of strata
        tail_exceedance: Probability mass of the last stratum
        boundary_rule: 'equal_probability' or 'explicit'
        explicit_boundaries: n_strata - 2 interior bounds for the explicit rule
        domain_lower_bound: First boundary; None uses the smallest SV value

    Returns:
        Stratification: Boundaries, counts and pools (no draws yet)
    """
    values = phase1.sv_values
    n_mc = phase1.n_samples
    ordered = np.sort(values)
    lower = float(ordered[0]) if domain_lower_bound is None else float(domain_lower_bound)
    if lower > ordered[0]:
        raise ValueError(f"domain lower bound {lower} exceeds the smallest SV value {ordered[0]}")

    if n_strata == 1:
        boundaries = np.array([lower, np.inf])
    else:
        n_tail = int(round(tail_exceedance * n_mc))
        if n_tail < MIN_TAIL_COUNT:
            logger.warning(f"Only {n_tail} Phase-I samples in the last stratum (< {MIN_TAIL_COUNT})")
        if n_tail < 1 or n_tail >= n_mc:
            raise EmptyStratumError(n_strata - 1 if n_tail < 1 else 0)
        last_lower = float(ordered[n_mc - n_tail])
        if boundary_rule == "equal_probability":
            body = n_mc - n_tail
            interior = [float(ordered[int(round(i * body / (n_strata - 1)))]) for i in range(1, n_strata - 1)]
        elif boundary_rule == "explicit":
            if explicit_boundaries is None or len(explicit_boundaries) != n_strata - 2:
                raise ValueError("explicit rule needs n_strata - 2 interior boundaries")
            interior = [float(b) for b in explicit_boundaries]
        else:
            raise ValueError(f"unknown boundary rule '{boundary_rule}'")
        boundaries = np.array([lower] + interior + [last_lower, np.inf])

    steps = np.diff(boundaries)
    if np.any(steps <= 0):
        raise EmptyStratumError(int(np.argmax(steps <= 0)))
    pools = assign_pools(values, boundaries)
    counts = np.array([p.size for p in pools])
    for k, c in enumerate(counts):
        if c == 0:
            raise EmptyStratumError(k)
    logger.info(f"Built {n_strata} strata from {n_mc} samples; last lower bound {boundaries[-2]:.6g}")
    return Stratification(
        boundaries=boundaries,
        counts=counts,
        seed=phase1.seed,
        n_mc=n_mc,
        pools=pools,
        boundary_rule=boundary_rule,
    )
