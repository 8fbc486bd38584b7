# app/services/surrogate.py
"""
Low-fidelity model: a GRU regressor between wavelet-compressed reduced load and response
sequences, with the cross-validated weighted correlation that decides when it is good enough.
"""
import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
from sklearn.model_selection import KFold

from app.core.config import settings
from app.core.exceptions import (
    AdaptiveTrainingError,
    ArtifactMissingError,
    CorrelationError,
    DimensionMismatchError,
    SurrogateTrainingError,
)
from app.core.logging import logger
from app.core.models import AdaptiveConfig, TrainingConfig
from app.core.rng import derived_seed, stream
from app.services.reduction import ReducedBasis, ReducedSpace, WaveletConfig, project_output

# Maps a list of (n x t_n) load histories to a list of (n x t_n) displacement histories
Predictor = Callable[[List[np.ndarray]], List[np.ndarray]]
RegressorFactory = Callable[[List[np.ndarray], List[np.ndarray]], Predictor]

class GRURegressor(nn.Module):
    """One GRU layer, dropout, and a linear map back to the reduced channels at every step"""

    def __init__(self, n_features: int, hidden_size: int = 200, dropout: float = 0.5):
        super().__init__()
        self.n_features = n_features
        self.hidden_size = hidden_size
        self.gru = nn.GRU(input_size=n_features, hidden_size=hidden_size, batch_first=True)
        self.dropout = nn.Dropout(dropout)
        self.fc = nn.Linear(hidden_size, n_features)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out, _ = self.gru(x)
        return self.fc(self.dropout(out))

class SurrogateModel:
    """Reduced space + trained network; prediction always runs in eval mode"""

    def __init__(self, space: ReducedSpace, network: GRURegressor, record_dt: float,
                 provenance: Optional[Dict[str, Any]] = None):
        self.space = space
        self.network = network
        self.record_dt = record_dt
        self.provenance = provenance or {}
        self.network.eval()

    @property
    def original_len(self) -> int:
        return self.space.wavelet.original_len

    def predict_many(self, loads: Sequence[np.ndarray]) -> List[np.ndarray]:
        """Displacement histories for load histories sampled on the record grid"""
        if not loads:
            return []
        encoded = np.stack([self.space.encode_input(F) for F in loads])
        self.network.eval()
        with torch.no_grad():
            out = self.network(torch.as_tensor(encoded, dtype=torch.float32)).double().numpy()
        return [self.space.decode_output(seq) for seq in out]

    def predict_load(self, load: np.ndarray) -> np.ndarray:
        return self.predict_many([load])[0]

    def save(self, path: Union[str, Path]) -> None:
        basis = self.space.basis
        wavelet = self.space.wavelet
        payload = {
            "version": settings.ARTIFACT_VERSION,
            "state_dict": self.network.state_dict(),
            "network": {
                "n_features": self.network.n_features,
                "hidden_size": self.network.hidden_size,
                "dropout": self.network.dropout.p,
            },
            "basis": {
                "phi": basis.phi,
                "singular_values": basis.singular_values,
                "eta": basis.eta,
                "n_t": basis.n_t,
            },
            "wavelet": {
                "family": wavelet.family,
                "level": wavelet.level,
                "original_len": wavelet.original_len,
                "mode": wavelet.mode,
            },
            "scales": {"input": self.space.input_scale, "output": self.space.output_scale},
            "record_dt": self.record_dt,
            "provenance": self.provenance,
        }
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(payload, path)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SurrogateModel":
        path = Path(path)
        if not path.exists():
            raise ArtifactMissingError(str(path))
        payload = torch.load(path, weights_only=False)
        b = payload["basis"]
        basis = ReducedBasis(np.asarray(b["phi"]), np.asarray(b["singular_values"]), b["eta"], b["n_t"])
        space = ReducedSpace(basis, WaveletConfig(**payload["wavelet"]),
                             payload["scales"]["input"], payload["scales"]["output"])
        network = GRURegressor(**payload["network"])
        network.load_state_dict(payload["state_dict"])
        return cls(space, network, payload["record_dt"], payload.get("provenance"))

def _set_torch_determinism(seed: int) -> torch.Generator:
    torch.manual_seed(seed)
    torch.set_num_threads(max(1, settings.TORCH_THREADS))
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator

def train(
    inputs: Sequence[np.ndarray],
    outputs: Sequence[np.ndarray],
    space: ReducedSpace,
    config: TrainingConfig,
    seed: int,
    record_dt: float,
    provenance: Optional[Dict[str, Any]] = None,
) -> SurrogateModel:
    """
    Fit the GRU on compressed reduced sequences with Adam and an MSE loss

    Args:
        inputs: Load histories on the record grid, (n x t_n) each
        outputs: HF displacement histories, (n x t_n) each
        space: Reduced space the sequences are encoded in
        config: Training hyperparameters
        seed: Seed for weight init, validation split and batch order
        record_dt: Record spacing, stored with the model

    Returns:
        SurrogateModel: Network restored to its best validation epoch
    """
    if not inputs or len(inputs) != len(outputs):
        raise DimensionMismatchError(f"{len(inputs)} inputs vs {len(outputs)} outputs")
    seed = config.seed if config.seed is not None else seed
    generator = _set_torch_determinism(seed)

    x = torch.as_tensor(np.stack([space.encode_input(F) for F in inputs]), dtype=torch.float32)
    y = torch.as_tensor(np.stack([space.encode_output(Y) for Y in outputs]), dtype=torch.float32)
    n = x.shape[0]
    n_val = int(round(config.validation_fraction * n)) if n > 1 else 0
    n_val = min(max(n_val, 1 if n > 1 else 0), n - 1)
    order = torch.randperm(n, generator=generator)
    val_idx, train_idx = order[:n_val], order[n_val:]

    network = GRURegressor(x.shape[2], config.hidden_size, config.dropout)
    optimizer = torch.optim.Adam(network.parameters(), lr=config.learning_rate)
    loss_fn = nn.MSELoss()

    best_state = copy.deepcopy(network.state_dict())
    best_loss, stale, last_train = float("inf"), 0, float("nan")
    for epoch in range(config.max_epochs):
        network.train()
        batch_order = train_idx[torch.randperm(train_idx.numel(), generator=generator)]
        running = 0.0
        for start in range(0, batch_order.numel(), config.batch_size):
            batch = batch_order[start:start + config.batch_size]
            optimizer.zero_grad()
            loss = loss_fn(network(x[batch]), y[batch])
            if not torch.isfinite(loss):
                raise SurrogateTrainingError(
                    f"non-finite loss at epoch {epoch}",
                    diagnostics={"epoch": epoch, "loss": float(loss), "last_train_loss": last_train},
                )
            loss.backward()
            optimizer.step()
            running += float(loss) * batch.numel()
        last_train = running / max(train_idx.numel(), 1)

        if n_val:
            network.eval()
            with torch.no_grad():
                monitored = float(loss_fn(network(x[val_idx]), y[val_idx]))
        else:
            monitored = last_train
        if not np.isfinite(monitored):
            raise SurrogateTrainingError(f"non-finite validation loss at epoch {epoch}",
                                         diagnostics={"epoch": epoch, "last_train_loss": last_train})
        if monitored < best_loss:
            best_loss, stale = monitored, 0
            best_state = copy.deepcopy(network.state_dict())
        else:
            stale += 1
            if stale >= config.patience:
                logger.debug(f"Early stopping at epoch {epoch} (best validation loss {best_loss:.3e})")
                break

    network.load_state_dict(best_state)
    logger.info(f"Trained surrogate on {n - n_val} samples ({n_val} held out), "
                f"best loss {best_loss:.3e}")
    info = {"seed": seed, "n_samples": n, "best_loss": best_loss}
    info.update(provenance or {})
    return SurrogateModel(space, network, record_dt, info)

def reduced_peaks(basis: ReducedBasis, responses: Sequence[np.ndarray]) -> np.ndarray:
    """Per sample and mode, max_t |q_l(t)| with q = Phi^T y; shape (N x n_r)"""
    return np.stack([np.max(np.abs(project_output(basis, y)), axis=1) for y in responses])

def weighted_correlation(hf_peaks: np.ndarray, lf_peaks: np.ndarray,
                         weights: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Correlation of HF and LF reduced peaks, averaged over modes with weights lambda_l

    Args:
        hf_peaks: (N x n_r) HF reduced peaks
        lf_peaks: (N x n_r) LF reduced peaks for the same samples
        weights: Positive per-mode weights (singular values)

    Returns:
        Tuple of (rho_v, per-mode rho with NaN for excluded modes)
    """
    hf_peaks = np.atleast_2d(np.asarray(hf_peaks, dtype=float))
    lf_peaks = np.atleast_2d(np.asarray(lf_peaks, dtype=float))
    weights = np.asarray(weights, dtype=float)
    if hf_peaks.shape != lf_peaks.shape or hf_peaks.shape[1] != weights.size:
        raise DimensionMismatchError(
            f"peaks {hf_peaks.shape} vs {lf_peaks.shape} with {weights.size} weights")
    if np.any(weights <= 0):
        raise ValueError("correlation weights must be positive")
    if hf_peaks.shape[0] < 2:
        raise CorrelationError("need at least two samples")

    per_mode = np.full(weights.size, np.nan)
    for l in range(weights.size):
        a, b = hf_peaks[:, l], lf_peaks[:, l]
        if np.std(a) == 0 or np.std(b) == 0:
            logger.warning(f"Mode {l} has zero variance; excluded from the weighted correlation")
            continue
        per_mode[l] = np.corrcoef(a, b)[0, 1]
    kept = ~np.isnan(per_mode)
    if not kept.any():
        raise CorrelationError("every mode has zero variance")
    rho_v = float(np.sum(weights[kept] * per_mode[kept]) / np.sum(weights[kept]))
    return rho_v, per_mode

@dataclass
class CorrelationReport:
    rho_bar: float
    delta: float
    per_mode: np.ndarray
    fold_rhos: List[float]
    k: int

def kfold_cv(
    inputs: Sequence[np.ndarray],
    outputs: Sequence[np.ndarray],
    k: int,
    basis: ReducedBasis,
    regressor_factory: RegressorFactory,
    seed: int,
) -> CorrelationReport:
    """
    k-fold cross-validated weighted correlation of a regressor against the HF outputs

    Args:
        inputs: Load histories
        outputs: HF displacement histories
        k: Number of folds, 5 to 10
        basis: POD basis defining the reduced peaks and the weights
        regressor_factory: Fits on (inputs, outputs) and returns a predictor
        seed: Master seed for the fold split

    Returns:
        CorrelationReport: Mean and COV of the per-fold rho_v
    """
    if not 5 <= k <= 10:
        raise ValueError(f"k must lie between 5 and 10, got {k}")
    n = len(inputs)
    if n != len(outputs):
        raise DimensionMismatchError(f"{n} inputs vs {len(outputs)} outputs")
    if n < 2 * k:
        raise CorrelationError(f"{n} samples are too few for {k}-fold cross-validation (need {2 * k})")
    if n // k < 3:
        raise CorrelationError(f"folds of {n // k} samples are too small for a correlation")

    splitter = KFold(n_splits=k, shuffle=True, random_state=derived_seed(seed, "cv-split", n))
    fold_rhos, per_mode_rows = [], []
    for fold, (train_idx, test_idx) in enumerate(splitter.split(np.arange(n))):
        predictor = regressor_factory([inputs[i] for i in train_idx], [outputs[i] for i in train_idx])
        predicted = predictor([inputs[i] for i in test_idx])
        rho, per_mode = weighted_correlation(
            reduced_peaks(basis, [outputs[i] for i in test_idx]),
            reduced_peaks(basis, predicted),
            basis.singular_values,
        )
        logger.debug(f"Fold {fold + 1}/{k}: rho_v = {rho:.4f}")
        fold_rhos.append(rho)
        per_mode_rows.append(per_mode)

    rho_bar = float(np.mean(fold_rhos))
    spread = float(np.std(fold_rhos, ddof=1))
    delta = spread / abs(rho_bar) if rho_bar != 0 else float("inf")
    with np.errstate(all="ignore"):
        per_mode = np.nanmean(np.vstack(per_mode_rows), axis=0)
    return CorrelationReport(rho_bar, delta, per_mode, fold_rhos, k)

@dataclass
class TrainingSet:
    """HF training pairs accumulated across adaptive iterations, in draw order"""
    indices: List[int] = field(default_factory=list)
    strata: List[int] = field(default_factory=list)
    inputs: List[np.ndarray] = field(default_factory=list)
    outputs: List[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.indices)

    def extend(self, stratum: int, indices: Sequence[int],
               pairs: Sequence[Tuple[np.ndarray, np.ndarray]]) -> None:
        for index, (load, response) in zip(indices, pairs):
            self.indices.append(int(index))
            self.strata.append(int(stratum))
            self.inputs.append(load)
            self.outputs.append(response)

    def per_stratum(self, n_strata: int) -> List[int]:
        return [self.strata.count(k) for k in range(n_strata)]

@dataclass
class AdaptiveResult:
    model: Any
    n_train: int
    report: CorrelationReport
    trajectory: List[Dict[str, Any]]
    training_set: TrainingSet

# Runs HF on a batch of Phase-I indices, returning (load, response) pairs in the same order
HFRunner = Callable[[List[int]], List[Tuple[np.ndarray, np.ndarray]]]

def adaptive_train(
    strat,
    hf_runner: HFRunner,
    config: AdaptiveConfig,
    seed: int,
    cv: Callable[[TrainingSet], CorrelationReport],
    trainer: Callable[[TrainingSet], Any],
    substream: str = "train-draw",
) -> AdaptiveResult:
    """
    Grow the per-stratum training set until the cross-validated correlation meets its targets

    Args:
        strat: Stratification whose pools supply the training draws
        hf_runner: HF evaluation of Phase-I indices
        config: N_init, N_add, targets and the iteration cap
        seed: Master seed
        cv: Cross-validation of the current training set
        trainer: Final fit on every accumulated sample
        substream: Stream name for the draws

    Returns:
        AdaptiveResult: Final model, N_train per stratum, last report and the trajectory

    Raises:
        AdaptiveTrainingError: max_iterations reached with the targets unmet
    """
    data = TrainingSet()
    trajectory: List[Dict[str, Any]] = []
    n_per_stratum = 0
    for iteration in range(config.max_iterations + 1):
        n_new = config.n_init if iteration == 0 else config.n_add
        for k in range(strat.n_strata):
            picked = strat.draw(k, n_new, "train", stream(seed, substream, iteration, k))
            data.extend(k, picked, hf_runner(picked))
        n_per_stratum += n_new

        report = cv(data)
        trajectory.append({
            "iteration": iteration,
            "n_train": n_per_stratum,
            "total_samples": len(data),
            "rho_bar": report.rho_bar,
            "delta": report.delta,
        })
        logger.info(f"Adaptive iteration {iteration}: {len(data)} samples, "
                    f"rho_bar = {report.rho_bar:.4f}, delta = {report.delta:.4%}")
        if report.rho_bar >= config.rho_target and report.delta <= config.delta_target:
            model = trainer(data)
            return AdaptiveResult(model, n_per_stratum, report, trajectory, data)

    raise AdaptiveTrainingError(trajectory)
