# app/services/reduction.py
"""POD basis over response snapshots and Daubechies wavelet compression of reduced sequences."""
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
import pywt
from scipy import linalg

from app.core.exceptions import DimensionMismatchError, ReductionError
from app.core.logging import logger

def snapshot_indices(n_time: int, per_sample: int) -> np.ndarray:
    """Evenly spaced snapshot times: the midpoints of per_sample equal windows"""
    if per_sample > n_time:
        raise ReductionError(f"{per_sample} snapshots requested from {n_time} time points")
    i = np.arange(per_sample)
    return ((2 * i + 1) * n_time) // (2 * per_sample)

def build_snapshot_matrix(responses: Sequence[np.ndarray], n_t: int) -> np.ndarray:
    """
    Pool displacement snapshots of the training responses into X (n x n_t)

    Args:
        responses: (n x t_n) displacement histories
        n_t: Total snapshot count, divided evenly across responses

    Returns:
        np.ndarray: Snapshot matrix, response-major columns
    """
    if not responses:
        raise ReductionError("no responses to build snapshots from")
    if n_t < len(responses) or n_t % len(responses):
        raise ReductionError(f"{n_t} snapshots cannot be split evenly across {len(responses)} responses")
    per_sample = n_t // len(responses)
    columns = []
    for y in responses:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        columns.append(y[:, snapshot_indices(y.shape[1], per_sample)])
    return np.hstack(columns)

@dataclass(frozen=True)
class ReducedBasis:
    phi: np.ndarray
    singular_values: np.ndarray
    eta: float
    n_t: int

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    @property
    def n_r(self) -> int:
        return self.phi.shape[1]

def pod_truncate(X: np.ndarray, eta: float) -> ReducedBasis:
    """
    Truncated POD basis: the fewest left singular vectors holding an eta share of the energy

    Args:
        X: Snapshot matrix (n x n_t)
        eta: Energy threshold in (0, 1]

    Returns:
        ReducedBasis: Orthonormal Phi (n x n_r) and the retained singular values
    """
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    X = np.asarray(X, dtype=float)
    U, s, _ = linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise ReductionError("snapshot matrix is zero")
    rank = int(np.sum(s > s[0] * max(X.shape) * np.finfo(float).eps))
    energy = np.cumsum(s[:rank] ** 2) / np.sum(s[:rank] ** 2)
    # the last cumulative ratio is 1 up to rounding
    energy[-1] = 1.0
    n_r = int(np.searchsorted(energy, eta, side="left")) + 1
    n_r = min(n_r, rank)
    logger.info(f"POD basis: n_r = {n_r} of rank {rank} (eta = {eta}, energy {energy[n_r - 1]:.8f})")
    return ReducedBasis(U[:, :n_r], s[:n_r], eta, X.shape[1])

def energy_ratio(basis: ReducedBasis, X: np.ndarray) -> float:
    """Share of the squared singular values of X kept by the basis"""
    s = linalg.svdvals(np.asarray(X, dtype=float))
    return float(np.sum(basis.singular_values ** 2) / np.sum(s ** 2))

def _check_rows(basis: ReducedBasis, values: np.ndarray, rows: int, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape[0] != rows:
        raise DimensionMismatchError(f"{what} has {values.shape[0]} rows, basis needs {rows}")
    return values

def project_input(basis: ReducedBasis, F: np.ndarray) -> np.ndarray:
    """p = Phi^T F"""
    return basis.phi.T @ _check_rows(basis, F, basis.n, "input")

def project_output(basis: ReducedBasis, y: np.ndarray) -> np.ndarray:
    """q = Phi^T y"""
    return basis.phi.T @ _check_rows(basis, y, basis.n, "output")

def lift(basis: ReducedBasis, q: np.ndarray) -> np.ndarray:
    """y ~ Phi q"""
    return basis.phi @ _check_rows(basis, q, basis.n_r, "reduced sequence")

@dataclass(frozen=True)
class WaveletConfig:
    family: str = "db4"
    level: int = 4
    original_len: int = 0
    mode: str = "symmetric"

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("wavelet level must be at least 1")
        if self.original_len < 1:
            raise ValueError("original_len must be positive")

    @property
    def filter_len(self) -> int:
        return pywt.Wavelet(self.family).dec_len

    def coefficient_lengths(self) -> List[int]:
        """Lengths of the level-1..level coefficient arrays"""
        lengths, n = [], self.original_len
        for _ in range(self.level):
            n = pywt.dwt_coeff_len(n, self.filter_len, self.mode)
            lengths.append(n)
        return lengths

    @property
    def compressed_len(self) -> int:
        return self.coefficient_lengths()[-1]

def _check_length(seq: np.ndarray, config: WaveletConfig) -> None:
    if seq.shape[-1] != config.original_len:
        raise DimensionMismatchError(f"sequence length {seq.shape[-1]} != {config.original_len}")
    if pywt.dwt_max_level(config.original_len, config.filter_len) < config.level:
        raise ReductionError(
            f"sequence of length {config.original_len} is too short for {config.family} level {config.level}")

def wavelet_decompose(seq: np.ndarray, config: WaveletConfig) -> List[np.ndarray]:
    """Full multilevel decomposition [cA_L, cD_L, ..., cD_1] along the last axis"""
    seq = np.asarray(seq, dtype=float)
    _check_length(seq, config)
    return pywt.wavedec(seq, config.family, mode=config.mode, level=config.level, axis=-1)

def wavelet_recompose(coefficients: List[np.ndarray], config: WaveletConfig) -> np.ndarray:
    """Inverse of wavelet_decompose, trimmed to original_len"""
    seq = pywt.waverec(coefficients, config.family, mode=config.mode, axis=-1)
    return seq[..., :config.original_len]

def wavelet_compress(seq: np.ndarray, config: WaveletConfig) -> np.ndarray:
    """Approximation coefficients at the configured level (tau_n of them)"""
    return wavelet_decompose(seq, config)[0]

def wavelet_reconstruct(coefficients: np.ndarray, config: WaveletConfig) -> np.ndarray:
    """Sequence of length original_len from approximation coefficients, details zeroed"""
    coefficients = np.asarray(coefficients, dtype=float)
    lengths = config.coefficient_lengths()
    if coefficients.shape[-1] != lengths[-1]:
        raise DimensionMismatchError(
            f"{coefficients.shape[-1]} coefficients given, level {config.level} needs {lengths[-1]}")
    lead = coefficients.shape[:-1]
    details = [np.zeros(lead + (n,)) for n in reversed(lengths)]
    return wavelet_recompose([coefficients] + details, config)

def average_peak(sequences: Sequence[np.ndarray]) -> float:
    """Mean over sequences of max |value|; 1.0 when every sequence is zero"""
    if not sequences:
        return 1.0
    peak = float(np.mean([np.max(np.abs(s)) for s in sequences]))
    return peak if peak > 0 else 1.0

@dataclass(frozen=True)
class ReducedSpace:
    """
    The mapping the surrogate learns in: shared POD basis, per-side normalization by the
    average peak reduced value, then wavelet compression along time.

    Encoded sequences are (tau_n x n_r), time-major, ready for a recurrent network.
    """
    basis: ReducedBasis
    wavelet: WaveletConfig
    input_scale: float = 1.0
    output_scale: float = 1.0

    def encode_input(self, F: np.ndarray) -> np.ndarray:
        reduced = project_input(self.basis, F) / self.input_scale
        return wavelet_compress(reduced, self.wavelet).T

    def encode_output(self, y: np.ndarray) -> np.ndarray:
        reduced = project_output(self.basis, y) / self.output_scale
        return wavelet_compress(reduced, self.wavelet).T

    def decode_output(self, sequence: np.ndarray) -> np.ndarray:
        """(tau_n x n_r) network output back to (n x t_n) displacements"""
        reduced = wavelet_reconstruct(np.asarray(sequence, dtype=float).T, self.wavelet)
        return lift(self.basis, reduced * self.output_scale)

    @classmethod
    def fit(cls, basis: ReducedBasis, wavelet: WaveletConfig,
            inputs: Sequence[np.ndarray], outputs: Sequence[np.ndarray]) -> "ReducedSpace":
        """Calibrate both normalization scales on the training pairs"""
        input_scale = average_peak([project_input(basis, F) for F in inputs])
        output_scale = average_peak([project_output(basis, y) for y in outputs])
        logger.debug(f"Reduced-space scales: input {input_scale:.6g}, output {output_scale:.6g}")
        return cls(basis, wavelet, input_scale, output_scale)

def reduced_space_from(inputs: Sequence[np.ndarray], outputs: Sequence[np.ndarray],
                       eta: float, snapshots_per_sample: int, family: str = "db4",
                       level: int = 4, mode: str = "symmetric") -> ReducedSpace:
    """Basis from the output snapshots, wavelet sized to the record, scales from the pairs"""
    per_sample = min(snapshots_per_sample, min(np.shape(y)[1] for y in outputs))
    X = build_snapshot_matrix(list(outputs), per_sample * len(outputs))
    basis = pod_truncate(X, eta)
    wavelet = WaveletConfig(family, level, int(np.shape(outputs[0])[1]), mode)
    return ReducedSpace.fit(basis, wavelet, inputs, outputs)
