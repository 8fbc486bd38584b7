# app/services/excitation.py
"""Multivariate Gaussian load histories by spectral representation.

Each channel c is a sum of cosines over an equally spaced frequency grid up to the
Nyquist frequency of ``dt``:

    x_c(t) = sum_k sum_{d <= c} sqrt(2 df) sqrt(S_c(f_k)) L[c, d] cos(2 pi f_k t + theta[d, k])

with S_c a two-parameter low-pass PSD and L the lower Cholesky factor of the
exponential coherence matrix exp(-decay |c - d|). The phase vector is laid out
channel-major: theta[d * n_freq + k].
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from app.core.exceptions import DimensionMismatchError, EnvelopeError
from app.core.logging import logger
from app.core.models import ExcitationConfig
from app.core.rng import stream

TWO_PI = 2.0 * np.pi

@dataclass(frozen=True)
class Envelope:
    ramp_up: float = 0.0
    ramp_down: float = 0.0
    tail_zero: float = 0.0

    @property
    def total(self) -> float:
        return self.ramp_up + self.ramp_down + self.tail_zero

@dataclass
class PhaseVector:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise DimensionMismatchError("phase vector must be one-dimensional")
        if np.any(self.values < 0) or np.any(self.values >= TWO_PI):
            raise ValueError("phases must lie in [0, 2*pi)")

    def __len__(self) -> int:
        return self.values.shape[0]

@dataclass
class ExcitationRealization:
    samples: np.ndarray
    dt: float

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("excitation contains non-finite values")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_steps(self) -> int:
        return self.samples.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt

    def on_grid(self, dt: float, n_steps: int) -> np.ndarray:
        """Linearly interpolate every channel onto t = i * dt, i < n_steps"""
        t_new = np.arange(n_steps) * dt
        return np.vstack([np.interp(t_new, self.times, row) for row in self.samples])

    def scaled(self, factor: float) -> "ExcitationRealization":
        return ExcitationRealization(self.samples * factor, self.dt)

    def to_csv(self, path: Union[str, Path]) -> None:
        """One row per time step, one column per channel"""
        frame = pd.DataFrame(
            self.samples.T,
            columns=[f"channel_{c}" for c in range(self.n_channels)],
        )
        frame.insert(0, "time", self.times)
        frame.to_csv(path, index=False)

@dataclass
class SpectralLoadModel:
    n_channels: int
    dt: float
    duration: float
    intensities: np.ndarray
    corner_frequencies: np.ndarray
    coherence_decay: float = 0.0
    n_freq: int = 64
    envelope: Envelope = field(default_factory=Envelope)

    def __post_init__(self):
        self.intensities = np.broadcast_to(
            np.asarray(self.intensities, dtype=float), (self.n_channels,)).copy()
        self.corner_frequencies = np.broadcast_to(
            np.asarray(self.corner_frequencies, dtype=float), (self.n_channels,)).copy()
        if self.n_freq < 1:
            raise ValueError("n_freq must be at least 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if np.any(self.intensities < 0) or np.any(self.corner_frequencies <= 0):
            raise ValueError("PSD intensities must be >= 0 and corner frequencies > 0")
        if self.coherence_decay < 0:
            raise ValueError("coherence_decay must be >= 0")
        if self.envelope.total > self.duration:
            raise EnvelopeError(
                f"ramps and tail ({self.envelope.total} s) exceed the duration ({self.duration} s)")

        self.df = (0.5 / self.dt) / self.n_freq
        self.frequencies = self.df * np.arange(1, self.n_freq + 1)
        self._coherence_factor = self._coherence_cholesky()
        # amplitudes[c, d, k], the coefficient of cos(2 pi f_k t + theta[d, k]) in channel c
        root_psd = np.sqrt(self.intensities)[:, None] * np.sqrt(self._psd_shape())
        self._amplitudes = (
            np.sqrt(2.0 * self.df)
            * root_psd[:, None, :]
            * self._coherence_factor[:, :, None]
        )

    @classmethod
    def from_config(cls, config: ExcitationConfig) -> "SpectralLoadModel":
        return cls(
            n_channels=config.n_channels,
            dt=config.dt,
            duration=config.duration,
            intensities=np.array([p.intensity for p in config.psd]),
            corner_frequencies=np.array([p.corner_frequency for p in config.psd]),
            coherence_decay=config.coherence_decay,
            n_freq=config.n_freq,
            envelope=Envelope(config.envelope.ramp_up, config.envelope.ramp_down,
                              config.envelope.tail_zero),
        )

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def n_theta(self) -> int:
        return self.n_channels * self.n_freq

    def _psd_shape(self) -> np.ndarray:
        f = self.frequencies[None, :]
        return 1.0 / (1.0 + (f / self.corner_frequencies[:, None]) ** 2)

    def psd(self, frequencies: Optional[np.ndarray] = None) -> np.ndarray:
        """Target one-sided PSD per channel, shape (n_channels, n_f)"""
        f = self.frequencies if frequencies is None else np.asarray(frequencies, dtype=float)
        return self.intensities[:, None] / (1.0 + (f[None, :] / self.corner_frequencies[:, None]) ** 2)

    def target_variance(self) -> np.ndarray:
        """Discrete Parseval sum of the target PSD per channel"""
        return self.psd().sum(axis=1) * self.df

    def coherence_matrix(self) -> np.ndarray:
        idx = np.arange(self.n_channels)
        return np.exp(-self.coherence_decay * np.abs(idx[:, None] - idx[None, :]))

    def _coherence_cholesky(self) -> np.ndarray:
        if self.coherence_decay == 0.0:
            # Fully coherent channels share the phases of channel 0
            factor = np.zeros((self.n_channels, self.n_channels))
            factor[:, 0] = 1.0
            return factor
        return np.linalg.cholesky(self.coherence_matrix())

    def with_intensity_scale(self, factor: float) -> "SpectralLoadModel":
        return SpectralLoadModel(
            n_channels=self.n_channels,
            dt=self.dt,
            duration=self.duration,
            intensities=self.intensities * factor,
            corner_frequencies=self.corner_frequencies,
            coherence_decay=self.coherence_decay,
            n_freq=self.n_freq,
            envelope=self.envelope,
        )

def sample_phases(rng: np.random.Generator, model: SpectralLoadModel) -> PhaseVector:
    """
    Draw the n_channels * n_freq i.i.d. uniform phases of one realization

    Args:
        rng: Per-sample stream, see app.core.rng.stream
        model: Load model fixing the phase count

    Returns:
        PhaseVector: Angles in [0, 2*pi), channel-major
    """
    values = rng.uniform(0.0, TWO_PI, size=model.n_theta)
    # uniform() can round up to the open upper bound
    return PhaseVector(np.mod(values, TWO_PI))

def phases_for_sample(seed: int, index: int, model: SpectralLoadModel, substream: str = "phase1") -> PhaseVector:
    """Phase vector of sample `index` under the seed contract"""
    return sample_phases(stream(seed, substream, index), model)

def envelope_weights(n_steps: int, dt: float, envelope: Envelope) -> np.ndarray:
    """Trapezoidal window: linear ramp up, unity plateau, linear ramp down to zero, zero tail"""
    total = n_steps * dt
    if envelope.total > total + 1e-9 * max(total, 1.0):
        raise EnvelopeError(f"envelope ({envelope.total} s) is longer than the series ({total} s)")
    t = np.arange(n_steps) * dt
    w = np.ones(n_steps)
    if n_steps == 0:
        return w
    if envelope.ramp_up > 0:
        up = t < envelope.ramp_up
        w[up] = t[up] / envelope.ramp_up
    # ramp down ends tail_zero before the last sample
    end_of_load = t[-1] - envelope.tail_zero
    if envelope.ramp_down > 0:
        w = np.minimum(w, np.clip((end_of_load - t) / envelope.ramp_down, 0.0, 1.0))
    elif envelope.tail_zero > 0:
        w[t >= end_of_load - 1e-9 * dt] = 0.0
    return w

def apply_envelope(series: ExcitationRealization, envelope: Envelope) -> ExcitationRealization:
    """Multiply every channel by the envelope window"""
    weights = envelope_weights(series.n_steps, series.dt, envelope)
    return ExcitationRealization(series.samples * weights[None, :], series.dt)

def synthesize(model: SpectralLoadModel, theta: PhaseVector, enveloped: bool = True) -> ExcitationRealization:
    """
    Realization of the load process for a phase vector

    Args:
        model: Spectral load model
        theta: Phase vector of length n_channels * n_freq
        enveloped: Apply the envelope window last (False gives the stationary process)

    Returns:
        ExcitationRealization: (n_channels x t_n) load history
    """
    values = theta.values if isinstance(theta, PhaseVector) else np.asarray(theta, dtype=float)
    if values.shape != (model.n_theta,):
        raise DimensionMismatchError(
            f"phase vector has length {values.size}, model needs {model.n_theta}")
    phases = values.reshape(model.n_channels, model.n_freq)
    t = np.arange(model.n_steps) * model.dt
    # cosines[d, k, i] = cos(2 pi f_k t_i + theta[d, k])
    cosines = np.cos(TWO_PI * model.frequencies[None, :, None] * t[None, None, :] + phases[:, :, None])
    samples = np.einsum("cdk,dki->ci", model._amplitudes, cosines)
    realization = ExcitationRealization(samples, model.dt)
    if enveloped:
        realization = apply_envelope(realization, model.envelope)
    logger.debug(f"Synthesized realization: {model.n_channels} channels x {model.n_steps} steps")
    return realization
