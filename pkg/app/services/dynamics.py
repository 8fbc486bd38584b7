# app/services/dynamics.py
"""
Hysteretic shear-building model and its two solvers.

The high-fidelity path integrates M u'' + C u' + f_nl(u, z) = p(t) with Newmark average
acceleration and a Bouc-Wen hysteretic variable per story. The cheap path is the
linear elastic building evaluated by truncated modal superposition, used for the
stratification variable (peak elastic base moment).
"""
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg, signal

from app.core.exceptions import (
    DimensionMismatchError,
    HFNonconvergenceError,
    ModalCacheError,
)
from app.core.logging import logger
from app.core.models import StructureConfig
from app.services.excitation import ExcitationRealization, PhaseVector, SpectralLoadModel, synthesize

# Newmark average acceleration
NEWMARK_GAMMA = 0.5
NEWMARK_BETA = 0.25

@dataclass(frozen=True)
class BoucWenParams:
    yield_displacement: np.ndarray
    alpha: float = 0.1
    A: float = 1.0
    beta: float = 0.5
    gamma: float = 0.5
    n: float = 2.0

    @property
    def z_max(self) -> float:
        """Saturation value of the hysteretic variable under monotonic loading"""
        return (self.A / (self.beta + self.gamma)) ** (1.0 / self.n)

@dataclass(frozen=True)
class SolverParams:
    dt: float = 0.02
    record_dt: float = 0.1
    tolerance: float = 1e-8
    max_iterations: int = 25
    line_search_steps: int = 8
    refinement_tolerance: float = 0.01

    @property
    def stride(self) -> int:
        return int(round(self.record_dt / self.dt))

class CascadeStage(NamedTuple):
    stage_id: int
    name: str
    substeps: int
    method: str

SOLVER_CASCADE: Tuple[CascadeStage, ...] = (
    CascadeStage(1, "newton-line-search", 1, "line_search"),
    CascadeStage(2, "newton-line-search", 10, "line_search"),
    CascadeStage(3, "newton", 20, "newton"),
    CascadeStage(4, "broyden", 20, "broyden"),
)

def rayleigh_calibrate(f1: float, f2: float, zeta: float) -> Tuple[float, float]:
    """
    Two-frequency Rayleigh damping fit

    Args:
        f1: Lower calibration frequency (Hz)
        f2: Upper calibration frequency (Hz)
        zeta: Target damping ratio at both frequencies

    Returns:
        Tuple of (alpha_M in 1/s, beta_K in s)
    """
    if not 0 < f1 < f2:
        raise ValueError(f"Rayleigh calibration needs 0 < f1 < f2, got f1={f1}, f2={f2}")
    if zeta < 0:
        raise ValueError("damping ratio must be non-negative")
    w1, w2 = 2 * math.pi * f1, 2 * math.pi * f2
    return 2 * zeta * w1 * w2 / (w1 + w2), 2 * zeta / (w1 + w2)

def shear_stiffness_matrix(story_stiffness: np.ndarray) -> np.ndarray:
    """Tridiagonal stiffness of a shear building from per-story stiffness (story 0 at the base)"""
    k = np.asarray(story_stiffness, dtype=float)
    n = k.size
    K = np.zeros((n, n))
    for j in range(n):
        K[j, j] += k[j]
        if j > 0:
            K[j - 1, j - 1] += k[j]
            K[j - 1, j] -= k[j]
            K[j, j - 1] -= k[j]
    return K

class StructuralModel:
    """
    Immutable description of the building; every integration owns its own state.

    Story j connects floor j to floor j - 1 (the ground for j = 0). Loads act on floors.
    """

    def __init__(
        self,
        masses: Sequence[float],
        stiffness: Sequence[float],
        story_heights: Sequence[float],
        bouc_wen: BoucWenParams,
        rayleigh: Tuple[float, float] = (0.0, 0.0),
        solver: SolverParams = SolverParams(),
        n_modes: int = 2,
    ):
        self.masses = np.asarray(masses, dtype=float)
        self.stiffness = np.asarray(stiffness, dtype=float)
        self.story_heights = np.asarray(story_heights, dtype=float)
        self.n_dof = self.masses.size
        if self.stiffness.size != self.n_dof or self.story_heights.size != self.n_dof:
            raise DimensionMismatchError("masses, stiffness and story_heights need one entry per story")
        if np.any(self.masses <= 0) or np.any(self.stiffness <= 0):
            raise ValueError("masses and stiffness must be positive")
        if not 0.0 <= bouc_wen.alpha <= 1.0:
            raise ValueError("post-yield ratio must lie in [0, 1]")
        yield_displacement = np.broadcast_to(
            np.asarray(bouc_wen.yield_displacement, dtype=float), (self.n_dof,)).copy()
        self.bouc_wen = replace(bouc_wen, yield_displacement=yield_displacement)
        self.rayleigh = (float(rayleigh[0]), float(rayleigh[1]))
        self.solver = solver

        self.M = np.diag(self.masses)
        self.K0 = shear_stiffness_matrix(self.stiffness)
        self.C = self.rayleigh[0] * self.M + self.rayleigh[1] * self.K0
        self.floor_heights = np.cumsum(self.story_heights)
        self.n_modes = n_modes
        self.omegas, self.mode_shapes = self._modal_cache(n_modes)

    @classmethod
    def from_config(cls, config: StructureConfig, n_modes: int = 2) -> "StructuralModel":
        bw = config.bouc_wen
        bouc_wen = BoucWenParams(
            yield_displacement=np.asarray(bw.yield_displacement, dtype=float),
            alpha=bw.post_yield_ratio, A=bw.A, beta=bw.beta, gamma=bw.gamma, n=bw.n,
        )
        s = config.solver
        solver = SolverParams(s.dt, s.record_dt, s.tolerance, s.max_iterations,
                              s.line_search_steps, s.refinement_tolerance)
        undamped = cls(config.masses, config.stiffness, config.story_heights, bouc_wen,
                       solver=solver, n_modes=n_modes)
        zeta = config.damping.zeta
        if config.damping.frequencies:
            f1, f2 = config.damping.frequencies[:2]
            rayleigh = rayleigh_calibrate(f1, f2, zeta)
        elif undamped.n_dof >= 2:
            f1, f2 = undamped.natural_frequencies[:2]
            rayleigh = rayleigh_calibrate(f1, f2, zeta)
        else:
            # One mode: stiffness-proportional damping hits zeta exactly
            rayleigh = (0.0, 2 * zeta / undamped.omegas[0])
        logger.debug(f"Rayleigh coefficients alpha_M={rayleigh[0]:.6g}, beta_K={rayleigh[1]:.6g}")
        return cls(config.masses, config.stiffness, config.story_heights, bouc_wen,
                   rayleigh=rayleigh, solver=solver, n_modes=n_modes)

    def with_solver(self, **changes) -> "StructuralModel":
        """Copy of the model with some solver parameters replaced"""
        return StructuralModel(self.masses, self.stiffness, self.story_heights, self.bouc_wen,
                               self.rayleigh, replace(self.solver, **changes), self.n_modes)

    def _modal_cache(self, n_modes: int) -> Tuple[np.ndarray, np.ndarray]:
        m = min(n_modes, self.n_dof)
        eigvals, vectors = linalg.eigh(self.K0, self.M, subset_by_index=[0, m - 1])
        omegas = np.sqrt(eigvals)
        if np.any(np.diff(omegas) <= 0):
            raise ModalCacheError("modal frequencies are not strictly increasing")
        # eigh returns mass-normalized vectors; fix the sign so the roof entry is positive
        vectors = vectors * np.where(vectors[-1, :] < 0, -1.0, 1.0)
        return omegas, vectors

    @property
    def natural_frequencies(self) -> np.ndarray:
        return self.omegas / (2 * math.pi)

    @property
    def modal_damping(self) -> np.ndarray:
        alpha_m, beta_k = self.rayleigh
        return alpha_m / (2 * self.omegas) + beta_k * self.omegas / 2

    def drifts(self, u: np.ndarray) -> np.ndarray:
        return np.diff(u, prepend=0.0)

    def story_forces(self, drift: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Bouc-Wen story shear r = alpha k d + (1 - alpha) k u_y z"""
        bw = self.bouc_wen
        return bw.alpha * self.stiffness * drift + (1 - bw.alpha) * self.stiffness * bw.yield_displacement * z

    def nodal_forces(self, story: np.ndarray) -> np.ndarray:
        """Floor forces from story shears: f_j = r_j - r_{j+1}"""
        return story - np.append(story[1:], 0.0)

    def advance_hysteresis(self, z: np.ndarray, drift_old: np.ndarray, drift_new: np.ndarray) -> np.ndarray:
        """
        Advance the Bouc-Wen variable over a drift increment at constant drift rate.

        RK4 in the drift variable, sub-divided so that no sub-increment exceeds 5% of
        the yield displacement.
        """
        bw = self.bouc_wen
        uy = bw.yield_displacement
        increment = drift_new - drift_old
        ratio = float(np.max(np.abs(increment) / uy)) if increment.size else 0.0
        n_sub = int(min(max(1, math.ceil(ratio / 0.05)), 200))
        h = increment / n_sub
        direction = np.sign(increment)

        def slope(zz):
            return (bw.A - np.abs(zz) ** bw.n * (bw.beta * np.sign(direction * zz) + bw.gamma)) / uy

        z = np.array(z, dtype=float)
        for _ in range(n_sub):
            k1 = slope(z)
            k2 = slope(z + 0.5 * h * k1)
            k3 = slope(z + 0.5 * h * k2)
            k4 = slope(z + h * k3)
            z = z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        return z

    def initial_hysteresis(self, u0: np.ndarray) -> np.ndarray:
        """Virgin-loading hysteretic state for an initial displacement"""
        z_max = self.bouc_wen.z_max
        return np.clip(self.drifts(u0) / self.bouc_wen.yield_displacement, -z_max, z_max)

@dataclass
class SolverLog:
    """Per base step: cascade stage used, sub-step size, Newton iterations"""
    stage: np.ndarray
    sub_dt: np.ndarray
    iterations: np.ndarray

    @property
    def escalations(self) -> int:
        return int(np.count_nonzero(self.stage > 1))

@dataclass
class EnergyAudit:
    """Cumulative energy terms at every recorded time"""
    input_work: np.ndarray
    damping: np.ndarray
    kinetic: np.ndarray
    restoring_work: np.ndarray
    initial: float = 0.0

    def balance_error(self) -> float:
        """Largest relative violation of E_k + W_r + E_d = W_in + E_0"""
        residual = self.kinetic + self.restoring_work + self.damping - self.input_work - self.initial
        scale = max(float(np.max(np.abs(self.input_work))) + abs(self.initial), np.finfo(float).tiny)
        return float(np.max(np.abs(residual)) / scale)

@dataclass
class ResponseRecord:
    displacements: np.ndarray
    dt_record: float
    solver_log: SolverLog
    energy: Optional[EnergyAudit] = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.displacements)):
            raise ValueError("response contains non-finite values")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.displacements.shape[1]) * self.dt_record

    def to_csv(self, path: Union[str, Path]) -> None:
        frame = pd.DataFrame(self.displacements.T,
                             columns=[f"floor_{j}" for j in range(self.displacements.shape[0])])
        frame.insert(0, "time", self.times)
        frame.to_csv(path, index=False)

@dataclass
class QoIVector:
    values: np.ndarray
    channels: Tuple[int, ...] = field(default_factory=tuple)

    def __getitem__(self, channel: int) -> float:
        return float(self.values[self.channels.index(channel)])

@dataclass
class _State:
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    z: np.ndarray
    f: np.ndarray

class _NewmarkSolver:
    """Private per-integration state machine; not shared between samples"""

    def __init__(self, model: StructuralModel, force_floor: float):
        self.model = model
        self.params = model.solver
        self.force_floor = force_floor

    def _trial(self, state: _State, u1: np.ndarray, p1: np.ndarray, h: float):
        m = self.model
        a1 = (u1 - state.u - h * state.v) / (NEWMARK_BETA * h * h) - (0.5 / NEWMARK_BETA - 1.0) * state.a
        v1 = state.v + h * ((1 - NEWMARK_GAMMA) * state.a + NEWMARK_GAMMA * a1)
        d0, d1 = m.drifts(state.u), m.drifts(u1)
        z1 = m.advance_hysteresis(state.z, d0, d1)
        f1 = m.nodal_forces(m.story_forces(d1, z1))
        residual = m.M @ a1 + m.C @ v1 + f1 - p1
        scale = max(float(np.max(np.abs(p1))), float(np.max(np.abs(f1))),
                    float(np.max(np.abs(m.M @ a1))), self.force_floor)
        return _State(u1, v1, a1, z1, f1), residual, scale

    def _tangent(self, state: _State, trial: _State, h: float) -> np.ndarray:
        m = self.model
        bw = m.bouc_wen
        d0, d1 = m.drifts(state.u), m.drifts(trial.u)
        step = 1e-7 * np.maximum(np.abs(d1), 1e-2 * bw.yield_displacement)
        z_plus = m.advance_hysteresis(state.z, d0, d1 + step)
        dz = (z_plus - trial.z) / step
        k_t = bw.alpha * m.stiffness + (1 - bw.alpha) * m.stiffness * bw.yield_displacement * dz
        return (m.M / (NEWMARK_BETA * h * h)
                + m.C * NEWMARK_GAMMA / (NEWMARK_BETA * h)
                + shear_stiffness_matrix(k_t))

    def step(self, state: _State, p1: np.ndarray, h: float, method: str) -> Tuple[Optional[_State], int]:
        """One Newmark step; returns (None, iterations) on failure"""
        tol = self.params.tolerance
        u1 = state.u + h * state.v + 0.5 * h * h * state.a
        trial, residual, scale = self._trial(state, u1, p1, h)
        jacobian = None
        for iteration in range(1, self.params.max_iterations + 1):
            norm = float(np.max(np.abs(residual)))
            if not np.isfinite(norm):
                return None, iteration
            if norm <= tol * scale:
                return trial, iteration - 1
            if jacobian is None or method != "broyden":
                jacobian = self._tangent(state, trial, h)
            try:
                delta = np.linalg.solve(jacobian, -residual)
            except (np.linalg.LinAlgError, ValueError):
                return None, iteration
            if method == "line_search":
                accepted = None
                s = 1.0
                for _ in range(self.params.line_search_steps):
                    cand, cand_res, cand_scale = self._trial(state, trial.u + s * delta, p1, h)
                    accepted = (cand, cand_res, cand_scale)
                    if np.max(np.abs(cand_res)) <= (1 - 1e-4 * s) * norm:
                        break
                    s *= 0.5
                new_trial, new_residual, scale = accepted
            else:
                new_trial, new_residual, scale = self._trial(state, trial.u + delta, p1, h)
            if method == "broyden":
                du = new_trial.u - trial.u
                dr = new_residual - residual
                denom = float(du @ du)
                if denom > 0:
                    jacobian = jacobian + np.outer(dr - jacobian @ du, du) / denom
            trial, residual = new_trial, new_residual
        norm = float(np.max(np.abs(residual)))
        if np.isfinite(norm) and norm <= tol * scale:
            return trial, self.params.max_iterations
        return None, self.params.max_iterations

def _energy_increment(model: StructuralModel, s0: _State, s1: _State, p0: np.ndarray, p1: np.ndarray):
    du = s1.u - s0.u
    return (
        0.5 * float((p0 + p1) @ du),
        0.5 * float((model.C @ s0.v + model.C @ s1.v) @ du),
        0.5 * float((s0.f + s1.f) @ du),
    )

def integrate(
    model: StructuralModel,
    excitation: ExcitationRealization,
    u0: Optional[np.ndarray] = None,
    v0: Optional[np.ndarray] = None,
    track_energy: bool = False,
) -> ResponseRecord:
    """
    Nonlinear time history of the building under a floor-load history.

    Args:
        model: Structural model
        excitation: (n_dof x t_n) floor loads in N
        u0: Initial floor displacements (default zero)
        v0: Initial floor velocities (default zero)
        track_energy: Attach a cumulative energy audit to the record

    Returns:
        ResponseRecord: Floor displacements every record_dt over the load window

    Raises:
        HFNonconvergenceError: When every cascade stage fails at some base step
    """
    if excitation.n_channels != model.n_dof:
        raise DimensionMismatchError(
            f"excitation has {excitation.n_channels} channels, model has {model.n_dof} floors")
    params = model.solver
    stride = params.stride
    n_record = int(round(excitation.n_steps * excitation.dt / params.record_dt))
    n_steps = (n_record - 1) * stride
    loads = excitation.on_grid(params.dt, n_steps + 1)

    u = np.zeros(model.n_dof) if u0 is None else np.asarray(u0, dtype=float)
    v = np.zeros(model.n_dof) if v0 is None else np.asarray(v0, dtype=float)
    z = model.initial_hysteresis(u)
    f = model.nodal_forces(model.story_forces(model.drifts(u), z))
    a = linalg.solve(model.M, loads[:, 0] - model.C @ v - f)
    state = _State(u, v, a, z, f)

    bw = model.bouc_wen
    force_floor = 1e-9 * float(np.max(model.stiffness * np.minimum(bw.yield_displacement, 1.0)))
    solver = _NewmarkSolver(model, force_floor)

    displacements = np.empty((model.n_dof, n_record))
    displacements[:, 0] = u
    stages = np.ones(n_steps, dtype=np.int8)
    sub_dt = np.full(n_steps, params.dt)
    iterations = np.zeros(n_steps, dtype=np.int32)

    energy_terms = np.zeros((4, n_record))
    initial_energy = 0.5 * float(v @ model.M @ v) + 0.5 * float(u @ model.K0 @ u)
    energy_terms[2, 0] = 0.5 * float(v @ model.M @ v)
    totals = np.zeros(3)

    for n in range(n_steps):
        p_start, p_end = loads[:, n], loads[:, n + 1]
        for stage in SOLVER_CASCADE:
            h = params.dt / stage.substeps
            current, used, increments, failed = state, 0, np.zeros(3), False
            for s in range(stage.substeps):
                w0, w1 = s / stage.substeps, (s + 1) / stage.substeps
                p0 = (1 - w0) * p_start + w0 * p_end
                p1 = (1 - w1) * p_start + w1 * p_end
                nxt, its = solver.step(current, p1, h, stage.method)
                used += its
                if nxt is None:
                    failed = True
                    break
                if track_energy:
                    increments += _energy_increment(model, current, nxt, p0, p1)
                current = nxt
            if not failed:
                break
            if stage.stage_id < len(SOLVER_CASCADE):
                logger.warning(f"Solver stage {stage.name} (dt/{stage.substeps}) failed at "
                               f"t = {n * params.dt:.4f} s; escalating")
        else:
            raise HFNonconvergenceError(time=n * params.dt)
        state = current
        stages[n], sub_dt[n], iterations[n] = stage.stage_id, h, used
        totals += increments
        if (n + 1) % stride == 0:
            k = (n + 1) // stride
            displacements[:, k] = state.u
            energy_terms[0, k], energy_terms[1, k], energy_terms[3, k] = totals
            energy_terms[2, k] = 0.5 * float(state.v @ model.M @ state.v)

    log = SolverLog(stages, sub_dt, iterations)
    if log.escalations:
        logger.debug(f"Integration used the cascade on {log.escalations} of {n_steps} steps")
    energy = None
    if track_energy:
        strain0 = 0.5 * float(u @ model.K0 @ u)
        energy = EnergyAudit(
            input_work=energy_terms[0],
            damping=energy_terms[1],
            kinetic=energy_terms[2],
            restoring_work=energy_terms[3] + strain0,
            initial=initial_energy,
        )
    return ResponseRecord(displacements, params.record_dt, log, energy)

def quantity_of_interest(response: ResponseRecord, channels: Sequence[int]) -> QoIVector:
    """Peak absolute displacement Z_c = max_t |y_c(t)| for each requested floor"""
    if response.displacements.size == 0 or response.displacements.shape[1] == 0:
        raise DimensionMismatchError("empty response record")
    channels = tuple(int(c) for c in channels)
    n_dof = response.displacements.shape[0]
    if any(c < 0 or c >= n_dof for c in channels):
        raise DimensionMismatchError(f"channels {channels} outside 0..{n_dof - 1}")
    peaks = np.max(np.abs(response.displacements[list(channels), :]), axis=1)
    return QoIVector(peaks, channels)

def refinement_check(model: StructuralModel, excitation: ExcitationRealization,
                     channels: Sequence[int]) -> float:
    """
    Largest relative QoI change when the base time step is cut tenfold.

    Logs a warning when the change exceeds solver.refinement_tolerance; the caller decides
    whether that is fatal.
    """
    coarse = quantity_of_interest(integrate(model, excitation), channels).values
    fine_model = model.with_solver(dt=model.solver.dt / 10)
    fine = quantity_of_interest(integrate(fine_model, excitation), channels).values
    scale = np.maximum(np.abs(fine), np.finfo(float).tiny)
    change = float(np.max(np.abs(coarse - fine) / scale))
    if change > model.solver.refinement_tolerance:
        logger.warning(f"QoI moved {change:.2%} under a tenfold step refinement "
                       f"(tolerance {model.solver.refinement_tolerance:.2%})")
    return change

def _piecewise_linear_coefficients(omega: float, zeta: float, dt: float):
    """Exact one-step coefficients of q'' + 2 zeta omega q' + omega^2 q = p(t), p linear in the step"""
    if zeta >= 1.0:
        raise ModalCacheError(f"mode with damping ratio {zeta:.3f} is not underdamped")
    k = omega * omega
    root = math.sqrt(1 - zeta * zeta)
    wd = omega * root
    e = math.exp(-zeta * omega * dt)
    s, c = math.sin(wd * dt), math.cos(wd * dt)
    A = e * (zeta / root * s + c)
    B = e * s / wd
    C = (2 * zeta / (omega * dt)
         + e * (((1 - 2 * zeta ** 2) / (wd * dt) - zeta / root) * s - (1 + 2 * zeta / (omega * dt)) * c)) / k
    D = (1 - 2 * zeta / (omega * dt) + e * ((2 * zeta ** 2 - 1) / (wd * dt) * s + 2 * zeta / (omega * dt) * c)) / k
    Ap = -e * omega / root * s
    Bp = e * (c - zeta / root * s)
    Cp = (-1 / dt + e * ((omega / root + zeta / (dt * root)) * s + c / dt)) / k
    Dp = (1 - e * (zeta / root * s + c)) / (k * dt)
    return A, B, C, D, Ap, Bp, Cp, Dp

def modal_displacements(model: StructuralModel, excitation: ExcitationRealization) -> np.ndarray:
    """
    Modal coordinates q_i(t) of the elastic building, shape (m x t_n), starting at rest.

    The two-state exact recursion X_{n+1} = Phi X_n + w_n is run as an IIR filter, one per mode.
    """
    if model.omegas.size == 0:
        raise ModalCacheError("no modes cached")
    if excitation.n_channels != model.n_dof:
        raise DimensionMismatchError(
            f"excitation has {excitation.n_channels} channels, model has {model.n_dof} floors")
    modal_loads = model.mode_shapes.T @ excitation.samples
    padded = np.concatenate([modal_loads, modal_loads[:, -1:]], axis=1)
    q = np.empty_like(modal_loads)
    for i, (omega, zeta) in enumerate(zip(model.omegas, model.modal_damping)):
        A, B, C, D, Ap, Bp, Cp, Dp = _piecewise_linear_coefficients(omega, zeta, excitation.dt)
        p_now, p_next = padded[i, :-1], padded[i, 1:]
        w_u = C * p_now + D * p_next
        w_v = Cp * p_now + Dp * p_next
        a = [1.0, -(A + Bp), A * Bp - B * Ap]
        q[i] = signal.lfilter([0.0, 1.0, -Bp], a, w_u) + signal.lfilter([0.0, 0.0, B], a, w_v)
    return q

def elastic_base_moment(model: StructuralModel, excitation: ExcitationRealization) -> float:
    """
    Peak |sum_j f_s,j(t) H_j| with f_s = K u the elastic floor forces and H_j the floor heights.

    Only the elastic restoring forces K u enter the moment; damping forces C u' are left out.
    """
    q = modal_displacements(model, excitation)
    # K phi_i = omega_i^2 M phi_i
    coefficients = (model.floor_heights @ (model.M @ model.mode_shapes)) * model.omegas ** 2
    return float(np.max(np.abs(coefficients @ q)))

def evaluate_sv(model: StructuralModel, load_model: SpectralLoadModel, theta: PhaseVector) -> float:
    """Stratification variable of a phase vector: peak elastic base moment"""
    return elastic_base_moment(model, synthesize(load_model, theta))
