import json
from pathlib import Path

import numpy as np
import pytest

from app.core.models import RunConfig
from app.services.dynamics import BoucWenParams, SolverParams, StructuralModel
from app.services.excitation import Envelope, SpectralLoadModel
from app.services.strata import Phase1Result

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"

@pytest.fixture
def smoke_config_dict():
    """Raw smoke configuration, safe to mutate per test"""
    with open(CONFIG_DIR / "smoke.json") as f:
        return json.load(f)

@pytest.fixture
def smoke_config(smoke_config_dict, tmp_path):
    """Smoke configuration writing into a temporary output directory"""
    smoke_config_dict["output_dir"] = str(tmp_path / "run")
    return RunConfig.parse_obj(smoke_config_dict)

@pytest.fixture
def load_model():
    """Two-channel stationary-plus-envelope load model, 200 steps of 0.1 s"""
    return SpectralLoadModel(
        n_channels=2,
        dt=0.1,
        duration=20.0,
        intensities=np.array([0.3]),
        corner_frequencies=np.array([2.0]),
        coherence_decay=0.5,
        n_freq=100,
        envelope=Envelope(2.0, 4.0, 2.0),
    )

@pytest.fixture
def two_story():
    """Two-story Bouc-Wen shear building with 2.5% Rayleigh damping"""
    return StructuralModel(
        masses=[1.0, 1.0],
        stiffness=[100.0, 100.0],
        story_heights=[3.0, 3.0],
        bouc_wen=BoucWenParams(yield_displacement=np.array([0.02])),
        rayleigh=(0.2, 0.002),
        solver=SolverParams(dt=0.05, record_dt=0.1),
    )

@pytest.fixture
def elastic_sdof():
    """Single-story model that never yields"""
    def build(dt=0.01, record_dt=0.01, zeta=0.02, k=4 * np.pi ** 2):
        omega = np.sqrt(k)
        return StructuralModel(
            masses=[1.0],
            stiffness=[k],
            story_heights=[3.0],
            bouc_wen=BoucWenParams(yield_displacement=np.array([1e6]), alpha=1.0),
            rayleigh=(0.0, 2 * zeta / omega),
            solver=SolverParams(dt=dt, record_dt=record_dt),
            n_modes=1,
        )
    return build

@pytest.fixture
def uniform_phase1():
    """Phase-I result with SV values 0, 1, ..., 999"""
    return Phase1Result(np.arange(1000, dtype=float), seed=1)
