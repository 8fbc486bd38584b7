import numpy as np
import pytest

from app.core.exceptions import DimensionMismatchError, ReductionError
from app.services.reduction import (
    ReducedSpace,
    WaveletConfig,
    build_snapshot_matrix,
    energy_ratio,
    lift,
    pod_truncate,
    project_output,
    reduced_space_from,
    snapshot_indices,
    wavelet_compress,
    wavelet_decompose,
    wavelet_reconstruct,
    wavelet_recompose,
)

@pytest.fixture
def responses():
    """Ten smooth three-floor histories of 600 steps"""
    rng = np.random.default_rng(4)
    t = np.arange(600) * 0.1
    shape = np.array([0.4, 0.8, 1.0])
    out = []
    for _ in range(10):
        a, b, w = rng.normal(size=3)
        y = np.outer(shape, a * np.sin((1 + 0.1 * w) * t)) + np.outer(shape ** 2, 0.2 * b * np.cos(3 * t))
        out.append(y)
    return out

def test_single_snapshot_is_mid_window():
    """Test that one snapshot of one response is its middle column"""
    y = np.arange(20, dtype=float).reshape(2, 10)
    X = build_snapshot_matrix([y], 1)
    assert np.array_equal(X, y[:, 5:6])
    assert snapshot_indices(10, 1).tolist() == [5]

def test_zero_responses_give_zero_matrix():
    """Test snapshots of all-zero responses"""
    X = build_snapshot_matrix([np.zeros((3, 50)), np.zeros((3, 50))], 10)
    assert X.shape == (3, 10)
    assert not X.any()

def test_snapshot_column_count(responses):
    """Test ten responses with 120 snapshots each"""
    assert build_snapshot_matrix(responses, 1200).shape == (3, 1200)

def test_snapshot_split_must_be_even(responses):
    """Test that n_t must divide evenly across responses"""
    with pytest.raises(ReductionError):
        build_snapshot_matrix(responses, 1205)

def test_rank_one_snapshots():
    """Test that a rank-1 matrix keeps one mode for every eta"""
    X = np.outer([1.0, 2.0, 3.0], np.linspace(-1, 1, 40))
    for eta in (0.5, 0.999, 1.0):
        assert pod_truncate(X, eta).n_r == 1

def test_eta_one_keeps_numerical_rank():
    """Test that eta = 1 keeps every nonzero singular value"""
    rng = np.random.default_rng(0)
    X = rng.normal(size=(5, 3)) @ rng.normal(size=(3, 20))
    assert pod_truncate(X, 1.0).n_r == 3

def test_diagonal_energy_split():
    """Test truncation of diag(3, 2, 1) at 90% energy"""
    basis = pod_truncate(np.diag([3.0, 2.0, 1.0]), 0.9)
    assert basis.n_r == 2
    assert np.allclose(basis.singular_values, [3.0, 2.0])
    assert energy_ratio(basis, np.diag([3.0, 2.0, 1.0])) == pytest.approx(13 / 14)

def test_basis_orthonormal_and_energy_bound(responses):
    """Test orthonormality and the truncation error bound on the snapshots"""
    X = build_snapshot_matrix(responses, 1200)
    eta = 0.999
    basis = pod_truncate(X, eta)
    assert np.max(np.abs(basis.phi.T @ basis.phi - np.eye(basis.n_r))) <= 1e-10
    assert energy_ratio(basis, X) >= eta
    residual = X - basis.phi @ (basis.phi.T @ X)
    assert np.sum(residual ** 2) <= (1 - eta) * np.sum(X ** 2) + 1e-12

def test_projection_round_trips():
    """Test lift(project(y)) on and off the span of the basis"""
    basis = pod_truncate(np.diag([3.0, 2.0, 1.0]), 0.9)
    inside = np.outer([1.0, -2.0, 0.0], np.ones(5))
    assert np.max(np.abs(lift(basis, project_output(basis, inside)) - inside)) <= 1e-10
    outside = np.outer([0.0, 0.0, 1.0], np.ones(5))
    assert np.allclose(lift(basis, project_output(basis, outside)), 0.0)

def test_projection_dimension_mismatch():
    """Test that a history with the wrong row count is rejected"""
    basis = pod_truncate(np.diag([3.0, 2.0, 1.0]), 0.9)
    with pytest.raises(DimensionMismatchError):
        project_output(basis, np.zeros((2, 5)))
    with pytest.raises(DimensionMismatchError):
        lift(basis, np.zeros((3, 5)))

def test_constant_sequence_reconstructs_exactly():
    """Test that approximation coefficients alone reproduce a constant"""
    config = WaveletConfig("db4", 4, 600)
    seq = np.full(600, 2.5)
    assert np.max(np.abs(wavelet_reconstruct(wavelet_compress(seq, config), config) - seq)) <= 1e-10

def test_low_frequency_cosine_survives_compression():
    """Test compress-then-reconstruct of a cosine well below the level-4 cutoff"""
    config = WaveletConfig("db4", 4, 600)
    t = np.arange(600)
    seq = np.cos(2 * np.pi * (t + 0.5) / 300)
    rebuilt = wavelet_reconstruct(wavelet_compress(seq, config), config)
    assert np.linalg.norm(rebuilt - seq) / np.linalg.norm(seq) <= 0.01

def test_perfect_reconstruction_with_all_coefficients():
    """Test the full decomposition pair"""
    config = WaveletConfig("db4", 4, 600)
    seq = np.random.default_rng(2).normal(size=(3, 600))
    assert np.max(np.abs(wavelet_recompose(wavelet_decompose(seq, config), config) - seq)) <= 1e-10

def test_compressed_lengths():
    """Test dyadic coefficient counts with symmetric padding"""
    assert WaveletConfig("db4", 4, 1024).compressed_len == 70
    assert WaveletConfig("db4", 4, 600).compressed_len == 44
    assert WaveletConfig("db4", 4, 1024).coefficient_lengths()[0] == 515

def test_sequence_too_short():
    """Test that a level beyond the maximum is rejected"""
    config = WaveletConfig("db4", 4, 50)
    with pytest.raises(ReductionError):
        wavelet_compress(np.zeros(50), config)

def test_reduced_space_encoding(responses):
    """Test encode/decode shapes and that decoded outputs lie in the basis span"""
    space = reduced_space_from(responses, responses, 0.999, 120)
    assert isinstance(space, ReducedSpace)
    encoded = space.encode_output(responses[0])
    assert encoded.shape == (44, space.basis.n_r)
    decoded = space.decode_output(encoded)
    assert decoded.shape == (3, 600)
    phi = space.basis.phi
    assert np.allclose(phi @ (phi.T @ decoded), decoded)
    assert space.output_scale > 0
