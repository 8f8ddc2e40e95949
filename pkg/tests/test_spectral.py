"""Tests for spectral lines, transfer blocks, and design-side assemblies."""

import numpy as np
import pytest
import scipy.linalg

from texplore import (
    DimensionError,
    ExplorationInputSpec,
    FrequencyGrid,
    InvalidParameterError,
    LinearModel,
    OffGridFrequencyError,
    assemble_spectral,
    cholesky_upper,
    empirical_excitation_check,
    simulate_linear,
    spectral_line,
    symmetrize_mirror_pairs,
    transfer_blocks,
)
from texplore.spectral import SpectralAssemblies

# Fast-decay model so steady state is reached quickly in oracles.
FAST = LinearModel(A=np.array([[0.5, 0.1], [0.0, 0.3]]), B=np.array([[1.0], [0.5]]))


def test_grid_construction_and_validation():
    g = FrequencyGrid(multiples=np.array([0, 5, 10]), T=100)
    assert g.L == 3 and np.allclose(g.omegas, [0.0, 0.05, 0.1])
    g2 = FrequencyGrid.equally_spaced(4, 16)
    assert list(g2.multiples) == [0, 4, 8, 12]
    g3 = FrequencyGrid.from_omegas([0.0, 0.25], 16)
    assert list(g3.multiples) == [0, 4]
    with pytest.raises(OffGridFrequencyError):
        FrequencyGrid.from_omegas([0.013], 16)
    with pytest.raises(InvalidParameterError):
        FrequencyGrid(multiples=np.array([0, 0]), T=10)
    with pytest.raises(InvalidParameterError):
        FrequencyGrid(multiples=np.array([10]), T=10)
    with pytest.raises(InvalidParameterError):
        FrequencyGrid.equally_spaced(3, 16)


def test_mirror_index():
    g = FrequencyGrid.equally_spaced(4, 16)  # multiples 0 4 8 12
    assert g.mirror_index(0) == 0  # omega = 0 is its own mirror
    assert g.mirror_index(1) == 3
    assert g.mirror_index(2) == 2  # omega = 1/2
    g2 = FrequencyGrid(multiples=np.array([1, 2]), T=7)
    assert g2.mirror_index(0) is None


def test_spectral_line_of_pure_cosine():
    T = 64
    k = np.arange(T)
    u = 3.0 * np.cos(2 * np.pi * (5 / T) * k)
    # A real cosine splits evenly between omega and 1-omega.
    assert spectral_line(u, 5 / T) == pytest.approx(1.5, abs=1e-12)
    assert spectral_line(u, 59 / T) == pytest.approx(1.5, abs=1e-12)
    assert abs(spectral_line(u, 7 / T)) < 1e-12
    const = 2.5 * np.ones(T)
    assert spectral_line(const, 0.0) == pytest.approx(2.5, abs=1e-12)
    with pytest.raises(OffGridFrequencyError):
        spectral_line(u, 0.013)
    with pytest.raises(DimensionError):
        spectral_line(u, 5 / T, T=32)


def test_parseval_identity():
    rng = np.random.default_rng(7)
    for T in (16, 64, 256):
        u = rng.normal(size=T)
        lines = np.array([spectral_line(u, m / T)[0] for m in range(T)])
        lhs = float(np.sum(np.abs(lines) ** 2))
        rhs = float(np.mean(u**2))
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_transfer_blocks_match_steady_state_simulation():
    # Time-domain oracle: drive the fast model with an on-grid cosine long
    # enough for the transient to die, then read the response line off the
    # last full period and compare with the resolvent prediction.
    T = 32
    grid = FrequencyGrid(multiples=np.array([3]), T=T)
    blocks = transfer_blocks(FAST, grid)
    amp = 0.8
    k = np.arange(4 * T)
    u = amp * np.cos(2 * np.pi * (3 / T) * k)
    traj = simulate_linear(FAST, u)
    tail = traj.states[3 * T : 4 * T, :]  # one full period, steady state
    line = spectral_line(tail, 3 / T)
    # The cosine carries amp/2 at +omega; the state line is V(omega) * that.
    predicted = blocks.Vx[:, 0] * (amp / 2)
    assert np.allclose(line, predicted, atol=1e-9)


def test_transfer_blocks_shapes_and_feedthrough():
    grid = FrequencyGrid(multiples=np.array([0, 3, 5]), T=32)
    blocks = transfer_blocks(FAST, grid)
    assert blocks.Vx.shape == (6, 3)
    assert blocks.Yx.shape == (6, 6)
    assert blocks.Vphi.shape == (3, 3)
    assert blocks.Yphi.shape == (3, 6)
    # Regressor response stacks [V; I]: input rows are the identity.
    for i in range(3):
        assert blocks.Vphi[2, i] == pytest.approx(1.0)
        assert np.allclose(blocks.Yphi[2, 2 * i : 2 * i + 2], 0.0)
    # At omega=0 the resolvent is (I - A)^{-1}.
    V0 = np.linalg.solve(np.eye(2) - FAST.A, FAST.B)
    assert np.allclose(blocks.Vx[:2, 0], V0.ravel(), atol=1e-12)


def test_realize_matches_cosine_sum_and_energy():
    grid = FrequencyGrid(multiples=np.array([0, 4]), T=16)
    spec = ExplorationInputSpec(grid=grid, amplitudes=np.array([[0.5], [2.0]]))
    u = spec.realize()
    k = np.arange(16)
    expected = 0.5 + 2.0 * np.cos(2 * np.pi * 0.25 * k)
    assert np.allclose(u.ravel(), expected, atol=1e-12)
    assert spec.total_energy() == pytest.approx(0.25 + 4.0)
    U_e = spec.U_e
    assert U_e.shape == (2, 2)
    assert np.allclose(U_e, np.diag([0.5, 2.0]))


def test_symmetrize_mirror_pairs_averages_only_mirrored_rows():
    grid = FrequencyGrid.equally_spaced(4, 16)
    spec = ExplorationInputSpec(
        grid=grid, amplitudes=np.array([[1.0], [2.0], [3.0], [4.0]])
    )
    sym = symmetrize_mirror_pairs(spec)
    assert np.allclose(sym.amplitudes.ravel(), [1.0, 3.0, 3.0, 3.0])
    # Realized signals are identical: the mirror pair is indistinguishable
    # on the sampling grid.
    assert np.allclose(spec.realize(), sym.realize(), atol=1e-12)


def test_assembly_split_matches_direct_construction():
    # Zu1 + Zu2 assembled through the split must equal the direct formula
    # in terms of the line contents X_u and Phi_u.
    rng = np.random.default_rng(11)
    grid = FrequencyGrid(multiples=np.array([0, 3, 7]), T=32)
    blocks = transfer_blocks(FAST, grid)
    spec = ExplorationInputSpec(grid=grid, amplitudes=rng.normal(size=(3, 1)))
    D_des = np.array([[2.0, 0.3, 0.0], [0.3, 1.5, 0.1], [0.0, 0.1, 0.9]])
    asm = assemble_spectral(blocks, spec, D_des)

    n_phi, n_x = 3, 2
    assert asm.Phi_u.shape == (n_phi, 3)
    assert asm.X_u.shape == (n_x * 3,)
    n_z = n_phi + n_x * n_phi**2
    assert asm.Zu1.shape == (n_z, 3 * n_x * n_phi)
    D_half = cholesky_upper(D_des)
    top = D_half.T @ np.kron(asm.X_u.conj()[None, :], np.eye(n_phi))
    bottom = np.kron(asm.Phi_u, np.eye(n_x * n_phi))
    direct = np.vstack([top, np.zeros((n_x * n_phi**2, top.shape[1]))])
    direct[n_phi:, :] += bottom
    assert np.allclose(asm.Z_u, direct, atol=1e-12)
    # Lines themselves: Phi_u = Vphi U_e, X_u = Vx U_e 1.
    assert np.allclose(asm.Phi_u, blocks.Vphi @ spec.U_e, atol=1e-13)
    assert np.allclose(asm.X_u, blocks.Vx @ spec.U_e @ np.ones(3), atol=1e-13)


def test_cholesky_upper_factorization():
    D = np.array([[4.0, 1.0], [1.0, 3.0]])
    R = cholesky_upper(D)
    assert np.allclose(np.triu(R), R)
    assert np.allclose(R.T @ R, D, atol=1e-12)


def test_empirical_excitation_check_passes_on_clean_data():
    T = 64
    grid = FrequencyGrid(multiples=np.array([4, 11]), T=T)
    spec = ExplorationInputSpec(grid=grid, amplitudes=np.array([[1.0], [0.7]]))
    # Warm start: run two periods, keep the second so the state is periodic.
    u2 = spec.realize(2 * T)
    warm = simulate_linear(FAST, u2)
    traj = simulate_linear(FAST, u2[T:], x0=warm.states[T])
    W = 1e-9 * np.eye(3)
    assert empirical_excitation_check(traj, grid, 0.5, W, FAST)


def test_empirical_excitation_check_fails_for_overclaimed_model():
    T = 64
    grid = FrequencyGrid(multiples=np.array([4, 11]), T=T)
    spec = ExplorationInputSpec(grid=grid, amplitudes=np.array([[1.0], [0.7]]))
    traj = simulate_linear(FAST, spec.realize())
    # A near-unstable model predicts far more line content than the data has.
    loud = LinearModel(A=np.array([[0.999, 0.0], [0.0, 0.99]]), B=np.array([[5.0], [5.0]]))
    W = 1e-9 * np.eye(3)
    assert not empirical_excitation_check(traj, grid, 0.5, W, loud)
    with pytest.raises(InvalidParameterError):
        empirical_excitation_check(traj, grid, 1.5, W, FAST)


def test_assemblies_are_linear_in_amplitudes():
    rng = np.random.default_rng(5)
    grid = FrequencyGrid(multiples=np.array([1, 6]), T=24)
    blocks = transfer_blocks(FAST, grid)
    D = np.eye(3)
    a = rng.normal(size=(2, 1))
    b = rng.normal(size=(2, 1))
    asm_a = assemble_spectral(blocks, ExplorationInputSpec(grid, a), D)
    asm_b = assemble_spectral(blocks, ExplorationInputSpec(grid, b), D)
    asm_ab = assemble_spectral(blocks, ExplorationInputSpec(grid, a + b), D)
    for field in ("Phi_u", "X_u", "Zu1", "Zu2"):
        lhs = getattr(asm_a, field) + getattr(asm_b, field)
        assert np.allclose(lhs, getattr(asm_ab, field), atol=1e-12)
