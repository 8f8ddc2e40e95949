"""Tests for the benchmark plant: discretization, simulation, friction energy."""

import numpy as np
import pytest

from texplore import (
    BenchmarkPlantParams,
    DimensionError,
    InvalidParameterError,
    LinearModel,
    Trajectory,
    discretize_benchmark,
    disturbance_energy,
    disturbance_energy_bound,
    friction_for_energy,
    model_from_theta,
    model_to_theta,
    simulate_linear,
    simulate_nonlinear_benchmark,
)
from texplore.plant import benchmark_disturbance

DEFAULTS = BenchmarkPlantParams()


def test_discretization_matches_hand_derivation():
    # Euler step of the two-mass ODEs, worked out by hand from Newton's law.
    model = discretize_benchmark(DEFAULTS)
    A_expected = np.array(
        [
            [1.0, 0.5, 0.0, 0.0],
            [-1.25, 0.2, 0.75, 0.55],
            [0.0, 0.0, 1.0, 0.5],
            [0.375, 0.275, -0.375, 0.725],
        ]
    )
    assert np.allclose(model.A, A_expected, atol=1e-14)
    assert np.allclose(model.B, np.array([[0.0], [0.0], [0.0], [0.25]]), atol=1e-15)
    assert model.n_x == 4 and model.n_u == 1 and model.n_phi == 5


def test_benchmark_is_schur_stable_with_known_moduli():
    model = discretize_benchmark(DEFAULTS)
    mods = np.sort(np.abs(np.linalg.eigvals(model.A)))
    # Two complex pairs; moduli frozen from the characteristic polynomial.
    assert np.allclose(mods, [0.86211712, 0.86211712, 0.99612708, 0.99612708], atol=1e-7)
    assert model.is_schur_stable()


def test_simulate_linear_matches_unrolled_recursion():
    model = discretize_benchmark(DEFAULTS)
    x0 = np.array([0.1, -0.2, 0.3, 0.05])
    u = np.array([1.0, -0.5, 0.25])
    w = np.array(
        [[0.01, -0.02, 0.0, 0.03], [0.0, 0.01, -0.01, 0.0], [0.02, 0.0, 0.0, -0.01]]
    )
    traj = simulate_linear(model, u, w, x0)
    assert traj.states.shape == (4, 4)
    assert np.allclose(traj.states[1], [0.01, 0.0675, 0.325, 0.18625], atol=1e-12)
    assert np.allclose(
        traj.states[3],
        [0.24234375, 0.2736015625, 0.363359375, -0.05082421875],
        atol=1e-12,
    )


def test_simulate_linear_zero_everything_stays_at_rest():
    model = discretize_benchmark(DEFAULTS)
    traj = simulate_linear(model, np.zeros(10))
    assert np.allclose(traj.states, 0.0)


def test_nonlinear_replay_through_linear_model_is_exact():
    params = BenchmarkPlantParams(beta1=0.4, beta2=0.2)
    rng = np.random.default_rng(3)
    u = rng.normal(size=25)
    traj = simulate_nonlinear_benchmark(params, u)
    model = discretize_benchmark(params)
    replay = simulate_linear(model, traj.inputs, traj.disturbances, traj.states[0])
    assert np.allclose(replay.states, traj.states, atol=1e-13)


def test_friction_saturates_at_tanh_limit():
    params = BenchmarkPlantParams(beta1=0.4, beta2=0.2)
    w = benchmark_disturbance(params, np.array([0.0, 1e6, 0.0, -1e6]))
    # Ts * beta / m with the sign of the velocity, zero on position rows.
    assert np.allclose(w, [0.0, 0.5 * 0.4 / 1.0, 0.0, -0.5 * 0.2 / 2.0], atol=1e-12)
    w_small = benchmark_disturbance(params, np.array([5.0, 0.0, -2.0, 0.0]))
    assert np.allclose(w_small, 0.0)


def test_disturbance_energy_bound_formula_and_saturated_sim():
    params = BenchmarkPlantParams(beta1=0.3, beta2=0.3)
    T = 40
    bound = disturbance_energy_bound(params, T)
    assert bound == pytest.approx(T * 0.028125, rel=1e-12)
    # Driving the plant hard keeps friction saturated; energy stays under cap.
    u = 50.0 * np.sin(0.3 * np.arange(T))
    traj = simulate_nonlinear_benchmark(params, u)
    assert disturbance_energy(traj) <= bound + 1e-12
    assert disturbance_energy(traj) > 0.5 * bound


def test_friction_for_energy_hits_target_exactly():
    T = 100
    for gamma_w in (1.0, 1e-2, 0.0):
        params = friction_for_energy(DEFAULTS, gamma_w, T)
        assert disturbance_energy_bound(params, T) == pytest.approx(gamma_w, abs=1e-14)
    params = friction_for_energy(DEFAULTS, 1.0, 100)
    assert params.beta1 == pytest.approx(0.17888543819998318, rel=1e-12)
    assert params.beta1 == params.beta2
    with pytest.raises(InvalidParameterError):
        friction_for_energy(DEFAULTS, -1.0, 100)


def test_theta_roundtrip_and_column_major_order():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    B = np.array([[5.0], [6.0]])
    model = LinearModel(A=A, B=B)
    theta = model_to_theta(model)
    # Column-major stacking of [A, B].
    assert np.allclose(theta, [1.0, 3.0, 2.0, 4.0, 5.0, 6.0])
    back = model_from_theta(theta, 2, 1)
    assert np.allclose(back.A, A) and np.allclose(back.B, B)
    with pytest.raises(DimensionError):
        model_from_theta(theta[:-1], 2, 1)


def test_dimension_validation():
    with pytest.raises(DimensionError):
        LinearModel(A=np.ones((2, 3)), B=np.ones((2, 1)))
    with pytest.raises(DimensionError):
        LinearModel(A=np.eye(2), B=np.ones((3, 1)))
    model = discretize_benchmark(DEFAULTS)
    with pytest.raises(DimensionError):
        simulate_linear(model, np.ones((5, 2)))
    with pytest.raises(DimensionError):
        simulate_linear(model, np.ones(5), np.ones((4, 4)))
    with pytest.raises(DimensionError):
        Trajectory(states=np.zeros((3, 4)), inputs=np.zeros((1, 1)), disturbances=np.zeros((2, 4)))


def test_invalid_physical_parameters_rejected():
    with pytest.raises(InvalidParameterError):
        BenchmarkPlantParams(m1=0.0)
    with pytest.raises(InvalidParameterError):
        BenchmarkPlantParams(Ts=-0.1)
    with pytest.raises(InvalidParameterError):
        BenchmarkPlantParams(beta1=-0.2)
