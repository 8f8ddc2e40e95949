"""Tests for least-squares identification and the non-falsified set."""

import numpy as np
import pytest

from texplore import (
    BenchmarkPlantParams,
    DimensionError,
    FalsifiedPriorError,
    ParameterEllipsoid,
    RegressorData,
    SingularRegressorError,
    Trajectory,
    accuracy_norm,
    build_regressors,
    check_data_condition,
    contains,
    discretize_benchmark,
    least_squares,
    model_to_theta,
    nonfalsified_set,
    posterior_error_certificate,
    simulate_linear,
)

# Hand dataset: scalar plant x+ = 0.5 x + 0.25 u + w, three steps from x0=1
# with u = (2, -1, 0.5) and w = (0.1, -0.05, 0.2).  All expected numbers
# below are exact fractions of the resulting normal equations.
HAND_STATES = np.array([1.0, 1.1, 0.25, 0.45])
HAND_INPUTS = np.array([2.0, -1.0, 0.5])
HAND_W = np.array([0.1, -0.05, 0.2])


def hand_trajectory() -> Trajectory:
    return Trajectory(
        states=HAND_STATES[:, None],
        inputs=HAND_INPUTS[:, None],
        disturbances=HAND_W[:, None],
    )


def benchmark_dataset(T=60, seed=0, noise=0.0):
    model = discretize_benchmark(BenchmarkPlantParams())
    rng = np.random.default_rng(seed)
    u = rng.normal(size=T)
    w = noise * rng.normal(size=(T, model.n_x))
    traj = simulate_linear(model, u, w)
    return model, traj, build_regressors(traj)


def test_build_regressors_shapes_and_content():
    reg = build_regressors(hand_trajectory())
    assert reg.T == 3 and reg.n_phi == 2 and reg.n_x == 1 and reg.n_u == 1
    assert np.allclose(reg.Phi, [[1.0, 1.1, 0.25], [2.0, -1.0, 0.5]])
    assert np.allclose(reg.Xstack, [1.1, 0.25, 0.45])
    assert np.allclose(reg.successor_matrix(), [[1.1, 0.25, 0.45]])


def test_least_squares_matches_hand_normal_equations():
    reg = build_regressors(hand_trajectory())
    est = least_squares(reg)
    # det(gram) = 10.88; solutions are exact fractions 5.58/10.88, 3.418/10.88
    assert est.theta_hat == pytest.approx(
        [0.5128676470588235, 0.3141544117647059], rel=1e-12
    )
    gram = np.array([[2.2725, 1.025], [1.025, 5.25]])
    assert np.allclose(est.P, np.linalg.inv(gram), atol=1e-12)


def test_least_squares_kronecker_covariance_structure():
    _, _, reg = benchmark_dataset()
    est = least_squares(reg)
    gram_inv = np.linalg.inv(reg.Phi @ reg.Phi.T)
    assert np.allclose(est.P, np.kron(gram_inv, np.eye(4)), atol=1e-10)


def test_exact_recovery_from_noiseless_data():
    model, _, reg = benchmark_dataset(noise=0.0)
    est = least_squares(reg)
    assert np.allclose(est.theta_hat, model_to_theta(model), atol=1e-9)


def test_nonfalsified_set_radius_is_budget_minus_ssr():
    reg = build_regressors(hand_trajectory())
    gamma_w = float(HAND_W @ HAND_W)  # 0.0525
    ell = nonfalsified_set(reg, gamma_w)
    assert ell.radius == pytest.approx(0.02367647058823533, rel=1e-10)
    assert np.allclose(ell.shape, [[2.2725, 1.025], [1.025, 5.25]], atol=1e-12)


def test_noiseless_radius_equals_budget_exactly():
    _, _, reg = benchmark_dataset()
    ell = nonfalsified_set(reg, gamma_w=0.37)
    assert ell.radius == pytest.approx(0.37, abs=1e-9)


def test_truth_sits_exactly_on_boundary_at_realized_energy():
    # With gamma_w equal to the realized disturbance energy, the residual
    # projection identity puts theta_tr exactly on the boundary of the set.
    for seed in range(5):
        model, traj, reg = benchmark_dataset(seed=seed, noise=0.05)
        gamma_w = float(np.sum(traj.disturbances**2))
        ell = nonfalsified_set(reg, gamma_w)
        theta_tr = model_to_theta(model)
        d = theta_tr - ell.center
        q = float(d @ ell.shape @ d)
        assert q == pytest.approx(ell.radius, rel=1e-7)
        assert contains(ell, theta_tr)


def test_truth_contained_under_slack_budget():
    for seed in range(5):
        model, traj, reg = benchmark_dataset(seed=seed, noise=0.05)
        gamma_w = 1.5 * float(np.sum(traj.disturbances**2)) + 1e-6
        ell = nonfalsified_set(reg, gamma_w)
        assert contains(ell, model_to_theta(model))


def test_contains_boundary_tolerance():
    ell = ParameterEllipsoid(center=np.zeros(2), shape=np.eye(2), radius=1.0)
    assert contains(ell, [1.0, 0.0])
    assert contains(ell, [np.sqrt(0.5), np.sqrt(0.5)])
    assert not contains(ell, [1.0 + 1e-5, 0.0])
    with pytest.raises(DimensionError):
        contains(ell, [1.0, 0.0, 0.0])


def test_falsified_data_raises():
    reg = build_regressors(hand_trajectory())
    with pytest.raises(FalsifiedPriorError):
        nonfalsified_set(reg, gamma_w=1e-4)  # SSR is ~0.0288


def test_singular_regressor_raises():
    traj = Trajectory(
        states=np.zeros((6, 4)), inputs=np.zeros(5), disturbances=np.zeros((5, 4))
    )
    reg = build_regressors(traj)
    with pytest.raises(SingularRegressorError):
        least_squares(reg)


def test_error_certificate_matches_definition():
    reg = build_regressors(hand_trajectory())
    ell = nonfalsified_set(reg, 0.0525)
    lam_min = float(np.linalg.eigvalsh(ell.shape)[0])
    assert posterior_error_certificate(ell) == pytest.approx(
        ell.radius / lam_min, rel=1e-12
    )
    bad = ParameterEllipsoid(center=np.zeros(2), shape=np.zeros((2, 2)), radius=1.0)
    with pytest.raises(SingularRegressorError):
        posterior_error_certificate(bad)


def test_accuracy_norm_identity_weight_equals_certificate():
    _, traj, reg = benchmark_dataset(noise=0.02)
    gamma_w = float(np.sum(traj.disturbances**2)) + 1e-8
    acc = accuracy_norm(reg, gamma_w, np.eye(5))
    ell = nonfalsified_set(reg, gamma_w)
    assert acc == pytest.approx(posterior_error_certificate(ell), rel=1e-9)


def test_checker_true_implies_goal_met():
    # Soundness: whenever the data condition holds, the achieved accuracy
    # must meet the target for any consistent disturbance realization.
    hits = 0
    for seed in range(8):
        model, traj, reg = benchmark_dataset(T=80, seed=seed, noise=0.03)
        gamma_w = float(np.sum(traj.disturbances**2)) + 1e-9
        for scale in (1.0, 0.1):
            D_des = scale * np.eye(5)
            if check_data_condition(reg, gamma_w, D_des):
                hits += 1
                assert accuracy_norm(reg, gamma_w, D_des) <= 1.0 + 1e-8
    assert hits >= 4  # the well-excited datasets must trip the checker


def test_checker_false_on_underexcited_data():
    model = discretize_benchmark(BenchmarkPlantParams())
    u = np.zeros(40)
    u[0] = 1e-3  # barely any excitation
    traj = simulate_linear(model, u)
    reg = build_regressors(traj)
    assert not check_data_condition(reg, 1.0, np.eye(5))


def test_dimension_errors():
    reg = build_regressors(hand_trajectory())
    with pytest.raises(DimensionError):
        check_data_condition(reg, 1.0, np.eye(3))
    with pytest.raises(DimensionError):
        accuracy_norm(reg, 1.0, np.eye(3))
    with pytest.raises(DimensionError):
        RegressorData(Phi=np.ones((2, 3)), Xstack=np.ones(4))
    with pytest.raises(DimensionError):
        ParameterEllipsoid(center=np.zeros(3), shape=np.eye(2), radius=1.0)
