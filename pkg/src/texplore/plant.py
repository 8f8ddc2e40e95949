"""Linear state-space models and the two-mass-spring-damper benchmark plant.

The benchmark is a chain of two mass-spring-damper systems with Coulomb
friction on both masses and a force input on the second mass.  Euler
discretization of the linear part gives the nominal model; the friction
terms enter the discrete dynamics as bounded disturbances.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidParameterError

SCHUR_TOL = 1e-9


@dataclass(frozen=True)
class LinearModel:
    """Discrete-time linear dynamics x_{k+1} = A x_k + B u_k (+ w_k)."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionError(f"B has {B.shape[0]} rows, expected {A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_phi(self) -> int:
        return self.n_x + self.n_u

    def is_schur_stable(self, tol: float = SCHUR_TOL) -> bool:
        """True if all eigenvalues of A have modulus < 1 - tol."""
        return bool(np.max(np.abs(np.linalg.eigvals(self.A))) < 1.0 - tol)


def model_to_theta(model: LinearModel) -> np.ndarray:
    """Stack [A, B] column-by-column into a single parameter vector."""
    return np.concatenate([model.A, model.B], axis=1).flatten(order="F")


def model_from_theta(theta: np.ndarray, n_x: int, n_u: int) -> LinearModel:
    """Inverse of model_to_theta."""
    theta = np.asarray(theta, dtype=float)
    n_phi = n_x + n_u
    if theta.size != n_x * n_phi:
        raise DimensionError(
            f"theta has {theta.size} entries, expected {n_x * n_phi}"
        )
    M = theta.reshape((n_x, n_phi), order="F")
    return LinearModel(A=M[:, :n_x], B=M[:, n_x:])


@dataclass(frozen=True)
class BenchmarkPlantParams:
    """Physical parameters of the two-mass benchmark.

    Units: masses in kg, spring constants in N/m, damping in N s/m,
    friction slopes in s/m, friction magnitudes in N, Ts in s.
    """

    m1: float = 1.0
    m2: float = 2.0
    k1: float = 1.0
    k2: float = 1.5
    d1: float = 0.5
    d2: float = 1.1
    alpha1: float = 1.0
    alpha2: float = 1.0
    beta1: float = 0.0
    beta2: float = 0.0
    Ts: float = 0.5

    def __post_init__(self):
        if self.m1 <= 0 or self.m2 <= 0:
            raise InvalidParameterError("masses must be positive")
        if self.Ts <= 0:
            raise InvalidParameterError("sampling period must be positive")
        for name in ("k1", "k2", "d1", "d2", "alpha1", "alpha2", "beta1", "beta2"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class Trajectory:
    """A simulated run: states x_0..x_T, inputs u_0..u_{T-1}, disturbances w_0..w_{T-1}."""

    states: np.ndarray  # (T+1, n_x)
    inputs: np.ndarray  # (T, n_u)
    disturbances: np.ndarray  # (T, n_x)

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        inputs = np.asarray(self.inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        dist = np.atleast_2d(np.asarray(self.disturbances, dtype=float))
        T = states.shape[0] - 1
        if inputs.shape[0] != T or dist.shape[0] != T:
            raise DimensionError(
                f"expected {T} inputs and disturbances, got "
                f"{inputs.shape[0]} and {dist.shape[0]}"
            )
        if dist.shape[1] != states.shape[1]:
            raise DimensionError("disturbance width must match state width")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "disturbances", dist)

    @property
    def horizon(self) -> int:
        return self.inputs.shape[0]


def discretize_benchmark(params: BenchmarkPlantParams) -> LinearModel:
    """Forward-Euler discretization of the linear part of the benchmark ODEs.

    State ordering is [p1, p1dot, p2, p2dot]; the scalar input pushes the
    second mass.  Friction is excluded here (it is treated as a disturbance
    by simulate_nonlinear_benchmark).
    """
    m1, m2 = params.m1, params.m2
    k1, k2, d1, d2, Ts = params.k1, params.k2, params.d1, params.d2, params.Ts
    A_c = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [-(k1 + k2) / m1, -(d1 + d2) / m1, k2 / m1, d2 / m1],
            [0.0, 0.0, 0.0, 1.0],
            [k2 / m2, d2 / m2, -k2 / m2, -d2 / m2],
        ]
    )
    B_c = np.array([[0.0], [0.0], [0.0], [1.0 / m2]])
    return LinearModel(A=np.eye(4) + Ts * A_c, B=Ts * B_c)


def simulate_linear(
    model: LinearModel,
    inputs: np.ndarray,
    disturbances: np.ndarray | None = None,
    x0: np.ndarray | None = None,
) -> Trajectory:
    """Roll the recursion x_{k+1} = A x_k + B u_k + w_k forward."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[:, None]
    T = inputs.shape[0]
    if inputs.shape[1] != model.n_u:
        raise DimensionError(
            f"inputs have width {inputs.shape[1]}, model expects {model.n_u}"
        )
    if disturbances is None:
        disturbances = np.zeros((T, model.n_x))
    disturbances = np.atleast_2d(np.asarray(disturbances, dtype=float))
    if disturbances.shape != (T, model.n_x):
        raise DimensionError(
            f"disturbances must be {(T, model.n_x)}, got {disturbances.shape}"
        )
    if x0 is None:
        x0 = np.zeros(model.n_x)
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != model.n_x:
        raise DimensionError(f"x0 must have length {model.n_x}")

    states = np.zeros((T + 1, model.n_x))
    states[0] = x0
    for k in range(T):
        states[k + 1] = model.A @ states[k] + model.B @ inputs[k] + disturbances[k]
    return Trajectory(states=states, inputs=inputs, disturbances=disturbances)


def benchmark_disturbance(params: BenchmarkPlantParams, x: np.ndarray) -> np.ndarray:
    """Euler-scaled Coulomb friction disturbance at state x."""
    return params.Ts * np.array(
        [
            0.0,
            params.beta1 * np.tanh(params.alpha1 * x[1]) / params.m1,
            0.0,
            params.beta2 * np.tanh(params.alpha2 * x[3]) / params.m2,
        ]
    )


def simulate_nonlinear_benchmark(
    params: BenchmarkPlantParams,
    inputs: np.ndarray,
    x0: np.ndarray | None = None,
) -> Trajectory:
    """Simulate the full nonlinear benchmark under Euler discretization.

    The returned trajectory's disturbances field holds the friction terms,
    so replaying it through simulate_linear with the discretized model
    reproduces the same states exactly.
    """
    model = discretize_benchmark(params)
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[:, None]
    T = inputs.shape[0]
    if x0 is None:
        x0 = np.zeros(model.n_x)
    x0 = np.asarray(x0, dtype=float).ravel()

    states = np.zeros((T + 1, model.n_x))
    dist = np.zeros((T, model.n_x))
    states[0] = x0
    for k in range(T):
        dist[k] = benchmark_disturbance(params, states[k])
        states[k + 1] = model.A @ states[k] + model.B @ inputs[k] + dist[k]
    return Trajectory(states=states, inputs=inputs, disturbances=dist)


def disturbance_energy(traj: Trajectory) -> float:
    """Total disturbance energy sum_k ||w_k||^2."""
    return float(np.sum(traj.disturbances**2))


def disturbance_energy_bound(
    params: BenchmarkPlantParams, T: int, ts_scaled: bool = True
) -> float:
    """Worst-case disturbance energy of the benchmark over a horizon T.

    With ts_scaled=True the bound matches the Euler-scaled friction emitted
    by the simulator, T*Ts^2*(beta1^2/m1^2 + beta2^2/m2^2).  With
    ts_scaled=False the Ts^2 factor is dropped (continuous-time force
    convention).
    """
    s = params.Ts**2 if ts_scaled else 1.0
    return T * s * (params.beta1**2 / params.m1**2 + params.beta2**2 / params.m2**2)


def friction_for_energy(
    params: BenchmarkPlantParams, gamma_w: float, T: int, ts_scaled: bool = True
) -> BenchmarkPlantParams:
    """Set beta1 = beta2 so the worst-case disturbance energy equals gamma_w."""
    if gamma_w < 0:
        raise InvalidParameterError("gamma_w must be nonnegative")
    s = params.Ts if ts_scaled else 1.0
    beta = (
        params.m1
        * params.m2
        * np.sqrt(gamma_w)
        / (s * np.sqrt(T * (params.m1**2 + params.m2**2)))
    )
    return dataclasses.replace(params, beta1=float(beta), beta2=float(beta))
