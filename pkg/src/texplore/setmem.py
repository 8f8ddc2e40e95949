"""Least-squares identification and the energy-bound non-falsified parameter set.

Data model: x_{k+1} = [A B] phi_k + w_k with phi_k = [x_k; u_k].  The
parameter vector theta stacks [A B] column-by-column, so that
x_{k+1} = (phi_k^T kron I_nx) theta + w_k.

Under the energy bound sum_k ||w_k||^2 <= gamma_w, the set of parameters
consistent with the data is the ellipsoid

    { theta : (theta - theta_hat)^T (PhiPhi^T kron I_nx) (theta - theta_hat) <= G },

where theta_hat is the least-squares estimate and G = gamma_w - SSR with
SSR the sum of squared residuals of the fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, FalsifiedPriorError, SingularRegressorError
from .plant import Trajectory

# Relative rank tolerance on the squared singular values of Phi.
RANK_TOL = 1e-12

# Multiplicative slack on ellipsoid membership tests.
MEMBERSHIP_TOL = 1e-12


@dataclass(frozen=True)
class RegressorData:
    """Regressor matrix Phi (n_phi x T) and stacked successor states (T*n_x,)."""

    Phi: np.ndarray
    Xstack: np.ndarray

    def __post_init__(self):
        Phi = np.atleast_2d(np.asarray(self.Phi, dtype=float))
        X = np.asarray(self.Xstack, dtype=float).ravel()
        if Phi.shape[1] == 0:
            raise DimensionError("regressor matrix must have at least one column")
        if X.size % Phi.shape[1] != 0:
            raise DimensionError(
                f"Xstack length {X.size} is not a multiple of T={Phi.shape[1]}"
            )
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "Xstack", X)

    @property
    def T(self) -> int:
        return self.Phi.shape[1]

    @property
    def n_phi(self) -> int:
        return self.Phi.shape[0]

    @property
    def n_x(self) -> int:
        return self.Xstack.size // self.T

    @property
    def n_u(self) -> int:
        return self.n_phi - self.n_x

    def successor_matrix(self) -> np.ndarray:
        """Successor states as columns, (n_x x T)."""
        return self.Xstack.reshape(self.T, self.n_x).T


@dataclass(frozen=True)
class ParameterEstimate:
    """Least-squares estimate theta_hat with covariance-like factor P.

    P = (Phi Phi^T)^{-1} kron I_nx; it maps the disturbance energy budget to
    parameter-space uncertainty.
    """

    theta_hat: np.ndarray
    P: np.ndarray

    def as_model(self, n_x: int, n_u: int):
        from .plant import model_from_theta

        return model_from_theta(self.theta_hat, n_x, n_u)


@dataclass(frozen=True)
class ParameterEllipsoid:
    """{ theta : (theta - center)^T shape (theta - center) <= radius }."""

    center: np.ndarray
    shape: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).ravel()
        shape = np.atleast_2d(np.asarray(self.shape, dtype=float))
        if shape.shape != (center.size, center.size):
            raise DimensionError(
                f"shape matrix {shape.shape} does not match center length {center.size}"
            )
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "radius", float(self.radius))

    def to_record(self) -> dict:
        """Small structured record for reports."""
        return {
            "center": self.center.tolist(),
            "shape": self.shape.tolist(),
            "radius": self.radius,
        }


def build_regressors(traj: Trajectory) -> RegressorData:
    """Assemble Phi = [phi_0 .. phi_{T-1}] and the stacked successors x_1..x_T."""
    T = traj.horizon
    if T < 1:
        raise DimensionError("trajectory must contain at least one step")
    Phi = np.vstack([traj.states[:-1].T, traj.inputs.T])
    Xstack = traj.states[1:].flatten()
    return RegressorData(Phi=Phi, Xstack=Xstack)


def _gram_cholesky(Phi: np.ndarray):
    """Cholesky factor of Phi Phi^T, guarding against rank deficiency."""
    sv = np.linalg.svd(Phi, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] ** 2 <= RANK_TOL * sv[0] ** 2:
        raise SingularRegressorError(
            f"regressor matrix is rank deficient (smallest singular value "
            f"{sv[-1]:.3e})",
            smallest_singular_value=float(sv[-1]),
        )
    gram = Phi @ Phi.T
    return scipy.linalg.cho_factor(gram), gram


def least_squares(reg: RegressorData) -> ParameterEstimate:
    """Solve the normal equations M (Phi Phi^T) = Xmat Phi^T for M = [A B]."""
    chol, _ = _gram_cholesky(reg.Phi)
    Xmat = reg.successor_matrix()
    M = scipy.linalg.cho_solve(chol, (Xmat @ reg.Phi.T).T).T
    gram_inv = scipy.linalg.cho_solve(chol, np.eye(reg.n_phi))
    gram_inv = (gram_inv + gram_inv.T) / 2
    P = np.kron(gram_inv, np.eye(reg.n_x))
    theta_hat = M.flatten(order="F")
    return ParameterEstimate(theta_hat=theta_hat, P=P)


def nonfalsified_set(reg: RegressorData, gamma_w: float) -> ParameterEllipsoid:
    """Ellipsoid of parameters consistent with the data under the energy bound.

    The scaling G = gamma_w + ||theta_hat||^2_{P^-1} - X^T X is computed in
    its numerically stable equivalent form gamma_w - SSR (SSR = residual
    energy of the least-squares fit), which avoids catastrophic cancellation
    between two large quadratic forms.
    """
    est = least_squares(reg)
    Xmat = reg.successor_matrix()
    M = est.theta_hat.reshape((reg.n_x, reg.n_phi), order="F")
    residuals = Xmat - M @ reg.Phi
    ssr = float(np.sum(residuals**2))
    G = gamma_w - ssr
    if G < -1e-9 * max(1.0, gamma_w, ssr):
        raise FalsifiedPriorError(
            f"data residual energy {ssr:.6g} exceeds the disturbance budget "
            f"gamma_w={gamma_w:.6g}; the non-falsified set is empty"
        )
    G = max(G, 0.0)
    shape = np.kron(reg.Phi @ reg.Phi.T, np.eye(reg.n_x))
    return ParameterEllipsoid(center=est.theta_hat, shape=shape, radius=G)


def contains(ell: ParameterEllipsoid, theta: np.ndarray) -> bool:
    """Membership test with a small multiplicative tolerance on the radius."""
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != ell.center.size:
        raise DimensionError(
            f"theta has length {theta.size}, ellipsoid lives in R^{ell.center.size}"
        )
    d = theta - ell.center
    return float(d @ ell.shape @ d) <= ell.radius * (1 + MEMBERSHIP_TOL)


def posterior_error_certificate(ell: ParameterEllipsoid) -> float:
    """Guaranteed squared-error bound G * ||P|| for a data-built ellipsoid.

    ||P|| is the spectral norm of the inverse shape, i.e. 1/lambda_min(shape).
    """
    eigs = np.linalg.eigvalsh((ell.shape + ell.shape.T) / 2)
    lam_min = eigs[0]
    if lam_min <= 0:
        raise SingularRegressorError(
            "ellipsoid shape is singular; cannot certify an error bound",
            smallest_singular_value=float(max(lam_min, 0.0)),
        )
    return ell.radius / lam_min


def check_data_condition(
    reg: RegressorData, gamma_w: float, D_des: np.ndarray
) -> bool:
    """Sufficient condition on (Phi, X) for the identification goal.

    Assembles the Schur-complement block form of the data condition

        [ Phi Phi^T + (X^T X - gamma_w) D_des          star^T                  ]
        [ star                           (Phi Phi^T kron I_nx) kron I_nphi    ]

    with star = (((Phi kron I_nx) X) kron I_nphi) D^{1/2}, where D^{1/2} is
    the upper-triangular Cholesky factor of D_des.  Returns True when the
    minimum eigenvalue of the symmetrized block matrix is >= -1e-8 * scale.

    When this holds on data with a gamma_w-consistent disturbance, the
    least-squares estimate satisfies
    (theta_tr - theta_hat)^T (D_des kron I_nx) (theta_tr - theta_hat) <= 1.
    """
    D_des = np.atleast_2d(np.asarray(D_des, dtype=float))
    n_phi, n_x = reg.n_phi, reg.n_x
    if D_des.shape != (n_phi, n_phi):
        raise DimensionError(
            f"D_des must be {(n_phi, n_phi)}, got {D_des.shape}"
        )
    D_half = scipy.linalg.cholesky(D_des, lower=False)
    gram = reg.Phi @ reg.Phi.T
    xtx = float(reg.Xstack @ reg.Xstack)

    top_left = gram + (xtx - gamma_w) * D_des
    phix = np.kron(reg.Phi, np.eye(n_x)) @ reg.Xstack  # length n_phi*n_x
    star = np.kron(phix[:, None], np.eye(n_phi)) @ D_half
    bottom_right = np.kron(np.kron(gram, np.eye(n_x)), np.eye(n_phi))

    n = n_phi + n_x * n_phi**2
    block = np.zeros((n, n))
    block[:n_phi, :n_phi] = top_left
    block[n_phi:, :n_phi] = star
    block[:n_phi, n_phi:] = star.T
    block[n_phi:, n_phi:] = bottom_right
    block = (block + block.T) / 2

    eigs = np.linalg.eigvalsh(block)
    scale = max(abs(eigs[0]), abs(eigs[-1]), 1e-300)
    return bool(eigs[0] >= -1e-8 * scale)


def accuracy_norm(reg: RegressorData, gamma_w: float, D_des: np.ndarray) -> float:
    """Achieved accuracy relative to the desired weighting; <= 1 means met.

    Computes G * lambda_max(D^{1/2} (Phi Phi^T)^{-1} D^{1/2 T}) for the
    non-falsified set built from the data, which is <= 1 exactly when that
    set fits inside { theta : (theta - center)^T (D_des kron I) (theta -
    center) <= 1 }.  With D_des = I this is the familiar ||G * P||.
    """
    D_des = np.atleast_2d(np.asarray(D_des, dtype=float))
    if D_des.shape != (reg.n_phi, reg.n_phi):
        raise DimensionError(
            f"D_des must be {(reg.n_phi, reg.n_phi)}, got {D_des.shape}"
        )
    ell = nonfalsified_set(reg, gamma_w)
    chol, _ = _gram_cholesky(reg.Phi)
    U = scipy.linalg.cholesky(D_des, lower=False)
    inner = U @ scipy.linalg.cho_solve(chol, U.T)
    lam_max = float(np.linalg.eigvalsh((inner + inner.T) / 2)[-1])
    return ell.radius * lam_max
