"""Scenario-based caps on frequency-response uncertainty and disturbance content.

The design LMIs need two kinds of robust bounds:

* caps on how far the frequency response of any model in the prior set can
  deviate from the nominal one (Gamma_tilde_phi, Gamma_tilde_x), and caps on
  the disturbance-to-state/regressor responses themselves (Gamma_phi,
  Gamma_x);
* bounds on the spectral content the disturbance can contribute, which
  follow from the energy budget: W_phi_bar = (gamma_w/T) Gamma_phi and an
  identity-scaled bound w_z_scalar on the lifted excitation matrix.

The caps are computed by sampling the prior ellipsoid (center plus boundary
points), evaluating the transfer blocks per sample, and inflating the
worst case by a multiplicative margin.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidParameterError, PriorTooLargeError
from .plant import model_from_theta
from .setmem import ParameterEllipsoid
from .spectral import FrequencyGrid, transfer_blocks

# Reject the prior outright if more than this fraction of samples is
# Schur-unstable.  Marginally-unstable priors are common at large initial
# uncertainty (the nominal center itself can sit just outside the unit
# circle), so the guard only fires when instability clearly dominates.
MAX_UNSTABLE_FRACTION = 0.75


@dataclass(frozen=True)
class ScenarioConfig:
    """Sampling configuration for the scenario caps.

    confidence is recorded metadata (the nominal miss probability the
    sample count is meant to represent); inflation is the multiplicative
    margin applied to the worst sampled value.
    """

    sample_count: int = 200
    confidence: float = 1e-10
    inflation: float = 1.1
    seed: int = 0

    def __post_init__(self):
        if self.sample_count < 1:
            raise InvalidParameterError("sample_count must be >= 1")
        if not 0 < self.confidence < 1:
            raise InvalidParameterError("confidence must lie in (0, 1)")
        if self.inflation < 1:
            raise InvalidParameterError("inflation must be >= 1")


@dataclass(frozen=True)
class UncertaintyBounds:
    """Hermitian caps and disturbance-level bounds used by the design LMIs."""

    Gamma_tilde_phi: np.ndarray  # (n_phi, n_phi)
    Gamma_tilde_x: np.ndarray  # (n_x L, n_x L)
    Gamma_phi: np.ndarray  # (n_phi, n_phi)
    Gamma_x: np.ndarray  # (n_x L, n_x L)
    W_phi_bar: np.ndarray | None = None  # (n_phi, n_phi)
    w_z_scalar: float | None = None
    samples_used: int = 0
    samples_rejected: int = 0

    def norms_record(self) -> dict:
        """Scalar summary for run reports."""
        rec = {
            "norm_Gamma_tilde_phi": float(np.linalg.norm(self.Gamma_tilde_phi, 2)),
            "norm_Gamma_tilde_x": float(np.linalg.norm(self.Gamma_tilde_x, 2)),
            "norm_Gamma_phi": float(np.linalg.norm(self.Gamma_phi, 2)),
            "norm_Gamma_x": float(np.linalg.norm(self.Gamma_x, 2)),
            "samples_used": self.samples_used,
            "samples_rejected": self.samples_rejected,
        }
        if self.W_phi_bar is not None:
            rec["norm_W_phi_bar"] = float(np.linalg.norm(self.W_phi_bar, 2))
            rec["w_z_scalar"] = float(self.w_z_scalar)
        return rec


def sample_prior(prior: ParameterEllipsoid, n: int, seed: int) -> np.ndarray:
    """Center plus n uniformly distributed boundary points of the ellipsoid.

    Uniformity is on the unit sphere mapped through shape^{-1/2}; the
    counter-based Philox generator keeps draws reproducible per seed.
    """
    d = prior.center.size
    evals, evecs = np.linalg.eigh((prior.shape + prior.shape.T) / 2)
    if evals[0] <= 0:
        raise InvalidParameterError("prior shape matrix must be positive definite")
    inv_sqrt = evecs @ np.diag(1.0 / np.sqrt(evals)) @ evecs.T

    rng = np.random.Generator(np.random.Philox(seed))
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    sphere = g / norms
    boundary = prior.center + np.sqrt(prior.radius) * sphere @ inv_sqrt.T
    return np.vstack([prior.center[None, :], boundary])


def _tight_psd_envelope(outer_products: list[np.ndarray]) -> np.ndarray:
    """Minimum-trace PSD matrix dominating every given Hermitian outer product."""
    import cvxpy as cp

    n = outer_products[0].shape[0]
    # Mirror-paired frequency grids make the sampled outer products real
    # symmetric; a real variable keeps the solve deterministic and small.
    if all(np.max(np.abs(M.imag)) < 1e-12 for M in outer_products):
        G = cp.Variable((n, n), symmetric=True)
        cons = [G >> M.real for M in outer_products]
        objective = cp.trace(G)
    else:
        G = cp.Variable((n, n), hermitian=True)
        cons = [G >> cp.Constant(M) for M in outer_products]
        objective = cp.real(cp.trace(G))
    problem = cp.Problem(cp.Minimize(objective), cons)
    problem.solve(solver=cp.CLARABEL)
    if G.value is None:
        raise InvalidParameterError("envelope cap computation failed")
    out = np.asarray(G.value)
    out = (out + out.conj().T) / 2
    # Guarantee domination despite solver tolerance.
    slack = 0.0
    for M in outer_products:
        eigs = np.linalg.eigvalsh(out - M)
        slack = max(slack, -float(eigs[0]))
    if slack > 0:
        out = out + (slack * 1.01 + 1e-12) * np.eye(n)
    return out


def scenario_gamma_bounds(
    prior: ParameterEllipsoid,
    theta_hat0: np.ndarray,
    grid: FrequencyGrid,
    cfg: ScenarioConfig,
    n_x: int,
    n_u: int,
    deviation_cap: str = "identity",
) -> UncertaintyBounds:
    """Sample the prior set and cap the transfer-matrix deviations.

    With samples theta^(s) (Schur-unstable draws are rejected and counted),
    the deviation caps dominate (V(theta^s) - V(theta_hat0)) (.)^H and the
    response caps dominate Y(theta^s) Y(theta^s)^H on every retained sample.
    deviation_cap selects the shape of the two deviation caps: "identity"
    uses the scaled identity rho * max_s ||Vtilde||^2 * I; "envelope" uses
    minimum-trace PSD matrices dominating all sampled outer products — a
    full matrix for the regressor side and one block per frequency for the
    (block-diagonal) state side.  Envelope caps are much tighter away from
    resonant frequencies, and at large initial uncertainty they are often
    the difference between a feasible and an infeasible design.  The
    response caps Gamma_phi/Gamma_x stay scaled identities either way (they
    enter the design mostly through their norms).
    """
    if deviation_cap not in ("identity", "envelope"):
        raise InvalidParameterError(f"unknown deviation_cap {deviation_cap!r}")
    theta_hat0 = np.asarray(theta_hat0, dtype=float).ravel()
    nominal = model_from_theta(theta_hat0, n_x, n_u)
    hat_blocks = transfer_blocks(nominal, grid)

    samples = sample_prior(prior, cfg.sample_count, cfg.seed)
    L = grid.L
    lam_tilde_phi = 0.0
    lam_tilde_x = 0.0
    lam_phi = 0.0
    lam_x = 0.0
    phi_outers: list[np.ndarray] = []
    x_outers: list[list[np.ndarray]] = [[] for _ in range(L)]
    used = 0
    rejected = 0
    for theta in samples:
        model_s = model_from_theta(theta, n_x, n_u)
        if not model_s.is_schur_stable():
            rejected += 1
            continue
        used += 1
        blocks_s = transfer_blocks(model_s, grid)
        Vt_phi = blocks_s.Vphi - hat_blocks.Vphi
        Vt_x = blocks_s.Vx - hat_blocks.Vx
        lam_tilde_phi = max(lam_tilde_phi, np.linalg.norm(Vt_phi, 2) ** 2)
        lam_tilde_x = max(lam_tilde_x, np.linalg.norm(Vt_x, 2) ** 2)
        lam_phi = max(lam_phi, np.linalg.norm(blocks_s.Yphi, 2) ** 2)
        lam_x = max(lam_x, np.linalg.norm(blocks_s.Yx, 2) ** 2)
        if deviation_cap == "envelope":
            phi_outers.append(Vt_phi @ Vt_phi.conj().T)
            # Vtilde_x is block-diagonal per frequency, so its outer product
            # decouples into L small blocks and PSD domination can be
            # enforced blockwise.
            for i in range(L):
                blk = Vt_x[i * n_x : (i + 1) * n_x, i * n_u : (i + 1) * n_u]
                x_outers[i].append(blk @ blk.conj().T)

    total = samples.shape[0]
    if used == 0 or rejected > MAX_UNSTABLE_FRACTION * total:
        raise PriorTooLargeError(
            f"{rejected}/{total} sampled models are Schur-unstable; the prior "
            "set is too large for a stability-based exploration design"
        )

    rho = cfg.inflation
    n_phi = n_x + n_u
    if deviation_cap == "envelope":
        Gamma_tilde_phi = rho * _tight_psd_envelope(phi_outers)
        Gamma_tilde_x = rho * scipy.linalg.block_diag(
            *[_tight_psd_envelope(outs) for outs in x_outers]
        )
    else:
        Gamma_tilde_phi = rho * lam_tilde_phi * np.eye(n_phi)
        Gamma_tilde_x = rho * lam_tilde_x * np.eye(n_x * L)
    return UncertaintyBounds(
        Gamma_tilde_phi=Gamma_tilde_phi,
        Gamma_tilde_x=Gamma_tilde_x,
        Gamma_phi=rho * lam_phi * np.eye(n_phi),
        Gamma_x=rho * lam_x * np.eye(n_x * L),
        samples_used=used,
        samples_rejected=rejected,
    )


def noise_level_bounds(
    gammas: UncertaintyBounds, gamma_w: float, T: int, D_des: np.ndarray
) -> UncertaintyBounds:
    """Fill the disturbance-content bounds from the energy budget.

    W_phi_bar = (gamma_w/T) Gamma_phi caps the regressor lines the
    disturbance can contribute; w_z_scalar caps the lifted excitation
    contribution via spectral norms:
    w_z = (gamma_w/T)(||Gamma_x|| ||D_des|| + ||Gamma_phi||).
    """
    if gamma_w < 0:
        raise InvalidParameterError("gamma_w must be nonnegative")
    D_des = np.atleast_2d(np.asarray(D_des, dtype=float))
    scale = gamma_w / T
    W_phi_bar = scale * gammas.Gamma_phi
    w_z = scale * np.linalg.norm(gammas.Gamma_x, 2) * np.linalg.norm(
        D_des, 2
    ) + scale * np.linalg.norm(gammas.Gamma_phi, 2)
    return dataclasses.replace(gammas, W_phi_bar=W_phi_bar, w_z_scalar=float(w_z))
