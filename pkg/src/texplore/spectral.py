"""Spectral lines, frequency-response blocks, and design-side spectral assemblies.

A length-T real signal has spectral lines at frequencies that are integer
multiples of 1/T.  Multi-sine inputs concentrate their energy on L selected
lines; the steady-state response of a Schur-stable model maps each input
line through the resolvent (e^{j2*pi*w} I - A)^{-1}.  The assemblies built
here express the (squared) excitation content of a planned experiment as
explicit functions of the amplitude matrix U_e, which is what the design
LMIs constrain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DimensionError,
    InvalidParameterError,
    OffGridFrequencyError,
)
from .plant import LinearModel, Trajectory


@dataclass(frozen=True)
class FrequencyGrid:
    """L distinct frequencies omega_i = m_i / T stored as integer numerators."""

    multiples: np.ndarray
    T: int

    def __post_init__(self):
        m = np.asarray(self.multiples)
        if m.ndim != 1 or m.size == 0:
            raise InvalidParameterError("grid needs at least one frequency")
        if not np.issubdtype(m.dtype, np.integer):
            rounded = np.rint(m).astype(int)
            if np.max(np.abs(m - rounded)) > 1e-9:
                raise OffGridFrequencyError(
                    "grid frequencies must be integer multiples of 1/T"
                )
            m = rounded
        if self.T < 1:
            raise InvalidParameterError("horizon must be positive")
        if np.any(m < 0) or np.any(m >= self.T):
            raise InvalidParameterError("grid numerators must lie in [0, T)")
        if len(set(m.tolist())) != m.size:
            raise InvalidParameterError("grid frequencies must be distinct")
        object.__setattr__(self, "multiples", m.copy())

    @property
    def L(self) -> int:
        return self.multiples.size

    @property
    def omegas(self) -> np.ndarray:
        return self.multiples / self.T

    @classmethod
    def equally_spaced(cls, L: int, T: int) -> "FrequencyGrid":
        """Grid {0, 1/L, ..., (L-1)/L}; requires L to divide T."""
        if L < 1 or T % L != 0:
            raise InvalidParameterError(
                f"equally spaced grid requires L to divide T, got L={L}, T={T}"
            )
        return cls(multiples=np.arange(L) * (T // L), T=T)

    @classmethod
    def from_omegas(cls, omegas, T: int) -> "FrequencyGrid":
        return cls(multiples=np.asarray(omegas, dtype=float) * T, T=T)

    def mirror_index(self, i: int) -> int | None:
        """Index of the frequency 1 - omega_i on this grid, if present."""
        target = (-self.multiples[i]) % self.T
        hits = np.nonzero(self.multiples == target)[0]
        return int(hits[0]) if hits.size else None


@dataclass(frozen=True)
class ExplorationInputSpec:
    """Multi-sine input u_k = sum_i ubar(omega_i) cos(2 pi omega_i k)."""

    grid: FrequencyGrid
    amplitudes: np.ndarray  # (L, n_u)

    def __post_init__(self):
        amps = np.atleast_2d(np.asarray(self.amplitudes, dtype=float))
        if amps.shape[0] != self.grid.L:
            raise DimensionError(
                f"expected {self.grid.L} amplitude rows, got {amps.shape[0]}"
            )
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_u(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def U_e(self) -> np.ndarray:
        """Block-diagonal amplitude matrix, (L*n_u) x L."""
        return scipy.linalg.block_diag(*[a[:, None] for a in self.amplitudes])

    def total_energy(self) -> float:
        """sum_i ||ubar(omega_i)||^2 (the quantity bounded by gamma_e^2)."""
        return float(np.sum(self.amplitudes**2))

    def realize(self, T: int | None = None) -> np.ndarray:
        """Generate the input sequence u_0..u_{T-1}."""
        if T is None:
            T = self.grid.T
        k = np.arange(T)
        phases = np.cos(2 * np.pi * np.outer(k, self.grid.omegas))  # (T, L)
        return phases @ self.amplitudes


def symmetrize_mirror_pairs(spec: ExplorationInputSpec) -> ExplorationInputSpec:
    """Average amplitudes over mirrored frequency pairs (omega, 1-omega).

    cos(2 pi omega k) and cos(2 pi (1-omega) k) coincide on the integer
    sampling grid, so only the average of a mirrored pair's amplitudes is
    realizable.  Symmetrizing makes the realized spectral lines equal the
    designed ones without changing the generated signal.
    """
    amps = spec.amplitudes.copy()
    done = set()
    for i in range(spec.grid.L):
        j = spec.grid.mirror_index(i)
        if j is None or j == i or i in done:
            continue
        mean = (amps[i] + amps[j]) / 2
        amps[i] = mean
        amps[j] = mean
        done.update((i, j))
    return ExplorationInputSpec(grid=spec.grid, amplitudes=amps)


def spectral_line(seq, omega: float, T: int | None = None) -> np.ndarray:
    """Amplitude (1/T) sum_k seq_k e^{-j 2 pi omega k} of a line on the 1/T grid."""
    seq = np.asarray(seq, dtype=float)
    if seq.ndim == 1:
        seq = seq[:, None]
    if T is None:
        T = seq.shape[0]
    elif T != seq.shape[0]:
        raise DimensionError(f"sequence has length {seq.shape[0]}, expected {T}")
    if abs(omega * T - round(omega * T)) > 1e-9:
        raise OffGridFrequencyError(
            f"frequency {omega} is not an integer multiple of 1/{T}"
        )
    weights = np.exp(-2j * np.pi * omega * np.arange(T))
    return (weights @ seq) / T


@dataclass(frozen=True)
class TransferBlocks:
    """Frequency-response blocks of a model on a grid.

    Vx, Yx are block-diagonal over frequencies; Vphi, Yphi concatenate the
    per-frequency regressor-space responses [V_{x,i}; I] and [Y_{x,i}; 0]
    horizontally.
    """

    Vx: np.ndarray  # (n_x L, n_u L) complex
    Yx: np.ndarray  # (n_x L, n_x L) complex
    Vphi: np.ndarray  # (n_phi, n_u L) complex
    Yphi: np.ndarray  # (n_phi, n_x L) complex


def transfer_blocks(model: LinearModel, grid: FrequencyGrid) -> TransferBlocks:
    """Evaluate the resolvent blocks (e^{j2 pi w} I - A)^{-1} [B, I] per frequency."""
    n_x, n_u = model.n_x, model.n_u
    Vx_blocks, Yx_blocks, Vphi_cols, Yphi_cols = [], [], [], []
    eye = np.eye(n_x)
    for omega in grid.omegas:
        z = np.exp(2j * np.pi * omega)
        try:
            lu = scipy.linalg.lu_factor(z * eye - model.A)
        except scipy.linalg.LinAlgError as exc:  # pragma: no cover
            raise InvalidParameterError(
                f"resolvent is singular at omega={omega}; model is not Schur stable"
            ) from exc
        V = scipy.linalg.lu_solve(lu, model.B.astype(complex))
        Y = scipy.linalg.lu_solve(lu, eye.astype(complex))
        Vx_blocks.append(V)
        Yx_blocks.append(Y)
        Vphi_cols.append(np.vstack([V, np.eye(n_u)]))
        Yphi_cols.append(np.vstack([Y, np.zeros((n_u, n_x))]))
    return TransferBlocks(
        Vx=scipy.linalg.block_diag(*Vx_blocks),
        Yx=scipy.linalg.block_diag(*Yx_blocks),
        Vphi=np.hstack(Vphi_cols),
        Yphi=np.hstack(Yphi_cols),
    )


@dataclass(frozen=True)
class SpectralAssemblies:
    """Design-side spectral matrices of a planned experiment.

    Phi_u collects the regressor lines V_phi U_e; X_u the state lines; Zu1
    and Zu2 split the lifted excitation matrix so that each part is linear
    in U_e (the split is what the convex relaxation linearizes around).
    """

    Phi_u: np.ndarray  # (n_phi, L)
    X_u: np.ndarray  # (n_x L,)
    Zu1: np.ndarray  # (n_phi + n_x n_phi^2, L n_x n_phi)
    Zu2: np.ndarray  # same shape

    @property
    def Z_u(self) -> np.ndarray:
        return self.Zu1 + self.Zu2


def cholesky_upper(D: np.ndarray) -> np.ndarray:
    """Upper-triangular factor R with R^T R = D."""
    return scipy.linalg.cholesky(np.atleast_2d(np.asarray(D, dtype=float)), lower=False)


def assemble_spectral(
    blocks: TransferBlocks, spec: ExplorationInputSpec, D_des: np.ndarray
) -> SpectralAssemblies:
    """Build Phi_u, X_u and the Zu1/Zu2 split for given amplitudes."""
    n_phi = blocks.Vphi.shape[0]
    L = spec.grid.L
    n_u = spec.n_u
    n_x = n_phi - n_u
    if blocks.Vx.shape != (n_x * L, n_u * L):
        raise DimensionError(
            f"transfer blocks Vx shaped {blocks.Vx.shape}, expected {(n_x * L, n_u * L)}"
        )
    D_half = cholesky_upper(D_des)
    if D_half.shape[0] != n_phi:
        raise DimensionError(f"D_des must be {n_phi} x {n_phi}")

    U_e = spec.U_e
    ones = np.ones(L)
    Phi_u = blocks.Vphi @ U_e
    X_u = blocks.Vx @ (U_e @ ones)

    # Zu1 = [D^{1/2 T} (1^T U_e^T kron I_nphi); 0] (Vx^H kron I_nphi)
    row = ones @ U_e.T  # (L n_u,)
    top = D_half.T @ np.kron(row[None, :], np.eye(n_phi))
    Zu1 = np.vstack(
        [top.astype(complex), np.zeros((n_x * n_phi**2, top.shape[1]))]
    ) @ np.kron(blocks.Vx.conj().T, np.eye(n_phi))

    # Zu2 = [0; Vphi kron I_{nx nphi}] (U_e kron I_{nx nphi})
    bottom = np.kron(blocks.Vphi, np.eye(n_x * n_phi))
    Zu2 = np.vstack(
        [np.zeros((n_phi, bottom.shape[1]), dtype=complex), bottom]
    ) @ np.kron(U_e, np.eye(n_x * n_phi))

    return SpectralAssemblies(Phi_u=Phi_u, X_u=X_u, Zu1=Zu1, Zu2=Zu2)


def empirical_excitation_check(
    traj: Trajectory,
    grid: FrequencyGrid,
    epsilon: float,
    W_phi_bar: np.ndarray,
    model: LinearModel,
    tol: float = 1e-6,
) -> bool:
    """Validate the spectral excitation lower bound on recorded data.

    Checks Phi Phi^T >= T ((1-eps) Phi_u Phi_u^H - ((1-eps)/eps) W_phi_bar)
    where Phi_u maps the *realized* input lines of the trajectory through
    the model's frequency response.  Diagnostic: the margin absorbs both
    dropped off-grid content and the disturbance budget.
    """
    if not 0 < epsilon < 1:
        raise InvalidParameterError("epsilon must lie in (0, 1)")
    from .setmem import build_regressors

    T = traj.horizon
    if T != grid.T:
        raise DimensionError(f"trajectory horizon {T} != grid horizon {grid.T}")
    reg = build_regressors(traj)
    gram = reg.Phi @ reg.Phi.T

    blocks = transfer_blocks(model, grid)
    n_u = traj.inputs.shape[1]
    cols = []
    for i, omega in enumerate(grid.omegas):
        line = spectral_line(traj.inputs, omega, T)
        cols.append(blocks.Vphi[:, i * n_u : (i + 1) * n_u] @ line)
    Phi_u = np.column_stack(cols)

    lhs = gram - T * (
        (1 - epsilon) * (Phi_u @ Phi_u.conj().T)
        - ((1 - epsilon) / epsilon) * np.asarray(W_phi_bar)
    )
    lhs = (lhs + lhs.conj().T) / 2
    eigs = np.linalg.eigvalsh(lhs)
    scale = max(abs(eigs[0]), abs(eigs[-1]), 1.0)
    return bool(eigs[0] >= -tol * scale)
