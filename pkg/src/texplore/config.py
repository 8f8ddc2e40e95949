"""Experiment configuration: JSON round-trip, validation, derived objects."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .plant import (
    BenchmarkPlantParams,
    discretize_benchmark,
    disturbance_energy_bound,
    friction_for_energy,
)
from .spectral import FrequencyGrid

SCHEMA_VERSION = 1

THETA0_RECIPES = ("boundary-offset", "boundary-random", "explicit")
DEVIATION_CAPS = ("identity", "envelope")

# State/input dimensions of the two-mass benchmark this configuration drives.
N_X = 4
N_U = 1
N_PHI = N_X + N_U


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    horizon: int = 100
    lines: int = 20
    frequency_multiples: list | None = None
    epsilon: float = 0.5
    gamma_w: float = 1.0
    set_friction_from_gamma_w: bool = True
    ts_scaled_energy: bool = True
    plant: dict = field(default_factory=dict)
    D_des_scale: float = 1.0
    D_des_matrix: list | None = None
    D0_scale: float = 1e4
    D0_matrix: list | None = None
    theta0_recipe: str = "boundary-offset"
    theta0: list | None = None
    scenario_samples: int = 200
    scenario_confidence: float = 1e-10
    scenario_inflation: float = 1.1
    deviation_cap: str = "envelope"
    design_tol: float = 1e-2
    design_max_iterations: int = 20
    certify_samples: int = 100
    x0: list | None = None

    # -- validation --------------------------------------------------------

    def validate(self) -> "ExperimentConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise InvalidParameterError(
                f"unsupported schema_version {self.schema_version}; expected {SCHEMA_VERSION}"
            )
        if self.horizon < 1:
            raise InvalidParameterError("horizon must be a positive integer")
        if self.frequency_multiples is None:
            if self.lines < N_PHI:
                raise InvalidParameterError(
                    f"need at least {N_PHI} frequency lines to excite a model "
                    f"with {N_PHI} regressor directions, got {self.lines}"
                )
            if self.horizon % self.lines != 0:
                raise InvalidParameterError(
                    "equally spaced lines require the horizon to be a multiple "
                    f"of the line count ({self.horizon} % {self.lines} != 0)"
                )
        else:
            if len(self.frequency_multiples) < N_PHI:
                raise InvalidParameterError(
                    f"need at least {N_PHI} frequency lines, got "
                    f"{len(self.frequency_multiples)}"
                )
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidParameterError("epsilon must lie strictly in (0, 1)")
        if isinstance(self.gamma_w, str):
            if self.gamma_w != "from-beta":
                raise InvalidParameterError(
                    f"gamma_w must be a number or 'from-beta', got {self.gamma_w!r}"
                )
            if self.set_friction_from_gamma_w:
                raise InvalidParameterError(
                    "gamma_w='from-beta' derives the budget from the plant's "
                    "friction levels; set_friction_from_gamma_w must be false"
                )
            params = BenchmarkPlantParams(**self.plant)
            self.gamma_w = float(
                disturbance_energy_bound(
                    params, self.horizon, ts_scaled=self.ts_scaled_energy
                )
            )
        if self.gamma_w < 0:
            raise InvalidParameterError("gamma_w must be nonnegative")
        self._check_weight("D_des", self.D_des_scale, self.D_des_matrix)
        self._check_weight("D0", self.D0_scale, self.D0_matrix)
        if self.theta0_recipe not in THETA0_RECIPES:
            raise InvalidParameterError(
                f"unknown theta0_recipe {self.theta0_recipe!r}; options: {THETA0_RECIPES}"
            )
        if self.theta0_recipe == "explicit":
            if self.theta0 is None or len(self.theta0) != N_X * N_PHI:
                raise InvalidParameterError(
                    f"explicit theta0 must supply {N_X * N_PHI} entries"
                )
        if self.deviation_cap not in DEVIATION_CAPS:
            raise InvalidParameterError(
                f"unknown deviation_cap {self.deviation_cap!r}; options: {DEVIATION_CAPS}"
            )
        if self.scenario_samples < 1:
            raise InvalidParameterError("scenario_samples must be >= 1")
        if not 0.0 < self.scenario_confidence < 1.0:
            raise InvalidParameterError("scenario_confidence must lie in (0, 1)")
        if self.scenario_inflation < 1.0:
            raise InvalidParameterError("scenario_inflation must be >= 1")
        if self.design_tol <= 0:
            raise InvalidParameterError("design_tol must be positive")
        if self.design_max_iterations < 1:
            raise InvalidParameterError("design_max_iterations must be >= 1")
        if self.certify_samples < 1:
            raise InvalidParameterError("certify_samples must be >= 1")
        if self.x0 is not None and len(self.x0) != N_X:
            raise InvalidParameterError(f"x0 must supply {N_X} entries")
        # Instantiating the plant validates its parameters too.
        self.plant_params()
        return self

    @staticmethod
    def _check_weight(name: str, scale: float, matrix) -> None:
        if matrix is None:
            if scale <= 0:
                raise InvalidParameterError(f"{name}_scale must be positive")
            return
        M = np.asarray(matrix, dtype=float)
        if M.shape != (N_PHI, N_PHI):
            raise InvalidParameterError(f"{name}_matrix must be {N_PHI}x{N_PHI}")
        if np.abs(M - M.T).max() > 1e-12 * max(1.0, np.abs(M).max()):
            raise InvalidParameterError(f"{name}_matrix must be symmetric")
        if np.linalg.eigvalsh(M)[0] <= 0:
            raise InvalidParameterError(f"{name}_matrix must be positive definite")

    # -- JSON round-trip ----------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidParameterError(f"unknown configuration keys: {unknown}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidParameterError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidParameterError(f"configuration root in {path} must be an object")
        return cls.from_dict(data)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    # -- derived objects ----------------------------------------------------

    def plant_params(self) -> BenchmarkPlantParams:
        params = BenchmarkPlantParams(**self.plant)
        if self.set_friction_from_gamma_w:
            params = friction_for_energy(
                params, self.gamma_w, self.horizon, ts_scaled=self.ts_scaled_energy
            )
        return params

    def true_theta(self) -> np.ndarray:
        from .plant import model_to_theta

        return model_to_theta(discretize_benchmark(self.plant_params()))

    def frequency_grid(self) -> FrequencyGrid:
        if self.frequency_multiples is not None:
            multiples = np.asarray(self.frequency_multiples)
            return FrequencyGrid(multiples=multiples, T=self.horizon)
        return FrequencyGrid.equally_spaced(self.lines, self.horizon)

    def D_des(self) -> np.ndarray:
        if self.D_des_matrix is not None:
            return np.asarray(self.D_des_matrix, dtype=float)
        return self.D_des_scale * np.eye(N_PHI)

    def D0(self) -> np.ndarray:
        if self.D0_matrix is not None:
            return np.asarray(self.D0_matrix, dtype=float)
        return self.D0_scale * np.eye(N_PHI)

    def prior_center(self) -> np.ndarray:
        """Initial parameter estimate per the configured recipe.

        boundary-offset places the estimate so the true parameters sit
        exactly on the prior boundary, offset along the parameter vector
        itself; boundary-random offsets in a seeded random direction of the
        same prior-norm length; explicit takes the listed values.
        """
        theta_tr = self.true_theta()
        W = np.kron(self.D0(), np.eye(N_X))
        if self.theta0_recipe == "explicit":
            return np.asarray(self.theta0, dtype=float)
        if self.theta0_recipe == "boundary-offset":
            t = 1.0 / float(np.sqrt(theta_tr @ W @ theta_tr))
            return (1.0 + t) * theta_tr
        rng = np.random.Generator(np.random.Philox(self.seed))
        d = rng.standard_normal(theta_tr.size)
        d /= float(np.sqrt(d @ W @ d))
        return theta_tr + d
