"""End-to-end experiment pipeline: design, simulate, identify, verify.

Runs the full loop on the two-mass benchmark: build the prior set, compute
uncertainty caps, solve the exploration design, certify it, play the input
against the nonlinear plant, run set-membership identification on the
recorded data, and check that the promised accuracy actually holds.

Every stage failure is wrapped in a StageError naming the stage, so a CLI
caller can report where a run died without a traceback scavenger hunt.
"""

import csv
import dataclasses
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bounds import ScenarioConfig
from .config import ExperimentConfig
from .design import (
    ExplorationDesign,
    ExplorationProblem,
    build_exploration_problem,
    certify_design,
    iterate_design,
)
from .errors import FalsifiedPriorError, InvalidParameterError, StageError
from .plant import (
    LinearModel,
    Trajectory,
    discretize_benchmark,
    disturbance_energy,
    model_from_theta,
    model_to_theta,
    simulate_nonlinear_benchmark,
)
from .setmem import (
    ParameterEllipsoid,
    ParameterEstimate,
    accuracy_norm,
    build_regressors,
    check_data_condition,
    contains,
    least_squares,
    nonfalsified_set,
    posterior_error_certificate,
)
from .spectral import empirical_excitation_check

ENERGY_SLACK = 1e-9
ACCURACY_SLACK = 1e-9

TRAJECTORY_SCHEMA = 1


@dataclass
class RunReport:
    """Everything a single pipeline run produced, scalars first.

    The heavyweight objects (design, trajectory, ...) ride along for
    programmatic callers but are left out of the serialized dict.
    """

    config: dict
    config_hash: str
    seed: int
    stages_run: list = field(default_factory=list)

    gamma_w: float = 0.0
    gamma_e: float | None = None
    spectral_energy: float | None = None
    input_energy: float | None = None
    converged: bool | None = None
    iterations: int | None = None
    factored: bool | None = None
    design_residuals: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)

    certified: bool | None = None
    certification: dict | None = None

    disturbance_energy: float | None = None
    disturbance_energy_ok: bool | None = None

    radius: float | None = None
    accuracy: float | None = None
    accuracy_ok: bool | None = None
    contains_truth: bool | None = None
    data_condition_ok: bool | None = None
    excitation_ok: bool | None = None
    theta_error: float | None = None
    posterior_certificate: float | None = None

    design: ExplorationDesign | None = field(default=None, repr=False, compare=False)
    trajectory: Trajectory | None = field(default=None, repr=False, compare=False)
    problem: ExplorationProblem | None = field(default=None, repr=False, compare=False)
    estimate: ParameterEstimate | None = field(default=None, repr=False, compare=False)
    posterior: ParameterEllipsoid | None = field(default=None, repr=False, compare=False)
    model_true: LinearModel | None = field(default=None, repr=False, compare=False)

    @property
    def guarantees_ok(self) -> bool:
        """True when every checked guarantee held.

        For a design-only run this means the iteration converged and the
        certification passed.  For a full run the simulated disturbance
        energy, the accuracy norm, truth membership and the data condition
        must hold as well.  The empirical excitation check is diagnostic
        (it compares against idealized frequency content) and does not
        gate the verdict.
        """
        checks = [self.converged, self.certified]
        if "verify" in self.stages_run:
            checks += [
                self.disturbance_energy_ok,
                self.accuracy_ok,
                self.contains_truth,
                self.data_condition_ok,
            ]
        return all(c is True for c in checks)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if not f.compare:
                continue
            out[f.name] = getattr(self, f.name)
        out["guarantees_ok"] = self.guarantees_ok
        return _jsonable(out)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def rebuild_problem(config: ExperimentConfig):
    """Deterministically reconstruct the design problem from a config.

    Returns (problem, context) where context carries the true model and
    related objects the later stages need.  Used both by run_pipeline and
    by the CLI when re-certifying a saved design.
    """
    config.validate()
    params = _stage("plant", config.plant_params)
    model_true = _stage("plant", discretize_benchmark, params)
    theta_tr = model_to_theta(model_true)

    def make_prior():
        theta0 = config.prior_center()
        shape = np.kron(config.D0(), np.eye(model_true.n_x))
        prior = ParameterEllipsoid(center=theta0, shape=shape, radius=1.0)
        if not contains(prior, theta_tr):
            raise FalsifiedPriorError(
                "the true parameters lie outside the configured prior set; "
                "identification guarantees would be vacuous"
            )
        return theta0, prior

    theta0, prior = _stage("prior", make_prior)
    grid = _stage("grid", config.frequency_grid)

    def make_problem():
        nominal = model_from_theta(theta0, model_true.n_x, model_true.n_u)
        scenario = ScenarioConfig(
            sample_count=config.scenario_samples,
            confidence=config.scenario_confidence,
            inflation=config.scenario_inflation,
            seed=config.seed,
        )
        return build_exploration_problem(
            nominal,
            prior,
            grid,
            config.epsilon,
            config.gamma_w,
            config.D_des(),
            scenario=scenario,
            deviation_cap=config.deviation_cap,
        )

    problem = _stage("problem", make_problem)
    context = {
        "params": params,
        "model_true": model_true,
        "theta_tr": theta_tr,
        "theta0": theta0,
        "prior": prior,
        "grid": grid,
    }
    return problem, context


def run_pipeline(
    config: ExperimentConfig,
    out_dir=None,
    stages: str = "full",
) -> RunReport:
    """Run the experiment pipeline and optionally write artifacts.

    stages="design" stops after design + certification (used by the
    parameter studies, which never need the simulation half); "full" runs
    simulation, identification and verification as well.
    """
    if stages not in ("full", "design"):
        raise InvalidParameterError(f"unknown stages selector {stages!r}")
    problem, ctx = rebuild_problem(config)
    report = RunReport(
        config=config.to_dict(),
        config_hash=config.config_hash(),
        seed=config.seed,
        gamma_w=config.gamma_w,
        problem=problem,
        model_true=ctx["model_true"],
    )
    report.stages_run += ["plant", "prior", "grid", "problem"]
    report.bounds = problem.bounds.norms_record()

    design = _stage(
        "design",
        iterate_design,
        problem,
        tol=config.design_tol,
        max_iterations=config.design_max_iterations,
    )
    report.stages_run.append("design")
    report.design = design
    report.gamma_e = float(design.gamma_e)
    report.spectral_energy = float(design.spec.total_energy())
    report.converged = bool(design.converged)
    report.iterations = int(design.iterations)
    report.factored = bool(design.factored)
    report.design_residuals = {k: float(v) for k, v in design.residuals.items()}

    cert = _stage("certify", certify_design, design, samples=config.certify_samples, seed=config.seed)
    report.stages_run.append("certify")
    report.certified = bool(cert.certified)
    report.certification = cert.to_record()

    if stages == "design":
        if out_dir is not None:
            write_outputs(report, out_dir)
        return report

    def simulate():
        inputs = design.spec.realize()
        x0 = None if config.x0 is None else np.asarray(config.x0, dtype=float)
        return simulate_nonlinear_benchmark(ctx["params"], inputs, x0=x0)

    traj = _stage("simulate", simulate)
    report.stages_run.append("simulate")
    report.trajectory = traj
    report.input_energy = float(np.sum(traj.inputs**2))
    w_energy = float(disturbance_energy(traj))
    report.disturbance_energy = w_energy
    report.disturbance_energy_ok = bool(
        w_energy <= config.gamma_w * (1.0 + ENERGY_SLACK) + 1e-15
    )

    def identify():
        reg = build_regressors(traj)
        est = least_squares(reg)
        ell = nonfalsified_set(reg, config.gamma_w)
        return reg, est, ell

    reg, est, ell = _stage("identify", identify)
    report.stages_run.append("identify")
    report.estimate = est
    report.posterior = ell
    report.radius = float(ell.radius)

    def verify():
        acc = accuracy_norm(reg, config.gamma_w, config.D_des())
        report.accuracy = float(acc)
        report.accuracy_ok = bool(acc <= 1.0 + ACCURACY_SLACK)
        report.contains_truth = bool(contains(ell, ctx["theta_tr"]))
        report.data_condition_ok = bool(
            check_data_condition(reg, config.gamma_w, config.D_des())
        )
        report.excitation_ok = bool(
            empirical_excitation_check(
                traj,
                ctx["grid"],
                config.epsilon,
                problem.bounds.W_phi_bar,
                ctx["model_true"],
            )
        )
        report.theta_error = float(np.linalg.norm(est.theta_hat - ctx["theta_tr"]))
        report.posterior_certificate = float(posterior_error_certificate(ell))

    _stage("verify", verify)
    report.stages_run.append("verify")

    if out_dir is not None:
        write_outputs(report, out_dir)
    return report


# ---------------------------------------------------------------------------
# artifact writers


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_outputs(report: RunReport, out_dir) -> list[Path]:
    """Write config/report/design/trajectory files into out_dir.

    Returns the paths written, in writing order.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "config.json", out / "report.json"]
    _write_json(written[0], report.config)
    _write_json(written[1], report.to_dict())
    design = report.design
    if design is not None:
        _write_json(out / "design.json", design_record(design))
        save_design_npz(design, out / "design.npz")
        written += [out / "design.json", out / "design.npz"]
    if report.trajectory is not None:
        meta = {"config": report.config_hash, "seed": report.seed}
        trajectory_to_csv(report.trajectory, out / "trajectory.csv", meta)
        written.append(out / "trajectory.csv")
    return written


def design_record(design: ExplorationDesign) -> dict:
    rec = design.summary()
    rec["frequency_multiples"] = [int(m) for m in design.spec.grid.multiples]
    rec["horizon"] = int(design.spec.grid.T)
    rec["amplitudes"] = design.spec.amplitudes.tolist()
    rec["taus"] = design.taus.tolist()
    rec["residuals"] = {k: float(v) for k, v in design.residuals.items()}
    return _jsonable(rec)


def save_design_npz(design: ExplorationDesign, path) -> None:
    np.savez(
        path,
        multiples=np.asarray(design.spec.grid.multiples, dtype=int),
        horizon=np.asarray(design.spec.grid.T, dtype=int),
        amplitudes=design.spec.amplitudes,
        proxy_amplitudes=design.proxy_amplitudes,
        taus=design.taus,
        D1=design.D1,
        D2=design.D2,
        Z_hat=design.Z_hat,
        gamma_e=np.asarray(design.gamma_e, dtype=float),
        converged=np.asarray(design.converged),
        iterations=np.asarray(design.iterations, dtype=int),
        factored=np.asarray(design.factored),
    )


def design_from_npz(path, problem: ExplorationProblem) -> ExplorationDesign:
    """Rehydrate a saved design against a freshly rebuilt problem.

    The grid stored in the file must match the problem's grid; this guards
    against pairing a design file with the wrong config.
    """
    from .spectral import ExplorationInputSpec

    data = np.load(path)
    multiples = [int(m) for m in data["multiples"]]
    if list(problem.grid.multiples) != multiples or problem.grid.T != int(data["horizon"]):
        raise InvalidParameterError(
            "saved design frequency grid does not match the configuration"
        )
    spec = ExplorationInputSpec(problem.grid, np.asarray(data["amplitudes"], dtype=float))
    return ExplorationDesign(
        spec=spec,
        gamma_e=float(data["gamma_e"]),
        taus=np.asarray(data["taus"], dtype=float),
        D1=np.asarray(data["D1"], dtype=float),
        D2=np.asarray(data["D2"], dtype=float),
        Z_hat=np.asarray(data["Z_hat"]),
        proxy_amplitudes=np.asarray(data["proxy_amplitudes"], dtype=float),
        converged=bool(data["converged"]),
        iterations=int(data["iterations"]),
        history=[],
        problem=problem,
        factored=bool(data["factored"]),
        residuals={},
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def trajectory_to_csv(traj: Trajectory, path, metadata: dict | None = None) -> None:
    """Write a trajectory as CSV with a '#'-prefixed metadata first line.

    Rows k = 0..T-1 carry state, input and disturbance at step k; the final
    row carries only the terminal state (input/disturbance cells empty).
    """
    n_x = traj.states.shape[1]
    n_u = traj.inputs.shape[1]
    meta = {"schema": TRAJECTORY_SCHEMA, "T": traj.horizon, "n_x": n_x, "n_u": n_u}
    if metadata:
        meta.update(metadata)
    buf = io.StringIO()
    buf.write("# " + " ".join(f"{k}={v}" for k, v in sorted(meta.items())) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    header = (
        ["k"]
        + [f"x{i + 1}" for i in range(n_x)]
        + [f"u{i + 1}" for i in range(n_u)]
        + [f"w{i + 1}" for i in range(n_x)]
    )
    writer.writerow(header)
    for k in range(traj.horizon):
        writer.writerow(
            [k]
            + [_fmt(v) for v in traj.states[k]]
            + [_fmt(v) for v in traj.inputs[k]]
            + [_fmt(v) for v in traj.disturbances[k]]
        )
    writer.writerow(
        [traj.horizon]
        + [_fmt(v) for v in traj.states[-1]]
        + [""] * n_u
        + [""] * n_x
    )
    Path(path).write_text(buf.getvalue())


def trajectory_from_csv(path):
    """Read back a trajectory CSV; returns (Trajectory, metadata dict)."""
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise InvalidParameterError("trajectory file is missing its metadata line")
    meta = {}
    for tok in text[0].lstrip("#").split():
        key, _, val = tok.partition("=")
        meta[key] = val
    rows = list(csv.reader(text[1:]))
    header, rows = rows[0], rows[1:]
    n_x = sum(1 for name in header if name.startswith("x"))
    n_u = sum(1 for name in header if name.startswith("u"))
    T = len(rows) - 1
    states = np.empty((T + 1, n_x))
    inputs = np.empty((T, n_u))
    disturbances = np.empty((T, n_x))
    for row in rows:
        k = int(row[0])
        states[k] = [float(v) for v in row[1 : 1 + n_x]]
        if k < T:
            inputs[k] = [float(v) for v in row[1 + n_x : 1 + n_x + n_u]]
            disturbances[k] = [float(v) for v in row[1 + n_x + n_u :]]
    traj = Trajectory(states=states, inputs=inputs, disturbances=disturbances)
    return traj, meta
