"""Parameter studies: how design energy and accuracy respond to the knobs.

Each study sweeps one configuration axis over several seeded trials, writes
a tidy CSV (one row per trial, metadata header line with the config hash
and seeds), a summary JSON and a single SVG figure into the output
directory, and returns the collected rows.  Outputs are deterministic for
a given (study, trials, seed): figures use a fixed SVG hash salt and no
embedded dates, and floats are written with full round-trip precision.
"""

import csv
import dataclasses
import io
import statistics
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .config import ExperimentConfig
from .design import iterate_design
from .errors import InvalidParameterError
from .pipeline import _fmt, _write_json, rebuild_problem, run_pipeline
from .plant import simulate_nonlinear_benchmark
from .setmem import build_regressors, nonfalsified_set, posterior_error_certificate
from .spectral import ExplorationInputSpec

matplotlib.rcParams["svg.hashsalt"] = "texplore"

GAMMA_W_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
D0_GRID = (1e4, 1e5, 1e6)
DDES_GRID = (1e-2, 1e-1, 1.0, 10.0)

STUDY_SCHEMA = 1


@dataclass
class StudyResult:
    name: str
    rows: list
    summary: dict
    files: list

    @property
    def ok(self) -> bool:
        return bool(self.summary.get("ok", False))


def _study_base(base: ExperimentConfig | None) -> ExperimentConfig:
    """Default study configuration: moderate prior, randomized center."""
    if base is not None:
        return base
    return dataclasses.replace(
        ExperimentConfig(), D0_scale=1e5, theta0_recipe="boundary-random"
    )


def _write_rows(path: Path, meta: dict, fieldnames, rows) -> None:
    buf = io.StringIO()
    buf.write("# " + " ".join(f"{k}={v}" for k, v in sorted(meta.items())) + "\n")
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(
            {k: _fmt(v) if isinstance(v, float) else v for k, v in row.items()}
        )
    path.write_text(buf.getvalue())


def _save_fig(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _design_for(config: ExperimentConfig):
    problem, _ = rebuild_problem(config)
    return iterate_design(
        problem, tol=config.design_tol, max_iterations=config.design_max_iterations
    )


def error_bound_pair(config: ExperimentConfig):
    """Run targeted and equal-energy uniform exploration; compare ‖G·P‖.

    The naive baseline spreads the targeted design's spectral energy
    uniformly over all lines and channels.  Both inputs are played against
    the nonlinear plant and identified with the same disturbance budget;
    the returned pair of posterior error bounds measures how much the
    targeted allocation buys at equal input energy.
    """
    problem, ctx = rebuild_problem(config)
    design = iterate_design(
        problem, tol=config.design_tol, max_iterations=config.design_max_iterations
    )
    L, n_u = design.spec.amplitudes.shape
    level = float(np.sqrt(design.spec.total_energy() / (L * n_u)))
    uniform = ExplorationInputSpec(problem.grid, np.full((L, n_u), level))

    bounds = {}
    for label, spec in (("targeted", design.spec), ("naive", uniform)):
        traj = simulate_nonlinear_benchmark(ctx["params"], spec.realize())
        reg = build_regressors(traj)
        ell = nonfalsified_set(reg, config.gamma_w)
        bounds[label] = float(posterior_error_certificate(ell))
    return design, bounds["targeted"], bounds["naive"]


# ---------------------------------------------------------------------------
# individual studies


def study_energy_vs_gammaw(out_dir, trials, seed, base=None) -> StudyResult:
    """Design energy as the disturbance energy budget grows."""
    base = _study_base(base)
    rows = []
    for gw in GAMMA_W_GRID:
        for t in range(trials):
            cfg = dataclasses.replace(base, gamma_w=gw, seed=seed + t).validate()
            design = _design_for(cfg)
            rows.append(
                {
                    "gamma_w": float(gw),
                    "seed": seed + t,
                    "gamma_e": float(design.gamma_e),
                    "gamma_e_sq": float(design.gamma_e**2),
                    "converged": design.converged,
                }
            )
    medians = {
        gw: statistics.median(r["gamma_e_sq"] for r in rows if r["gamma_w"] == gw)
        for gw in GAMMA_W_GRID
    }
    logs = np.log10(np.array(list(medians.keys())))
    vals = np.log10(np.array(list(medians.values())))
    slope = float(np.polyfit(logs, vals, 1)[0])
    all_converged = all(r["converged"] for r in rows)
    summary = {
        "median_gamma_e_sq": {repr(float(k)): v for k, v in medians.items()},
        "loglog_slope": slope,
        "all_converged": all_converged,
        "ok": all_converged and 0.7 <= slope <= 1.3,
    }

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(
        [r["gamma_w"] for r in rows], [r["gamma_e_sq"] for r in rows], "k.", alpha=0.4
    )
    ax.loglog(list(medians.keys()), list(medians.values()), "o-", color="tab:blue")
    ax.set_xlabel("disturbance energy budget")
    ax.set_ylabel("squared design energy")
    ax.set_title(f"energy vs disturbance budget (slope {slope:.2f})")
    fig.tight_layout()
    return _finish("energy-vs-gammaw", out_dir, rows, summary, fig, base, trials, seed)


def study_posterior_vs_d0(out_dir, trials, seed, base=None) -> StudyResult:
    """Accuracy-norm margin of full runs across prior tightness levels."""
    base = _study_base(base)
    base = dataclasses.replace(base, deviation_cap="envelope")
    rows = []
    for d0 in D0_GRID:
        for t in range(trials):
            cfg = dataclasses.replace(base, D0_scale=d0, seed=seed + t).validate()
            report = run_pipeline(cfg)
            rows.append(
                {
                    "D0_scale": float(d0),
                    "seed": seed + t,
                    "gamma_e": report.gamma_e,
                    "accuracy": report.accuracy,
                    "contains_truth": report.contains_truth,
                    "certified": report.certified,
                    "guarantees_ok": report.guarantees_ok,
                }
            )
    all_ok = all(r["guarantees_ok"] for r in rows)
    summary = {
        "max_accuracy": {
            repr(float(d0)): max(r["accuracy"] for r in rows if r["D0_scale"] == d0)
            for d0 in D0_GRID
        },
        "all_guarantees_ok": all_ok,
        "ok": all_ok,
    }

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogx(
        [r["D0_scale"] for r in rows], [r["accuracy"] for r in rows], "k.", alpha=0.6
    )
    ax.axhline(1.0, color="tab:red", linestyle="--", label="guarantee level")
    ax.set_xlabel("prior weight scale")
    ax.set_ylabel("posterior accuracy norm")
    ax.set_title("accuracy margin vs prior tightness")
    ax.legend()
    fig.tight_layout()
    return _finish("posterior-vs-D0", out_dir, rows, summary, fig, base, trials, seed)


def study_targeted_vs_naive(out_dir, trials, seed, base=None) -> StudyResult:
    """Posterior error bound of targeted vs equal-energy uniform inputs."""
    base = _study_base(base)
    rows = []
    for t in range(trials):
        cfg = dataclasses.replace(base, seed=seed + t).validate()
        design, bound_t, bound_n = error_bound_pair(cfg)
        rows.append(
            {
                "seed": seed + t,
                "gamma_e": float(design.gamma_e),
                "error_bound_targeted": bound_t,
                "error_bound_naive": bound_n,
                "ratio": bound_t / bound_n,
            }
        )
    ratios = [r["ratio"] for r in rows]
    never_worse = all(
        r["error_bound_targeted"] <= r["error_bound_naive"] for r in rows
    )
    summary = {
        "median_ratio": statistics.median(ratios),
        "max_ratio": max(ratios),
        "targeted_never_worse": never_worse,
        "ok": never_worse,
    }

    fig, ax = plt.subplots(figsize=(5, 4))
    naive_b = [r["error_bound_naive"] for r in rows]
    targ_b = [r["error_bound_targeted"] for r in rows]
    lim = max(naive_b + targ_b) * 1.05
    ax.plot([0, lim], [0, lim], "--", color="0.6", label="equal bound")
    ax.plot(naive_b, targ_b, "o", color="tab:blue")
    ax.set_xlabel("uniform-input error bound")
    ax.set_ylabel("targeted-input error bound")
    ax.set_title("error bound at equal input energy")
    ax.legend()
    fig.tight_layout()
    return _finish(
        "targeted-vs-naive", out_dir, rows, summary, fig, base, trials, seed
    )


def study_sensitivity_theta0(out_dir, trials, seed, base=None) -> StudyResult:
    """Full-run outcomes as the prior center direction is randomized."""
    base = _study_base(base)
    base = dataclasses.replace(base, theta0_recipe="boundary-random")
    rows = []
    for t in range(trials):
        cfg = dataclasses.replace(base, seed=seed + t).validate()
        report = run_pipeline(cfg)
        rows.append(
            {
                "seed": seed + t,
                "gamma_e": report.gamma_e,
                "accuracy": report.accuracy,
                "theta_error": report.theta_error,
                "contains_truth": report.contains_truth,
                "converged": report.converged,
            }
        )
    energies = [r["gamma_e"] for r in rows]
    quartiles = statistics.quantiles(energies, n=4) if len(energies) >= 2 else []
    all_accurate = all(r["accuracy"] <= 1.0 + 1e-9 for r in rows)
    summary = {
        "gamma_e_min": min(energies),
        "gamma_e_median": statistics.median(energies),
        "gamma_e_max": max(energies),
        "gamma_e_quartiles": quartiles,
        "all_accurate": all_accurate,
        "ok": all_accurate and all(r["converged"] for r in rows),
    }

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot([r["seed"] for r in rows], energies, "o", color="tab:blue")
    ax.set_xlabel("seed")
    ax.set_ylabel("design energy")
    ax.set_title("energy sensitivity to the prior center draw")
    fig.tight_layout()
    return _finish(
        "sensitivity-theta0", out_dir, rows, summary, fig, base, trials, seed
    )


def study_energy_vs_ddes(out_dir, trials, seed, base=None) -> StudyResult:
    """Design energy as the requested accuracy weight tightens."""
    base = _study_base(base)
    rows = []
    for scale in DDES_GRID:
        for t in range(trials):
            cfg = dataclasses.replace(base, D_des_scale=scale, seed=seed + t).validate()
            design = _design_for(cfg)
            rows.append(
                {
                    "D_des_scale": float(scale),
                    "seed": seed + t,
                    "gamma_e": float(design.gamma_e),
                    "gamma_e_sq": float(design.gamma_e**2),
                    "converged": design.converged,
                }
            )
    medians = {
        scale: statistics.median(
            r["gamma_e_sq"] for r in rows if r["D_des_scale"] == scale
        )
        for scale in DDES_GRID
    }
    med_list = list(medians.values())
    increasing = all(a < b for a, b in zip(med_list, med_list[1:]))
    summary = {
        "median_gamma_e_sq": {repr(float(k)): v for k, v in medians.items()},
        "strictly_increasing": increasing,
        "ok": increasing and all(r["converged"] for r in rows),
    }

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(
        [r["D_des_scale"] for r in rows], [r["gamma_e_sq"] for r in rows],
        "k.", alpha=0.4,
    )
    ax.loglog(list(medians.keys()), med_list, "o-", color="tab:blue")
    ax.set_xlabel("accuracy weight scale")
    ax.set_ylabel("squared design energy")
    ax.set_title("energy vs requested accuracy")
    fig.tight_layout()
    return _finish("energy-vs-Ddes", out_dir, rows, summary, fig, base, trials, seed)


def _finish(name, out_dir, rows, summary, fig, base, trials, seed) -> StudyResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "schema": STUDY_SCHEMA,
        "study": name,
        "config": base.config_hash(),
        "seed": seed,
        "trials": trials,
    }
    csv_path = out / f"{name}.csv"
    svg_path = out / f"{name}.svg"
    json_path = out / f"{name}-summary.json"
    _write_rows(csv_path, meta, list(rows[0].keys()), rows)
    _save_fig(fig, svg_path)
    _write_json(json_path, {**meta, **summary})
    return StudyResult(
        name=name,
        rows=rows,
        summary={**meta, **summary},
        files=[str(csv_path), str(svg_path), str(json_path)],
    )


STUDIES = {
    "energy-vs-gammaw": study_energy_vs_gammaw,
    "posterior-vs-D0": study_posterior_vs_d0,
    "targeted-vs-naive": study_targeted_vs_naive,
    "sensitivity-theta0": study_sensitivity_theta0,
    "energy-vs-Ddes": study_energy_vs_ddes,
}


def run_study(
    name: str,
    out_dir,
    trials: int = 10,
    seed: int = 0,
    base: ExperimentConfig | None = None,
) -> StudyResult:
    if name not in STUDIES:
        known = ", ".join(sorted(STUDIES))
        raise InvalidParameterError(f"unknown study {name!r}; known studies: {known}")
    if trials < 1:
        raise InvalidParameterError("trials must be at least 1")
    return STUDIES[name](out_dir, trials, seed, base)
