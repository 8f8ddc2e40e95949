"""Command-line front end for the exploration pipeline.

Subcommands: design (solve + certify only), simulate (full pipeline),
identify (set-membership identification of a recorded trajectory),
certify (re-check a saved design), study <name> (parameter sweeps).

Exit codes: 0 when every guarantee checked by the run holds, 1 when the
run finished but a guarantee failed (including infeasible designs), 2 for
configuration or usage errors.
"""

import argparse
import dataclasses
import sys
from pathlib import Path

from .config import ExperimentConfig
from .design import certify_design
from .errors import (
    DimensionError,
    InvalidParameterError,
    OffGridFrequencyError,
    StageError,
    TexploreError,
)
from .pipeline import (
    RunReport,
    design_from_npz,
    rebuild_problem,
    run_pipeline,
    trajectory_from_csv,
    _write_json,
)
from .setmem import (
    accuracy_norm,
    build_regressors,
    check_data_condition,
    contains,
    least_squares,
    nonfalsified_set,
    posterior_error_certificate,
)
from .studies import STUDIES, run_study

CONFIG_ERRORS = (
    InvalidParameterError,
    DimensionError,
    OffGridFrequencyError,
    FileNotFoundError,
    IsADirectoryError,
)


def load_config(path, seed=None) -> ExperimentConfig:
    cfg = ExperimentConfig() if path is None else ExperimentConfig.from_json(path)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    cfg.validate()
    return cfg


def format_report(report: RunReport) -> str:
    lines = [
        "exploration run report",
        f"  config hash      : {report.config_hash}",
        f"  seed             : {report.seed}",
        f"  gamma_w          : {report.gamma_w:g}",
        f"  design energy    : {report.gamma_e:.6g} "
        f"(converged={report.converged}, iterations={report.iterations})",
        f"  certified        : {report.certified}",
    ]
    if "verify" in report.stages_run:
        lines += [
            f"  disturbance used : {report.disturbance_energy:.6g} of "
            f"{report.gamma_w:g} (ok={report.disturbance_energy_ok})",
            f"  posterior radius : {report.radius:.6g}",
            f"  accuracy norm    : {report.accuracy:.6g} (guarantee needs <= 1)",
            f"  contains truth   : {report.contains_truth}",
            f"  data condition   : {report.data_condition_ok}",
            f"  excitation check : {report.excitation_ok}",
            f"  estimate error   : {report.theta_error:.6g}",
        ]
    lines.append(f"  guarantees ok    : {report.guarantees_ok}")
    return "\n".join(lines)


def cmd_design(args) -> int:
    cfg = load_config(args.config, args.seed)
    report = run_pipeline(cfg, out_dir=args.out, stages="design")
    print(format_report(report))
    return 0 if report.guarantees_ok else 1


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.seed)
    report = run_pipeline(cfg, out_dir=args.out, stages="full")
    print(format_report(report))
    return 0 if report.guarantees_ok else 1


def cmd_identify(args) -> int:
    cfg = load_config(args.config, args.seed)
    traj, meta = trajectory_from_csv(args.trajectory)
    reg = build_regressors(traj)
    est = least_squares(reg)
    ell = nonfalsified_set(reg, cfg.gamma_w)
    acc = float(accuracy_norm(reg, cfg.gamma_w, cfg.D_des()))
    truth = cfg.true_theta()
    has_truth = bool(contains(ell, truth))
    condition_ok = bool(check_data_condition(reg, cfg.gamma_w, cfg.D_des()))
    record = {
        "trajectory_metadata": meta,
        "theta_hat": est.theta_hat.tolist(),
        "ellipsoid": ell.to_record(),
        "error_bound": float(posterior_error_certificate(ell)),
        "accuracy": acc,
        "accuracy_ok": acc <= 1.0 + 1e-9,
        "contains_truth": has_truth,
        "data_condition_ok": condition_ok,
    }
    print("identification report")
    print(f"  samples          : {traj.horizon}")
    print(f"  posterior radius : {ell.radius:.6g}")
    print(f"  error bound      : {record['error_bound']:.6g}")
    print(f"  accuracy norm    : {acc:.6g} (guarantee needs <= 1)")
    print(f"  contains truth   : {has_truth}")
    print(f"  data condition   : {condition_ok}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "identification.json", record)
    return 0 if record["accuracy_ok"] and has_truth and condition_ok else 1


def cmd_certify(args) -> int:
    cfg = load_config(args.config, args.seed)
    problem, _ = rebuild_problem(cfg)
    design = design_from_npz(args.design, problem)
    cert = certify_design(design, samples=cfg.certify_samples, seed=cfg.seed)
    print("certification report")
    print(f"  design energy    : {design.gamma_e:.6g} (converged={design.converged})")
    print(f"  samples checked  : {cert.samples_checked} "
          f"(unstable skipped: {cert.samples_unstable})")
    print(f"  worst margins    : "
          + ", ".join(f"{k}={v:.3e}" for k, v in cert.worst_margins.items()))
    print(f"  energy margin    : {cert.energy_margin:.3e}")
    print(f"  certified        : {cert.certified}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "certification.json", cert.to_record())
    return 0 if cert.certified and design.converged else 1


def cmd_study(args) -> int:
    base = None
    if args.config is not None:
        base = load_config(args.config)
    seed = args.seed if args.seed is not None else (base.seed if base else 0)
    result = run_study(args.name, args.out, trials=args.trials, seed=seed, base=base)
    print(f"study {result.name}: {len(result.rows)} trials")
    for key, value in result.summary.items():
        print(f"  {key}: {value}")
    print("  files:")
    for path in result.files:
        print(f"    {path}")
    return 0 if result.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="texplore",
        description="Design, certify and verify minimum-energy exploration inputs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="path to a JSON experiment config")
        p.add_argument("--out", help="directory for output artifacts")
        p.add_argument("--seed", type=int, help="override the config seed")

    p_design = sub.add_parser("design", help="solve and certify the exploration design")
    add_common(p_design)
    p_design.set_defaults(func=cmd_design)

    p_sim = sub.add_parser(
        "simulate", help="run the full design/simulate/identify/verify pipeline"
    )
    add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_id = sub.add_parser("identify", help="identify parameters from a trajectory CSV")
    add_common(p_id)
    p_id.add_argument("--trajectory", required=True, help="trajectory CSV path")
    p_id.set_defaults(func=cmd_identify)

    p_cert = sub.add_parser("certify", help="re-certify a saved design file")
    add_common(p_cert)
    p_cert.add_argument("--design", required=True, help="design .npz path")
    p_cert.set_defaults(func=cmd_certify)

    p_study = sub.add_parser("study", help="run a named parameter study")
    p_study.add_argument("name", choices=sorted(STUDIES), help="study name")
    add_common(p_study)
    p_study.add_argument("--trials", type=int, default=10, help="trials per sweep point")
    p_study.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "study" and args.out is None:
        parser.error("study requires --out")
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        code = 2 if isinstance(exc.cause, CONFIG_ERRORS) else 1
        print(f"error: {exc}", file=sys.stderr)
        return code
    except TexploreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
