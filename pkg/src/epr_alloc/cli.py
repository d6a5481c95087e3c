"""``epr-alloc`` command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 config error,
3 infeasible instance, 4 simulation quality gate.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .allocation import InfeasibleError
from .config import ConfigError, dump_json, load_config, report_header, trials_csv
from .montecarlo import prepare, run_experiment
from .risk import ConvergenceError
from .verify import CHECKS, FAULTS, run_checks

log = logging.getLogger("epr_alloc")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_QUALITY = 0, 1, 2, 3, 4


def _setup_logging():
    level = os.environ.get("EPR_ALLOC_LOG", "warn").upper()
    level = {"WARN": "WARNING"}.get(level, level)
    if level not in ("ERROR", "WARNING", "INFO", "DEBUG"):
        level = "WARNING"
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _eigen_block(setup) -> dict:
    return {
        "eigenvalues": [float(v) for v in setup.eigs.lambdas],
        "eigenvectors": [[float(x) for x in col] for col in setup.eigs.vectors.T],
    }


def cmd_allocate(args) -> int:
    cfg = load_config(args.config)
    exp = cfg.experiment_config()
    setup = prepare(exp)
    doc = report_header("allocate", cfg.effective())
    doc.update(_eigen_block(setup))
    doc.update({
        "theta_star": [float(v) for v in setup.opt.theta],
        "plan": setup.plan.to_dict(),
        "statistic_matrices": [[[float(x) for x in col] for col in f.columns.T]
                               for f in setup.matrices],
        "predicted_epr": setup.predicted_epr,
        "baseline_epr": setup.baseline_epr,
    })
    _emit(dump_json(doc), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    exp = cfg.experiment_config(args.trials, args.seed)
    report = run_experiment(exp, threads=args.threads)
    csv_path = Path(args.out or args.config).with_suffix(".trials.csv")
    doc = report_header("simulate", cfg.effective(args.trials, args.seed))
    doc.update(report.to_dict())
    doc["trials_csv"] = csv_path.name
    csv_path.write_text(trials_csv(report))
    _emit(dump_json(doc), args.out)
    if not report.quality_ok:
        log.error("%d of %d trials flagged; quality gate exceeded",
                  report.n_flagged, len(report.records))
        return EXIT_QUALITY
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_checks(args.max_k, args.max_m, args.max_alphabet, args.instances,
                         fault=args.inject_fault)
    width = max(len(name) for name in CHECKS)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    failed = [name for name, ok, _ in results if not ok]
    if failed:
        print("failed: " + ", ".join(failed))
        return EXIT_VERIFY
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epr-alloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("allocate", help="compute the optimal statistic allocation")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("simulate", help="Monte-Carlo check of the predicted EPR")
    p.add_argument("--config", required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the oracle-equivalence checks")
    p.add_argument("--max-k", type=int, default=4)
    p.add_argument("--max-m", type=int, default=2)
    p.add_argument("--max-alphabet", type=int, default=8)
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--inject-fault", choices=FAULTS, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "trials", None) is not None and args.trials < 1:
        print("error: --trials: expected a positive integer", file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        print("error: --seed: expected an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleError, ConvergenceError) as exc:
        print(f"infeasible instance: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
