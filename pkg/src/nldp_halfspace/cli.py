"""Command-line entry point ``nldp-halfspace``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .core import PrivacyParams
from .dataset_io import read_dataset, write_dataset
from .errors import NLDPError
from .harness import (ExperimentConfig, audit_unbiasedness, generate_data, logistic_rho, monte_carlo_error, read_hypothesis,
                      run, sweep, sweep_csv, tomllib, write_hypothesis, _mixture_task,
                      _realizable_task)
from .ldp_client import HINGE, LOGISTIC, ReportBatch, encode_dataset, read_reports, write_reports
from .ldp_server import OptimizationTrace, hinge_nldp_train, logistic_nldp_train, reuse_copy_schedule
from .poly_approx import bernstein_build, chebyshev_build, inspect_csv
from .rng import derive_seed

HINGE_PIPELINES = ("massart", "hinge_private", "lhmn")


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config)
    if args.seed is not None:
        config = ExperimentConfig.from_dict({**config.to_dict(), "seed": args.seed})
    if args.out is not None:
        config.out = args.out
    return config


def _out_dir(config: ExperimentConfig, args) -> Path:
    out = Path(args.out or config.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _mechanism(config: ExperimentConfig, override: Optional[str]) -> str:
    if override:
        return override
    return HINGE if config.pipeline in HINGE_PIPELINES else LOGISTIC


def _task(config: ExperimentConfig):
    if config.pipeline in ("selftrain", "logistic_private"):
        return _mixture_task(config)
    return _realizable_task(config)


# ------------------------------------------------------------------ commands

def cmd_generate(args) -> int:
    config = _load_config(args)
    out = _out_dir(config, args)
    for name, data in generate_data(config).items():
        write_dataset(data, out / f"{name}.ds")
        print(f"{name}: {len(data)} examples -> {out / (name + '.ds')}")
    return 0


def cmd_encode(args) -> int:
    config = _load_config(args)
    out = _out_dir(config, args)
    data = read_dataset(args.data)
    mech = _mechanism(config, args.mechanism)
    p = config["encode"]["p"]
    seed = derive_seed(config.seed, "encode")
    if mech == HINGE:
        data = data.normalized()
    batch = encode_dataset(data, mech, config.privacy, p, seed)
    path = out / "reports.jsonl"
    count = write_reports(path, batch)
    print(f"{count} {mech} reports -> {path}")
    return 0


def cmd_train_private(args) -> int:
    config = _load_config(args)
    out = _out_dir(config, args)
    reports = ReportBatch.from_reports(read_reports(args.reports))
    p = reports.p
    opt = config.optimizer()
    trace = OptimizationTrace()
    if reports.kind == HINGE:
        R = args.radius or config.marginal().radius
        approx = bernstein_build(config["committee"]["smoothing"] or 1.0 / (128.0 * R), R, p)
        w = hinge_nldp_train(reports, config.privacy, approx, opt, trace).w
    else:
        R = args.radius or _task(config).radius
        rho = logistic_rho(config)
        w = logistic_nldp_train(reports, config.privacy, chebyshev_build(R, rho, p), opt, rho, trace).w
    write_hypothesis(out / "hypothesis.json", w, {"kind": reports.kind, "p": p, "users": len(reports),
                                                  "clip_events": trace.clip_events})
    (out / "training_log.csv").write_text(trace.to_csv(), encoding="utf-8")
    print(json.dumps({"w": [float(v) for v in w], "clip_events": trace.clip_events}))
    return 0


def _finish_run(config: ExperimentConfig, args, pipeline: str) -> int:
    if config.pipeline != pipeline:
        config = ExperimentConfig.from_dict({**config.to_dict(), "pipeline": pipeline})
    out = _out_dir(config, args)
    config.out = str(out)
    artifacts = run(config)
    if "lhmn" in artifacts.extras:
        (out / "learning_log.csv").write_text(artifacts.extras["lhmn"].learning_log_csv(args.log_every),
                                              encoding="utf-8")
    if "trajectory" in artifacts.extras:
        artifacts.extras["trajectory"].write_jsonl(out / "trajectory.jsonl")
    report = artifacts.report
    print(f"final error: {report.final_error}")
    if report.intermediate_error is not None:
        print(f"{report.intermediate_label} error: {report.intermediate_error}")
    print(f"report hash: {report.hash}")
    return 0


def cmd_train_massart(args) -> int:
    config = _load_config(args)
    if args.k is not None:
        config = config.with_value("committee", "k", args.k)
    if args.p is not None:
        config = config.with_value("encode", "p", args.p)
    return _finish_run(config, args, "massart")


def cmd_train_selftrain(args) -> int:
    return _finish_run(_load_config(args), args, "selftrain")


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    w = read_hypothesis(args.hypothesis)
    est = monte_carlo_error(w, _task(config), args.trials or config.trials,
                            derive_seed(config.seed, "evaluate"))
    print(json.dumps({"schema": 1, **est.to_dict()}))
    return 0


def cmd_audit(args) -> int:
    config = ExperimentConfig.load(args.config)
    raw = _raw_section(args.config, "audit")
    mech = raw.get("mechanism", HINGE)
    p = int(raw.get("p", 4 if mech == HINGE else 6))
    schedule = reuse_copy_schedule(p, mech) if raw.get("reuse_copy", False) else None
    params = PrivacyParams(float(raw.get("epsilon", config.privacy.epsilon)),
                           float(raw.get("delta", config.privacy.delta)))
    report = audit_unbiasedness(mech, np.asarray(raw["w"], dtype=float), np.asarray(raw["x"], dtype=float),
                                float(raw.get("y", 1.0)), p, params, int(raw.get("trials", 1_000_000)),
                                args.seed if args.seed is not None else config.seed,
                                beta=float(raw.get("beta", 0.25)), R=float(raw.get("R", 1.0)),
                                rho=float(raw.get("rho", 2.0)), schedule=schedule)
    text = json.dumps(report.to_dict(), indent=2)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "audit.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0 if report.passed else 1


def cmd_sweep(args) -> int:
    config = _load_config(args)
    raw = _raw_section(args.config, "sweep")
    rows = sweep(config, raw.get("axis", args.axis), raw.get("grid", []), int(raw.get("trials", 1)))
    text = sweep_csv(rows)
    out = _out_dir(config, args)
    (out / "sweep.csv").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_poly_inspect(args) -> int:
    degrees = [int(v) for v in args.degrees.split(",")] if args.degrees else [16, 32, 64, 128, 256]
    text = inspect_csv(args.beta, args.R, args.rho, args.p, degrees)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    return 0


def _raw_section(path, name: str) -> dict:
    return tomllib.loads(Path(path).read_text(encoding="utf-8")).get(name, {})


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nldp-halfspace",
                                     description="Private halfspace learning with public unlabeled data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="TOML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default=None, help="output directory")
        return p

    p = common(sub.add_parser("generate", help="sample private/public/evaluation datasets"))
    p.set_defaults(func=cmd_generate)

    p = common(sub.add_parser("encode", help="privatize a dataset into a report stream"))
    p.add_argument("--data", required=True, help="NLDP-DS dataset file")
    p.add_argument("--mechanism", choices=(HINGE, LOGISTIC), default=None)
    p.set_defaults(func=cmd_encode)

    p = common(sub.add_parser("train-private", help="train from a report stream"))
    p.add_argument("--reports", required=True, help="JSON Lines report file")
    p.add_argument("--radius", type=float, default=None, help="data radius R used for encoding")
    p.set_defaults(func=cmd_train_private)

    p = common(sub.add_parser("train-massart", help="committee + public labeling + LHMN"))
    p.add_argument("--k", type=int, default=None, help="committee size (odd); default from beta")
    p.add_argument("--p", type=int, default=None, help="polynomial degree")
    p.add_argument("--log-every", type=int, default=100, help="learning-log stride")
    p.set_defaults(func=cmd_train_massart)

    p = common(sub.add_parser("train-selftrain", help="private pseudo-labeler + self-training"))
    p.add_argument("--log-every", type=int, default=100)
    p.set_defaults(func=cmd_train_selftrain)

    p = common(sub.add_parser("evaluate", help="Monte-Carlo error of a hypothesis"))
    p.add_argument("--hypothesis", required=True)
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = common(sub.add_parser("audit", help="unbiasedness audit of a gradient estimator"))
    p.set_defaults(func=cmd_audit)

    p = common(sub.add_parser("sweep", help="sample-complexity sweep"))
    p.add_argument("--axis", default="m", help="n, m, epsilon, d or mu_norm (config [sweep] wins)")
    p.set_defaults(func=cmd_sweep)

    poly = sub.add_parser("poly", help="polynomial approximation tools")
    poly_sub = poly.add_subparsers(dest="poly_command", required=True)
    p = poly_sub.add_parser("inspect", help="coefficients and sup-grid error tables as CSV")
    p.add_argument("--beta", type=float, default=0.25)
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=2.0)
    p.add_argument("--p", type=int, default=16)
    p.add_argument("--degrees", default=None, help="comma-separated degrees for the error tables")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_poly_inspect)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NLDPError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
