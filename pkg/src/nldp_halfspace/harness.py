"""Experiment orchestration: configs, Monte-Carlo evaluation, audits and sweeps."""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .core import PrivacyParams, VectorLike, as_vector, predict, Dataset
from .distributions import (FAMILIES, GAUSSIAN, MarginalSpec, MassartSpec, MixtureSpec, corrupt_massart,
                            random_unit_vector, sample_mixture, sample_realizable, strip_labels)
from .errors import ConfigError, InvalidInputError
from .ldp_client import HINGE, LOGISTIC, encode_dataset, hinge_encode_batch, logistic_encode_batch, per_user_budget
from .ldp_server import (METHODS, CopySchedule, OptimizerConfig, hinge_gradient_batch, hinge_nldp_train,
                         logistic_gradient_batch, logistic_nldp_train)
from .massart import (CommitteeConfig, LhmnConfig, MassartPipelineConfig, lhmn_fit, run_massart_pipeline)
from .poly_approx import bernstein_build, bernstein_eval, chebyshev_build
from .reporting import SCHEMA, ErrorEstimate, RunReport, error_estimate, estimate_from_predictions
from .rng import derive_seed, substream
from .selftrain import (LOSSES, PseudoLabelerConfig, SelftrainPipelineConfig, StwnConfig, run_selftrain_pipeline)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

log = logging.getLogger(__name__)

PIPELINES = ("massart", "selftrain", "lhmn", "hinge_private", "logistic_private")
SWEEP_AXES = {"n": ("data", "n_private"), "m": ("data", "m_public"), "epsilon": ("privacy", "epsilon"),
              "d": ("data", "d"), "mu_norm": ("data", "mu_norm")}
MIN_EVAL_TRIALS = 100
MIN_AUDIT_TRIALS = 10_000


# ------------------------------------------------------------------ evaluation

@dataclass(frozen=True)
class RealizableTask:
    """Marginal plus target halfspace; errors are measured against sign(<w*, x>)."""

    marginal: MarginalSpec
    w_star: np.ndarray


def sample_task(spec: Union[RealizableTask, MixtureSpec], n: int, seed: int) -> Dataset:
    if isinstance(spec, RealizableTask):
        return sample_realizable(spec.marginal, spec.w_star, n, seed)
    if isinstance(spec, MixtureSpec):
        return sample_mixture(spec, n, seed)
    raise InvalidInputError(f"cannot evaluate against {type(spec).__name__}")


def monte_carlo_error(w: VectorLike, spec: Union[RealizableTask, MixtureSpec], trials: int,
                      seed: int) -> ErrorEstimate:
    """Error rate of sign(<w, x>) on ``trials`` fresh draws, with a 95% CI."""
    if trials < MIN_EVAL_TRIALS:
        raise InvalidInputError(f"need at least {MIN_EVAL_TRIALS} trials, got {trials}")
    data = sample_task(spec, trials, seed)
    return estimate_from_predictions(predict(as_vector(w), data.X), data.labels)


# ------------------------------------------------------------------ audit

@dataclass
class AuditReport:
    mechanism: str
    p: int
    trials: int
    mean: np.ndarray
    target: np.ndarray
    stderr: np.ndarray
    threshold: float = 4.0

    @property
    def z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (self.mean - self.target) / self.stderr
        return np.where(self.stderr > 0, z, np.where(self.mean == self.target, 0.0, np.inf))

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z)))

    @property
    def passed(self) -> bool:
        return self.max_abs_z <= self.threshold

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "mechanism": self.mechanism, "p": self.p, "trials": self.trials,
                "mean": self.mean.tolist(), "target": self.target.tolist(),
                "stderr": self.stderr.tolist(), "z": self.z.tolist(),
                "max_abs_z": self.max_abs_z, "threshold": self.threshold, "passed": self.passed}


def audit_target(mechanism: str, w: np.ndarray, x: np.ndarray, y: float, p: int,
                 beta: float = 0.25, R: float = 1.0, rho: float = 2.0) -> np.ndarray:
    """Noiseless expectation of the estimator at (w, x, y)."""
    if mechanism == HINGE:
        approx = bernstein_build(beta, R, p)
        return float(bernstein_eval(approx, y * float(w @ x))) * y * x
    approx = chebyshev_build(R, rho, p)
    xs = x / R
    u = float(w @ xs)
    c1, c2 = approx.scaled()
    s = approx.scale
    coef = sum((c2[k] - c1[k] * y) * u ** k * s ** (k + 1) for k in range(p + 1))
    return coef * xs


def audit_unbiasedness(mechanism: str, w: VectorLike, x: VectorLike, y: float, p: int,
                       params: PrivacyParams, trials: int, seed: int, *, beta: float = 0.25,
                       R: float = 1.0, rho: float = 2.0, schedule: CopySchedule = None,
                       chunk: int = 50_000) -> AuditReport:
    """Monte-Carlo mean of the gradient estimator over fresh encodings of one
    fixed example, compared componentwise with its analytic expectation.

    ``schedule`` overrides the copy schedule (the dependence-injection hook).
    """
    if trials < MIN_AUDIT_TRIALS:
        raise InvalidInputError(f"audit needs at least {MIN_AUDIT_TRIALS} trials, got {trials}")
    if mechanism not in (HINGE, LOGISTIC):
        raise InvalidInputError(f"unknown mechanism {mechanism!r}")
    w, x = as_vector(w), as_vector(x)
    if mechanism == HINGE:
        approx = bernstein_build(beta, R, p)
    else:
        approx = chebyshev_build(R, rho, p)
    total = np.zeros(x.shape[0])
    total_sq = np.zeros(x.shape[0])
    done = 0
    for c, start in enumerate(range(0, trials, chunk)):
        size = min(chunk, trials - start)
        rng = substream(seed, "audit", c)
        X = np.broadcast_to(x, (size, x.shape[0]))
        Y = np.full(size, float(y))
        if mechanism == HINGE:
            G = hinge_gradient_batch(w, hinge_encode_batch(X, Y, params, p, rng), approx, schedule)
        else:
            G = logistic_gradient_batch(w, logistic_encode_batch(X, Y, params, p, R, rng), approx, schedule)
        total += G.sum(axis=0)
        total_sq += (G * G).sum(axis=0)
        done += size
    mean = total / done
    var = np.maximum(total_sq / done - mean * mean, 0.0) * done / (done - 1)
    target = audit_target(mechanism, w, x, float(y), p, beta, R, rho)
    return AuditReport(mechanism, p, trials, mean, target, np.sqrt(var / done))


# ------------------------------------------------------------------ configuration

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "data": {"family": GAUSSIAN, "d": 2, "radius": None, "n_private": 10_000, "m_public": 50_000,
             "mu_norm": 2.0, "massart_lambda": 3 / 16},
    "privacy": {"epsilon": 4.0, "delta": 1e-5},
    "accuracy": {"alpha": 0.1, "beta": 0.1},
    "encode": {"p": 8},
    "optimizer": {"horizon": None, "radius": 1e-6, "method": "sigm", "step_size": None,
                  "smoothness": 1.0, "noise_level": 0.0, "clip": 1e6},
    "committee": {"k": None, "smoothing": None},
    "lhmn": {"T": None, "N": None, "eta": None, "U": 1.0, "r": 1.0,
             "c1": 1.0, "c2": 1.0, "cT": 1.0, "cN": 1.0},
    "selftrain": {"rho": None, "sigma": None, "B": 100, "T": None, "eta": None, "c_eta": 10.0,
                  "alpha": 0.02, "loss": "logistic", "K": 1.0},
}
_TOP_LEVEL = {"pipeline": None, "seed": 0, "trials": 100_000, "out": None}


@dataclass
class ExperimentConfig:
    """Everything a run needs.  Sections mirror the TOML layout; missing keys
    take the values in :data:`DEFAULTS`."""

    pipeline: str
    seed: int = 0
    trials: int = 100_000
    out: Optional[str] = None
    sections: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def __post_init__(self):
        merged = copy.deepcopy(DEFAULTS)
        unknown = []
        for name, values in self.sections.items():
            if name not in merged:
                unknown.append(f"unknown section [{name}]")
                continue
            for key, v in values.items():
                if key not in merged[name]:
                    unknown.append(f"unknown key {name}.{key}")
                merged[name][key] = v
        self.sections = merged
        problems = unknown + self.problems()
        if problems:
            raise ConfigError("invalid experiment config: " + "; ".join(problems), problems)

    def __getitem__(self, section: str) -> Dict[str, Any]:
        return self.sections[section]

    def problems(self) -> List[str]:
        out = []
        if self.pipeline not in PIPELINES:
            out.append(f"pipeline must be one of {list(PIPELINES)}, got {self.pipeline!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            out.append("seed must be a non-negative integer")
        if not isinstance(self.trials, int) or self.trials < MIN_EVAL_TRIALS:
            out.append(f"trials must be an integer >= {MIN_EVAL_TRIALS}")
        data, priv = self.sections["data"], self.sections["privacy"]
        if data["family"] not in FAMILIES:
            out.append(f"data.family must be one of {list(FAMILIES)}")
        if not isinstance(data["d"], int) or data["d"] < 1:
            out.append("data.d must be a positive integer")
        for key in ("n_private", "m_public"):
            if not isinstance(data[key], int) or data[key] < 0:
                out.append(f"data.{key} must be a non-negative integer")
        if self.pipeline in ("massart", "selftrain", "lhmn") and data["m_public"] < 1:
            out.append(f"pipeline {self.pipeline!r} needs public data: data.m_public must be >= 1")
        if self.pipeline in ("massart", "selftrain", "hinge_private", "logistic_private") and data["n_private"] < 1:
            out.append(f"pipeline {self.pipeline!r} needs private data: data.n_private must be >= 1")
        if not 0 <= data["massart_lambda"] < 0.5:
            out.append("data.massart_lambda must lie in [0, 1/2)")
        if not data["mu_norm"] >= 0:
            out.append("data.mu_norm must be non-negative")
        if not priv["epsilon"] > 0:
            out.append("privacy.epsilon must be positive")
        if not 0 < priv["delta"] < 1:
            out.append("privacy.delta must lie in (0, 1)")
        acc = self.sections["accuracy"]
        if not (0 < acc["alpha"] < 1 and 0 < acc["beta"] < 1):
            out.append("accuracy.alpha and accuracy.beta must lie in (0, 1)")
        p = self.sections["encode"]["p"]
        if not isinstance(p, int) or p < 0:
            out.append("encode.p must be a non-negative integer")
        opt = self.sections["optimizer"]
        if opt["method"] not in METHODS:
            out.append(f"optimizer.method must be one of {list(METHODS)}")
        if not opt["radius"] > 0:
            out.append("optimizer.radius must be positive")
        if self.sections["selftrain"]["loss"] not in LOSSES:
            out.append(f"selftrain.loss must be one of {sorted(LOSSES)}")
        return out

    # -- serialization
    def to_dict(self) -> dict:
        out = {"pipeline": self.pipeline, "seed": self.seed, "trials": self.trials}
        if self.out is not None:
            out["out"] = self.out
        for name, values in self.sections.items():
            out[name] = {k: v for k, v in values.items() if v is not None}
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        top = {k: obj.pop(k, default) for k, default in _TOP_LEVEL.items()}
        if top["pipeline"] is None:
            raise ConfigError(f"config must name a pipeline; valid tags: {list(PIPELINES)}",
                              ["pipeline missing"])
        stray = [k for k, v in obj.items() if not isinstance(v, dict)]
        if stray:
            raise ConfigError(f"unknown top-level keys {stray}", [f"unknown key {k}" for k in stray])
        sections = {k: v for k, v in obj.items() if k not in ("audit", "sweep")}
        return cls(top["pipeline"], top["seed"], top["trials"], top["out"], sections)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(tomllib.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_toml(Path(path).read_text(encoding="utf-8"))

    def with_value(self, section: str, key: str, value) -> "ExperimentConfig":
        obj = self.to_dict()
        obj.setdefault(section, {})[key] = value
        return ExperimentConfig.from_dict(obj)

    # -- typed views
    @property
    def privacy(self) -> PrivacyParams:
        return PrivacyParams(float(self["privacy"]["epsilon"]), float(self["privacy"]["delta"]))

    def marginal(self) -> MarginalSpec:
        data = self["data"]
        return MarginalSpec(data["family"], data["d"], data["radius"])

    def optimizer(self) -> OptimizerConfig:
        o = self["optimizer"]
        return OptimizerConfig(horizon=o["horizon"], radius=float(o["radius"]), method=o["method"],
                               step_size=o["step_size"], smoothness=float(o["smoothness"]),
                               noise_level=float(o["noise_level"]), clip=float(o["clip"]))

    def lhmn(self, m: int, R: float) -> LhmnConfig:
        lh, acc, d = self["lhmn"], self["accuracy"], self["data"]["d"]
        alpha, beta = float(acc["alpha"]), float(acc["beta"])
        N = lh["N"] if lh["N"] is not None else math.ceil(lh["cN"] * math.log(m / beta) / alpha ** 2)
        T = lh["T"] if lh["T"] is not None else m - N
        if T < 1:
            raise ConfigError(f"{m} public points leave no room for SGD after N = {N} selection points")
        return LhmnConfig(alpha, beta, d, R, U=lh["U"], r=lh["r"], c1=lh["c1"], c2=lh["c2"], cT=lh["cT"],
                          cN=lh["cN"], T_override=int(T), N_override=int(N), eta_override=lh["eta"])

    def stwn(self, m: int, R: float, mu_norm: float) -> StwnConfig:
        st, acc, d = self["selftrain"], self["accuracy"], self["data"]["d"]
        B = int(st["B"])
        T = st["T"] if st["T"] is not None else m // B
        return StwnConfig.from_theory(float(st["alpha"]), float(acc["beta"]), d, R, mu_norm,
                                      c_eta=float(st["c_eta"]), loss=st["loss"], B=B, T=int(T),
                                      eta=st["eta"], sigma=st["sigma"])


# ------------------------------------------------------------------ run

@dataclass
class RunArtifacts:
    report: RunReport
    hypothesis: Optional[np.ndarray] = None
    extras: Dict[str, Any] = field(default_factory=dict)


def logistic_rho(config: ExperimentConfig) -> float:
    """Radius of the logistic hypothesis ball: selftrain.rho, else the mean norm (floored at 1e-3)."""
    rho = config["selftrain"]["rho"]
    return float(rho) if rho is not None else max(float(config["data"]["mu_norm"]), 1e-3)


def _realizable_task(config: ExperimentConfig) -> RealizableTask:
    marginal = config.marginal()
    return RealizableTask(marginal, random_unit_vector(marginal.dimension, derive_seed(config.seed, "w_star")))


def _mixture_task(config: ExperimentConfig) -> MixtureSpec:
    marginal = config.marginal()
    mu = float(config["data"]["mu_norm"]) * random_unit_vector(marginal.dimension, derive_seed(config.seed, "mu"))
    return MixtureSpec(mu, marginal)


def generate_data(config: ExperimentConfig) -> Dict[str, Dataset]:
    """Private, public and evaluation samples on disjoint substreams of the master seed."""
    data = config["data"]
    seed = config.seed
    n, m = data["n_private"], data["m_public"]
    out = {}
    if config.pipeline in ("selftrain", "logistic_private"):
        task = _mixture_task(config)
        if n:
            out["private"] = sample_mixture(task, n, derive_seed(seed, "data", "private"))
        if m:
            out["public"] = strip_labels(sample_mixture(task, m, derive_seed(seed, "data", "public")))
    else:
        task = _realizable_task(config)
        if n:
            out["private"] = sample_realizable(task.marginal, task.w_star, n, derive_seed(seed, "data", "private"))
        if m:
            clean = sample_realizable(task.marginal, task.w_star, m, derive_seed(seed, "data", "public"))
            if config.pipeline == "lhmn":
                lam = MassartSpec.constant(float(data["massart_lambda"]))
                out["public_truth"] = clean
                out["public"] = corrupt_massart(clean, lam, derive_seed(seed, "data", "massart"))
            else:
                out["public"] = strip_labels(clean)
                out["public_truth"] = clean
    out["evaluation"] = sample_task(task, config.trials, derive_seed(seed, "evaluate"))
    return out


def run(config: ExperimentConfig, persist: bool = True) -> RunArtifacts:
    """Generate data, run the configured pipeline and evaluate it.

    With ``persist`` and ``config.out`` set, writes ``report.json`` and
    ``hypothesis.json`` there.
    """
    start = time.perf_counter()
    data = generate_data(config)
    evaluation = data["evaluation"]
    params = config.privacy
    seed = derive_seed(config.seed, "pipeline")
    p = config["encode"]["p"]
    echo = config.to_dict()
    # where results land is not part of what was computed
    echo.pop("out", None)

    if config.pipeline == "massart":
        public = data["public"]
        pipe = MassartPipelineConfig(
            CommitteeConfig(k=config["committee"]["k"], beta=float(config["accuracy"]["beta"]), p=p,
                            smoothing=config["committee"]["smoothing"], optimizer=config.optimizer()),
            config.lhmn(len(public), public.radius))
        outcome = run_massart_pipeline(data["private"], public, params, pipe, seed, evaluation,
                                       data["public_truth"].labels)
        report, w = outcome.report, outcome.hypothesis.w
        extras = {"lhmn": outcome.lhmn, "committee": outcome.committee}
    elif config.pipeline == "selftrain":
        public = data["public"]
        mu_norm = float(config["data"]["mu_norm"])
        st = config["selftrain"]
        rho = logistic_rho(config)
        pipe = SelftrainPipelineConfig(PseudoLabelerConfig(rho, p, config.optimizer()),
                                       config.stwn(len(public), public.radius, mu_norm),
                                       U=config["lhmn"]["U"], r=config["lhmn"]["r"], K=float(st["K"]))
        outcome = run_selftrain_pipeline(data["private"], public, params, pipe, seed, mu_norm, evaluation)
        report, w = outcome.report, np.asarray(outcome.report.hypothesis)
        extras = {"trajectory": outcome.trajectory, "pseudo_labeler": outcome.pseudo_labeler}
    elif config.pipeline == "lhmn":
        public = data["public"]
        lh = config.lhmn(len(public), public.radius)
        result = lhmn_fit(public, lh, seed)
        w = result.hypothesis.w
        final = estimate_from_predictions(predict(w, evaluation.X), evaluation.labels)
        report = RunReport("lhmn", final, None, "", result.hypothesis.to_list(), {}, echo,
                           {"lhmn": lh.to_dict(), "selected_candidate": result.selected,
                            "validation_error": result.validation_error, "resets": result.resets})
        extras = {"lhmn": result}
    else:
        private = data["private"]
        opt = config.optimizer()
        if config.pipeline == "hinge_private":
            R = private.radius
            approx = bernstein_build(1.0 / (128.0 * R), R, p)
            reports = encode_dataset(private.normalized(), HINGE, params, p, derive_seed(seed, "encode"))
            w = hinge_nldp_train(reports, params, approx, opt).w
            kind = HINGE
        else:
            rho = logistic_rho(config)
            approx = chebyshev_build(private.radius, rho, p)
            reports = encode_dataset(private, LOGISTIC, params, p, derive_seed(seed, "encode"))
            w = logistic_nldp_train(reports, params, approx, opt, rho).w
            kind = LOGISTIC
        final = estimate_from_predictions(predict(w, evaluation.X), evaluation.labels)
        report = RunReport(config.pipeline, final, None, "", [float(v) for v in w],
                           per_user_budget(kind, params, p).to_dict(), echo, {})
        extras = {}

    report.config = echo
    report.wall_clock_seconds = time.perf_counter() - start
    artifacts = RunArtifacts(report, np.asarray(w), extras)
    if persist and config.out:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
        write_hypothesis(out / "hypothesis.json", w, {"pipeline": config.pipeline, "seed": config.seed})
    return artifacts


def write_hypothesis(path, w, meta: dict = None) -> None:
    obj = {"schema": SCHEMA, "w": [float(v) for v in np.ravel(w)], "meta": meta or {}}
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_hypothesis(path) -> np.ndarray:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if "w" not in obj:
        raise InvalidInputError(f"{path}: not a hypothesis file (missing 'w')")
    return np.asarray(obj["w"], dtype=np.float64)


# ------------------------------------------------------------------ sweep

SWEEP_COLUMNS = ["schema", "row", "axis", "value", "trial", "status", "error", "ci_halfwidth",
                 "intermediate_error", "intermediate_ci_halfwidth", "runtime_seconds"]


def _sweep_point(args):
    config_dict, axis, value, trial = args
    section, key = SWEEP_AXES[axis]
    started = time.perf_counter()
    row = {"schema": SCHEMA, "row": "run", "axis": axis, "value": value, "trial": trial}
    try:
        obj = copy.deepcopy(config_dict)
        obj.setdefault(section, {})[key] = value
        obj["seed"] = derive_seed(config_dict.get("seed", 0), "sweep", trial)
        obj.pop("out", None)
        report = run(ExperimentConfig.from_dict(obj), persist=False).report
        row.update(status="ok", error=report.final_error.estimate,
                   ci_halfwidth=report.final_error.halfwidth)
        if report.intermediate_error is not None:
            row.update(intermediate_error=report.intermediate_error.estimate,
                       intermediate_ci_halfwidth=report.intermediate_error.halfwidth)
    except Exception as exc:  # failures are recorded, the sweep goes on
        row.update(status=f"error:{type(exc).__name__}:{exc}")
    row["runtime_seconds"] = time.perf_counter() - started
    return row


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("NLDP_WORKERS", "1")))
    except ValueError:
        return 1


def sweep(config: ExperimentConfig, axis: str, grid: Sequence, trials: int = 1) -> List[dict]:
    """One run per (grid value, trial) plus a summary row per grid value.

    Trial t uses the same derived seed at every grid value, so points are
    compared on common random numbers.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {sorted(SWEEP_AXES)}, got {axis!r}")
    grid = list(grid)
    if not grid:
        raise InvalidInputError("sweep grid is empty")
    base = config.to_dict()
    jobs = [(base, axis, v, t) for v in grid for t in range(trials)]
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    out = []
    for v in grid:
        point = [r for r in rows if r["value"] == v]
        out.extend(point)
        ok = [r for r in point if r["status"] == "ok"]
        summary = {"schema": SCHEMA, "row": "summary", "axis": axis, "value": v, "trial": len(point),
                   "status": f"ok={len(ok)}/{len(point)}",
                   "runtime_seconds": sum(r["runtime_seconds"] for r in point)}
        if ok:
            n = config.trials * len(ok)
            mistakes = sum(round(r["error"] * config.trials) for r in ok)
            pooled = error_estimate(mistakes, n)
            summary.update(error=pooled.estimate, ci_halfwidth=pooled.halfwidth)
        out.append(summary)
    return out


def sweep_csv(rows: List[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, SWEEP_COLUMNS, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: r.get(k, "") for k in SWEEP_COLUMNS})
    return buf.getvalue()
