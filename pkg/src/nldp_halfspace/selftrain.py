"""Private logistic pseudo-labeler followed by self-training with weight normalization.

STWN starts from the normalized pseudo-labeler and, at every iteration,
labels a fresh batch of public points with its *current* iterate, takes one
averaged surrogate-gradient step and renormalizes.  The pseudo-labeler only
provides the starting direction.
"""

from __future__ import annotations

import json
import logging
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from .core import PUBLIC_UNLABELED, Dataset, Hypothesis, PrivacyParams, VectorLike, as_vector, predict, sign
from .errors import ConfigError, ContractViolationError, InvalidInputError
from .ldp_client import LOGISTIC, encode_dataset, per_user_budget
from .ldp_server import OptimizerConfig, logistic_nldp_train
from .poly_approx import chebyshev_build
from .reporting import RunReport, estimate_from_predictions
from .rng import derive_seed, substream

log = logging.getLogger(__name__)


# ------------------------------------------------------------------ losses

@dataclass(frozen=True)
class Loss:
    """Surrogate loss with its derivative and declared well-behaved constant."""

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    C: float


LOGISTIC_LOSS = Loss("logistic", lambda z: np.logaddexp(0.0, -np.asarray(z, dtype=np.float64)),
                     lambda z: -expit(-np.asarray(z, dtype=np.float64)), 2.0)
EXPONENTIAL_LOSS = Loss("exponential", lambda z: np.exp(-np.asarray(z, dtype=np.float64)),
                        lambda z: -np.exp(-np.asarray(z, dtype=np.float64)), 1.0)
LOSSES = {LOGISTIC_LOSS.name: LOGISTIC_LOSS, EXPONENTIAL_LOSS.name: EXPONENTIAL_LOSS}


def get_loss(loss: Union[str, Loss]) -> Loss:
    if isinstance(loss, Loss):
        return loss
    try:
        return LOSSES[loss]
    except KeyError:
        raise ConfigError(f"unknown loss {loss!r}; expected one of {sorted(LOSSES)}") from None


def well_behaved_check(loss: Union[str, Loss], grid: np.ndarray = None, tol: float = 1e-12) -> Tuple[float, dict]:
    """Verify on a grid of [0, 30] that the loss is 1-Lipschitz, decreasing and
    that -l'(z) >= exp(-z) / C with its declared C.

    Returns ``(C, report)``; raises :class:`ConfigError` when a check fails.
    """
    loss = get_loss(loss)
    z = np.linspace(0.0, 30.0, 30_001) if grid is None else np.asarray(grid, dtype=np.float64)
    d = loss.derivative(z)
    v = loss.value(z)
    report = {
        "loss": loss.name, "C": loss.C,
        "lipschitz": bool(np.all(np.abs(d) <= 1 + tol)),
        "decreasing": bool(np.all(d <= tol) and np.all(np.diff(v) <= tol)),
        "lower_bound": bool(np.all(-d >= np.exp(-z) / loss.C - tol)),
    }
    if not report["lower_bound"]:
        bad = z[-d < np.exp(-z) / loss.C - tol]
        report["lower_bound_violations"] = [float(bad.min()), float(bad.max())]
    failed = [k for k in ("lipschitz", "decreasing", "lower_bound") if not report[k]]
    if failed:
        raise ConfigError(f"loss {loss.name!r} is not well-behaved with C={loss.C}: fails {failed}",
                          [f"{loss.name}: {k}" for k in failed])
    return loss.C, report


def surrogate_grad(w: VectorLike, q: VectorLike, yhat: float, sigma: float,
                   loss: Union[str, Loss] = "logistic") -> np.ndarray:
    """Gradient in w of l(yhat <q, w> / sigma)."""
    if not sigma > 0:
        raise InvalidInputError("sigma must be positive")
    w, q = as_vector(w), as_vector(q)
    z = yhat * float(q @ w) / sigma
    return float(get_loss(loss).derivative(z)) * (yhat / sigma) * q


# ------------------------------------------------------------------ STWN

@dataclass(frozen=True)
class StwnConfig:
    """Self-training settings.  Use :meth:`from_theory` for the default scalings."""

    sigma: float
    B: int
    T: int
    eta: float
    loss: str = "logistic"

    def __post_init__(self):
        problems = []
        if not self.sigma > 0:
            problems.append(f"sigma must be positive, got {self.sigma}")
        if int(self.B) != self.B or self.B < 1:
            problems.append(f"B must be a positive integer, got {self.B}")
        if int(self.T) != self.T or self.T < 0:
            problems.append(f"T must be a non-negative integer, got {self.T}")
        if self.eta < 0:
            problems.append(f"eta must be non-negative, got {self.eta}")
        if self.loss not in LOSSES:
            problems.append(f"loss must be one of {sorted(LOSSES)}, got {self.loss!r}")
        if problems:
            raise ConfigError("; ".join(problems), problems)

    @classmethod
    def from_theory(cls, alpha: float, beta: float, d: int, R: float, mu_norm: float = 0.0,
                    c_B: float = 1.0, c_T: float = 1.0, c_eta: float = 1.0, loss: str = "logistic",
                    B: int = None, T: int = None, eta: float = None, sigma: float = None) -> "StwnConfig":
        """B = c_B ln(1/beta)/alpha, T = c_T d ln(1/beta)^2/alpha,
        eta = c_eta alpha/(d ln(1/beta)^2), sigma = max(R, ||mu||); explicit values win."""
        lb = math.log(1.0 / beta)
        return cls(sigma=max(R, mu_norm) if sigma is None else sigma,
                   B=math.ceil(c_B * lb / alpha) if B is None else B,
                   T=math.ceil(c_T * d * lb * lb / alpha) if T is None else T,
                   eta=c_eta * alpha / (d * lb * lb) if eta is None else eta,
                   loss=loss)

    def check_sigma(self, R: float, mu_norm: float):
        if self.sigma < max(R, mu_norm):
            warnings.warn(f"sigma={self.sigma} is below max(R, ||mu||) = {max(R, mu_norm)}",
                          RuntimeWarning, stacklevel=2)

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "B": self.B, "T": self.T, "eta": self.eta, "loss": self.loss}


@dataclass
class Trajectory:
    """T+1 unit-norm iterates and the order in which public points were consumed."""

    iterates: np.ndarray
    consumed: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        self.iterates = np.atleast_2d(np.asarray(self.iterates, dtype=np.float64))
        norms = np.linalg.norm(self.iterates, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise InvalidInputError("trajectory iterates must be unit-norm")

    def __len__(self):
        return self.iterates.shape[0]

    def __getitem__(self, t: int) -> Hypothesis:
        return Hypothesis(self.iterates[t])

    def __iter__(self) -> Iterator[Hypothesis]:
        for t in range(len(self)):
            yield self[t]

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for t, w in enumerate(self.iterates):
                fh.write(json.dumps({"schema": 1, "t": t, "w": [float(v) for v in w]}) + "\n")

    @staticmethod
    def iter_jsonl(path) -> Iterator[Tuple[int, np.ndarray]]:
        """Stream (t, w) pairs without loading the whole trajectory."""
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    yield int(obj["t"]), np.asarray(obj["w"], dtype=np.float64)

    @classmethod
    def read_jsonl(cls, path) -> "Trajectory":
        return cls(np.stack([w for _, w in cls.iter_jsonl(path)]))


def stwn(public: Dataset, w_pl: Union[Hypothesis, VectorLike], config: StwnConfig, seed: int) -> Trajectory:
    """Self-training with weight normalization.

    Batches are consecutive blocks of a seeded permutation of the public
    points, so no point is used twice.
    """
    if public.kind != PUBLIC_UNLABELED:
        raise ContractViolationError(f"STWN needs unlabeled public data, got kind {public.kind!r}")
    need = config.T * config.B
    if len(public) < need:
        raise InvalidInputError(f"STWN needs T*B = {config.T}*{config.B} = {need} public points, got {len(public)}")
    w = as_vector(w_pl.w if isinstance(w_pl, Hypothesis) else w_pl).astype(np.float64)
    norm = float(np.linalg.norm(w))
    if norm < 1e-12:
        raise InvalidInputError("the pseudo-labeler must be a non-zero vector")
    w = w / norm
    loss = get_loss(config.loss)
    order = substream(seed, "stwn_order").permutation(len(public))[:need]
    iterates = np.empty((config.T + 1, public.dimension))
    iterates[0] = w
    scale = config.eta / (config.B * config.sigma)
    for t in range(config.T):
        Q = public.X[order[t * config.B:(t + 1) * config.B]]
        m = Q @ w
        yhat = sign(m)
        # yhat * <q, w> = |<q, w>| >= 0 under self-labeling
        d = loss.derivative(yhat * m / config.sigma)
        v = w - scale * ((d * yhat) @ Q)
        w = v / np.linalg.norm(v)
        iterates[t + 1] = w
    return Trajectory(iterates, order)


def pick_best_iterate(traj: Trajectory, evaluation: Dataset) -> Tuple[Hypothesis, int]:
    """Iterate with the lowest empirical error on labeled evaluation data (ties: lowest t).

    Uses labels outside the privacy model; evaluation only.
    """
    if len(evaluation) == 0:
        raise InvalidInputError("evaluation data is empty")
    errors = trajectory_errors(traj, evaluation)
    t = int(np.argmin(errors))
    return traj[t], t


def trajectory_errors(traj: Trajectory, evaluation: Dataset) -> np.ndarray:
    y = evaluation.labels
    margins = evaluation.X @ traj.iterates.T
    preds = np.where(margins >= 0, 1, -1)
    return np.count_nonzero(preds != y[:, None], axis=0) / len(evaluation)


# ------------------------------------------------------------------ pseudo-labeler

def c_err(U: float = 1.0, r: float = 1.0) -> float:
    """Target classification error r^2 / (144 U) of the pseudo-labeler."""
    return r * r / (144.0 * U)


def pseudo_labeler_target(U: float = 1.0, r: float = 1.0) -> float:
    """Excess logistic risk C_err ln 2 / 2 demanded of the private learner."""
    return c_err(U, r) * math.log(2.0) / 2.0


def mixture_norm_threshold(C: float, K: float = 1.0) -> float:
    """3K max(ln(8/C), 22K): the separation under which no guarantee is claimed."""
    return 3.0 * K * max(math.log(8.0 / C), 22.0 * K)


@dataclass(frozen=True)
class PseudoLabelerConfig:
    rho: float
    p: int = 8
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def to_dict(self) -> dict:
        return {"rho": self.rho, "p": self.p, "optimizer": self.optimizer.to_dict()}


def pseudo_labeler_train(private: Dataset, params: PrivacyParams, config: PseudoLabelerConfig,
                         seed: int, R: float = None) -> Hypothesis:
    """Private logistic-loss learner over {||w|| <= rho} (target excess risk C_err ln2 / 2)."""
    R = private.radius if R is None else R
    approx = chebyshev_build(R, config.rho, config.p)
    reports = encode_dataset(private, LOGISTIC, params, config.p, derive_seed(seed, "encode"), R=R)
    opt = replace(config.optimizer, seed=derive_seed(seed, "optimize"))
    return logistic_nldp_train(reports, params, approx, opt, config.rho)


# ------------------------------------------------------------------ pipeline

@dataclass(frozen=True)
class SelftrainPipelineConfig:
    pseudo_labeler: PseudoLabelerConfig
    stwn: StwnConfig
    U: float = 1.0
    r: float = 1.0
    K: float = 1.0

    def to_dict(self) -> dict:
        return {"pseudo_labeler": self.pseudo_labeler.to_dict(), "stwn": self.stwn.to_dict(),
                "U": self.U, "r": self.r, "K": self.K}


@dataclass
class SelftrainOutcome:
    trajectory: Trajectory
    pseudo_labeler: Hypothesis
    report: RunReport
    errors: Optional[np.ndarray] = None


def run_selftrain_pipeline(private: Optional[Dataset], public: Dataset, params: PrivacyParams,
                           config: SelftrainPipelineConfig, seed: int,
                           mu_norm: Optional[float] = None,
                           evaluation: Optional[Dataset] = None,
                           pseudo_labeler: Optional[VectorLike] = None) -> SelftrainOutcome:
    """Pseudo-labeler then STWN.

    ``evaluation`` (labeled, disjoint) yields the per-iterate error curve;
    ``pseudo_labeler`` replaces the private stage (test hook).
    """
    start = time.perf_counter()
    C = c_err(config.U, config.r)
    details = {"c_err": C, "pseudo_labeler_target_excess_risk": pseudo_labeler_target(config.U, config.r),
               "iterate_selection": "evaluation only; selecting privately needs one more round"}
    if mu_norm is not None:
        config.stwn.check_sigma(public.radius, mu_norm)
        threshold = mixture_norm_threshold(C, config.K)
        details["mu_norm"] = mu_norm
        details["mu_norm_threshold"] = threshold
        if mu_norm < threshold:
            warnings.warn(f"||mu|| = {mu_norm:.4g} is below 3K max(ln(8/C_err), 22K) = {threshold:.4g}; "
                          "no guarantee applies", RuntimeWarning, stacklevel=2)
    if pseudo_labeler is None:
        pseudo_labeler = pseudo_labeler_train(private, params, config.pseudo_labeler,
                                              derive_seed(seed, "pseudo_labeler"))
        budget = per_user_budget(LOGISTIC, params, config.pseudo_labeler.p).to_dict()
    else:
        if not isinstance(pseudo_labeler, Hypothesis):
            pseudo_labeler = Hypothesis(pseudo_labeler)
        budget = {"injected_pseudo_labeler": True}
    traj = stwn(public, pseudo_labeler, config.stwn, derive_seed(seed, "stwn"))

    final = inter = None
    errors = None
    best = traj[0]
    if evaluation is not None:
        errors = trajectory_errors(traj, evaluation)
        t = int(np.argmin(errors))
        best = traj[t]
        final = estimate_from_predictions(predict(best.w, evaluation.X), evaluation.labels)
        inter = estimate_from_predictions(predict(pseudo_labeler.w, evaluation.X), evaluation.labels)
        details["best_iterate"] = t
        details["error_curve"] = [float(e) for e in errors]
    details["pseudo_labeler"] = pseudo_labeler.to_list()
    report = RunReport("selftrain", final, inter, "pseudo_labeler", best.to_list(), budget,
                       config.to_dict(), details, time.perf_counter() - start)
    return SelftrainOutcome(traj, pseudo_labeler, report, errors)
