"""Private committee -> Massart label oracle -> normalized-SGD halfspace learner.

The pipeline splits the private users into k groups, trains one private
hinge-loss learner per group, labels public points by the committee's
majority vote and finally runs LHMN (normalized SGD on a sigmoid surrogate,
followed by empirical selection among the iterates and their negations).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from scipy.special import expit

from .core import (PSEUDO_LABELED, PUBLIC_UNLABELED, Dataset, Hypothesis, PrivacyParams, VectorLike,
                   as_vector, predict, sign, unit_vector)
from .errors import ConfigError, ContractViolationError, DegenerateVectorError, InvalidInputError
from .ldp_client import HINGE, encode_dataset, per_user_budget
from .ldp_server import OptimizerConfig, hinge_nldp_train
from .poly_approx import bernstein_build
from .reporting import RunReport, estimate_from_predictions
from .rng import derive_seed, substream

log = logging.getLogger(__name__)

_SELECTION_CHUNK = 2048


# ------------------------------------------------------------------ committee

@dataclass(frozen=True)
class Committee:
    members: tuple

    def __post_init__(self):
        members = tuple(m if isinstance(m, Hypothesis) else Hypothesis(m) for m in self.members)
        if not members:
            raise InvalidInputError("a committee needs at least one member")
        if len(members) % 2 == 0:
            raise InvalidInputError(f"committee size must be odd, got {len(members)}")
        dims = {m.dimension for m in members}
        if len(dims) != 1:
            raise InvalidInputError("committee members disagree on the dimension")
        if any(m.norm > 1 + 1e-9 for m in members):
            raise InvalidInputError("every committee member must satisfy ||w|| <= 1")
        object.__setattr__(self, "members", members)

    @property
    def k(self) -> int:
        return len(self.members)

    @property
    def dimension(self) -> int:
        return self.members[0].dimension

    @property
    def matrix(self) -> np.ndarray:
        return np.stack([m.w for m in self.members])


def default_committee_size(beta: float) -> int:
    """Smallest odd integer >= 32 ln(4 / beta)."""
    if not 0 < beta < 1:
        raise ConfigError(f"beta must lie in (0, 1), got {beta}")
    k = math.ceil(32.0 * math.log(4.0 / beta))
    return k if k % 2 else k + 1


def split_groups(data: Dataset, k: int, seed: int) -> List[Dataset]:
    """k disjoint groups of floor(n/k) examples after a seeded shuffle."""
    n = len(data)
    if k < 1:
        raise InvalidInputError("k must be positive")
    if n < k:
        raise InvalidInputError(f"cannot split {n} examples into {k} non-empty groups")
    size = n // k
    order = substream(seed, "split_groups").permutation(n)
    return [data.subset(order[t * size:(t + 1) * size]) for t in range(k)]


def vote(committee: Committee, x) -> np.ndarray:
    """Majority label of the members' predictions at a point or at each row of a matrix."""
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != committee.dimension:
        raise InvalidInputError(f"points have dimension {X.shape[1]}, committee has {committee.dimension}")
    out = np.empty(X.shape[0], dtype=np.int8)
    W = committee.matrix
    for start in range(0, X.shape[0], _SELECTION_CHUNK):
        block = X[start:start + _SELECTION_CHUNK]
        tally = sign(block @ W.T).astype(np.int64).sum(axis=1)
        out[start:start + _SELECTION_CHUNK] = np.where(tally > 0, 1, -1)
    return int(out[0]) if single else out


@dataclass(frozen=True)
class CommitteeConfig:
    """Settings for the private committee.

    ``smoothing`` is the hinge smoothing parameter; by default it is a quarter
    of the per-member accuracy target 1/(32R).
    """

    k: Optional[int] = None
    beta: float = 0.1
    p: int = 8
    smoothing: Optional[float] = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def resolved_k(self) -> int:
        k = default_committee_size(self.beta) if self.k is None else int(self.k)
        if k < 1 or k % 2 == 0:
            raise ConfigError(f"committee size must be a positive odd integer, got {k}")
        return k

    def resolved_smoothing(self, R: float) -> float:
        return self.smoothing if self.smoothing is not None else 1.0 / (128.0 * R)

    def to_dict(self) -> dict:
        return {"k": self.k, "beta": self.beta, "p": self.p, "smoothing": self.smoothing,
                "optimizer": self.optimizer.to_dict()}


def build_oracle(private: Dataset, params: PrivacyParams, config: CommitteeConfig, seed: int) -> Committee:
    """Train one private hinge learner per group on data normalized by R."""
    k = config.resolved_k()
    R = private.radius
    groups = split_groups(private, k, derive_seed(seed, "split"))
    approx = bernstein_build(config.resolved_smoothing(R), R, config.p)
    members = []
    for t, group in enumerate(groups):
        normalized = group.normalized()
        reports = encode_dataset(normalized, HINGE, params, config.p, derive_seed(seed, "encode", t))
        opt = replace(config.optimizer, seed=derive_seed(seed, "optimize", t))
        members.append(hinge_nldp_train(reports, params, approx, opt))
    return Committee(tuple(members))


def label_public(committee: Committee, public: Dataset) -> Dataset:
    if public.kind != PUBLIC_UNLABELED:
        raise ContractViolationError(f"label_public needs unlabeled public data, got kind {public.kind!r}")
    return Dataset(public.dimension, public.radius, public.X, vote(committee, public.X), PSEUDO_LABELED)


# ------------------------------------------------------------------ LHMN

def _check_norm(w: np.ndarray) -> float:
    norm = float(np.linalg.norm(w))
    if norm < 1e-12:
        raise DegenerateVectorError("sigmoid surrogate is undefined at w = 0")
    return norm


def sigmoid_loss(w: VectorLike, x: VectorLike, y: float, sigma: float) -> float:
    """S_sigma(-y <w, x> / ||w||) with S_sigma(t) = 1 / (1 + exp(-t / sigma))."""
    w, x = as_vector(w), as_vector(x)
    u = -y * float(w @ x) / _check_norm(w)
    return float(expit(u / sigma))


def sigmoid_loss_grad(w: VectorLike, x: VectorLike, y: float, sigma: float) -> np.ndarray:
    w, x = as_vector(w), as_vector(x)
    norm = _check_norm(w)
    dot = float(w @ x)
    s = float(expit(-y * dot / norm / sigma))
    dS = s * (1.0 - s) / sigma
    return dS * (-y) * (x / norm - dot * w / norm ** 3)


@dataclass(frozen=True)
class LhmnConfig:
    """Parameters of the normalized-SGD learner.

    Every hidden constant is a multiplier (default 1)::

        C1 = c1 U^12 / r^12          C2 = c2 r / U^2
        T  = ceil(cT C1 d R^8 ln(1/beta) / alpha^4)
        N  = ceil(cN ln(T/beta) / alpha^2)
        sigma = C2 alpha / (sqrt(2) R^2)
        eta   = C2^2 d alpha^2 / (8 R^4 sqrt(T))

    ``T``, ``N`` and ``eta`` can be overridden (the formula values are rarely
    affordable); sigma and eta are always recomputed from the stored inputs.
    """

    alpha: float
    beta: float
    d: int
    R: float
    U: float = 1.0
    r: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    cT: float = 1.0
    cN: float = 1.0
    T_override: Optional[int] = None
    N_override: Optional[int] = None
    eta_override: Optional[float] = None

    def __post_init__(self):
        problems = []
        if not 0 < self.alpha < 1:
            problems.append(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.beta < 1:
            problems.append(f"beta must lie in (0, 1), got {self.beta}")
        if int(self.d) != self.d or self.d < 1:
            problems.append(f"d must be a positive integer, got {self.d}")
        for name in ("R", "U", "r", "c1", "c2", "cT", "cN"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        for name in ("T_override", "N_override"):
            v = getattr(self, name)
            if v is not None and (int(v) != v or v < 1):
                problems.append(f"{name} must be a positive integer")
        if self.eta_override is not None and not self.eta_override > 0:
            problems.append("eta_override must be positive")
        if problems:
            raise ConfigError("; ".join(problems), problems)

    @property
    def C1(self) -> float:
        return self.c1 * self.U ** 12 / self.r ** 12

    @property
    def C2(self) -> float:
        return self.c2 * self.r / self.U ** 2

    @property
    def T_formula(self) -> float:
        return self.cT * self.C1 * self.d * self.R ** 8 * math.log(1 / self.beta) / self.alpha ** 4

    @property
    def T(self) -> int:
        return int(self.T_override) if self.T_override is not None else math.ceil(self.T_formula)

    @property
    def N(self) -> int:
        if self.N_override is not None:
            return int(self.N_override)
        return math.ceil(self.cN * math.log(self.T / self.beta) / self.alpha ** 2)

    @property
    def sigma(self) -> float:
        return self.C2 * self.alpha / (math.sqrt(2.0) * self.R ** 2)

    @property
    def eta_formula(self) -> float:
        return self.C2 ** 2 * self.d * self.alpha ** 2 / (8.0 * self.R ** 4 * math.sqrt(self.T))

    @property
    def eta(self) -> float:
        return self.eta_override if self.eta_override is not None else self.eta_formula

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "d": self.d, "R": self.R, "U": self.U,
                "r": self.r, "c1": self.c1, "c2": self.c2, "cT": self.cT, "cN": self.cN,
                "T_override": self.T_override, "N_override": self.N_override,
                "eta_override": self.eta_override,
                "derived": {"C1": self.C1, "C2": self.C2, "T": self.T, "N": self.N,
                            "sigma": self.sigma, "eta": self.eta}}


@dataclass
class LhmnResult:
    hypothesis: Hypothesis
    selected: int               # index into the interleaved list [w1, -w1, w2, -w2, ...]
    validation_error: float
    iterates: np.ndarray        # (T, d), every row unit-norm
    resets: int = 0

    def learning_log_csv(self, every: int = 1) -> str:
        lines = ["schema,iteration,w"]
        for i in range(0, self.iterates.shape[0], every):
            lines.append(f"1,{i + 1}," + " ".join(repr(float(v)) for v in self.iterates[i]))
        return "\n".join(lines) + "\n"


def _selection_errors(iterates: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """0-1 mistakes of every candidate in the interleaved list {+w_i, -w_i}.

    +w predicts +1 where the margin is >= 0, so its mistakes are
    (N + sum(y) - 2 sum_{m >= 0} y) / 2.  -w makes the complementary mistakes
    except at exact zeros, where both predict +1.
    """
    T = iterates.shape[0]
    N = X.shape[0]
    out = np.empty(2 * T, dtype=np.int64)
    ysum = float(y.sum())
    for start in range(0, T, _SELECTION_CHUNK):
        block = iterates[start:start + _SELECTION_CHUNK]
        margins = X @ block.T                        # (N, chunk)
        stop = start + block.shape[0]
        agree = y @ (margins >= 0)
        pos = np.rint((N + ysum - 2.0 * agree) / 2.0).astype(np.int64)
        neg = N - pos
        zeros = margins == 0
        if zeros.any():
            neg -= np.rint(y @ zeros).astype(np.int64)
        out[2 * start:2 * stop:2] = pos
        out[2 * start + 1:2 * stop:2] = neg
    return out


def lhmn_fit(pseudo: Dataset, config: LhmnConfig, seed: int) -> LhmnResult:
    """Normalized SGD from e1 over T examples, then selection on N fresh ones."""
    T, N = config.T, config.N
    if len(pseudo) < T + N:
        raise InvalidInputError(f"LHMN needs T + N = {T} + {N} = {T + N} examples, got {len(pseudo)}")
    if pseudo.dimension != config.d:
        raise InvalidInputError(f"data dimension {pseudo.dimension} != configured d = {config.d}")
    y_all = pseudo.labels.astype(np.float64)
    order = substream(seed, "lhmn_shuffle").permutation(len(pseudo))
    X_sgd, y_sgd = pseudo.X[order[:T]], y_all[order[:T]]
    X_sel, y_sel = pseudo.X[order[T:T + N]], y_all[order[T:T + N]]
    sigma, eta = config.sigma, config.eta

    e1 = unit_vector(config.d, 0)
    w = e1.copy()
    iterates = np.empty((T, config.d))
    resets = 0
    for i in range(T):
        x, y = X_sgd[i], y_sgd[i]
        # w is unit-norm, so the surrogate gradient simplifies
        dot = float(w @ x)
        s = 1.0 / (1.0 + math.exp(min(700.0, y * dot / sigma)))
        g = (s * (1.0 - s) / sigma) * (-y) * (x - dot * w)
        v = w - eta * g
        norm = math.sqrt(float(v @ v))
        if norm < 1e-12:
            resets += 1
            log.warning("LHMN iterate %d collapsed to zero; reset to e1", i + 1)
            w = e1.copy()
        else:
            w = v / norm
        iterates[i] = w
    errors = _selection_errors(iterates, X_sel, y_sel)
    best = int(np.argmin(errors))  # first minimum: lowest candidate index
    w_best = iterates[best // 2] * (1.0 if best % 2 == 0 else -1.0)
    return LhmnResult(Hypothesis(w_best), best, errors[best] / N, iterates, resets)


def lhmn_train(pseudo: Dataset, config: LhmnConfig, seed: int) -> Hypothesis:
    return lhmn_fit(pseudo, config, seed).hypothesis


# ------------------------------------------------------------------ pipeline

@dataclass(frozen=True)
class MassartPipelineConfig:
    committee: CommitteeConfig
    lhmn: LhmnConfig

    def to_dict(self) -> dict:
        return {"committee": self.committee.to_dict(), "lhmn": self.lhmn.to_dict()}


@dataclass
class MassartOutcome:
    hypothesis: Hypothesis
    committee: Committee
    lhmn: LhmnResult
    report: RunReport


def run_massart_pipeline(private: Optional[Dataset], public: Dataset, params: PrivacyParams,
                         config: MassartPipelineConfig, seed: int,
                         evaluation: Optional[Dataset] = None,
                         public_truth: Optional[np.ndarray] = None,
                         committee: Optional[Committee] = None) -> MassartOutcome:
    """Committee, public labeling and LHMN in sequence.

    ``evaluation`` (clean labels) and ``public_truth`` only feed the report.
    ``committee`` replaces the private stage entirely (test hook).
    """
    start = time.perf_counter()
    if private is not None and private.dimension != public.dimension:
        raise InvalidInputError("private and public data differ in dimension")
    if committee is None:
        if private is None:
            raise InvalidInputError("private data is required unless a committee is supplied")
        committee = build_oracle(private, params, config.committee, derive_seed(seed, "committee"))
        budget = per_user_budget(HINGE, params, config.committee.p).to_dict()
    else:
        budget = {"injected_committee": True}
    pseudo = label_public(committee, public)
    result = lhmn_fit(pseudo, config.lhmn, derive_seed(seed, "lhmn"))

    details = {"k": committee.k, "lhmn_selected_candidate": result.selected,
               "lhmn_validation_error": result.validation_error, "lhmn_resets": result.resets}
    final = inter = None
    if evaluation is not None:
        final = estimate_from_predictions(predict(result.hypothesis.w, evaluation.X), evaluation.labels)
        inter = estimate_from_predictions(vote(committee, evaluation.X), evaluation.labels)
    if public_truth is not None:
        details["pseudo_label_noise_rate"] = estimate_from_predictions(pseudo.labels, public_truth).to_dict()
    report = RunReport("massart", final, inter, "committee_vote", result.hypothesis.to_list(), budget,
                       config.to_dict(), details, time.perf_counter() - start)
    return MassartOutcome(result.hypothesis, committee, result, report)
