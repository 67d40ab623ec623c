"""Server side: unbiased gradient reconstruction and constrained optimizers.

Hinge estimator (degree p, copies indexed k = 1..p(p+1))::

    t_j = prod_{k=jp+1}^{jp+j} y_k <w, x_k>          (t_0 = 1)
    s_j = prod_{k=jp+j+1}^{jp+p} (1 - y_k <w, x_k>)  (s_p = 1)
    G   = (sum_j c_j C(p, j) t_j s_j) * y_0 * x_0

Every factor uses its own fresh copy, so E[G] = P_p(y<w,x>) y x.

Logistic estimator (s = R rho, copies k = 1..p(p+1)/2 used)::

    t_j = prod_{k=j(j-1)/2+1}^{j(j+1)/2} <w, x_k>    (t_0 = 1)
    G   = (sum_k (c2_k - c1_k y_p) t_k s^(k+1)) * x_0

with c_k the coefficients of h'(z) in z = s u, so that E[G] is the gradient of
log(1 + exp(-s y <w, x'>)) up to the polynomial fit error.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from .core import Hypothesis, PrivacyParams, VectorLike, as_vector
from .errors import ConfigError, InvalidInputError, MalformedReportError, OptimizationError
from .ldp_client import HINGE, LOGISTIC, HingeReport, LogisticReport, ReportBatch
from .poly_approx import BernsteinApprox, ChebyshevApprox
from .rng import substream

log = logging.getLogger(__name__)

SIGM = "sigm"
PSGD = "psgd"
METHODS = (SIGM, PSGD)
DEFAULT_CLIP = 1e6


# ------------------------------------------------------------------ copy schedules

@dataclass(frozen=True)
class CopySchedule:
    """0-based copy indices consumed by each product factor.

    ``t[j]`` and ``s[j]`` list the copies entering t_j and s_j (hinge); the
    logistic schedule only has ``t``.
    """

    p: int
    t: Tuple[Tuple[int, ...], ...]
    s: Tuple[Tuple[int, ...], ...] = ()

    def all_indices(self) -> List[int]:
        out = []
        for group in self.t + self.s:
            out.extend(group)
        return out


def hinge_schedule(p: int) -> CopySchedule:
    t = tuple(tuple(range(j * p, j * p + j)) for j in range(p + 1))
    s = tuple(tuple(range(j * p + j, j * p + p)) for j in range(p + 1))
    return CopySchedule(p, t, s)


def logistic_schedule(p: int) -> CopySchedule:
    t = tuple(tuple(range(j * (j - 1) // 2, j * (j + 1) // 2)) for j in range(p + 1))
    return CopySchedule(p, t)


def check_fresh_copies(schedule: CopySchedule) -> None:
    """Raise if any copy index feeds two factors (or one factor twice)."""
    idx = schedule.all_indices()
    seen, dup = set(), set()
    for k in idx:
        (dup if k in seen else seen).add(k)
    if dup:
        raise MalformedReportError(f"copies {sorted(dup)} are consumed more than once")


def reuse_copy_schedule(p: int, mechanism: str = HINGE, degree: int = None) -> CopySchedule:
    """Deliberately broken schedule: every factor of t_degree reads the same copy.

    Test hook for the audit's negative control.  The default degree is 2 for
    the hinge estimator and 3 for the logistic one, whose even-degree
    coefficients vanish (h2' is odd), so a reuse there would be invisible.
    """
    if degree is None:
        degree = 2 if mechanism == HINGE else 3
    if not 2 <= degree <= p:
        raise InvalidInputError(f"reuse degree must lie in [2, p]; got {degree} with p={p}")
    base = hinge_schedule(p) if mechanism == HINGE else logistic_schedule(p)
    t = list(base.t)
    t[degree] = (t[degree][0],) * len(t[degree])
    return CopySchedule(p, tuple(t), base.s)


# ------------------------------------------------------------------ gradients

@dataclass(frozen=True)
class GradientSample:
    g: np.ndarray
    source: int
    w_query: np.ndarray


def _check_w(w: np.ndarray, d: int, bound: float = 1.0):
    if w.shape != (d,):
        raise InvalidInputError(f"query has shape {w.shape}, reports have dimension {d}")
    if np.linalg.norm(w) > bound * (1 + 1e-9):
        raise InvalidInputError(f"query norm {np.linalg.norm(w):.6g} exceeds {bound}")


def hinge_coefficients(w: np.ndarray, x_copies: np.ndarray, y_copies: np.ndarray,
                       approx: BernsteinApprox, schedule: CopySchedule = None) -> np.ndarray:
    """Scalar sum_j c_j C(p,j) t_j s_j for each report in a stack.

    ``x_copies`` is ``(n, p(p+1), d)`` and ``y_copies`` is ``(n, p(p+1))``.
    """
    p = approx.degree
    schedule = schedule or hinge_schedule(p)
    n = x_copies.shape[0]
    if p == 0:
        return np.full(n, approx.coefficients[0])
    m = y_copies * (x_copies @ w)
    binom = approx.binomials
    total = np.zeros(n)
    for j in range(p + 1):
        t = np.prod(m[:, list(schedule.t[j])], axis=1) if schedule.t[j] else 1.0
        s = np.prod(1.0 - m[:, list(schedule.s[j])], axis=1) if schedule.s[j] else 1.0
        total = total + approx.coefficients[j] * binom[j] * t * s
    return total


def _check_hinge_shapes(batch_p: int, approx, n_copies: int, ycount: int):
    if batch_p != approx.degree:
        raise InvalidInputError(f"report degree {batch_p} does not match approximation degree {approx.degree}")
    need = batch_p * (batch_p + 1)
    if n_copies < need or ycount < need:
        raise MalformedReportError(f"report carries {n_copies} x / {ycount} y copies, needs {need}")


def hinge_gradient(w: VectorLike, report: HingeReport, approx: BernsteinApprox,
                   source: int = -1, schedule: CopySchedule = None) -> GradientSample:
    w = as_vector(w)
    _check_hinge_shapes(report.p, approx, report.x_copies.shape[0], report.y_copies.shape[0])
    _check_w(w, report.x0.shape[0])
    coef = hinge_coefficients(w, report.x_copies[None], report.y_copies[None], approx, schedule)[0]
    return GradientSample(coef * report.y0 * report.x0, source, w.copy())


def hinge_gradient_batch(w: VectorLike, batch: ReportBatch, approx: BernsteinApprox,
                         schedule: CopySchedule = None) -> np.ndarray:
    """Gradient of every report in ``batch`` at the same ``w``; shape ``(n, d)``."""
    w = as_vector(w)
    if batch.kind != HINGE:
        raise InvalidInputError("hinge gradient needs hinge reports")
    _check_hinge_shapes(batch.p, approx, batch.x_copies.shape[1], batch.y_copies.shape[1])
    _check_w(w, batch.x0.shape[1])
    coef = hinge_coefficients(w, batch.x_copies, batch.y_copies, approx, schedule)
    return (coef * batch.y0)[:, None] * batch.x0


def logistic_coefficients(w: np.ndarray, x_copies: np.ndarray, y_p: np.ndarray,
                          approx: ChebyshevApprox, schedule: CopySchedule = None) -> np.ndarray:
    p = approx.degree
    schedule = schedule or logistic_schedule(p)
    c1, c2 = approx.scaled()
    s = approx.scale
    n = x_copies.shape[0]
    u = x_copies[:, :max(p * (p + 1) // 2, 1), :] @ w if p else np.zeros((n, 0))
    total = np.zeros(n)
    for k in range(p + 1):
        t = np.prod(u[:, list(schedule.t[k])], axis=1) if schedule.t[k] else 1.0
        total = total + (c2[k] - c1[k] * y_p) * t * s ** (k + 1)
    return total


def _check_logistic_shapes(batch_p: int, approx, n_copies: int):
    if batch_p != approx.degree:
        raise InvalidInputError(f"report degree {batch_p} does not match approximation degree {approx.degree}")
    need = batch_p * (batch_p + 1) // 2
    if n_copies < need:
        raise MalformedReportError(f"report carries {n_copies} x copies, needs at least {need}")


def logistic_gradient(w: VectorLike, report: LogisticReport, approx: ChebyshevApprox, R: float = None,
                      rho: float = None, source: int = -1, schedule: CopySchedule = None) -> GradientSample:
    """Reconstructed gradient at ``w`` (||w|| <= 1) of one logistic report.

    ``R`` and ``rho`` are optional cross-checks of the approximation scale.
    """
    w = as_vector(w)
    _check_scale(approx, R, rho)
    _check_logistic_shapes(report.p, approx, report.x_copies.shape[0])
    _check_w(w, report.x0.shape[0])
    coef = logistic_coefficients(w, report.x_copies[None], np.array([report.y_p]), approx, schedule)[0]
    return GradientSample(coef * report.x0, source, w.copy())


def logistic_gradient_batch(w: VectorLike, batch: ReportBatch, approx: ChebyshevApprox,
                            schedule: CopySchedule = None) -> np.ndarray:
    w = as_vector(w)
    if batch.kind != LOGISTIC:
        raise InvalidInputError("logistic gradient needs logistic reports")
    _check_logistic_shapes(batch.p, approx, batch.x_copies.shape[1])
    _check_w(w, batch.x0.shape[1])
    coef = logistic_coefficients(w, batch.x_copies, batch.y_copies[:, 0], approx, schedule)
    return coef[:, None] * batch.x0


def _check_scale(approx: ChebyshevApprox, R, rho):
    if R is not None and rho is not None and not math.isclose(R * rho, approx.scale, rel_tol=1e-12):
        raise InvalidInputError(f"approximation scale {approx.scale} != R*rho = {R * rho}")


# ------------------------------------------------------------------ optimizers

@dataclass(frozen=True)
class OptimizerConfig:
    """Optimizer settings.

    ``horizon`` is the number of iterations (SIGM makes ``horizon + 1`` oracle
    calls, projected SGD makes ``horizon``).  ``None`` lets the trainers use
    every report exactly once.  SIGM uses alpha_i = (i+1)/2, B_k = A_k and
    beta_k = smoothness + noise_level * (k+2)^(3/2).
    """

    horizon: Optional[int] = None
    radius: float = 1.0
    method: str = SIGM
    step_size: Optional[float] = None
    smoothness: float = 1.0
    noise_level: float = 0.0
    clip: float = DEFAULT_CLIP
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.method not in METHODS:
            problems.append(f"method must be one of {METHODS}, got {self.method!r}")
        if self.horizon is not None and (int(self.horizon) != self.horizon or self.horizon < 1):
            problems.append(f"horizon must be a positive integer, got {self.horizon}")
        if not self.radius > 0:
            problems.append(f"radius must be positive, got {self.radius}")
        if self.step_size is not None and not self.step_size > 0:
            problems.append(f"step_size must be positive, got {self.step_size}")
        if not self.smoothness > 0 or self.noise_level < 0:
            problems.append("smoothness must be positive and noise_level non-negative")
        if not self.clip > 0:
            problems.append("clip must be positive")
        if problems:
            raise ConfigError("; ".join(problems), problems)

    def to_dict(self) -> dict:
        return {"horizon": self.horizon, "radius": self.radius, "method": self.method,
                "step_size": self.step_size, "smoothness": self.smoothness,
                "noise_level": self.noise_level, "clip": self.clip, "seed": self.seed}


@dataclass
class OptimizationTrace:
    """Per-iteration log: (iteration, gradient norm before clipping, clipped?)."""

    rows: List[Tuple[int, float, bool]] = field(default_factory=list)

    @property
    def clip_events(self) -> int:
        return sum(1 for _, _, c in self.rows if c)

    def to_csv(self) -> str:
        lines = ["schema,iteration,gradient_norm,clipped"]
        lines += [f"1,{i},{g!r},{int(c)}" for i, g, c in self.rows]
        return "\n".join(lines) + "\n"


def project_ball(v: np.ndarray, radius: float) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm <= radius:
        return v
    return v * (radius / norm)


def _query(oracle, w: np.ndarray, k: int, clip: float, trace: Optional[OptimizationTrace]) -> np.ndarray:
    out = oracle(w)
    g = np.asarray(out.g if isinstance(out, GradientSample) else out, dtype=np.float64)
    if g.shape != w.shape or not np.all(np.isfinite(g)):
        raise OptimizationError(f"oracle returned a non-finite or mis-shaped gradient at iteration {k}",
                                iteration=k, query=w.copy(), gradient=g)
    norm = float(np.linalg.norm(g))
    clipped = norm > clip
    if clipped:
        g = g * (clip / norm)
        log.debug("clipped gradient of norm %.3g at iteration %d", norm, k)
    if trace is not None:
        trace.rows.append((k, norm, clipped))
    return g


def sigm_run(oracle: Callable[[np.ndarray], object], config: OptimizerConfig,
             dimension: int = None, trace: OptimizationTrace = None) -> Hypothesis:
    """Stochastic intermediate gradient method with d(x) = ||x||^2 / 2 on a ball.

    Every argmin over the ball has a closed form (a Euclidean projection).
    """
    if config.horizon is None:
        raise ConfigError("sigm_run needs an explicit horizon")
    if dimension is None:
        raise InvalidInputError("sigm_run needs the problem dimension")
    T, rad = int(config.horizon), config.radius

    def alpha(i):
        return (i + 1) / 2.0

    def A(k):
        return (k + 1) * (k + 2) / 4.0

    def beta(k):
        return config.smoothness + config.noise_level * (k + 2) ** 1.5

    x = np.zeros(dimension)  # argmin of d over the ball
    g = _query(oracle, x, 0, config.clip, trace)
    acc = alpha(0) * g       # sum_i alpha_i G_i; the constant <G_i, -x_i> terms drop out of the argmin
    y = project_ball(-alpha(0) * g / beta(0), rad)
    for k in range(T):
        b = beta(k)
        z = project_ball(-acc / b, rad)
        eta = alpha(k + 1) / A(k + 1)
        x = eta * z + (1.0 - eta) * y
        g = _query(oracle, x, k + 1, config.clip, trace)
        acc = acc + alpha(k + 1) * g
        x_hat = project_ball(z - alpha(k + 1) * g / b, rad)
        w = eta * x_hat + (1.0 - eta) * y
        # B_{k+1} = A_{k+1}, so y_{k+1} = w_{k+1}
        y = w
    return Hypothesis(y)


def psgd_run(oracle: Callable[[np.ndarray], object], config: OptimizerConfig,
             dimension: int = None, trace: OptimizationTrace = None,
             initial: VectorLike = None) -> Hypothesis:
    """Projected SGD on the ball with uniform averaging of the iterates.

    Default step size: radius / sqrt(horizon).
    """
    if config.horizon is None:
        raise ConfigError("psgd_run needs an explicit horizon")
    if initial is None:
        if dimension is None:
            raise InvalidInputError("psgd_run needs the dimension or an initial point")
        w = np.zeros(dimension)
    else:
        w = project_ball(as_vector(initial).astype(np.float64), config.radius)
    T = int(config.horizon)
    step = config.step_size if config.step_size is not None else config.radius / math.sqrt(T)
    total = np.zeros_like(w)
    for t in range(T):
        g = _query(oracle, w, t, config.clip, trace)
        w = project_ball(w - step * g, config.radius)
        total += w
    return Hypothesis(total / T)


def run_optimizer(oracle, config: OptimizerConfig, dimension: int, trace=None) -> Hypothesis:
    if config.method == SIGM:
        return sigm_run(oracle, config, dimension, trace)
    return psgd_run(oracle, config, dimension, trace)


def oracle_calls(config: OptimizerConfig) -> int:
    return config.horizon + 1 if config.method == SIGM else config.horizon


def _resolve_horizon(config: OptimizerConfig, n: int) -> OptimizerConfig:
    if n < 1:
        raise InvalidInputError("training needs at least one report")
    if config.horizon is None:
        horizon = n - 1 if config.method == SIGM else n
        if horizon < 1:
            raise InvalidInputError("SIGM needs at least two reports")
        config = replace(config, horizon=horizon)
    if oracle_calls(config) > n:
        raise InvalidInputError(f"{oracle_calls(config)} oracle calls requested but only {n} reports; "
                                "each report may be used once")
    return config


class _ReportStream:
    """Serves reports without replacement in a seeded random order."""

    def __init__(self, n: int, seed: int):
        self.order = substream(seed, "report_order").permutation(n)
        self.used = 0

    def next(self) -> int:
        if self.used >= len(self.order):
            raise InvalidInputError("report stream exhausted; a report may not be reused")
        i = int(self.order[self.used])
        self.used += 1
        return i


def hinge_nldp_train(reports: ReportBatch, params: PrivacyParams, approx: BernsteinApprox,
                     config: OptimizerConfig, trace: OptimizationTrace = None) -> Hypothesis:
    """Private hinge-loss learner over the unit ball from one-shot reports."""
    if len(reports) == 0:
        raise InvalidInputError("empty report set")
    if reports.kind != HINGE:
        raise InvalidInputError("hinge training needs hinge reports")
    if config.radius > 1:
        raise ConfigError("hinge training constrains ||w|| <= 1; radius must be <= 1")
    _check_hinge_shapes(reports.p, approx, reports.x_copies.shape[1], reports.y_copies.shape[1])
    config = _resolve_horizon(config, len(reports))
    stream = _ReportStream(len(reports), config.seed)
    schedule = hinge_schedule(approx.degree)
    xc, yc, x0, y0 = reports.x_copies, reports.y_copies, reports.x0, reports.y0

    def oracle(w):
        i = stream.next()
        coef = hinge_coefficients(w, xc[i:i + 1], yc[i:i + 1], approx, schedule)[0]
        return GradientSample(coef * y0[i] * x0[i], i, w)

    return run_optimizer(oracle, config, reports.x0.shape[1], trace)


def logistic_nldp_train(reports: ReportBatch, params: PrivacyParams, approx: ChebyshevApprox,
                        config: OptimizerConfig, rho: float, trace: OptimizationTrace = None) -> Hypothesis:
    """Private logistic-loss learner over {||w|| <= rho}.

    The optimizer works on v = w / rho in the unit ball (scaled loss
    log(1 + exp(-R rho y <v, x/R>))); the returned hypothesis is rho * v.
    """
    if len(reports) == 0:
        raise InvalidInputError("empty report set")
    if reports.kind != LOGISTIC:
        raise InvalidInputError("logistic training needs logistic reports")
    if not rho > 0:
        raise ConfigError("rho must be positive")
    if config.radius > 1:
        raise ConfigError("the scaled variable lives in the unit ball; radius must be <= 1")
    _check_logistic_shapes(reports.p, approx, reports.x_copies.shape[1])
    config = _resolve_horizon(config, len(reports))
    stream = _ReportStream(len(reports), config.seed)
    schedule = logistic_schedule(approx.degree)
    xc, yp, x0 = reports.x_copies, reports.y_copies[:, 0], reports.x0

    def oracle(v):
        i = stream.next()
        coef = logistic_coefficients(v, xc[i:i + 1], yp[i:i + 1], approx, schedule)[0]
        return GradientSample(coef * x0[i], i, v)

    v = run_optimizer(oracle, config, reports.x0.shape[1], trace)
    return Hypothesis(rho * v.w)
