"""Seeded generators for the data models the learners assume.

Samplers are pure functions of ``(spec, n, seed)``.  Draws are organized in
fixed-size chunks, each owning the substream ``(seed, <stage>, chunk)``, so
generation can be parallelized without changing any output.

Distribution constants ``U`` (anti-concentration bound), ``r``
(anti-anti-concentration radius) and ``K`` (sub-exponential norm) are recorded
per family as configuration defaults.  They are not verified.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import PRIVATE, PUBLIC_UNLABELED, Dataset, VectorLike, as_vector, sign
from .errors import ConfigError, InvalidInputError
from .rng import substream

log = logging.getLogger(__name__)

GAUSSIAN = "gaussian_isotropic_truncated"
UNIFORM_BALL = "uniform_ball_isotropic"
LAPLACE = "laplace_product_isotropic"
FAMILIES = (GAUSSIAN, UNIFORM_BALL, LAPLACE)

# (U, r, K) defaults per family; Theta(1) for isotropic log-concave laws
FAMILY_CONSTANTS = {
    GAUSSIAN: (1.0, 1.0, 1.0),
    UNIFORM_BALL: (1.0, 1.0, 1.0),
    LAPLACE: (1.0, 1.0, 1.0),
}

CHUNK = 4096
_MAX_REJECTION_ROUNDS = 10_000


def default_radius(d: int) -> float:
    return 2.0 * math.sqrt(d)


@dataclass(frozen=True)
class MarginalSpec:
    """Marginal law of x.

    ``scale`` multiplies every draw; anything other than 1 makes the law
    non-isotropic, which the mixture model rejects.
    """

    family: str
    dimension: int
    radius: Optional[float] = None
    U: Optional[float] = None
    r: Optional[float] = None
    K: Optional[float] = None
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown marginal family {self.family!r}; expected one of {FAMILIES}")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ConfigError(f"dimension must be a positive integer, got {self.dimension}")
        object.__setattr__(self, "dimension", int(self.dimension))
        if self.radius is None:
            object.__setattr__(self, "radius", default_radius(self.dimension))
        U0, r0, K0 = FAMILY_CONSTANTS[self.family]
        for name, default in (("U", U0), ("r", r0), ("K", K0)):
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)
        if not self.U >= 1:
            raise ConfigError(f"U must be >= 1, got {self.U}")
        if not (self.r > 0 and self.K > 0 and self.radius > 0 and self.scale > 0):
            raise ConfigError("r, K, radius and scale must be positive")
        if self.family == UNIFORM_BALL and self.radius < self.scale * math.sqrt(self.dimension + 2):
            raise ConfigError(
                f"uniform_ball_isotropic needs radius >= sqrt(d+2)*scale = "
                f"{self.scale * math.sqrt(self.dimension + 2):.4g}, got {self.radius}")

    @property
    def is_isotropic(self) -> bool:
        return self.scale == 1.0

    def to_dict(self) -> dict:
        return {"family": self.family, "d": self.dimension, "R": self.radius,
                "U": self.U, "r": self.r, "K": self.K, "scale": self.scale}


@dataclass(frozen=True)
class MixtureSpec:
    """x | y ~ z + y*mu with balanced labels and z drawn from ``base``."""

    mu: np.ndarray
    base: MarginalSpec

    def __post_init__(self):
        mu = np.array(np.ravel(self.mu), dtype=np.float64)
        if mu.shape[0] != self.base.dimension:
            raise ConfigError(f"mu has dimension {mu.shape[0]}, base has {self.base.dimension}")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def dimension(self) -> int:
        return self.base.dimension

    @property
    def mu_norm(self) -> float:
        return float(np.linalg.norm(self.mu))

    @property
    def radius(self) -> float:
        """Bound on ||x||: the base truncation radius plus ||mu||."""
        return self.base.radius + self.mu_norm

    def to_dict(self) -> dict:
        return {"mu": [float(v) for v in self.mu], "base": self.base.to_dict()}


@dataclass(frozen=True)
class MassartSpec:
    """Per-point label-flip probability ``lambda_fn(X) -> array`` bounded by ``lambda_max``."""

    lambda_fn: Callable[[np.ndarray], np.ndarray]
    lambda_max: float
    description: str = field(default="custom", compare=False)

    @classmethod
    def constant(cls, lam: float) -> "MassartSpec":
        return cls(lambda X: np.full(X.shape[0], float(lam)), float(lam), f"constant({lam!r})")

    @classmethod
    def halfspace_indicator(cls, lam: float, coordinate: int = 0) -> "MassartSpec":
        """lambda(x) = lam * 1{x_coordinate > 0}."""
        return cls(lambda X: np.where(X[:, coordinate] > 0, float(lam), 0.0), float(lam),
                   f"indicator({lam!r}, x[{coordinate}] > 0)")


# ---------------------------------------------------------------- marginals

def _raw_draw(spec: MarginalSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    d = spec.dimension
    if spec.family == GAUSSIAN:
        return rng.standard_normal((size, d))
    if spec.family == LAPLACE:
        # Laplace(b) has variance 2 b^2
        return rng.laplace(0.0, 1.0 / math.sqrt(2.0), (size, d))
    # uniform in the ball of radius sqrt(d+2), whose covariance is the identity
    g = rng.standard_normal((size, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = math.sqrt(d + 2) * rng.random(size) ** (1.0 / d)
    return g * rad[:, None]


def _draw_chunk(spec: MarginalSpec, rng: np.random.Generator, size: int,
                accept: Optional[Callable[[np.ndarray], np.ndarray]] = None):
    """``size`` draws inside the radius (and passing ``accept``), plus rejection count."""
    parts, have, rejected = [], 0, 0
    for _ in range(_MAX_REJECTION_ROUNDS):
        need = size - have
        batch = _raw_draw(spec, rng, max(need + need // 8 + 8, 16)) * spec.scale
        ok = np.linalg.norm(batch, axis=1) <= spec.radius
        if accept is not None:
            ok &= accept(batch)
        rejected += int(batch.shape[0] - ok.sum())
        batch = batch[ok][:need]
        parts.append(batch)
        have += batch.shape[0]
        if have == size:
            return np.concatenate(parts), rejected
    raise ConfigError(f"rejection sampling for {spec.family} accepted almost nothing; "
                      "check radius/margin settings")


def sample_marginal(spec: MarginalSpec, n: int, seed: int, stage: str = "marginal",
                    accept=None) -> np.ndarray:
    if n < 0:
        raise InvalidInputError("n must be non-negative")
    chunks, rejected = [], 0
    for c, start in enumerate(range(0, n, CHUNK)):
        size = min(CHUNK, n - start)
        X, rej = _draw_chunk(spec, substream(seed, stage, c), size, accept)
        chunks.append(X)
        rejected += rej
    if rejected:
        log.info("%s: resampled %d of %d draws outside the support (rate %.4g)",
                 spec.family, rejected, n + rejected, rejected / (n + rejected))
    if not chunks:
        return np.empty((0, spec.dimension))
    return np.concatenate(chunks)


# ---------------------------------------------------------------- samplers

def _check_unit(w_star: np.ndarray):
    if abs(np.linalg.norm(w_star) - 1.0) > 1e-9:
        raise InvalidInputError(f"w_star must be unit-norm, got norm {np.linalg.norm(w_star):.12g}")


def sample_realizable(spec: MarginalSpec, w_star: VectorLike, n: int, seed: int,
                      margin: Optional[float] = None) -> Dataset:
    """n draws from the marginal labeled by sign(<w_star, x>).

    With ``margin`` set, points whose normalized distance to the hyperplane is
    below it are rejected (large-margin setting).
    """
    w_star = as_vector(w_star)
    if w_star.shape != (spec.dimension,):
        raise InvalidInputError("w_star dimension does not match the marginal")
    _check_unit(w_star)
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    accept = None
    if margin is not None:
        if not 0 <= margin < 1:
            raise ConfigError("margin must lie in [0, 1)")

        def accept(B):
            norms = np.linalg.norm(B, axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                cos = np.abs(B @ w_star) / norms
            return np.nan_to_num(cos) >= margin

    X = sample_marginal(spec, n, seed, "realizable", accept)
    return Dataset(spec.dimension, spec.radius, X, sign(X @ w_star), PRIVATE)


def sample_mixture(spec: MixtureSpec, n: int, seed: int) -> Dataset:
    """Balanced labels y, x = z + y*mu with z from the (isotropic) base."""
    if not spec.base.is_isotropic:
        raise ConfigError("mixture base distribution must be isotropic (scale == 1)")
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    z = sample_marginal(spec.base, n, seed, "mixture.z")
    y = np.empty(n)
    for c, start in enumerate(range(0, n, CHUNK)):
        size = min(CHUNK, n - start)
        y[start:start + size] = substream(seed, "mixture.y", c).choice((-1.0, 1.0), size)
    X = z + y[:, None] * spec.mu[None, :]
    return Dataset(spec.dimension, spec.radius, X, y, PRIVATE)


def corrupt_massart(data: Dataset, spec: MassartSpec, seed: int) -> Dataset:
    """Flip each label independently with probability lambda(x_i)."""
    if not spec.lambda_max < 0.5 or spec.lambda_max < 0:
        raise ConfigError(f"Massart lambda_max must lie in [0, 1/2), got {spec.lambda_max}")
    y = data.labels
    lam = np.asarray(spec.lambda_fn(data.X), dtype=np.float64).reshape(-1)
    if lam.shape[0] != len(data):
        raise ConfigError("lambda_fn must return one probability per example")
    if np.any(lam < 0) or np.any(lam > spec.lambda_max):
        raise ConfigError("lambda_fn returned values outside [0, lambda_max]")
    u = np.empty(len(data))
    for c, start in enumerate(range(0, len(data), CHUNK)):
        size = min(CHUNK, len(data) - start)
        u[start:start + size] = substream(seed, "massart", c).random(size)
    flipped = np.where(u < lam, -y, y)
    return Dataset(data.dimension, data.radius, data.X, flipped, data.kind)


def strip_labels(data: Dataset) -> Dataset:
    """Public, unlabeled copy of ``data`` (labels replaced by the 0 sentinel)."""
    return Dataset(data.dimension, data.radius, data.X, np.zeros(len(data), dtype=np.int8),
                   PUBLIC_UNLABELED)


def random_unit_vector(d: int, seed: int) -> np.ndarray:
    g = substream(seed, "unit_vector").standard_normal(d)
    return g / np.linalg.norm(g)
