"""Domain types and the sign-classifier primitives.

Conventions used everywhere in the package:

* ``sign(0) = +1``.  Votes, error counting and pseudo-labeling all use it.
* All norms are Euclidean.
* Unlabeled (public) data carries the sentinel label ``0``; reading labels of
  such a dataset raises :class:`ContractViolationError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import ContractViolationError, DegenerateVectorError, InvalidInputError

PRIVATE = "private"
PUBLIC_UNLABELED = "public_unlabeled"
PSEUDO_LABELED = "pseudo_labeled"
DATASET_KINDS = (PRIVATE, PUBLIC_UNLABELED, PSEUDO_LABELED)

DEGENERATE_NORM = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Example:
    x: np.ndarray
    y: int

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(np.ravel(self.x)))
        if self.y not in (-1, 0, 1):
            raise InvalidInputError(f"label must be -1, +1 (or 0 for unlabeled), got {self.y!r}")
        object.__setattr__(self, "y", int(self.y))


@dataclass(frozen=True)
class Hypothesis:
    """Weight vector of a linear threshold classifier."""

    w: np.ndarray

    def __post_init__(self):
        w = _frozen(np.ravel(self.w))
        if not np.all(np.isfinite(w)):
            raise InvalidInputError("hypothesis has non-finite entries")
        object.__setattr__(self, "w", w)

    @property
    def dimension(self) -> int:
        return self.w.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.w))

    def __neg__(self) -> "Hypothesis":
        return Hypothesis(-self.w)

    def to_list(self) -> list:
        return [float(v) for v in self.w]


VectorLike = Union[Hypothesis, np.ndarray, Sequence[float]]


def as_vector(w: VectorLike) -> np.ndarray:
    if isinstance(w, Hypothesis):
        return w.w
    return np.asarray(w, dtype=np.float64)


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidInputError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise InvalidInputError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class AccuracyParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise InvalidInputError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.beta < 1:
            raise InvalidInputError(f"beta must lie in (0, 1), got {self.beta}")


@dataclass(frozen=True, eq=False)
class Dataset:
    """A set of examples stored column-wise.

    ``X`` has shape ``(n, dimension)``; ``y`` holds ``-1``/``+1`` labels, or
    all zeros for the ``public_unlabeled`` kind.
    """

    dimension: int
    radius: float
    X: np.ndarray
    y: np.ndarray
    kind: str = PRIVATE
    _norm_slack: float = field(default=1e-9, repr=False)

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise InvalidInputError(f"dimension must be a positive integer, got {self.dimension}")
        if not self.radius > 0:
            raise InvalidInputError(f"radius must be positive, got {self.radius}")
        if self.kind not in DATASET_KINDS:
            raise InvalidInputError(f"unknown dataset kind {self.kind!r}; expected one of {DATASET_KINDS}")
        X = np.array(self.X, dtype=np.float64, copy=True).reshape(-1, int(self.dimension))
        y = np.array(self.y, copy=True).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise InvalidInputError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("features contain non-finite values")
        norms = np.linalg.norm(X, axis=1)
        if norms.size and norms.max() > self.radius * (1 + self._norm_slack):
            raise InvalidInputError(f"example norm {norms.max():.6g} exceeds radius {self.radius}")
        if not np.all(y == np.round(y)):
            raise InvalidInputError("labels must be integers")
        y = y.astype(np.int8)
        if self.kind == PUBLIC_UNLABELED:
            if np.any(y != 0):
                raise InvalidInputError("public_unlabeled datasets must carry the 0 sentinel label")
        elif np.any((y != 1) & (y != -1)):
            raise InvalidInputError("labels must be exactly -1 or +1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "dimension", int(self.dimension))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def is_labeled(self) -> bool:
        return self.kind != PUBLIC_UNLABELED

    @property
    def labels(self) -> np.ndarray:
        """Labels as float64, refusing to expose the sentinel of unlabeled data."""
        if not self.is_labeled:
            raise ContractViolationError("labels of a public_unlabeled dataset must not be read")
        return self.y.astype(np.float64)

    def __getitem__(self, i: int) -> Example:
        return Example(self.X[i], int(self.y[i]))

    def __iter__(self) -> Iterator[Example]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        if index.dtype != bool:
            index = index.astype(np.intp)
        return Dataset(self.dimension, self.radius, self.X[index], self.y[index], self.kind)

    def with_labels(self, y, kind: str) -> "Dataset":
        return Dataset(self.dimension, self.radius, self.X, y, kind)

    def normalized(self) -> "Dataset":
        """Copy with every x divided by the radius, so that ||x|| <= 1."""
        return Dataset(self.dimension, 1.0, self.X / self.radius, self.y, self.kind)

    @classmethod
    def from_examples(cls, examples: Sequence[Example], dimension: int, radius: float,
                      kind: str = PRIVATE) -> "Dataset":
        X = np.array([e.x for e in examples], dtype=np.float64).reshape(-1, dimension)
        y = np.array([e.y for e in examples], dtype=np.int8)
        return cls(dimension, radius, X, y, kind)

    def equals(self, other: "Dataset") -> bool:
        return (self.dimension == other.dimension and self.radius == other.radius
                and self.kind == other.kind and np.array_equal(self.X, other.X)
                and np.array_equal(self.y, other.y))


def _check_dims(w: np.ndarray, d: int):
    if w.ndim != 1 or w.shape[0] != d:
        raise InvalidInputError(f"dimension mismatch: weight has shape {w.shape}, input has dimension {d}")


def sign(values: np.ndarray) -> np.ndarray:
    """Elementwise sign with sign(0) = +1, as float64."""
    return np.where(np.asarray(values) >= 0, 1.0, -1.0)


def classify(w: VectorLike, x) -> int:
    """Predicted label sign(<w, x>) of a single point."""
    w = as_vector(w)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError("classify expects a single feature vector")
    _check_dims(w, x.shape[0])
    return 1 if float(w @ x) >= 0 else -1


def predict(w: VectorLike, X: np.ndarray) -> np.ndarray:
    """Vectorized :func:`classify` over the rows of ``X``."""
    w = as_vector(w)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInputError("predict expects a 2-d feature array")
    _check_dims(w, X.shape[1])
    return sign(X @ w)


def classification_error(w: VectorLike, data: Dataset) -> float:
    """Fraction of examples in ``data`` that ``w`` misclassifies."""
    if len(data) == 0:
        raise InvalidInputError("classification error of an empty dataset is undefined")
    labels = data.labels
    return float(np.mean(predict(w, data.X) != labels))


def project_unit_sphere(v: VectorLike) -> Hypothesis:
    v = as_vector(v)
    norm = float(np.linalg.norm(v))
    if not norm >= DEGENERATE_NORM:
        raise DegenerateVectorError(f"cannot normalize a vector of norm {norm:.3g}")
    return Hypothesis(v / norm)


def unit_vector(d: int, i: int = 0) -> np.ndarray:
    e = np.zeros(d)
    e[i] = 1.0
    return e
