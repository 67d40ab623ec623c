"""Error estimates with confidence intervals and the run report record."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from .errors import InvalidInputError

SCHEMA = 1
Z95 = 1.959963984540054


@dataclass(frozen=True)
class ErrorEstimate:
    """Empirical error rate with a 95% confidence half-width.

    Normal approximation, except when no (or every) point is misclassified,
    where the rule-of-three half-width 3/n is used.
    """

    estimate: float
    halfwidth: float
    n: int

    @property
    def low(self) -> float:
        return max(0.0, self.estimate - self.halfwidth)

    @property
    def high(self) -> float:
        return min(1.0, self.estimate + self.halfwidth)

    def overlaps(self, other: "ErrorEstimate") -> bool:
        return self.low <= other.high and other.low <= self.high

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "ci_halfwidth": self.halfwidth, "n": self.n}

    def __str__(self):
        return f"{self.estimate:.4f} +- {self.halfwidth:.4f} (n={self.n})"


def error_estimate(mistakes: int, n: int) -> ErrorEstimate:
    if n < 1:
        raise InvalidInputError("an error estimate needs at least one point")
    mistakes = int(mistakes)
    if mistakes in (0, n):
        return ErrorEstimate(mistakes / n, 3.0 / n, n)
    p = mistakes / n
    return ErrorEstimate(p, Z95 * math.sqrt(p * (1 - p) / n), n)


def estimate_from_predictions(pred: np.ndarray, y: np.ndarray) -> ErrorEstimate:
    pred, y = np.asarray(pred), np.asarray(y)
    return error_estimate(int(np.count_nonzero(pred != y)), y.shape[0])


def _canonical(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_canonical(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, ErrorEstimate):
        return _canonical(obj.to_dict())
    return obj


def content_hash(obj: Any) -> str:
    """sha256 of a canonical JSON rendering (sorted keys; json writes floats round-trip exactly)."""
    blob = json.dumps(_canonical(obj), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class RunReport:
    """Outcome of one pipeline run.

    ``hash`` covers everything except ``wall_clock_seconds``, so re-running a
    persisted configuration reproduces it exactly.
    """

    pipeline: str
    final_error: Optional[ErrorEstimate] = None
    intermediate_error: Optional[ErrorEstimate] = None
    intermediate_label: str = ""
    hypothesis: Optional[list] = None
    budget: Dict[str, Any] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)
    details: Dict[str, Any] = field(default_factory=dict)
    wall_clock_seconds: float = 0.0
    schema: int = SCHEMA

    def body(self) -> dict:
        out = asdict(self)
        out.pop("wall_clock_seconds")
        for key in ("final_error", "intermediate_error"):
            est = getattr(self, key)
            out[key] = est.to_dict() if est is not None else None
        return _canonical(out)

    @property
    def hash(self) -> str:
        return content_hash(self.body())

    def to_dict(self) -> dict:
        out = self.body()
        out["wall_clock_seconds"] = self.wall_clock_seconds
        out["hash"] = self.hash
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
