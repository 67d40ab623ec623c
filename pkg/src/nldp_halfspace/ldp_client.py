"""User-side local randomizers and the privacy ledger.

Each user releases, exactly once, a base noisy copy of its (normalized)
example plus a batch of fresh noisy copies that the server multiplies together
to estimate polynomial terms without bias.

Noise variances (natural logarithm throughout)::

    base          32 ln(1.25/delta) / eps^2
    copy          8 ln(1.25/delta) p^2 (p+1)^2 / eps^2
    label (logistic only)  8 ln(1.25/delta) p^2 / eps^2
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Sequence, Tuple, Union

import numpy as np

from .core import Dataset, Example, PrivacyParams
from .errors import InvalidInputError, MalformedReportError, PreconditionError
from .rng import substream

# replace-one sensitivity of a vector in the unit ball (and of a label in [-1, 1])
SENSITIVITY = 2.0
_NORM_SLACK = 1e-12

HINGE = "hinge"
LOGISTIC = "logistic"


# ------------------------------------------------------------------ calibration

def hinge_variance_base(eps: float, delta: float) -> float:
    return 32 * math.log(1.25 / delta) / eps ** 2


def hinge_variance_copy(eps: float, delta: float, p: int) -> float:
    return 8 * math.log(1.25 / delta) * p ** 2 * (p + 1) ** 2 / eps ** 2


def logistic_variance_label(eps: float, delta: float, p: int) -> float:
    return 8 * math.log(1.25 / delta) * p ** 2 / eps ** 2


def hinge_sigma_base(eps: float, delta: float) -> float:
    PrivacyParams(eps, delta)
    return math.sqrt(hinge_variance_base(eps, delta))


def hinge_sigma_copy(eps: float, delta: float, p: int) -> float:
    PrivacyParams(eps, delta)
    return math.sqrt(hinge_variance_copy(eps, delta, p))


def logistic_sigma_label(eps: float, delta: float, p: int) -> float:
    PrivacyParams(eps, delta)
    return math.sqrt(logistic_variance_label(eps, delta, p))


def gaussian_epsilon(sigma: float, delta: float, sensitivity: float = SENSITIVITY) -> float:
    """Invert sigma = sensitivity * sqrt(2 ln(1.25/delta)) / eps."""
    if sigma <= 0:
        return math.inf
    return sensitivity * math.sqrt(2 * math.log(1.25 / delta)) / sigma


def gaussian_release(v, sensitivity: float, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """v plus i.i.d. N(0, sigma^2) noise per coordinate.

    ``sensitivity`` is validated but does not enter the draw; callers pass the
    sigma they want and account for it separately.
    """
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    if not sensitivity > 0:
        raise InvalidInputError(f"sensitivity must be positive, got {sensitivity}")
    v = np.asarray(v, dtype=np.float64)
    return v + sigma * rng.standard_normal(v.shape)


# ------------------------------------------------------------------ reports

@dataclass(frozen=True)
class NoiseRecord:
    """Variances a report was generated with, plus the delta they were calibrated for."""

    var_base: float
    var_copy: float
    delta: float
    var_label: float = 0.0

    @property
    def sigma_base(self) -> float:
        return math.sqrt(self.var_base)

    @property
    def sigma_copy(self) -> float:
        return math.sqrt(self.var_copy)

    @property
    def sigma_label(self) -> float:
        return math.sqrt(self.var_label)


def hinge_noise(params: PrivacyParams, p: int) -> NoiseRecord:
    return NoiseRecord(hinge_variance_base(params.epsilon, params.delta),
                       hinge_variance_copy(params.epsilon, params.delta, p), params.delta)


def logistic_noise(params: PrivacyParams, p: int) -> NoiseRecord:
    return NoiseRecord(hinge_variance_base(params.epsilon, params.delta),
                       hinge_variance_copy(params.epsilon, params.delta, p), params.delta,
                       logistic_variance_label(params.epsilon, params.delta, p))


@dataclass(frozen=True, eq=False)
class HingeReport:
    x0: np.ndarray
    y0: float
    x_copies: np.ndarray   # (p(p+1), d)
    y_copies: np.ndarray   # (p(p+1),)
    p: int
    noise: NoiseRecord

    kind = HINGE

    def validate(self):
        n_copies = self.p * (self.p + 1)
        if self.x_copies.shape != (n_copies, self.x0.shape[0]) or self.y_copies.shape != (n_copies,):
            raise MalformedReportError(
                f"hinge report of degree {self.p} needs {n_copies} x/y copies, got "
                f"{self.x_copies.shape} and {self.y_copies.shape}")


@dataclass(frozen=True, eq=False)
class LogisticReport:
    x0: np.ndarray
    y0: float
    x_copies: np.ndarray   # (p(p+1), d)
    y_p: float
    p: int
    noise: NoiseRecord

    kind = LOGISTIC

    def validate(self):
        n_copies = self.p * (self.p + 1)
        if self.x_copies.shape != (n_copies, self.x0.shape[0]):
            raise MalformedReportError(
                f"logistic report of degree {self.p} needs {n_copies} x copies, got {self.x_copies.shape}")
        if not np.isscalar(self.y_p) and np.ndim(self.y_p) != 0:
            raise MalformedReportError("logistic report must carry exactly one label copy y_p")


Report = Union[HingeReport, LogisticReport]


@dataclass(frozen=True, eq=False)
class ReportBatch:
    """Column-wise stack of same-kind reports (used for audits and training).

    ``y_copies`` is ``(n, p(p+1))`` for hinge reports and ``(n, 1)`` holding
    y_p for logistic ones.
    """

    kind: str
    x0: np.ndarray
    y0: np.ndarray
    x_copies: np.ndarray
    y_copies: np.ndarray
    p: int
    noise: NoiseRecord

    def __len__(self):
        return self.x0.shape[0]

    def __getitem__(self, i: int) -> Report:
        if self.kind == HINGE:
            return HingeReport(self.x0[i], float(self.y0[i]), self.x_copies[i], self.y_copies[i],
                               self.p, self.noise)
        return LogisticReport(self.x0[i], float(self.y0[i]), self.x_copies[i],
                              float(self.y_copies[i, 0]), self.p, self.noise)

    def __iter__(self) -> Iterator[Report]:
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_reports(cls, reports: Sequence[Report]) -> "ReportBatch":
        if not reports:
            raise InvalidInputError("cannot stack an empty report list")
        first = reports[0]
        if any(r.kind != first.kind or r.p != first.p or r.noise != first.noise for r in reports):
            raise MalformedReportError("reports in a batch must share kind, degree and noise record")
        for r in reports:
            r.validate()
        if first.kind == HINGE:
            yc = np.stack([r.y_copies for r in reports])
        else:
            yc = np.array([[r.y_p] for r in reports], dtype=np.float64)
        return cls(first.kind, np.stack([r.x0 for r in reports]), np.array([r.y0 for r in reports]),
                   np.stack([r.x_copies for r in reports]), yc, first.p, first.noise)


# ------------------------------------------------------------------ encoders

def _check_degree(p):
    if int(p) != p or p < 0:
        raise InvalidInputError(f"degree must be a non-negative integer, got {p}")


def hinge_encode_batch(X: np.ndarray, y: np.ndarray, params: PrivacyParams, p: int,
                       rng: np.random.Generator) -> ReportBatch:
    """Vectorized hinge randomizer for the rows of ``X`` (each of norm <= 1)."""
    _check_degree(p)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if np.linalg.norm(X, axis=1).max(initial=0.0) > 1 + _NORM_SLACK:
        raise PreconditionError("hinge_encode needs ||x|| <= 1; normalize by R first")
    n, d = X.shape
    P = p * (p + 1)
    noise = hinge_noise(params, p)
    sb, sc = noise.sigma_base, noise.sigma_copy
    x0 = X + sb * rng.standard_normal((n, d))
    y0 = y + sb * rng.standard_normal(n)
    xc = X[:, None, :] + sc * rng.standard_normal((n, P, d))
    yc = y[:, None] + sc * rng.standard_normal((n, P))
    return ReportBatch(HINGE, x0, y0, xc, yc, p, noise)


def logistic_encode_batch(X: np.ndarray, y: np.ndarray, params: PrivacyParams, p: int, R: float,
                          rng: np.random.Generator) -> ReportBatch:
    """Vectorized logistic randomizer; normalizes by ``R`` internally."""
    _check_degree(p)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if np.linalg.norm(X, axis=1).max(initial=0.0) > R * (1 + _NORM_SLACK):
        raise PreconditionError(f"logistic_encode needs ||x|| <= R = {R}")
    Xn = X / R
    n, d = Xn.shape
    P = p * (p + 1)
    noise = logistic_noise(params, p)
    sb, sc, sl = noise.sigma_base, noise.sigma_copy, noise.sigma_label
    x0 = Xn + sb * rng.standard_normal((n, d))
    y0 = y + sb * rng.standard_normal(n)
    xc = Xn[:, None, :] + sc * rng.standard_normal((n, P, d))
    yp = y[:, None] + sl * rng.standard_normal((n, 1))
    return ReportBatch(LOGISTIC, x0, y0, xc, yp, p, noise)


def _single(example: Example):
    if example.y not in (-1, 1):
        raise PreconditionError("only labeled examples can be encoded")
    return example.x[None, :], np.array([float(example.y)])


def hinge_encode(example: Example, params: PrivacyParams, p: int, rng: np.random.Generator) -> HingeReport:
    X, y = _single(example)
    return hinge_encode_batch(X, y, params, p, rng)[0]


def logistic_encode(example: Example, params: PrivacyParams, p: int, R: float,
                    rng: np.random.Generator) -> LogisticReport:
    X, y = _single(example)
    return logistic_encode_batch(X, y, params, p, R, rng)[0]


def encode_dataset(data: Dataset, mechanism: str, params: PrivacyParams, p: int, seed: int,
                   R: float = None, offset: int = 0) -> ReportBatch:
    """Encode every user of ``data`` once, user i on substream (seed, "encode", offset + i).

    The hinge mechanism expects already-normalized data; the logistic one
    normalizes by ``R`` (default: the dataset radius).
    """
    X, y = data.X, data.labels
    parts = []
    for i in range(len(data)):
        rng = substream(seed, "encode", offset + i)
        if mechanism == HINGE:
            parts.append(hinge_encode_batch(X[i:i + 1], y[i:i + 1], params, p, rng))
        elif mechanism == LOGISTIC:
            parts.append(logistic_encode_batch(X[i:i + 1], y[i:i + 1], params, p,
                                               data.radius if R is None else R, rng))
        else:
            raise InvalidInputError(f"unknown mechanism {mechanism!r}")
    if not parts:
        raise InvalidInputError("cannot encode an empty dataset")
    return concat_batches(parts)


def concat_batches(batches: Sequence[ReportBatch]) -> ReportBatch:
    first = batches[0]
    return ReportBatch(first.kind, np.concatenate([b.x0 for b in batches]),
                       np.concatenate([b.y0 for b in batches]),
                       np.concatenate([b.x_copies for b in batches]),
                       np.concatenate([b.y_copies for b in batches]), first.p, first.noise)


# ------------------------------------------------------------------ accounting

@dataclass
class BudgetLedger:
    releases: List[Tuple[str, float, float]] = field(default_factory=list)

    def add(self, label: str, eps: float, delta: float):
        self.releases.append((label, float(eps), float(delta)))

    @property
    def epsilon_total(self) -> float:
        return float(sum(e for _, e, _ in self.releases))

    @property
    def delta_total(self) -> float:
        return float(sum(d for _, _, d in self.releases))

    @property
    def totals(self) -> Tuple[float, float]:
        return self.epsilon_total, self.delta_total

    def __len__(self):
        return len(self.releases)

    def to_dict(self) -> dict:
        return {"schema": 1, "composition": "basic", "releases": len(self.releases),
                "epsilon_total": self.epsilon_total, "delta_total": self.delta_total}


def _ledger_entries(kind: str, p: int, noise: NoiseRecord):
    P = p * (p + 1)
    eps_base = gaussian_epsilon(noise.sigma_base, noise.delta)
    eps_copy = gaussian_epsilon(noise.sigma_copy, noise.delta)
    entries = [("x0", eps_base), ("y0", eps_base)]
    entries += [(f"x{j}", eps_copy) for j in range(1, P + 1)]
    if kind == HINGE:
        entries += [(f"y{j}", eps_copy) for j in range(1, P + 1)]
    else:
        entries.append(("y_p", gaussian_epsilon(noise.sigma_label, noise.delta)))
    return entries


def per_user_budget(kind: str, params: PrivacyParams, p: int) -> BudgetLedger:
    """Ledger of the single report every user of a mechanism sends."""
    noise = hinge_noise(params, p) if kind == HINGE else logistic_noise(params, p)
    ledger = BudgetLedger()
    for label, eps in _ledger_entries(kind, p, noise):
        ledger.add(label, eps, noise.delta)
    return ledger


def budget_report(report) -> BudgetLedger:
    """Per-release (eps_j, delta_j) of one user's report under basic composition.

    eps_j is inferred from the stored sigma via the Gaussian-mechanism relation
    with sensitivity 2; delta_j is the calibration delta.  Accepts a single
    report, or an iterable of reports (possibly empty) whose releases are all
    listed.
    """
    ledger = BudgetLedger()
    if report is None:
        return ledger
    if isinstance(report, (HingeReport, LogisticReport)):
        reports = [report]
    elif isinstance(report, ReportBatch):
        reports = [report[0]] * len(report) if len(report) else []
    else:
        reports = list(report)
    for r in reports:
        for label, eps in _ledger_entries(r.kind, r.p, r.noise):
            ledger.add(label, eps, r.noise.delta)
    return ledger


# ------------------------------------------------------------------ wire format

def report_to_dict(r: Report) -> dict:
    out = {"schema": 1, "kind": r.kind, "p": r.p,
           "x0": [float(v) for v in r.x0], "y0": float(r.y0),
           "x_copies": [[float(v) for v in row] for row in r.x_copies],
           "sigma_base": r.noise.sigma_base, "sigma_copy": r.noise.sigma_copy,
           "var_base": r.noise.var_base, "var_copy": r.noise.var_copy, "delta": r.noise.delta}
    if r.kind == HINGE:
        out["y_copies"] = [float(v) for v in r.y_copies]
    else:
        out["y_p"] = float(r.y_p)
        out["sigma_label"] = r.noise.sigma_label
        out["var_label"] = r.noise.var_label
    return out


def report_from_dict(obj: dict) -> Report:
    try:
        kind, p = obj["kind"], int(obj["p"])
        noise = NoiseRecord(float(obj["var_base"]), float(obj["var_copy"]), float(obj["delta"]),
                            float(obj.get("var_label", 0.0)))
        x0 = np.array(obj["x0"], dtype=np.float64)
        xc = np.array(obj["x_copies"], dtype=np.float64).reshape(-1, x0.shape[0])
        if kind == HINGE:
            r = HingeReport(x0, float(obj["y0"]), xc, np.array(obj["y_copies"], dtype=np.float64), p, noise)
        elif kind == LOGISTIC:
            r = LogisticReport(x0, float(obj["y0"]), xc, float(obj["y_p"]), p, noise)
        else:
            raise MalformedReportError(f"unknown report kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedReportError(f"malformed report: {exc}") from exc
    r.validate()
    return r


def write_reports(path: Union[str, os.PathLike], reports: Iterable[Report]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(json.dumps(report_to_dict(r)))
            fh.write("\n")
            count += 1
    return count


def read_reports(path: Union[str, os.PathLike]) -> List[Report]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(report_from_dict(json.loads(line)))
    return out
