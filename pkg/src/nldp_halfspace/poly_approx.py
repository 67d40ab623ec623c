"""Polynomial approximations consumed by the two NLDP gradient estimators.

Hinge side: the smoothed hinge ``f_b(x) = (1/R - x + sqrt((1/R - x)^2 + b^2)) / 2``
and a Bernstein polynomial of its derivative on [0, 1].

Logistic side: ``log(1 + exp(-y z)) = -y h1(z) + h2(z)`` with ``h1(z) = z/2`` and
``h2(z) = z/2 + log(1 + exp(-z))``; the derivatives ``h1'(s*u)``, ``h2'(s*u)``
(``s = R*rho``) are interpolated at Chebyshev points on [-1, 1] and stored as
monomial coefficients in ``u``.
"""

from __future__ import annotations

import csv
import io
import math
import threading
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.special import expit

from .errors import ConfigError, InvalidInputError

MAX_CHEBYSHEV_DEGREE = 30
DEFAULT_BERNSTEIN_DEGREE = 16


class _Tally:
    """Thread-safe counter for diagnostics."""

    def __init__(self):
        self._lock = threading.Lock()
        self.evaluations = 0
        self.out_of_range = 0

    def add(self, total: int, outside: int):
        with self._lock:
            self.evaluations += total
            self.out_of_range += outside

    def reset(self):
        with self._lock:
            self.evaluations = 0
            self.out_of_range = 0


bernstein_range_tally = _Tally()


# ------------------------------------------------------------ smoothed hinge

def smoothed_hinge(x, beta: float, R: float):
    _check_smoothing(beta, R)
    a = 1.0 / R - np.asarray(x, dtype=np.float64)
    return (a + np.hypot(a, beta)) / 2.0


def smoothed_hinge_derivative(x, beta: float, R: float):
    """Derivative of :func:`smoothed_hinge`; takes values in (-1, 0)."""
    _check_smoothing(beta, R)
    b = np.asarray(x, dtype=np.float64) - 1.0 / R
    return 0.5 * (-1.0 + b / np.hypot(b, beta))


def _check_smoothing(beta, R):
    if not beta > 0:
        raise InvalidInputError(f"smoothing beta must be positive, got {beta}")
    if not R > 0:
        raise InvalidInputError(f"R must be positive, got {R}")


def theoretical_bernstein_degree(alpha: float, warn: bool = True) -> float:
    """Degree p = 2 / (b^2 alpha) with b = alpha / 4 prescribed by the analysis.

    Returned as a float because it is astronomically large for any alpha of
    interest; a warning says so when it exceeds a desk-feasible degree.
    """
    if not 0 < alpha < 1:
        raise InvalidInputError("alpha must lie in (0, 1)")
    b = alpha / 4.0
    p = 2.0 / (b * b * alpha)
    if warn and p > 256:
        warnings.warn(f"theoretical Bernstein degree {p:.3g} is not feasible; "
                      "configure the degree explicitly", RuntimeWarning, stacklevel=2)
    return p


# ------------------------------------------------------------ Bernstein

@dataclass(frozen=True)
class BernsteinApprox:
    degree: int
    coefficients: np.ndarray
    beta: float
    R: float

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=np.float64)
        if c.shape != (self.degree + 1,):
            raise InvalidInputError(f"expected {self.degree + 1} coefficients, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def binomials(self) -> np.ndarray:
        """Binomial weights C(p, j) as floats."""
        return np.array([float(math.comb(self.degree, j)) for j in range(self.degree + 1)])

    def __call__(self, x):
        return bernstein_eval(self, x)


def bernstein_build(beta: float, R: float, p: int) -> BernsteinApprox:
    """Bernstein polynomial of the smoothed hinge derivative, c_i = f'(i/p)."""
    if int(p) != p or p < 0:
        raise ConfigError(f"Bernstein degree must be a non-negative integer, got {p}")
    p = int(p)
    try:
        float(math.comb(p, p // 2))
    except OverflowError:
        raise ConfigError(f"binomial weights of degree {p} overflow float64; "
                          "use a log-space evaluation mode or a smaller degree") from None
    if p == 0:
        nodes = np.zeros(1)
    else:
        nodes = np.arange(p + 1) / p
    return BernsteinApprox(p, smoothed_hinge_derivative(nodes, beta, R), beta, R)


def de_casteljau(coefficients: Sequence[float], x) -> np.ndarray:
    """Evaluate a Bernstein-form polynomial at ``x`` (any real) by de Casteljau."""
    x = np.asarray(x, dtype=np.float64)
    b = np.broadcast_to(np.asarray(coefficients, dtype=np.float64),
                        x.shape + (len(coefficients),)).copy()
    xs = x[..., None]
    for k in range(len(coefficients) - 1, 0, -1):
        b[..., :k] = (1.0 - xs) * b[..., :k] + xs * b[..., 1:k + 1]
    return b[..., 0]


def bernstein_eval(approx: BernsteinApprox, x):
    """P_p(x).  Arguments outside [0, 1] are evaluated but tallied."""
    x = np.asarray(x, dtype=np.float64)
    outside = int(np.count_nonzero((x < 0) | (x > 1)))
    bernstein_range_tally.add(int(x.size), outside)
    return de_casteljau(approx.coefficients, x)


# ------------------------------------------------------------ logistic

def logistic_split(z):
    """(h1(z), h2(z)) with -y*h1 + h2 = log(1 + exp(-y z)) for y = +-1."""
    z = np.asarray(z, dtype=np.float64)
    h1 = z / 2.0
    # z/2 + log(1 + e^-z) = |z|/2 + log1p(e^-|z|), stable for large |z|
    h2 = np.abs(z) / 2.0 + np.log1p(np.exp(-np.abs(z)))
    return h1, h2


def logistic_loss(margin):
    """log(1 + exp(-margin)), stable."""
    return np.logaddexp(0.0, -np.asarray(margin, dtype=np.float64))


def h2_derivative(z):
    """h2'(z) = sigmoid(z) - 1/2."""
    return expit(z) - 0.5


@dataclass(frozen=True)
class ChebyshevApprox:
    """Monomial coefficients in u of h1'(s u) and h2'(s u) on [-1, 1], s = R*rho."""

    degree: int
    c1: np.ndarray
    c2: np.ndarray
    scale: float

    def __post_init__(self):
        for name in ("c1", "c2"):
            c = np.array(getattr(self, name), dtype=np.float64)
            if c.shape != (self.degree + 1,):
                raise InvalidInputError(f"{name} must have {self.degree + 1} entries")
            c.setflags(write=False)
            object.__setattr__(self, name, c)

    def scaled(self):
        """Coefficients in the variable z = s*u: c_k / s^k.

        These are the coefficients the server formula multiplies by
        s^(k+1) t_k, where t_k estimates <w, x'>^k = u^k.
        """
        powers = self.scale ** np.arange(self.degree + 1)
        return self.c1 / powers, self.c2 / powers

    def eval_h1(self, u):
        return poly_eval_monomial(self.c1, u)

    def eval_h2(self, u):
        return poly_eval_monomial(self.c2, u)


def chebyshev_build(R: float, rho: float, p: int) -> ChebyshevApprox:
    """Interpolate h1'(s u), h2'(s u) at p+1 Chebyshev points, convert to monomials."""
    if int(p) != p or p < 0:
        raise ConfigError(f"Chebyshev degree must be a non-negative integer, got {p}")
    p = int(p)
    if p > MAX_CHEBYSHEV_DEGREE:
        raise ConfigError(f"monomial conversion is ill-conditioned above degree "
                          f"{MAX_CHEBYSHEV_DEGREE}; got {p}")
    s = float(R) * float(rho)
    if not s > 0:
        raise ConfigError("R * rho must be positive")
    c1 = np.zeros(p + 1)
    c1[0] = 0.5
    if p == 0:
        c2 = np.array([h2_derivative(0.0)])
    else:
        cheb = C.chebinterpolate(lambda u: h2_derivative(s * u), p)
        c2 = np.zeros(p + 1)
        mono = C.cheb2poly(cheb)
        c2[:mono.shape[0]] = mono
    return ChebyshevApprox(p, c1, c2, s)


def poly_eval_monomial(coeffs: Sequence[float], x):
    """Horner evaluation of sum_k coeffs[k] x^k."""
    x = np.asarray(x, dtype=np.float64)
    acc = np.zeros_like(x)
    for c in reversed(np.asarray(coeffs, dtype=np.float64)):
        acc = acc * x + c
    return acc


# ------------------------------------------------------------ diagnostics

def sup_grid_error(f, g, lo: float, hi: float, points: int = 10_000) -> float:
    grid = np.linspace(lo, hi, points)
    return float(np.max(np.abs(f(grid) - g(grid))))


def bernstein_error_table(beta: float, R: float, degrees: Sequence[int], points: int = 10_000):
    rows = []
    for p in degrees:
        approx = bernstein_build(beta, R, p)
        err = sup_grid_error(lambda x: de_casteljau(approx.coefficients, x),
                             lambda x: smoothed_hinge_derivative(x, beta, R), 0.0, 1.0, points)
        rows.append((int(p), err))
    return rows


def chebyshev_error_table(R: float, rho: float, degrees: Sequence[int], points: int = 10_000):
    s = R * rho
    rows = []
    for p in degrees:
        approx = chebyshev_build(R, rho, p)
        err = sup_grid_error(approx.eval_h2, lambda u: h2_derivative(s * u), -1.0, 1.0, points)
        rows.append((int(p), err))
    return rows


def inspect_csv(beta: float, R: float, rho: float, p: int, degrees: Sequence[int]) -> str:
    """Coefficient dump and sup-grid error tables as CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schema", "section", "index", "value"])
    bern = bernstein_build(beta, R, p)
    for i, c in enumerate(bern.coefficients):
        w.writerow([1, "bernstein_coefficient", i, repr(float(c))])
    cheb = chebyshev_build(R, rho, min(p, MAX_CHEBYSHEV_DEGREE))
    for i, c in enumerate(cheb.c1):
        w.writerow([1, "chebyshev_c1", i, repr(float(c))])
    for i, c in enumerate(cheb.c2):
        w.writerow([1, "chebyshev_c2", i, repr(float(c))])
    for deg, err in bernstein_error_table(beta, R, degrees):
        w.writerow([1, "bernstein_sup_error", deg, repr(err)])
    for deg, err in chebyshev_error_table(R, rho, [q for q in degrees if q <= MAX_CHEBYSHEV_DEGREE]):
        w.writerow([1, "chebyshev_sup_error", deg, repr(err)])
    return buf.getvalue()
