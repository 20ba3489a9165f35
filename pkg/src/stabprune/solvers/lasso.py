"""Lasso regularization paths and lambda-grid construction.

Objective conventions (recorded in run metadata so lambda values are
interpretable):

* gaussian: ``(1/2n) ||y - X b||^2 + lam ||b||_1`` on centered data, no intercept
* binomial: ``(1/n) NLL(b0, b) + lam ||b||_1`` with an unpenalized intercept ``b0``
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels

TOL = 1e-9
MAX_SWEEPS = 10_000
COEF_CAP = 1e3
KKT_TOL = 1e-7
GRID_SHRINK = 0.7
GRID_RTOL = 0.01
GRID_FLOOR = 1e-8

OBJECTIVE_INFO = {
    "gaussian": "(1/2n)*RSS + lambda*||b||_1, centered data, no intercept",
    "binomial": "(1/n)*NLL + lambda*||b||_1, unpenalized intercept",
    "solver": "coordinate descent, active-set cycling, warm starts",
    "tol_max_coef_change": TOL,
    "max_sweeps": MAX_SWEEPS,
}


class ConvergenceError(RuntimeError):
    """Coordinate descent hit the sweep limit."""

    def __init__(self, msg: str, lambda_index: int | None = None):
        super().__init__(msg)
        self.lambda_index = lambda_index


class DegenerateGridError(ValueError):
    """lambda_max is zero, so no log-spaced grid exists."""


class DegenerateGridWarning(UserWarning):
    pass


class SeparationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LambdaGrid:
    values: np.ndarray
    lambda_max: float
    q_target: int | None = None
    attained: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("grid needs at least two values")
        if not np.all(v > 0) or not np.all(np.diff(v) < 0):
            raise ValueError("grid must be positive and strictly decreasing")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def K(self) -> int:
        return self.values.size

    @property
    def lambda_min(self) -> float:
        return float(self.values[-1])

    @classmethod
    def geometric(cls, lam_max: float, lam_min: float, K: int, **kw) -> "LambdaGrid":
        if K < 2:
            raise ValueError("K must be >= 2")
        if not 0 < lam_min < lam_max:
            raise ValueError(f"need 0 < lambda_min < lambda_max, got {lam_min}, {lam_max}")
        ratio = (lam_min / lam_max) ** (1.0 / (K - 1))
        values = lam_max * ratio ** np.arange(K)
        return cls(values, lambda_max=lam_max, **kw)


@dataclass(frozen=True)
class PathFit:
    lambdas: np.ndarray
    coefficients: np.ndarray  # p x K
    intercepts: np.ndarray  # K, zeros for gaussian
    family: str
    sweeps: np.ndarray

    @property
    def active_counts(self) -> np.ndarray:
        return np.count_nonzero(self.coefficients, axis=0)

    @property
    def support(self) -> np.ndarray:
        """Binary p x K selection matrix."""
        return (self.coefficients != 0).astype(np.uint8)

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            p = self.coefficients.shape[0]
            w.writerow(["k", "lambda", "intercept", "active", *[f"b{j + 1}" for j in range(p)]])
            for k, lam in enumerate(self.lambdas):
                w.writerow([k, repr(float(lam)), repr(float(self.intercepts[k])), int(self.active_counts[k]),
                            *(repr(float(b)) for b in self.coefficients[:, k])])


def _prep(X, y):
    # writable copies: numba compiles read-only arrays as a separate type
    X = np.array(X, dtype=float, order="F", copy=True)
    y = np.array(y, dtype=float, copy=True)
    return X, y


def lambda_max(X: np.ndarray, y: np.ndarray, family: str = "gaussian") -> float:
    """max_j |x_j' y| / n; the smallest lambda with an all-zero solution.

    For the binomial family the response is taken relative to its mean,
    which is what the intercept absorbs. A zero return value triggers a
    :class:`DegenerateGridWarning`.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if family == "binomial":
        y = y - y.mean()
    lam = float(np.max(np.abs(X.T @ y)) / X.shape[0]) if X.size else 0.0
    if lam == 0.0:
        warnings.warn("lambda_max is zero: y is orthogonal to every column", DegenerateGridWarning, stacklevel=2)
    return lam


def _raw_path(X, y, lambdas, family, beta0=None, b00=None):
    p = X.shape[1]
    beta0 = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    lambdas = np.array(lambdas, dtype=float)
    if family == "gaussian":
        coefs, sweeps, ok = _kernels.path_gaussian(X, y, lambdas, beta0, TOL, MAX_SWEEPS)
        intercepts = np.zeros(lambdas.size)
        capped = np.zeros(lambdas.size, dtype=bool)
    elif family == "binomial":
        if b00 is None:
            ybar = min(max(y.mean(), 1e-6), 1 - 1e-6)
            b00 = math.log(ybar / (1 - ybar))
        coefs, intercepts, sweeps, ok, capped = _kernels.path_binomial(
            X, y, lambdas, beta0, float(b00), TOL, MAX_SWEEPS, COEF_CAP
        )
    else:
        raise ValueError(f"unknown family {family!r}")
    if not ok.all():
        k = int(np.flatnonzero(~ok)[0])
        raise ConvergenceError(
            f"coordinate descent did not converge within {MAX_SWEEPS} sweeps at lambda index {k} "
            f"(lambda={lambdas[k]:.6g})",
            lambda_index=k,
        )
    if capped.any():
        warnings.warn(
            f"coefficients capped at +/-{COEF_CAP:g} (separable data) at {int(capped.sum())} grid point(s)",
            SeparationWarning,
            stacklevel=3,
        )
    return coefs, intercepts, sweeps


def lasso_path(X: np.ndarray, y: np.ndarray, grid: LambdaGrid | np.ndarray, family: str = "gaussian") -> PathFit:
    """Warm-started lasso solutions at every grid value (descending)."""
    lambdas = grid.values if isinstance(grid, LambdaGrid) else np.asarray(grid, dtype=float)
    X, y = _prep(X, y)
    coefs, intercepts, sweeps = _raw_path(X, y, lambdas, family)
    return PathFit(np.array(lambdas), coefs, intercepts, family, sweeps)


class _Prober:
    """Single-lambda solves with warm starts, used by the grid search."""

    def __init__(self, X, y, family):
        self.X, self.y = _prep(X, y)
        self.family = family
        self.beta = np.zeros(self.X.shape[1])
        self.b0 = None
        self.cache: dict[float, tuple[int, np.ndarray, float | None]] = {}

    def count(self, lam: float, start: float | None = None) -> int:
        if start is not None and start in self.cache:
            _, self.beta, self.b0 = self.cache[start]
        coefs, intercepts, _ = _raw_path(self.X, self.y, [lam], self.family, self.beta, self.b0)
        self.beta = coefs[:, 0].copy()
        self.b0 = float(intercepts[0]) if self.family == "binomial" else None
        c = int(np.count_nonzero(self.beta))
        self.cache[lam] = (c, self.beta, self.b0)
        return c


def find_lambda_min(X, y, q_target: int, family: str = "gaussian", lam_max: float | None = None) -> tuple[float, bool]:
    """Smallest lambda at which the lasso has exactly ``q_target`` nonzeros,
    i.e. the lambda farthest from lambda_max with that model size, taken on
    the stretch of path before the count first exceeds the target.

    Geometric probes (factor 0.7) from lambda_max locate the first probe
    with more than ``q_target`` nonzeros; bisection then narrows the
    bracket to 1% relative width, keeping the upper end (the smaller
    model). If the path jumps over ``q_target`` inside the bracket the
    bisection continues until a lambda with exactly ``q_target`` is found
    or the bracket collapses, in which case the lower end (first lambda
    with at least ``q_target``) is returned.

    Returns ``(lambda_min, attained)``. When the count never exceeds the
    target before ``1e-8 * lambda_max`` the floor itself is returned, and
    ``attained`` tells whether it reaches ``q_target``.
    """
    if lam_max is None:
        lam_max = lambda_max(X, y, family)
    if lam_max <= 0:
        raise DegenerateGridError("lambda_max is zero")
    probe = _Prober(X, y, family)
    floor = GRID_FLOOR * lam_max
    hi, c_hi = lam_max, 0
    lo = lam_max * GRID_SHRINK
    while True:
        c = probe.count(lo, hi)
        if c > q_target:
            break
        if lo <= floor:
            if c < q_target:
                warnings.warn(
                    f"q_target={q_target} not reached at lambda={floor:.3g}; grid truncated there",
                    DegenerateGridWarning,
                    stacklevel=2,
                )
            return floor, c >= q_target
        hi, c_hi = lo, c
        lo = max(lo * GRID_SHRINK, floor)
    for _ in range(200):
        if (hi - lo) / lo <= GRID_RTOL and c_hi == q_target:
            break
        mid = 0.5 * (hi + lo)
        if mid in (hi, lo):
            break
        c = probe.count(mid, hi)
        if c > q_target:
            lo = mid
        else:
            hi, c_hi = mid, c
    if c_hi == q_target:
        return hi, True
    return lo, True


def make_grid(X, y, K: int = 100, q_target: int | None = None, family: str = "gaussian") -> LambdaGrid:
    """K log-spaced values from lambda_max down to the q_target lambda_min."""
    n, p = np.shape(X)
    if K < 2:
        raise ValueError("K must be >= 2")
    if q_target is None:
        q_target = default_q(p)
    if not 1 <= q_target <= min(n - 1, p):
        raise ValueError(f"q_target={q_target} must lie in [1, min(n-1, p)] = [1, {min(n - 1, p)}]")
    lam_max = lambda_max(X, y, family)
    if lam_max <= 0:
        raise DegenerateGridError("lambda_max is zero; cannot build a log-spaced grid")
    lam_min, attained = find_lambda_min(X, y, q_target, family, lam_max)
    return LambdaGrid.geometric(lam_max, lam_min, K, q_target=q_target, attained=attained)


def default_q(p: int) -> int:
    """ceil(sqrt(1.6 p)): targets E(V) <= 4 at threshold 0.7."""
    return math.ceil(math.sqrt(1.6 * p) - 1e-12)


def lowdim_q(p: int) -> int:
    return math.ceil(0.8 * p - 1e-12)


def kkt_violation(X, y, beta, lam, family="gaussian", intercept=0.0) -> float:
    """Largest violation of the lasso stationarity conditions at one lambda."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    eta = X @ beta
    if family == "binomial":
        eta = eta + intercept
        resid = y - 0.5 * (1.0 + np.tanh(0.5 * eta))
    else:
        resid = y - eta
    grad = X.T @ resid / n
    active = beta != 0
    viol = np.zeros_like(grad)
    viol[active] = np.abs(grad[active] - lam * np.sign(beta[active]))
    viol[~active] = np.maximum(np.abs(grad[~active]) - lam, 0.0)
    out = float(viol.max()) if viol.size else 0.0
    if family == "binomial":
        out = max(out, abs(resid.mean()))
    return out


def path_kkt(X, y, fit: PathFit) -> np.ndarray:
    return np.array([
        kkt_violation(X, y, fit.coefficients[:, k], lam, fit.family, fit.intercepts[k])
        for k, lam in enumerate(fit.lambdas)
    ])


def information_criterion(X, y, fit: PathFit) -> np.ndarray:
    """In-sample deviance + 2 * df along the path.

    Gaussian deviance uses the profile form ``n log(RSS / n)``; binomial
    uses ``-2 log-likelihood``. df is the active count (plus the intercept
    for binomial).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    eta = X @ fit.coefficients + fit.intercepts[None, :]
    df = fit.active_counts.astype(float)
    if fit.family == "binomial":
        ll = y[:, None] * eta - np.logaddexp(0.0, eta)
        dev = -2.0 * ll.sum(axis=0)
        df = df + 1
    else:
        rss = ((y[:, None] - eta) ** 2).sum(axis=0)
        dev = n * np.log(np.maximum(rss, 1e-300) / n)
    return dev + 2.0 * df


def select_by_information_criterion(X, y, fit: PathFit) -> int:
    """Grid index minimizing deviance + 2 df (first minimum wins)."""
    return int(np.argmin(information_criterion(X, y, fit)))
