"""Selection and prediction metrics over replicated experiments."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

RIDGE = 1e-8
TABLE_COLUMNS = ("method", "p0", "p1", "acc", "fdr", "perr_mean", "perr_std", "M")


class RefitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EvalRecord:
    replication: int
    selected: frozenset[int]
    truth: frozenset[int]
    perr: float = math.nan

    def __post_init__(self):
        object.__setattr__(self, "selected", frozenset(int(j) for j in self.selected))
        object.__setattr__(self, "truth", frozenset(int(j) for j in self.truth))

    @property
    def false_positives(self) -> int:
        return len(self.selected - self.truth)

    @property
    def true_positives(self) -> int:
        return len(self.selected & self.truth)

    @property
    def fdr(self) -> float:
        # 0/0 := 0 for an empty selection
        return self.false_positives / max(len(self.selected), 1)


@dataclass(frozen=True)
class MetricsSummary:
    p1: float
    p0: float
    acc: float
    fdr: float
    perr_mean: float
    perr_std: float
    M: int

    def row(self, method: str) -> dict:
        d = asdict(self)
        return {"method": method, **{k: d[k] for k in TABLE_COLUMNS[1:]}}


def selection_metrics(records: Sequence[EvalRecord], d0: int, p: int) -> MetricsSummary:
    """True/false positive rates, exact-recovery rate, FDR and PErr summary.

    FDR is averaged per replication as |S \\ T| / |S| with 0/0 taken as 0.
    """
    M = len(records)
    if M < 1:
        raise ValueError("need at least one replication")
    if not 0 < d0 < p:
        raise ValueError(f"d0 must lie strictly between 0 and p={p}, got {d0}")
    tp = sum(r.true_positives for r in records)
    fp = sum(r.false_positives for r in records)
    acc = sum(r.selected == r.truth for r in records) / M
    fdr = sum(r.fdr for r in records) / M
    perr = np.array([r.perr for r in records], dtype=float)
    if np.all(np.isnan(perr)):
        mean = std = math.nan
    else:
        perr = perr[~np.isnan(perr)]
        mean = float(perr.mean())
        std = float(perr.std(ddof=1)) if perr.size > 1 else 0.0
    return MetricsSummary(tp / (d0 * M), fp / ((p - d0) * M), acc, fdr, mean, std, M)


def refit_ols(X: np.ndarray, y: np.ndarray, selected: Sequence[int]) -> tuple[np.ndarray, bool]:
    """Least-squares refit on the selected columns (centered data, no intercept).

    Returns the full-length coefficient vector and a flag telling whether
    the ridge-stabilized fallback was needed.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = np.zeros(X.shape[1])
    sel = np.asarray(sorted(selected), dtype=np.int64)
    if sel.size == 0:
        return beta, False
    Xs = X[:, sel]
    G = Xs.T @ Xs
    ridged = sel.size >= X.shape[0] or np.linalg.matrix_rank(G) < sel.size
    if ridged:
        warnings.warn("singular refit; using ridge penalty 1e-8", RefitWarning, stacklevel=2)
        G = G + RIDGE * X.shape[0] * np.eye(sel.size)
    beta[sel] = np.linalg.solve(G, Xs.T @ y)
    return beta, ridged


def refit_logistic(X: np.ndarray, y: np.ndarray, selected: Sequence[int], max_iter: int = 100,
                   cap: float = 1e3) -> tuple[np.ndarray, float]:
    """Logistic MLE (with intercept) on the selected columns via Newton steps."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    sel = np.asarray(sorted(selected), dtype=np.int64)
    Z = np.column_stack([np.ones(n), X[:, sel]])
    ybar = min(max(y.mean(), 1e-6), 1 - 1e-6)
    theta = np.zeros(Z.shape[1])
    theta[0] = math.log(ybar / (1 - ybar))

    def nll(t):
        eta = Z @ t
        return float(np.sum(np.logaddexp(0.0, eta) - y * eta))

    f = nll(theta)
    for _ in range(max_iter):
        mu = 0.5 * (1.0 + np.tanh(0.5 * (Z @ theta)))
        w = np.maximum(mu * (1 - mu), 1e-10)
        H = Z.T @ (w[:, None] * Z) + RIDGE * n * np.eye(Z.shape[1])
        step = np.linalg.solve(H, Z.T @ (y - mu))
        t = 1.0
        while t > 1e-10:
            cand = np.clip(theta + t * step, -cap, cap)
            fc = nll(cand)
            if fc <= f + 1e-12 * abs(f):
                break
            t *= 0.5
        done = np.max(np.abs(cand - theta)) < 1e-10
        theta, f = cand, fc
        if done:
            break
    beta = np.zeros(p)
    beta[sel] = theta[1:]
    return beta, float(theta[0])


def relative_prediction_error(beta_hat, beta_true, sigma: float, X_test: np.ndarray) -> float:
    """(b - b*)' S (b - b*) / sigma^2 with S = X_test' X_test / n_test."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    X_test = np.asarray(X_test, dtype=float)
    if X_test.shape[0] < 1:
        raise ValueError("empty test set")
    v = X_test @ (np.asarray(beta_hat, dtype=float) - np.asarray(beta_true, dtype=float))
    return float(v @ v / X_test.shape[0] / sigma**2)


def misclassification(beta_hat, X_test: np.ndarray, y_test: np.ndarray, intercept: float = 0.0) -> float:
    """Fraction of test rows where 1{intercept + x'b > 0} differs from y."""
    pred = (intercept + np.asarray(X_test, dtype=float) @ np.asarray(beta_hat, dtype=float)) > 0
    return float(np.mean(pred != (np.asarray(y_test) == 1)))
