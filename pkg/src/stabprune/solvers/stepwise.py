"""Forward-backward stepwise regression used to build the reference
importance vector for pruning."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

P_ENTER = 0.05
P_REMOVE = 0.10
MAX_TERMS = 50

STEPWISE_INFO = {
    "method": "forward-backward stepwise, partial F-test p-values",
    "p_enter": P_ENTER,
    "p_remove": P_REMOVE,
    "max_terms": f"min(n-2, p, {MAX_TERMS})",
}


class SingularCandidateWarning(UserWarning):
    pass


@dataclass
class StepwiseFit:
    selected: list[int]
    coefficients: np.ndarray  # over ``selected``
    r_ref: np.ndarray
    history: list[tuple[str, int, float]] = field(default_factory=list)
    fallback: bool = False


def normalized_abs(beta: np.ndarray, p: int) -> tuple[np.ndarray, bool]:
    """|beta| / sum |beta|, or the uniform 1/p vector when beta is all zero."""
    a = np.abs(np.asarray(beta, dtype=float))
    total = a.sum()
    if total == 0 or not np.isfinite(total):
        return np.full(p, 1.0 / p), True
    return a / total, False


def _ols(X, y, cols):
    Xs = X[:, cols]
    coef, *_ = np.linalg.lstsq(Xs, y, rcond=None)
    resid = y - Xs @ coef
    return coef, float(resid @ resid)


def stepwise_reference(X: np.ndarray, y: np.ndarray, p_enter: float = P_ENTER, p_remove: float = P_REMOVE,
                       max_terms: int | None = None) -> StepwiseFit:
    """Forward-backward stepwise least squares on centered data.

    Each round adds the outside variable with the smallest partial F-test
    p-value if it is below ``p_enter``; otherwise removes the inside
    variable with the largest p-value if it exceeds ``p_remove``; otherwise
    stops. One residual degree of freedom is charged for the centering.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    cap = min(n - 2, p, MAX_TERMS if max_terms is None else max_terms)
    col_ss = np.einsum("ij,ij->j", X, X)
    tss = float(y @ y)

    selected: list[int] = []
    history: list[tuple[str, int, float]] = []
    seen: set[frozenset[int]] = {frozenset()}
    rss = tss
    skipped: set[int] = set()

    for _ in range(4 * p + 100):
        added = False
        if len(selected) < cap and rss > 1e-12 * max(tss, 1e-300):
            if selected:
                Q, _ = np.linalg.qr(X[:, selected])
                Xt = X - Q @ (Q.T @ X)
                r = y - Q @ (Q.T @ y)
            else:
                Xt, r = X, y
            ss = np.einsum("ij,ij->j", Xt, Xt)
            ok = ss > 1e-10 * np.maximum(col_ss, 1e-300)
            ok[selected] = False
            newly_singular = set(np.flatnonzero(~ok & (col_ss > 0)).tolist()) - set(selected) - skipped
            if newly_singular:
                skipped |= newly_singular
                warnings.warn(f"skipping {len(newly_singular)} collinear candidate(s)", SingularCandidateWarning,
                              stacklevel=2)
            if ok.any():
                gain = np.zeros(p)
                gain[ok] = (Xt[:, ok].T @ r) ** 2 / ss[ok]
                df = n - 1 - (len(selected) + 1)
                rss_new = np.maximum(rss - gain, 0.0)
                with np.errstate(divide="ignore", invalid="ignore"):
                    F = np.where(ok, gain / (rss_new / df), 0.0)
                    F = np.where(ok & (rss_new <= 0), np.inf, F)
                pv = np.where(ok, stats.f.sf(F, 1, df), np.inf)
                j = int(np.argmin(pv))
                if pv[j] < p_enter and frozenset([*selected, j]) not in seen:
                    selected.append(j)
                    seen.add(frozenset(selected))
                    _, rss = _ols(X, y, selected)
                    history.append(("add", j, float(pv[j])))
                    added = True
        if added:
            continue
        if not selected:
            break
        df = n - 1 - len(selected)
        Xs = X[:, selected]
        coef, rss = _ols(X, y, selected)
        s2 = rss / df
        if s2 <= 0:
            break
        inv_diag = np.diag(np.linalg.pinv(Xs.T @ Xs))
        t2 = coef**2 / (s2 * inv_diag)
        pv = stats.f.sf(t2, 1, df)
        i = int(np.argmax(pv))
        reduced = frozenset(selected) - {selected[i]}
        if pv[i] > p_remove and reduced not in seen:
            j = selected.pop(i)
            seen.add(frozenset(selected))
            _, rss = _ols(X, y, selected) if selected else (None, tss)
            history.append(("remove", j, float(pv[i])))
            continue
        break

    beta = np.zeros(p)
    coef = np.zeros(0)
    if selected:
        coef, _ = _ols(X, y, selected)
        beta[selected] = coef
    r_ref, fallback = normalized_abs(beta, p)
    return StepwiseFit(selected=list(selected), coefficients=coef, r_ref=r_ref, history=history, fallback=fallback)
