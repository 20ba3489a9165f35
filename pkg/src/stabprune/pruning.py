"""Ordering-based ensemble pruning.

Each member is condensed to an importance vector on the simplex, the
members are greedily re-sequenced so that the averaged importance vector
stays as close as possible (squared loss) to a reference vector, and only
a leading fraction of the sequence is fused.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Dataset, center
from .solvers import LambdaGrid, lasso_path, normalized_abs, select_by_information_criterion, stepwise_reference
from .stabsel import MemberResult


@dataclass(frozen=True)
class ImportanceVector:
    r: np.ndarray
    raw: np.ndarray
    fallback: bool = False


def condense(m: MemberResult | np.ndarray, normalize: bool = True) -> ImportanceVector:
    """Fraction of the grid over which each variable is selected.

    The raw row means are rescaled to sum to one; a member that never
    selects anything maps to the uniform vector and is flagged.
    """
    T = m.T if isinstance(m, MemberResult) else np.asarray(m)
    raw = T.mean(axis=1)
    if not normalize:
        return ImportanceVector(raw, raw, False)
    total = raw.sum()
    if total == 0:
        return ImportanceVector(np.full(raw.size, 1.0 / raw.size), raw, True)
    return ImportanceVector(raw / total, raw, False)


def condense_all(members: Sequence[MemberResult | np.ndarray], normalize: bool = True) -> np.ndarray:
    """(B, p) matrix of condensed importance vectors."""
    return np.stack([condense(m, normalize).r for m in members])


def _as_matrix(R) -> np.ndarray:
    if isinstance(R, np.ndarray):
        return np.atleast_2d(R.astype(float))
    return np.stack([v.r if isinstance(v, ImportanceVector) else np.asarray(v, dtype=float) for v in R])


def loss_matrix(R, r_ref) -> np.ndarray:
    """Gram matrix E_ij = (r_i - r_ref)'(r_j - r_ref)."""
    R = _as_matrix(R)
    r_ref = r_ref.r if isinstance(r_ref, ImportanceVector) else np.asarray(r_ref, dtype=float)
    if R.shape[1] != r_ref.shape[0]:
        raise ValueError(f"importance vectors have length {R.shape[1]}, reference has {r_ref.shape[0]}")
    D = R - r_ref
    E = D @ D.T
    return 0.5 * (E + E.T)


@dataclass(frozen=True)
class Ordering:
    S: np.ndarray  # member positions, best first
    trajectory: np.ndarray  # trajectory[u-1] = loss of the first u members
    cut: int | None = None

    def with_cut(self, U: int) -> "Ordering":
        if not 1 <= U <= self.S.size:
            raise ValueError(f"cut {U} out of range 1..{self.S.size}")
        return Ordering(self.S, self.trajectory, U)

    def to_csv(self, path: str | Path, member_ids: Sequence[int] | None = None) -> None:
        ids = self.S if member_ids is None else np.asarray(member_ids)[self.S]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "member_index", "ensemble_loss"])
            for u, (m, loss) in enumerate(zip(ids, self.trajectory), start=1):
                w.writerow([u, int(m), repr(float(loss))])


def greedy_order(E: np.ndarray) -> Ordering:
    """Greedy forward ordering minimizing the running ensemble loss.

    Starts from the member with the smallest diagonal entry; each later
    step appends the candidate ``k`` minimizing
    ``(sum_{i,j in S} E_ij + 2 sum_{i in S} E_ik + E_kk) / u^2``. Column
    sums over the chosen set are updated incrementally, so the whole
    ordering costs O(B^2). Ties go to the smallest member index.
    """
    E = np.asarray(E, dtype=float)
    B = E.shape[0]
    if E.shape != (B, B):
        raise ValueError("E must be square")
    diag = np.diag(E).copy()
    colsum = np.zeros(B)  # sum over chosen i of E[i, k]
    total = 0.0
    free = np.ones(B, dtype=bool)
    S = np.empty(B, dtype=np.int64)
    traj = np.empty(B)
    for u in range(1, B + 1):
        value = np.where(free, total + 2.0 * colsum + diag, np.inf)
        k = int(np.argmin(value))
        S[u - 1] = k
        total = float(value[k])
        traj[u - 1] = total / (u * u)
        free[k] = False
        colsum += E[k]
    return Ordering(S, traj)


def cut_size(B: int, fraction: float) -> int:
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    return max(1, int(math.floor(fraction * B + 0.5)))


def prune(members: Sequence, ordering: Ordering, fraction: float = 1 / 3) -> list:
    """Members at the first round(fraction * B) positions of the ordering."""
    if len(members) != ordering.S.size:
        raise ValueError(f"{len(members)} members but ordering has {ordering.S.size}")
    U = cut_size(len(members), fraction)
    return [members[i] for i in ordering.S[:U]]


@dataclass(frozen=True)
class InclusionDiagnostic:
    lhs: float  # partial correlation of the candidate with the reference
    rhs: float  # (1/2u) * ||r_k - r_prev|| / ||r_ref - r_prev||
    degenerate: bool = False


def inclusion_diagnostic(E: np.ndarray, ordering: Ordering, u: int) -> InclusionDiagnostic:
    """Usefulness vs. difference for the member that made the ensemble size ``u``.

    Everything is expressed through E: with A the first ``u-1`` members and
    k the ``u``-th, ||r_k - r_A||^2 = E_kk - 2 m_k + t and
    ||r_ref - r_A||^2 = t, where m_k is the mean of E_ik over A and t the
    mean of E over A x A.
    """
    E = np.asarray(E, dtype=float)
    B = ordering.S.size
    if not 2 <= u <= B:
        raise ValueError(f"u must lie in 2..{B}, got {u}")
    A = ordering.S[: u - 1]
    k = ordering.S[u - 1]
    t = E[np.ix_(A, A)].mean()
    m = E[A, k].mean()
    diff_sq = E[k, k] - 2.0 * m + t
    inner = t - m  # (r_k - r_A)'(r_ref - r_A)
    if diff_sq <= 0.0 or t <= 0.0:
        return InclusionDiagnostic(math.nan, math.nan, True)
    a = math.sqrt(diff_sq)
    b = math.sqrt(t)
    return InclusionDiagnostic(inner / (a * b), a / (2.0 * u * b), False)


def reference_vector(d: Dataset, grid: LambdaGrid | None = None) -> tuple[np.ndarray, dict]:
    """Reference importance vector on the training data.

    Gaussian data use forward-backward stepwise least squares. For the
    binomial family the lasso path point minimizing deviance + 2 df is
    used instead, since F-test stepwise does not carry over to p > n
    logistic fits.
    """
    d = center(d)
    if d.family == "gaussian":
        fit = stepwise_reference(d.X, d.y)
        return fit.r_ref, {"reference": "stepwise", "selected": fit.selected, "fallback": fit.fallback}
    if grid is None:
        raise ValueError("binomial reference needs the lambda grid")
    path = lasso_path(d.X, d.y, grid, "binomial")
    k = select_by_information_criterion(d.X, d.y, path)
    r, fallback = normalized_abs(path.coefficients[:, k], d.p)
    return r, {"reference": "lasso deviance+2df (binomial substitute for stepwise)", "lambda_index": k,
               "fallback": fallback}
