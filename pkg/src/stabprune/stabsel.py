"""Stability selection with a lasso base learner.

Members are lasso paths on random half-samples, all evaluated on one
lambda grid computed from the full data so their selection matrices are
column-aligned. Aggregation works on any subset of members, which is how
the pruned variant reuses this code.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Dataset, center, subsample_indices
from .randgen import STREAM_MEMBER, make_rng
from .solvers import ConvergenceError, LambdaGrid, default_q, lasso_path, make_grid


@dataclass(frozen=True)
class StabSelConfig:
    B: int = 100
    K: int = 100
    pi_thr: float = 0.7
    q_target: int | None = None  # None -> ceil(sqrt(1.6 p))
    master_seed: int = 0

    def __post_init__(self):
        if self.B < 2:
            raise ValueError(f"B must be >= 2, got {self.B}")
        if self.K < 2:
            raise ValueError(f"K must be >= 2, got {self.K}")
        if not 0.5 < self.pi_thr < 1.0:
            raise ValueError(f"pi_thr must lie in (0.5, 1), got {self.pi_thr}")
        if self.q_target is not None and self.q_target < 1:
            raise ValueError(f"q_target must be >= 1, got {self.q_target}")

    def q_for(self, p: int) -> int:
        return self.q_target if self.q_target is not None else default_q(p)


@dataclass(frozen=True)
class MemberResult:
    T: np.ndarray  # p x K, uint8
    member_index: int
    subsample_seed: tuple[int, int, int]
    rows: np.ndarray


class MemberFailure(ConvergenceError):
    def __init__(self, member_index: int, cause: ConvergenceError):
        super().__init__(f"member {member_index}: {cause}", cause.lambda_index)
        self.member_index = member_index


def shared_grid(d: Dataset, cfg: StabSelConfig) -> LambdaGrid:
    """The lambda grid every member uses, built once on the full centered data."""
    d = center(d)
    q = cfg.q_for(d.p)
    q = min(q, d.n - 1, d.p)
    return make_grid(d.X, d.y, cfg.K, q, d.family)


def fit_member(d: Dataset, grid: LambdaGrid, master_seed: int, b: int) -> MemberResult:
    seed = (int(master_seed), STREAM_MEMBER, int(b))
    rows = subsample_indices(d.n, make_rng(*seed))
    sub = center(d.take(rows))
    try:
        fit = lasso_path(sub.X, sub.y, grid, d.family)
    except ConvergenceError as e:
        raise MemberFailure(b, e) from e
    T = fit.support
    T.setflags(write=False)
    return MemberResult(T, b, seed, rows)


def generate_members(d: Dataset, cfg: StabSelConfig, grid: LambdaGrid | None = None,
                     threads: int = 1, start: int = 0) -> list[MemberResult]:
    """Fit members ``start .. start+B-1``; output order is by member index."""
    if d.n < 4:
        raise ValueError("stability selection needs n >= 4")
    if grid is None:
        grid = shared_grid(d, cfg)
    idx = range(start, start + cfg.B)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda b: fit_member(d, grid, cfg.master_seed, b), idx))
    return [fit_member(d, grid, cfg.master_seed, b) for b in idx]


@dataclass(frozen=True)
class FrequencyTable:
    per_lambda: np.ndarray  # p x K
    aggregated: np.ndarray  # p
    n_members: int


def _stack(members: Sequence[MemberResult | np.ndarray]) -> np.ndarray:
    if len(members) == 0:
        raise ValueError("cannot aggregate an empty member set")
    mats = [m.T if isinstance(m, MemberResult) else np.asarray(m) for m in members]
    shape = mats[0].shape
    for m in mats:
        if m.shape != shape:
            raise ValueError(f"member shape mismatch: {m.shape} vs {shape}")
    return np.stack(mats)


def aggregate(members: Sequence[MemberResult | np.ndarray]) -> FrequencyTable:
    T = _stack(members)
    U = T.shape[0]
    per_lambda = T.sum(axis=0, dtype=np.int64) / U
    return FrequencyTable(per_lambda, per_lambda.max(axis=1), U)


def select(freq: FrequencyTable | np.ndarray, pi_thr: float) -> np.ndarray:
    """Indices whose aggregated frequency is at least ``pi_thr``."""
    if not 0.0 < pi_thr < 1.0:
        raise ValueError(f"pi_thr must lie in (0, 1), got {pi_thr}")
    pi = freq.aggregated if isinstance(freq, FrequencyTable) else np.asarray(freq)
    return np.flatnonzero(pi >= pi_thr)


def pfer_bound(q: int, p: int, pi_thr: float) -> float:
    """Upper bound q^2 / ((2 pi_thr - 1) p) on the expected false selections."""
    if not 0.5 < pi_thr < 1.0:
        raise ValueError(f"the bound holds for pi_thr in (0.5, 1), got {pi_thr}")
    # 2*pi*p - p rather than (2*pi - 1)*p: the subtraction then happens on a
    # product already rounded near an integer, so e.g. (40, 1000, 0.7) gives 4.0 exactly
    return q * q / (2.0 * pi_thr * p - p)


def prefix_selection_curve(T: np.ndarray, order: Sequence[int], pi_thr: float) -> np.ndarray:
    """Selection indicator for every prefix of ``order``.

    ``T`` is the (B, p, K) member stack; returns a (B, p) boolean array whose
    row ``u-1`` is the selection made by the first ``u`` members in order.
    The ratio is formed exactly as in :func:`aggregate`, so prefix ``B``
    reproduces :func:`select` on the full ensemble bit for bit.
    """
    counts = np.cumsum(T[np.asarray(order)], axis=0, dtype=np.int64)
    U = np.arange(1, len(order) + 1)[:, None, None]
    return (counts / U).max(axis=2) >= pi_thr


# --- member archive -----------------------------------------------------------

def save_members(path: str | Path, members: Sequence[MemberResult], grid: LambdaGrid) -> None:
    T = _stack(members).astype(np.uint8)
    np.savez_compressed(
        path,
        T=T,
        member_index=np.array([m.member_index for m in members], dtype=np.int64),
        seeds=np.array([m.subsample_seed for m in members], dtype=np.uint64),
        rows=np.stack([m.rows for m in members]),
        lambdas=grid.values,
        lambda_max=np.array(grid.lambda_max),
    )


def load_members(path: str | Path) -> tuple[list[MemberResult], LambdaGrid]:
    with np.load(path) as z:
        members = [
            MemberResult(z["T"][i], int(z["member_index"][i]), tuple(int(s) for s in z["seeds"][i]), z["rows"][i])
            for i in range(z["T"].shape[0])
        ]
        grid = LambdaGrid(z["lambdas"], float(z["lambda_max"]))
    return members, grid
