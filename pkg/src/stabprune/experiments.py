"""End-to-end pipelines: one selection run, replicated benchmarks and
ordered-aggregation accuracy curves.

Every replication draws from its own seed substreams, and results are
reduced in replication order, so output does not depend on the number of
worker threads.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .dataset import Dataset, SplitSpec, center, train_test_split
from .metrics import (
    EvalRecord,
    MetricsSummary,
    misclassification,
    refit_logistic,
    refit_ols,
    relative_prediction_error,
    selection_metrics,
)
from .pruning import Ordering, condense_all, cut_size, greedy_order, loss_matrix, reference_vector
from .randgen import (
    STREAM_DATA,
    STREAM_MEMBER,
    STREAM_SPLIT,
    STREAM_TEST,
    ScenarioSpec,
    make_rng,
    make_scenario,
    make_semisynthetic,
    with_n,
)
from .solvers import LambdaGrid, default_q, lasso_path, lowdim_q, select_by_information_criterion
from .stabsel import (
    MemberResult,
    StabSelConfig,
    aggregate,
    generate_members,
    pfer_bound,
    prefix_selection_curve,
    select,
    shared_grid,
)

log = logging.getLogger(__name__)

METHODS = ("stabsel", "pruned", "lasso")


class ReplicationError(RuntimeError):
    def __init__(self, replication: int, seed: int, cause: Exception):
        super().__init__(f"replication {replication} (seed {seed}) failed: {cause}")
        self.replication = replication
        self.seed = seed
        self.cause = cause


def derive_seed(seed: int, *stream: int) -> int:
    """A 64-bit seed for a substream, e.g. the member seed of one replication."""
    state = np.random.SeedSequence([int(seed), *map(int, stream)]).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def regime_defaults(spec: ScenarioSpec | None, p: int) -> tuple[int, float]:
    """(q_target, pi_thr): the low-dimensional regime for scenario 1, else the E(V) <= 4 regime."""
    if spec is not None and spec.is_scenario1:
        return lowdim_q(p), 0.6
    return default_q(p), 0.7


def simulate(spec: ScenarioSpec, seed: int) -> tuple[Dataset, np.ndarray]:
    return make_scenario(spec, make_rng(seed, STREAM_DATA))


# --- single run ------------------------------------------------------------------

@dataclass
class RunResult:
    grid: LambdaGrid
    members: list[MemberResult]
    q_target: int
    selected: dict[str, np.ndarray] = field(default_factory=dict)
    pi_hat: dict[str, np.ndarray] = field(default_factory=dict)
    ordering: Ordering | None = None
    r_ref: np.ndarray | None = None
    reference_info: dict = field(default_factory=dict)
    lasso_index: int | None = None

    def pfer(self, p: int, pi_thr: float) -> float:
        return pfer_bound(self.q_target, p, pi_thr)


def run_methods(train: Dataset, cfg: StabSelConfig, methods: Sequence[str] = ("stabsel", "pruned"),
                fraction: float = 1 / 3, threads: int = 1, members: list[MemberResult] | None = None,
                grid: LambdaGrid | None = None) -> RunResult:
    """Fit the requested methods on one training set.

    StabSel and its pruned variant share one member pool, so they differ
    only by the ordering/cut step.
    """
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown method(s) {sorted(unknown)}; choose from {METHODS}")
    d = center(train)
    if grid is None:
        grid = shared_grid(d, cfg)
    q = grid.q_target if grid.q_target is not None else cfg.q_for(d.p)
    res = RunResult(grid=grid, members=[], q_target=q)
    if {"stabsel", "pruned"} & set(methods):
        if members is None:
            members = generate_members(d, cfg, grid, threads=threads)
        res.members = members
    if "stabsel" in methods:
        freq = aggregate(members)
        res.pi_hat["stabsel"] = freq.aggregated
        res.selected["stabsel"] = select(freq, cfg.pi_thr)
    if "pruned" in methods:
        r_ref, info = reference_vector(d, grid)
        E = loss_matrix(condense_all(members), r_ref)
        order = greedy_order(E).with_cut(cut_size(len(members), fraction))
        kept = [members[i] for i in order.S[: order.cut]]
        freq = aggregate(kept)
        res.ordering, res.r_ref, res.reference_info = order, r_ref, info
        res.pi_hat["pruned"] = freq.aggregated
        res.selected["pruned"] = select(freq, cfg.pi_thr)
    if "lasso" in methods:
        path = lasso_path(d.X, d.y, grid, d.family)
        k = select_by_information_criterion(d.X, d.y, path)
        res.lasso_index = k
        res.selected["lasso"] = np.flatnonzero(path.coefficients[:, k])
    return res


# --- evaluation -------------------------------------------------------------------

@dataclass(frozen=True)
class Truth:
    beta: np.ndarray
    sigma: float

    @property
    def support(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.beta).tolist())


def prediction_error(selected: np.ndarray, train: Dataset, test: Dataset, truth: Truth) -> float:
    """Relative prediction error (gaussian) or misclassification rate (binomial)
    of a model refitted on the selected variables."""
    means = train.X.mean(axis=0)
    d = center(train)
    if train.family == "gaussian":
        beta_hat, _ = refit_ols(d.X, d.y, selected)
        return relative_prediction_error(beta_hat, truth.beta, truth.sigma, test.X)
    if len(selected) == 0:
        warnings.warn("empty selection; using the intercept-only (majority class) classifier", stacklevel=2)
    beta_hat, b0 = refit_logistic(d.X, d.y, selected)
    return misclassification(beta_hat, test.X - means, test.y, b0)


# --- replicated benchmark ------------------------------------------------------

@dataclass
class ReplicationOutcome:
    replication: int
    seed: int
    records: dict[str, EvalRecord]
    lambda_min: float
    attained: bool
    d0: int
    p: int


@dataclass
class BenchResult:
    summaries: dict[str, MetricsSummary]
    outcomes: list[ReplicationOutcome]
    d0: int
    p: int


def _map_ordered(fn: Callable[[int], object], M: int, threads: int) -> list:
    if threads > 1 and M > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(M)))
    return [fn(m) for m in range(M)]


ReplicationData = Callable[[int], tuple[Dataset, Dataset, Truth]]


def scenario_replication(spec: ScenarioSpec, seed: int, n_test: int = 10_000) -> ReplicationData:
    def draw(m: int):
        train, beta = make_scenario(spec, make_rng(seed, STREAM_DATA, m))
        test, _ = make_scenario(with_n(spec, n_test), make_rng(seed, STREAM_TEST, m))
        return train, test, Truth(beta, spec.sigma)

    return draw


def semisynthetic_replication(X: np.ndarray, s: int, snr: float | None, family: str, seed: int,
                              p: int | None, train_fraction: float,
                              column_names: tuple[str, ...] | None = None, scale: bool = False) -> ReplicationData:
    def draw(m: int):
        sim = make_semisynthetic(X, s, snr, family, make_rng(seed, STREAM_DATA, m), p=p,
                                 column_names=column_names, scale=scale)
        split = SplitSpec(train_fraction, derive_seed(seed, STREAM_SPLIT, m))
        train, test = train_test_split(sim.data, split)
        return train, test, Truth(sim.beta, sim.sigma if sim.sigma > 0 else 1.0)

    return draw


def bench(draw: ReplicationData, M: int, cfg: StabSelConfig, methods: Sequence[str], seed: int,
          fraction: float = 1 / 3, threads: int = 1) -> BenchResult:
    """Replicate draw -> fit -> evaluate ``M`` times and summarize per method."""

    def one(m: int) -> ReplicationOutcome:
        member_seed = derive_seed(seed, STREAM_MEMBER, m)
        try:
            train, test, truth = draw(m)
            res = run_methods(train, replace(cfg, master_seed=member_seed), methods, fraction)
            records = {
                meth: EvalRecord(m, res.selected[meth].tolist(), truth.support,
                                 prediction_error(res.selected[meth], train, test, truth))
                for meth in methods
            }
        except Exception as e:  # abort the whole bench, naming the failing seed
            raise ReplicationError(m, member_seed, e) from e
        log.info("replication %d done", m)
        return ReplicationOutcome(m, member_seed, records, res.grid.lambda_min, res.grid.attained,
                                 len(truth.support), train.p)

    outcomes = _map_ordered(one, M, threads)
    d0, p = outcomes[0].d0, outcomes[0].p
    summaries = {
        meth: selection_metrics([o.records[meth] for o in outcomes], d0, p) for meth in methods
    }
    return BenchResult(summaries, outcomes, d0, p)


# --- ordered aggregation curves ----------------------------------------------------

@dataclass
class CurveResult:
    pool_sizes: list[int]
    ordered: dict[int, np.ndarray]  # pool size -> mean accuracy for U = 1..pool
    unordered: np.ndarray  # mean accuracy for U = 1..max pool, generation order
    ordered_runs: dict[int, np.ndarray] = field(default_factory=dict)  # (M, pool) 0/1
    unordered_runs: np.ndarray | None = None

    def max_before_end(self, pool: int) -> float:
        """Fraction of replications whose ordered curve attains its maximum at some U < pool."""
        runs = self.ordered_runs[pool]
        return float(np.mean(runs[:, :-1].max(axis=1) >= runs[:, -1]))


def order_curve(spec: ScenarioSpec, M: int, cfg: StabSelConfig, seed: int,
                pool_sizes: Sequence[int] | None = None, threads: int = 1) -> CurveResult:
    """Exact-recovery accuracy of every prefix, ordered vs. generation order.

    The largest pool is generated once per replication; smaller pools use
    its leading members, so all curves in a replication share members.
    """
    pools = sorted(set(pool_sizes or [cfg.B]))
    B_max = pools[-1]
    cfg = replace(cfg, B=B_max)

    def one(m: int):
        member_seed = derive_seed(seed, STREAM_MEMBER, m)
        try:
            train, beta = make_scenario(spec, make_rng(seed, STREAM_DATA, m))
            truth = np.zeros(spec.p, dtype=bool)
            truth[np.flatnonzero(beta)] = True
            d = center(train)
            mcfg = replace(cfg, master_seed=member_seed)
            grid = shared_grid(d, mcfg)
            members = generate_members(d, mcfg, grid)
            T = np.stack([mb.T for mb in members])
            R = condense_all(members)
            r_ref, _ = reference_vector(d, grid)
            plain = (prefix_selection_curve(T, np.arange(B_max), cfg.pi_thr) == truth).all(axis=1)
            ordered = {}
            for b in pools:
                S = greedy_order(loss_matrix(R[:b], r_ref)).S
                ordered[b] = (prefix_selection_curve(T[:b], S, cfg.pi_thr) == truth).all(axis=1)
        except Exception as e:
            raise ReplicationError(m, member_seed, e) from e
        return plain, ordered

    runs = _map_ordered(one, M, threads)
    unordered_runs = np.stack([r[0] for r in runs]).astype(float)
    ordered_runs = {b: np.stack([r[1][b] for r in runs]).astype(float) for b in pools}
    return CurveResult(
        pool_sizes=pools,
        ordered={b: v.mean(axis=0) for b, v in ordered_runs.items()},
        unordered=unordered_runs.mean(axis=0),
        ordered_runs=ordered_runs,
        unordered_runs=unordered_runs,
    )


def third(B: int) -> int:
    return cut_size(B, 1 / 3)


def nan_to_none(x: float) -> float | None:
    return None if isinstance(x, float) and math.isnan(x) else x
