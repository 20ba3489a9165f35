"""Acceptance criteria, each run at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line so the outcome is visible in a
plain ``pytest -v`` log. The Monte Carlo checks are marked ``slow`` but are
part of the default run.
"""

import math
import time

import numpy as np
import pytest

from stabprune.cli import main
from stabprune.dataset import center
from stabprune.experiments import (
    STREAM_MEMBER,
    bench,
    derive_seed,
    order_curve,
    scenario_replication,
    simulate,
    third,
)
from stabprune.pruning import greedy_order, inclusion_diagnostic, loss_matrix
from stabprune.randgen import make_rng, scenario
from stabprune.solvers import default_q, lasso_path, make_grid, path_kkt
from stabprune.stabsel import StabSelConfig, aggregate, generate_members, pfer_bound, select

DEFAULT_SEED = 0


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {title} ({detail})")
        return ok

    return emit


def exhaustive_order(E):
    B = E.shape[0]
    chosen = []
    for u in range(1, B + 1):
        best, best_val = None, math.inf
        for k in range(B):
            if k in chosen:
                continue
            S = chosen + [k]
            val = E[np.ix_(S, S)].sum() / u**2
            if val < best_val:
                best, best_val = k, val
        chosen.append(best)
    return chosen


def random_loss_matrix(rng, B):
    # integer entries force exact ties, real entries exercise the general case
    if rng.random() < 0.5:
        D = rng.integers(-2, 3, size=(B, int(rng.integers(1, 6)))).astype(float)
    else:
        D = rng.standard_normal((B, int(rng.integers(1, 12))))
    return D @ D.T


def random_ensembles(count, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        B = int(rng.integers(2, 51))
        p = int(rng.integers(2, 101))
        R = rng.random((B, p)) * (rng.random((B, p)) < 0.4)
        R[R.sum(axis=1) == 0, 0] = 1.0
        R /= R.sum(axis=1, keepdims=True)
        ref = rng.random(p)
        yield R, ref / ref.sum()


def test_1_greedy_matches_exhaustive(report):
    rng = np.random.default_rng(DEFAULT_SEED)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        E = random_loss_matrix(rng, int(rng.integers(3, 9)))
        mismatches += greedy_order(E).S.tolist() != exhaustive_order(E)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 10.0
    assert report(1, "greedy ordering equals per-step exhaustive minimization",
                  ok, f"{mismatches} mismatches in 1000 matrices, {elapsed:.2f}s")


def test_2_loss_identity(report):
    worst = 0.0
    for R, ref in random_ensembles(200, 1):
        o = greedy_order(loss_matrix(R, ref))
        means = np.cumsum(R[o.S], axis=0) / np.arange(1, R.shape[0] + 1)[:, None]
        direct = ((means - ref) ** 2).sum(axis=1)
        worst = max(worst, float(np.max(np.abs(o.trajectory - direct))))
    assert report(2, "trajectory equals squared distance of prefix mean to reference",
                  worst <= 1e-10, f"max abs error {worst:.2e}")


def test_3_inclusion_condition(report):
    slack = 1e-9
    checked = violations = 0
    for R, ref in random_ensembles(200, 1):
        E = loss_matrix(R, ref)
        o = greedy_order(E)
        for u in range(2, R.shape[0] + 1):
            diag = inclusion_diagnostic(E, o, u)
            if diag.degenerate or abs(diag.lhs - diag.rhs) <= slack:
                continue
            decreased = o.trajectory[u - 1] < o.trajectory[u - 2]
            checked += 1
            violations += decreased != (diag.lhs > diag.rhs)
    assert report(3, "loss decreases iff usefulness exceeds difference",
                  violations == 0 and checked > 0, f"{violations} violations in {checked} steps")


def test_4_lasso_kkt_suite(report):
    rng = np.random.default_rng(DEFAULT_SEED)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(10, 101))
        p = int(rng.integers(2, 201))
        X = rng.standard_normal((n, p))
        beta = np.zeros(p)
        beta[: min(p, 5)] = rng.normal(0.0, 2.0, size=min(p, 5))
        y = X @ beta + rng.standard_normal(n)
        X -= X.mean(axis=0)
        y -= y.mean()
        grid = make_grid(X, y, K=100, q_target=min(default_q(p), n - 1, p))
        worst = max(worst, float(path_kkt(X, y, lasso_path(X, y, grid)).max()))

    n, p = 64, 16
    Q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    X = Q * math.sqrt(n)
    y = X @ np.r_[3.0, -2.0, 1.0, np.zeros(p - 3)] + rng.standard_normal(n)
    z = X.T @ y / n
    lams = np.geomspace(np.abs(z).max(), 1e-3, 50)
    fit = lasso_path(X, y, lams)
    closed = np.sign(z)[:, None] * np.maximum(np.abs(z)[:, None] - lams[None, :], 0.0)
    orth = float(np.max(np.abs(fit.coefficients - closed)))
    ok = worst <= 1e-6 and orth <= 1e-8
    assert report(4, "lasso stationarity on 200 problems and orthonormal soft-thresholding",
                  ok, f"max KKT violation {worst:.2e}, orthonormal error {orth:.2e}")


@pytest.mark.slow
def test_5_pfer_bound(report):
    exact = pfer_bound(40, 1000, 0.7)
    q = math.ceil(math.sqrt(1.6 * 200))
    bound = pfer_bound(q, 200, 0.7)
    spec = scenario("s2", n=100, p=200, beta=(0.0,) * 200)
    false_pos = []
    for m in range(200):
        d, _ = simulate(spec, derive_seed(DEFAULT_SEED, 1, m))
        cfg = StabSelConfig(B=100, K=100, pi_thr=0.7, q_target=q,
                            master_seed=derive_seed(DEFAULT_SEED, STREAM_MEMBER, m))
        false_pos.append(select(aggregate(generate_members(d, cfg)), 0.7).size)
    mean_fp = float(np.mean(false_pos))
    ok = exact == 4.0 and q == 18 and mean_fp <= 1.5 * bound
    assert report(5, "PFER bound arithmetic and empirical false positives under the global null", ok,
                  f"pfer_bound(40,1000,0.7)={exact!r}, mean FP {mean_fp:.3f} vs 1.5*{bound:.3f}={1.5 * bound:.3f}")


@pytest.mark.slow
def test_6_table1_trend(report):
    spec = scenario("s2", n=100, p=50, rho=0.0)
    cfg = StabSelConfig(B=100, K=100)
    t0 = time.perf_counter()
    res = bench(scenario_replication(spec, DEFAULT_SEED), 50, cfg, ("stabsel", "pruned"), DEFAULT_SEED)
    elapsed = time.perf_counter() - t0
    full, pruned = res.summaries["stabsel"], res.summaries["pruned"]
    anchors = {
        "pruned acc": (pruned.acc, 0.612),
        "full acc": (full.acc, 0.332),
        "pruned FDR": (pruned.fdr, 0.067),
        "full FDR": (full.fdr, 0.145),
    }
    near = all(abs(v - a) <= 0.15 for v, a in anchors.values())
    ok = pruned.acc - full.acc >= 0.10 and pruned.fdr < full.fdr and near and elapsed < 900
    detail = ", ".join(f"{k} {v:.3f} (anchor {a})" for k, (v, a) in anchors.items())
    assert report(6, "pruning raises accuracy and lowers FDR in scenario 2", ok,
                  f"{detail}, single-threaded {elapsed:.0f}s")


@pytest.mark.slow
def test_7_ordered_curve(report):
    spec = scenario("s1v1", n=40)
    cfg = StabSelConfig(B=100, K=100, pi_thr=0.6, q_target=16)
    c = order_curve(spec, 50, cfg, DEFAULT_SEED, threads=4)
    curve = c.ordered[100]
    at_third = float(curve[third(100) - 1])
    at_full = float(curve[-1])
    share = c.max_before_end(100)
    ok = at_third >= at_full and share >= 0.8
    assert report(7, "ordered subensemble at U=B/3 at least as accurate as the full ensemble", ok,
                  f"acc(U=33) {at_third:.3f}, acc(U=100) {at_full:.3f}, "
                  f"best curve value {curve.max():.3f}, max before U=B in {share:.0%} of runs")


def _outputs(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "timing.json"}


@pytest.mark.slow
def test_8_cli_determinism(report, tmp_path):
    commands = {
        "simulate": ["simulate", "--scenario", "s1v2", "--seed", "4"],
        "run": ["run", "--scenario", "s2", "--n", "80", "--p", "40", "--B", "30", "--K", "40",
                "--save-members", "--dump-path", "--seed", "4"],
        "run-binomial": ["run", "--scenario", "s5", "--n", "120", "--B", "20", "--K", "30", "--seed", "4"],
        "bench": ["bench", "--scenario", "s2", "--n", "60", "--p", "30", "--M", "6", "--B", "20", "--K", "30",
                  "--n-test", "500", "--methods", "stabsel,pruned,lasso", "--seed", "4"],
        "order-curve": ["order-curve", "--scenario", "s1v1", "--M", "4", "--pools", "10,20", "--K", "30",
                        "--seed", "4"],
    }
    bad = []
    for name, argv in commands.items():
        outs = []
        for i, threads in enumerate(("1", "1", "3")):
            out = tmp_path / f"{name}-{i}"
            if main([*argv, "--threads", threads, "--out", str(out)]) != 0:
                bad.append(f"{name} failed")
            outs.append(_outputs(out))
        if not (outs[0] == outs[1] == outs[2] and outs[0]):
            bad.append(name)
    assert report(8, "byte-identical outputs across reruns and --threads", not bad,
                  f"{len(commands)} commands, mismatches: {bad or 'none'}")
