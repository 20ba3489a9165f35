"""Seeded random generation: covariance builders, multivariate normal
sampling and the simulation scenario registry.

All randomness flows through :func:`make_rng`, which keys a PCG64 stream on
``(seed, *stream)`` via ``numpy.random.SeedSequence``. Distinct stream
tuples give independent streams, so ensemble members, replications and
test sets never share a generator.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset, DataError

GENERATOR_INFO = {
    "bit_generator": "PCG64",
    "seeding": "SeedSequence([seed, *stream])",
    "normals": "numpy Generator.standard_normal (ziggurat)",
    "numpy": np.__version__,
}

# stream tags; keep stable, they are part of the reproducibility contract
STREAM_DATA = 1
STREAM_TEST = 2
STREAM_MEMBER = 3
STREAM_SPLIT = 4

_MAX_SEED = 2**64


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    seed = int(seed)
    if not 0 <= seed < _MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *map(int, stream)])))


def as_rng(seed: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return make_rng(seed)


# --- covariance --------------------------------------------------------------

@dataclass(frozen=True)
class CovarianceSpec:
    """``kind`` is one of identity, compound, block, ar1.

    ``rho`` parametrizes compound/ar1; block uses ``rho1`` (signal-signal),
    ``rho2`` (noise-noise), ``rho3`` (signal-noise) with ``d0`` leading
    signal variables.
    """

    kind: str
    p: int
    rho: float = 0.0
    rho1: float = 0.25
    rho2: float = 0.75
    rho3: float = 0.50
    d0: int = 5


def build_covariance(spec: CovarianceSpec) -> np.ndarray:
    p = int(spec.p)
    if p < 1:
        raise ValueError("p must be positive")
    if spec.kind == "identity":
        S = np.eye(p)
    elif spec.kind == "compound":
        if not abs(spec.rho) < 1:
            raise ValueError(f"compound symmetry needs |rho| < 1, got {spec.rho}")
        S = np.full((p, p), float(spec.rho))
        np.fill_diagonal(S, 1.0)
    elif spec.kind == "ar1":
        if not abs(spec.rho) < 1:
            raise ValueError(f"AR(1) needs |rho| < 1, got {spec.rho}")
        idx = np.arange(p)
        S = float(spec.rho) ** np.abs(idx[:, None] - idx[None, :])
    elif spec.kind == "block":
        for r in (spec.rho1, spec.rho2, spec.rho3):
            if not 0 <= r < 1:
                raise ValueError(f"block correlations must lie in [0, 1), got {r}")
        d0 = int(spec.d0)
        if not 0 <= d0 <= p:
            raise ValueError(f"d0={d0} out of range for p={p}")
        S = np.full((p, p), float(spec.rho3))
        S[:d0, :d0] = spec.rho1
        S[d0:, d0:] = spec.rho2
        np.fill_diagonal(S, 1.0)
    else:
        raise ValueError(f"unknown covariance kind {spec.kind!r}")
    _cholesky(S)
    return S


def _cholesky(S: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise ValueError("covariance matrix is not positive definite") from None


@functools.lru_cache(maxsize=16)
def _cached_factor(spec: CovarianceSpec) -> np.ndarray:
    L = _cholesky(build_covariance(spec))
    L.setflags(write=False)
    return L


def sample_mvn(sigma: np.ndarray, n: int, seed: int | np.random.Generator) -> np.ndarray:
    """n i.i.d. rows from N(0, sigma) via the Cholesky factor."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError("sigma must be square")
    if not np.allclose(sigma, sigma.T):
        raise ValueError("sigma must be symmetric")
    return _draw(_cholesky(sigma), n, as_rng(seed))


def _draw(L: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    Z = rng.standard_normal((int(n), L.shape[0]))
    return Z @ L.T


# --- scenarios ---------------------------------------------------------------

_BETA_IV = (0.5, 1.0, 1.5, 2.0, 2.5)
_BETA_S4 = (3.0, 1.5, 0.0, 0.0, 2.0, 0.5, 0.5)
_BETA_S5 = (3.0, 1.5, 0.0, 0.0, 2.0)

# hard-coded defaults; sigma per variation is fixed here on purpose
SCENARIOS = {
    "s1v1": dict(n=40, p=20, sigma=1.0, family="gaussian"),
    "s1v2": dict(n=40, p=20, sigma=1.0, family="gaussian"),
    "s1v3": dict(n=40, p=20, sigma=1.0, family="gaussian"),
    "s1v4": dict(n=40, p=20, sigma=2.0, family="gaussian"),
    "s2": dict(n=100, p=50, rho=0.0, sigma=1.0, family="gaussian"),
    "s3": dict(n=200, p=1000, rho1=0.25, rho2=0.75, rho3=0.50, sigma=1.0, family="gaussian"),
    "s4": dict(n=200, p=1000, rho=0.5, sigma=1.0, family="gaussian"),
    "s5": dict(n=200, p=50, rho=0.5, sigma=0.0, family="binomial"),
}


@dataclass(frozen=True)
class ScenarioSpec:
    key: str
    n: int
    p: int
    sigma: float
    family: str = "gaussian"
    rho: float = 0.0
    rho1: float = 0.25
    rho2: float = 0.75
    rho3: float = 0.50
    beta: tuple[float, ...] | None = field(default=None)

    @property
    def is_scenario1(self) -> bool:
        return self.key.startswith("s1")

    def true_beta(self) -> np.ndarray:
        if self.beta is not None:
            b = np.asarray(self.beta, dtype=float)
            if b.shape != (self.p,):
                raise ValueError(f"beta override has length {b.size}, expected p={self.p}")
            return b
        b = np.zeros(self.p)
        if self.is_scenario1:
            b[[4, 9, 14]] = (1.0, 2.0, 3.0)
        elif self.key in ("s2", "s3"):
            b[:5] = _BETA_IV
        elif self.key == "s4":
            b[:7] = _BETA_S4
        elif self.key == "s5":
            b[:5] = _BETA_S5
        return b

    def covariance(self) -> CovarianceSpec | None:
        """Covariance of the design, or None for scenario 1 (built directly)."""
        if self.key == "s2":
            return CovarianceSpec("compound", self.p, rho=self.rho)
        if self.key == "s3":
            return CovarianceSpec("block", self.p, rho1=self.rho1, rho2=self.rho2, rho3=self.rho3, d0=5)
        if self.key in ("s4", "s5"):
            return CovarianceSpec("ar1", self.p, rho=self.rho)
        return None

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("key", "n", "p", "sigma", "family", "rho", "rho1", "rho2", "rho3")}
        d["beta"] = list(self.beta) if self.beta is not None else None
        return d


def scenario(key: str, **overrides) -> ScenarioSpec:
    """Registry lookup with parameter overrides (``None`` values ignored)."""
    if key not in SCENARIOS:
        raise KeyError(f"unknown scenario {key!r}; valid keys: {', '.join(SCENARIOS)}")
    params = dict(SCENARIOS[key])
    params.update({k: v for k, v in overrides.items() if v is not None})
    spec = ScenarioSpec(key=key, **params)
    _validate(spec)
    return spec


def _validate(spec: ScenarioSpec) -> None:
    if spec.key not in SCENARIOS:
        raise ValueError(f"unknown scenario {spec.key!r}")
    if spec.n < 2:
        raise ValueError("n must be >= 2")
    if spec.is_scenario1 and spec.p != 20:
        raise ValueError("scenario 1 is defined for p = 20 only")
    minimum_p = {"s2": 5, "s3": 6, "s4": 7, "s5": 5}.get(spec.key, 20)
    if spec.p < minimum_p:
        raise ValueError(f"scenario {spec.key} needs p >= {minimum_p}")
    if spec.family == "gaussian" and not spec.sigma > 0:
        raise ValueError("sigma must be positive for gaussian scenarios")


def _scenario1_design(variation: int, n: int, rng: np.random.Generator) -> np.ndarray:
    if variation == 1:
        return rng.standard_normal((n, 20))
    if variation in (2, 3):
        X = np.empty((n, 20))
        X[:, :19] = rng.standard_normal((n, 19))
        src = 4 if variation == 2 else 9
        X[:, 19] = X[:, src] + 0.25 * rng.standard_normal(n)
        return X
    if variation == 4:
        z = rng.standard_normal(n)
        return z[:, None] + rng.standard_normal((n, 20))
    raise ValueError(f"scenario 1 has variations 1-4, got {variation}")


def scenario_design(spec: ScenarioSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if spec.is_scenario1:
        return _scenario1_design(int(spec.key[-1]), n, rng)
    return _draw(_cached_factor(spec.covariance()), n, rng)


def make_scenario(spec: ScenarioSpec, seed: int | np.random.Generator) -> tuple[Dataset, np.ndarray]:
    """Simulate (X, y) from the scenario; returns the raw (uncentered) data and beta."""
    _validate(spec)
    rng = as_rng(seed)
    beta = spec.true_beta()
    X = scenario_design(spec, spec.n, rng)
    eta = X @ beta
    if spec.family == "binomial":
        y = (rng.random(spec.n) < _sigmoid(eta)).astype(float)
    else:
        y = eta + spec.sigma * rng.standard_normal(spec.n)
    return Dataset(X, y, family=spec.family), beta


def _sigmoid(t: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * t))


@dataclass(frozen=True)
class SemiSynthetic:
    data: Dataset
    beta: np.ndarray
    sigma: float
    columns: np.ndarray


def make_semisynthetic(
    X: np.ndarray,
    s: int,
    snr: float | None,
    family: str,
    seed: int | np.random.Generator,
    p: int | None = None,
    column_names: tuple[str, ...] | None = None,
    scale: bool = False,
) -> SemiSynthetic:
    """Synthetic sparse response on a real design.

    Optionally draws ``p`` columns at random, centers them, puts +/-1
    coefficients on ``s`` random positions and generates gaussian noise at
    the requested signal-to-noise ratio (sample variance of X @ beta over
    sigma^2) or logistic 0/1 responses.
    """
    rng = as_rng(seed)
    X = np.asarray(X, dtype=float)
    n, p_all = X.shape
    if p is not None:
        if not 1 <= p <= p_all:
            raise ValueError(f"cannot draw p={p} columns from {p_all}")
        cols = np.sort(rng.choice(p_all, size=p, replace=False))
    else:
        cols = np.arange(p_all)
    Xs = X[:, cols]
    Xs = Xs - Xs.mean(axis=0)
    sd = Xs.std(axis=0)
    if np.any(sd == 0):
        raise DataError(f"degenerate (constant) design column(s): {cols[sd == 0].tolist()}")
    if scale:
        Xs = Xs / sd
    if not 0 <= s <= Xs.shape[1]:
        raise ValueError(f"s={s} exceeds p={Xs.shape[1]}")

    beta = np.zeros(Xs.shape[1])
    support = rng.choice(Xs.shape[1], size=s, replace=False)
    beta[support] = rng.choice([-1.0, 1.0], size=s)
    eta = Xs @ beta
    names = tuple(column_names[c] for c in cols) if column_names is not None else tuple(f"x{c + 1}" for c in cols)

    if family == "gaussian":
        if snr is None or not snr > 0:
            raise ValueError("gaussian semi-synthetic data need snr > 0")
        signal_var = eta.var(ddof=1)
        if signal_var == 0:
            raise DataError("X @ beta is constant; cannot calibrate snr")
        sigma = float(np.sqrt(signal_var / snr))
        y = eta + sigma * rng.standard_normal(n)
    elif family == "binomial":
        sigma = 0.0
        y = (rng.random(n) < _sigmoid(eta)).astype(float)
    else:
        raise ValueError(f"unknown family {family!r}")
    data = Dataset(Xs, y, family=family, column_names=names)
    return SemiSynthetic(data, beta, sigma, cols)


def with_n(spec: ScenarioSpec, n: int) -> ScenarioSpec:
    return replace(spec, n=int(n))
