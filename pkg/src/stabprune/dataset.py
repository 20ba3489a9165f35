"""Tabular data container, CSV ingestion, centering, subsampling and splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

FAMILIES = ("gaussian", "binomial")


class DataError(ValueError):
    """Raised for malformed input data."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``X`` (n x p) and response ``y`` of length n.

    Instances are immutable; the operations below return new objects.
    For the binomial family ``y`` holds 0/1 labels and centering touches
    ``X`` only.
    """

    X: np.ndarray
    y: np.ndarray
    family: str = "gaussian"
    centered: bool = False
    column_names: tuple[str, ...] | None = None
    response_name: str = "y"
    # row indices into the source dataset, kept for subsample/split bookkeeping
    rows: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DataError("X must be a 2-d array")
        if y.ndim != 1:
            raise DataError("y must be a 1-d array")
        n, p = X.shape
        if n < 2 or p < 1:
            raise DataError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if y.shape[0] != n:
            raise DataError(f"y has length {y.shape[0]} but X has {n} rows")
        if self.family not in FAMILIES:
            raise DataError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "binomial" and not np.all((y == 0) | (y == 1)):
            raise DataError("binomial response must contain only 0 and 1")
        names = self.column_names
        if names is not None:
            names = tuple(str(c) for c in names)
            if len(names) != p:
                raise DataError(f"{len(names)} column names for {p} columns")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "column_names", names)
        if self.rows is not None:
            rows = np.array(self.rows, dtype=np.int64, copy=True)
            rows.setflags(write=False)
            object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def names(self) -> tuple[str, ...]:
        if self.column_names is not None:
            return self.column_names
        return tuple(f"x{j + 1}" for j in range(self.p))

    def take(self, rows: Sequence[int]) -> "Dataset":
        """Row subset; the result is marked uncentered."""
        rows = np.asarray(rows, dtype=np.int64)
        base = self.rows if self.rows is not None else np.arange(self.n)
        return replace(self, X=self.X[rows], y=self.y[rows], centered=False, rows=base[rows])


def center(d: Dataset, scale: bool = False) -> Dataset:
    """Mean-center the columns of X (and y for the gaussian family).

    With ``scale=True`` columns are also divided by their standard
    deviation; this is opt-in and meant for real data with mixed units.
    """
    if d.centered and not scale:
        return d
    X = d.X - d.X.mean(axis=0)
    if scale:
        sd = X.std(axis=0)
        if np.any(sd == 0):
            raise DataError(f"constant column(s) {np.flatnonzero(sd == 0).tolist()} cannot be scaled")
        X = X / sd
    y = d.y - d.y.mean() if d.family == "gaussian" else d.y
    return replace(d, X=X, y=y, centered=True)


def subsample_indices(n: int, rng: np.random.Generator) -> np.ndarray:
    """floor(n/2) distinct row indices, drawn uniformly without replacement."""
    if n < 4:
        raise DataError(f"subsampling needs n >= 4, got n={n}")
    return np.sort(rng.choice(n, size=n // 2, replace=False))


def subsample(d: Dataset, seed: int | np.random.Generator) -> Dataset:
    """Random half-sample of the rows. Re-centering is left to the caller."""
    from .randgen import as_rng

    return d.take(subsample_indices(d.n, as_rng(seed)))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int = 0

    def sizes(self, n: int) -> tuple[int, int]:
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        n_train = int(round(self.train_fraction * n))
        n_test = n - n_train
        if n_train < 2 or n_test < 1:
            raise DataError(f"split of n={n} at {self.train_fraction} gives sizes ({n_train}, {n_test})")
        return n_train, n_test


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    from .randgen import make_rng

    n_train, _ = spec.sizes(n)
    perm = make_rng(spec.seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def train_test_split(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    train, test = split_indices(d.n, spec)
    return d.take(train), d.take(test)


# --- CSV -------------------------------------------------------------------

def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _read_table(path: Path) -> tuple[np.ndarray, list[str] | None, int]:
    """Numeric cells, optional header, and the file line of the first data row."""
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")

    header = None
    first_line = 1
    if not all(_is_number(c) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        first_line = 2
    width = len(header) if header is not None else len(rows[0]) if rows else 0

    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        line = first_line + i
        if len(row) != width:
            raise DataError(f"{path}: line {line} has {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell {cell!r} at line {line}, column {j + 1}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: non-finite cell {cell!r} at line {line}, column {j + 1}")
            values[i, j] = v
    return values, header, first_line


def load_matrix(path: str | Path) -> tuple[np.ndarray, tuple[str, ...] | None]:
    """Read a numeric design matrix (no response column) and its header, if any."""
    path = Path(path)
    values, header, _ = _read_table(path)
    if values.shape[0] < 2 or values.shape[1] < 1:
        raise DataError(f"{path}: need at least 2 rows and 1 column, got {values.shape}")
    return values, tuple(header) if header is not None else None


def load_csv(path: str | Path, response_column: str | int = -1, family: str = "gaussian") -> Dataset:
    """Read a comma-separated numeric table.

    A header row is assumed when any cell on the first line is not a
    number. ``response_column`` is a header name or a (possibly negative)
    column index.
    """
    path = Path(path)
    if family not in FAMILIES:
        raise DataError(f"unknown family {family!r}")
    values, header, first_line = _read_table(path)
    width = values.shape[1]

    if isinstance(response_column, str) and not response_column.lstrip("-").isdigit():
        if header is None or response_column not in header:
            raise DataError(f"{path}: response column {response_column!r} not found")
        resp = header.index(response_column)
    else:
        resp = int(response_column)
        if not -width <= resp < width:
            raise DataError(f"{path}: response index {resp} out of range for {width} columns")
        resp %= width

    keep = [j for j in range(width) if j != resp]
    y = values[:, resp]
    if family == "binomial":
        bad = np.flatnonzero((y != 0) & (y != 1))
        if bad.size:
            raise DataError(
                f"{path}: binomial response must be 0/1, got {y[bad[0]]!r} at line {first_line + bad[0]}"
            )
    names = tuple(header[j] for j in keep) if header is not None else None
    resp_name = header[resp] if header is not None else "y"
    return Dataset(values[:, keep], y, family=family, column_names=names, response_name=resp_name)


def write_csv(d: Dataset, path: str | Path) -> None:
    """Write X and y (last column) with a header; values keep full precision."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*d.names, d.response_name])
        for xi, yi in zip(d.X, d.y):
            w.writerow([format_float(v) for v in xi] + [format_float(yi)])


def format_float(v: float) -> str:
    return repr(float(v))
