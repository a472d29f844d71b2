"""Numeric containers, CSV ingestion, tuning grids and seeded substreams."""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_FLOAT_FORMAT = "%.17g"


class DataError(ValueError):
    """Raised on malformed or inconsistent input data.

    ``row`` and ``column`` are 1-based positions in the source file when the
    error can be pinned to a cell (``row`` counts the header line, if any).
    """

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``X`` (n x p) and response ``Y`` (n,).

    ``X`` is stored column-major since every solver in the package walks it
    column by column.
    """

    X: np.ndarray
    Y: np.ndarray
    column_names: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        Y = np.asarray(self.Y, dtype=np.float64)
        if X.ndim != 2:
            raise DataError(f"X must be two-dimensional, got shape {X.shape}")
        if Y.ndim != 1:
            raise DataError(f"Y must be one-dimensional, got shape {Y.shape}")
        n, p = X.shape
        if n < 1 or p < 1:
            raise DataError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
        if Y.shape[0] != n:
            raise DataError(f"Y has length {Y.shape[0]} but X has {n} rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise DataError("X and Y must contain only finite values")
        names = self.column_names
        if names is not None:
            names = tuple(str(c) for c in names)
            if len(names) != p:
                raise DataError(f"{len(names)} column names given for {p} columns")
        object.__setattr__(self, "X", _frozen(np.array(X, order="F", copy=True)))
        object.__setattr__(self, "Y", _frozen(np.array(Y, copy=True)))
        object.__setattr__(self, "column_names", names)

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


def standardize(data: Dataset) -> Dataset:
    """Center every column and scale it to unit sample second moment.

    Columns with zero spread are centered but left unscaled. The response is
    untouched; center it yourself if the model should absorb an intercept.
    """
    X = data.X - data.X.mean(axis=0)
    scale = np.sqrt(np.mean(X**2, axis=0))
    scale[scale == 0] = 1.0
    return Dataset(X / scale, data.Y, data.column_names)


def load_csv(
    path: str | Path,
    has_header: bool = True,
    response_column: str | int = 0,
) -> Dataset:
    """Read a comma-separated file into a :class:`Dataset`.

    ``response_column`` is a header name or a 0-based column index. Every
    other column becomes a predictor. Header-less files get predictors named
    ``x1..xp``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")

    first_line = 1
    if has_header:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        first_line = 2
        if not rows:
            raise DataError(f"{path}: header but no data rows")
    else:
        header = None

    width = len(rows[0]) if header is None else len(header)
    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        line = first_line + i
        if len(row) != width:
            raise DataError(
                f"{path}: row {line} has {len(row)} fields, expected {width}", row=line
            )
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: cannot parse {cell!r} as a number at row {line}, column {j + 1}",
                    row=line,
                    column=j + 1,
                ) from None

    if isinstance(response_column, str):
        if header is None:
            raise DataError("response given by name but the file has no header")
        if response_column not in header:
            raise DataError(f"response column {response_column!r} not in header {header}")
        resp = header.index(response_column)
    else:
        resp = int(response_column)
        if not 0 <= resp < width:
            raise DataError(f"response index {resp} out of range for {width} columns")
    if width < 2:
        raise DataError("need at least one predictor column besides the response")

    keep = [j for j in range(width) if j != resp]
    if header is None:
        names = tuple(f"x{k + 1}" for k in range(len(keep)))
    else:
        names = tuple(header[j] for j in keep)
    return Dataset(values[:, keep], values[:, resp], names)


def write_csv(data: Dataset, path: str | Path, response_name: str = "y") -> None:
    """Write ``data`` with the response first, 17 significant digits."""
    table = np.column_stack([data.Y, data.X])
    header = ",".join([response_name, *data.names])
    np.savetxt(path, table, delimiter=",", fmt=CSV_FLOAT_FORMAT, header=header, comments="")


@dataclass(frozen=True)
class GridSpec:
    M: int
    lambda_bar: float
    lambdas: np.ndarray = field(repr=False)

    @property
    def degenerate(self) -> bool:
        return self.lambda_bar == 0.0


def make_grid(lambda_bar: float, M: int) -> GridSpec:
    """Equidistant grid ``lambda_bar * (m + 1) / M`` for m = 0..M-1.

    Written as ``lambda_bar * ((m + 1) / M)`` so the last point is exactly
    ``lambda_bar``.
    """
    if int(M) != M or M < 1:
        raise ValueError(f"grid size M must be a positive integer, got {M}")
    if not np.isfinite(lambda_bar) or lambda_bar < 0:
        raise ValueError(f"lambda_bar must be finite and nonnegative, got {lambda_bar}")
    M = int(M)
    lambdas = float(lambda_bar) * (np.arange(1, M + 1) / M)
    return GridSpec(M, float(lambda_bar), _frozen(lambdas))


def _tag_id(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


@dataclass(frozen=True)
class RngSpec:
    """Seed plus a path of (purpose, index) keys naming an independent stream.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys and
    drawn through the counter-based Philox generator, so a stream depends only
    on the seed and its key path, never on what was drawn before it.
    """

    seed: int
    path: tuple[int, ...] = ()

    def child(self, purpose: str, index: int = 0) -> RngSpec:
        return RngSpec(self.seed, self.path + (_tag_id(purpose), int(index)))

    def generator(self, purpose: str, index: int = 0) -> np.random.Generator:
        key = self.path + (_tag_id(purpose), int(index))
        ss = np.random.SeedSequence(int(self.seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=key)
        return np.random.Generator(np.random.Philox(ss))


def draw_standard_normal(rng: RngSpec, purpose: str, replicate: int, count: int) -> np.ndarray:
    if count < 0:
        raise ValueError("count must be nonnegative")
    return rng.generator(purpose, replicate).standard_normal(count)
