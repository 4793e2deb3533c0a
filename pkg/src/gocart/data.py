"""Paired covariate/response samples and their CSV representation."""
from __future__ import annotations

import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class EmptyDataset(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray  # (n, d) covariates
    y: np.ndarray  # (n, p) responses

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"{x.shape[0]} covariate rows vs {y.shape[0]} response rows")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def p(self) -> int:
        return self.y.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx])


def check_pair(train: Dataset, heldout: Dataset) -> None:
    if train.n == 0 or heldout.n == 0:
        raise EmptyDataset("training and held-out data must be nonempty")
    if train.d != heldout.d or train.p != heldout.p:
        raise DimensionMismatch(
            f"train is (d={train.d}, p={train.p}), held-out is (d={heldout.d}, p={heldout.p})")


def header(d: int, p: int) -> list[str]:
    return [f"x{i + 1}" for i in range(d)] + [f"y{j + 1}" for j in range(p)]


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_float(v: float) -> str:
    return format(float(v), ".17g")


def dataset_to_csv(ds: Dataset) -> str:
    lines = [",".join(header(ds.d, ds.p))]
    for row in np.hstack([ds.x, ds.y]):
        lines.append(",".join(format_float(v) for v in row))
    return "\n".join(lines) + "\n"


def write_dataset(ds: Dataset, path) -> None:
    atomic_write_text(path, dataset_to_csv(ds))


_COL = re.compile(r"^([xy])([1-9][0-9]*)$")


def read_dataset(path) -> Dataset:
    """Read a ``x1..xd,y1..yp`` CSV file."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            first = fh.readline()
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    cols = [c.strip() for c in first.strip().split(",")] if first.strip() else []
    bad = [c for c in cols if not _COL.match(c)]
    xs = [c for c in cols if c.startswith("x") and c not in bad]
    ys = [c for c in cols if c.startswith("y") and c not in bad]
    expected = header(len(xs), len(ys))
    if bad or not xs or not ys or cols != expected:
        offending = bad or [c for c, e in zip(cols, expected) if c != e] or cols
        raise SchemaError(f"{path}: bad header columns {offending}; expected x1..xd,y1..yp")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] == 0:
        data = np.empty((0, len(cols)))
    if data.shape[1] != len(cols):
        raise SchemaError(f"{path}: rows have {data.shape[1]} fields, header has {len(cols)}")
    return Dataset(data[:, : len(xs)], data[:, len(xs):])


def match_schema(train_path, heldout_path) -> tuple[Dataset, Dataset]:
    train = read_dataset(train_path)
    heldout = read_dataset(heldout_path)
    if (train.d, train.p) != (heldout.d, heldout.p):
        tcols = set(header(train.d, train.p))
        hcols = set(header(heldout.d, heldout.p))
        raise SchemaError(f"column mismatch between train and held-out: {sorted(tcols ^ hcols)}")
    return train, heldout


@dataclass(frozen=True)
class MinMaxScaler:
    """Affine map of each covariate from ``[lower, upper]`` onto ``[0, 1]``."""

    lower: tuple
    upper: tuple

    @classmethod
    def fit(cls, *arrays) -> "MinMaxScaler":
        X = np.vstack([np.asarray(a, dtype=float) for a in arrays])
        lo, hi = X.min(axis=0), X.max(axis=0)
        hi = np.where(hi > lo, hi, lo + 1.0)
        return cls(tuple(lo.tolist()), tuple(hi.tolist()))

    def transform(self, X) -> np.ndarray:
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return np.clip((np.asarray(X, dtype=float) - lo) / (hi - lo), 0.0, 1.0)

    def inverse(self, U) -> np.ndarray:
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return lo + np.asarray(U, dtype=float) * (hi - lo)

    def to_dict(self) -> dict:
        return {"kind": "minmax", "lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, obj) -> "MinMaxScaler":
        return cls(tuple(obj["lower"]), tuple(obj["upper"]))
