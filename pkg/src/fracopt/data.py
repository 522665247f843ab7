"""Datasets: LIBSVM parsing, min-max scaling, seeded splits and synthetic generators."""

from __future__ import annotations

import gzip
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from .exceptions import InvalidInputError, ParseError
from .metrics import DiscreteDistribution


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    name: str = ""

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape[0] != y.size:
            raise InvalidInputError(f"{x.shape[0]} feature rows but {y.size} labels")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise InvalidInputError("labels must be +1 or -1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def prior(self) -> float:
        return float(np.mean(self.y > 0)) if self.n else float("nan")

    def subset(self, idx, name=None) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.name if name is None else name)

    def with_bias(self) -> "Dataset":
        """Append a constant-one feature column."""
        return Dataset(np.hstack([self.x, np.ones((self.n, 1))]), self.y, self.name)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.name == other.name and self.x.shape == other.x.shape
                and np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y))


def parse_libsvm(text: str, name: str = "", n_features: Optional[int] = None) -> Dataset:
    """Parse ``label idx:val ...`` lines into a dense dataset.

    Indices are 1-based and must be strictly ascending within a line. Labels
    greater than zero map to +1, everything else to -1.
    """
    labels = []
    rows = []
    max_idx = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0].replace("−", "-"))
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", lineno) from None
        entries = {}
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(f"malformed token {tok!r}", lineno)
            try:
                idx = int(idx_s)
                val = float(val_s.replace("−", "-"))
            except ValueError:
                raise ParseError(f"malformed token {tok!r}", lineno) from None
            if idx < 1:
                raise ParseError(f"feature index {idx} is not 1-based", lineno)
            if idx <= prev:
                raise ParseError(f"feature index {idx} not ascending after {prev}", lineno)
            prev = idx
            entries[idx] = val
        max_idx = max(max_idx, prev)
        labels.append(1.0 if label > 0 else -1.0)
        rows.append(entries)
    if not rows:
        raise ParseError("no data lines")
    d = max_idx if n_features is None else n_features
    if d < max_idx:
        raise ParseError(f"feature index {max_idx} exceeds n_features={d}")
    x = np.zeros((len(rows), d))
    for i, entries in enumerate(rows):
        for j, v in entries.items():
            x[i, j - 1] = v
    return Dataset(x, np.array(labels), name)


def load_libsvm(path: Union[str, Path], name: Optional[str] = None, n_features=None) -> Dataset:
    """Read a LIBSVM file; ``.gz`` files (or gzip magic bytes) are decompressed."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    stem = path.name[:-3] if path.name.endswith(".gz") else path.name
    return parse_libsvm(raw.decode("utf-8"), name or Path(stem).stem, n_features)


def serialize_libsvm(ds: Dataset) -> str:
    out = io.StringIO()
    for xi, yi in zip(ds.x, ds.y):
        feats = " ".join(f"{j + 1}:{v!r}" for j, v in enumerate(xi.tolist()) if v != 0)
        out.write(("+1" if yi > 0 else "-1") + (" " + feats if feats else "") + "\n")
    return out.getvalue()


def read_registry(path: Union[str, Path]) -> Dict[str, Path]:
    """``name path`` per line; relative paths resolve against the registry's directory."""
    path = Path(path)
    base = path.parent
    reg = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise ParseError("expected 'name path'", lineno)
        p = Path(parts[1].strip()).expanduser()
        reg[parts[0]] = p if p.is_absolute() else base / p
    return reg


@dataclass(frozen=True)
class MinMaxScaler:
    lo: np.ndarray
    span: np.ndarray

    @classmethod
    def fit(cls, x) -> "MinMaxScaler":
        x = np.asarray(x, dtype=float)
        if x.shape[0] == 0:
            raise InvalidInputError("cannot fit a scaler on an empty set")
        lo = x.min(axis=0)
        return cls(lo, x.max(axis=0) - lo)

    def transform(self, x):
        x = np.asarray(x, dtype=float)
        safe = np.where(self.span > 0, self.span, 1.0)
        out = np.where(self.span > 0, (x - self.lo) / safe, 0.0)
        return np.clip(out, 0.0, 1.0)


def minmax_scale(train: Dataset, *others: Dataset):
    """Fit a per-column [0, 1] map on ``train`` and apply it to every dataset.

    Constant columns map to 0 and out-of-range values are clipped.
    Returns a tuple ``(train_scaled, *others_scaled)``.
    """
    scaler = MinMaxScaler.fit(train.x)
    return tuple(Dataset(scaler.transform(ds.x), ds.y, ds.name) for ds in (train, *others))


def split(ds: Dataset, ratio: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Seeded shuffle, then the first round(ratio * n) rows (half rounds up) go to part a."""
    if not 0 < ratio < 1:
        raise InvalidInputError(f"split ratio must lie in (0, 1), got {ratio!r}")
    if ds.n < 2:
        raise InvalidInputError("need at least two examples to split")
    idx = np.random.default_rng(seed).permutation(ds.n)
    k = int(np.floor(ratio * ds.n + 0.5))
    return ds.subset(np.sort(idx[:k])), ds.subset(np.sort(idx[k:]))


def stratified_subsample(ds: Dataset, size: int, rng, attempts: int = 100) -> Optional[Dataset]:
    """Random subsample of ``size`` rows containing both classes, or None."""
    if size < 2 or size > ds.n:
        return None
    for _ in range(attempts):
        idx = rng.choice(ds.n, size=size, replace=False)
        y = ds.y[idx]
        if np.any(y > 0) and np.any(y < 0):
            return ds.subset(np.sort(idx))
    return None


@dataclass(frozen=True)
class TwoGaussians:
    """Class-conditional Gaussians with a shared covariance."""

    mean_pos: np.ndarray
    mean_neg: np.ndarray
    cov: np.ndarray
    pi: float

    def __post_init__(self):
        mp = np.asarray(self.mean_pos, dtype=float).ravel()
        mn = np.asarray(self.mean_neg, dtype=float).ravel()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mp.shape != mn.shape or cov.shape != (mp.size, mp.size):
            raise InvalidInputError("means and covariance dimensions disagree")
        if not np.allclose(cov, cov.T):
            raise InvalidInputError("covariance must be symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise InvalidInputError("covariance must be positive definite") from None
        if not 0 <= self.pi <= 1:
            raise InvalidInputError("pi must lie in [0, 1]")
        object.__setattr__(self, "mean_pos", mp)
        object.__setattr__(self, "mean_neg", mn)
        object.__setattr__(self, "cov", cov)

    def discriminant(self):
        """(w, b) such that the posterior is sigmoid(x @ w + b)."""
        prec = np.linalg.inv(self.cov)
        w = prec @ (self.mean_pos - self.mean_neg)
        b = -0.5 * (self.mean_pos @ prec @ self.mean_pos - self.mean_neg @ prec @ self.mean_neg)
        with np.errstate(divide="ignore"):
            b = b + np.log(self.pi) - np.log1p(-self.pi)
        return w, b


@dataclass(frozen=True)
class SyntheticSpec:
    kind: Union[TwoGaussians, DiscreteDistribution]
    n: int
    seed: int = 0


def generate_synthetic(spec: SyntheticSpec, name: str = "synthetic") -> Tuple[Dataset, Callable]:
    """Draw ``spec.n`` labeled points; also return the exact posterior function."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    if n < 1:
        raise InvalidInputError("n must be positive")
    gen = spec.kind
    if isinstance(gen, TwoGaussians):
        y = np.where(rng.random(n) < gen.pi, 1.0, -1.0)
        chol = np.linalg.cholesky(gen.cov)
        means = np.where(y[:, None] > 0, gen.mean_pos, gen.mean_neg)
        x = means + rng.standard_normal((n, gen.mean_pos.size)) @ chol.T
        w, b = gen.discriminant()

        def eta(xq):
            with np.errstate(invalid="ignore"):
                return expit(np.asarray(xq, dtype=float) @ w + b)

        return Dataset(x, y, name), eta
    if isinstance(gen, DiscreteDistribution):
        idx = rng.choice(gen.size, size=n, p=gen.mass)
        y = np.where(rng.random(n) < gen.eta[idx], 1.0, -1.0)
        support = gen.x
        table = gen.eta

        def eta(xq):
            xq = np.atleast_2d(np.asarray(xq, dtype=float))
            match = np.all(np.isclose(xq[:, None, :], support[None, :, :]), axis=2)
            if not np.all(match.any(axis=1)):
                raise InvalidInputError("query point outside the support")
            return table[match.argmax(axis=1)]

        return Dataset(support[idx], y, name), eta
    raise InvalidInputError(f"unknown synthetic generator {type(gen).__name__}")


def sample_discrete(dist: DiscreteDistribution, n: int, rng):
    """Draw (x, y) arrays from a discrete distribution with a caller-owned generator."""
    idx = rng.choice(dist.size, size=n, p=dist.mass)
    y = np.where(rng.random(n) < dist.eta[idx], 1.0, -1.0)
    return dist.x[idx], y
