"""Synthetic data generation and CSV ingestion.

The synthetic process is an additive location model with bounded noise:
``y = x + b + e`` where x is Gaussian and e is a truncated Gaussian supported
on three standard deviations. The bounded support is what makes the Laplace
scale of the private location estimator valid, so the generator enforces it
unconditionally.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .validation import as_generator, require_count, require_positive


class SchemaError(ValueError):
    """A required column is missing from the CSV header."""


class ParseError(ValueError):
    """A cell failed numeric parsing; carries the offending row index."""

    def __init__(self, row_index: int, column: str, value: str):
        self.row_index = row_index
        self.column = column
        super().__init__(
            f"row {row_index}: cannot parse {value!r} in column {column!r} as a number"
        )


MISSING_TOKENS = {"", "na", "nan", "null", "none"}


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the additive synthetic process."""

    b: float = 5.0
    mu_x: float = 0.0
    sigma_x: float = 10.0
    mu_eps: float = 0.0
    sigma_eps: float = 5.0

    @property
    def noise_half_range(self) -> float:
        return 3.0 * self.sigma_eps


@dataclass
class TabularDataset:
    """Feature matrix, response vector, and provenance metadata."""

    features: np.ndarray
    responses: np.ndarray
    column_names: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.responses = np.asarray(self.responses, dtype=float)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        if self.features.shape[0] != self.responses.shape[0]:
            raise ValueError(
                f"row mismatch: {self.features.shape[0]} feature rows vs "
                f"{self.responses.shape[0]} responses"
            )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def content_hash(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.features).tobytes())
        digest.update(np.ascontiguousarray(self.responses).tobytes())
        return digest.hexdigest()[:16]


def truncated_normal(
    mu: float, sigma: float, half_range: float, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Rejection-sample N(mu, sigma^2) conditioned on |draw - mu| <= half_range.

    At three standard deviations the acceptance rate is ~99.7%, so the loop
    terminates almost immediately.
    """
    out = np.empty(n)
    filled = 0
    while filled < n:
        draws = rng.normal(mu, sigma, size=n - filled)
        keep = draws[np.abs(draws - mu) <= half_range]
        out[filled : filled + keep.size] = keep
        filled += keep.size
    return out


def gen_synthetic(spec: SyntheticSpec, n: int, rng) -> TabularDataset:
    """Draw n i.i.d. rows of the additive location process."""
    n = require_count(n, "n")
    rng = as_generator(rng)
    x = rng.normal(spec.mu_x, spec.sigma_x, size=n)
    noise = truncated_normal(spec.mu_eps, spec.sigma_eps, spec.noise_half_range, n, rng)
    y = x + spec.b + noise
    return TabularDataset(
        features=x[:, None],
        responses=y,
        column_names=["x"],
        metadata={"process": "synthetic-location", "b": spec.b, "sigma_eps": spec.sigma_eps},
    )


def _parse_cell(token: str, row_index: int, column: str):
    stripped = token.strip()
    if stripped.lower() in MISSING_TOKENS:
        return None
    try:
        return float(stripped)
    except ValueError:
        raise ParseError(row_index, column, token) from None


def load_csv(
    path,
    response_column: str,
    feature_columns: list[str],
    split: tuple[float, int] = (0.5, 0),
    standardize: bool = True,
) -> tuple[TabularDataset, TabularDataset]:
    """Load a numeric CSV and return a seeded shuffled (train, test) split.

    Rows with missing values in the used columns are dropped and counted in
    the metadata; any other unparseable cell raises :class:`ParseError` with
    its row index. When ``standardize`` is set, features are z-scored with
    statistics computed on the train partition only (recorded in metadata),
    so the test partition never leaks into preprocessing.
    """
    test_fraction, seed = split
    if not (0.0 <= test_fraction < 1.0):
        raise ValueError(f"test_fraction must lie in [0, 1), got {test_fraction}")
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file or missing header row")
        wanted = [response_column, *feature_columns]
        missing = [c for c in wanted if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}; header has {reader.fieldnames}")
        rows, dropped = [], 0
        for index, record in enumerate(reader):
            parsed = [_parse_cell(record[c], index, c) for c in wanted]
            if any(value is None for value in parsed):
                dropped += 1
                continue
            rows.append(parsed)
    if not rows:
        raise ValueError(f"{path}: no complete rows after dropping {dropped} incomplete ones")
    data = np.asarray(rows, dtype=float)
    responses, features = data[:, 0], data[:, 1:]

    rng = np.random.default_rng(seed)
    order = rng.permutation(data.shape[0])
    n_test = int(np.floor(test_fraction * data.shape[0]))
    test_idx, train_idx = order[:n_test], order[n_test:]

    meta = {"source": str(path), "dropped_rows": dropped, "split_seed": seed}
    if standardize and train_idx.size:
        center = features[train_idx].mean(axis=0)
        scale = features[train_idx].std(axis=0)
        scale[scale == 0.0] = 1.0
        features = (features - center) / scale
        meta["standardize_center"] = center.tolist()
        meta["standardize_scale"] = scale.tolist()

    def subset(idx, partition):
        return TabularDataset(
            features=features[idx],
            responses=responses[idx],
            column_names=list(feature_columns),
            metadata={**meta, "partition": partition},
        )

    return subset(train_idx, "train"), subset(test_idx, "test")


def robust_score_bound(responses, factor: float = 6.0) -> float:
    """Default raw-score normalization bound: factor x a robust scale estimate.

    Uses the median absolute deviation (scaled to the Gaussian-consistent
    sigma) of the responses. Callers with a known response-range bound should
    pass that instead.
    """
    responses = np.asarray(responses, dtype=float)
    mad = np.median(np.abs(responses - np.median(responses)))
    scale = 1.4826 * mad
    if scale <= 0.0:
        scale = max(responses.std(), np.finfo(float).tiny)
    return require_positive(factor * scale, "score bound")
