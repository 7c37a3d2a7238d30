"""Data pipeline: ingestion, normalization, windowing, and synthetic sources.

The pipeline order used by the harness is: split the raw series set
chronologically, fit min-max normalization on the training segment only,
normalize both segments with those statistics, then cut sliding windows.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor

__all__ = [
    "CorrelatedSet",
    "CsvLayout",
    "DataError",
    "Normalizer",
    "SyntheticConfig",
    "TimeSeries",
    "WindowSample",
    "generate_synthetic",
    "ingest_csv",
    "make_uncorrelated",
    "pearson",
    "segment",
    "split",
    "stack_samples",
    "train_val_split",
    "write_csv",
]

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Raised when input data violates the ingestion contract."""


@dataclass(frozen=True)
class TimeSeries:
    """A uniformly sampled measurement sequence."""

    id: str
    values: np.ndarray
    start_time: float = 0.0
    interval: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise DataError(f"series {self.id!r} must be a non-empty vector")
        if not np.isfinite(v).all():
            raise DataError(f"series {self.id!r} has missing or non-finite values")
        if self.interval <= 0:
            raise DataError(f"series {self.id!r} needs a positive sampling interval")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class CorrelatedSet:
    """An ordered, aligned collection of series; the first one is the target."""

    series: tuple[TimeSeries, ...]

    def __post_init__(self):
        if not self.series:
            raise DataError("a correlated set needs at least one series")
        first = self.series[0]
        for s in self.series[1:]:
            if len(s) != len(first):
                raise DataError(
                    f"series {s.id!r} has length {len(s)}, expected {len(first)}")
            if s.start_time != first.start_time or s.interval != first.interval:
                raise DataError(f"series {s.id!r} is not aligned with the target")
        object.__setattr__(self, "series", tuple(self.series))

    @property
    def num_series(self) -> int:
        return len(self.series)

    @property
    def length(self) -> int:
        return len(self.series[0])

    @property
    def target(self) -> TimeSeries:
        return self.series[0]

    def values_matrix(self) -> np.ndarray:
        """All series stacked as rows: shape (num_series, length)."""
        return np.stack([s.values for s in self.series])

    def take(self, k: int) -> "CorrelatedSet":
        """Keep the first k series (the target always stays)."""
        if not 1 <= k <= self.num_series:
            raise DataError(f"cannot take {k} of {self.num_series} series")
        return CorrelatedSet(self.series[:k])

    def slice_time(self, start: int, stop: int) -> "CorrelatedSet":
        if not 0 <= start < stop <= self.length:
            raise DataError(f"invalid time slice [{start}, {stop})")
        out = []
        for s in self.series:
            out.append(TimeSeries(s.id, s.values[start:stop],
                                  s.start_time + start * s.interval, s.interval))
        return CorrelatedSet(tuple(out))

    def with_values(self, matrix: np.ndarray) -> "CorrelatedSet":
        """Same identities and time base, replaced values (e.g. normalized)."""
        if matrix.shape != (self.num_series, self.length):
            raise DataError(f"replacement matrix shape {matrix.shape} does not match")
        out = [TimeSeries(s.id, matrix[i], s.start_time, s.interval)
               for i, s in enumerate(self.series)]
        return CorrelatedSet(tuple(out))


@dataclass(frozen=True)
class WindowSample:
    """One supervised case: an input block and the target values that follow it."""

    offset: int
    input: Tensor            # (num_series, input_length)
    target: np.ndarray       # (horizon,)

    def __post_init__(self):
        t = np.asarray(self.target, dtype=np.float64)
        t.setflags(write=False)
        object.__setattr__(self, "target", t)


class Normalizer:
    """Per-series min-max scaling fitted on the training segment only.

    Constant series keep a unit denominator so the transform stays invertible.
    Test values may fall outside [0, 1]; they are passed through unchanged.
    """

    def __init__(self, mins: np.ndarray, maxs: np.ndarray):
        self.mins = np.asarray(mins, dtype=np.float64)
        self.maxs = np.asarray(maxs, dtype=np.float64)
        span = self.maxs - self.mins
        self.spans = np.where(span > 0, span, 1.0)

    @classmethod
    def fit(cls, train: CorrelatedSet) -> "Normalizer":
        m = train.values_matrix()
        return cls(m.min(axis=1), m.max(axis=1))

    def transform(self, cset: CorrelatedSet) -> CorrelatedSet:
        m = cset.values_matrix()
        return cset.with_values((m - self.mins[:, None]) / self.spans[:, None])

    def inverse_target(self, values: np.ndarray) -> np.ndarray:
        """Map normalized target-series values back to original units."""
        return np.asarray(values, dtype=np.float64) * self.spans[0] + self.mins[0]

    def transform_target(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mins[0]) / self.spans[0]

    def tensors(self) -> dict[str, np.ndarray]:
        """Serializable form, stored alongside model checkpoints."""
        return {"norm.min": self.mins.copy(), "norm.max": self.maxs.copy()}

    @classmethod
    def from_tensors(cls, tensors) -> "Normalizer":
        try:
            return cls(tensors["norm.min"], tensors["norm.max"])
        except KeyError as exc:
            raise DataError("checkpoint carries no normalization statistics") from exc


def split(cset: CorrelatedSet, train_frac: float = 0.84) -> tuple[CorrelatedSet, CorrelatedSet]:
    """Chronological prefix/suffix split at floor(train_frac * length)."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must be inside (0, 1), got {train_frac}")
    cut = int(train_frac * cset.length)
    if cut < 1 or cut >= cset.length:
        raise DataError(
            f"series of length {cset.length} is too short to split at {train_frac}")
    return cset.slice_time(0, cut), cset.slice_time(cut, cset.length)


def segment(cset: CorrelatedSet, input_length: int, horizon: int,
            stride: int = 1) -> list[WindowSample]:
    """Cut sliding supervised windows: inputs of l values, targets of the next p.

    Returns an empty list (with a warning) when the segment is shorter than
    input_length + horizon.
    """
    if input_length < 1 or horizon < 1 or stride < 1:
        raise ValueError("input_length, horizon and stride must be positive")
    total = input_length + horizon
    if cset.length < total:
        log.warning("segment of length %d is shorter than l + p = %d; no windows",
                    cset.length, total)
        return []
    matrix = cset.values_matrix()
    samples = []
    for a in range(0, cset.length - total + 1, stride):
        block = matrix[:, a:a + input_length]
        target = matrix[0, a + input_length:a + total]
        samples.append(WindowSample(a, Tensor(block), target))
    return samples


def train_val_split(samples: Sequence[WindowSample],
                    val_fraction: float = 0.15) -> tuple[list[WindowSample], list[WindowSample]]:
    """Chronological carve-out: the last fraction of windows becomes validation."""
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in [0, 1), got {val_fraction}")
    ordered = sorted(samples, key=lambda s: s.offset)
    n_val = int(len(ordered) * val_fraction)
    if n_val == 0:
        return list(ordered), []
    return ordered[:-n_val], ordered[-n_val:]


def stack_samples(samples: Sequence[WindowSample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack windows into dense batches (X: (N, n, l), Y: (N, p))."""
    if not samples:
        raise ValueError("cannot stack an empty sample list")
    x = np.stack([s.input.array for s in samples])
    y = np.stack([s.target for s in samples])
    return x, y


# -- CSV ingestion --------------------------------------------------------------


@dataclass
class CsvLayout:
    """Which columns to read; the first listed column is the forecast target."""

    columns: Sequence[str | int] = field(default_factory=list)
    timestamp: str | int | None = None
    delimiter: str = ","


def _looks_like_header(row: list[str]) -> bool:
    for cell in row:
        try:
            float(cell)
        except ValueError:
            return True
    return False


def _resolve_column(spec: str | int, header: list[str] | None, path: str) -> int:
    if isinstance(spec, int) or (isinstance(spec, str) and spec.lstrip("-").isdigit()):
        return int(spec)
    if header is None:
        raise DataError(f"{path}: column {spec!r} given by name but the file has no header")
    try:
        return header.index(spec)
    except ValueError:
        raise DataError(f"{path}: no column named {spec!r} (header: {header})") from None


def ingest_csv(path, layout: CsvLayout | None = None) -> CorrelatedSet:
    """Read an aligned series set from a delimited text file.

    Any blank or non-numeric cell, ragged row, or non-uniform timestamp
    column aborts ingestion with the offending row number.
    """
    layout = layout or CsvLayout()
    try:
        with open(path, "r", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh, delimiter=layout.delimiter))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path}: file holds no data rows")
    header = rows[0] if _looks_like_header(rows[0]) else None
    data_rows = rows[1:] if header is not None else rows
    first_data_line = 2 if header is not None else 1
    if not data_rows:
        raise DataError(f"{path}: file holds no data rows")

    width = len(data_rows[0])
    specs = list(layout.columns) if layout.columns else list(range(width))
    ts_index = None
    if layout.timestamp is not None:
        ts_index = _resolve_column(layout.timestamp, header, str(path))
        if not layout.columns:
            specs = [i for i in range(width) if i != ts_index]
    indices = [_resolve_column(s, header, str(path)) for s in specs]
    for idx in indices + ([ts_index] if ts_index is not None else []):
        if not 0 <= idx < width:
            raise DataError(f"{path}: column index {idx} outside row width {width}")

    columns = np.empty((len(indices), len(data_rows)))
    timestamps = np.empty(len(data_rows)) if ts_index is not None else None
    for r, row in enumerate(data_rows):
        line = first_data_line + r
        if len(row) != width:
            raise DataError(f"{path}: row {line} has {len(row)} cells, expected {width}")
        for c, idx in enumerate(indices):
            cell = row[idx].strip()
            if not cell:
                raise DataError(f"{path}: row {line} has a blank cell in column {idx}")
            try:
                columns[c, r] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {line} column {idx} is not numeric: {cell!r}") from None
        if timestamps is not None:
            try:
                timestamps[r] = float(row[ts_index].strip())
            except ValueError:
                raise DataError(
                    f"{path}: row {line} has a non-numeric timestamp") from None

    start, interval = 0.0, 1.0
    if timestamps is not None and len(timestamps) > 1:
        deltas = np.diff(timestamps)
        interval = float(deltas[0])
        if interval <= 0 or not np.allclose(deltas, interval, rtol=1e-9, atol=0.0):
            raise DataError(f"{path}: timestamp column is not uniformly spaced")
        start = float(timestamps[0])

    names = []
    for c, spec in enumerate(specs):
        if header is not None and isinstance(spec, str) and not spec.lstrip("-").isdigit():
            names.append(spec)
        elif header is not None:
            names.append(header[indices[c]])
        else:
            names.append(f"col{indices[c]}")
    series = tuple(TimeSeries(names[c], columns[c], start, interval)
                   for c in range(len(indices)))
    return CorrelatedSet(series)


def write_csv(cset: CorrelatedSet, path) -> None:
    """Write a series set with a header row; values round-trip bit-exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([s.id for s in cset.series])
        matrix = cset.values_matrix()
        for t in range(cset.length):
            writer.writerow(["%.17g" % v for v in matrix[:, t]])


# -- synthetic sources -----------------------------------------------------------


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Sample Pearson correlation coefficient."""
    return float(np.corrcoef(np.asarray(a, float), np.asarray(b, float))[0, 1])


def make_uncorrelated(reference: TimeSeries, seed: int,
                      max_attempts: int = 100) -> TimeSeries:
    """Build a surrogate with the reference's length, mean, and variance but
    randomized phase, so it carries no information about the reference.

    Regenerates with a fresh seed until |corr| with the reference drops
    below 0.1 (almost always the first attempt).
    """
    v = reference.values
    n = len(v)
    mean = float(v.mean())
    std = float(v.std())
    spectrum = np.abs(np.fft.rfft(v - mean))
    for attempt in range(max_attempts):
        rng = np.random.default_rng((seed, attempt))
        phases = rng.uniform(0.0, 2.0 * np.pi, size=spectrum.size)
        phases[0] = 0.0
        if n % 2 == 0:
            phases[-1] = 0.0
        surrogate = np.fft.irfft(spectrum * np.exp(1j * phases), n=n)
        s_std = surrogate.std()
        if s_std > 0 and std > 0:
            surrogate = (surrogate - surrogate.mean()) / s_std * std + mean
        else:
            surrogate = rng.normal(mean, max(std, 1e-12), size=n)
        if abs(pearson(surrogate, v)) < 0.1:
            return TimeSeries(f"{reference.id}-uncorrelated", surrogate,
                              reference.start_time, reference.interval)
    raise DataError("could not generate an uncorrelated surrogate; series too short?")


@dataclass
class SyntheticConfig:
    """Two-series benchmark generator.

    ``lagged`` couples the pair through a shared latent signal: the driver
    shows the latent signal ``lag`` steps early, the target shows it with
    observation noise. ``independent`` draws two unrelated signals.
    """

    kind: str = "lagged"           # "lagged" | "independent"
    length: int = 2000
    lag: int = 5
    noise: float = 0.05
    seed: int = 0
    base: float = 5.0
    season_period: int = 40
    season_amplitude: float = 1.0
    stoch_amplitude: float = 0.7
    ar_coeff: float = 0.9

    def __post_init__(self):
        if self.kind not in ("lagged", "independent"):
            raise ValueError(f"unknown synthetic kind {self.kind!r}")
        if self.length < 2 or self.lag < 0:
            raise ValueError("length must be >= 2 and lag >= 0")


def _latent_signal(cfg: SyntheticConfig, rng: np.random.Generator, n: int,
                   period_scale: float = 1.0) -> np.ndarray:
    t = np.arange(n, dtype=np.float64)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    period = cfg.season_period * period_scale
    season = cfg.season_amplitude * np.sin(2.0 * np.pi * t / period + phase)
    innovations = rng.normal(0.0, 1.0, size=n)
    ar = np.empty(n)
    scale = cfg.stoch_amplitude * np.sqrt(max(1.0 - cfg.ar_coeff ** 2, 1e-12))
    ar[0] = cfg.stoch_amplitude * innovations[0]
    for i in range(1, n):
        ar[i] = cfg.ar_coeff * ar[i - 1] + scale * innovations[i]
    return cfg.base + season + ar


def generate_synthetic(cfg: SyntheticConfig) -> CorrelatedSet:
    """Deterministic two-series set: target first, driver second."""
    rng = np.random.default_rng(cfg.seed)
    if cfg.kind == "lagged":
        latent = _latent_signal(cfg, rng, cfg.length + cfg.lag)
        target = latent[:cfg.length] + rng.normal(0.0, cfg.noise, size=cfg.length)
        driver = latent[cfg.lag:cfg.lag + cfg.length]
    else:
        target = _latent_signal(cfg, rng, cfg.length) + rng.normal(
            0.0, cfg.noise, size=cfg.length)
        # incommensurate period keeps two same-family seasonals uncorrelated
        driver = _latent_signal(cfg, rng, cfg.length, period_scale=1.618)
    return CorrelatedSet((
        TimeSeries("target", target),
        TimeSeries("driver", driver),
    ))
