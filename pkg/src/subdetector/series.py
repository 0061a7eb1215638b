"""Time-series ingestion, windowing, and the exponential multi-length view."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DataError",
    "ConfigError",
    "TimeSeries",
    "WindowConfig",
    "SubsequenceSet",
    "ingest",
    "estimate_period",
    "make_windows",
    "multi_length_view",
    "scale_lengths",
    "default_delta",
]

DEFAULT_DELTA_APERIODIC = 10
DEFAULT_MAX_SCALE = 5


class DataError(ValueError):
    """Input data unreadable or malformed."""


class ConfigError(ValueError):
    """Configuration incompatible with the data."""


@dataclass(frozen=True)
class TimeSeries:
    """A univariate series with optional period and per-point binary labels."""

    values: np.ndarray
    period: int | None = None
    labels: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int8)
            if labels.shape != values.shape:
                raise DataError(
                    f"{labels.size} labels for {values.size} values")
            object.__setattr__(self, "labels", labels)
        if not np.all(np.isfinite(values)):
            raise DataError("series contains non-finite values after cleaning")
        if self.period is not None and self.period <= 0:
            raise DataError(f"period must be positive, got {self.period}")

    def __len__(self):
        return self.values.size


def default_delta(period: int | None) -> int:
    """Segment length: ceil(0.125 * period) when periodic, else 10."""
    if period is None:
        return DEFAULT_DELTA_APERIODIC
    return max(1, math.ceil(0.125 * period))


@dataclass(frozen=True)
class WindowConfig:
    """Sliding-window geometry: segment length, scale count, and stride."""

    delta: int
    max_scale: int = DEFAULT_MAX_SCALE
    stride: int = 0  # 0 means the default of 2*delta

    def __post_init__(self):
        if self.delta <= 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if self.max_scale < 0:
            raise ConfigError(f"max_scale must be >= 0, got {self.max_scale}")
        if self.stride == 0:
            object.__setattr__(self, "stride", 2 * self.delta)
        if self.stride <= 0:
            raise ConfigError(f"stride must be positive, got {self.stride}")

    @property
    def max_length(self) -> int:
        return (2 ** self.max_scale) * self.delta

    @classmethod
    def for_series(cls, series: TimeSeries, max_scale: int = DEFAULT_MAX_SCALE,
                   stride: int = 0) -> "WindowConfig":
        """Default geometry for a series, shrinking scales to fit short input."""
        delta = default_delta(series.period)
        scale = max_scale
        while scale > 0 and (2 ** scale) * delta > len(series):
            scale -= 1
        cfg = cls(delta=delta, max_scale=scale, stride=stride)
        if cfg.max_length > len(series):
            raise ConfigError(
                f"window length {cfg.max_length} exceeds series length {len(series)}")
        return cfg


@dataclass(frozen=True)
class SubsequenceSet:
    """Window matrix with start positions and derived per-window labels."""

    windows: np.ndarray
    starts: np.ndarray
    config: WindowConfig
    window_labels: np.ndarray | None = None
    period: int | None = None

    @property
    def count(self) -> int:
        return self.windows.shape[0]

    @property
    def length(self) -> int:
        return self.windows.shape[1]


def _parse_float(token: str, lineno: int, path: str) -> float:
    token = token.strip()
    if token == "" or token.lower() in ("nan", "na", "null"):
        return math.nan
    try:
        return float(token)
    except ValueError as err:
        raise DataError(f"{path}:{lineno}: cannot parse {token!r}") from err


def _repair_nonfinite(values: np.ndarray) -> np.ndarray:
    good = np.isfinite(values)
    if not good.any():
        raise DataError("all values are NaN or infinite")
    if good.all():
        return values
    x = np.arange(values.size)
    repaired = values.copy()
    repaired[~good] = np.interp(x[~good], x[good], values[good])
    return repaired


def ingest(path: str, fmt: str = "plain-values", normalize: bool = True,
           period: int | None = None, name: str = "") -> TimeSeries:
    """Load a series from disk.

    ``plain-values``: one float per line. ``labeled-csv``: "value,label"
    rows, header auto-detected by a non-numeric first row. Non-finite
    entries are repaired by linear interpolation; the series is then
    z-normalized globally (disable with ``normalize=False``).
    """
    if fmt not in ("plain-values", "labeled-csv"):
        raise ConfigError(f"unknown format {fmt!r}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from err

    values: list[float] = []
    labels: list[int] = []
    expects_labels = fmt == "labeled-csv"
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",") if expects_labels else [line]
        if expects_labels and len(parts) != 2:
            raise DataError(
                f"{path}:{lineno}: expected 2 columns, got {len(parts)}")
        if lineno == 1 and expects_labels:
            try:
                float(parts[0])
            except ValueError:
                continue  # header row
        values.append(_parse_float(parts[0], lineno, path))
        if expects_labels:
            labels.append(1 if float(parts[1]) != 0.0 else 0)
    if not values:
        raise DataError(f"{path}: no data rows")

    arr = _repair_nonfinite(np.asarray(values, dtype=np.float64))
    if normalize:
        std = arr.std()
        arr = (arr - arr.mean()) / (std if std > 1e-12 else 1.0)
    label_arr = np.asarray(labels, dtype=np.int8) if expects_labels else None
    return TimeSeries(values=arr, period=period,
                      labels=label_arr, name=name or path)


def estimate_period(series: TimeSeries, max_lag: int) -> int | None:
    """Autocorrelation peak in [4, max_lag] if it exceeds 0.3, else None."""
    x = series.values
    if x.size < 8:
        raise DataError(f"series too short to estimate a period ({x.size} points)")
    if max_lag >= x.size:
        raise ConfigError(f"max_lag {max_lag} must be < series length {x.size}")
    centered = x - x.mean()
    denom = float(centered @ centered)
    if denom < 1e-12:
        return None  # constant series
    full = np.correlate(centered, centered, mode="full")
    acf = full[x.size - 1:] / denom
    lo = 4
    if max_lag < lo:
        return None
    window = acf[lo:max_lag + 1]
    best = int(np.argmax(window))
    if window[best] <= 0.3:
        return None
    return lo + best


def make_windows(series: TimeSeries, config: WindowConfig) -> SubsequenceSet:
    """Slide a length-L window at the configured stride over the series."""
    length = config.max_length
    t = len(series)
    if length > t:
        raise ConfigError(
            f"window length {length} exceeds series length {t}")
    stride = config.stride
    n = (t - length) // stride + 1
    starts = np.arange(n) * stride
    idx = starts[:, None] + np.arange(length)[None, :]
    windows = series.values[idx]
    window_labels = None
    if series.labels is not None:
        window_labels = (series.labels[idx].max(axis=1) > 0).astype(np.int8)
    return SubsequenceSet(windows=windows, starts=starts, config=config,
                          window_labels=window_labels, period=series.period)


def scale_lengths(config: WindowConfig) -> list[int]:
    """Prefix lengths 2^p * delta for p = 0 .. max_scale."""
    return [(2 ** p) * config.delta for p in range(config.max_scale + 1)]


def multi_length_view(subseq: SubsequenceSet, i: int) -> list[np.ndarray]:
    """The nested prefixes of window i, one per scale."""
    if not 0 <= i < subseq.count:
        raise IndexError(f"window index {i} out of range [0, {subseq.count})")
    row = subseq.windows[i]
    return [row[:length] for length in scale_lengths(subseq.config)]
