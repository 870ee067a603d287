"""Price CSV ingestion, log returns, windowing, scaling and batching.

Pipeline order: load -> returns -> windows -> scale -> batch. Training
runs on scaled log-return windows; the inverse transforms recover raw
returns and, via exponentiated cumulative sums, price paths.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import date, datetime

import numpy as np

logger = logging.getLogger(__name__)

CSV_HEADER = ["Date", "Open", "High", "Low", "Close", "Adj Close", "Volume"]


class DataError(ValueError):
    """Raised for unreadable, malformed or degenerate input data."""


@dataclass
class PriceSeries:
    """Daily close prices in strictly increasing date order."""

    dates: list[date]
    closes: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        self.closes = np.asarray(self.closes, dtype=np.float64)
        if len(self.dates) != len(self.closes):
            raise DataError("dates and closes must have equal length")
        if len(self.closes) < 2:
            raise DataError("a price series needs at least 2 points")
        if np.any(self.closes <= 0):
            raise DataError("close prices must be positive")
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise DataError(f"dates must be strictly increasing, got {a} then {b}")

    def __len__(self) -> int:
        return len(self.closes)


@dataclass
class ReturnSeries:
    """Log returns ln(p_t / p_{t-1}); one shorter than the price series."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise DataError("log returns must be finite")

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class Scaler:
    """Invertible affine map fitted on all window values at once."""

    kind: str
    lo: float = 0.0
    hi: float = 0.0
    mean: float = 0.0
    std: float = 0.0

    def transform(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "minmax_symmetric":
            return 2.0 * (x - self.lo) / (self.hi - self.lo) - 1.0
        if self.kind == "zscore":
            return (x - self.mean) / self.std
        raise DataError(f"unknown scaler kind {self.kind!r}")

    def inverse(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "minmax_symmetric":
            return (np.asarray(x, dtype=np.float64) + 1.0) / 2.0 * (self.hi - self.lo) + self.lo
        if self.kind == "zscore":
            return np.asarray(x, dtype=np.float64) * self.std + self.mean
        raise DataError(f"unknown scaler kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi,
                "mean": self.mean, "std": self.std}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(kind=d["kind"], lo=d["lo"], hi=d["hi"], mean=d["mean"], std=d["std"])


@dataclass
class WindowedDataset:
    """Scaled windows of shape [num_windows, seq_len, 1] plus the scaler
    needed to invert them."""

    windows: np.ndarray
    scaler: Scaler
    seq_len: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float64)
        if self.windows.ndim != 3 or self.windows.shape[2] != 1:
            raise DataError(f"windows must be [n, seq_len, 1], got {self.windows.shape}")
        if self.windows.shape[1] != self.seq_len:
            raise DataError("window length disagrees with seq_len")

    def __len__(self) -> int:
        return self.windows.shape[0]


def load_csv(path) -> PriceSeries:
    """Read Date and Close from a Yahoo-style daily price CSV.

    Rows whose Close is missing, non-numeric or zero are dropped; the
    drop count is logged and kept on the returned series.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            if "Date" not in header or "Close" not in header:
                raise DataError(f"{path}: header must contain Date and Close columns")
            i_date = header.index("Date")
            i_close = header.index("Close")
            rows: list[tuple[date, float]] = []
            dropped = 0
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                try:
                    d = datetime.strptime(row[i_date].strip(), "%Y-%m-%d").date()
                except (ValueError, IndexError):
                    raise DataError(f"{path}:{lineno}: bad date {row[i_date]!r}") from None
                raw = row[i_close].strip() if len(row) > i_close else ""
                try:
                    close = float(raw)
                except ValueError:
                    dropped += 1
                    continue
                if not math.isfinite(close) or close == 0.0:
                    dropped += 1
                    continue
                rows.append((d, close))
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None
    if dropped:
        logger.warning("%s: dropped %d rows with missing/zero/non-numeric Close", path, dropped)
    if len(rows) < 2:
        raise DataError(f"{path}: fewer than 2 valid rows")
    rows.sort(key=lambda r: r[0])
    for (d1, _), (d2, _) in zip(rows, rows[1:]):
        if d1 == d2:
            raise DataError(f"{path}: duplicate date {d1}")
    dates = [r[0] for r in rows]
    closes = np.array([r[1] for r in rows])
    if np.any(closes <= 0):
        raise DataError(f"{path}: non-positive close price")
    return PriceSeries(dates=dates, closes=closes, dropped=dropped)


def log_returns(p: PriceSeries) -> ReturnSeries:
    """r_t = ln(close_t / close_{t-1})."""
    closes = p.closes
    if np.any(closes <= 0):
        raise DataError("log returns need positive prices")
    return ReturnSeries(np.diff(np.log(closes)))


def make_windows(r: ReturnSeries, seq_len: int = 50, stride: int = 1) -> np.ndarray:
    """Overlapping fixed-length windows [count, seq_len] of the return
    series; count = floor((len - seq_len)/stride) + 1."""
    if seq_len < 1 or stride < 1:
        raise DataError("seq_len and stride must be positive")
    values = r.values if isinstance(r, ReturnSeries) else np.asarray(r, dtype=np.float64)
    n = len(values)
    if n < seq_len:
        raise DataError(f"series of length {n} is shorter than seq_len {seq_len}")
    count = (n - seq_len) // stride + 1
    out = np.empty((count, seq_len))
    for i in range(count):
        out[i] = values[i * stride: i * stride + seq_len]
    return out


def fit_scale(windows: np.ndarray, kind: str = "minmax_symmetric",
              meta: dict | None = None) -> tuple[WindowedDataset, Scaler]:
    """Fit a global scaler over all window values and apply it.

    minmax_symmetric maps [min, max] linearly onto [-1, 1]; zscore
    standardizes by the global mean/std. Global (not per-window) so the
    cross-window volatility structure survives.
    """
    windows = np.asarray(windows, dtype=np.float64)
    if windows.size == 0:
        raise DataError("cannot scale an empty window set")
    if windows.ndim == 3 and windows.shape[2] == 1:
        windows = windows[:, :, 0]
    if windows.ndim != 2:
        raise DataError(f"expected [n, seq_len] windows, got shape {windows.shape}")
    if kind == "minmax_symmetric":
        lo, hi = float(windows.min()), float(windows.max())
        if hi == lo:
            raise DataError("constant window values cannot be min-max scaled")
        scaler = Scaler(kind=kind, lo=lo, hi=hi)
    elif kind == "zscore":
        mean, std = float(windows.mean()), float(windows.std())
        if std == 0.0:
            raise DataError("constant window values cannot be z-scored")
        scaler = Scaler(kind=kind, mean=mean, std=std)
    else:
        raise DataError(f"unknown scaler kind {kind!r}")
    scaled = scaler.transform(windows)[:, :, None]
    ds = WindowedDataset(windows=scaled, scaler=scaler, seq_len=windows.shape[1],
                         meta=dict(meta or {}))
    return ds, scaler


def inverse_scale(x: np.ndarray, scaler: Scaler) -> np.ndarray:
    """Exact linear inverse of the fitted scaler."""
    return scaler.inverse(np.asarray(x, dtype=np.float64))


def sample_real_batch(ds: WindowedDataset, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw windows uniformly with replacement; [batch, seq_len, 1]."""
    if len(ds) == 0:
        raise DataError("cannot sample from an empty dataset")
    idx = rng.integers(0, len(ds), size=batch_size)
    return ds.windows[idx]


def returns_to_prices(r, p0: float) -> np.ndarray:
    """Integrate log returns into a price path starting at p0.

    p_t = p0 * exp(sum of the first t returns); length len(r) + 1.
    """
    if p0 <= 0:
        raise DataError("starting price must be positive")
    values = r.values if isinstance(r, ReturnSeries) else np.asarray(r, dtype=np.float64)
    path = np.empty(len(values) + 1)
    path[0] = p0
    path[1:] = p0 * np.exp(np.cumsum(values))
    return path


def build_dataset(prices: PriceSeries, seq_len: int = 50, stride: int = 1,
                  kind: str = "minmax_symmetric") -> WindowedDataset:
    """The full pipeline: returns -> windows -> scale."""
    returns = log_returns(prices)
    windows = make_windows(returns, seq_len=seq_len, stride=stride)
    ds, _ = fit_scale(windows, kind=kind,
                      meta={"n_prices": len(prices), "n_returns": len(returns),
                            "stride": stride})
    return ds
