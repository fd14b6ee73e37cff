"""Episode instances: synthetic price/wind generators and CSV ingestion.

The two synthetic cases provide day-scale (24 h) and week-scale (168 h)
episodes whose electricity prices spike at the end (one spike window for the
day case, two clusters for the week case), sized so that converting wind
power to gas ahead of the spike is worthwhile.  Real series are ingested
from hourly CSV files with columns ``timestamp,price_cad_per_mwh,
wind_power_mw``.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

WIND_CAPACITY_MW = 31.5  # seven 4.5 MW turbines

CSV_COLUMNS = ("timestamp", "price_cad_per_mwh", "wind_power_mw")
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S"


class DataError(Exception):
    """Raised when an episode data file fails validation."""


@dataclass
class EpisodeInstance:
    """Time-aligned wholesale price and renewable power series."""

    name: str
    prices: np.ndarray          # C$/MWh, negatives allowed
    wind_mw: np.ndarray         # available renewable power, >= 0
    dt_hours: float = 1.0
    start: datetime = field(default_factory=lambda: datetime(2022, 1, 1))

    def __post_init__(self) -> None:
        self.prices = np.asarray(self.prices, dtype=float)
        self.wind_mw = np.asarray(self.wind_mw, dtype=float)
        if self.prices.shape != self.wind_mw.shape or self.prices.ndim != 1:
            raise DataError("prices and wind series must be equal-length 1-D")
        if not np.all(np.isfinite(self.prices)):
            raise DataError("prices must be finite")
        if np.any(self.wind_mw < 0.0) or not np.all(np.isfinite(self.wind_mw)):
            raise DataError("wind power must be finite and non-negative")

    def __len__(self) -> int:
        return len(self.prices)

    def timestamp(self, t: int) -> datetime:
        return self.start + timedelta(hours=self.dt_hours * t)


def _smoothed_noise(rng: np.random.Generator, n: int, window: int = 5) -> np.ndarray:
    """Moving-average-smoothed uniform noise rescaled to [0, 1]."""
    raw = rng.uniform(0.0, 1.0, n + window - 1)
    kernel = np.ones(window) / window
    smooth = np.convolve(raw, kernel, mode="valid")
    lo, hi = smooth.min(), smooth.max()
    if hi - lo < 1e-12:
        return np.full(n, 0.5)
    return (smooth - lo) / (hi - lo)


def _diurnal_prices(rng: np.random.Generator, n: int, median_price: float) -> np.ndarray:
    # Deep off-peak troughs (down to ~0.5x median) make storing wind as gas
    # worthwhile, mirroring the real market series the magnitudes come from.
    hours = np.arange(n, dtype=float)
    base = median_price * (1.0 + 0.45 * np.sin(2.0 * np.pi * (hours - 9.0) / 24.0))
    noise = rng.uniform(-0.08, 0.08, n) * median_price
    return base + noise


def generate_cs1(seed: int, median_price: float = 84.0,
                 spike_multiplier: float = 8.0,
                 wind_capacity_mw: float = WIND_CAPACITY_MW) -> EpisodeInstance:
    """One 24 h episode with a price spike in the final two hours.

    The spike peak is ``spike_multiplier`` times the realized median of the
    first 22 hours, which places it above the P2G+GT break-even so that the
    optimal dispatch converts wind to gas ahead of the spike.
    """
    rng = np.random.default_rng(seed)
    n = 24
    prices = _diurnal_prices(rng, n, median_price)
    med = float(np.median(prices[: n - 2]))
    prices[n - 2] = 0.75 * spike_multiplier * med
    prices[n - 1] = spike_multiplier * med
    wind = (0.35 + 0.6 * _smoothed_noise(rng, n)) * wind_capacity_mw
    return EpisodeInstance(f"cs1-seed{seed}", prices, wind,
                           start=datetime(2022, 6, 1))


def generate_cs2(seed: int, median_price: float = 84.0,
                 spike_multiplier: float = 8.0,
                 wind_capacity_mw: float = WIND_CAPACITY_MW) -> EpisodeInstance:
    """One 168 h episode with two spike clusters in the final third.

    Cluster starts are at least 26 h apart (so at least a full day separates
    them), leaving room to recharge the gas store between the peaks.
    """
    rng = np.random.default_rng(seed)
    n = 168
    prices = _diurnal_prices(rng, n, median_price)
    first = int(rng.integers(114, 127))
    gap = int(rng.integers(26, 34))
    second = min(first + gap, n - 3)
    med = float(np.median(prices))
    for start in (first, second):
        prices[start] = 0.75 * spike_multiplier * med
        prices[start + 1] = spike_multiplier * med
    wind = (0.35 + 0.6 * _smoothed_noise(rng, n, window=7)) * wind_capacity_mw
    return EpisodeInstance(f"cs2-seed{seed}", prices, wind,
                           start=datetime(2022, 6, 1))


def spike_clusters(instance: EpisodeInstance, threshold_ratio: float = 4.0) -> list[tuple[int, int]]:
    """Maximal runs of hours whose price is >= threshold_ratio x series median.

    Returns (start, end) pairs with an exclusive end index.
    """
    threshold = threshold_ratio * float(np.median(instance.prices))
    above = instance.prices >= threshold
    clusters: list[tuple[int, int]] = []
    start = None
    for t, flag in enumerate(above):
        if flag and start is None:
            start = t
        elif not flag and start is not None:
            clusters.append((start, t))
            start = None
    if start is not None:
        clusters.append((start, len(above)))
    return clusters


def load_csv(path: str | Path) -> EpisodeInstance:
    """Load an hourly price/wind series from CSV.

    The file must carry the header ``timestamp,price_cad_per_mwh,
    wind_power_mw`` and strictly hourly, gap-free timestamps.  Validation
    failures raise :class:`DataError` naming the offending row.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        idx = {c: header.index(c) for c in CSV_COLUMNS}

        timestamps: list[datetime] = []
        prices: list[float] = []
        wind: list[float] = []
        for row_no, row in enumerate(reader, start=2):
            try:
                ts = datetime.strptime(row[idx["timestamp"]], TIMESTAMP_FORMAT)
                price = float(row[idx["price_cad_per_mwh"]])
                w = float(row[idx["wind_power_mw"]])
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}: row {row_no}: {exc}") from None
            if timestamps:
                expected = timestamps[-1] + timedelta(hours=1)
                if ts != expected:
                    raise DataError(
                        f"{path}: row {row_no}: expected timestamp "
                        f"{expected.strftime(TIMESTAMP_FORMAT)}, got "
                        f"{ts.strftime(TIMESTAMP_FORMAT)}")
            if w < 0.0:
                raise DataError(f"{path}: row {row_no}: negative wind power {w}")
            timestamps.append(ts)
            prices.append(price)
            wind.append(w)

    if not timestamps:
        raise DataError(f"{path}: no data rows")
    try:
        return EpisodeInstance(path.stem, np.array(prices), np.array(wind),
                               start=timestamps[0])
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_csv(instance: EpisodeInstance, path: str | Path) -> None:
    """Write an instance in the same schema load_csv expects (round-trips exactly)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for t in range(len(instance)):
            writer.writerow([
                instance.timestamp(t).strftime(TIMESTAMP_FORMAT),
                repr(float(instance.prices[t])),
                repr(float(instance.wind_mw[t])),
            ])


def summarize(instance: EpisodeInstance,
              wind_capacity_mw: float = WIND_CAPACITY_MW) -> dict[str, float]:
    """Basic price statistics plus the wind capacity factor."""
    return {
        "price_mean": float(np.mean(instance.prices)),
        "price_median": float(np.median(instance.prices)),
        "price_std": float(np.std(instance.prices)),
        "capacity_factor": float(np.mean(instance.wind_mw) / wind_capacity_mw),
    }


def content_hash(data: bytes) -> str:
    """Git-style blob hash of raw file bytes (used to fingerprint run inputs)."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()
