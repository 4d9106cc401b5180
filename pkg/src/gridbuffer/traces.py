"""Carbon-intensity and electricity-price time series.

Ingests CSV exports, resamples them to the control-slot resolution, splits a
multi-year pool into fixed-length episodes, and synthesizes deterministic
test traces.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

CARBON = "carbon"
PRICE = "price"

DEFAULT_SLOT_HOURS = 0.25
DEFAULT_EPISODE_SLOTS = 2880

# Longest run of missing slots that forward-fill is allowed to paper over.
MAX_GAP_FILL = 8

_EPOCH = datetime(2023, 1, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class SignalSeries:
    """A regularly sampled signal: carbon intensity (gCO2/kWh) or price (USD/kWh)."""

    start_time: datetime
    slot_duration_hours: float
    values: np.ndarray
    unit: str = CARBON

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1 or vals.size == 0:
            raise DataError("signal series must hold a non-empty 1-d value list")
        if self.slot_duration_hours <= 0:
            raise DataError("slot duration must be positive")
        if self.unit not in (CARBON, PRICE):
            raise ConfigError(f"unknown signal unit {self.unit!r}")
        if self.unit == CARBON and float(vals.min()) < 0:
            raise DataError("carbon intensity must be non-negative")

    def __len__(self) -> int:
        return int(self.values.size)

    def slice(self, start: int, stop: int) -> "SignalSeries":
        if not (0 <= start < stop <= len(self)):
            raise DataError(f"slice [{start}:{stop}] out of range for series of {len(self)}")
        offset = start * self.slot_duration_hours
        return SignalSeries(
            start_time=self.start_time + _hours(offset),
            slot_duration_hours=self.slot_duration_hours,
            values=self.values[start:stop].copy(),
            unit=self.unit,
        )


@dataclass(frozen=True)
class Episode:
    """Aligned carbon and price series of exactly `length_slots` slots."""

    carbon: SignalSeries
    price: SignalSeries
    length_slots: int = DEFAULT_EPISODE_SLOTS

    def __post_init__(self):
        if self.carbon.unit != CARBON or self.price.unit != PRICE:
            raise ConfigError("episode series units must be (carbon, price)")
        if self.carbon.slot_duration_hours != self.price.slot_duration_hours:
            raise DataError("carbon and price series must share one slot duration")
        if len(self.carbon) < self.length_slots or len(self.price) < self.length_slots:
            raise DataError(
                f"episode needs {self.length_slots} slots, "
                f"got carbon={len(self.carbon)} price={len(self.price)}"
            )

    @property
    def slot_hours(self) -> float:
        return self.carbon.slot_duration_hours


def _hours(h: float):
    from datetime import timedelta

    return timedelta(hours=h)


def _parse_rfc3339(text: str, line_no: int) -> datetime:
    try:
        ts = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError as exc:
        raise DataError(f"line {line_no}: bad timestamp {text!r}: {exc}") from None
    if ts.tzinfo is None:
        raise DataError(f"line {line_no}: timestamp {text!r} lacks a UTC offset")
    return ts.astimezone(timezone.utc)


def load_csv(path, expected_unit: str, slot_hours: float = DEFAULT_SLOT_HOURS) -> SignalSeries:
    """Load a `timestamp,value` CSV and resample it to the control-slot duration.

    Timestamps must be RFC 3339 and strictly increasing. Gaps up to
    MAX_GAP_FILL consecutive slots are forward-filled with a warning.
    """
    timestamps: list[datetime] = []
    raw: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [c.strip().lower() for c in header[:2]] != ["timestamp", "value"]:
            raise DataError(f"{path}: expected header 'timestamp,value', got {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise DataError(f"{path}: line {line_no}: expected 2 columns, got {len(row)}")
            ts = _parse_rfc3339(row[0], line_no)
            try:
                val = float(row[1])
            except ValueError:
                raise DataError(f"{path}: line {line_no}: bad value {row[1]!r}") from None
            if timestamps and ts <= timestamps[-1]:
                raise DataError(f"{path}: line {line_no}: timestamps not strictly increasing")
            timestamps.append(ts)
            raw.append(val)
    if not raw:
        raise DataError(f"{path}: no data rows")

    values, base_hours = _fill_gaps(timestamps, raw, path, fallback_hours=slot_hours)
    series = SignalSeries(
        start_time=timestamps[0],
        slot_duration_hours=base_hours,
        values=np.asarray(values),
        unit=expected_unit,
    )
    return resample(series, slot_hours)


def _fill_gaps(
    timestamps: Sequence[datetime], raw: Sequence[float], path, fallback_hours: float
) -> tuple[list[float], float]:
    """Place samples on the regular grid implied by the smallest spacing."""
    if len(timestamps) == 1:
        return list(raw), fallback_hours
    diffs = [
        (timestamps[i + 1] - timestamps[i]).total_seconds() for i in range(len(timestamps) - 1)
    ]
    base_s = min(diffs)
    values: list[float] = [raw[0]]
    for i, gap_s in enumerate(diffs):
        steps = gap_s / base_s
        if abs(steps - round(steps)) > 1e-6:
            raise DataError(
                f"{path}: spacing {gap_s}s after row {i + 1} is not a multiple of the base {base_s}s"
            )
        missing = int(round(steps)) - 1
        if missing > MAX_GAP_FILL:
            raise DataError(
                f"{path}: gap of {missing} slots after {timestamps[i].isoformat()} "
                f"exceeds the forward-fill cap of {MAX_GAP_FILL}"
            )
        if missing:
            logger.warning("%s: forward-filling %d missing slot(s) after %s", path, missing, timestamps[i])
            values.extend([raw[i]] * missing)
        values.append(raw[i + 1])
    return values, base_s / 3600.0


def resample(series: SignalSeries, target_slot_hours: float) -> SignalSeries:
    """Downsample by averaging or upsample by forward-fill.

    The target duration must be an integer multiple or divisor of the source
    duration.
    """
    if target_slot_hours <= 0:
        raise ConfigError("target slot duration must be positive")
    src = series.slot_duration_hours
    if math.isclose(src, target_slot_hours, rel_tol=1e-9):
        return series

    ratio = target_slot_hours / src
    if ratio > 1 and math.isclose(ratio, round(ratio), rel_tol=1e-9):
        m = int(round(ratio))
        n_out = len(series) // m
        if n_out == 0:
            raise DataError(
                f"cannot downsample {len(series)} slots by a factor of {m}: no full target slot"
            )
        vals = series.values[: n_out * m].reshape(n_out, m).mean(axis=1)
    elif ratio < 1 and math.isclose(1 / ratio, round(1 / ratio), rel_tol=1e-9):
        m = int(round(1 / ratio))
        vals = np.repeat(series.values, m)
    else:
        raise DataError(
            f"slot durations not commensurate: source {src} h vs target {target_slot_hours} h"
        )
    return SignalSeries(series.start_time, target_slot_hours, vals, series.unit)


def split(
    carbon_pool: SignalSeries,
    price_pool: SignalSeries,
    validation_fraction: float,
    episode_slots: int = DEFAULT_EPISODE_SLOTS,
) -> tuple[list[Episode], list[Episode]]:
    """Temporal validation/test split, then partition into T-slot episodes.

    Validation slots come first; each partition is chopped into consecutive
    non-overlapping episodes and any trailing remainder is dropped.
    """
    if not 0 < validation_fraction < 1:
        raise ConfigError(f"validation_fraction must be in (0,1), got {validation_fraction}")
    if carbon_pool.slot_duration_hours != price_pool.slot_duration_hours:
        raise DataError("carbon and price pools must share one slot duration")
    n = min(len(carbon_pool), len(price_pool))
    if n < episode_slots:
        raise DataError(f"pool of {n} slots is shorter than one {episode_slots}-slot episode")

    val_len = int(math.floor(n * validation_fraction))

    def carve(start: int, stop: int) -> list[Episode]:
        episodes = []
        for lo in range(start, stop - episode_slots + 1, episode_slots):
            episodes.append(
                Episode(
                    carbon=carbon_pool.slice(lo, lo + episode_slots),
                    price=price_pool.slice(lo, lo + episode_slots),
                    length_slots=episode_slots,
                )
            )
        return episodes

    return carve(0, val_len), carve(val_len, n)


# ---------------------------------------------------------------------------
# Synthetic profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class TwoRegime:
    """Square wave alternating between `low` and `high` in blocks of `switch_slot` slots."""

    low: float
    high: float
    switch_slot: int


@dataclass(frozen=True)
class Diurnal:
    mean: float
    amplitude: float
    period_slots: int
    noise_std: float = 0.0


Profile = Constant | TwoRegime | Diurnal


def profile_from_dict(spec: dict) -> Profile:
    kind = spec.get("kind")
    args = {k: v for k, v in spec.items() if k != "kind"}
    try:
        if kind == "constant":
            return Constant(**args)
        if kind == "two_regime":
            return TwoRegime(**args)
        if kind == "diurnal":
            return Diurnal(**args)
    except TypeError as exc:
        raise ConfigError(f"bad {kind} profile: {exc}") from None
    raise ConfigError(f"unknown synthetic profile kind {kind!r}")


def synth_trace(
    profile: Profile,
    length_slots: int,
    seed: int,
    unit: str = CARBON,
    slot_hours: float = DEFAULT_SLOT_HOURS,
    start_time: datetime = _EPOCH,
) -> SignalSeries:
    """Deterministic synthetic series; carbon values are clipped at zero."""
    if length_slots < 1:
        raise ConfigError("length_slots must be >= 1")
    t = np.arange(length_slots)
    rng = np.random.default_rng(seed)
    if isinstance(profile, Constant):
        vals = np.full(length_slots, float(profile.value))
    elif isinstance(profile, TwoRegime):
        if profile.switch_slot <= 0:
            raise ConfigError("two_regime switch_slot must be positive")
        block = t // profile.switch_slot
        vals = np.where(block % 2 == 0, float(profile.low), float(profile.high))
    elif isinstance(profile, Diurnal):
        if profile.period_slots <= 0:
            raise ConfigError("diurnal period_slots must be positive")
        vals = profile.mean + profile.amplitude * np.sin(2 * np.pi * t / profile.period_slots)
        vals = vals + rng.normal(0.0, profile.noise_std, size=length_slots)
    else:
        raise ConfigError(f"unknown profile type {type(profile).__name__}")
    if unit == CARBON:
        vals = np.maximum(vals, 0.0)
    return SignalSeries(start_time, slot_hours, vals, unit)
