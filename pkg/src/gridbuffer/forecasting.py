"""Probabilistic multi-step forecasting of carbon and price signals.

A forecast backend is anything that maps a ForecastRequest to
``num_samples`` sample paths; the engine reduces those paths to a per-step
mean/std and a confidence vector. Built-ins: seasonal-naive, persistence,
and an oracle that replays the true future. An external model process can
be attached through the newline-delimited JSON bridge protocol.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import BridgeError, ConfigError, DataError, ForecasterError, UndefinedMetricError

DEFAULT_CONTEXT_CAP = 1344  # 14 days of 15-minute slots
DEFAULT_NUM_SAMPLES = 20
DEFAULT_PERIOD = 96  # one day of 15-minute slots
DEFAULT_DECAY = 0.995
DEFAULT_EPS = 1e-6


@dataclass(frozen=True)
class ForecastRequest:
    """History plus horizon/num_samples. `origin` is the absolute slot index of
    the first forecast step; only the oracle backend needs it."""

    history: np.ndarray
    horizon: int
    num_samples: int = DEFAULT_NUM_SAMPLES
    origin: int | None = None

    def __post_init__(self):
        hist = np.asarray(self.history, dtype=float)
        hist.setflags(write=False)
        object.__setattr__(self, "history", hist)
        if hist.ndim != 1 or hist.size == 0:
            raise ConfigError("forecast history must be a non-empty 1-d sequence")
        if self.horizon < 1:
            raise ConfigError("forecast horizon must be >= 1")
        if self.num_samples < 1:
            raise ConfigError("num_samples must be >= 1")


@dataclass(frozen=True)
class ForecastResult:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        std = np.asarray(self.std, dtype=float)
        if mean.shape != std.shape or mean.ndim != 1:
            raise DataError("forecast mean/std must be 1-d and equally long")
        if std.size and float(std.min()) < 0:
            raise DataError("forecast std must be non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


@dataclass(frozen=True)
class ConfidenceVector:
    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        object.__setattr__(self, "rho", rho)
        if rho.size and (float(rho.min()) <= 0 or float(rho.max()) > 1):
            raise DataError("confidence values must lie in (0,1]")


class Forecaster(Protocol):
    def sample_paths(self, request: ForecastRequest) -> np.ndarray: ...


def forecast(backend: Forecaster, request: ForecastRequest) -> ForecastResult:
    """Reduce the backend's sample paths to their per-step mean and population std."""
    try:
        paths = np.asarray(backend.sample_paths(request), dtype=float)
    except ForecasterError:
        raise
    except Exception as exc:
        raise ForecasterError(f"forecast backend failed: {exc}") from exc
    expected = (request.num_samples, request.horizon)
    if paths.shape != expected:
        raise ForecasterError(f"backend returned shape {paths.shape}, expected {expected}")
    return ForecastResult(mean=paths.mean(axis=0), std=paths.std(axis=0))


def seasonal_naive_samples(
    history: Sequence[float],
    horizon: int,
    num_samples: int,
    period: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Repeat the last observed period, plus gaussian noise at the lag-period
    residual scale. Falls back to persistence when history is too short.

    The bridge's mock model reimplements this recipe verbatim; any change
    here must be mirrored there.
    """
    if period < 1:
        raise ConfigError("seasonal period must be >= 1")
    hist = np.asarray(history, dtype=float)
    n = hist.size
    if n >= 2 * period:
        base = hist[n - period + (np.arange(horizon) % period)]
        resid = hist[period:] - hist[:-period]
        std = float(resid.std())
    else:
        base = np.full(horizon, hist[-1])
        std = float(hist.std())
    noise = rng.normal(0.0, std, size=(num_samples, horizon))
    return base[None, :] + noise


class SeasonalNaiveForecaster:
    """Built-in stand-in for a learned forecaster."""

    def __init__(self, period: int = DEFAULT_PERIOD, seed: int = 0):
        if period < 1:
            raise ConfigError("seasonal period must be >= 1")
        self.period = period
        self._rng = np.random.default_rng(seed)

    def sample_paths(self, request: ForecastRequest) -> np.ndarray:
        return seasonal_naive_samples(
            request.history, request.horizon, request.num_samples, self.period, self._rng
        )


class PersistenceForecaster:
    """Repeats the last observation; zero spread."""

    def sample_paths(self, request: ForecastRequest) -> np.ndarray:
        last = float(request.history[-1])
        return np.full((request.num_samples, request.horizon), last)


class OracleForecaster:
    """Replays the true future; used for perfect-forecast experiments.

    Requires `request.origin`; steps beyond the known series repeat its
    final value.
    """

    def __init__(self, truth: Sequence[float]):
        self._truth = np.asarray(truth, dtype=float)
        if self._truth.size == 0:
            raise ConfigError("oracle needs a non-empty truth series")

    def sample_paths(self, request: ForecastRequest) -> np.ndarray:
        if request.origin is None:
            raise ForecasterError("oracle forecaster needs request.origin")
        start = max(0, int(request.origin))
        future = self._truth[start : start + request.horizon]
        if future.size < request.horizon:
            pad = np.full(request.horizon - future.size, self._truth[-1])
            future = np.concatenate([future, pad])
        return np.tile(future, (request.num_samples, 1))


def persistence_result(last_value: float, horizon: int) -> ForecastResult:
    """The engine's documented fallback when a backend fails."""
    return ForecastResult(
        mean=np.full(horizon, float(last_value)), std=np.zeros(horizon)
    )


def confidence(
    std_g: Sequence[float],
    std_p: Sequence[float],
    mean_g: Sequence[float],
    mean_p: Sequence[float],
    decay: float = DEFAULT_DECAY,
    eps: float = DEFAULT_EPS,
) -> ConfidenceVector:
    """Per-step penalty calibration: temporal decay times the inverse of
    (1 + worst coefficient of variation across the two signals)."""
    if not 0 < decay <= 1:
        raise ConfigError("decay must lie in (0,1]")
    sg, sp = np.asarray(std_g, float), np.asarray(std_p, float)
    mg, mp = np.asarray(mean_g, float), np.asarray(mean_p, float)
    if not sg.shape == sp.shape == mg.shape == mp.shape:
        raise DataError(
            f"confidence inputs must share one shape, got "
            f"{sg.shape}/{sp.shape}/{mg.shape}/{mp.shape}"
        )
    cv = np.maximum(sg / np.maximum(np.abs(mg), eps), sp / np.maximum(np.abs(mp), eps))
    rho = decay ** np.arange(sg.size) / (1.0 + cv)
    return ConfidenceVector(rho)


def mape(forecast_mean: Sequence[float], actual: Sequence[float], eps: float = 1e-9) -> float:
    """Mean absolute percentage error as a fraction; near-zero actuals excluded."""
    f = np.asarray(forecast_mean, float)
    a = np.asarray(actual, float)
    if f.shape != a.shape:
        raise DataError(f"mape shapes differ: {f.shape} vs {a.shape}")
    keep = np.abs(a) >= eps
    if not keep.any():
        raise UndefinedMetricError("mape undefined: every actual value is below eps")
    return float(np.mean(np.abs(f[keep] - a[keep]) / np.abs(a[keep])))


class BridgeForecaster:
    """Client for an external forecaster process speaking newline-delimited JSON
    over stdin/stdout. One request in flight at a time; responses must echo
    the request id within the timeout."""

    def __init__(self, cmd: Sequence[str], timeout_s: float = 30.0):
        if not cmd:
            raise ConfigError("bridge command must be a non-empty argv list")
        self._timeout = timeout_s
        self._next_id = 0
        try:
            self._proc = subprocess.Popen(
                list(cmd),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
            )
        except OSError as exc:
            raise BridgeError(f"could not start bridge {cmd!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)  # EOF marker

    def sample_paths(self, request: ForecastRequest) -> np.ndarray:
        req_id = self._next_id
        self._next_id += 1
        payload = {
            "id": req_id,
            "series": [float(v) for v in request.history],
            "horizon": request.horizon,
            "num_samples": request.num_samples,
        }
        try:
            self._proc.stdin.write(json.dumps(payload) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError, OSError) as exc:
            raise BridgeError(f"bridge process is gone: {exc}") from exc

        while True:
            try:
                line = self._lines.get(timeout=self._timeout)
            except queue.Empty:
                raise BridgeError(f"bridge did not answer request {req_id} within {self._timeout}s")
            if line is None:
                raise BridgeError("bridge closed its stdout")
            try:
                resp = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BridgeError(f"bridge sent invalid JSON: {exc}")
            resp_id = resp.get("id")
            if resp_id != req_id:
                if isinstance(resp_id, int) and resp_id < req_id:
                    continue  # stale answer from a timed-out request
                raise BridgeError(f"bridge answered id {resp_id}, expected {req_id}")
            if "error" in resp:
                raise ForecasterError(f"bridge error: {resp['error']}")
            samples = np.asarray(resp.get("samples"), dtype=float)
            if samples.shape != (request.num_samples, request.horizon):
                raise BridgeError(
                    f"bridge returned shape {samples.shape}, expected "
                    f"{(request.num_samples, request.horizon)}"
                )
            return samples

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
