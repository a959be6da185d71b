"""Stochastic uplink-delay model: GEV fitting, percentile scheduling, watchdog.

The command uplink delay is modeled with a generalized extreme value (GEV)
distribution refit every second over the most recent samples. The 95th
percentile drives the hold-and-apply actuation schedule (converting variable
delay into a near-constant one); the 99.9th percentile, capped at 200 ms,
arms the vehicle's emergency-stop watchdog.
"""

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import gamma as gamma_fn

from .errors import InvalidInputError

WATCHDOG_CAP_S = 0.200
REFIT_WINDOW = 50
MIN_FIT_SAMPLES = 20
XI_BOUNDS = (-0.5, 1.0)  # keeps the MLE regular on short windows


@dataclass(frozen=True)
class GevParams:
    """GEV shape/location/scale. For xi > 0 the support is [mu - sigma/xi, inf)."""

    xi: float
    mu: float
    sigma: float
    degenerate: bool = field(default=False, compare=False)

    def __post_init__(self):
        if not (self.sigma > 0):
            raise InvalidInputError("sigma must be > 0")

    @property
    def lower_bound(self) -> float:
        if self.xi > 0:
            return self.mu - self.sigma / self.xi
        return -math.inf

    @property
    def mean(self) -> float:
        if self.xi >= 1:
            return math.inf
        if abs(self.xi) < 1e-12:
            return self.mu + self.sigma * 0.5772156649015329
        return self.mu + self.sigma * (gamma_fn(1.0 - self.xi) - 1.0) / self.xi


@dataclass(frozen=True)
class PercentileEstimate:
    """p95/p99.9 of the uplink delay, stamped with the fit time."""

    p95: float
    p999: float
    fitted_at: float
    degenerate: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.p95 > self.p999:
            raise InvalidInputError("p95 must be <= p999")
        if self.p999 > WATCHDOG_CAP_S:
            raise InvalidInputError("p999 must be capped at 200 ms")


class DelayWindow:
    """Single-writer ring buffer of (timestamp, uplink delay) samples.

    Fits run on a snapshot copy so recording never blocks on fitting.
    """

    def __init__(self, capacity: int = 500):
        if capacity < 20:
            raise InvalidInputError("capacity must be >= 20")
        self._buf = deque(maxlen=capacity)
        self._last_ts = -math.inf

    def record(self, timestamp: float, delay: float):
        if timestamp < self._last_ts:
            raise InvalidInputError("timestamps must be nondecreasing")
        if delay < 0:
            raise InvalidInputError("delay must be >= 0")
        self._last_ts = timestamp
        self._buf.append((timestamp, delay))

    def __len__(self):
        return len(self._buf)

    def snapshot(self, n: int | None = None) -> np.ndarray:
        """Most recent n delays (all if n is None), oldest first."""
        items = list(self._buf)
        if n is not None:
            items = items[-n:]
        return np.array([d for _, d in items], dtype=np.float64)


def gev_pdf(t, p: GevParams):
    """GEV density; 0 outside the support."""
    t = np.asarray(t, dtype=np.float64)
    z = 1.0 + p.xi * (t - p.mu) / p.sigma
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        if abs(p.xi) < 1e-12:
            w = (t - p.mu) / p.sigma
            out = np.exp(-w - np.exp(-w)) / p.sigma
        else:
            out = np.where(
                z > 0,
                z ** (-1.0 / p.xi - 1.0) * np.exp(-(z ** (-1.0 / p.xi))) / p.sigma,
                0.0,
            )
    out = np.where(np.isfinite(out), out, 0.0)
    return float(out) if out.ndim == 0 else out


def gev_cdf(t, p: GevParams):
    t = np.asarray(t, dtype=np.float64)
    if abs(p.xi) < 1e-12:
        return np.exp(-np.exp(-(t - p.mu) / p.sigma))
    z = 1.0 + p.xi * (t - p.mu) / p.sigma
    with np.errstate(invalid="ignore", divide="ignore"):
        inner = np.where(z > 0, z, np.nan) ** (-1.0 / p.xi)
    cdf = np.exp(-inner)
    # below support (xi > 0): CDF 0; above support (xi < 0): CDF 1
    cdf = np.where(np.isnan(inner), 0.0 if p.xi > 0 else 1.0, cdf)
    out = np.asarray(cdf)
    return float(out) if out.ndim == 0 else out


def gev_quantile(prob: float, params: GevParams) -> float:
    """Inverse CDF: mu + (sigma/xi) * ((-ln p)^(-xi) - 1)."""
    if not (0.0 < prob < 1.0):
        raise InvalidInputError(f"probability must be in (0, 1), got {prob}")
    if abs(params.xi) < 1e-12:
        return params.mu - params.sigma * math.log(-math.log(prob))
    return params.mu + params.sigma / params.xi * ((-math.log(prob)) ** (-params.xi) - 1.0)


def _pwm_init(x: np.ndarray) -> GevParams:
    """Probability-weighted-moments starting point (Hosking's estimator)."""
    xs = np.sort(x)
    n = xs.size
    j = np.arange(1, n + 1, dtype=np.float64)
    b0 = xs.mean()
    b1 = np.sum((j - 1) / (n - 1) * xs) / n
    b2 = np.sum((j - 1) * (j - 2) / ((n - 1) * (n - 2)) * xs) / n
    c = (2 * b1 - b0) / (3 * b2 - b0) - math.log(2) / math.log(3)
    k = 7.8590 * c + 2.9554 * c * c  # Hosking's shape; xi = -k
    if abs(k) < 1e-9:
        k = 1e-9
    g = gamma_fn(1.0 + k)
    sigma = (2 * b1 - b0) * k / (g * (1.0 - 2.0 ** (-k)))
    mu = b0 + sigma * (g - 1.0) / k
    xi = float(np.clip(-k, XI_BOUNDS[0] + 1e-3, XI_BOUNDS[1] - 1e-3))
    if not (sigma > 0) or not np.isfinite(sigma) or not np.isfinite(mu):
        sigma = max(float(np.std(xs)), 1e-6)
        mu, xi = float(np.mean(xs)), 0.1
    return GevParams(xi=xi, mu=mu, sigma=float(sigma))


def _neg_log_likelihood(theta, x: np.ndarray) -> float:
    xi, mu, log_sigma = theta
    if not (XI_BOUNDS[0] < xi < XI_BOUNDS[1]):
        return 1e12
    sigma = math.exp(log_sigma)
    z = 1.0 + xi * (x - mu) / sigma
    if np.any(z <= 0):
        return 1e12
    if abs(xi) < 1e-9:
        w = (x - mu) / sigma
        return x.size * math.log(sigma) + float(np.sum(w + np.exp(-w)))
    logz = np.log(z)
    return x.size * math.log(sigma) + float(
        (1.0 + 1.0 / xi) * np.sum(logz) + np.sum(np.exp(-logz / xi))
    )


def fit_gev(samples) -> GevParams:
    """Maximum-likelihood GEV fit with PWM initialization (Nelder-Mead).

    Accepts a DelayWindow or an array of delays. Degenerate windows (all
    samples equal) fall back to a point-mass surrogate flagged ``degenerate``.
    """
    x = samples.snapshot() if isinstance(samples, DelayWindow) else np.asarray(samples, dtype=np.float64)
    if x.size < MIN_FIT_SAMPLES:
        raise InvalidInputError(f"need >= {MIN_FIT_SAMPLES} samples, got {x.size}")
    if np.ptp(x) < 1e-12:
        return GevParams(xi=0.1, mu=float(x[0]), sigma=1e-3, degenerate=True)

    init = _pwm_init(x)
    theta0 = np.array([init.xi, init.mu, math.log(init.sigma)])
    # PWM estimate can land outside the data's support; nudge until feasible
    if _neg_log_likelihood(theta0, x) >= 1e12:
        theta0 = np.array([0.1, float(np.mean(x)), math.log(max(float(np.std(x)), 1e-6))])
    res = minimize(_neg_log_likelihood, theta0, args=(x,), method="Nelder-Mead",
                   options={"xatol": 1e-8, "fatol": 1e-8, "maxiter": 2000})
    best = res.x if res.fun <= _neg_log_likelihood(theta0, x) else theta0
    return GevParams(xi=float(best[0]), mu=float(best[1]), sigma=float(math.exp(best[2])))


def refresh_percentiles(w: DelayWindow, now: float,
                        previous: PercentileEstimate | None = None) -> PercentileEstimate:
    """Refit on the most recent <= 50 samples; p99.9 capped at 200 ms.

    With too few samples the previous estimate is carried forward (or a
    conservative cap-level estimate if there is none).
    """
    x = w.snapshot(REFIT_WINDOW)
    if x.size < MIN_FIT_SAMPLES:
        if previous is not None:
            return previous
        return PercentileEstimate(p95=WATCHDOG_CAP_S, p999=WATCHDOG_CAP_S,
                                  fitted_at=now, degenerate=True)
    params = fit_gev(x)
    p95 = gev_quantile(0.95, params)
    p999 = gev_quantile(0.999, params)
    p999 = min(p999, WATCHDOG_CAP_S)
    p95 = min(p95, p999)
    return PercentileEstimate(p95=max(p95, 0.0), p999=max(p999, 0.0),
                              fitted_at=now, degenerate=params.degenerate)


def schedule_actuation(cmd_ts: float, est: PercentileEstimate) -> float:
    """Hold-and-apply: actuate at station timestamp + p95."""
    return cmd_ts + est.p95


def watchdog_check(last_cmd_ts: float, now: float,
                   est: PercentileEstimate | None) -> str:
    """'emergency_stop' iff the command gap strictly exceeds min(p999, 200 ms)."""
    threshold = WATCHDOG_CAP_S if est is None else min(est.p999, WATCHDOG_CAP_S)
    return "emergency_stop" if (now - last_cmd_ts) > threshold else "ok"


def sample_delays(params: GevParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw delays by inverse-transform sampling, floored at 0."""
    u = rng.uniform(1e-12, 1.0 - 1e-12, size=n)
    if abs(params.xi) < 1e-12:
        q = params.mu - params.sigma * np.log(-np.log(u))
    else:
        q = params.mu + params.sigma / params.xi * ((-np.log(u)) ** (-params.xi) - 1.0)
    return np.maximum(q, 0.0)


def load_delay_trace(path):
    """Read a delay trace CSV of ``timestamp_s,delay_s`` lines."""
    rows = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    return [(float(t), float(d)) for t, d in rows]


def save_delay_trace(path, rows):
    np.savetxt(path, np.asarray(rows, dtype=np.float64), delimiter=",", fmt="%.9f")
