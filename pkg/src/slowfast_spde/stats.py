"""Small statistical helpers: autocorrelation times, CIs, decay-rate fits."""

import numpy as np


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Normalized autocorrelation of a scalar series (FFT-based)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    x = x - x.mean()
    var = np.dot(x, x)
    if var == 0.0:
        out = np.zeros(n)
        out[0] = 1.0
        return out
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acf = np.fft.irfft(f * np.conjugate(f), size)[:n]
    return acf / acf[0]


def integrated_autocorr_time(x: np.ndarray, c: float = 5.0) -> float:
    """Sokal self-consistent window estimate of the IACT (>= 1)."""
    rho = autocorrelation(x)
    tau = 1.0
    for window in range(1, rho.size):
        tau = 1.0 + 2.0 * np.sum(rho[1 : window + 1])
        if window >= c * tau:
            break
    return float(max(1.0, tau))


def effective_sample_size(samples: np.ndarray) -> float:
    """ESS of a (n_samples, n_modes) chain: n over the worst per-mode IACT."""
    samples = np.atleast_2d(samples)
    n = samples.shape[0]
    worst = max(integrated_autocorr_time(samples[:, k]) for k in range(samples.shape[1]))
    return float(n / worst)


def batch_standard_error(values: np.ndarray, n_batches: int = 20) -> float:
    """Standard error of the mean of a correlated series via batch means."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    n_batches = min(n_batches, n)
    usable = (n // n_batches) * n_batches
    means = values[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("Wilson interval needs at least one trial")
    p = successes / trials
    denom = 1.0 + z**2 / trials
    center = (p + z**2 / (2 * trials)) / denom
    half = (z / denom) * np.sqrt(p * (1 - p) / trials + z**2 / (4 * trials**2))
    return max(0.0, center - half), min(1.0, center + half)


def loglinear_decay_rate(times, values, window=(0.2, 0.8)):
    """Least-squares slope of log(values) over the middle fraction of times.

    Returns (rate, intercept) with values ~ exp(intercept - rate * t); the
    window skips the initial transient and the late round-off floor.
    """
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    lo = t[0] + window[0] * (t[-1] - t[0])
    hi = t[0] + window[1] * (t[-1] - t[0])
    keep = (t >= lo) & (t <= hi) & (v > 0)
    if np.count_nonzero(keep) < 3:
        raise ValueError("fewer than 3 usable points in the fit window")
    slope, intercept = np.polyfit(t[keep], np.log(v[keep]), 1)
    return float(-slope), float(intercept)


def slope_with_stderr(x, y):
    """OLS slope and its standard error."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xm = x - x.mean()
    sxx = np.dot(xm, xm)
    slope = np.dot(xm, y) / sxx
    resid = y - y.mean() - slope * xm
    dof = max(1, x.size - 2)
    se = np.sqrt(np.dot(resid, resid) / dof / sxx)
    return float(slope), float(se)
