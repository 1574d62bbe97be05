"""Estimators, bands, and bound formulas for the verification suite.

Keeps every statistical device in one place: two-sample comparisons
with a conservative band (the samples here are integer-valued, which
makes classical asymptotics optimistic), the explicit lower-tail and
path-counting bounds, the passage-slope estimator, and per-time
variance tables with seeded bootstrap intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as spstats

from .lattice import rng_for

__all__ = [
    "SampleSummary",
    "dkw_epsilon",
    "ks_two_sample",
    "poisson_tail_bounds",
    "path_union_bound",
    "growth_rate_estimate",
    "sample_summary",
    "variance_summary",
    "write_variance_csv",
]

BOOTSTRAP_RESAMPLES = 2000


def dkw_epsilon(alpha, n):
    """Half-width of the level-(1 - alpha) uniform band around one
    empirical CDF: sqrt(ln(2/alpha) / 2n)."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be positive")
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


def ks_two_sample(a, b):
    """Compare two samples: D, asymptotic p, and a conservative band.

    The returned dkw_epsilon(alpha) gives the sum of the two one-sample
    bands; under equality of laws, D exceeds it with probability at
    most 2 * alpha, with no appeal to continuity of the law.  The
    asymptotic p-value is advisory for integer-valued samples.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 50 or len(b) < 50:
        raise ValueError("need at least 50 samples on each side")
    res = spstats.ks_2samp(a, b, method="asymp")
    n_a, n_b = len(a), len(b)
    return {
        "D": float(res.statistic),
        "p_asymptotic": float(res.pvalue),
        "n_a": n_a,
        "n_b": n_b,
        "dkw_epsilon": lambda alpha: dkw_epsilon(alpha, n_a)
        + dkw_epsilon(alpha, n_b),
    }


def _chernoff_exponent(y):
    # G(y) = 1 - y + y log y, the rate for the Poisson lower tail
    return 1.0 - y + y * math.log(y)


def poisson_tail_bounds(t, x, d):
    """The two explicit constants used by the height lower bound.

    lower_tail_bound = exp(-t G(x/t)) dominates P(Poi(t) <= x); the
    companion constant c(d) = 1 - log(2d+1)/10d - log(10d)/10d - 1/10d
    is positive in every dimension, which is what makes the linear
    lower bound on the growth rate work.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if x <= 0 or x > t:
        raise ValueError("x must lie in (0, t]")
    if int(d) != d or d < 1:
        raise ValueError("dimension must be a positive integer")
    d = int(d)
    c = (1.0 - math.log(2 * d + 1) / (10.0 * d)
         - math.log(10.0 * d) / (10.0 * d) - 1.0 / (10.0 * d))
    return {
        "lower_tail_bound": math.exp(-t * _chernoff_exponent(x / t)),
        "path_event_bound_c": c,
    }


def path_union_bound(t, x, d):
    """Union curve sum_{k <= x} (2d+1)^k P(Poi(t) = k): each k-jump
    descent shape contributes one Poisson atom, and there are at most
    (2d+1)^k shapes."""
    if t <= 0:
        raise ValueError("t must be positive")
    if x <= 0 or x > t:
        raise ValueError("x must lie in (0, t]")
    if int(d) != d or d < 1:
        raise ValueError("dimension must be a positive integer")
    ks = np.arange(0, math.floor(x) + 1)
    return float(np.sum((2 * d + 1.0) ** ks * spstats.poisson.pmf(ks, t)))


def growth_rate_estimate(u_values, times):
    """Slope of passage time against level, over replications.

    `times` has one row per replication, one column per level in
    `u_values`; rows with any missing (NaN) level are dropped.  The
    slope is fit per replication and averaged (identical to fitting
    the mean curve), with the spread of per-replication slopes giving
    the standard error.
    """
    u = np.asarray(u_values, dtype=float)
    tm = np.asarray(times, dtype=float)
    if u.ndim != 1 or len(u) < 2 or len(np.unique(u)) != len(u):
        raise ValueError("u_values must hold at least two distinct levels")
    if tm.ndim != 2 or tm.shape[1] != len(u):
        raise ValueError("times must be (replications, levels)")
    complete = tm[~np.isnan(tm).any(axis=1)]
    if len(complete) < 100:
        raise ValueError("need at least 100 complete replications, got %d"
                         % len(complete))
    slopes = np.polyfit(u, complete.T, 1)[0]
    rho = float(np.mean(slopes))
    return {
        "rho_hat": rho,
        "rho_inv_hat": 1.0 / rho,
        "stderr": float(np.std(slopes, ddof=1) / math.sqrt(len(slopes))),
        "n_used": int(len(complete)),
    }


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    variance: float
    median: float
    level: float
    ci_lo: float
    ci_hi: float


def _bootstrap_ci(samples, statistic, level, rng,
                  resamples=BOOTSTRAP_RESAMPLES):
    n = len(samples)
    vals = np.empty(resamples)
    done = 0
    while done < resamples:
        chunk = min(250, resamples - done)
        idx = rng.integers(0, n, size=(chunk, n))
        vals[done:done + chunk] = statistic(samples[idx], axis=1)
        done += chunk
    lo, hi = np.percentile(vals, [50 * (1 - level), 50 * (1 + level)])
    return float(lo), float(hi)


def sample_summary(samples, level=0.95, seed=0):
    """Moments, median, and a seeded percentile bootstrap interval for
    the mean."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or len(samples) < 2:
        raise ValueError("need a flat sample of size at least 2")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    rng = rng_for(seed)
    lo, hi = _bootstrap_ci(samples, np.mean, level, rng)
    return SampleSummary(
        n=len(samples),
        mean=float(np.mean(samples)),
        variance=float(np.var(samples, ddof=1)),
        median=float(np.median(samples)),
        level=level,
        ci_lo=lo,
        ci_hi=hi,
    )


def _var_unbiased(arr, axis):
    return np.var(arr, axis=axis, ddof=1)


def variance_summary(samples_by_t, level=0.95, seed=0):
    """Per-time variance table with bootstrap intervals.

    `samples_by_t` maps time to a flat array of at least 10^3 height
    samples.  Rows come back sorted by time with the two normalized
    columns var/t and var/log t (the latter NaN when log t <= 0).
    """
    rows = []
    rng = rng_for(seed)
    for t in sorted(samples_by_t):
        samples = np.asarray(samples_by_t[t], dtype=float)
        if len(samples) < 1000:
            raise ValueError("need at least 1000 samples per time, got %d "
                             "at t=%s" % (len(samples), t))
        var = float(np.var(samples, ddof=1))
        lo, hi = _bootstrap_ci(samples, _var_unbiased, level, rng)
        logt = math.log(t) if t > 0 else 0.0
        rows.append({
            "t": float(t),
            "n": len(samples),
            "var": var,
            "ci_lo": lo,
            "ci_hi": hi,
            "var_over_t": var / t,
            "var_over_log_t": var / logt if logt > 0 else float("nan"),
        })
    return rows


def write_variance_csv(rows, path):
    """Columns: t,n,var,ci_lo,ci_hi,var_over_t,var_over_log_t."""
    cols = ("t", "n", "var", "ci_lo", "ci_hi", "var_over_t",
            "var_over_log_t")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(
                str(row[c]) if c == "n" else repr(float(row[c]))
                for c in cols) + "\n")
