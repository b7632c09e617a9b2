import warnings
import numpy as np
from dataclasses import dataclass
from prettytable import PrettyTable

from scipy.stats import norm
from scipy.optimize import brentq
from sklearn.linear_model import LogisticRegression
from sklearn.exceptions import ConvergenceWarning

from StAlloc.sim_utils import make_rng


def wilson_interval(k, n, level=0.95):
    """Wilson score interval for k successes out of n"""
    if n <= 0:
        return 0.0, 1.0
    z = norm.ppf(0.5 + level / 2.0)
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2.0 * n)) / denom
    half = z * np.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom

    # Rounding can push the bounds past p at k == 0 or k == n
    lo = 0.0 if k == 0 else min(p, max(0.0, center - half))
    hi = 1.0 if k == n else max(p, min(1.0, center + half))

    return lo, hi


def mc_sigma(p, n):
    """Monte Carlo standard error of a proportion"""
    return float(np.sqrt(p * (1.0 - p) / n)) if n > 0 else 0.0


def mc_covariance(x, y):
    """Sample covariance of paired outcomes and its Monte Carlo standard error"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    z = (x - x.mean()) * (y - y.mean())
    sigma = z.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0

    return float(z.mean()), float(sigma)


@dataclass(frozen=True)
class ThresholdFit:
    alpha_hat: float
    ci_lo: float
    ci_hi: float
    method: str
    n_boot: int


def _logistic_midpoint(alphas, outcome):
    # Per-replica binary outcomes; None when the fit fails or is not increasing
    n_rep = outcome.shape[0]
    x = np.tile(alphas, n_rep)
    y = outcome.ravel().astype(int)
    if y.min() == y.max():
        return None

    shift = alphas.mean()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always', ConvergenceWarning)
        model = LogisticRegression(C=1e6, max_iter=1000)
        model.fit((x - shift).reshape(-1, 1), y)
    if any(issubclass(w.category, ConvergenceWarning) for w in caught):
        return None

    slope = model.coef_[0, 0]
    if not slope > 0:
        return None
    mid = shift - model.intercept_[0] / slope
    span = alphas[-1] - alphas[0]
    if not alphas[0] - span <= mid <= alphas[-1] + span:
        return None

    return float(mid)


def _bisection_midpoint(alphas, outcome):
    # Where the piecewise-linear crossing curve passes 1/2
    p = outcome.mean(axis=0)
    f = lambda a: np.interp(a, alphas, p) - 0.5
    for a, b in zip(alphas[:-1], alphas[1:]):
        if f(a) == 0:
            return float(a)
        if f(a) < 0 < f(b):
            return float(brentq(f, a, b))
    if f(alphas[-1]) == 0:
        return float(alphas[-1])

    return np.nan


def fit_threshold(alphas, outcome, n_boot=200, seed=0):
    """Threshold where the crossing probability reaches 1/2.

    Args:
      alphas: increasing appetite values
      outcome: (replicas, len(alphas)) boolean crossing outcomes
      n_boot: bootstrap resamples of the replicas for the interval
      seed: seed of the bootstrap stream

    A logistic curve is fitted first; when it fails to converge (or is not increasing)
    the piecewise-linear curve is bisected instead. The method is recorded.
    """
    alphas = np.asarray(alphas, dtype=float)
    outcome = np.asarray(outcome, dtype=bool).reshape(-1, len(alphas))

    mid = _logistic_midpoint(alphas, outcome)
    method = 'logistic'
    estimator = _logistic_midpoint
    if mid is None:
        method = 'bisection'
        estimator = _bisection_midpoint
        mid = _bisection_midpoint(alphas, outcome) if len(alphas) > 1 else np.nan

    rng = make_rng(seed)
    boot = []
    n_rep = outcome.shape[0]
    for _ in range(n_boot):
        sample = outcome[rng.integers(0, n_rep, size=n_rep)]
        value = estimator(alphas, sample) if len(alphas) > 1 else None
        boot.append(np.nan if value is None else value)
    boot = np.asarray(boot, dtype=float)

    if np.all(np.isnan(boot)):
        lo, hi = np.nan, np.nan
    else:
        lo, hi = np.nanpercentile(boot, [2.5, 97.5])

    return ThresholdFit(float(mid), float(lo), float(hi), method, n_boot)


def print_table(columns, rows, float_format='.6g'):
    """Print rows as a PrettyTable and return the table"""
    table = PrettyTable(columns)
    table.float_format = float_format
    for row in rows:
        table.add_row(list(row))

    print(table)

    return table
