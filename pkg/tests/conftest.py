import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def grid_cdf(grid: np.ndarray, log_density: np.ndarray) -> np.ndarray:
    """Normalized CDF of a density known up to a constant on a point grid."""
    w = np.exp(log_density - np.max(log_density))
    cdf = np.cumsum(w)
    return cdf / cdf[-1]


def ks_distance(sample: np.ndarray, grid: np.ndarray, cdf: np.ndarray) -> float:
    """Two-sided KS statistic of a sample against a gridded CDF."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    F = np.interp(x, grid, cdf, left=0.0, right=1.0)
    upper = np.max(np.arange(1, n + 1) / n - F)
    lower = np.max(F - np.arange(0, n) / n)
    return float(max(upper, lower))


def ks_distance_cdf(sample: np.ndarray, cdf_fn) -> float:
    """Two-sided KS statistic against a callable CDF."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    F = cdf_fn(x)
    upper = np.max(np.arange(1, n + 1) / n - F)
    lower = np.max(F - np.arange(0, n) / n)
    return float(max(upper, lower))
