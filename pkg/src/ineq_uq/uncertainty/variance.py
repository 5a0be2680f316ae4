"""Sampling, imputation and combined standard errors; intervals."""
from __future__ import annotations

import math
import warnings

import numpy as np

from ..errors import ValidationError

# Two-sided 95% normal quantile, norm.ppf(0.975).
Z95 = 1.959963984540054


def sampling_error(replicate_estimates):
    """Standard deviation (denominator ``L - 1``) of the replicate estimates."""
    x = np.asarray(replicate_estimates, dtype=float)
    if x.size < 2:
        raise ValidationError("sampling error needs at least two replicates")
    mean = math.fsum(x) / x.size
    return math.sqrt(math.fsum((x - mean) ** 2) / (x.size - 1))


def imputation_error(implicate_estimates, grand=None):
    """Between-implicate standard deviation around the grand estimate."""
    x = np.asarray(implicate_estimates, dtype=float)
    if x.size == 0:
        raise ValidationError("no implicate estimates")
    mean = math.fsum(x) / x.size
    if grand is None:
        grand = mean
    elif abs(grand - mean) > 1e-9 * max(1.0, abs(mean)):
        raise ValidationError(f"grand estimate {grand!r} is not the mean of the implicate estimates ({mean!r})")
    if x.size == 1:
        warnings.warn("single implicate: imputation error set to 0", stacklevel=2)
        return 0.0
    return math.sqrt(math.fsum((x - grand) ** 2) / (x.size - 1))


def combined_error(sigma1, sigma2, M):
    """Rubin's total: ``sqrt(sigma1**2 + sigma2**2 * (1 + 1/M))``."""
    if sigma1 < 0 or sigma2 < 0:
        raise ValidationError("standard errors must be non-negative")
    if M < 1:
        raise ValidationError("M must be at least 1")
    if sigma2 == 0:
        return float(sigma1)
    return math.sqrt(sigma1 * sigma1 + sigma2 * sigma2 * (1.0 + 1.0 / M))


def z_value(level):
    if not 0 < level < 1:
        raise ValidationError(f"confidence level must lie in (0, 1), got {level}")
    if level == 0.95:
        return Z95
    from scipy.stats import norm

    return float(norm.ppf(0.5 + level / 2.0))


def confidence_interval(point, sigma, level=0.95):
    """Normal-approximation interval ``point -/+ z * sigma``."""
    if sigma < 0:
        raise ValidationError("sigma must be non-negative")
    z = z_value(level)
    return (point - z * sigma, point + z * sigma)


def percentile_interval(replicate_estimates, level=0.95):
    """Percentile-bootstrap interval; a sensitivity check, not the default."""
    z_value(level)
    x = np.asarray(replicate_estimates, dtype=float)
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(x, [a, 1.0 - a])
    return (float(lo), float(hi))


def sampling_ratio(sigma1, sigma):
    """Share of the total standard error that is sampling error."""
    if sigma <= 0:
        raise ValidationError("total standard error must be positive")
    return sigma1 / sigma


def coefficient_of_variation(point, sigma):
    if point == 0:
        raise ValidationError("CV undefined at a zero point estimate")
    return sigma / abs(point)
