"""Linear trend and cross-dataset regressions.

Straight-line fits ``y = a + b x`` by weighted least squares with weights
``1 / se**2`` (or unit weights).  The regressor is centered before solving;
t-statistics use the usual residual-variance-scaled covariance
``s^2 (X'WX)^{-1}`` with ``s^2 = sum(w e^2) / (n - 2)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .uncertainty.variance import z_value


@dataclass(frozen=True)
class RegressionResult:
    intercept: float
    slope: float
    se_intercept: float
    se_slope: float
    t_intercept: float
    t_slope: float
    r2: float
    n: int
    weights: tuple
    cov: tuple  # 2x2 covariance of (intercept, slope), row-major

    @property
    def dof(self):
        return self.n - 2

    def predict(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=float)

    def prediction_se(self, x):
        x = np.asarray(x, dtype=float)
        c00, c01, _, c11 = self.cov
        return np.sqrt(np.maximum(c00 + 2 * x * c01 + x * x * c11, 0.0))

    def to_json(self):
        return {
            "intercept": self.intercept,
            "slope": self.slope,
            "t_intercept": self.t_intercept,
            "t_slope": self.t_slope,
            "se_intercept": self.se_intercept,
            "se_slope": self.se_slope,
            "r2": self.r2,
            "n": self.n,
            "weights": list(self.weights),
        }


def _fit(y, x, w):
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    n = len(y)
    if x.shape != (n,) or w.shape != (n,):
        raise ValidationError("x, y and weights must have equal length")
    if n < 3:
        raise ValidationError("need at least 3 points (one residual degree of freedom)")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
        raise ValidationError("non-finite data")
    sw = math.fsum(w)
    xbar = math.fsum(w * x) / sw
    ybar = math.fsum(w * y) / sw
    xc = x - xbar
    sxx = math.fsum(w * xc * xc)
    if not sxx > 1e-14 * max(1.0, math.fsum(w * x * x)):
        raise ValidationError("regressor is constant (collinear with the intercept)")
    sxy = math.fsum(w * xc * (y - ybar))
    slope = sxy / sxx
    intercept = ybar - slope * xbar

    resid = y - intercept - slope * x
    sse = math.fsum(w * resid * resid)
    sst = math.fsum(w * (y - ybar) ** 2)
    r2 = 1.0 if sst == 0 else min(max(1.0 - sse / sst, 0.0), 1.0)
    s2 = sse / (n - 2)
    var_slope = s2 / sxx
    var_icpt = s2 * (1.0 / sw + xbar * xbar / sxx)
    cov01 = -xbar * s2 / sxx
    se_i, se_s = math.sqrt(var_icpt), math.sqrt(var_slope)

    def t(coef, se):
        if se == 0:
            return 0.0 if coef == 0 else math.copysign(math.inf, coef)
        return coef / se

    return RegressionResult(
        intercept=intercept,
        slope=slope,
        se_intercept=se_i,
        se_slope=se_s,
        t_intercept=t(intercept, se_i),
        t_slope=t(slope, se_s),
        r2=r2,
        n=n,
        weights=tuple(float(v) for v in w),
        cov=(var_icpt, cov01, cov01, var_slope),
    )


def wls_fit(y, x, se):
    """Trend fit weighted by reciprocal squared standard errors."""
    se = np.asarray(se, dtype=float)
    if np.any(~np.isfinite(se)) or np.any(se <= 0):
        raise ValidationError("all standard errors must be positive; use ols_fit for unweighted data")
    return _fit(y, x, 1.0 / se**2)


def ols_fit(y, x):
    return _fit(y, x, np.ones(len(np.asarray(y))))


def trend_percent_change(fit: RegressionResult, x0, x1):
    y0 = float(fit.predict(x0))
    if y0 == 0:
        raise ValidationError("fitted value at x0 is zero")
    return 100.0 * (float(fit.predict(x1)) - y0) / y0


def write_fitted_csv(fit: RegressionResult, xs, path, level=0.95):
    """Pointwise fitted line with normal-approximation bands."""
    z = z_value(level)
    xs = np.asarray(xs, dtype=float)
    yhat = fit.predict(xs)
    se = fit.prediction_se(xs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "fitted", "lower95", "upper95"])
        for x, y, s in zip(xs, yhat, se):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(y - z * s)), repr(float(y + z * s))])
