"""Two-type random growth model: parameters and the tail-exponent mapping.

Log income drifts at ``mu_H`` with volatility ``sigma_H`` for high types and
``mu_L``/``sigma_L`` for low types; high types become low at rate ``alpha``,
everyone retires at rate ``delta`` and entrants draw log income from a
Gaussian ``psi``.  The stationary density of high types decays like
``exp(-xi x)`` where ``xi`` is the positive root of

    (sigma_H**2 / 2) xi**2 + mu_H xi - exit_rate = 0.

Substituting the exponential tail into the stationary forward equation gives
``exit_rate = delta + alpha`` (``KFE_CONSISTENT``).  ``PAPER_LITERAL`` keeps
the ``delta - alpha`` form, under which the default parameters cannot reach
an inverse exponent of 0.39; it is kept only to demonstrate that.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from ..errors import CalibrationInfeasibleError, NoParetoSteadyStateError, ValidationError

KFE_CONSISTENT = "kfe"
PAPER_LITERAL = "literal"

ALPHA = 1.0 / 6.0
DELTA = 1.0 / 30.0
SIGMA_H = 0.15


def exit_rate(alpha, delta, convention=KFE_CONSISTENT):
    if convention == KFE_CONSISTENT:
        return delta + alpha
    if convention == PAPER_LITERAL:
        return delta - alpha
    raise ValidationError(f"unknown convention {convention!r}")


def _feasible_range(sigma_h, ex):
    if ex >= 0:
        return "any mu_H"
    return f"mu_H <= {-sigma_h * math.sqrt(-2 * ex):.6g}"


def xi_from_muH(mu_h, sigma_h=SIGMA_H, alpha=ALPHA, delta=DELTA, convention=KFE_CONSISTENT):
    """Tail exponent of the stationary income distribution."""
    if sigma_h <= 0:
        raise ValidationError("sigma_H must be positive")
    ex = exit_rate(alpha, delta, convention)
    s2 = sigma_h * sigma_h
    disc = mu_h * mu_h + 2.0 * s2 * ex
    if disc < 0:
        raise NoParetoSteadyStateError(
            f"negative discriminant at mu_H={mu_h}: no Pareto steady state; feasible: {_feasible_range(sigma_h, ex)}"
        )
    xi = (-mu_h + math.sqrt(disc)) / s2
    if xi <= 0:
        raise NoParetoSteadyStateError(
            f"non-positive exponent {xi:.6g} at mu_H={mu_h}; feasible: {_feasible_range(sigma_h, ex)}"
        )
    return xi


def muH_from_eta(eta, sigma_h=SIGMA_H, alpha=ALPHA, delta=DELTA, convention=KFE_CONSISTENT):
    """High-type drift that produces inverse tail exponent ``eta``."""
    if not eta > 0:
        raise ValidationError("eta must be positive")
    xi = 1.0 / eta
    ex = exit_rate(alpha, delta, convention)
    mu = ex / xi - xi * sigma_h * sigma_h / 2.0
    try:
        back = xi_from_muH(mu, sigma_h, alpha, delta, convention)
    except NoParetoSteadyStateError as exc:
        raise CalibrationInfeasibleError(f"eta={eta}: {exc}") from None
    if abs(back - xi) > 1e-10 * max(1.0, xi):
        raise CalibrationInfeasibleError(
            f"eta={eta} (xi={xi:.6g}) is not reachable under the {convention!r} convention; "
            f"the exponent formula returns {back:.6g} at mu_H={mu:.6g}"
        )
    return mu


def eta_from_shares(p_small, p_large):
    """Inverse tail exponent from two nested top shares.

    ``p_small`` is the share of the top ``q/10`` and ``p_large`` that of the
    top ``q`` (e.g. top 0.1% and top 1%).  For an exact Pareto tail with
    exponent ``xi`` the result is ``1/xi``.
    """
    if not (p_small > 0 and p_large > 0):
        raise ValidationError("shares must be positive")
    if p_small > p_large or p_large > 1:
        raise ValidationError("expected 0 < p_small <= p_large <= 1")
    return 1.0 + math.log10(p_small / p_large)


@dataclass(frozen=True)
class GrowthModelParams:
    """Parameters of the two-type model.

    ``mu_l``, ``sigma_l``, ``entry_high_prob`` and the entry distribution are
    not pinned down by the calibration targets; the defaults keep low types'
    own tail thinner than the high types' so the high types govern the Pareto
    exponent.
    """

    mu_h: float
    sigma_h: float = SIGMA_H
    mu_l: float = 0.0
    sigma_l: float = 0.05
    alpha: float = ALPHA
    delta: float = DELTA
    entry_high_prob: float = 0.1
    entry_mean: float = 0.0
    entry_sd: float = 0.5

    def __post_init__(self):
        if self.sigma_h <= 0 or self.sigma_l <= 0:
            raise ValidationError("volatilities must be positive")
        if self.alpha < 0 or self.delta < 0:
            raise ValidationError("rates must be non-negative")
        if not 0 <= self.entry_high_prob <= 1:
            raise ValidationError("entry_high_prob must lie in [0, 1]")
        if self.entry_sd <= 0:
            raise ValidationError("entry_sd must be positive")

    @classmethod
    def from_eta(cls, eta, sigma_h=SIGMA_H, convention=KFE_CONSISTENT, **kw):
        alpha = kw.get("alpha", ALPHA)
        delta = kw.get("delta", DELTA)
        return cls(mu_h=muH_from_eta(eta, sigma_h, alpha, delta, convention), sigma_h=sigma_h, **kw)

    def shifted(self, delta_mu):
        return replace(self, mu_h=self.mu_h + delta_mu)

    @property
    def xi_high(self):
        return xi_from_muH(self.mu_h, self.sigma_h, self.alpha, self.delta)

    @property
    def xi_low(self):
        # Low types only retire: exit rate delta.
        return xi_from_muH(self.mu_l, self.sigma_l, 0.0, self.delta)

    @property
    def tail_exponent(self):
        """Exponent of the aggregate density's upper tail."""
        has_high = self.entry_high_prob > 0
        xs = [self.xi_low]
        if has_high:
            xs.append(self.xi_high)
        return min(xs)
