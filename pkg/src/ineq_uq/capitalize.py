"""Wealth from capital income flows by capitalization.

Each asset category's aggregate holdings ``FA_a`` (from balance-sheet
accounts) are matched to the category's aggregate reported income; the
implied rate of return turns every taxpayer's income into holdings, so
weighted holdings add up to ``FA_a`` by construction.  Under the
heterogeneous regime one category (taxable interest by default) carries an
exogenous higher rate for the top of the wealth distribution and a residual
rate for everyone else.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import InfeasibleRatesError, UndefinedRateError, ValidationError
from .microdata import MicrodataSet

MAX_MEMBERSHIP_ITERATIONS = 50


@dataclass(frozen=True)
class HeterogeneousRegime:
    category: str = "taxable_interest"
    top_fraction: float = 0.01
    top_rate: float = 0.02

    def __post_init__(self):
        if not 0 < self.top_fraction < 1:
            raise ValidationError("top_fraction must lie in (0, 1)")
        if not self.top_rate > 0:
            raise ValidationError("top_rate must be positive")


@dataclass(frozen=True)
class CapitalizationSpec:
    """Categories, their ``FA_a`` totals, and the rate regime.

    ``regime=None`` is the homogeneous model.  ``nonfin`` names a value column
    holding nonfinancial wealth, or is ``None`` for zero.
    """

    fa_totals: Mapping[str, float]
    regime: HeterogeneousRegime | None = None
    nonfin: str | None = "nonfin"
    income_prefix: str = "income_"

    @property
    def categories(self):
        return list(self.fa_totals)

    @classmethod
    def from_json(cls, d):
        reg = d.get("regime")
        if isinstance(reg, str):
            if reg.lower() != "homogeneous":
                raise ValidationError(f"unknown regime {reg!r}")
            reg = None
        elif reg is not None:
            reg = HeterogeneousRegime(**reg)
        return cls(
            fa_totals={k: float(v) for k, v in d["fa_totals"].items()},
            regime=reg,
            nonfin=d.get("nonfin", "nonfin"),
            income_prefix=d.get("income_prefix", "income_"),
        )

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class RateSolution:
    rates: dict[str, float]
    # category -> (top rate, rest rate) for heterogeneous categories
    split_rates: dict[str, tuple[float, float]] = field(default_factory=dict)
    top_members: np.ndarray | None = None
    iterations: int = 0
    converged: bool = True

    def to_json(self):
        return {
            "rates": self.rates,
            "split_rates": {k: list(v) for k, v in self.split_rates.items()},
            "iterations": self.iterations,
            "converged": self.converged,
            "top_count": None if self.top_members is None else int(self.top_members.sum()),
        }


def estimate_rate(incomes, fa_total, weights=None):
    """Aggregate income over aggregate holdings, so that income / rate adds up to ``fa_total``."""
    incomes = np.asarray(incomes, dtype=float)
    w = np.ones_like(incomes) if weights is None else np.asarray(weights, dtype=float)
    if not fa_total > 0:
        raise ValidationError("FA total must be positive")
    agg = math.fsum(w * incomes)
    if agg <= 0:
        raise UndefinedRateError(f"aggregate income {agg!r} is not positive; rate undefined for FA={fa_total!r}")
    return agg / fa_total


def solve_heterogeneous_rates(incomes, fa_total, top_members, top_rate, weights=None):
    """Residual rate for the non-top group given an exogenous top rate.

    Returns ``(top_rate, rest_rate)`` with
    ``FA = sum_top(income)/top_rate + sum_rest(income)/rest_rate``.
    """
    incomes = np.asarray(incomes, dtype=float)
    w = np.ones_like(incomes) if weights is None else np.asarray(weights, dtype=float)
    top = np.zeros(len(incomes), bool) if top_members is None else np.asarray(top_members, bool)
    if not top_rate > 0:
        raise ValidationError("top rate must be positive")
    if not top.any():
        return top_rate, estimate_rate(incomes, fa_total, w)
    top_holdings = math.fsum(w[top] * incomes[top]) / top_rate
    rest_income = math.fsum(w[~top] * incomes[~top])
    residual = fa_total - top_holdings
    if residual <= 0:
        raise InfeasibleRatesError(
            f"top-group holdings {top_holdings:.6g} at rate {top_rate} reach or exceed FA={fa_total:.6g}"
        )
    if rest_income <= 0:
        raise UndefinedRateError("non-top aggregate income is not positive")
    return top_rate, rest_income / residual


def capitalize_wealth(incomes: Mapping[str, np.ndarray], rates: RateSolution, nonfin=0.0, top_members=None):
    """``nonfin + sum_a income_a / r_a`` per taxpayer."""
    first = next(iter(incomes.values()))
    n = np.asarray(first).shape[0] if np.ndim(first) else 1
    wealth = np.zeros(n) + np.asarray(nonfin, dtype=float)
    top = top_members if top_members is not None else rates.top_members
    for a, inc in incomes.items():
        inc = np.asarray(inc, dtype=float)
        if a in rates.split_rates:
            r_top, r_rest = rates.split_rates[a]
            mask = np.zeros(n, bool) if top is None else np.asarray(top, bool)
            wealth = wealth + np.where(mask, inc / r_top, inc / r_rest)
        elif a in rates.rates:
            wealth = wealth + inc / rates.rates[a]
        elif np.any(inc != 0):
            raise ValidationError(f"no rate of return for held category {a!r}")
    return wealth


def holdings(incomes: Mapping[str, np.ndarray], rates: RateSolution):
    """Per-taxpayer holdings by category (same rule as ``capitalize_wealth``)."""
    out = {}
    for a, inc in incomes.items():
        inc = np.asarray(inc, dtype=float)
        if a in rates.split_rates:
            r_top, r_rest = rates.split_rates[a]
            out[a] = np.where(rates.top_members, inc / r_top, inc / r_rest)
        else:
            out[a] = inc / rates.rates[a]
    return out


def top_by_weight(values, weights, fraction, ids=None):
    """Units whose richer-than-them population weight is below ``fraction * N``.

    The unit straddling the cutoff is included; ties rank by id.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    ids = np.arange(len(values)) if ids is None else np.asarray(ids)
    order = np.lexsort((ids, -values))
    above = np.cumsum(weights[order]) - weights[order]
    cut = fraction * math.fsum(weights)
    mask = np.zeros(len(values), bool)
    mask[order[above < cut]] = True
    return mask


def homogeneous_rates(incomes, fa_totals, weights=None):
    rates = {}
    for a, fa in fa_totals.items():
        rates[a] = estimate_rate(incomes[a], fa, weights)
    return RateSolution(rates)


def classify_top_membership(incomes, fa_totals, regime: HeterogeneousRegime | None, weights=None,
                            nonfin=0.0, ids=None, max_iter=MAX_MEMBERSHIP_ITERATIONS):
    """Solve rates and top-group membership jointly by fixed-point iteration.

    Start from homogeneous-regime wealth, take its top ``regime.top_fraction``
    by weight, re-solve the split rate, recapitalize, and repeat until the
    membership no longer changes.  Stops after ``max_iter`` rounds with
    ``converged=False``.
    """
    sol = homogeneous_rates(incomes, fa_totals, weights)
    n = len(np.asarray(next(iter(incomes.values()))))
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    wealth = capitalize_wealth(incomes, sol, nonfin)
    if regime is None:
        sol.top_members = np.zeros(n, bool)
        sol.iterations = 1
        return sol
    if regime.category not in fa_totals:
        raise ValidationError(f"heterogeneous category {regime.category!r} has no FA total")

    members = top_by_weight(wealth, w, regime.top_fraction, ids)
    for it in range(1, max_iter + 1):
        split = solve_heterogeneous_rates(
            incomes[regime.category], fa_totals[regime.category], members, regime.top_rate, w
        )
        sol = RateSolution(
            rates={a: r for a, r in sol.rates.items() if a != regime.category},
            split_rates={regime.category: split},
            top_members=members,
            iterations=it,
        )
        wealth = capitalize_wealth(incomes, sol, nonfin)
        new = top_by_weight(wealth, w, regime.top_fraction, ids)
        if np.array_equal(new, members):
            sol.converged = True
            return sol
        members = new
    sol.converged = False
    return sol


def capitalize_dataset(data: MicrodataSet, spec: CapitalizationSpec, column="wealth_cap"):
    """Capitalize every implicate of ``data``; returns (data with ``column``, per-implicate solutions)."""
    out = []
    sols = []
    for view in data.implicates():
        incomes = {a: view.column(spec.income_prefix + a) for a in spec.categories}
        nonfin = view.column(spec.nonfin) if spec.nonfin else 0.0
        sol = classify_top_membership(incomes, spec.fa_totals, spec.regime, view.weights, nonfin, view.ids)
        out.append(capitalize_wealth(incomes, sol, nonfin))
        sols.append(sol)
    return data.with_columns(**{column: np.concatenate(out)}), sols
