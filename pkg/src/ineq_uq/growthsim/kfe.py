"""Finite-volume solver for the two-type Kolmogorov forward equation.

Unknowns are cell densities ``f_H``, ``f_L`` on a uniform log-income grid.
Drift-diffusion fluxes use Scharfetter-Gummel (exponentially fitted)
weights, which keep the operator an M-matrix for any cell Peclet number.
The lower boundary reflects (zero flux); the upper boundary holds zero
density in a ghost cell, so only the negligible tail mass can leave.
Time stepping is backward Euler with one sparse LU per parameter set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import DivergentMeanError, GridDomainError, NumericalError, ValidationError
from .params import GrowthModelParams

MASS_TOL = 1e-6
TRUNCATION_TOL = 1e-8


@dataclass(frozen=True)
class Grid:
    x_min: float = -5.0
    x_max: float = 20.0
    points: int = 2001

    def __post_init__(self):
        if self.points < 3 or not self.x_max > self.x_min:
            raise ValidationError("grid needs at least 3 points on a non-empty interval")

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.points)

    @property
    def h(self):
        return (self.x_max - self.x_min) / (self.points - 1)

    def refined(self):
        return Grid(self.x_min, self.x_max, 2 * self.points - 1)


@dataclass
class DensityState:
    x: np.ndarray
    f_h: np.ndarray
    f_l: np.ndarray
    time: float = 0.0
    params: GrowthModelParams | None = field(default=None, repr=False)

    @property
    def h(self):
        return float(self.x[1] - self.x[0])

    @property
    def total(self):
        return self.f_h + self.f_l

    @property
    def mass(self):
        return self.h * math.fsum(self.total)

    def vector(self):
        return np.concatenate([self.f_h, self.f_l])


def _bernoulli(z):
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    big = np.abs(z) > 1e-8
    out[big] = z[big] / np.expm1(z[big])
    small = ~big
    out[small] = 1.0 - z[small] / 2.0
    return out


def drift_diffusion_operator(mu, sigma, n, h):
    """Matrix of ``f -> -(mu f)' + (sigma^2/2) f''`` in flux form."""
    d = sigma * sigma / 2.0
    pe = mu * h / d
    # Flux through the right face of cell i: a f_i - b f_{i+1}.
    a = d / h * float(_bernoulli(-pe))
    b = d / h * float(_bernoulli(pe))
    main = np.full(n, -a / h)
    main[1:] -= b / h
    upper = np.full(n - 1, b / h)
    lower = np.full(n - 1, a / h)
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csc")


def entry_density(params: GrowthModelParams, x):
    h = x[1] - x[0]
    psi = np.exp(-0.5 * ((x - params.entry_mean) / params.entry_sd) ** 2)
    return psi / (h * math.fsum(psi))


def generator(params: GrowthModelParams, x):
    """``(A, b)`` with ``d f / dt = A f + b`` for the stacked vector ``[f_H, f_L]``."""
    n = len(x)
    h = x[1] - x[0]
    eye = sp.identity(n, format="csc")
    high = drift_diffusion_operator(params.mu_h, params.sigma_h, n, h) - (params.alpha + params.delta) * eye
    low = drift_diffusion_operator(params.mu_l, params.sigma_l, n, h) - params.delta * eye
    A = sp.bmat([[high, None], [params.alpha * eye, low]], format="csc")
    psi = entry_density(params, x)
    b = np.concatenate([params.entry_high_prob * params.delta * psi, (1 - params.entry_high_prob) * params.delta * psi])
    return A, b


def _check_truncation(state: DensityState, params: GrowthModelParams):
    xi = params.tail_exponent
    x = state.x
    ref = x[-1] - 2.0
    if ref <= x[0]:
        return
    f_ref = float(np.interp(ref, x, state.total))
    lost = f_ref * math.exp(-xi * (x[-1] - ref)) / xi
    if lost > TRUNCATION_TOL:
        raise GridDomainError(
            f"grid upper bound {x[-1]} truncates about {lost:.2e} of the mass (tail exponent {xi:.4g}); widen the grid"
        )


def steady_state(params: GrowthModelParams, grid: Grid = Grid()) -> DensityState:
    """Stationary two-type density, renormalized to unit mass."""
    if params.delta <= 0:
        raise ValidationError("a steady state needs a positive retirement rate")
    x = grid.x
    A, b = generator(params, x)
    f = spla.spsolve(A, -b)
    f = np.maximum(f, 0.0)
    n = len(x)
    state = DensityState(x, f[:n], f[n:], 0.0, params)
    m = state.mass
    state.f_h = state.f_h / m
    state.f_l = state.f_l / m
    _check_truncation(state, params)
    return state


def tail_slope(state: DensityState, rel_range=(1e-12, 1e-5), boundary_margin=2.0):
    """Least-squares slope of ``log f`` on the upper tail, returned as a positive exponent."""
    f = state.total
    x = state.x
    peak = int(np.argmax(f))
    rel = f / f[peak]
    mask = (np.arange(len(x)) > peak) & (rel >= rel_range[0]) & (rel <= rel_range[1]) & (x <= x[-1] - boundary_margin)
    if mask.sum() < 10:
        # Heavy tail: density never falls that far; use the upper fifth below the boundary layer.
        mask = (np.arange(len(x)) > peak) & (x >= x[-1] - 0.2 * (x[-1] - x[0])) & (x <= x[-1] - boundary_margin)
        mask &= f > 0
    if mask.sum() < 3:
        raise NumericalError("too few tail points to estimate the tail slope")
    slope = np.polyfit(x[mask], np.log(f[mask]), 1)[0]
    return -float(slope)


def top_share_from_density(state: DensityState, q=0.01, check_tail=True):
    """Income share (income = exp(x)) of the top fraction ``q`` of the density.

    The threshold solves ``int_{x*} f = q`` with linear interpolation of the
    trapezoidal upper-tail mass inside the straddling cell; the same
    fraction of that cell's trapezoidal income is counted, so the mass above
    the threshold is exactly ``q``.  With ``check_tail`` the tail exponent (from the
    parameters of a steady state, else fitted) must exceed 1.  Transient
    states skip the check: their mean is finite at any finite time.
    """
    if not 0 < q < 1:
        raise ValidationError("q must lie in (0, 1)")
    if check_tail:
        xi = state.params.tail_exponent if state.params is not None else tail_slope(state)
        if xi <= 1:
            raise DivergentMeanError(f"tail exponent {xi:.4g} <= 1: mean income diverges")
    x = state.x
    f = np.maximum(state.total, 0.0)
    h = np.diff(x)
    cells = 0.5 * (f[1:] + f[:-1]) * h
    upper = np.concatenate([np.cumsum(cells[::-1])[::-1], [0.0]])
    mass = upper[0]
    if mass <= 0:
        raise NumericalError("density has no mass")
    upper = upper / mass
    i = int(np.flatnonzero(upper >= q)[-1])
    if i >= len(x) - 1:
        raise NumericalError("threshold falls at the grid boundary")
    t = (upper[i] - q) / (upper[i] - upper[i + 1])
    inc = np.exp(x) * f
    partial = (1.0 - t) * 0.5 * (inc[i] + inc[i + 1]) * h[i]
    top = partial + math.fsum(0.5 * (inc[i + 2:] + inc[i + 1:-1]) * h[i + 1:])
    total = math.fsum(0.5 * (inc[1:] + inc[:-1]) * h)
    return top / total


@dataclass
class Transition:
    years: np.ndarray
    shares: dict  # q -> array of shares at the checkpoints
    mass: np.ndarray
    final: DensityState


def simulate_transition(initial: DensityState, shocked: GrowthModelParams, horizon_years, dt=0.05,
                        q=(0.01,), start_year=0.0):
    """Advance ``initial`` under ``shocked`` parameters; shares at yearly checkpoints.

    Backward Euler: ``(I - dt A) f_{n+1} = f_n + dt b``.
    """
    if dt > 0.1 or dt <= 0:
        raise ValidationError("dt must lie in (0, 0.1] years")
    steps_per_year = int(round(1.0 / dt))
    if abs(steps_per_year * dt - 1.0) > 1e-9:
        raise ValidationError("dt must divide one year")
    years = int(round(horizon_years))
    if years < 0 or abs(years - horizon_years) > 1e-9:
        raise ValidationError("horizon must be a whole number of years")
    if abs(initial.mass - 1.0) > MASS_TOL:
        raise ValidationError(f"initial density has mass {initial.mass}, expected 1")
    qs = tuple(q) if np.ndim(q) else (q,)

    x = initial.x
    n = len(x)
    A, b = generator(shocked, x)
    lu = spla.splu((sp.identity(2 * n, format="csc") - dt * A).tocsc())
    rhs_const = dt * b
    f = initial.vector()

    state = DensityState(x, f[:n], f[n:], initial.time)
    out = {qq: [top_share_from_density(state, qq, check_tail=False)] for qq in qs}
    masses = [state.mass]
    h = initial.h
    for yr in range(1, years + 1):
        for _ in range(steps_per_year):
            f = lu.solve(f + rhs_const)
        state = DensityState(x, f[:n], f[n:], initial.time + yr)
        m = h * math.fsum(f)
        if abs(m - 1.0) > MASS_TOL:
            raise NumericalError(f"mass drifted to {m!r} after {yr} years")
        masses.append(m)
        for qq in qs:
            out[qq].append(top_share_from_density(state, qq, check_tail=False))
    return Transition(
        years=start_year + np.arange(years + 1, dtype=float),
        shares={qq: np.array(v) for qq, v in out.items()},
        mass=np.array(masses),
        final=state,
    )
