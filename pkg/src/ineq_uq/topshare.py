"""Weighted top-share estimation with interpolation at the fractile."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryError, UndefinedShareError, ValidationError
from .microdata import MicrodataSet

DEFAULT_FRACTILES = (0.9, 0.95, 0.99, 0.995, 0.999, 0.9999)


@dataclass(frozen=True)
class ShareQuery:
    variable: str
    k: float

    def __post_init__(self):
        if not 0 < self.k < 1:
            raise ValidationError(f"k must lie in (0, 1), got {self.k}")


@dataclass
class ShareEstimate:
    """Top-share point estimate with its error decomposition.

    ``point`` is the mean over implicates; ``sigma1`` (sampling) stays
    ``None`` until a bootstrap has been run.
    """

    variable: str
    k: float
    point: float
    per_implicate: list[float]
    sigma1: float | None = None
    sigma2: float = 0.0
    sigma: float | None = None
    n: int = 0
    N: float = 0.0
    L: int | None = None
    M: int = 1
    dataset: str | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self):
        out = {
            "variable": self.variable,
            "k": self.k,
            "point": self.point,
            "per_implicate": list(self.per_implicate),
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "sigma": self.sigma,
            "n": self.n,
            "N": self.N,
        }
        out.update(self.extra)
        return out


@dataclass(frozen=True)
class FractileBracket:
    """Internals of one estimate: the straddling index and both share bounds."""

    j_star: int
    omega: float
    lower: float
    upper: float
    estimate: float
    top_share: float


def sort_for_shares(values, weights, ids=None):
    """Ascending order by (value, id); ties resolve deterministically."""
    values = np.asarray(values, dtype=float)
    if ids is None:
        ids = np.arange(len(values))
    order = np.lexsort((np.asarray(ids), values))
    return order


def bottom_share_bracket(g, w, k) -> FractileBracket:
    """Bottom share ``r_k`` of sorted values ``g`` with weights ``w``.

    ``j_star`` is the number of leading observations whose cumulative weight
    does not exceed ``m_k = kN``; the estimate interpolates linearly inside
    observation ``j_star + 1``.
    """
    g = np.asarray(g, dtype=float)
    w = np.asarray(w, dtype=float)
    n = len(g)
    N = math.fsum(w)
    m_k = k * N
    wg = w * g
    total = math.fsum(wg)
    if total == 0:
        raise UndefinedShareError("total of weighted values is zero; share undefined")
    cw = np.cumsum(w)
    j_star = int(np.searchsorted(cw, m_k, side="right"))
    if j_star >= n:
        raise BoundaryError(f"k={k} leaves no observation above m_k={m_k!r} (N={N!r})")
    below = math.fsum(wg[:j_star])
    cw_below = math.fsum(w[:j_star])
    omega = (m_k - cw_below) / w[j_star]
    omega = min(max(omega, 0.0), 1.0)
    lower = below / total
    upper = (below + wg[j_star]) / total
    # Top share from the top side avoids cancellation in 1 - r_k.
    top = math.fsum(wg[j_star + 1:]) + (1.0 - omega) * wg[j_star]
    return FractileBracket(j_star, omega, lower, upper, 1.0 - top / total, top / total)


def estimate_top_share(data: MicrodataSet, query: ShareQuery) -> float:
    """Top ``100(1-k)%`` share of ``query.variable`` in one implicate.

    Negative values (net worth) are allowed; the share is then not confined
    to [0, 1] and is returned unclamped.
    """
    if data.M != 1:
        raise ValidationError("estimate_top_share needs a single-implicate view; use grand_estimate")
    g = data.column(query.variable)
    if not np.all(np.isfinite(g)):
        raise ValidationError(f"column {query.variable!r} has non-finite values")
    order = sort_for_shares(g, data.weights, data.ids)
    return bottom_share_bracket(g[order], data.weights[order], query.k).top_share


def top_share(values, weights, k, ids=None):
    """Array interface to the estimator."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0):
        raise ValidationError("weights must be positive")
    if not np.all(np.isfinite(values)):
        raise ValidationError("values must be finite")
    order = sort_for_shares(values, weights, ids)
    return bottom_share_bracket(values[order], weights[order], k).top_share


def grand_estimate(per_implicate):
    vals = [float(v) for v in per_implicate]
    if not vals:
        raise ValidationError("need at least one implicate estimate")
    return math.fsum(vals) / len(vals)


def estimate_shares(data: MicrodataSet, query: ShareQuery) -> ShareEstimate:
    """Per-implicate estimates and their grand mean (no bootstrap)."""
    per = [estimate_top_share(view, query) for view in data.implicates()]
    return ShareEstimate(
        variable=query.variable,
        k=query.k,
        point=grand_estimate(per),
        per_implicate=per,
        n=data.n,
        N=data.N,
        M=data.M,
        dataset=data.name,
    )


def batch_top_shares(g_sorted, w_sorted, counts, k):
    """Top shares for many reweightings of one presorted dataset.

    ``counts`` is an (L, n) array of non-negative multiplicities aligned with
    the sorted observations; replicate ``l`` carries weights
    ``w_sorted * counts[l]``.  Zero-weight entries drop out of the search for
    the straddling observation, so each row equals ``estimate_top_share`` on
    the materialized replicate.
    """
    g = np.asarray(g_sorted, dtype=float)
    w = np.asarray(w_sorted, dtype=float)
    W = np.asarray(counts, dtype=float) * w[None, :]
    n = W.shape[1]
    # Prefix sums are only needed near the fractile: collapse the block well
    # below the base sample's m_k into one column, and redo any replicate
    # whose straddling unit falls inside that block.
    cw0 = np.cumsum(w)
    s = int(np.searchsorted(cw0, 0.8 * k * cw0[-1], side="left"))
    if s < 2:
        return _batch_window(g, W, k, 0)
    out = _batch_window(g, W, k, s)
    redo = np.isnan(out)
    if redo.any():
        out[redo] = _batch_window(g, W[redo], k, 0)
    return out


def _batch_window(g, W, k, s):
    L, n = W.shape
    WG = W * g[None, :]
    N = W.sum(axis=1)
    total = WG.sum(axis=1)
    if np.any(total == 0):
        raise UndefinedShareError("replicate total is zero")
    m_k = k * N
    base_w = W[:, :s].sum(axis=1)
    base_wg = WG[:, :s].sum(axis=1)
    cw = np.cumsum(W[:, s:], axis=1) + base_w[:, None]
    cwg = np.cumsum(WG[:, s:], axis=1) + base_wg[:, None]
    jw = (cw <= m_k[:, None]).sum(axis=1)
    j = jw + s
    if np.any(j >= n):
        raise BoundaryError(f"k={k} leaves no observation above m_k in some replicate")
    rows = np.arange(L)
    prev = np.maximum(jw - 1, 0)
    below_w = np.where(jw > 0, cw[rows, prev], base_w)
    below_wg = np.where(jw > 0, cwg[rows, prev], base_wg)
    wj = W[rows, j]
    wgj = WG[rows, j]
    with np.errstate(divide="ignore", invalid="ignore"):
        omega = np.clip((m_k - below_w) / wj, 0.0, 1.0)
    out = (total - below_wg - wgj + (1.0 - omega) * wgj) / total
    # Straddling unit inside the collapsed block: caller redoes these rows.
    out[base_w > m_k] = np.nan
    return out
