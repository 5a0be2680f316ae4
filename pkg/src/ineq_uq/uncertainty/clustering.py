"""Grouping sparse strata into bootstrap clusters.

Strata are described by one ordinal attribute (income bracket rank) and two
nominal ones (special-forms flag, usefulness code).  Dissimilarity is
Gower's: the range-scaled rank gap and the two mismatch indicators,
averaged.  Clusters come from k-medoids (PAM, BUILD then SWAP) and the
number of clusters from the mean silhouette width.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from ..microdata import MicrodataSet


@dataclass(frozen=True)
class StratumProfile:
    stratum_id: int
    size: int
    bracket_rank: int
    special_forms: int
    usefulness: int


@dataclass
class ClusterAssignment:
    cluster_of: dict[int, int]
    n_clusters: int
    medoids: list[int]
    cost: float
    silhouette_by_j: dict[int, float] = field(default_factory=dict)
    cost_trace: list[float] = field(default_factory=list)

    def members(self, j):
        return sorted(s for s, c in self.cluster_of.items() if c == j)

    def to_json(self):
        return {
            "n_clusters": self.n_clusters,
            "medoids": self.medoids,
            "cost": self.cost,
            "cluster_of": {str(k): v for k, v in sorted(self.cluster_of.items())},
            "silhouette_by_j": {str(k): v for k, v in sorted(self.silhouette_by_j.items())},
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)

    @classmethod
    def from_json(cls, d):
        return cls(
            cluster_of={int(k): int(v) for k, v in d["cluster_of"].items()},
            n_clusters=int(d["n_clusters"]),
            medoids=[int(m) for m in d["medoids"]],
            cost=float(d["cost"]),
            silhouette_by_j={int(k): float(v) for k, v in d.get("silhouette_by_j", {}).items()},
        )


def gower_distance(a: StratumProfile, b: StratumProfile, rank_range: int) -> float:
    if rank_range < 2:
        raise ValidationError("rank range R must be at least 2")
    for p in (a, b):
        if not 1 <= p.bracket_rank <= rank_range:
            raise ValidationError(f"stratum {p.stratum_id}: rank {p.bracket_rank} outside 1..{rank_range}")
    ordinal = abs(a.bracket_rank - b.bracket_rank) / (rank_range - 1)
    return (ordinal + float(a.special_forms != b.special_forms) + float(a.usefulness != b.usefulness)) / 3.0


def gower_matrix(strata, rank_range=None):
    strata = list(strata)
    if rank_range is None:
        rank_range = max(2, max(p.bracket_rank for p in strata))
    rank = np.array([p.bracket_rank for p in strata], dtype=float)
    if rank_range < 2:
        raise ValidationError("rank range R must be at least 2")
    if np.any((rank < 1) | (rank > rank_range)):
        raise ValidationError(f"bracket rank outside 1..{rank_range}")
    flag = np.array([p.special_forms for p in strata])
    code = np.array([p.usefulness for p in strata])
    d = np.abs(rank[:, None] - rank[None, :]) / (rank_range - 1)
    d += flag[:, None] != flag[None, :]
    d += code[:, None] != code[None, :]
    return d / 3.0


def _total_cost(D, medoids):
    return float(D[:, medoids].min(axis=1).sum())


def pam(D, n_clusters, tol=1e-12):
    """k-medoids on a dissimilarity matrix; returns (medoids, labels, cost, trace).

    Indices are positions in ``D``; callers order positions by stratum id so
    that choosing the lowest position breaks ties by lowest id.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if not 1 <= n_clusters <= n:
        raise ValidationError(f"cannot form {n_clusters} clusters from {n} strata")

    # BUILD: greedy additions, each the point giving the lowest total cost.
    medoids = [int(np.argmin(D.sum(axis=0)))]
    nearest = D[:, medoids[0]].copy()
    while len(medoids) < n_clusters:
        gains = np.minimum(nearest[:, None], D).sum(axis=0)
        gains[medoids] = np.inf
        best = int(np.argmin(gains))
        medoids.append(best)
        nearest = np.minimum(nearest, D[:, best])

    cost = _total_cost(D, medoids)
    trace = [cost]
    # SWAP: apply the single best improving (medoid, non-medoid) exchange.
    while True:
        best_cost, best_swap = cost, None
        for mi in range(len(medoids)):
            others = medoids[:mi] + medoids[mi + 1:]
            base = D[:, others].min(axis=1) if others else np.full(n, np.inf)
            cand = np.minimum(base[:, None], D).sum(axis=0)
            cand[medoids] = np.inf
            o = int(np.argmin(cand))
            if cand[o] < best_cost - tol:
                best_cost, best_swap = float(cand[o]), (mi, o)
        if best_swap is None:
            break
        medoids[best_swap[0]] = best_swap[1]
        new_cost = _total_cost(D, medoids)
        if new_cost > trace[-1] + tol:
            raise AssertionError("PAM cost increased during SWAP")
        cost = new_cost
        trace.append(cost)

    medoids.sort()
    labels = np.argmin(D[:, medoids], axis=1)
    return medoids, labels, cost, trace


def pam_cluster(strata, n_clusters, seed=None, rank_range=None) -> ClusterAssignment:
    """Partition strata into ``n_clusters`` clusters around medoid strata.

    The result is deterministic: equal-cost candidates resolve to the lowest
    stratum id, so ``seed`` is accepted for interface symmetry with the other
    stochastic steps and has no effect.
    """
    strata = sorted(strata, key=lambda p: p.stratum_id)
    if n_clusters > len(strata):
        raise ValidationError(f"J*={n_clusters} exceeds the number of strata J={len(strata)}")
    if n_clusters < 1:
        raise ValidationError("need at least one cluster")
    D = gower_matrix(strata, rank_range)
    medoids, labels, cost, trace = pam(D, n_clusters)
    ids = [p.stratum_id for p in strata]
    return ClusterAssignment(
        cluster_of={ids[i]: int(labels[i]) + 1 for i in range(len(ids))},
        n_clusters=n_clusters,
        medoids=[ids[m] for m in medoids],
        cost=cost,
        cost_trace=trace,
    )


def silhouette_widths(D, labels):
    """Per-point silhouette (b - a) / max(a, b); singletons score 0."""
    D = np.asarray(D, dtype=float)
    labels = np.asarray(labels)
    clusters = np.unique(labels)
    n = len(labels)
    s = np.zeros(n)
    if len(clusters) < 2:
        return s
    for i in range(n):
        own = labels == labels[i]
        if own.sum() == 1:
            continue
        a = D[i, own].sum() / (own.sum() - 1)
        b = min(D[i, labels == c].mean() for c in clusters if c != labels[i])
        denom = max(a, b)
        s[i] = 0.0 if denom == 0 else (b - a) / denom
    return s


def select_cluster_count(strata, candidates=None, rank_range=None, seed=None) -> ClusterAssignment:
    """PAM over a range of cluster counts; keep the best mean silhouette.

    The default range is ``2..min(40, J-1)``; ties go to the smaller count.
    """
    strata = sorted(strata, key=lambda p: p.stratum_id)
    J = len(strata)
    if J < 3:
        raise ValidationError("silhouette selection needs at least 3 strata")
    if candidates is None:
        candidates = range(2, min(40, J - 1) + 1)
    candidates = sorted(set(int(c) for c in candidates))
    D = gower_matrix(strata, rank_range)
    if np.all(D == 0):
        warnings.warn("all strata are identical; silhouette undefined, using 2 clusters", stacklevel=2)
        out = pam_cluster(strata, 2, rank_range=rank_range)
        out.silhouette_by_j = {}
        return out

    scores = {}
    best = None
    for c in candidates:
        if not 2 <= c <= J:
            raise ValidationError(f"candidate cluster count {c} outside 2..{J}")
        medoids, labels, cost, trace = pam(D, c)
        scores[c] = float(silhouette_widths(D, labels).mean())
        if best is None or scores[c] > scores[best[0]] + 1e-12:
            best = (c, medoids, labels, cost, trace)
    c, medoids, labels, cost, trace = best
    ids = [p.stratum_id for p in strata]
    return ClusterAssignment(
        cluster_of={ids[i]: int(labels[i]) + 1 for i in range(J)},
        n_clusters=c,
        medoids=[ids[m] for m in medoids],
        cost=cost,
        silhouette_by_j=scores,
        cost_trace=trace,
    )


def stratum_profiles(data: MicrodataSet, rank="bracket", flag="special_forms", code="usefulness"):
    """Profiles of the strata present in ``data`` (first implicate).

    Attribute columns must be constant within a stratum.
    """
    if data.strata is None:
        raise ValidationError("dataset is not stratified")
    view = data.implicate_view(1) if data.M > 1 else data
    cols = [view.column(c) for c in (rank, flag, code)]
    out = []
    for s in np.unique(view.strata):
        mask = view.strata == s
        attrs = []
        for c in cols:
            vals = np.unique(c[mask])
            if len(vals) != 1:
                raise ValidationError(f"stratum {s}: attribute not constant within stratum")
            attrs.append(int(vals[0]))
        out.append(StratumProfile(int(s), int(mask.sum()), *attrs))
    return out
