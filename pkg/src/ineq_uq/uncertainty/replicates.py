"""Cluster-stratified bootstrap replicates stored as index lists."""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .._rng import stream
from ..errors import ValidationError
from ..microdata import MicrodataSet
from ..topshare import batch_top_shares, sort_for_shares
from .clustering import ClusterAssignment

MIN_CLUSTER_OBS = 30


@dataclass(frozen=True)
class ReplicateSet:
    """``L`` replicates, each a length-``n`` array of row indices into the base sample."""

    indices: np.ndarray
    seed: int
    cluster_rows: tuple

    @property
    def L(self):
        return self.indices.shape[0]

    @property
    def n(self):
        return self.indices.shape[1]

    def counts(self, rows=None):
        """Multiplicity of every base row in replicates ``rows`` (default: all)."""
        idx = self.indices if rows is None else self.indices[rows]
        L, n = idx.shape
        flat = idx.astype(np.int64) + (np.arange(L, dtype=np.int64) * n)[:, None]
        return np.bincount(flat.ravel(), minlength=L * n).reshape(L, n)

    def save(self, path):
        """Compact binary cache (``.npz``)."""
        np.savez_compressed(
            path,
            indices=self.indices,
            seed=np.int64(self.seed),
            cluster_sizes=np.array([len(r) for r in self.cluster_rows]),
            cluster_members=np.concatenate(self.cluster_rows) if self.cluster_rows else np.array([], int),
        )

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            sizes = z["cluster_sizes"]
            members = z["cluster_members"]
            splits = np.split(members, np.cumsum(sizes)[:-1])
            return cls(z["indices"], int(z["seed"]), tuple(splits))

    def to_csv(self, path):
        np.savetxt(path, self.indices, fmt="%d", delimiter=",")


def cluster_rows(data: MicrodataSet, assignment: ClusterAssignment):
    """Row indices (within one implicate) belonging to each cluster 1..J*."""
    if data.strata is None:
        raise ValidationError("dataset is not stratified")
    strata = data.strata[: data.n]
    missing = sorted(set(np.unique(strata).tolist()) - set(assignment.cluster_of))
    if missing:
        raise ValidationError(f"strata {missing} are not covered by the cluster assignment")
    lut = {s: c for s, c in assignment.cluster_of.items()}
    cl = np.array([lut[int(s)] for s in strata])
    rows = []
    for j in range(1, assignment.n_clusters + 1):
        r = np.flatnonzero(cl == j)
        if r.size == 0:
            raise ValidationError(f"cluster {j} has no sampled observations")
        if r.size < MIN_CLUSTER_OBS:
            warnings.warn(f"cluster {j} has only {r.size} observations", stacklevel=3)
        rows.append(r)
    return tuple(rows)


def _one_replicate(seed, l, rows, n):
    rng = stream(seed, 17, l)
    out = np.empty(n, dtype=np.int32)
    pos = 0
    for r in rows:
        out[pos:pos + r.size] = r[rng.integers(0, r.size, r.size)]
        pos += r.size
    return out


def make_replicates(data: MicrodataSet, assignment: ClusterAssignment, L=999, seed=0, threads=1) -> ReplicateSet:
    """Draw ``n*_j`` rows with replacement from every cluster ``j``, ``L`` times.

    Replicate ``l`` uses its own stream keyed on ``(seed, l)``, so the result
    does not depend on ``threads``.
    """
    if L < 1:
        raise ValidationError("L must be positive")
    rows = cluster_rows(data, assignment)
    n = data.n
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            reps = list(ex.map(lambda l: _one_replicate(seed, l, rows, n), range(L)))
    else:
        reps = [_one_replicate(seed, l, rows, n) for l in range(L)]
    return ReplicateSet(np.vstack(reps), int(seed), rows)


def strata_as_clusters(data: MicrodataSet) -> ClusterAssignment:
    """Trivial assignment (each stratum its own cluster), for designs without profiles."""
    s = np.unique(data.strata)
    return ClusterAssignment({int(v): i + 1 for i, v in enumerate(s)}, len(s), [int(v) for v in s], 0.0)


def replicate_top_shares(data: MicrodataSet, replicates: ReplicateSet, variable, k, chunk=64):
    """Top-share estimate of every replicate for a single-implicate dataset.

    Replicates are evaluated as multiplicity reweightings of the presorted base
    sample, ``chunk`` at a time, so no replicate dataset is materialized.
    """
    if data.M != 1:
        raise ValidationError("need a single-implicate view")
    if replicates.n != data.n:
        raise ValidationError("replicate set was built for a different sample")
    g = data.column(variable)
    order = sort_for_shares(g, data.weights, data.ids)
    out = np.empty(replicates.L)
    for start in range(0, replicates.L, chunk):
        stop = min(start + chunk, replicates.L)
        counts = replicates.counts(slice(start, stop))[:, order]
        out[start:stop] = batch_top_shares(g[order], data.weights[order], counts, k)
    return out
