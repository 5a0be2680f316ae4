"""End-to-end share uncertainty: implicates, bootstrap, Rubin's combination."""
from __future__ import annotations

import warnings

import numpy as np

from ..errors import ValidationError
from ..microdata import STRATUM_ATTRIBUTES, MicrodataSet
from ..topshare import ShareEstimate, ShareQuery, estimate_top_share, grand_estimate
from .clustering import select_cluster_count, stratum_profiles
from .replicates import make_replicates, replicate_top_shares, strata_as_clusters
from .variance import combined_error, confidence_interval, imputation_error, percentile_interval, sampling_error


def default_assignment(data: MicrodataSet, candidates=None):
    """Silhouette-selected PAM clusters when stratum profiles are available,
    otherwise one cluster per stratum."""
    if data.strata is None:
        raise ValidationError("bootstrap needs a stratum column")
    if all(c in data.values for c in STRATUM_ATTRIBUTES):
        profiles = stratum_profiles(data)
        if len(profiles) >= 3:
            return select_cluster_count(profiles, candidates)
    warnings.warn("no stratum profiles available; resampling within strata", stacklevel=2)
    return strata_as_clusters(data)


def bootstrap_share(
    data: MicrodataSet,
    query: ShareQuery,
    L=999,
    seed=0,
    assignment=None,
    level=0.95,
    threads=1,
    percentile=False,
    replicates=None,
) -> ShareEstimate:
    """Point estimate, sigma1, sigma2, Rubin total and interval for one share.

    Replicate ``l`` applies the same index list to every implicate; its
    estimate is the mean over implicates, and sigma1 is the standard
    deviation of those means.
    """
    if assignment is None and replicates is None:
        assignment = default_assignment(data)
    if replicates is None:
        replicates = make_replicates(data.implicate_view(1), assignment, L=L, seed=seed, threads=threads)
    per = []
    rep = np.zeros(replicates.L)
    for view in data.implicates():
        per.append(estimate_top_share(view, query))
        rep += replicate_top_shares(view, replicates, query.variable, query.k)
    rep /= data.M
    point = grand_estimate(per)
    s1 = sampling_error(rep)
    if data.M > 1:
        s2 = imputation_error(per, point)
    else:
        s2 = 0.0
    s = combined_error(s1, s2, data.M)
    ci = percentile_interval(rep, level) if percentile else confidence_interval(point, s, level)
    extra = {
        "L": replicates.L,
        "M": data.M,
        "level": level,
        "ci": list(ci),
        "ci_method": "percentile" if percentile else "normal",
        "seed": replicates.seed,
    }
    if assignment is not None:
        extra["n_clusters"] = assignment.n_clusters
    est = ShareEstimate(
        variable=query.variable,
        k=query.k,
        point=point,
        per_implicate=per,
        sigma1=s1,
        sigma2=s2,
        sigma=s,
        n=data.n,
        N=data.N,
        L=replicates.L,
        M=data.M,
        dataset=data.name,
        extra=extra,
    )
    est.replicate_estimates = rep
    return est
