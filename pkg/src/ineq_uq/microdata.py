"""Weighted, stratified, multiply-imputed microdata.

A ``MicrodataSet`` holds ``M`` implicates of the same ``n`` respondents.  Rows
are stored implicate by implicate; the r-th row of every implicate belongs to
the same respondent, which is what lets one set of bootstrap index lists be
applied to all implicates.

The module also ships the synthetic stand-in for restricted data: a
lognormal/Pareto population with strata, per-asset capital incomes generated
from known rates of return, and a Poisson stratified sampler.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import norm

from ._rng import stream
from .errors import ParseError, ValidationError

ASSET_CATEGORIES = (
    "taxable_interest",
    "nontaxable_interest",
    "dividends",
    "scorp",
    "partnership",
    "rental",
    "pension",
)

# True rates of return used by the generator; capitalization should recover them.
DEFAULT_ASSET_RATES = {
    "taxable_interest": 0.012,
    "nontaxable_interest": 0.025,
    "dividends": 0.03411,
    "scorp": 0.09,
    "partnership": 0.07,
    "rental": 0.045,
    "pension": 0.035,
}

STRATUM_ATTRIBUTES = ("bracket", "special_forms", "usefulness")


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


class MicrodataSet:
    """Immutable weighted microdata with ``M >= 1`` implicates.

    Parameters
    ----------
    ids, weights : array_like
        Respondent identifiers and sampling weights, one entry per row.
    values : mapping of str to array_like
        Value columns (income, wealth, per-asset incomes, ...).
    implicate : array_like of int, optional
        Implicate index 1..M per row. Rows are regrouped by implicate with
        the within-implicate order preserved.
    strata : array_like of int, optional
        Stratum label per row.
    """

    def __init__(self, ids, weights, values, implicate=None, strata=None, name=None, warnings_=()):
        ids = np.asarray(ids)
        weights = np.asarray(weights, dtype=float)
        nrow = len(ids)
        if weights.shape != (nrow,):
            raise ValidationError("weights and ids differ in length")
        bad = np.flatnonzero(~np.isfinite(weights) | (weights <= 0))
        if bad.size:
            r = int(bad[0])
            raise ValidationError(f"row {r + 1}: weight must be positive, got {weights[r]!r}")
        if implicate is None:
            implicate = np.ones(nrow, dtype=np.int64)
        implicate = np.asarray(implicate, dtype=np.int64)
        labels = np.unique(implicate)
        m_count = len(labels)
        if nrow == 0:
            raise ValidationError("empty dataset")
        if not np.array_equal(labels, np.arange(1, m_count + 1)):
            raise ValidationError(f"implicate indices must form 1..M, got {labels.tolist()}")
        order = np.argsort(implicate, kind="stable")
        sizes = np.bincount(implicate)[1:]
        if np.any(sizes != sizes[0]):
            raise ValidationError(f"implicates have unequal sizes {sizes.tolist()}")

        cols = {}
        for key, col in values.items():
            col = np.asarray(col, dtype=float)
            if col.shape != (nrow,):
                raise ValidationError(f"column {key!r} has wrong length")
            cols[key] = _frozen(col[order])

        self.ids = _frozen(ids[order])
        self.weights = _frozen(weights[order])
        self.implicate = _frozen(implicate[order])
        self.strata = None if strata is None else _frozen(np.asarray(strata, dtype=np.int64)[order])
        self.values = MappingProxyType(cols)
        self.M = m_count
        self.n = int(sizes[0])
        self.name = name
        self.warnings = tuple(warnings_)

        totals = [math.fsum(self.weights[i * self.n:(i + 1) * self.n]) for i in range(self.M)]
        self.N = totals[0]
        if not self.N > 0:
            raise ValidationError("population total must be positive")
        for t in totals[1:]:
            if abs(t - self.N) > 1e-9 * self.N:
                raise ValidationError(f"implicate weight totals differ: {totals}")

    def __repr__(self):
        return f"MicrodataSet(n={self.n}, M={self.M}, N={self.N:.6g}, columns={list(self.values)})"

    def __len__(self):
        return len(self.ids)

    @property
    def is_stratified(self):
        return self.strata is not None

    def implicate_view(self, m):
        """Single-implicate dataset for implicate ``m`` (1-based)."""
        if not 1 <= m <= self.M:
            raise IndexError(f"implicate {m} outside 1..{self.M}")
        sl = slice((m - 1) * self.n, m * self.n)
        return MicrodataSet(
            self.ids[sl],
            self.weights[sl],
            {k: v[sl] for k, v in self.values.items()},
            strata=None if self.strata is None else self.strata[sl],
            name=self.name,
        )

    def implicates(self):
        for m in range(1, self.M + 1):
            yield self.implicate_view(m)

    def column(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise ValidationError(f"unknown value column {name!r}; have {sorted(self.values)}") from None

    def take(self, rows):
        """Rows ``rows`` of a single-implicate dataset, as a new dataset."""
        if self.M != 1:
            raise ValidationError("take() needs a single-implicate view")
        rows = np.asarray(rows)
        return MicrodataSet(
            self.ids[rows],
            self.weights[rows],
            {k: v[rows] for k, v in self.values.items()},
            strata=None if self.strata is None else self.strata[rows],
            name=self.name,
        )

    def with_columns(self, **columns):
        """Copy with value columns added or replaced (arrays in stored row order)."""
        vals = dict(self.values)
        vals.update({k: np.asarray(v, dtype=float) for k, v in columns.items()})
        return MicrodataSet(
            self.ids, self.weights, vals, implicate=self.implicate, strata=self.strata,
            name=self.name, warnings_=self.warnings,
        )

    def to_csv(self, path):
        header = ["id", "implicate", "weight"]
        if self.strata is not None:
            header.append("stratum")
        names = list(self.values)
        header += names
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in range(len(self.ids)):
                row = [_fmt(self.ids[r]), int(self.implicate[r]), repr(float(self.weights[r]))]
                if self.strata is not None:
                    row.append(int(self.strata[r]))
                row += [repr(float(self.values[c][r])) for c in names]
                w.writerow(row)


def _fmt(v):
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    return v


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for ``load_microdata``.

    ``implicate`` and ``stratum`` are optional: when the named column is not
    in the header the dataset is treated as single-implicate / unstratified.
    ``values=None`` takes every remaining column as a numeric value column.
    """

    id: str = "id"
    weight: str = "weight"
    implicate: str | None = "implicate"
    stratum: str | None = "stratum"
    values: tuple[str, ...] | None = None


def load_microdata(path, schema=CsvSchema(), name=None):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: no such file")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        pos = {h: i for i, h in enumerate(header)}
        for required in (schema.id, schema.weight):
            if required not in pos:
                raise ValidationError(f"{path}: missing required column {required!r}")
        imp_col = schema.implicate if schema.implicate in pos else None
        str_col = schema.stratum if schema.stratum in pos else None
        reserved = {schema.id, schema.weight, imp_col, str_col}
        if schema.values is None:
            value_cols = [h for h in header if h not in reserved]
        else:
            value_cols = list(schema.values)
            missing = [c for c in value_cols if c not in pos]
            if missing:
                raise ValidationError(f"{path}: missing value columns {missing}")

        ids, weights, imps, strata = [], [], [], []
        vals = {c: [] for c in value_cols}
        for rownum, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: row {rownum} (line {rownum + 1}) has {len(row)} fields, expected {len(header)}",
                    row=rownum,
                )
            try:
                raw_id = row[pos[schema.id]].strip()
                ids.append(int(raw_id) if raw_id.lstrip("-").isdigit() else raw_id)
                wt = float(row[pos[schema.weight]])
                if imp_col:
                    imps.append(int(row[pos[imp_col]]))
                if str_col:
                    strata.append(int(row[pos[str_col]]))
                for c in value_cols:
                    vals[c].append(float(row[pos[c]]))
            except ValueError as exc:
                raise ParseError(f"{path}: row {rownum} (line {rownum + 1}): {exc}", row=rownum) from None
            if not (math.isfinite(wt) and wt > 0):
                raise ValidationError(f"{path}: row {rownum} (line {rownum + 1}): nonpositive weight {wt!r}")
            weights.append(wt)
    if not ids:
        raise ParseError(f"{path}: no data rows")
    return MicrodataSet(
        np.array(ids),
        weights,
        vals,
        implicate=imps if imp_col else None,
        strata=strata if str_col else None,
        name=name or path.stem,
    )


# --------------------------------------------------------------------------
# Synthetic population


@dataclass(frozen=True)
class StratumBracket:
    """One income bracket of the sampling design.

    Strata are the cross of the bracket with a binary special-forms flag and
    a usefulness code; all strata in a bracket share its sampling rate.
    """

    lower: float
    upper: float
    rate: float
    special_forms_prob: float = 0.2
    usefulness_probs: tuple[float, ...] = (0.6, 0.4)


def _default_strata():
    bounds = [0.0, 2.0e4, 4.0e4, 7.0e4, 1.2e5, 2.0e5, 4.0e5, 1.0e6, math.inf]
    rates = [0.017, 0.017, 0.019, 0.022, 0.030, 0.040, 0.050, 0.080]
    forms = [0.05, 0.08, 0.12, 0.20, 0.30, 0.45, 0.60, 0.75]
    use = [(0.7, 0.3), (0.7, 0.3), (0.6, 0.4), (0.6, 0.4), (0.5, 0.5), (0.4, 0.6), (0.3, 0.7), (0.2, 0.8)]
    return tuple(
        StratumBracket(bounds[i], bounds[i + 1], rates[i], forms[i], use[i]) for i in range(len(rates))
    )


@dataclass(frozen=True)
class SyntheticPopulationSpec:
    population_size: int = 1_000_000
    meanlog: float = 10.5
    sdlog: float = 0.8
    tail_exponent: float = 2.5
    tail_mix_weight: float = 0.03
    # Pareto scale sits at this quantile of the lognormal body.
    tail_scale_quantile: float = 0.999
    strata_design: tuple[StratumBracket, ...] = field(default_factory=_default_strata)
    asset_rates: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_ASSET_RATES))
    wealth_income_meanlog: float = math.log(3.0)
    wealth_income_sdlog: float = 0.6
    nonfin_fraction: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 1:
            raise ValidationError("population_size must be positive")
        if not self.tail_exponent > 1:
            raise ValidationError("tail_exponent must exceed 1 (finite mean)")
        if not 0 <= self.tail_mix_weight < 1:
            raise ValidationError("tail_mix_weight must lie in [0, 1)")
        if self.sdlog <= 0:
            raise ValidationError("sdlog must be positive")
        prev = None
        for b in self.strata_design:
            if not 0 < b.rate <= 1:
                raise ValidationError(f"sampling rate {b.rate} outside (0, 1]")
            if not b.lower < b.upper:
                raise ValidationError("bracket bounds must increase")
            if prev is not None and b.lower != prev:
                raise ValidationError("brackets must be contiguous")
            if abs(sum(b.usefulness_probs) - 1) > 1e-9:
                raise ValidationError("usefulness_probs must sum to 1")
            prev = b.upper
        for k, r in self.asset_rates.items():
            if not r > 0:
                raise ValidationError(f"asset rate for {k} must be positive")

    @property
    def n_codes(self):
        return len(self.strata_design[0].usefulness_probs)

    def stratum_id(self, bracket, flag, code):
        return ((np.asarray(bracket) - 1) * 2 + np.asarray(flag)) * self.n_codes + np.asarray(code) + 1

    def to_json(self):
        d = asdict(self)
        d["strata_design"] = [
            {**asdict(b), "upper": None if math.isinf(b.upper) else b.upper} for b in self.strata_design
        ]
        d["asset_rates"] = dict(self.asset_rates)
        return d

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        if "strata_design" in d:
            d["strata_design"] = tuple(
                StratumBracket(
                    lower=float(b["lower"]),
                    upper=math.inf if b.get("upper") is None else float(b["upper"]),
                    rate=float(b["rate"]),
                    special_forms_prob=float(b.get("special_forms_prob", 0.2)),
                    usefulness_probs=tuple(b.get("usefulness_probs", (0.6, 0.4))),
                )
                for b in d["strata_design"]
            )
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class Population:
    """Full enumeration produced by ``generate_population`` (unit weights)."""

    spec: SyntheticPopulationSpec
    columns: Mapping[str, np.ndarray]

    def __len__(self):
        return len(self.columns["id"])

    def __getitem__(self, key):
        return self.columns[key]

    def fa_totals(self):
        """True aggregate holdings per asset category."""
        return {
            a: math.fsum(self.columns[f"income_{a}"] / r) for a, r in self.spec.asset_rates.items()
        }

    def to_csv(self, path):
        names = list(self.columns)
        ints = {"id", "stratum", "bracket", "special_forms", "usefulness"}
        cols = [
            [str(int(v)) for v in self.columns[c]] if c in ints else [repr(float(v)) for v in self.columns[c]]
            for c in names
        ]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(names) + "\n")
            fh.writelines(",".join(row) + "\n" for row in zip(*cols))

    def as_microdata(self):
        vals = {k: v for k, v in self.columns.items() if k not in ("id", "stratum")}
        return MicrodataSet(self.columns["id"], np.ones(len(self)), vals, strata=self.columns["stratum"])


def generate_population(spec: SyntheticPopulationSpec) -> Population:
    """Draw a synthetic population; deterministic in ``spec.seed``.

    Income is a lognormal body mixed with a Pareto tail whose scale sits at
    the body's ``tail_scale_quantile``.  Financial wealth is income times a
    lognormal multiplier, split across asset categories by Dirichlet shares;
    each category's income is holdings times that category's true rate.
    """
    n = spec.population_size
    rng = stream(spec.seed, 0)
    body = rng.lognormal(spec.meanlog, spec.sdlog, n)
    in_tail = rng.random(n) < spec.tail_mix_weight
    scale = math.exp(spec.meanlog + spec.sdlog * norm.ppf(spec.tail_scale_quantile))
    tail = scale * (1.0 + rng.pareto(spec.tail_exponent, n))
    income = np.where(in_tail, tail, body)

    cats = list(spec.asset_rates)
    fin = income * rng.lognormal(spec.wealth_income_meanlog, spec.wealth_income_sdlog, n)
    shares = rng.dirichlet(np.ones(len(cats)), n)
    nonfin = spec.nonfin_fraction * income * rng.uniform(0.0, 2.0, n)
    cols = {"id": np.arange(1, n + 1, dtype=np.int64)}

    bounds = np.array([b.lower for b in spec.strata_design] + [spec.strata_design[-1].upper])
    bracket = np.clip(np.searchsorted(bounds, income, side="right"), 1, len(spec.strata_design))
    forms_p = np.array([b.special_forms_prob for b in spec.strata_design])[bracket - 1]
    flag = (rng.random(n) < forms_p).astype(np.int64)
    cum_use = np.cumsum([b.usefulness_probs for b in spec.strata_design], axis=1)[bracket - 1]
    code = (rng.random(n)[:, None] >= cum_use[:, :-1]).sum(axis=1).astype(np.int64)

    cols["stratum"] = spec.stratum_id(bracket, flag, code).astype(np.int64)
    cols["bracket"] = bracket.astype(np.int64)
    cols["special_forms"] = flag
    cols["usefulness"] = code
    cols["income"] = income
    holdings = fin[:, None] * shares
    cols["wealth"] = nonfin + holdings.sum(axis=1)
    cols["nonfin"] = nonfin
    for j, a in enumerate(cats):
        cols[f"income_{a}"] = holdings[:, j] * spec.asset_rates[a]
    return Population(spec, MappingProxyType(cols))


def load_population(path, spec=SyntheticPopulationSpec()):
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="utf-8")
    cols = {name: np.asarray(data[name]) for name in data.dtype.names}
    return Population(spec, MappingProxyType(cols))


def draw_stratified_sample(population: Population, design: Sequence[StratumBracket] | None = None, seed=0):
    """Poisson stratified sample: unit i kept with its bracket's rate, weight 1/rate."""
    design = population.spec.strata_design if design is None else tuple(design)
    for b in design:
        if not 0 < b.rate <= 1:
            raise ValidationError(f"sampling rate {b.rate} outside (0, 1]")
    bracket = np.asarray(population["bracket"])
    if bracket.max() > len(design):
        raise ValidationError("design has fewer brackets than the population")
    rates = np.array([b.rate for b in design])[bracket - 1]
    rng = stream(seed, 1)
    keep = rng.random(len(population)) < rates
    idx = np.flatnonzero(keep)

    notes = []
    strata = np.asarray(population["stratum"])
    present = set(np.unique(strata[idx]).tolist())
    for s in np.unique(strata).tolist():
        if s not in present:
            msg = f"stratum {s} is empty in the sample"
            notes.append(msg)
            warnings.warn(msg, stacklevel=2)
    vals = {k: np.asarray(v)[idx] for k, v in population.columns.items() if k not in ("id", "stratum")}
    return MicrodataSet(
        np.asarray(population["id"])[idx], 1.0 / rates[idx], vals, strata=strata[idx],
        name="sample", warnings_=notes,
    )


def oracle_top_share(values, k):
    """Exact top ``100(1-k)%`` value share of a unit-weight enumeration.

    Brute force: sort descending, take ``floor((1-k)N)`` whole units and the
    remaining fraction of the next one.
    """
    if not 0 < k < 1:
        raise ValidationError(f"k must lie in (0, 1), got {k}")
    vals = [float(v) for v in values]
    if not all(math.isfinite(v) for v in vals):
        raise ValidationError("values must be finite")
    vals.sort(reverse=True)
    n = len(vals)
    take = (1.0 - k) * n
    whole = min(int(math.floor(take)), n)
    parts = vals[:whole]
    if whole < n:
        parts.append((take - whole) * vals[whole])
    total = math.fsum(vals)
    if total == 0:
        raise ValidationError("total is zero; share undefined")
    return math.fsum(parts) / total


def hill_estimator(values, top_count):
    """Hill estimate of the Pareto exponent from the ``top_count`` largest values."""
    x = np.sort(np.asarray(values, dtype=float))[::-1]
    if not 1 <= top_count < len(x):
        raise ValidationError("top_count must be in [1, n)")
    logs = np.log(x[:top_count]) - math.log(x[top_count])
    return 1.0 / logs.mean()


def synthetic_implicates(data: MicrodataSet, variables: Iterable[str], missing_rate, M=5, seed=0):
    """Blank a random subset of ``variables`` and complete it ``M`` times.

    Completions are hot-deck draws from observed donors in the same stratum
    (the whole sample when a stratum has no donors).  Test scaffolding for
    the multiple-imputation path, not an imputation model.
    """
    if data.M != 1:
        raise ValidationError("expected a single-implicate dataset")
    variables = list(variables)
    rng = stream(seed, 2)
    missing = rng.random(data.n) < missing_rate
    donors = np.flatnonzero(~missing)
    if donors.size == 0:
        raise ValidationError("missing_rate leaves no donors")
    strata = data.strata if data.strata is not None else np.zeros(data.n, dtype=np.int64)
    blocks = []
    for m in range(1, M + 1):
        r = stream(seed, 3, m)
        cols = {k: np.array(v) for k, v in data.values.items()}
        for i in np.flatnonzero(missing):
            pool = donors[strata[donors] == strata[i]]
            if pool.size == 0:
                pool = donors
            d = pool[r.integers(pool.size)]
            for v in variables:
                cols[v][i] = cols[v][d]
        blocks.append(cols)
    vals = {k: np.concatenate([b[k] for b in blocks]) for k in data.values}
    return MicrodataSet(
        np.tile(data.ids, M),
        np.tile(data.weights, M),
        vals,
        implicate=np.repeat(np.arange(1, M + 1), data.n),
        strata=None if data.strata is None else np.tile(data.strata, M),
        name=data.name,
    )
