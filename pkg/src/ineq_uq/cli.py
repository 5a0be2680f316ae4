"""Command-line entry point: ``ineq-uq <subcommand> ...``.

Every run writes its JSON result and a manifest (argv, inputs with SHA-256
digests, seed, library versions, wall time) into the output directory,
which defaults to ``$INEQ_UQ_OUTDIR`` or the working directory.

Exit codes: 0 success, 1 invalid input, 2 numerical failure, 64 usage error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .capitalize import CapitalizationSpec, capitalize_dataset
from .errors import NumericalError, ValidationError
from .growthsim import load_calibration, mc_envelope
from .microdata import SyntheticPopulationSpec, draw_stratified_sample, generate_population, load_microdata, load_population
from .topshare import DEFAULT_FRACTILES, ShareQuery, estimate_shares
from .trend import ols_fit, trend_percent_change, wls_fit, write_fitted_csv
from .uncertainty import ClusterAssignment, bootstrap_share

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2
EXIT_USAGE = 64
OUTDIR_ENV = "INEQ_UQ_OUTDIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _existing(path):
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{path}: no such file")
    return p


class _Run:
    """Collects inputs and outputs of one invocation for the manifest."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.outdir = Path(args.outdir or os.environ.get(OUTDIR_ENV) or ".")
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.inputs = {}
        self.outputs = []
        self.t0 = time.perf_counter()

    def input(self, path):
        p = _existing(path)
        self.inputs[str(p)] = _sha256(p)
        return p

    def output(self, name):
        p = Path(name)
        if not p.is_absolute() and p.parent == Path("."):
            p = self.outdir / p
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(str(p))
        return p

    def finish(self, result):
        cmd = self.args.command
        res_path = self.output(f"{cmd}.json")
        res_path.write_text(json.dumps(result, indent=2) + "\n")
        manifest = {
            "command": cmd,
            "argv": self.argv,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "seed": getattr(self.args, "seed", None),
            "threads": getattr(self.args, "threads", None),
            "versions": {
                "ineq_uq": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "wall_time_s": time.perf_counter() - self.t0,
        }
        (self.outdir / f"{cmd}.manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        print(json.dumps(result, indent=2))


# -- subcommands -------------------------------------------------------------


def _cmd_synth(run: _Run):
    a = run.args
    spec = SyntheticPopulationSpec.load(run.input(a.spec)) if a.spec else SyntheticPopulationSpec()
    d = spec.to_json()
    d["seed"] = a.seed
    if a.size is not None:
        d["population_size"] = a.size
    spec = SyntheticPopulationSpec.from_json(d)
    pop = generate_population(spec)
    out = run.output(a.out)
    pop.to_csv(out)
    spec_out = run.output(str(Path(a.out).with_suffix(".spec.json")))
    spec_out.write_text(json.dumps(spec.to_json(), indent=2) + "\n")
    return {"population": str(out), "spec": str(spec_out), "size": len(pop), "fa_totals": pop.fa_totals()}


def _cmd_sample(run: _Run):
    a = run.args
    spec = SyntheticPopulationSpec.load(run.input(a.spec)) if a.spec else SyntheticPopulationSpec()
    pop = load_population(run.input(a.population), spec)
    sample = draw_stratified_sample(pop, seed=a.seed)
    out = run.output(a.out)
    sample.to_csv(out)
    return {"sample": str(out), "n": sample.n, "N": sample.N, "warnings": list(sample.warnings)}


def _load(run, path):
    return load_microdata(run.input(path))


def _cmd_shares(run: _Run):
    a = run.args
    data = _load(run, a.input)
    ks = a.k or list(DEFAULT_FRACTILES)
    res = [estimate_shares(data, ShareQuery(a.variable, k)).to_json() for k in ks]
    return {"dataset": data.name, "M": data.M, "shares": res}


def _cmd_bootstrap(run: _Run):
    a = run.args
    data = _load(run, a.input)
    assignment = None
    if a.clusters:
        with open(run.input(a.clusters)) as fh:
            assignment = ClusterAssignment.from_json(json.load(fh))
    ks = a.k or list(DEFAULT_FRACTILES)
    res = []
    for k in ks:
        est = bootstrap_share(
            data, ShareQuery(a.variable, k), L=a.L, seed=a.seed, assignment=assignment,
            level=a.level, threads=a.threads, percentile=a.percentile,
        )
        res.append(est.to_json())
    return {"dataset": data.name, "M": data.M, "shares": res}


def _cmd_capitalize(run: _Run):
    a = run.args
    data = _load(run, a.input)
    spec = CapitalizationSpec.load(run.input(a.config))
    out_data, sols = capitalize_dataset(data, spec, column=a.column)
    out = run.output(a.out)
    out_data.to_csv(out)
    return {"output": str(out), "column": a.column, "implicates": [s.to_json() for s in sols]}


def _read_columns(path, names):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    out = {}
    for n in names:
        if n not in rows[0]:
            raise ValidationError(f"{path}: missing column {n!r}")
        try:
            out[n] = np.array([float(r[n]) for r in rows])
        except ValueError as exc:
            raise ValidationError(f"{path}: column {n!r}: {exc}") from None
    return out


def _cmd_trend(run: _Run):
    a = run.args
    names = [a.x, a.y] + ([a.se] if a.se else [])
    cols = _read_columns(run.input(a.input), names)
    fit = wls_fit(cols[a.y], cols[a.x], cols[a.se]) if a.se else ols_fit(cols[a.y], cols[a.x])
    res = {"method": "wls" if a.se else "ols", **fit.to_json()}
    if a.change is not None:
        x0, x1 = a.change
        res["percent_change"] = {"x0": x0, "x1": x1, "value": trend_percent_change(fit, x0, x1)}
    if a.fitted:
        out = run.output(a.fitted)
        write_fitted_csv(fit, cols[a.x], out, level=a.level)
        res["fitted_csv"] = str(out)
    return res


def _cmd_simulate(run: _Run):
    a = run.args
    calib, experiment = load_calibration(run.input(a.calib))
    if a.B is not None:
        calib = type(calib)(**{**calib.__dict__, "B": a.B})
    sigmas = tuple(a.sigma_h) if a.sigma_h else None
    env = mc_envelope(calib, experiment, seed=a.seed, threads=a.threads, sigma_h_set=sigmas)
    out = run.output(a.out)
    env.to_csv(out)
    end = experiment.end_year
    return {
        "label": calib.label,
        "bands_csv": str(out),
        "eta_bounds": list(calib.bounds),
        "B": calib.B,
        "delta_mu": experiment.delta_mu,
        "excluded": {str(s): n for s, n in env.excluded.items()},
        f"at_{end}": {str(s): {**env.at(s, end), "width": env.width(s, end)} for s in env.bands},
    }


# -- parser ------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="ineq-uq", description="Uncertainty in top-share estimates and growth-model envelopes.")
    p.add_argument("--version", action="version", version=__version__)
    common = _Parser(add_help=False)
    common.add_argument("--outdir", help=f"output directory (default ${OUTDIR_ENV} or .)")
    common.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic population")
    s.add_argument("--spec", help="population spec JSON")
    s.add_argument("--size", type=int, help="override population_size")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", default="population.csv")
    s.set_defaults(func=_cmd_synth)

    s = sub.add_parser("sample", parents=[common], help="draw a stratified sample from a population CSV")
    s.add_argument("--population", required=True)
    s.add_argument("--spec", help="population spec JSON carrying the sampling design")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", default="sample.csv")
    s.set_defaults(func=_cmd_sample)

    s = sub.add_parser("shares", parents=[common], help="top-share point estimates")
    s.add_argument("--input", required=True)
    s.add_argument("--variable", default="income")
    s.add_argument("--k", type=float, action="append", help="fractile; repeatable (default: standard list)")
    s.set_defaults(func=_cmd_shares)

    s = sub.add_parser("bootstrap", parents=[common], help="shares with sampling, imputation and combined errors")
    s.add_argument("--input", required=True)
    s.add_argument("--variable", default="income")
    s.add_argument("--k", type=float, action="append")
    s.add_argument("--L", type=int, default=999)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--level", type=float, default=0.95)
    s.add_argument("--clusters", help="cluster assignment JSON (default: silhouette-selected PAM)")
    s.add_argument("--percentile", action="store_true", help="percentile interval instead of normal")
    s.set_defaults(func=_cmd_bootstrap)

    s = sub.add_parser("capitalize", parents=[common], help="wealth from capital income")
    s.add_argument("--input", required=True)
    s.add_argument("--config", required=True, help="capitalization spec JSON")
    s.add_argument("--column", default="wealth_cap")
    s.add_argument("--out", default="capitalized.csv")
    s.set_defaults(func=_cmd_capitalize)

    s = sub.add_parser("trend", parents=[common], help="WLS (with --se) or OLS straight-line fit")
    s.add_argument("--input", required=True)
    s.add_argument("--x", default="year")
    s.add_argument("--y", default="estimate")
    s.add_argument("--se", help="standard-error column; omit for OLS")
    s.add_argument("--change", type=float, nargs=2, metavar=("X0", "X1"))
    s.add_argument("--fitted", help="write fitted line CSV here")
    s.add_argument("--level", type=float, default=0.95)
    s.set_defaults(func=_cmd_trend)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo envelope of growth-model transitions")
    s.add_argument("--calib", required=True, help="calibration JSON")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--B", type=int)
    s.add_argument("--sigma-h", type=float, action="append", dest="sigma_h")
    s.add_argument("--out", default="envelope.csv")
    s.set_defaults(func=_cmd_simulate)
    return p


def run(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        if getattr(args, "threads", 1) < 1:
            raise ValidationError("--threads must be at least 1")
        r = _Run(args, argv)
        r.finish(args.func(r))
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main():
    sys.exit(run())
