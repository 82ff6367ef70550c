"""Command-line front end: estimate | prune | simulate | diagnose.

Every command writes its outputs plus a JSON run manifest (resolved options,
input digests, seed, version) so runs can be reproduced byte-for-byte.
"""

import argparse
import hashlib
import json
import sys
import time

import numpy as np
from scipy.stats import norm

from . import __version__
from .data import (load_summary_data, load_correlation_file, significance_filter,
                   write_summary_data)
from .exceptions import (DataFormatError, DataValidationError,
                         RankDeficientDesign, SingularWeightMatrix,
                         TooFewComponents)
from .ivw import (build_psi, build_sigma, component_variances, mv_ivw,
                  mv_ivw_pca, pca_decompose, select_num_components,
                  transform_dataset, PcaTransform)
from .linalg import condition_number
from .liml import LimlConfig, mv_liml, mv_liml_pca
from .pruning import prune
from .simulation import load_scenario, run_monte_carlo, DEFAULT_METHODS

EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_IDENTIFICATION = 4
EXIT_SINGULAR = 5

CONDITION_WARN = 100.0


class _CliError(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_path, command, options, input_paths, seed=None):
    manifest = {
        "tool": "cismvmr",
        "version": __version__,
        "command": command,
        "options": options,
        "inputs": {p: _digest(p) for p in input_paths},
        "seed": seed,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path = str(out_path) + ".manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _fmt(x, raw):
    if raw:
        return repr(float(x))
    return f"{float(x):.6g}"


def _load(args):
    try:
        return load_summary_data(args.assoc, args.corr)
    except DataFormatError as exc:
        raise _CliError(EXIT_PARSE, str(exc)) from None
    except DataValidationError as exc:
        raise _CliError(EXIT_VALIDATION, str(exc)) from None
    except OSError as exc:
        raise _CliError(EXIT_PARSE, str(exc)) from None


def _preprocess(d, args):
    """Applied-data workflow: optional pre-prune, then optional p-value filter,
    then optional final prune."""
    if getattr(args, "pre_prune", None) is not None:
        d = d.subset(prune(d, args.pre_prune).kept)
    if getattr(args, "p_filter", None) is not None:
        d = significance_filter(d, args.p_filter)
    if getattr(args, "prune", None) is not None:
        d = d.subset(prune(d, args.prune).kept)
    return d


def cmd_estimate(args):
    d = _preprocess(_load(args), args)
    phi = None
    if args.phi is not None:
        from .data import ExposureCorrelation
        try:
            phi = ExposureCorrelation(load_correlation_file(args.phi))
        except DataFormatError as exc:
            raise _CliError(EXIT_PARSE, str(exc)) from None
    try:
        if args.method == "mv-ivw":
            est = mv_ivw(d)
        elif args.method == "mv-ivw-pca":
            est = mv_ivw_pca(d, variance_fraction=args.variance_frac,
                             n_components=args.components)
        else:
            cfg = LimlConfig(phi=phi, variance_fraction=args.variance_frac,
                             n_components_override=args.components)
            fit = mv_liml(d, cfg) if args.method == "mv-liml" else mv_liml_pca(d, cfg)
            est = fit.estimate
    except TooFewComponents as exc:
        raise _CliError(EXIT_IDENTIFICATION, str(exc)) from None
    except RankDeficientDesign as exc:
        raise _CliError(EXIT_IDENTIFICATION, str(exc)) from None
    except SingularWeightMatrix as exc:
        raise _CliError(EXIT_SINGULAR, str(exc)) from None

    z = est.theta / est.se
    p = 2.0 * norm.sf(np.abs(z))
    lines = ["exposure,estimate,se,z,p,ci_low,ci_high"]
    for k, name in enumerate(d.exposure_ids):
        lines.append(",".join([
            name,
            _fmt(est.theta[k], args.raw), _fmt(est.se[k], args.raw),
            _fmt(z[k], args.raw), _fmt(p[k], args.raw),
            _fmt(est.theta[k] - 1.96 * est.se[k], args.raw),
            _fmt(est.theta[k] + 1.96 * est.se[k], args.raw),
        ]))
    lines.append("")
    lines.append(f"# method: {est.method_tag}")
    lines.append(f"# variants_or_components_used: {est.n_instruments_used}")
    lines.append(f"# condition_number: {_fmt(est.condition_number, args.raw)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        _write_manifest(args.out, "estimate", _options_dict(args),
                        [args.assoc, args.corr] + ([args.phi] if args.phi else []))
    else:
        sys.stdout.write(text)
    return 0


def cmd_prune(args):
    d = _load(args)
    result = prune(d, args.threshold)
    pruned = d.subset(result.kept)
    kept_ids = [d.variant_ids[j] for j in result.kept]
    if args.out:
        base = args.out
        with open(base + ".kept.txt", "w", encoding="utf-8") as fh:
            fh.write("\n".join(kept_ids) + "\n")
        write_summary_data(pruned, base + ".assoc.csv", base + ".corr.csv")
        _write_manifest(base, "prune", _options_dict(args), [args.assoc, args.corr])
    else:
        sys.stdout.write("\n".join(kept_ids) + "\n")
    return 0


def cmd_simulate(args):
    try:
        cfg = load_scenario(args.scenario)
    except (ValueError, OSError) as exc:
        raise _CliError(EXIT_PARSE, str(exc)) from None
    methods = args.methods.split(";") if args.methods else DEFAULT_METHODS
    table = run_monte_carlo(cfg, args.reps, methods=methods, n_jobs=args.jobs)
    table.write_csv(args.out)
    _write_manifest(args.out, "simulate", _options_dict(args), [args.scenario],
                    seed=cfg.seed)
    degenerate = [r for r in table.rows if r.degenerate]
    if degenerate:
        sys.stderr.write(
            f"warning: {len(degenerate)} table rows are degenerate "
            "(fewer than 2 successful replications; SD reported as 0/NaN)\n"
        )
    return 0


def cmd_diagnose(args):
    d = _preprocess(_load(args), args)
    sigma = build_sigma(d)
    psi = build_psi(d)
    t = pca_decompose(psi)
    k = select_num_components(component_variances(psi), args.variance_frac)
    _, _, sigma_t = transform_dataset(d, PcaTransform(t.loadings, t.eigenvalues, k))
    conds = {
        "sigma": condition_number(sigma),
        "psi": condition_number(psi),
        "sigma_transformed": condition_number(sigma_t),
    }
    lines = [f"variants: {d.n_variants}", f"components_retained: {k}"]
    for name, value in conds.items():
        lines.append(f"condition_number_{name}: {_fmt(value, args.raw)}")
    warn = [name for name, value in conds.items() if value > CONDITION_WARN]
    if warn:
        lines.append(f"warning: condition number over {CONDITION_WARN:g} for: " + ", ".join(warn))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        _write_manifest(args.out, "diagnose", _options_dict(args), [args.assoc, args.corr])
    else:
        sys.stdout.write(text)
    return 0


def _options_dict(args):
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cismvmr",
        description="Multivariable cis-Mendelian randomization with correlated variants",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data_args(p):
        p.add_argument("assoc", help="association CSV/TSV (variant, beta_<e>, se_<e>, ..., beta_y, se_y)")
        p.add_argument("corr", help="J x J variant correlation matrix CSV/TSV")

    pe = sub.add_parser("estimate", help="run one estimator on summary data")
    add_data_args(pe)
    pe.add_argument("--method", required=True,
                    choices=["mv-ivw", "mv-ivw-pca", "mv-liml", "mv-liml-pca"])
    pe.add_argument("--prune", type=float, default=None, metavar="T",
                    help="prune at |rho| < T before estimating")
    pe.add_argument("--pre-prune", type=float, default=None, metavar="T",
                    help="preliminary prune applied before --p-filter (applied workflow: 0.95)")
    pe.add_argument("--p-filter", type=float, default=None, metavar="P",
                    help="drop variants with min exposure p-value >= P")
    pe.add_argument("--variance-frac", type=float, default=0.99)
    pe.add_argument("--components", type=int, default=None,
                    help="fix the retained component count (PCA methods)")
    pe.add_argument("--phi", default=None, help="K x K exposure correlation matrix (LIML)")
    pe.add_argument("--raw", action="store_true", help="full precision output")
    pe.add_argument("--out", default=None)
    pe.set_defaults(func=cmd_estimate)

    pp = sub.add_parser("prune", help="greedy p-value-ranked LD pruning")
    add_data_args(pp)
    pp.add_argument("--threshold", type=float, required=True)
    pp.add_argument("--out", default=None, help="output basename (writes .kept.txt, .assoc.csv, .corr.csv)")
    pp.set_defaults(func=cmd_prune)

    ps = sub.add_parser("simulate", help="Monte Carlo evaluation of the estimators")
    ps.add_argument("scenario", help="scenario file (key = value)")
    ps.add_argument("--reps", type=int, required=True)
    ps.add_argument("--methods", default=None,
                    help="semicolon-separated, e.g. 'mv-ivw@oracle;mv-ivw-pca'")
    ps.add_argument("--jobs", type=int, default=1)
    ps.add_argument("--out", required=True)
    ps.set_defaults(func=cmd_simulate)

    pd = sub.add_parser("diagnose", help="ill-conditioning diagnostics")
    add_data_args(pd)
    pd.add_argument("--prune", type=float, default=None, metavar="T")
    pd.add_argument("--pre-prune", type=float, default=None, metavar="T")
    pd.add_argument("--p-filter", type=float, default=None, metavar="P")
    pd.add_argument("--variance-frac", type=float, default=0.99)
    pd.add_argument("--raw", action="store_true")
    pd.add_argument("--out", default=None)
    pd.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
