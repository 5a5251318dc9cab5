"""Command-line interface: ``penscale {fit,cv,path,scree,simulate}``.

Every command writes long-format CSV tables plus a JSON manifest into
``--out-dir``. Each CSV starts with a ``# manifest_sha256=...`` comment
line; the hash covers the command, the input digest and all parameters,
so identical invocations produce byte-identical CSV files.

Exit codes: 0 success, 1 input error, 2 numerical error, 3 results
written but some fit hit the iteration cap.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import fnmatch
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import load_ordinal_csv
from .exceptions import DataValidationError, NumericalError, PenscaleError
from .scaling import AlsConfig, PenaltyConfig, als_fit
from .select import cross_validate, default_lambda_grid, scree_table, vaf_path
from .sim import SimDesign, replicate_study

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_NONCONVERGED = 0, 1, 2, 3

logger = logging.getLogger("penscale")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path, header, rows, manifest_hash):
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest_sha256={manifest_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class _Manifest:
    def __init__(self, command, params, input_path=None):
        self.core = {
            "command": command,
            "version": __version__,
            "input": str(input_path) if input_path else None,
            "input_sha256": _digest(input_path) if input_path else None,
            "parameters": params,
        }
        blob = json.dumps(self.core, sort_keys=True, default=_fmt).encode()
        self.hash = hashlib.sha256(blob).hexdigest()

    def write(self, path, **extra):
        doc = dict(self.core, manifest_sha256=self.hash,
                   created=_dt.datetime.now(_dt.timezone.utc).isoformat(), **extra)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, default=_fmt)
            fh.write("\n")


def parse_grid(spec):
    """Lambda grid from ``default``, ``log:lo:hi:num`` (base-10 exponents), a comma list or a file."""
    spec = spec.strip()
    if spec == "default":
        return default_lambda_grid()
    if spec.startswith("log:"):
        try:
            lo, hi, num = spec[4:].split(":")
            return np.logspace(float(lo), float(hi), int(num))
        except ValueError:
            raise DataValidationError(f"malformed grid {spec!r}; expected log:lo:hi:num") from None
    if os.path.isfile(spec):
        text = Path(spec).read_text().replace(",", "\n")
        items = [t for t in text.split() if t]
    else:
        items = [t for t in spec.split(",") if t.strip()]
    try:
        grid = np.array(sorted(float(t) for t in items))
    except ValueError:
        raise DataValidationError(f"malformed grid {spec!r}") from None
    if grid.size == 0:
        raise DataValidationError("empty lambda grid")
    return grid


def parse_monotone(spec, names):
    """Monotone mask from ``all``, ``none`` or comma-separated names, globs, ``a:b`` name ranges and 1-based ranges."""
    p = len(names)
    spec = (spec or "none").strip()
    if spec == "all":
        return [True] * p
    if spec == "none":
        return [False] * p
    mask = [False] * p
    for tok in (t.strip() for t in spec.split(",")):
        if not tok:
            continue
        if tok in names:
            mask[names.index(tok)] = True
            continue
        if any(ch in tok for ch in "*?["):
            hits = [i for i, nm in enumerate(names) if fnmatch.fnmatchcase(nm, tok)]
            if not hits:
                raise DataValidationError(f"monotone pattern {tok!r} matches no variable")
            for i in hits:
                mask[i] = True
            continue
        if ":" in tok:
            a, _, b = tok.partition(":")
            if a not in names or b not in names or names.index(a) > names.index(b):
                raise DataValidationError(f"invalid name range {tok!r} in monotone mask")
            for i in range(names.index(a), names.index(b) + 1):
                mask[i] = True
            continue
        try:
            lo, _, hi = tok.partition("-")
            lo, hi = int(lo), int(hi or lo)
        except ValueError:
            raise DataValidationError(f"unknown variable {tok!r} in monotone mask") from None
        if not 1 <= lo <= hi <= p:
            raise DataValidationError(f"monotone range {tok!r} outside 1..{p}")
        for i in range(lo - 1, hi):
            mask[i] = True
    return mask


def _int_list(spec):
    try:
        return [int(t) for t in spec.split(",") if t.strip()]
    except ValueError:
        raise DataValidationError(f"expected comma-separated integers, got {spec!r}") from None


def _float_list(spec):
    try:
        return [float(t) for t in spec.split(",") if t.strip()]
    except ValueError:
        raise DataValidationError(f"expected comma-separated numbers, got {spec!r}") from None


def _als_config(args, m=None):
    return AlsConfig(m=args.m if m is None else m, epsilon=args.epsilon, max_iter=args.max_iter,
                     seed=args.seed, normalization=args.normalization)


def _load(args):
    data = load_ordinal_csv(args.input, header=args.header)
    mask = parse_monotone(args.monotone, list(data.variable_names))
    return data, mask


def _outdir(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _common_params(args, mask):
    return {
        "m": args.m, "epsilon": args.epsilon, "max_iter": args.max_iter, "seed": args.seed,
        "monotone": args.monotone, "monotone_mask": mask, "normalization": args.normalization,
    }


def cmd_fit(args):
    data, mask = _load(args)
    params = dict(_common_params(args, mask), **{"lambda": args.lam})
    man = _Manifest("fit", params, args.input)
    fit = als_fit(data, PenaltyConfig.for_data(data, args.lam, mask), _als_config(args))
    out = _outdir(args)
    rows = []
    for j, q in enumerate(fit.quantifications):
        for l, score in enumerate(q.theta):
            rows.append((data.variable_names[j], l + 1 - int(data.offsets[j]), score))
    _write_csv(out / "quantifications.csv", ["variable", "level", "score"], rows, man.hash)
    ev = fit.eigenvalues
    cum = np.cumsum(ev) / data.p
    _write_csv(out / "eigenvalues.csv", ["component", "eigenvalue", "proportion", "cumulative"],
               [(r + 1, ev[r], ev[r] / data.p, cum[r]) for r in range(data.p)], man.hash)
    _write_csv(out / "scaled.csv", list(data.variable_names), fit.scaled.values.tolist(), man.hash)
    man.write(out / "manifest.json", converged=fit.converged, iterations=fit.iterations, vaf_m=fit.vaf_m,
              outputs=["quantifications.csv", "eigenvalues.csv", "scaled.csv"])
    print(f"VAF({args.m}) = {fit.vaf_m:.6f} after {fit.iterations} iterations"
          f"{'' if fit.converged else ' (not converged)'}")
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


def cmd_cv(args):
    if args.k_folds < 2:
        raise DataValidationError(f"--k-folds must be >= 2, got {args.k_folds}")
    data, mask = _load(args)
    grid = parse_grid(args.grid)
    params = dict(_common_params(args, mask), grid=grid.tolist(), k_folds=args.k_folds)
    man = _Manifest("cv", params, args.input)
    res = cross_validate(data, PenaltyConfig.for_data(data, 0.0, mask), _als_config(args), grid,
                         args.k_folds, args.seed, n_jobs=args.threads)
    out = _outdir(args)
    _write_csv(out / "cv_curve.csv", ["fold", "lambda", "vaf"], res.rows(), man.hash)
    summary = {"best_lambda": res.best_lambda, "m": args.m, "k_folds": args.k_folds, "seed": args.seed,
               "failed_cells": int(res.failed.sum()),
               "note": "validation folds are standardized within the fold; small folds inflate VAF"}
    man.write(out / "summary.json", **summary)
    print(f"best lambda = {res.best_lambda:g}")
    return EXIT_OK


def cmd_path(args):
    data, mask = _load(args)
    grid = parse_grid(args.grid)
    params = dict(_common_params(args, mask), grid=grid.tolist(), delta=args.delta)
    man = _Manifest("path", params, args.input)
    path = vaf_path(data, PenaltyConfig.for_data(data, 0.0, mask), _als_config(args), grid, args.delta)
    out = _outdir(args)
    _write_csv(out / "vaf_path.csv", ["lambda", "train_vaf", "converged"],
               zip(path.lambda_grid, path.train_vaf, path.converged.astype(int)), man.hash)
    man.write(out / "summary.json", lambda0=path.lambda0, delta=args.delta, monotone_path=path.is_monotone)
    print(f"lambda0 = {path.lambda0:g}")
    return EXIT_OK if path.converged.all() else EXIT_NONCONVERGED


def cmd_scree(args):
    data, mask = _load(args)
    m_list = _int_list(args.m_list)
    if not m_list:
        raise DataValidationError("--m-list is empty")
    grid = parse_grid(args.grid)
    if args.auto_cv:
        lambdas = None
    else:
        lams = _float_list(args.lam)
        if len(lams) == 1:
            lams = lams * len(m_list)
        if len(lams) != len(m_list):
            raise DataValidationError("--lambda needs one value or one per entry of --m-list")
        lambdas = dict(zip(m_list, lams))
    params = dict(_common_params(args, mask), m_list=m_list, lambdas=lambdas, auto_cv=args.auto_cv,
                  grid=grid.tolist(), k_folds=args.k_folds)
    man = _Manifest("scree", params, args.input)
    table = scree_table(data, m_list, lambdas, PenaltyConfig.for_data(data, 0.0, mask),
                        _als_config(args, m=min(m_list)), grid, args.k_folds, args.seed, args.threads)
    out = _outdir(args)
    _write_csv(out / "scree.csv", ["m", "lambda", "component", "eigenvalue"], table.rows(), man.hash)
    man.write(out / "manifest.json", lambdas={str(k): v for k, v in table.lambdas.items()},
              outputs=["scree.csv"])
    return EXIT_OK


def cmd_simulate(args):
    if args.reps < 2:
        raise DataValidationError(f"--reps must be >= 2, got {args.reps}")
    design = SimDesign(n=args.n, tau2=args.tau2, seed=args.seed)
    lambdas = _float_list(args.lambdas)
    if not lambdas:
        raise DataValidationError("--lambdas is empty")
    monotone = {"all": True, "none": False}.get(args.monotone)
    if monotone is None:
        raise DataValidationError("--monotone must be 'all' or 'none' for simulations")
    config = AlsConfig(m=args.m, epsilon=args.epsilon, max_iter=args.max_iter, normalization=args.normalization)
    params = {"design": design.to_dict(), "lambdas": lambdas, "reps": args.reps, "monotone": args.monotone,
              "m": args.m, "epsilon": args.epsilon, "max_iter": args.max_iter,
              "normalization": args.normalization}
    man = _Manifest("simulate", params)
    summaries = replicate_study(design, lambdas, config, args.reps, monotone, n_jobs=args.threads)
    out = _outdir(args)
    rows = []
    for s in summaries:
        for j in range(design.p):
            for l in range(s.mean_theta.shape[1]):
                rows.append((s.lam, j + 1, l + 1, s.mean_theta[j, l], s.sd_theta[j, l], s.replications))
    _write_csv(out / "sim_summary.csv",
               ["lambda", "variable", "level", "mean_theta", "sd_theta", "R_effective"], rows, man.hash)
    man.write(out / "manifest.json", failures={str(s.lam): s.failures for s in summaries},
              outputs=["sim_summary.csv"])
    return EXIT_OK


def _add_common(p, input_required=True):
    if input_required:
        p.add_argument("input", help="ordinal CSV file")
        hdr = p.add_mutually_exclusive_group()
        hdr.add_argument("--header", dest="header", action="store_true", default=None,
                         help="first row holds variable names")
        hdr.add_argument("--no-header", dest="header", action="store_false")
        p.add_argument("--monotone", default="none",
                       help="'all', 'none' or comma-separated names, globs (b*) and 1-based ranges (3-7)")
    p.add_argument("--epsilon", type=float, default=1e-7)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalization", choices=["auto", "rescale", "linearized"], default="auto")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--threads", type=int, default=int(os.environ.get("PENSCALE_THREADS", "1")))


def build_parser():
    parser = _Parser(prog="penscale", description="Penalized optimal scaling for ordinal data")
    parser.add_argument("--version", action="version", version=f"penscale {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit scores for one lambda")
    _add_common(p)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cv", help="K-fold cross-validated VAF over a lambda grid")
    _add_common(p)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--grid", default="default")
    p.add_argument("--k-folds", type=int, default=5)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("path", help="training VAF along a lambda grid and the delta rule")
    _add_common(p)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--grid", default="default")
    p.add_argument("--delta", type=float, default=1e-3)
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("scree", help="eigenvalue spectra for several m")
    _add_common(p)
    p.add_argument("--m-list", required=True)
    p.add_argument("--lambda", dest="lam", default="0.5", help="one value or one per m")
    p.add_argument("--auto-cv", action="store_true", help="select each lambda by cross-validation")
    p.add_argument("--grid", default="default")
    p.add_argument("--k-folds", type=int, default=5)
    p.set_defaults(func=cmd_scree, m=None)

    p = sub.add_parser("simulate", help="replicated simulation study")
    _add_common(p, input_required=False)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--tau2", type=float, default=0.2)
    p.add_argument("--lambdas", default="0,0.1,5,10")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--monotone", default="none", choices=["all", "none"])
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DataValidationError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"penscale: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"penscale: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except PenscaleError as exc:
        print(f"penscale: error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
