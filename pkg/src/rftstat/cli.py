"""Command-line interface: ``rftstat <subcommand> ...``.

Every subcommand accepts ``--seed``, ``--threads`` and ``--out``; output goes
to ``--out`` when given and to stdout otherwise.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import rftv
from .ecdensity import StatDescriptor, StatKind, ec_density
from .geometry import SearchRegion, ball_region, box_region
from .inference import PValueQuery, expected_ec, expected_ec_terms, threshold
from .lattice_ec import ScalarLattice, ec_curve
from .pipeline import (Dataset, Design, analyze, fit_model, estimate_region, statistic_map)
from .simulate import FieldSpec, monte_carlo_ec, parse_thresholds


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output file (default stdout)")


def _stat_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", "--stat", dest="kind", required=True,
                   choices=[k.value for k in StatKind])
    p.add_argument("--d", type=int)
    p.add_argument("--eta", "--c", dest="eta", type=int)
    p.add_argument("--nu", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--factor-dims", type=_ints, help="multilinear sphere dimensions")
    p.add_argument("--w1", type=float)
    p.add_argument("--w2", type=float)
    p.add_argument("--kappa", type=float)


def _stat(a) -> StatDescriptor:
    return StatDescriptor(kind=a.kind, d=a.d, eta=a.eta, nu=a.nu, n=a.n, dims=a.factor_dims,
                          w1=a.w1, w2=a.w2, kappa=a.kappa)


def _region_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--region", choices=["ball", "box", "lkc", "json"], default="ball")
    for k in (1, 2, 3):
        p.add_argument(f"--lkc{k}", type=float, help=f"top LKC of a {k}-D ball")
    p.add_argument("--sides", type=_floats, help="box side lengths")
    p.add_argument("--lkc", type=_floats, help="explicit L_0,...,L_N")
    p.add_argument("--region-file", help="SearchRegion JSON")
    p.add_argument("--search-both", action="store_true",
                   help="max canonical correlation: search the same region on both sides")
    p.add_argument("--halve", action="store_true", help="halve for a symmetric search (X = Y)")


def _region(a) -> SearchRegion:
    if a.region == "ball":
        given = [(k, getattr(a, f"lkc{k}")) for k in (1, 2, 3) if getattr(a, f"lkc{k}") is not None]
        if len(given) != 1:
            raise SystemExit("ball region needs exactly one of --lkc1, --lkc2, --lkc3")
        return ball_region(*given[0])
    if a.region == "box":
        if not a.sides:
            raise SystemExit("box region needs --sides")
        return box_region(a.sides)
    if a.region == "lkc":
        if not a.lkc:
            raise SystemExit("lkc region needs --lkc")
        return SearchRegion(a.lkc)
    if not a.region_file:
        raise SystemExit("json region needs --region-file")
    return SearchRegion.from_json(Path(a.region_file).read_text())


def _dataset_args(p: argparse.ArgumentParser, design: bool = True) -> None:
    p.add_argument("--input", required=True, help="RFTV dataset")
    p.add_argument("--mask", help="RFTV mask (n = d = 1)")
    if design:
        p.add_argument("--design", required=True, help="headered design CSV")
        p.add_argument("--test", help="comma-separated test column names (default: last column)")


def _dataset(a) -> Dataset:
    vol = rftv.read(a.input)
    mask = rftv.read_mask(a.mask) if a.mask else None
    return Dataset(vol.values, vol.step, mask)


def _design(a) -> Design:
    names, X = rftv.read_design_csv(a.design)
    test = a.test.split(",") if a.test else [names[-1]]
    return Design.from_names(names, X, test)


def _emit(a, text: str) -> None:
    out = getattr(a, "out", None)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(a, obj) -> None:
    _emit(a, json.dumps(obj, indent=2) + "\n")


# subcommands ---------------------------------------------------------------

def cmd_ecd(a) -> None:
    stat = _stat(a)
    _json(a, {"stat": stat.to_dict(), "order": a.order, "threshold": a.threshold,
              "value": ec_density(stat, a.order, a.threshold)})


def _query(a, t: float) -> PValueQuery:
    region = _region(a)
    return PValueQuery(_stat(a), region, t, region if a.search_both else None, a.halve)


def cmd_threshold(a) -> None:
    q = _query(a, 0.0)
    t = threshold(q.stat, q.region, a.alpha, q.second_region, q.halve_for_symmetric_search)
    terms = expected_ec_terms(PValueQuery(q.stat, q.region, t, q.second_region,
                                          q.halve_for_symmetric_search))
    _json(a, {"threshold": t, "alpha": a.alpha, "expected_ec_terms": terms})


def cmd_pvalue(a) -> None:
    q = _query(a, a.t)
    _json(a, {"t": a.t, "pvalue": expected_ec(q), "expected_ec_terms": expected_ec_terms(q)})


def cmd_simulate(a) -> None:
    spec = FieldSpec(a.dims, sigma=a.sigma, truncation=a.truncation,
                     seed=getattr(a, "seed", 0), allow_rough=a.allow_rough)
    ths = parse_thresholds(a.thresholds)
    curve = monte_carlo_ec(_stat(a), spec, ths, a.reps, threads=getattr(a, "threads", 1),
                           derivative_variance=a.derivative_variance)
    _emit(a, curve.to_csv())
    out = getattr(a, "out", None)
    if out:
        side = {**curve.metadata, "thresholds": curve.thresholds.tolist(),
                "observed_se": curve.observed_se.tolist()}
        Path(out).with_suffix(".json").write_text(json.dumps(side, indent=2) + "\n")


def cmd_ec(a) -> None:
    vol = rftv.read(a.input)
    if vol.values.shape[-2:] != (1, 1):
        raise SystemExit("ec needs a scalar field (n = d = 1)")
    periodic = tuple(bool(int(x)) for x in a.periodic.split(",")) if a.periodic else None
    field = ScalarLattice(vol.values[..., 0, 0], vol.step, periodic)
    _emit(a, ec_curve(field, parse_thresholds(a.thresholds)).to_csv())


def cmd_fit(a) -> None:
    ds, design = _dataset(a), _design(a)
    fit = fit_model(ds, design)
    summary = {"n": ds.n, "p": design.p, "nu": fit.nu, "d": ds.d, "dims": list(ds.dims),
               "columns": list(design.names)}
    out = getattr(a, "out", None)
    if out:
        # residuals go to the file, the summary to stdout
        rftv.write(out, fit.residuals.values, ds.step)
        sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    else:
        _json(a, summary)


def cmd_map(a) -> None:
    ds, design = _dataset(a), _design(a)
    smap = statistic_map(ds, design, a.kind)
    if not getattr(a, "out", None):
        raise SystemExit("map writes an RFTV file; give --out")
    rftv.write_scalar(a.out, smap.values, ds.step)


def cmd_lkc(a) -> None:
    ds, design = _dataset(a), _design(a)
    region, top = estimate_region(ds, design)
    _json(a, {"L_N": top, "ball_region": list(region.lkc)})


def cmd_analyze(a) -> None:
    ds, design = _dataset(a), _design(a)
    region = SearchRegion.from_json(Path(a.region_file).read_text()) if a.region_file else None
    report = analyze(ds, design, a.kind, a.alpha, region)
    _json(a, report.to_dict())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rftstat", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ecd", help="EC density of a statistic field")
    _stat_args(p)
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.set_defaults(func=cmd_ecd)

    p = sub.add_parser("threshold", help="familywise threshold at level alpha")
    _stat_args(p)
    _region_args(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("pvalue", help="expected-EC P-value of the maximum")
    _stat_args(p)
    _region_args(p)
    p.add_argument("--t", type=float, required=True)
    p.set_defaults(func=cmd_pvalue)

    p = sub.add_parser("simulate", help="Monte Carlo EC curve")
    _stat_args(p)
    p.add_argument("--dims", type=_ints, required=True)
    p.add_argument("--sigma", type=float, default=5.0)
    p.add_argument("--truncation", type=float)
    p.add_argument("--allow-rough", action="store_true")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--thresholds", required=True, help="start:step:stop or comma list")
    p.add_argument("--derivative-variance", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ec", help="lattice EC curve of a scalar RFTV field")
    p.add_argument("--input", required=True)
    p.add_argument("--thresholds", required=True)
    p.add_argument("--periodic", help="comma list of 0/1 per axis")
    p.set_defaults(func=cmd_ec)

    p = sub.add_parser("fit", help="fit the linear model, write residuals")
    _dataset_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("map", help="statistic map as an RFTV file")
    _dataset_args(p)
    p.add_argument("--kind", "--stat", dest="kind", choices=["hotelling", "roy", "maxcorr"], required=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("lkc", help="top LKC and ball region from residuals")
    _dataset_args(p)
    p.set_defaults(func=cmd_lkc)

    p = sub.add_parser("analyze", help="map, threshold and clusters")
    _dataset_args(p)
    p.add_argument("--kind", "--stat", dest="kind", choices=["hotelling", "roy", "maxcorr"], required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--region-file", help="SearchRegion JSON instead of the ball short-cut")
    p.set_defaults(func=cmd_analyze)

    for p in sub.choices.values():
        _common(p)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
