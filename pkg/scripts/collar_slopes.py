#!/usr/bin/env python3
"""Fit remainder orders of the collar expansions for one boundary metric.

For the chosen boundary and branch, assembles the collar dr^2 + g_r and
fits log-log slopes of measured-minus-predicted remainders: Christoffel
symbols, curvature blocks, the slice Schouten tensor, the Weyl blocks,
and the trace combination.  A slope at (or above) the expected order
means the series coefficients feeding that family are right; pass
--corrupt to watch a deliberately rescaled coefficient destroy it.
"""

import argparse

import numpy as np

from curvbench.collar import collar_series_residual, make_collar
from curvbench.metrics import builtin_model, parse_metric_spec
from curvbench.weyl import weyl_expansion_residual, weyl_trace_residual


def _boundary(args):
    if args.metric:
        with open(args.metric) as fh:
            return parse_metric_spec(fh.read())
    name, _, params = args.builtin.partition(":")
    kw = {}
    for item in filter(None, params.split(",")):
        key, _, val = item.partition("=")
        kw[key] = float(val)
    return builtin_model(name, kw or None)


def _show(label, fits):
    for family, fit in sorted(fits.items()):
        tag = "exact" if fit.exact else f"slope {fit.slope:5.2f}"
        status = "ok" if fit.passed else "FAIL"
        print(f"  {label:12s} {family:24s} {tag:12s} "
              f"(order {fit.order})  [{status}]")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--builtin", default="berger:eps=2")
    ap.add_argument("--metric", help="boundary metric document instead")
    ap.add_argument("--branch", choices=("even", "selfdual"),
                    default="selfdual")
    ap.add_argument("--r-max", type=float, default=0.3)
    ap.add_argument("--points", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--corrupt", choices=("g3", "g4"),
                    help="rescale one coefficient by 1.1 as a negative "
                         "control")
    args = ap.parse_args(argv)

    scales = {}
    if args.corrupt:
        scales[f"{args.corrupt}_scale"] = 1.1
    collar = make_collar(_boundary(args), args.branch, r_max=args.r_max,
                         **scales)

    rng = np.random.default_rng(args.seed)
    for check in ("christoffel", "riemann", "schouten"):
        _show(check, collar_series_residual(collar, check,
                                            count=args.points, rng=rng))
    wcheck = "even" if args.branch == "even" else "selfdual"
    _show("weyl", weyl_expansion_residual(collar, wcheck,
                                          count=args.points, rng=rng))
    if args.branch == "selfdual":
        _show("wplus-norm", weyl_expansion_residual(
            collar, "wplus-norm", count=args.points, rng=rng))
    tfit = weyl_trace_residual(collar, count=args.points, rng=rng)
    _show("trace", {"boundary-trace": tfit})
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
