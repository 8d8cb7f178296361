"""Command-line front end.

Subcommands
    invariant   Cotton invariants of a 3-metric: pointwise pack summary,
                the regularized integral along an epsilon schedule, the
                limit estimate with its convergence flag, and the sign
                hypothesis.  ``--sweep eps=a:b:n`` tabulates the
                one-parameter family against its closed form.
    verify      Named check suites (identities | collar | weitzenboeck |
                all) over fixed builtin fixtures; nonzero exit when any
                check fails.
    gap         Inequality verdicts from topological/spectral inputs
                supplied by config or flags.
    fg          Collar coefficient dump (g2, g3, g4 and the trace check)
                at sample points of a 3D boundary.
    energy      Conformal energy of a test function on a 4-metric.

Reports are deterministic: the config echo carries only the semantic
inputs (never thread counts or output paths), every reduction is
fixed-order, and all randomness is seeded, so identical configurations
produce byte-identical files at any ``--threads`` value.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .metrics import (MetricSpec, builtin_model, parse_metric_spec,
                      _parse_builtin_string)
from .exprs import ParseError
from .report import build_report, render_csv, render_json

__all__ = ["main"]

_EXIT_OK = 0
_EXIT_CHECK = 1
_EXIT_CONFIG = 2
_EXIT_NUMERIC = 3

_FRAME_INVARIANT = {"round-s3": 1.0}  # builtin -> frame eps (berger: param)


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# config plumbing


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if path.endswith(".toml"):
        try:
            import tomllib as toml
        except ModuleNotFoundError:
            import tomli as toml
        try:
            return toml.loads(raw.decode("utf-8"))
        except toml.TOMLDecodeError as exc:
            raise ConfigError(f"bad TOML in {path}: {exc}") from None
    try:
        return json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad JSON in {path}: {exc}") from None


def _merged(args, config, key, cast=None, default=None):
    """Flag value if given, else config value, else default."""
    val = getattr(args, key.replace("-", "_"), None)
    if val is None:
        val = config.get(key, default)
    if val is None or cast is None:
        return val
    try:
        return cast(val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def _resolution_arg(val):
    if isinstance(val, (list, tuple)):
        return tuple(int(v) for v in val)
    if isinstance(val, int):
        return val
    parts = str(val).split(",")
    if len(parts) == 1:
        return int(parts[0])
    return tuple(int(p) for p in parts)


def _input_spec(args, config, want_dim=None) -> MetricSpec:
    builtin = _merged(args, config, "builtin")
    path = _merged(args, config, "metric")
    if (builtin is None) == (path is None):
        raise ConfigError("exactly one of --builtin or --metric is required")
    if builtin is not None:
        name, params = _parse_builtin_string(str(builtin))
        try:
            spec = builtin_model(name, params or None)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    else:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                spec = parse_metric_spec(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read metric {path}: {exc}") from None
    if want_dim is not None and spec.dim != want_dim:
        raise ConfigError(f"this subcommand needs a {want_dim}D metric, "
                          f"got {spec.dim}D")
    return spec


def _emit(args, text):
    out = getattr(args, "output", None)
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _fit_dict(fit):
    return {
        "family": fit.family,
        "order": fit.order,
        "slope": fit.slope,
        "exact": fit.exact,
        "passed": fit.passed,
        "max_residual": float(np.max(fit.residuals)),
        "residuals": fit.residuals,
        "r_grid": fit.r_grid,
    }


# ---------------------------------------------------------------------------
# invariant


def _sweep_rows(spec_text):
    from .cotton import berger_invariant_exact

    try:
        key, sched = str(spec_text).split("=", 1)
        lo, hi, n = sched.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigError("--sweep wants param=lo:hi:count") from None
    if key != "eps":
        raise ConfigError(f"unknown sweep parameter {key!r}; only eps")
    if n < 2 or not (0 < lo < hi):
        raise ConfigError("sweep range must be 0 < lo < hi with count >= 2")
    rows = []
    for eps in np.linspace(lo, hi, n):
        computed, closed = berger_invariant_exact(float(eps))
        denom = max(abs(closed), 1e-300)
        rel = abs(computed - closed) / denom if closed != 0.0 else \
            abs(computed - closed)
        rows.append((float(eps), computed, closed, rel))
    return rows


def cmd_invariant(args, config) -> int:
    from .cotton import (DEFAULT_SCHEDULE, cotton_pack, i_zero_estimate)
    from .tensors import su2_frame

    sweep = _merged(args, config, "sweep")
    if sweep is not None:
        rows = _sweep_rows(sweep)
        cols = ("param", "I_computed", "I_closed_form", "rel_err")
        if args.format == "csv":
            _emit(args, render_csv(cols, rows))
        else:
            doc = build_report("invariant", {"sweep": str(sweep)},
                               {"columns": cols, "rows": rows})
            _emit(args, render_json(doc))
        return _EXIT_OK

    spec = _input_spec(args, config, want_dim=3)
    if args.format != "json":
        raise ConfigError("invariant reports are JSON (csv is for --sweep)")
    schedule = _merged(args, config, "schedule")
    if schedule is not None:
        if isinstance(schedule, str):
            schedule = [float(s) for s in schedule.split(",")]
        schedule = tuple(float(s) for s in schedule)
        if len(schedule) < 3:
            raise ConfigError("schedule needs at least three entries to "
                              "extrapolate the limit")
    else:
        schedule = DEFAULT_SCHEDULE
    resolution = _merged(args, config, "resolution", _resolution_arg)
    threads = args.threads or 1

    use_frame = (spec.builtin in ("round-s3", "berger")
                 and not getattr(args, "chart", False))
    if use_frame:
        eps = float(spec.builtin_params.get("eps", 1.0))
        obj = su2_frame(eps)
    else:
        obj = spec

    rng = np.random.default_rng(3)
    pts = spec.sample_interior(rng, 5, margin=0.1)
    pairings, cy_norms = [], []
    for p in pts:
        pack = cotton_pack(obj if use_frame else spec,
                           None if use_frame else p)
        pairings.append(pack.pairing)
        cy_norms.append(pack.cy_norm2)
    rep = i_zero_estimate(obj, schedule=schedule, resolution=resolution,
                          threads=threads)
    if rep.flag != "converged":
        hypothesis = "unknown (schedule not converged)"
    elif rep.i_zero >= -1e-10 * max(1.0, abs(rep.i_zero)):
        hypothesis = "holds"
    else:
        hypothesis = "fails"
    results = {
        "pack_summary": {
            "pairing_min": min(pairings), "pairing_max": max(pairings),
            "cy_norm2_min": min(cy_norms), "cy_norm2_max": max(cy_norms),
            "sample_points": len(pairings),
        },
        "route": "frame" if use_frame else "chart",
        "schedule": rep.schedule,
        "values": rep.values,
        "quadrature_errors": rep.errors,
        "i_zero": rep.i_zero,
        "flag": rep.flag,
        "resolution": rep.resolution,
        "hypothesis_i0_nonneg": hypothesis,
    }
    cfg = {"input": _echo_input(args, config), "schedule": schedule,
           "resolution": resolution}
    _emit(args, render_json(build_report("invariant", cfg, results)))
    return _EXIT_OK


def _echo_input(args, config):
    builtin = _merged(args, config, "builtin")
    return {"builtin": builtin} if builtin is not None else \
        {"metric": _merged(args, config, "metric")}


# ---------------------------------------------------------------------------
# verify


def _verify_identities(checks):
    from .weyl import algebra_identity_suite

    rep = algebra_identity_suite()
    for item in rep.items:
        checks.append({
            "suite": "identities", "name": item.name,
            "value": item.value, "tolerance": item.tolerance,
            "passed": item.passed, "detail": item.detail,
        })


_COLLAR_FIXTURES = (
    ("round-s3", None, "even"),
    ("berger eps=2", {"eps": 2.0}, "selfdual"),
)


def _verify_collar(checks, builtin=None, branch=None):
    from .collar import collar_series_residual, make_collar
    from .weyl import weyl_expansion_residual, weyl_trace_residual

    if builtin is not None:
        name, params = _parse_builtin_string(str(builtin))
        fixtures = ((builtin, params or None, branch or "even"),)
    else:
        fixtures = _COLLAR_FIXTURES

    for label, params, br in fixtures:
        name = str(label).split()[0].split(":")[0]
        boundary = builtin_model(name, params)
        collar = make_collar(boundary, br, r_max=0.3)
        fits = {}
        for check in ("christoffel", "riemann", "schouten"):
            fits.update({f"{check}/{k}": v for k, v in
                         collar_series_residual(collar, check).items()})
        wcheck = "even" if br == "even" else "selfdual"
        fits.update({f"weyl/{k}": v for k, v in
                     weyl_expansion_residual(collar, wcheck).items()})
        if br == "selfdual":
            fits.update({f"weyl/{k}": v for k, v in
                         weyl_expansion_residual(collar, "wplus-norm").items()})
        fits["weyl/trace"] = weyl_trace_residual(collar)
        for key in sorted(fits):
            d = _fit_dict(fits[key])
            d.pop("residuals"), d.pop("r_grid")
            d.update({"suite": "collar", "fixture": f"{label}:{br}",
                      "name": key})
            checks.append(d)


def _s2xs2_weights(rng, count, scale=0.15):
    terms = ("cos(x1)", "sin(x1)*cos(x2)", "cos(x3)", "sin(x3)*sin(x4)")
    out = []
    for _ in range(count):
        a = scale * rng.uniform(-1.0, 1.0, size=1 + len(terms))
        parts = [f"{a[0]:.6f}"] + [f"{c:.6f}*{t}" for c, t in
                                   zip(a[1:], terms)]
        out.append(" + ".join(parts))
    return out


def _verify_weitzenboeck(checks):
    from .weyl import z_field_weitzenboeck

    spec = builtin_model("s2xs2")
    rng = np.random.default_rng(61)
    pts = spec.sample_interior(rng, 12, margin=0.12)
    for k, w in enumerate(_s2xs2_weights(rng, 2)):
        rep = z_field_weitzenboeck(spec, w, pts)
        wb = float(np.max(np.abs(rep.weitzenboeck_residual)))
        har = float(np.max(np.abs(rep.harmonic_residual)))
        kato = float(np.min(rep.kato_margin))
        checks.extend([
            {"suite": "weitzenboeck", "name": f"balance[{k}]",
             "value": wb, "tolerance": 1e-4, "passed": wb <= 1e-4},
            {"suite": "weitzenboeck", "name": f"harmonic[{k}]",
             "value": har, "tolerance": 1e-5, "passed": har <= 1e-5},
            {"suite": "weitzenboeck", "name": f"kato-margin[{k}]",
             "value": kato, "tolerance": -1e-8, "passed": kato >= -1e-8},
            {"suite": "weitzenboeck", "name": f"precondition[{k}]",
             "value": rep.precondition, "tolerance": 1e-6,
             "passed": rep.precondition <= 1e-6},
        ])


def cmd_verify(args, config) -> int:
    suite = _merged(args, config, "suite")
    if suite not in ("identities", "collar", "weitzenboeck", "all"):
        raise ConfigError("suite must be one of identities, collar, "
                          "weitzenboeck, all")
    if args.format != "json":
        raise ConfigError("verify reports are JSON")
    builtin = _merged(args, config, "builtin")
    branch = _merged(args, config, "branch")

    checks = []
    if suite in ("identities", "all"):
        _verify_identities(checks)
    if suite in ("collar", "all"):
        _verify_collar(checks, builtin=builtin, branch=branch)
    if suite in ("weitzenboeck", "all"):
        _verify_weitzenboeck(checks)

    failed = [c["name"] for c in checks if not c["passed"]]
    summary = {"total": len(checks), "failed": len(failed),
               "failing": failed, "passed": not failed}
    cfg = {"suite": suite}
    if builtin is not None:
        cfg["builtin"], cfg["branch"] = builtin, branch or "even"
    _emit(args, render_json(build_report("verify", cfg, {"checks": checks},
                                         summary=summary)))
    if failed:
        print(f"verify: {len(failed)} check(s) failed: " +
              ", ".join(failed), file=sys.stderr)
        return _EXIT_CHECK
    return _EXIT_OK


# ---------------------------------------------------------------------------
# gap


def cmd_gap(args, config) -> int:
    from .functionals import (GAP_NAMES, GAP_REQUIREMENTS, ObstructionInputs,
                              gap_evaluators)

    if args.format != "json":
        raise ConfigError("gap reports are JSON")
    fields = {}
    for key in ("tau", "eta", "chi", "yamabe", "yamabe_type1", "weyl_l2",
                "weyl_plus_l2"):
        val = _merged(args, config, key, float)
        if val is not None:
            fields[key] = val
    which = _merged(args, config, "which", default="all")
    if isinstance(which, str) and which != "all":
        which = tuple(w.strip() for w in which.split(","))
    names = GAP_NAMES if which == "all" else tuple(which)

    required = {"tau", "eta", "chi", "yamabe"}
    missing_req = sorted(required - set(fields))
    if missing_req:
        items = []
        for name in names:
            need = sorted(set(GAP_REQUIREMENTS[name]) - set(fields))
            items.append({"name": name, "satisfied": None,
                          "note": "insufficient data: needs " +
                                  ", ".join(need) if need else ""})
        doc = build_report("gap", {"inputs": fields, "which": which},
                           {"verdicts": items},
                           summary={"missing": missing_req})
        _emit(args, render_json(doc))
        print("gap: missing required inputs: " + ", ".join(missing_req),
              file=sys.stderr)
        return _EXIT_CONFIG

    inputs = ObstructionInputs(**fields)
    verdicts = gap_evaluators(inputs, which=which)
    results = {"verdicts": verdicts,
               "text": [str(v) for v in verdicts]}
    doc = build_report("gap", {"inputs": fields, "which": which}, results)
    _emit(args, render_json(doc))
    return _EXIT_OK


# ---------------------------------------------------------------------------
# fg


def cmd_fg(args, config) -> int:
    from .collar import fg_coefficients

    if args.format != "json":
        raise ConfigError("fg reports are JSON")
    boundary = _input_spec(args, config, want_dim=3)
    branch = _merged(args, config, "branch", str, default="even")
    count = _merged(args, config, "points", int, default=4)
    fg = fg_coefficients(boundary, branch)
    pts = boundary.sample_interior(np.random.default_rng(5), count,
                                   margin=0.1)
    f = fg.fields(pts)
    ginv = f["g_inv"]
    tr_g4 = np.einsum("Nij,Nij->N", ginv, f["g4"], optimize=False)
    p_norm2 = np.einsum("Nik,Njl,Nij,Nkl->N", ginv, ginv, f["schouten"],
                        f["schouten"], optimize=False)
    results = {
        "branch": branch, "mode": fg.mode,
        "points": pts, "g2": f["g2"], "g3": f["g3"], "g4": f["g4"],
        "trace_g4": tr_g4, "quarter_p_norm2": 0.25 * p_norm2,
        "trace_identity_residual": float(np.max(np.abs(
            tr_g4 - 0.25 * p_norm2))),
    }
    cfg = {"input": _echo_input(args, config), "branch": branch,
           "points": count}
    _emit(args, render_json(build_report("fg", cfg, results)))
    return _EXIT_OK


# ---------------------------------------------------------------------------
# energy


def cmd_energy(args, config) -> int:
    from .functionals import conformal_energy, restrict_interval

    if args.format != "json":
        raise ConfigError("energy reports are JSON")
    spec = _input_spec(args, config, want_dim=4)
    phi = _merged(args, config, "phi")
    if phi is None:
        raise ConfigError("energy needs --phi EXPRESSION")
    resolution = _merged(args, config, "resolution", _resolution_arg,
                         default=(16, 10, 10, 13))
    restrict = _merged(args, config, "restrict")
    if restrict is not None:
        try:
            lo, hi = (float(v) for v in str(restrict).split(":"))
        except ValueError:
            raise ConfigError("--restrict wants lo:hi") from None
        spec = restrict_interval(spec, lo, hi)
    vals = conformal_energy(spec, str(phi), resolution,
                            threads=args.threads or 1)
    cfg = {"input": _echo_input(args, config), "phi": str(phi),
           "resolution": resolution, "restrict": restrict}
    _emit(args, render_json(build_report("energy", cfg, vals)))
    return _EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def _build_parser():
    ap = argparse.ArgumentParser(
        prog="curvbench",
        description="conformal curvature workbench: invariants, collar "
                    "expansions, verification suites, gap arithmetic")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    def common(p, resolution=False):
        p.add_argument("--config", help="TOML or JSON config file")
        p.add_argument("--builtin", help="builtin metric, e.g. berger:eps=2")
        p.add_argument("--metric", help="metric definition document")
        p.add_argument("--output", help="write the report here "
                                        "(default stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--threads", type=int, default=1)
        if resolution:
            p.add_argument("--resolution",
                           help="int or comma list, one per axis")

    p = sub.add_parser("invariant", help="Cotton invariants of a 3-metric")
    common(p, resolution=True)
    p.add_argument("--schedule", help="comma list of epsilon values")
    p.add_argument("--sweep", help="param=lo:hi:count, e.g. eps=0.5:2.0:7")
    p.add_argument("--chart", action="store_true",
                   help="force chart quadrature even for frame builtins")

    p = sub.add_parser("verify", help="run a named check suite")
    common(p)
    p.add_argument("--suite",
                   choices=("identities", "collar", "weitzenboeck", "all"))
    p.add_argument("--branch", choices=("even", "selfdual"))

    p = sub.add_parser("gap", help="inequality verdicts from inputs")
    common(p)
    for key in ("tau", "eta", "chi", "yamabe", "yamabe-type1", "weyl-l2",
                "weyl-plus-l2"):
        p.add_argument(f"--{key}", type=float,
                       dest=key.replace("-", "_"))
    p.add_argument("--which", help="comma list of gap names (default all)")

    p = sub.add_parser("fg", help="dump collar coefficients at samples")
    common(p)
    p.add_argument("--branch", choices=("even", "selfdual"), default="even")
    p.add_argument("--points", type=int, default=4)

    p = sub.add_parser("energy", help="conformal energy of a test function")
    common(p, resolution=True)
    p.add_argument("--phi", help="test function expression")
    p.add_argument("--restrict", help="lo:hi restriction of the first axis")
    return ap


_DISPATCH = {
    "invariant": cmd_invariant,
    "verify": cmd_verify,
    "gap": cmd_gap,
    "fg": cmd_fg,
    "energy": cmd_energy,
}


def main(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags, matching the config-error code
        return int(exc.code or 0)
    try:
        config = _load_config(args.config)
        return _DISPATCH[args.subcommand](args, config)
    except (ConfigError, ParseError) as exc:
        print(f"curvbench: config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"curvbench: numerical failure: {exc}", file=sys.stderr)
        return _EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
