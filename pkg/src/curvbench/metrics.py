"""Metric specifications: component tables over a coordinate box.

A MetricSpec is a symmetric table of component expressions g_ij (stored for
i <= j only) over named coordinates, each with an interval domain and a
periodicity flag.  Components evaluate with exact second-order jets, which is
everything downstream curvature needs.

The external text format is line-oriented:

    # comment
    dim = 3
    coords = x1 x2 x3
    domain.x1 = [0, 6.283185307179586] periodic
    g11 = sin(x2)^2
    g12 = 0
    ...
    builtin = berger eps=1.5          # alternative to explicit components

    [collar]                          # optional: assemble dr^2 + g_r
    boundary = berger eps=2           # or: boundary = inline
    branch = selfdual                 # even | selfdual
    r_max = 0.5

A builtin line replaces dim/coords/domain/component lines.  Documents with a
[collar] section parse to the assembled 4D collar metric.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .exprs import (
    BinOp, Const, Expr, Func, ParseError, Var, check_dimension,
    eval_jet2_batch, eval_value_batch, parse_expr, print_expr,
)

__all__ = [
    "CoordDomain", "MetricSpec", "CollarInfo",
    "parse_metric_spec", "print_metric_spec", "builtin_model",
    "conformal_rescale", "BUILTIN_NAMES",
]

BUILTIN_NAMES = ("round-s3", "berger", "flat-t3", "hyperbolic-collar",
                 "s2xs2", "perturbed-s3")

TWO_PI = 2.0 * np.pi
FOUR_PI = 4.0 * np.pi
PI = np.pi


@dataclass(frozen=True)
class CoordDomain:
    lo: float
    hi: float
    periodic: bool = False

    @property
    def span(self):
        return self.hi - self.lo


@dataclass(frozen=True)
class CollarInfo:
    boundary: str          # builtin string like "berger eps=2", or "inline"
    branch: str            # "even" | "selfdual"
    r_max: float
    boundary_spec: "MetricSpec | None" = None


@dataclass
class MetricSpec:
    dim: int
    coords: tuple
    domains: tuple
    comps: dict                    # {(i, j) i<=j: Expr}
    builtin: str | None = None
    builtin_params: dict = field(default_factory=dict)
    collar_info: CollarInfo | None = None

    def __post_init__(self):
        if self.dim not in (3, 4):
            raise ParseError(f"dimension must be 3 or 4, got {self.dim}")
        if len(self.coords) != self.dim or len(self.domains) != self.dim:
            raise ParseError("coords/domains length does not match dim")
        for (i, j), e in self.comps.items():
            if i > j:
                raise ParseError(f"component ({i},{j}) stored with i > j")
            check_dimension(e, self.dim)

    # -- evaluation --------------------------------------------------------

    def component(self, i, j) -> Expr:
        if i > j:
            i, j = j, i
        return self.comps.get((i, j), Const(0.0))

    def metric_values(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        N, n = pts.shape
        g = np.zeros((N, n, n))
        memo = {}       # components of assembled collars share subtrees
        for i in range(n):
            for j in range(i, n):
                e = self.comps.get((i, j))
                if e is None:
                    continue
                v = eval_value_batch(e, pts, memo)
                g[:, i, j] = v
                if i != j:
                    g[:, j, i] = v
        return g

    def metric_jets(self, pts):
        """Return (g, dg, d2g): shapes (N,n,n), (N,n,n,n), (N,n,n,n,n).

        dg[:, k, i, j] = d_k g_ij and d2g[:, k, l, i, j] = d_k d_l g_ij,
        exact (automatic differentiation, no truncation error).
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        N, n = pts.shape
        g = np.zeros((N, n, n))
        dg = np.zeros((N, n, n, n))
        d2g = np.zeros((N, n, n, n, n))
        memo = {}       # components of assembled collars share subtrees
        for i in range(n):
            for j in range(i, n):
                e = self.comps.get((i, j))
                if e is None:
                    continue
                jet = eval_jet2_batch(e, pts, memo)
                g[:, i, j] = jet.val
                dg[:, :, i, j] = jet.grad
                d2g[:, :, :, i, j] = jet.hess
                if i != j:
                    g[:, j, i] = jet.val
                    dg[:, :, j, i] = jet.grad
                    d2g[:, :, :, j, i] = jet.hess
        return g, dg, d2g

    def spd_check(self, pts):
        """Cholesky-based positive-definiteness check; raises on failure."""
        g = self.metric_values(pts)
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            bad = None
            for k in range(g.shape[0]):
                try:
                    np.linalg.cholesky(g[k])
                except np.linalg.LinAlgError:
                    bad = np.atleast_2d(pts)[k]
                    break
            raise ValueError(f"metric not positive definite at {bad}")

    def sample_interior(self, rng, count, margin=0.05):
        """Uniform interior sample, keeping a margin fraction off each edge."""
        cols = []
        for d in self.domains:
            pad = margin * d.span
            cols.append(rng.uniform(d.lo + pad, d.hi - pad, size=count))
        return np.stack(cols, axis=1)

    def with_domain(self, axis, lo, hi):
        doms = list(self.domains)
        doms[axis] = CoordDomain(lo, hi, doms[axis].periodic)
        return replace(self, domains=tuple(doms))


# ---------------------------------------------------------------------------
# Builtins

def _p(text, names):
    return parse_expr(text, names)


def _berger_comps(eps, names=("x1", "x2", "x3")):
    # Euler-angle chart (alpha, beta, gamma); left-invariant coframe
    #   E1 = (d gamma - cos b d alpha)/2,
    #   E2 = (sin g sin b d alpha - cos g d beta)/2,
    #   E3 = (cos g sin b d alpha + sin g d beta)/2,
    # positively oriented; g = eps E1^2 + E2^2 + E3^2.
    e = repr(float(eps))
    return {
        (0, 0): _p(f"0.25*({e}*cos(x2)^2 + sin(x2)^2)", names),
        (0, 1): _p("0", names),
        (0, 2): _p(f"-0.25*{e}*cos(x2)", names),
        (1, 1): _p("0.25", names),
        (1, 2): _p("0", names),
        (2, 2): _p(f"0.25*{e}", names),
    }


def _s3_domains():
    return (CoordDomain(0.0, TWO_PI, True),
            CoordDomain(0.0, PI, False),
            CoordDomain(0.0, FOUR_PI, True))


# Left-invariant coframe of the round chart, as expression text (rows E^a_i).
_COFRAME_TEXT = (
    ("-0.5*cos(x2)", "0", "0.5"),
    ("0.5*sin(x3)*sin(x2)", "-0.5*cos(x3)", "0"),
    ("0.5*cos(x3)*sin(x2)", "0.5*sin(x3)", "0"),
)


def _perturbation_exprs(t, seed, names):
    """Seeded low-frequency trigonometric perturbation.

    The modes multiply symmetrized products of the orthonormal coframe, so
    the perturbation is measured against the round metric itself: the frame
    components of g stay within O(t) of the identity uniformly, including
    near the chart poles (where the raw coordinate components degenerate
    like sin^2 beta).  An extra sin(beta)^2 envelope pins the poles exactly
    round.  Guaranteed positive for t < 1/6.
    """
    rng = np.random.default_rng(int(seed))
    alpha_modes = ["1", "cos(x1)", "sin(x1)", "cos(2*x1)"]
    beta_modes = ["1", "cos(x2)"]
    gamma_modes = ["1", "cos(0.5*x3)", "sin(0.5*x3)"]
    out = {(i, j): [] for i in range(3) for j in range(i, 3)}
    for a in range(3):
        for b in range(a, 3):
            terms = []
            for _ in range(2):
                c = rng.uniform(-1.0, 1.0)
                fa = alpha_modes[rng.integers(len(alpha_modes))]
                fb = beta_modes[rng.integers(len(beta_modes))]
                fg = gamma_modes[rng.integers(len(gamma_modes))]
                terms.append(f"({c!r})*{fa}*{fb}*{fg}")
            mode = " + ".join(terms)
            for i in range(3):
                for j in range(i, 3):
                    ea, eb = _COFRAME_TEXT[a], _COFRAME_TEXT[b]
                    if a == b:
                        prods = [(ea[i], ea[j])]
                    else:
                        prods = [(ea[i], eb[j]), (eb[i], ea[j])]
                    basis = " + ".join(f"({u})*({v})" for u, v in prods
                                       if u != "0" and v != "0")
                    if basis:
                        out[(i, j)].append(f"({mode})*({basis})")
    return {
        key: _p(f"{t!r}*sin(x2)^2*({' + '.join(pieces)})"
                if pieces else "0", names)
        for key, pieces in out.items()
    }


def builtin_model(name: str, params: dict | None = None) -> MetricSpec:
    """Construct a builtin metric in its fixed published chart."""
    params = dict(params or {})
    names3 = ("x1", "x2", "x3")
    names4 = ("x1", "x2", "x3", "x4")

    if name == "round-s3":
        return MetricSpec(3, names3, _s3_domains(), _berger_comps(1.0),
                          builtin=name)

    if name == "berger":
        eps = float(params.pop("eps", params.pop("epsilon", None) or np.nan))
        if not np.isfinite(eps) or eps <= 0:
            raise ValueError("berger requires eps > 0")
        return MetricSpec(3, names3, _s3_domains(), _berger_comps(eps),
                          builtin=name, builtin_params={"eps": eps})

    if name == "flat-t3":
        doms = tuple(CoordDomain(0.0, 1.0, True) for _ in range(3))
        comps = {(i, i): Const(1.0) for i in range(3)}
        comps.update({(i, j): Const(0.0) for i in range(3) for j in range(i + 1, 3)})
        return MetricSpec(3, names3, doms, comps, builtin=name)

    if name == "hyperbolic-collar":
        # dr^2 + (1 - r^2/4)^2 g_round on r in (0, 2); x1 = r
        doms = (CoordDomain(0.0, 2.0, False),) + _s3_domains()
        f2 = "(1 - 0.25*x1^2)^2"
        round_shift = {
            (1, 1): f"0.25*(cos(x3)^2 + sin(x3)^2)",
            (1, 3): "-0.25*cos(x3)",
            (2, 2): "0.25",
            (3, 3): "0.25",
        }
        comps = {(0, 0): Const(1.0)}
        for (i, j), s in round_shift.items():
            comps[(i, j)] = _p(f"{f2}*({s})", names4)
        return MetricSpec(4, names4, doms, comps, builtin=name)

    if name == "s2xs2":
        doms = (CoordDomain(0.0, PI, False), CoordDomain(0.0, TWO_PI, True),
                CoordDomain(0.0, PI, False), CoordDomain(0.0, TWO_PI, True))
        comps = {
            (0, 0): Const(1.0),
            (1, 1): _p("sin(x1)^2", names4),
            (2, 2): Const(1.0),
            (3, 3): _p("sin(x3)^2", names4),
        }
        return MetricSpec(4, names4, doms, comps, builtin=name)

    if name == "perturbed-s3":
        if "t" not in params or "seed" not in params:
            raise ValueError("perturbed-s3 requires amplitude t and mode seed")
        t = float(params["t"])
        seed = int(params["seed"])
        base = _berger_comps(1.0)
        pert = _perturbation_exprs(t, seed, names3)
        comps = {k: BinOp("+", base[k], pert[k]) for k in base}
        return MetricSpec(3, names3, _s3_domains(), comps, builtin=name,
                          builtin_params={"t": t, "seed": seed})

    raise ValueError(f"unknown builtin {name!r}; known: {', '.join(BUILTIN_NAMES)}")


def conformal_rescale(spec: MetricSpec, w) -> MetricSpec:
    """e^{2w} g, with jets composed exactly through the expression tree.

    `w` may be an expression tree or source text in the spec's coordinates.
    """
    if isinstance(w, str):
        w = parse_expr(w, spec.coords)
    check_dimension(w, spec.dim)
    factor = Func("exp", BinOp("*", Const(2.0), w))
    comps = {k: BinOp("*", factor, e) for k, e in spec.comps.items()}
    return MetricSpec(spec.dim, spec.coords, spec.domains, comps)


# ---------------------------------------------------------------------------
# Document parser

def _parse_builtin_string(text):
    parts = text.replace(":", " ").split()
    if not parts:
        raise ParseError("empty builtin declaration")
    name = parts[0]
    params = {}
    for p in parts[1:]:
        for kv in p.split(","):
            if not kv:
                continue
            if "=" not in kv:
                raise ParseError(f"builtin parameter {kv!r} is not key=value")
            k, v = kv.split("=", 1)
            params[k.strip()] = float(v)
    return name, params


def parse_metric_spec(text: str) -> MetricSpec:
    """Parse a metric-definition document.  See the module docstring for the
    grammar.  Errors carry line/column positions."""
    main_lines, collar_lines = [], []
    section = main_lines
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "[collar]":
            section = collar_lines
            continue
        if line.startswith("["):
            raise ParseError(f"unknown section {line!r}", lineno, 1)
        if "=" not in line:
            raise ParseError("expected 'key = value'", lineno, 1)
        key, value = line.split("=", 1)
        section.append((lineno, key.strip(), value.strip()))

    if not collar_lines:
        return _parse_main(main_lines)
    return _parse_collar(main_lines, collar_lines)


def _parse_main(lines):
    dim = None
    coords = None
    domains = {}
    comp_decls = []
    builtin_decl = None

    for lineno, key, value in lines:
        if key == "dim":
            try:
                dim = int(value)
            except ValueError:
                raise ParseError(f"bad dimension {value!r}", lineno, 1)
        elif key == "coords":
            coords = tuple(value.split())
        elif key.startswith("domain."):
            domains[key[len("domain."):]] = (lineno, value)
        elif key == "builtin":
            builtin_decl = (lineno, value)
        elif key.startswith("g") and key[1:].isdigit() and len(key) == 3:
            comp_decls.append((lineno, int(key[1]) - 1, int(key[2]) - 1, value))
        else:
            raise ParseError(f"unknown key {key!r}", lineno, 1)

    if builtin_decl is not None:
        if comp_decls:
            raise ParseError("document mixes a builtin with explicit components",
                             builtin_decl[0], 1)
        name, params = _parse_builtin_string(builtin_decl[1])
        try:
            return builtin_model(name, params)
        except ValueError as exc:
            raise ParseError(str(exc), builtin_decl[0], 1)

    if dim is None:
        raise ParseError("missing 'dim ='", 1, 1)
    if coords is None:
        coords = tuple(f"x{i+1}" for i in range(dim))
    if len(coords) != dim:
        raise ParseError(f"coords lists {len(coords)} names for dim = {dim}", 1, 1)

    doms = []
    for name in coords:
        if name in domains:
            lineno, value = domains.pop(name)
            doms.append(_parse_domain(value, lineno))
        else:
            doms.append(CoordDomain(0.0, 1.0, False))
    if domains:
        stray = next(iter(domains))
        raise ParseError(f"domain for unknown coordinate {stray!r}",
                         domains[stray][0], 1)

    comps, seen = {}, {}
    for lineno, i, j, value in comp_decls:
        if not (0 <= i < dim and 0 <= j < dim):
            raise ParseError(f"component index out of range for dim = {dim}",
                             lineno, 1)
        if i > j:
            raise ParseError(
                f"asymmetric component declaration g{i+1}{j+1}: store only "
                f"the upper triangle (use g{j+1}{i+1})", lineno, 1)
        if (i, j) in seen:
            raise ParseError(f"duplicate component g{i+1}{j+1}", lineno, 1)
        seen[(i, j)] = lineno
        expr = parse_expr(value, coords, line=lineno)
        check_dimension(expr, dim)
        comps[(i, j)] = expr

    for i in range(dim):
        if (i, i) not in comps:
            raise ParseError(f"missing diagonal component g{i+1}{i+1}", 1, 1)
    return MetricSpec(dim, coords, tuple(doms), comps)


def _parse_domain(value, lineno):
    m = value.strip()
    periodic = False
    if m.endswith("periodic"):
        periodic = True
        m = m[: -len("periodic")].strip()
    if not (m.startswith("[") and m.endswith("]")):
        raise ParseError(f"bad domain {value!r} (expected [lo, hi])", lineno, 1)
    try:
        lo, hi = (float(s) for s in m[1:-1].split(","))
    except ValueError:
        raise ParseError(f"bad domain bounds in {value!r}", lineno, 1)
    if not hi > lo:
        raise ParseError(f"empty domain {value!r}", lineno, 1)
    return CoordDomain(lo, hi, periodic)


def _parse_collar(main_lines, lines):
    branch, r_max, boundary_decl = None, None, None
    for lineno, key, value in lines:
        if key == "boundary":
            boundary_decl = (lineno, value)
        elif key == "branch":
            if value not in ("even", "selfdual"):
                raise ParseError(f"branch must be even|selfdual, got {value!r}",
                                 lineno, 1)
            branch = value
        elif key == "r_max":
            r_max = float(value)
        else:
            raise ParseError(f"unknown collar key {key!r}", lineno, 1)
    if branch is None:
        raise ParseError("collar section missing 'branch ='")
    if r_max is None or not (0 < r_max):
        raise ParseError("collar section missing a positive 'r_max ='")

    if boundary_decl is not None and boundary_decl[1] != "inline":
        if main_lines:
            raise ParseError("collar boundary given as a builtin, but the "
                             "document also has a main section",
                             boundary_decl[0], 1)
        name, params = _parse_builtin_string(boundary_decl[1])
        boundary_spec = builtin_model(name, params)
        boundary_text = boundary_decl[1]
    else:
        boundary_spec = _parse_main(main_lines)
        boundary_text = "inline"
    if boundary_spec.dim != 3:
        raise ParseError("collar boundary must be 3-dimensional")

    from .collar import make_collar  # late import: collar builds on metrics
    collar = make_collar(boundary_spec, branch=branch, r_max=r_max)
    spec4 = collar.assembled
    spec4.collar_info = CollarInfo(boundary_text, branch, r_max, boundary_spec)
    return spec4


# ---------------------------------------------------------------------------
# Printer

def print_metric_spec(spec: MetricSpec) -> str:
    # Collar documents round-trip through their definition (boundary +
    # branch + r_max), which reassembles the same metric.
    if spec.collar_info is not None:
        ci = spec.collar_info
        lines = []
        if ci.boundary == "inline":
            lines.append(_print_main(ci.boundary_spec).rstrip("\n"))
            lines.append("")
        lines.append("[collar]")
        lines.append(f"boundary = {ci.boundary}")
        lines.append(f"branch = {ci.branch}")
        lines.append(f"r_max = {ci.r_max!r}")
        return "\n".join(lines) + "\n"
    return _print_main(spec)


def _print_main(spec: MetricSpec) -> str:
    lines = []
    if spec.builtin is not None:
        params = " ".join(f"{k}={v!r}" for k, v in sorted(spec.builtin_params.items()))
        lines.append(f"builtin = {spec.builtin}{(' ' + params) if params else ''}")
    else:
        lines.append(f"dim = {spec.dim}")
        lines.append("coords = " + " ".join(spec.coords))
        for name, d in zip(spec.coords, spec.domains):
            suffix = " periodic" if d.periodic else ""
            lines.append(f"domain.{name} = [{d.lo!r}, {d.hi!r}]{suffix}")
        for (i, j) in sorted(spec.comps):
            lines.append(f"g{i+1}{j+1} = {print_expr(spec.comps[(i, j)])}")
    return "\n".join(lines) + "\n"
