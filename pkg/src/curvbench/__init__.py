"""curvbench: a numerical differential-geometry workbench.

Computes Cotton-tensor conformal invariants of 3-manifolds, builds truncated
collar metrics dr^2 + g_r from boundary data, and machine-verifies curvature
expansions, Weitzenboeck-type identities, and gap inequalities.
"""

__version__ = "0.1.0"

from .exprs import (  # noqa: F401
    Expr, Const, Var, BinOp, Func, Jet2Value,
    parse_expr, print_expr, eval_jet2,
    ExprError, ExprDomainError, ParseError,
)
from .metrics import (  # noqa: F401
    MetricSpec, CoordDomain, parse_metric_spec, print_metric_spec,
    builtin_model, conformal_rescale,
)
from .tensors import (  # noqa: F401
    CurvatureBundle, LieFrameSpec, su2_frame, christoffel, curvature_bundle,
    covariant_derivative, frame_curvature, boundary_mean_curvature,
)
from .quadrature import quadrature_integrate  # noqa: F401
from .cotton import (  # noqa: F401
    CottonPack, cotton_pack, invariance_residual, i_epsilon,
    i_zero_estimate, berger_closed_form,
)
from .collar import (  # noqa: F401
    FGCoefficients, CollarSpec, fg_coefficients, make_collar,
    collar_metric_eval, collar_series_residual, collar_from_spec, v_tensors,
)
from .weyl import (  # noqa: F401
    WeylSplit, ZField, BoundaryNormal, WeitzenboeckReport, AlgebraReport,
    weyl_fields, weyl_split, weyl_split_fields, z_field,
    z_field_weitzenboeck, weyl_expansion_residual, weyl_trace_residual,
    divergence_shift_residual, algebra_identity_suite,
    renormalized_volume, volume_upper_bound,
)
from .functionals import (  # noqa: F401
    EnergyValues, ObstructionInputs, GapVerdict, GAP_NAMES,
    GAP_REQUIREMENTS, conformal_energy, restrict_interval, weight_times,
    gap_evaluators,
)
from .conventions import CONVENTIONS, conventions_hash  # noqa: F401
from .report import build_report, render_json, render_csv  # noqa: F401
