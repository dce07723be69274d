"""Exact discrete optimal transport and disintegration of finite measures."""

from otdisint.errors import OTError
from otdisint.metric_space import (
    INF,
    EuclideanCloud,
    FiniteMetricSpace,
    QuotientSpace,
    group_quotient,
    lq_product,
    quotient_distance,
)
from otdisint.measures import (
    DiscreteMeasure,
    MeasureOverMeasures,
    PointMap,
    barycenter_of_classes,
    canonicalize_measure_key,
    dirac_lattice_approx,
    pushforward,
)
from otdisint.solver import (
    CostMatrix,
    SolveReport,
    TransportPlan,
    solve_kantorovich,
    verify_plan,
    w1_dual,
    wasserstein,
)
from otdisint.disintegration import (
    DisintegrationMap,
    check_uniqueness_abs_continuity,
    dirac_disintegration,
    disintegrate,
    reassemble,
)
from otdisint.transport_class import (
    TransportClass,
    abstract_cost,
    check_dirac_equivalence,
    equivalent_by_disintegration,
    lambda_consistent,
    pushforward_map,
    solve_mk_in_class,
)
from otdisint.interpolation import (
    Coupling3,
    InterpolationPath,
    check_constant_speed,
    check_cyclical_monotonicity,
    dyadic_interpolation,
    glue,
    mccann_step,
)
from otdisint.foliation import (
    FoliatedSpace,
    build_counterexample,
    check_bijective_dirac,
    check_metric_foliation,
    check_mmf,
    continuity_modulus,
)

__version__ = "0.1.0"
