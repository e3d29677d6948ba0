"""fmdlab: a numerical laboratory for fractional-maximal distributions.

Lattice fields on 2-D domains, discrete fractional maximal operators with
bit-exact averaging, distribution functions and FMD profiles, Lorentz /
Orlicz / Orlicz-Lorentz norms, finite-difference solvers for quasilinear
Dirichlet and double-obstacle problems, and an empirical verification
harness for level-set decay and norm comparison inequalities.
"""

from .distribution import (
    LevelGrid,
    LevelProfile,
    WeakBoundReport,
    dist_fn,
    embed_field,
    fmd,
    level_measures,
    weak_bound_constant,
)
from .funcspaces import (
    NormSpec,
    YoungCertificate,
    YoungFn,
    certify_young,
    evaluate_norm,
    lorentz_norm,
    luxemburg_norm,
    orlicz_lorentz_norm,
    young_exp,
    young_plog,
    young_power,
)
from .grid import (
    DomainGrid,
    ScalarField,
    VectorField,
    ball_average,
    ball_cells,
    field_from_function,
    gradient,
    integrate,
    load_field,
    make_domain,
    mean,
    save_field,
    surface_ball,
    vector_field_from_function,
)
from .maximal import (
    MaximalResult,
    RadiusSet,
    cutoff_above,
    cutoff_below,
    frac_maximal,
    riesz_domination_constant,
    riesz_potential,
)
from .pde import (
    BMOReport,
    OperatorSpec,
    ProblemSpec,
    SolveReport,
    bmo_seminorm,
    max_principle_violation,
    monotonicity_constant,
    psi_varsigma,
    solve,
    structure_margins,
)
from .verify import (
    ComparisonPair,
    CoveringReport,
    DensityReport,
    GoodLambdaReport,
    RangeRuleError,
    check_global_comparison,
    check_lemma_A1,
    check_lemma_A2,
    check_local_comparison,
    check_quasi_triangle,
    check_reverse_holder,
    covering_check,
    density_check,
    dyadic_radii,
    goodlambda_scan,
    make_dop_pair,
    make_p1_pair,
    norm_comparison_report,
    reverse_holder_sweep,
    sample_centers,
)

__version__ = "0.1.0"
