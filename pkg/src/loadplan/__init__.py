"""Planning toolkit for sequential wheel-loader loading cycles.

The pile lives on a heightfield; a world model predicts how each dig reshapes
it and what the loading costs; V-turn transport costs come from spline paths
and longitudinal dynamics, precomputed into a lookup table; and a look-ahead
tree search picks dig locations and loading actions over a multi-cycle
horizon.
"""

from .heightfield import (
    BoundsError,
    ConvergenceError,
    GridSpec,
    HeightField,
    LocalPatch,
    PileSpec,
    cutout,
    generate_pile,
    read_csv,
    read_hfld,
    replace,
    sample,
    settle,
    write_csv,
    write_hfld,
)
from .worldmodel import (
    AnalyticSurrogate,
    DigPose,
    LoadAction,
    Normalization,
    OptimizerOptions,
    PerformanceTriple,
    SurrogateParams,
    WorldModel,
    objective,
    optimize_action,
    predict_performance,
    predict_pile,
)
from .vturn import (
    ExtrapolationError,
    PlanningError,
    SplineSegment,
    VehicleParams,
    VTurnCost,
    VTurnLUT,
    VTurnPath,
    build_lut,
    integrate_motion,
    lut_lookup,
    path_quality,
    plan_vturn,
    read_vlut,
    solve_spline,
    write_vlut,
)
from .planner import (
    DigCandidate,
    PlannerConfig,
    PlanStep,
    SearchStats,
    evaluate_Q,
    listup,
    perf_total,
    strategy_greedy,
    strategy_max_loading,
    strategy_nominal,
    tree_search,
)
from .harness import (
    ExperimentResult,
    ScenarioConfig,
    depth_sweep_report,
    run_experiment,
    strategy_report,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
