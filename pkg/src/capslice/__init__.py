"""Capability slicing over function decomposition graphs.

The library parses decomposition graphs, measures cohesion and coupling,
enumerates and ranks valid capability slices, selects a best slice under
constraints, and sizes the ripple of change scenarios.  Everything is
computed in exact rational arithmetic and iterated in canonical order, so
repeated runs agree byte for byte.
"""

from .changesim import (
    ChangeError,
    ChangeScenario,
    Comparison,
    ImpactReport,
    ScenarioKind,
    apply_change,
    compare_slices,
    impact_set,
    parse_scenarios,
)
from .graph import (
    EdgeKind,
    FDGraph,
    GraphError,
    GraphParseError,
    IMPACT_RELEVANCE,
    Node,
    NodeKind,
    UnknownNodeError,
    ValidationReport,
    Violation,
    ancestors,
    build_graph,
    descendants,
    export_dot,
    leaves_of,
    parse_graph,
    serialize_graph,
    topological_order,
    undirected_distance,
    validate,
)
from .metrics import (
    CohesionUndefinedError,
    MembershipError,
    UncoveredDirectiveError,
    UnresolvableSharingError,
    capability_coupling,
    cohesion,
    cohesion_map,
    coupling_matrix,
    directive_coupling,
    resolve_membership,
    size_of,
)
from .optimizer import (
    OptimizationConfig,
    OptimizationResult,
    ScheduleModel,
    SliceScore,
    TechFeasibility,
    export_capabilities,
    objective_z,
    optimize,
    pareto_front,
    schedule_slice,
    slice_feasibility,
    validate_manifest,
)
from .slicing import (
    Enumeration,
    InvalidSliceError,
    Ranking,
    Slice,
    SliceCheck,
    SliceMetrics,
    SliceSearch,
    enumerate_slices,
    is_valid_slice,
    make_slice,
    rank_slices,
    score_slices,
    slice_objective,
)

__version__ = "0.1.0"
