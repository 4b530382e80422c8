"""Graph-of-constraints model predictive control planner."""

from ._core import (
    SCHEMA_VERSION,
    CycleDetected,
    Error,
    ParseError,
    Scenario,
    SchemaVersionMismatch,
    cut_edges,
    eval_spline,
    frontier,
    generate_parallel_pickup_scenario,
    generate_stacking_scenario,
    linearize_order,
    load_scenario,
    parse_scenario,
    render_svg,
    run_episode,
    serialize_scenario,
    solve_qp,
    trajectory_csv,
    validate_goc,
)

__all__ = [
    "SCHEMA_VERSION",
    "CycleDetected",
    "Error",
    "ParseError",
    "Scenario",
    "SchemaVersionMismatch",
    "cut_edges",
    "eval_spline",
    "frontier",
    "generate_parallel_pickup_scenario",
    "generate_stacking_scenario",
    "linearize_order",
    "load_scenario",
    "parse_scenario",
    "render_svg",
    "run_episode",
    "serialize_scenario",
    "solve_qp",
    "trajectory_csv",
    "validate_goc",
]
