"""Sparse anchor placement and ranging-energy design for TOA localization.

The library models time-of-arrival ranging between candidate anchor positions
and a set of sensor positions, turns an accuracy target (a confidence radius
at a given probability) into a minimum-eigenvalue floor on the Fisher
information at every sensor point, and finds sparse anchor subsets meeting
that floor: a weighted energy relaxation when anchors transmit, a lifted
semidefinite relaxation with randomized rounding when the sensor transmits.
Both ride on a built-in dense interior-point cone solver, and small instances
can be checked against exhaustive-search oracles and Monte-Carlo
localization trials.
"""

from anchorplace.errors import (
    InfeasibleScenarioError,
    ScenarioError,
    SingularFimError,
    SizeCapError,
    SolverFailureError,
)
from anchorplace.scenario import (
    AccuracyTarget,
    Distribution,
    Mode,
    PhysicsParams,
    Scenario,
    load_scenario,
    make_grid,
    save_scenario,
    scenario_digest,
)
from anchorplace.ranging import (
    FeasibilityReport,
    FimTerm,
    accuracy_threshold,
    assemble_fim,
    crb_matrix,
    feasibility_report,
    fim_term,
    range_variance,
    rho_value,
)
from anchorplace.conesolver import (
    ConeProgram,
    PsdBlock,
    SolutionCheck,
    SolveOutcome,
    SolverSettings,
    SolveStatus,
    check_solution,
    dump_program,
    solve,
)
from anchorplace.placement_owa import (
    SUPPORT_TOL,
    EnergyPlacement,
    ReweightRecord,
    solve_l1,
    solve_reweighted,
)
from anchorplace.placement_ows import (
    LiftedSolution,
    RoundedSelection,
    SelectionRecord,
    optimize_sensor_energy,
    randomize_round,
    solve_reweighted_sdp,
    solve_sdp_relaxation,
)
from anchorplace.oracle import (
    CardinalitySearch,
    EnergySearch,
    exhaustive_min_cardinality,
    exhaustive_min_energy_owa,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyTarget",
    "CardinalitySearch",
    "ConeProgram",
    "Distribution",
    "EnergyPlacement",
    "EnergySearch",
    "FeasibilityReport",
    "FimTerm",
    "InfeasibleScenarioError",
    "Mode",
    "PhysicsParams",
    "PsdBlock",
    "ReweightRecord",
    "SUPPORT_TOL",
    "Scenario",
    "ScenarioError",
    "SingularFimError",
    "SizeCapError",
    "SolutionCheck",
    "SolveOutcome",
    "SolveStatus",
    "SolverFailureError",
    "SolverSettings",
    "accuracy_threshold",
    "assemble_fim",
    "check_solution",
    "crb_matrix",
    "dump_program",
    "exhaustive_min_cardinality",
    "exhaustive_min_energy_owa",
    "feasibility_report",
    "fim_term",
    "load_scenario",
    "make_grid",
    "range_variance",
    "rho_value",
    "save_scenario",
    "scenario_digest",
    "solve",
    "solve_l1",
    "solve_reweighted",
    "__version__",
]
