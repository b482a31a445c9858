"""Principal-strata tools for instrumental variables with three unordered
treatment fields: exact estimands, bias decompositions, defier-share
bounds, first-stage-sign clustering, and a seeded simulation harness."""

from .exceptions import (
    AssumptionError,
    ConfigError,
    InfeasibleError,
    IVStrataError,
    RankError,
)
from .strata import (
    JointStratum,
    MarginalGroup,
    MarginalSpec,
    Population,
    StratumEntry,
    UNIFORM_ASSIGNMENT,
    group_effect,
    group_prob,
    marginal_shares,
    marginalize,
    marginal_spec_from_dict,
    marginal_spec_to_dict,
    population_from_dict,
    population_to_dict,
    potential_choice,
)
from .estimands import (
    BiasDecomposition,
    BiasTerm,
    Regime,
    SweepAxis,
    SweepRow,
    bias_sweep,
    complier_late,
    decompose,
    solve_moment_system,
)
from .identification import (
    DefierBounds,
    FirstStage,
    Maintained,
    defier_bounds,
    feasible_set_scan,
    first_stage_from_shares,
    shares_from_first_stage,
)
from .clustering import (
    ClusterATerm,
    ClusterBiasTerm,
    ClusterDecomposition,
    ClusterScenario,
    ExclusionVerdict,
    NegNegRule,
    ScenarioKind,
    Semantics,
    check_cluster_exclusion,
    choose_clustering,
    cluster_estimand_constant_effects,
    cluster_estimand_formula,
    cluster_wald_oracle,
)
from .montecarlo import (
    Dataset,
    EstimateSet,
    ParamSummary,
    ReplicationSummary,
    Target,
    WaldEstimate,
    estimate_2sls,
    estimate_cluster_wald,
    generate,
    replicate,
    replication_seed,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionError",
    "BiasDecomposition",
    "BiasTerm",
    "ClusterATerm",
    "ClusterBiasTerm",
    "ClusterDecomposition",
    "ClusterScenario",
    "ConfigError",
    "Dataset",
    "DefierBounds",
    "EstimateSet",
    "ExclusionVerdict",
    "FirstStage",
    "IVStrataError",
    "InfeasibleError",
    "JointStratum",
    "Maintained",
    "MarginalGroup",
    "MarginalSpec",
    "NegNegRule",
    "ParamSummary",
    "Population",
    "RankError",
    "Regime",
    "ReplicationSummary",
    "ScenarioKind",
    "Semantics",
    "StratumEntry",
    "SweepAxis",
    "SweepRow",
    "Target",
    "UNIFORM_ASSIGNMENT",
    "WaldEstimate",
    "bias_sweep",
    "check_cluster_exclusion",
    "choose_clustering",
    "cluster_estimand_constant_effects",
    "cluster_estimand_formula",
    "cluster_wald_oracle",
    "complier_late",
    "decompose",
    "defier_bounds",
    "estimate_2sls",
    "estimate_cluster_wald",
    "feasible_set_scan",
    "first_stage_from_shares",
    "generate",
    "group_effect",
    "group_prob",
    "marginal_shares",
    "marginal_spec_from_dict",
    "marginal_spec_to_dict",
    "marginalize",
    "population_from_dict",
    "population_to_dict",
    "potential_choice",
    "replicate",
    "replication_seed",
    "shares_from_first_stage",
    "solve_moment_system",
    "__version__",
]
