"""Consistent differentially private release of hierarchical group-size counts."""

from .cpwl import (
    CostTable,
    MergeTrace,
    OpCounter,
    add_deviation,
    argmin,
    chain_step,
    leaf_table,
    reconstruct_assignment,
    table_merge,
)
from .harness import (
    ExperimentConfig,
    l1_error,
    run_experiment,
    synth_census,
    synth_taxi,
)
from .hierarchy import (
    Chain,
    ChainNode,
    DomainPolicy,
    DpTree,
    GroupSizeHierarchy,
    PgsrReport,
    RecordError,
    RegionTree,
    aggregate_records,
    build_chain,
    build_dp_tree,
    cumulate,
    decumulate,
    validate_pgsr,
)
from .io import dump_hierarchy, load_hierarchy, read_records_csv
from .mechanisms import (
    MECHANISMS,
    MechanismResult,
    mech_c_ch,
    mech_c_dp,
    mech_h_dp,
    oracle_chain,
    oracle_tree,
    pava_isotonic,
    repair_cumulative,
)
from .noise import NoiseSpec, noisy_hierarchy, sample_double_geometric

__version__ = "0.1.0"

__all__ = [
    "CostTable",
    "MergeTrace",
    "OpCounter",
    "add_deviation",
    "argmin",
    "chain_step",
    "leaf_table",
    "reconstruct_assignment",
    "table_merge",
    "ExperimentConfig",
    "l1_error",
    "run_experiment",
    "synth_census",
    "synth_taxi",
    "Chain",
    "ChainNode",
    "DomainPolicy",
    "DpTree",
    "GroupSizeHierarchy",
    "PgsrReport",
    "RecordError",
    "RegionTree",
    "aggregate_records",
    "build_chain",
    "build_dp_tree",
    "cumulate",
    "decumulate",
    "validate_pgsr",
    "dump_hierarchy",
    "load_hierarchy",
    "read_records_csv",
    "MECHANISMS",
    "MechanismResult",
    "mech_c_ch",
    "mech_c_dp",
    "mech_h_dp",
    "oracle_chain",
    "oracle_tree",
    "pava_isotonic",
    "repair_cumulative",
    "NoiseSpec",
    "noisy_hierarchy",
    "sample_double_geometric",
]
