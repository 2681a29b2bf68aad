"""Damage assessment and recovery for transaction logs of fog-computing nodes."""

from .assessment import (
    AssessmentOutput,
    DamageAuditRow,
    DamageItemTable,
    MaliciousList,
    RowKind,
    assess,
    assess_primary,
    assess_secondary,
)
from .errors import (
    FogRecoverError,
    PreconditionError,
    ProtocolError,
    ScenarioError,
    ScheduleSyntaxError,
    UpstreamIncomplete,
)
from .fognet import CascadeTrace, FogNetwork, FogNode, NodeKind, Topology
from .logmodel import (
    RemoteRef,
    TransactionLog,
    TxnId,
    committed_value_before,
    format_schedule,
    parse_schedule,
    validate_schedule,
)
from .recovery import (
    Constant,
    IdentityOf,
    LastRead,
    RecomputeSpec,
    RecoveryOutput,
    SumOfReads,
    ValidItemsTable,
    last_valid_before,
    recompute_row,
    recover,
    recover_primary,
    recover_secondary,
)
from .scenario import (
    Scenario,
    build_logs,
    compare_states,
    generate_random,
    oracle_replay,
    two_fog_scenario,
    run_engine,
)

__version__ = "0.1.0"
