"""
The discovery gateway: registry client, plugin cache, per-session pipeline, daemon and timing report.
"""
from core.gateway.client import (
    FetchError,
    GatewayError,
    RegistryClient,
    RegistryRejected,
    RegistryUnreachable,
    StrategyInfeasible,
)
from core.gateway.cache import IntegrityError, PluginCache
from core.gateway.pipeline import (
    TIMING_STEPS,
    ConfiguredReceipt,
    DiscoveryPipeline,
    DiscoverySession,
    MalformedIdentity,
    PartialConfiguration,
    Phase,
    PhaseOrderError,
    PhaseTimeout,
    PhaseTimings,
    PluginMismatch,
    SessionOutcome,
    SessionRecord,
    context_facts,
)
from core.gateway.service import Gateway, GatewayStatus
from core.gateway.report import StepStats, TimingReport, render_table, report_timings, to_csv
