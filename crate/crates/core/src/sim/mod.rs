//! Scenario loading, the discrete-event engine, replications and reports.

mod compare;
mod conformance;
mod engine;
mod metrics;
mod report;
mod scenario;

pub use compare::{compare_with_oracle, CompareError, Comparison, METRICS, Z_LIMIT};
pub use conformance::{cg_uci_presence, check_row, conformance_matrix, row_scenarios, RowCheck};
pub use engine::{replication_rng, run_replication, Engine, PacketRecord, ReplicationResult, SkipReason, TraceEvent, TraceKind};
pub use metrics::{aggregate, mean_se, percentiles, FiveNines, UeAggregate, UeMetrics, FIVE_NINES_MIN_OFFERED, PERCENTILES};
pub use report::{run_scenario, Percentile, Report, Summary, UeSummary, CDF_MAX_ROWS, CSV_COLUMNS};
pub use scenario::{
    CarrierConfig, CarrierMap, DciEvent, Enhancements, FeatureRequest, GnbConfig, Issue, MissPolicy, ScenarioConfig, ScenarioError,
    UeConfig, ALL_UPLINK_SLOT, SCHEMA_VERSION,
};
