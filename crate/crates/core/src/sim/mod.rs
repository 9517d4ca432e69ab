//! Deterministic discrete-event simulation: scenario configuration, the
//! event-driven runner, frame/metrics logs, and the nonce-wrap table.

pub mod config;
pub mod log;
pub mod run;

pub use config::{parse_config, Attack, ConfigError, ScenarioConfig, TrafficModel};
pub use log::{
    observations_from_log, read_frame_log, truth_from_log, write_metrics_csv, LoggedFrame,
    MetricsRow, METRICS_HEADER,
};
pub use run::{
    run_scenario, wrap_table, write_wrap_csv, Counters, Delivery, DisconnectSpec, LinkerScores,
    ProbeResult, ProbeSpec, ProbeTarget, RunOptions, RunOutput, SimError, WrapRow,
    ACK_TIMEOUT_US, DATA_OVERHEAD_BYTES, RETRY_LIMIT, SIFS_US,
};
