//! Discrete-time simulation of camera sightings, V2V broadcast and the
//! prover/verifier stations, with the confirmation metrics and their
//! logarithmic fit.

mod engine;
pub mod fcd;
mod fit;
pub mod geometry;
mod metrics;
mod params;
mod scenario;

pub use engine::{event_log, run_fcd_stream, run_simulation, SimOutput, Simulation, TickReport};
pub use fcd::{load_fcd, write_fcd, FcdFormat, FcdOptions, FcdReader};
pub use fit::{fit_log, LogFit};
pub use geometry::{hearing_set, plate_visible};
pub use metrics::{
    aggregate_proof_rate, fit_points, metrics_csv, parse_metrics_csv, station_csv, StationSummary,
    TickMetrics, METRICS_HEADER, STATION_HEADER,
};
pub use params::{SimParams, DEFAULT_SEED};
pub use scenario::{
    assign_identities, synth_scenario, Formation, IdentityAllocator, Scenario, Tick,
    VehicleIdentity, VehicleState, SYNTH_SPEED_MPS, SYNTH_TICK_MS,
};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("line {line}: {context}")]
    Parse { line: usize, context: String },
    #[error("line {line}: time {time_ms} ms does not follow {previous_ms} ms")]
    NonMonotonicTime {
        line: usize,
        previous_ms: u64,
        time_ms: u64,
    },
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
