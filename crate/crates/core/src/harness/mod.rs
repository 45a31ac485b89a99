//! Seeded Monte Carlo experiments, result files and plots.

pub mod config;
pub mod experiment;
pub mod iq;
#[cfg(feature = "cli")]
pub mod plots;
pub mod records;
pub mod seeds;

pub use config::{ChannelMode, ExperimentConfig};
pub use experiment::{
    run_frame_sample, run_sweep, run_trial, Cell, CellSummary, FrameSample, SimulatedFrame,
    Simulator, SweepResult, TrialOutcome,
};
pub use iq::{ingest_iq_capture, read_iq, read_iq_file, write_iq, write_iq_file};
pub use records::{
    read_fingerprints, write_fingerprints, FingerprintRecord, ResultRow, ResultsTable, TrialRecord,
    CSV_HEADER,
};
pub use seeds::{SeedPath, Stream};
