//! Experiment configuration.
//!
//! Every key is optional in a config file; missing keys take the defaults of
//! [`ExperimentConfig::default`]. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::BasisConfig;
use crate::device::{reference_profiles, TransmitterProfile};
use crate::ofdm::FrameSpec;
use crate::pipeline::{PayloadMode, PipelineConfig};
use crate::separation::Solver;
use crate::{Error, Result};

/// Whether each frame sees a fresh channel draw or all frames of one device
/// in one trial share a single draw.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    #[default]
    PerFrame,
    PerTrial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_subcarriers: usize,
    pub cp_len: usize,
    /// RMS amplitude of the transmitted waveform.
    pub drive_rms: f64,
    pub payload_counts: Vec<usize>,
    pub ebn0_db: Vec<f64>,
    pub n_trials: usize,
    pub samples_per_device: usize,
    pub n_train: usize,
    pub k: usize,
    pub max_delay: usize,
    pub n_paths: usize,
    pub order: usize,
    /// Estimated FIR length; `None` means `max_delay + 1`.
    pub n_taps: Option<usize>,
    pub channel_mode: ChannelMode,
    pub solver: Solver,
    pub payload_mode: PayloadMode,
    /// Redraws allowed for one sample before the run aborts.
    pub max_redraws: u32,
    pub master_seed: u64,
    pub profiles: Vec<TransmitterProfile>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_subcarriers: 2048,
            cp_len: 512,
            drive_rms: 0.5,
            payload_counts: vec![1, 2, 4, 8],
            ebn0_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            n_trials: 100,
            samples_per_device: 66,
            n_train: 33,
            k: 3,
            max_delay: 8,
            n_paths: 5,
            order: 7,
            n_taps: None,
            channel_mode: ChannelMode::PerFrame,
            solver: Solver::Correlation,
            payload_mode: PayloadMode::Concatenated,
            max_redraws: 16,
            master_seed: 2024,
            profiles: reference_profiles(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a TOML (`.toml`) or JSON (anything else) file and validates it.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let is_toml = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let cfg = if is_toml {
            Self::from_toml(&text)?
        } else {
            Self::from_json(&text)?
        };
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[cfg(feature = "cli")]
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[cfg(not(feature = "cli"))]
    pub fn from_toml(_text: &str) -> Result<Self> {
        Err(Error::Config("TOML support needs the `cli` feature".into()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.payload_counts.is_empty() || self.payload_counts.contains(&0) {
            return bad("payload_counts must be non-empty and positive".into());
        }
        if self.ebn0_db.is_empty() || self.ebn0_db.iter().any(|e| e.is_nan()) {
            return bad("ebn0_db must be a non-empty list of numbers".into());
        }
        if self.n_trials == 0 {
            return bad("n_trials must be positive".into());
        }
        if self.n_train == 0 || self.n_train >= self.samples_per_device {
            return bad(format!(
                "n_train {} must lie in 1..{}",
                self.n_train, self.samples_per_device
            ));
        }
        if self.k == 0 || self.k > self.n_train * self.profiles.len() {
            return bad(format!("k = {} does not fit the training set", self.k));
        }
        if self.profiles.len() < 2 {
            return bad("at least two transmitter profiles are required".into());
        }
        let mut labels: Vec<&str> = self.profiles.iter().map(|p| p.label()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != self.profiles.len() {
            return bad("transmitter labels must be unique".into());
        }
        if self.profiles.iter().any(|p| p.order() != self.order) {
            return bad(format!("every profile must have order {}", self.order));
        }
        if self.n_paths == 0 || self.n_paths > self.max_delay + 1 {
            return bad(format!(
                "{} paths do not fit in delays 0..={}",
                self.n_paths, self.max_delay
            ));
        }
        self.basis()?;
        for &p in &self.payload_counts {
            self.frame_spec(p)?;
        }
        Ok(())
    }

    pub fn frame_spec(&self, p: usize) -> Result<FrameSpec> {
        FrameSpec::new(self.n_subcarriers, self.cp_len, p)?.with_drive(self.drive_rms)
    }

    pub fn basis(&self) -> Result<BasisConfig> {
        BasisConfig::new(self.order, self.n_taps.unwrap_or(self.max_delay + 1))
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            basis: self.basis()?,
            solver: self.solver,
            payload_mode: self.payload_mode,
        })
    }

    /// Payload count whose frames also supply the pilot baseline.
    pub fn pilot_reference_p(&self) -> usize {
        1
    }
}
