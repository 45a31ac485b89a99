//! Monte Carlo driver: frames, trials and the full Eb/N0 x payload sweep.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ChannelMode, ExperimentConfig};
use super::records::{mean_std, ResultRow, ResultsTable, TrialRecord};
use super::seeds::{SeedPath, Stream};
use crate::classifier::{evaluate_split, separability_ratio, LabeledFeature};
use crate::device::{draw_rayleigh_channel, transmit, ChannelRealization, NoiseSpec, TransmitterProfile};
use crate::ofdm::{pilot_symbols, FdSymbolVector, Modem, TimeSeries};
use crate::pipeline::{feature_from_fingerprint, FrameCapture, FrameResult, Receiver};
use crate::separation::{Fingerprint, Source};
use crate::{Error, Result};

/// One grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub ebn0_db: f64,
    pub p: usize,
}

/// A transmitted and received frame with its ground truth.
#[derive(Clone, Debug)]
pub struct SimulatedFrame {
    pub rx: TimeSeries,
    pub payloads: Vec<FdSymbolVector>,
    pub channel: ChannelRealization,
    pub noise_seed: u64,
}

/// Payload-based and pilot-based records of one frame.
#[derive(Clone, Debug)]
pub struct FrameSample {
    pub payload: TrialRecord,
    pub pilot: TrialRecord,
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub cell: Cell,
    pub trial: u64,
    pub payload: Vec<TrialRecord>,
    pub pilot: Vec<TrialRecord>,
    pub acc_payload: f64,
    pub acc_pilot: f64,
    pub sep_payload: f64,
    pub sep_pilot: f64,
    pub skips: u64,
}

/// Per-trial statistics of one CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub ebn0_db: f64,
    pub p: usize,
    pub source: Source,
    pub accuracies: Vec<f64>,
    pub separability: Vec<f64>,
    pub skips: u64,
}

impl CellSummary {
    pub fn acc_mean(&self) -> f64 {
        mean_std(&self.accuracies).0
    }

    /// Standard error of the mean accuracy.
    pub fn acc_sem(&self) -> f64 {
        mean_std(&self.accuracies).1 / (self.accuracies.len() as f64).sqrt()
    }

    pub fn separability_mean(&self) -> f64 {
        mean_std(&self.separability).0
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub table: ResultsTable,
    pub cells: Vec<CellSummary>,
    /// Records of trial 0 of every cell, for scatter plots.
    pub first_trial: Vec<TrialOutcome>,
}

impl SweepResult {
    pub fn cell(&self, ebn0_db: f64, p: usize, source: Source) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.ebn0_db == ebn0_db && c.p == p && c.source == source)
    }
}

/// Frame spec, modem and receiver for one payload count.
#[derive(Clone, Debug)]
struct FrameContext {
    modem: Modem,
    receiver: Receiver,
    pilot_fd: FdSymbolVector,
}

/// Seeded experiment runner. Cheap to share between threads.
#[derive(Clone, Debug)]
pub struct Simulator {
    cfg: ExperimentConfig,
    contexts: BTreeMap<usize, FrameContext>,
}

fn is_skippable(e: &Error) -> bool {
    matches!(
        e,
        Error::SpectralNull { .. } | Error::Degenerate(_) | Error::Singular { .. }
    )
}

impl Simulator {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let pipeline = cfg.pipeline()?;
        let mut contexts = BTreeMap::new();
        let mut counts = cfg.payload_counts.clone();
        counts.push(cfg.pilot_reference_p());
        for p in counts {
            if contexts.contains_key(&p) {
                continue;
            }
            let spec = cfg.frame_spec(p)?;
            contexts.insert(
                p,
                FrameContext {
                    modem: Modem::new(&spec),
                    receiver: Receiver::new(&spec, pipeline)?,
                    pilot_fd: pilot_symbols(&spec),
                },
            );
        }
        Ok(Simulator { cfg, contexts })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    fn context(&self, p: usize) -> Result<&FrameContext> {
        self.contexts
            .get(&p)
            .ok_or_else(|| Error::Config(format!("payload count {p} is not configured")))
    }

    pub fn receiver(&self, p: usize) -> Result<&Receiver> {
        Ok(&self.context(p)?.receiver)
    }

    pub fn profile(&self, device: usize) -> Result<&TransmitterProfile> {
        self.cfg
            .profiles
            .get(device)
            .ok_or_else(|| Error::Config(format!("no transmitter profile #{device}")))
    }

    /// Channel for a sample. Per-frame draws depend on (trial, device, frame,
    /// attempt) only, so every grid cell sees the same channels.
    pub fn channel(&self, path: &SeedPath) -> Result<ChannelRealization> {
        let key = match self.cfg.channel_mode {
            ChannelMode::PerFrame => SeedPath {
                p: 0,
                ebn0_db: 0.0,
                ..*path
            },
            ChannelMode::PerTrial => SeedPath {
                frame: 0,
                p: 0,
                ebn0_db: 0.0,
                attempt: 0,
                ..*path
            },
        };
        draw_rayleigh_channel(
            key.derive(self.cfg.master_seed, Stream::Channel),
            self.cfg.max_delay,
            self.cfg.n_paths,
        )
    }

    /// Random payload, transmission through the device and channel, AWGN.
    pub fn simulate_frame(&self, device: usize, path: &SeedPath) -> Result<SimulatedFrame> {
        let ctx = self.context(path.p as usize)?;
        let profile = self.profile(device)?;
        let spec = ctx.modem.spec();
        let channel = self.channel(path)?;
        let mut rng = ChaCha8Rng::seed_from_u64(path.derive(self.cfg.master_seed, Stream::Payload));
        let payloads: Vec<_> = (0..spec.n_payload_symbols)
            .map(|_| FdSymbolVector::random(spec.n_subcarriers, &mut rng))
            .collect();
        let tx = ctx.modem.build_frame(&ctx.pilot_fd, &payloads)?;
        let noise_seed = path.derive(self.cfg.master_seed, Stream::Noise);
        let noise = NoiseSpec::new(path.ebn0_db)?;
        let rx = transmit(&tx, profile, &channel, &noise, spec, noise_seed);
        Ok(SimulatedFrame {
            rx,
            payloads,
            channel,
            noise_seed,
        })
    }

    fn process(&self, p: usize, frame: &SimulatedFrame) -> Result<FrameResult> {
        let ctx = self.context(p)?;
        let cap = FrameCapture::from_frame(&frame.rx, ctx.modem.spec())?;
        ctx.receiver.process(&cap)
    }

    /// One frame of `device` with redraws on spectral nulls or degenerate
    /// estimates.
    pub fn frame_sample(&self, device: usize, trial: u64, frame: u64, cell: Cell) -> Result<FrameSample> {
        let profile = self.profile(device)?;
        let label = profile.label();
        for attempt in 0..=self.cfg.max_redraws as u64 {
            let path = SeedPath {
                trial,
                device: label,
                frame,
                p: cell.p as u64,
                ebn0_db: cell.ebn0_db,
                attempt,
            };
            let sim = self.simulate_frame(device, &path)?;
            match self.process(cell.p, &sim) {
                Ok(res) => {
                    let record = |fp: &Fingerprint| -> Result<TrialRecord> {
                        Ok(TrialRecord {
                            device: label.to_string(),
                            trial,
                            frame,
                            ebn0_db: cell.ebn0_db,
                            p: cell.p,
                            source: fp.source,
                            feature: feature_from_fingerprint(fp)?,
                            b_hat: fp.b_hat.clone(),
                            seed: sim.noise_seed,
                            skipped: attempt as u32,
                        })
                    };
                    return Ok(FrameSample {
                        payload: record(&res.b_payload)?,
                        pilot: record(&res.b_pilot)?,
                    });
                }
                Err(e) if is_skippable(&e) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::Degenerate(format!(
            "device {label}, trial {trial}, frame {frame}: no usable draw in {} attempts",
            self.cfg.max_redraws + 1
        )))
    }

    /// All frames of one trial for both sources, then a seeded k-NN split.
    pub fn trial(&self, cell: Cell, trial: u64) -> Result<TrialOutcome> {
        let mut payload = Vec::new();
        let mut pilot = Vec::new();
        for device in 0..self.cfg.profiles.len() {
            for frame in 0..self.cfg.samples_per_device as u64 {
                let s = self.frame_sample(device, trial, frame, cell)?;
                payload.push(s.payload);
                pilot.push(s.pilot);
            }
        }
        let skips = payload.iter().map(|r| r.skipped as u64).sum();
        let split = |source: Source| {
            SeedPath {
                trial,
                device: source.as_str(),
                frame: 0,
                p: cell.p as u64,
                ebn0_db: cell.ebn0_db,
                attempt: 0,
            }
            .derive(self.cfg.master_seed, Stream::Split)
        };
        let feats = |recs: &[TrialRecord]| -> Vec<LabeledFeature> {
            recs.iter()
                .map(|r| LabeledFeature::new(r.feature.0, r.feature.1, r.device.clone()))
                .collect()
        };
        let (fu, fp) = (feats(&payload), feats(&pilot));
        let cfg = &self.cfg;
        Ok(TrialOutcome {
            cell,
            trial,
            acc_payload: evaluate_split(&fu, cfg.n_train, cfg.k, split(Source::Payload))?,
            acc_pilot: evaluate_split(&fp, cfg.n_train, cfg.k, split(Source::Pilot))?,
            sep_payload: separability_ratio(&fu).unwrap_or(f64::NAN),
            sep_pilot: separability_ratio(&fp).unwrap_or(f64::NAN),
            payload,
            pilot,
            skips,
        })
    }

    /// Grid cells in output order: for each Eb/N0, every payload count.
    /// The pilot baseline comes from the cells at the reference payload count.
    fn jobs(&self) -> Vec<(Cell, u64)> {
        let mut counts = self.cfg.payload_counts.clone();
        if !counts.contains(&self.cfg.pilot_reference_p()) {
            counts.push(self.cfg.pilot_reference_p());
        }
        let mut jobs = Vec::new();
        for &ebn0_db in &self.cfg.ebn0_db {
            for &p in &counts {
                for t in 0..self.cfg.n_trials as u64 {
                    jobs.push((Cell { ebn0_db, p }, t));
                }
            }
        }
        jobs
    }

    pub fn sweep(&self) -> Result<SweepResult> {
        self.sweep_with_progress(|_, _| {})
    }

    /// Runs every trial of every cell (in parallel with the `parallel`
    /// feature); `progress(done, total)` is called as trials finish.
    pub fn sweep_with_progress<F>(&self, progress: F) -> Result<SweepResult>
    where
        F: Fn(usize, usize) + Sync,
    {
        let jobs = self.jobs();
        let total = jobs.len();
        let done = std::sync::atomic::AtomicUsize::new(0);
        let run = |(cell, t): &(Cell, u64)| {
            let out = self.trial(*cell, *t).map(|mut o| {
                if *t != 0 {
                    o.payload = Vec::new();
                    o.pilot = Vec::new();
                }
                o
            });
            let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            progress(n, total);
            out
        };
        #[cfg(feature = "parallel")]
        let outcomes: Vec<Result<TrialOutcome>> = {
            use rayon::prelude::*;
            jobs.par_iter().map(run).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let outcomes: Vec<Result<TrialOutcome>> = jobs.iter().map(run).collect();
        let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(self.aggregate(outcomes))
    }

    fn aggregate(&self, outcomes: Vec<TrialOutcome>) -> SweepResult {
        let ref_p = self.cfg.pilot_reference_p();
        let n_trials = self.cfg.n_trials;
        let mut cells = Vec::new();
        let mut first_trial = Vec::new();
        for &ebn0_db in &self.cfg.ebn0_db {
            let in_cell = |p: usize| {
                outcomes
                    .iter()
                    .filter(move |o| o.cell.ebn0_db == ebn0_db && o.cell.p == p)
            };
            let pilot: Vec<&TrialOutcome> = in_cell(ref_p).collect();
            cells.push(CellSummary {
                ebn0_db,
                p: 0,
                source: Source::Pilot,
                accuracies: pilot.iter().map(|o| o.acc_pilot).collect(),
                separability: pilot.iter().map(|o| o.sep_pilot).collect(),
                skips: pilot.iter().map(|o| o.skips).sum(),
            });
            for &p in &self.cfg.payload_counts {
                let group: Vec<&TrialOutcome> = in_cell(p).collect();
                cells.push(CellSummary {
                    ebn0_db,
                    p,
                    source: Source::Payload,
                    accuracies: group.iter().map(|o| o.acc_payload).collect(),
                    separability: group.iter().map(|o| o.sep_payload).collect(),
                    skips: group.iter().map(|o| o.skips).sum(),
                });
                first_trial.extend(group.iter().filter(|o| o.trial == 0).map(|o| (*o).clone()));
            }
        }
        let rows = cells
            .iter()
            .map(|c| {
                let (acc_mean, acc_std) = mean_std(&c.accuracies);
                ResultRow {
                    ebn0_db: c.ebn0_db,
                    p: c.p,
                    source: c.source,
                    acc_mean,
                    acc_std,
                    n_trials,
                    skips: c.skips,
                }
            })
            .collect();
        SweepResult {
            table: ResultsTable { rows },
            cells,
            first_trial,
        }
    }
}

pub fn run_frame_sample(
    cfg: &ExperimentConfig,
    device: usize,
    trial: u64,
    frame: u64,
    cell: Cell,
) -> Result<FrameSample> {
    Simulator::new(cfg.clone())?.frame_sample(device, trial, frame, cell)
}

pub fn run_trial(cfg: &ExperimentConfig, cell: Cell, trial: u64) -> Result<TrialOutcome> {
    Simulator::new(cfg.clone())?.trial(cell, trial)
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    Simulator::new(cfg.clone())?.sweep()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::reference_profiles;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            n_subcarriers: 256,
            cp_len: 64,
            payload_counts: vec![1, 2],
            ebn0_db: vec![5.0, 20.0],
            n_trials: 2,
            samples_per_device: 8,
            n_train: 4,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn noiseless_sample_matches_profile() {
        let cfg = small();
        let cell = Cell {
            ebn0_db: f64::INFINITY,
            p: 1,
        };
        let s = run_frame_sample(&cfg, 0, 0, 0, cell).unwrap();
        let b3 = reference_profiles()[0].coeffs()[1];
        assert!((s.payload.feature.0 - b3.re).abs() < 1e-6);
        assert!((s.payload.feature.1 - b3.im).abs() < 1e-6);
        assert!((s.pilot.feature.0 - b3.re).abs() < 1e-6);
        assert_eq!(s.payload.source, Source::Payload);
        assert_eq!(s.pilot.source, Source::Pilot);
    }

    #[test]
    fn samples_are_deterministic() {
        let sim = Simulator::new(small()).unwrap();
        let cell = Cell { ebn0_db: 5.0, p: 2 };
        let a = sim.frame_sample(1, 3, 4, cell).unwrap();
        let b = sim.frame_sample(1, 3, 4, cell).unwrap();
        assert_eq!(a.payload, b.payload);
        assert_eq!(a.pilot, b.pilot);
        let c = sim.frame_sample(1, 3, 5, cell).unwrap();
        assert_ne!(a.payload.feature, c.payload.feature);
    }

    #[test]
    fn channel_modes() {
        let sim = Simulator::new(small()).unwrap();
        let path = |frame, p| SeedPath {
            trial: 1,
            device: "tx1",
            frame,
            p,
            ebn0_db: 5.0,
            attempt: 0,
        };
        assert_eq!(sim.channel(&path(0, 1)).unwrap(), sim.channel(&path(0, 2)).unwrap());
        assert_ne!(sim.channel(&path(0, 1)).unwrap(), sim.channel(&path(1, 1)).unwrap());
        let cfg = ExperimentConfig {
            channel_mode: ChannelMode::PerTrial,
            ..small()
        };
        let sim = Simulator::new(cfg).unwrap();
        assert_eq!(sim.channel(&path(0, 1)).unwrap(), sim.channel(&path(7, 1)).unwrap());
    }

    #[test]
    fn sweep_layout() {
        let res = run_sweep(&small()).unwrap();
        assert_eq!(res.table.rows.len(), 2 * 3);
        let sources: Vec<_> = res.table.rows.iter().map(|r| (r.p, r.source)).collect();
        assert_eq!(
            sources[..3],
            [(0, Source::Pilot), (1, Source::Payload), (2, Source::Payload)]
        );
        for r in &res.table.rows {
            assert!((0.0..=1.0).contains(&r.acc_mean));
            assert_eq!(r.n_trials, 2);
        }
        // trial-0 records kept for plotting: 2 cells per Eb/N0, 16 frames each
        assert_eq!(res.first_trial.len(), 4);
        assert!(res.first_trial.iter().all(|o| o.payload.len() == 16 && o.pilot.len() == 16));
    }
}
