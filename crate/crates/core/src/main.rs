use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ofdm_rff::classifier::{evaluate_split, LabeledFeature};
use ofdm_rff::harness::plots::write_sweep_plots;
use ofdm_rff::harness::{
    ingest_iq_capture, read_fingerprints, write_fingerprints, write_iq_file, ExperimentConfig,
    FingerprintRecord, SeedPath, Simulator, Stream,
};
use ofdm_rff::ofdm::pilot_symbols;
use ofdm_rff::pipeline::Receiver;
use ofdm_rff::separation::Source;
use ofdm_rff::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "ofdm-rff", version, about = "Nonlinear RF fingerprinting of QPSK-OFDM transmitters")]
struct Cli {
    /// Experiment configuration (.toml, otherwise JSON). Defaults are built in.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one received frame and write it as an IQ file.
    Simulate {
        /// Transmitter label from the configuration.
        #[arg(long, default_value = "tx1")]
        device: String,
        /// Eb/N0 in dB; omit for a noiseless frame.
        #[arg(long)]
        ebn0: Option<f64>,
        /// Payload symbols per frame.
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        trial: u64,
        #[arg(long, default_value_t = 0)]
        frame: u64,
    },
    /// Fingerprint IQ captures; appends JSON lines to <out>/fingerprints.jsonl.
    Extract {
        /// IQ files, one frame each.
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Payload symbols per frame.
        #[arg(long, default_value_t = 1)]
        p: usize,
        /// Label stored with every record.
        #[arg(long)]
        label: Option<String>,
        /// Eb/N0 stored with every record.
        #[arg(long)]
        ebn0: Option<f64>,
    },
    /// k-NN accuracy of labelled fingerprint records.
    Classify {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = SourceArg::Payload)]
        source: SourceArg,
        /// Training samples per class; default half of the smallest class.
        #[arg(long)]
        n_train: Option<usize>,
        /// Number of random splits to average.
        #[arg(long, default_value_t = 1)]
        splits: u64,
    },
    /// Full Eb/N0 x payload sweep: results.csv, scatter and rate plots.
    Sweep {
        /// Override the number of Monte Carlo trials.
        #[arg(long)]
        trials: Option<usize>,
        /// Skip the SVG plots.
        #[arg(long)]
        no_plots: bool,
    },
    /// Print the effective configuration as JSON.
    Config,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SourceArg {
    Pilot,
    Payload,
}

impl From<SourceArg> for Source {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Pilot => Source::Pilot,
            SourceArg::Payload => Source::Payload,
        }
    }
}

#[derive(Serialize)]
struct FrameSidecar<'a> {
    device: &'a str,
    ebn0_db: Option<f64>,
    p: usize,
    n_subcarriers: usize,
    cp_len: usize,
    drive_rms: f64,
    samples: usize,
    noise_seed: u64,
    channel: Vec<[f64; 2]>,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn with_payload(mut cfg: ExperimentConfig, p: usize) -> Result<ExperimentConfig> {
    if !cfg.payload_counts.contains(&p) {
        cfg.payload_counts.push(p);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(cfg: ExperimentConfig, out: &Path, device: &str, ebn0: Option<f64>, p: usize, trial: u64, frame: u64) -> Result<()> {
    let cfg = with_payload(cfg, p)?;
    let index = cfg
        .profiles
        .iter()
        .position(|prof| prof.label() == device)
        .ok_or_else(|| Error::Config(format!("unknown device {device}")))?;
    let sim = Simulator::new(cfg)?;
    let ebn0_db = ebn0.unwrap_or(f64::INFINITY);
    let path = SeedPath {
        trial,
        device,
        frame,
        p: p as u64,
        ebn0_db,
        attempt: 0,
    };
    let frame_data = sim.simulate_frame(index, &path)?;
    std::fs::create_dir_all(out)?;
    let tag = ebn0.map_or("clean".to_string(), |e| format!("{e}dB"));
    let iq = out.join(format!("frame_{device}_{tag}_p{p}_t{trial}_f{frame}.iq"));
    write_iq_file(&iq, &frame_data.rx)?;
    let spec = sim.receiver(p)?.spec();
    let sidecar = FrameSidecar {
        device,
        ebn0_db: ebn0,
        p,
        n_subcarriers: spec.n_subcarriers,
        cp_len: spec.cp_len,
        drive_rms: spec.drive_rms,
        samples: frame_data.rx.len(),
        noise_seed: frame_data.noise_seed,
        channel: frame_data.channel.taps().iter().map(|h| [h.re, h.im]).collect(),
    };
    let meta = iq.with_extension("json");
    serde_json::to_writer_pretty(BufWriter::new(File::create(&meta)?), &sidecar)?;
    println!("{}", iq.display());
    Ok(())
}

fn extract(cfg: ExperimentConfig, out: &Path, files: &[PathBuf], p: usize, label: Option<String>, ebn0: Option<f64>) -> Result<()> {
    let spec = cfg.frame_spec(p)?;
    let receiver = Receiver::new(&spec, cfg.pipeline()?)?;
    let pilot = pilot_symbols(&spec);
    let mut records = Vec::new();
    for file in files {
        let cap = ingest_iq_capture(file, &spec, &pilot)?;
        match receiver.process(&cap) {
            Ok(res) => {
                for fp in [&res.b_payload, &res.b_pilot] {
                    records.push(FingerprintRecord::new(fp, label.clone(), ebn0, None));
                }
            }
            Err(e) => eprintln!("{}: skipped ({e})", file.display()),
        }
    }
    std::fs::create_dir_all(out)?;
    let path = out.join("fingerprints.jsonl");
    let sink = std::fs::OpenOptions::new().create(true).append(true).open(&path)?;
    write_fingerprints(BufWriter::new(sink), &records)?;
    println!("{} records -> {}", records.len(), path.display());
    Ok(())
}

fn classify(cfg: ExperimentConfig, files: &[PathBuf], source: Source, n_train: Option<usize>, splits: u64) -> Result<()> {
    let mut features = Vec::new();
    for file in files {
        for r in read_fingerprints(BufReader::new(File::open(file)?))? {
            if r.source != source {
                continue;
            }
            let (Some(label), Some((x, y))) = (r.device_label.clone(), r.b3()) else {
                continue;
            };
            features.push(LabeledFeature::new(x, y, label));
        }
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for f in &features {
        *counts.entry(f.label.as_str()).or_default() += 1;
    }
    let smallest = counts.values().copied().min().unwrap_or(0);
    let n_train = n_train.unwrap_or(smallest / 2);
    let mut accs = Vec::new();
    for s in 0..splits.max(1) {
        let seed = SeedPath {
            trial: s,
            device: source.as_str(),
            frame: 0,
            p: 0,
            ebn0_db: 0.0,
            attempt: 0,
        }
        .derive(cfg.master_seed, Stream::Split);
        accs.push(evaluate_split(&features, n_train, cfg.k, seed)?);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    for (label, n) in &counts {
        println!("{label}: {n} samples");
    }
    println!("source={source} k={} n_train={n_train} splits={} accuracy={mean:.4}", cfg.k, accs.len());
    Ok(())
}

fn sweep(mut cfg: ExperimentConfig, out: &Path, trials: Option<usize>, no_plots: bool) -> Result<()> {
    if let Some(t) = trials {
        cfg.n_trials = t;
    }
    let sim = Simulator::new(cfg)?;
    let started = std::time::Instant::now();
    let result = sim.sweep_with_progress(|done, total| {
        if done % 20 == 0 || done == total {
            eprint!("\r{done}/{total} trials");
            let _ = std::io::stderr().flush();
        }
    })?;
    eprintln!(" in {:.1} s", started.elapsed().as_secs_f64());
    std::fs::create_dir_all(out)?;
    let csv = out.join("results.csv");
    result.table.write_csv(BufWriter::new(File::create(&csv)?))?;
    std::fs::write(out.join("config.json"), sim.config().to_json())?;
    let first: Vec<FingerprintRecord> = result
        .first_trial
        .iter()
        .flat_map(|o| o.payload.iter().chain(&o.pilot))
        .map(FingerprintRecord::from_trial)
        .collect();
    write_fingerprints(BufWriter::new(File::create(out.join("fingerprints_trial0.jsonl"))?), &first)?;
    if !no_plots {
        write_sweep_plots(&out.join("plots"), &result)?;
    }
    print!("{}", result.table.to_csv_string());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Simulate { device, ebn0, p, trial, frame } => simulate(cfg, out, &device, ebn0, p, trial, frame),
        Command::Extract { files, p, label, ebn0 } => extract(cfg, out, &files, p, label, ebn0),
        Command::Classify { files, source, n_train, splits } => classify(cfg, &files, source.into(), n_train, splits),
        Command::Sweep { trials, no_plots } => sweep(cfg, out, trials, no_plots),
        Command::Config => {
            println!("{}", cfg.to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
