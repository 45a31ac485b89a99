//! Browser front end. Each export returns a JSON string that `www/main.js`
//! draws on a canvas; the plain-Rust functions behind them are tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ofdm_rff::device::reference_profiles;
use ofdm_rff::harness::{Cell, ExperimentConfig, SeedPath, Simulator};
use ofdm_rff::ofdm::{pilot_symbols, FrameSpec};
use ofdm_rff::pipeline::{FrameCapture, PipelineConfig, Receiver};
use ofdm_rff::{Complex64, Result};

#[derive(Debug, Serialize)]
pub struct ScatterPoint {
    pub device: String,
    pub source: &'static str,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Serialize)]
pub struct Scatter {
    pub points: Vec<ScatterPoint>,
    pub truth: Vec<(String, f64, f64)>,
    pub acc_payload: f64,
    pub acc_pilot: f64,
    pub separability_payload: f64,
    pub separability_pilot: f64,
    pub skips: u64,
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub device: String,
    pub amplitude_in: Vec<f64>,
    pub amplitude_out: Vec<f64>,
    pub phase_deg: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Constellation {
    pub soft: Vec<[f64; 2]>,
    pub symbol_error_rate: f64,
    pub b_payload: Vec<[f64; 2]>,
    pub b_pilot: Vec<[f64; 2]>,
    pub channel: Vec<[f64; 2]>,
    pub channel_estimate: Vec<[f64; 2]>,
}

fn pairs(v: &[Complex64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn demo_config(frames_per_device: usize, seed: u64, drive: f64, p: usize) -> ExperimentConfig {
    let frames = frames_per_device.max(4);
    ExperimentConfig {
        payload_counts: vec![p.max(1)],
        n_trials: 1,
        samples_per_device: frames,
        n_train: frames / 2,
        drive_rms: drive,
        master_seed: seed,
        ..ExperimentConfig::default()
    }
}

/// `b3` features of both reference transmitters from `frames_per_device`
/// frames, with a single 3-NN split.
pub fn scatter(ebn0_db: f64, p: usize, frames_per_device: usize, seed: u64, drive: f64) -> Result<Scatter> {
    let cfg = demo_config(frames_per_device, seed, drive, p);
    let truth = cfg
        .profiles
        .iter()
        .map(|prof| (prof.label().to_string(), prof.coeffs()[1].re, prof.coeffs()[1].im))
        .collect();
    let sim = Simulator::new(cfg)?;
    let out = sim.trial(Cell { ebn0_db, p: p.max(1) }, 0)?;
    let points = out
        .payload
        .iter()
        .chain(&out.pilot)
        .map(|r| ScatterPoint {
            device: r.device.clone(),
            source: r.source.as_str(),
            x: r.feature.0,
            y: r.feature.1,
        })
        .collect();
    Ok(Scatter {
        points,
        truth,
        acc_payload: out.acc_payload,
        acc_pilot: out.acc_pilot,
        separability_payload: out.sep_payload,
        separability_pilot: out.sep_pilot,
        skips: out.skips,
    })
}

/// Output amplitude and phase shift of each reference nonlinearity for input
/// amplitudes `0..=max_amplitude`.
pub fn am_curves(max_amplitude: f64, n_points: usize) -> Vec<Curve> {
    let n = n_points.max(2);
    let amps: Vec<f64> = (0..n).map(|i| max_amplitude * i as f64 / (n - 1) as f64).collect();
    reference_profiles()
        .iter()
        .map(|prof| {
            let out: Vec<Complex64> = amps.iter().map(|&a| prof.eval(Complex64::new(a, 0.0))).collect();
            Curve {
                device: prof.label().to_string(),
                amplitude_in: amps.clone(),
                amplitude_out: out.iter().map(|z| z.norm()).collect(),
                phase_deg: out.iter().map(|z| z.arg().to_degrees()).collect(),
            }
        })
        .collect()
}

/// One received frame of `device`, equalised with the pilot channel estimate.
pub fn constellation(device: usize, ebn0_db: f64, p: usize, seed: u64, drive: f64) -> Result<Constellation> {
    let cfg = demo_config(4, seed, drive, p);
    let p = p.max(1);
    let sim = Simulator::new(cfg.clone())?;
    let label = sim.profile(device)?.label().to_string();
    let path = SeedPath {
        trial: 0,
        device: &label,
        frame: 0,
        p: p as u64,
        ebn0_db,
        attempt: 0,
    };
    let frame = sim.simulate_frame(device, &path)?;
    let spec: FrameSpec = cfg.frame_spec(p)?;
    let receiver = Receiver::new(&spec, PipelineConfig::new(cfg.basis()?))?;
    let cap = FrameCapture::new(
        frame.rx[..spec.symbol_len()].to_vec().into(),
        frame.rx[spec.symbol_len()..].to_vec().into(),
        pilot_symbols(&spec),
        spec,
    )?;
    let res = receiver.process(&cap)?;
    Ok(Constellation {
        soft: pairs(&res.equalized.u_hat_e[0]),
        symbol_error_rate: res.equalized.symbol_error_rate(&frame.payloads),
        b_payload: pairs(&res.b_payload.b_hat),
        b_pilot: pairs(&res.b_pilot.b_hat),
        channel: pairs(frame.channel.taps()),
        channel_estimate: pairs(&res.h_pilot.h_hat),
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn feature_scatter(ebn0_db: f64, p: usize, frames_per_device: usize, seed: u64, drive: f64) -> std::result::Result<String, JsError> {
    to_js(scatter(ebn0_db, p, frames_per_device, seed, drive))
}

#[wasm_bindgen]
pub fn nonlinearity_curves(max_amplitude: f64, n_points: usize) -> std::result::Result<String, JsError> {
    to_js(Ok(am_curves(max_amplitude, n_points)))
}

#[wasm_bindgen]
pub fn equalized_constellation(device: usize, ebn0_db: f64, p: usize, seed: u64, drive: f64) -> std::result::Result<String, JsError> {
    to_js(constellation(device, ebn0_db, p, seed, drive))
}
