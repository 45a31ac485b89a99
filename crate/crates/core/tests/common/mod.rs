#![allow(dead_code)]

use ofdm_rff::device::{transmit, ChannelRealization, NoiseSpec, TransmitterProfile};
use ofdm_rff::ofdm::{pilot_symbols, FdSymbolVector, FrameSpec, Modem};
use ofdm_rff::pipeline::FrameCapture;
use ofdm_rff::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn spec(n: usize, cp: usize, p: usize) -> FrameSpec {
    FrameSpec::new(n, cp, p).unwrap().with_drive(0.5).unwrap()
}

/// Random payload, one received frame, and the transmitted payload symbols.
pub fn frame(
    spec: &FrameSpec,
    profile: &TransmitterProfile,
    ch: &ChannelRealization,
    noise: NoiseSpec,
    seed: u64,
) -> (FrameCapture, Vec<FdSymbolVector>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let payloads: Vec<_> = (0..spec.n_payload_symbols)
        .map(|_| FdSymbolVector::random(spec.n_subcarriers, &mut rng))
        .collect();
    let tx = Modem::new(spec).build_frame(&pilot_symbols(spec), &payloads).unwrap();
    let rx = transmit(&tx, profile, ch, &noise, spec, seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    (FrameCapture::from_frame(&rx, spec).unwrap(), payloads)
}

pub fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}
