//! QPSK mapping and CP-OFDM modulation.
//!
//! Both DFT directions are unitary (scale `1/sqrt(N)`), so the mean power of a
//! modulated symbol equals the mean power of its subcarrier values. A frame is
//! one block-type pilot symbol followed by `n_payload_symbols` payload symbols.

use std::f64::consts::FRAC_1_SQRT_2;
use std::ops::Deref;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Seed of the pseudorandom pilot symbol shared by transmitter and receiver.
pub const PILOT_SEED: u64 = 0x5049_4c4f_545f_5150;

/// OFDM dimensioning of a frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub n_subcarriers: usize,
    pub cp_len: usize,
    pub n_pilot_symbols: usize,
    pub n_payload_symbols: usize,
    /// RMS amplitude of every transmitted waveform (DAC drive level). The
    /// modulator is unitary; this factor scales its output before the
    /// transmitter nonlinearity.
    #[serde(default = "default_drive")]
    pub drive_rms: f64,
}

fn default_drive() -> f64 {
    1.0
}

impl FrameSpec {
    pub fn new(n_subcarriers: usize, cp_len: usize, n_payload_symbols: usize) -> Result<Self> {
        let spec = FrameSpec {
            n_subcarriers,
            cp_len,
            n_pilot_symbols: 1,
            n_payload_symbols,
            drive_rms: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 2048 subcarriers with a 512-sample cyclic prefix.
    pub fn standard(n_payload_symbols: usize) -> Result<Self> {
        Self::new(2048, 512, n_payload_symbols)
    }

    pub fn with_drive(mut self, drive_rms: f64) -> Result<Self> {
        self.drive_rms = drive_rms;
        self.validate()?;
        Ok(self)
    }

    pub fn with_payload_symbols(mut self, n_payload_symbols: usize) -> Result<Self> {
        self.n_payload_symbols = n_payload_symbols;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers == 0 {
            return Err(Error::Config("n_subcarriers must be positive".into()));
        }
        if self.cp_len >= self.n_subcarriers {
            return Err(Error::Config(format!(
                "cp_len {} must be smaller than n_subcarriers {}",
                self.cp_len, self.n_subcarriers
            )));
        }
        if self.n_pilot_symbols != 1 {
            return Err(Error::Config(
                "block-type pilots use exactly one pilot symbol".into(),
            ));
        }
        if self.n_payload_symbols == 0 {
            return Err(Error::Config("n_payload_symbols must be positive".into()));
        }
        if !(self.drive_rms.is_finite() && self.drive_rms > 0.0) {
            return Err(Error::Config(format!(
                "drive_rms must be positive, got {}",
                self.drive_rms
            )));
        }
        Ok(())
    }

    /// Samples in one OFDM symbol including its cyclic prefix.
    pub fn symbol_len(&self) -> usize {
        self.n_subcarriers + self.cp_len
    }

    pub fn frame_len(&self) -> usize {
        (self.n_pilot_symbols + self.n_payload_symbols) * self.symbol_len()
    }
}

/// Frequency-domain QPSK symbols on all `N` subcarriers.
#[derive(Clone, Debug, PartialEq)]
pub struct FdSymbolVector(Vec<Complex64>);

impl FdSymbolVector {
    /// Wraps values that must already lie on the QPSK alphabet.
    pub fn from_symbols(values: Vec<Complex64>) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            let on_alphabet = (v.re.abs() - FRAC_1_SQRT_2).abs() < 1e-12
                && (v.im.abs() - FRAC_1_SQRT_2).abs() < 1e-12;
            if !on_alphabet {
                return Err(Error::Degenerate(format!(
                    "symbol {i} = {v} is not a QPSK constellation point"
                )));
            }
        }
        Ok(FdSymbolVector(values))
    }

    /// Uniformly random QPSK symbols.
    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        FdSymbolVector(
            (0..n)
                .map(|_| qpsk_point(rng.random::<bool>(), rng.random::<bool>()))
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }
}

impl Deref for FdSymbolVector {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

/// Complex baseband samples in discrete time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeSeries(Vec<Complex64>);

impl TimeSeries {
    pub fn new(samples: Vec<Complex64>) -> Self {
        TimeSeries(samples)
    }

    pub fn zeros(len: usize) -> Self {
        TimeSeries(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn mean_power(&self) -> f64 {
        mean_power(&self.0)
    }

    pub fn scale(mut self, factor: f64) -> Self {
        for s in &mut self.0 {
            *s *= factor;
        }
        self
    }

    pub fn extend_from(&mut self, other: &TimeSeries) {
        self.0.extend_from_slice(&other.0);
    }
}

impl Deref for TimeSeries {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

impl FromIterator<Complex64> for TimeSeries {
    fn from_iter<I: IntoIterator<Item = Complex64>>(iter: I) -> Self {
        TimeSeries::new(iter.into_iter().collect())
    }
}

impl From<Vec<Complex64>> for TimeSeries {
    fn from(v: Vec<Complex64>) -> Self {
        TimeSeries(v)
    }
}

pub(crate) fn mean_power(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|s| s.norm_sqr()).sum::<f64>() / x.len() as f64
}

fn qpsk_point(negative_i: bool, negative_q: bool) -> Complex64 {
    let i = if negative_i { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
    let q = if negative_q { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
    Complex64::new(i, q)
}

/// Gray-coded QPSK: `00 -> (+1+i)/sqrt2`, `01 -> (-1+i)/sqrt2`,
/// `11 -> (-1-i)/sqrt2`, `10 -> (+1-i)/sqrt2`.
pub fn map_bits_to_qpsk(bits: &[u8], spec: &FrameSpec) -> Result<FdSymbolVector> {
    let expected = 2 * spec.n_subcarriers;
    if bits.len() != expected {
        return Err(Error::size("QPSK bit count", expected, bits.len()));
    }
    let symbols = bits
        .chunks_exact(2)
        .map(|pair| {
            // second bit of the pair sets the sign of I, first bit the sign of Q
            qpsk_point(pair[1] != 0, pair[0] != 0)
        })
        .collect();
    Ok(FdSymbolVector(symbols))
}

/// Nearest QPSK point per element; zero components decide as `+1`.
pub fn qpsk_hard_decision(noisy: &[Complex64]) -> FdSymbolVector {
    FdSymbolVector(
        noisy
            .iter()
            .map(|z| qpsk_point(z.re < 0.0, z.im < 0.0))
            .collect(),
    )
}

/// Pseudorandom QPSK pilot derived from [`PILOT_SEED`].
pub fn pilot_symbols(spec: &FrameSpec) -> FdSymbolVector {
    let mut rng = ChaCha8Rng::seed_from_u64(PILOT_SEED);
    FdSymbolVector::random(spec.n_subcarriers, &mut rng)
}

/// Unitary DFT pair sized for one frame spec. Cheap to clone and `Sync`.
#[derive(Clone)]
pub struct Modem {
    spec: FrameSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for Modem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Modem").field("spec", &self.spec).finish()
    }
}

impl Modem {
    pub fn new(spec: &FrameSpec) -> Self {
        let mut planner = FftPlanner::new();
        let n = spec.n_subcarriers;
        Modem {
            spec: *spec,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            scale: 1.0 / (n as f64).sqrt(),
        }
    }

    pub fn spec(&self) -> &FrameSpec {
        &self.spec
    }

    /// Unitary forward DFT of exactly `N` samples.
    pub fn dft(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.spec.n_subcarriers;
        if x.len() != n {
            return Err(Error::size("DFT input length", n, x.len()));
        }
        let mut buf = x.to_vec();
        self.forward.process(&mut buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
        Ok(buf)
    }

    /// Unitary inverse DFT followed by the cyclic prefix (unit drive).
    pub fn modulate(&self, fd: &[Complex64]) -> Result<TimeSeries> {
        let n = self.spec.n_subcarriers;
        let cp = self.spec.cp_len;
        if fd.len() != n {
            return Err(Error::size("OFDM symbol length", n, fd.len()));
        }
        let mut body = fd.to_vec();
        self.inverse.process(&mut body);
        let mut out = Vec::with_capacity(n + cp);
        out.extend(body[n - cp..].iter().map(|v| v * self.scale));
        out.extend(body.iter().map(|v| v * self.scale));
        Ok(TimeSeries(out))
    }

    /// Strips the cyclic prefix of one received symbol and applies the
    /// unitary forward DFT.
    pub fn demodulate(&self, rx: &[Complex64]) -> Result<Vec<Complex64>> {
        let len = self.spec.symbol_len();
        if rx.len() != len {
            return Err(Error::size("received OFDM symbol length", len, rx.len()));
        }
        self.dft(&rx[self.spec.cp_len..])
    }

    /// Modulates a sequence of symbols back to back and applies the drive level.
    pub fn modulate_all<'a, I>(&self, symbols: I) -> Result<TimeSeries>
    where
        I: IntoIterator<Item = &'a FdSymbolVector>,
    {
        let mut out = TimeSeries::default();
        for s in symbols {
            out.extend_from(&self.modulate(s)?);
        }
        Ok(out.scale(self.spec.drive_rms))
    }

    /// Pilot symbol followed by the payloads, scaled by the drive level.
    pub fn build_frame(
        &self,
        pilot: &FdSymbolVector,
        payloads: &[FdSymbolVector],
    ) -> Result<TimeSeries> {
        if payloads.len() != self.spec.n_payload_symbols {
            return Err(Error::size(
                "payload symbol count",
                self.spec.n_payload_symbols,
                payloads.len(),
            ));
        }
        self.modulate_all(std::iter::once(pilot).chain(payloads))
    }
}

pub fn ofdm_modulate(fd: &FdSymbolVector, spec: &FrameSpec) -> Result<TimeSeries> {
    Modem::new(spec).modulate(fd)
}

pub fn ofdm_demodulate(rx: &TimeSeries, spec: &FrameSpec) -> Result<Vec<Complex64>> {
    Modem::new(spec).demodulate(rx)
}

pub fn build_frame(
    pilot: &FdSymbolVector,
    payloads: &[FdSymbolVector],
    spec: &FrameSpec,
) -> Result<TimeSeries> {
    Modem::new(spec).build_frame(pilot, payloads)
}
