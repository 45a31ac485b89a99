//! Transmitter and propagation model.
//!
//! A transmitter is a memoryless odd-order polynomial `sum_k b_{2k+1} u |u|^{2k}`
//! with `b1 = 1`. Its memory and the multipath channel are lumped into one
//! random FIR filter, and white Gaussian noise is added at a given Eb/N0.

use num_complex::Complex64;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ofdm::{mean_power, FrameSpec, TimeSeries};
use crate::{Error, Result};

/// Static nonlinear coefficients `[b1, b3, ..., bP]` of one device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileRepr", into = "ProfileRepr")]
pub struct TransmitterProfile {
    label: String,
    coeffs: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct ProfileRepr {
    label: String,
    coeffs: Vec<[f64; 2]>,
}

impl TryFrom<ProfileRepr> for TransmitterProfile {
    type Error = Error;

    fn try_from(r: ProfileRepr) -> Result<Self> {
        TransmitterProfile::new(
            r.label,
            r.coeffs.iter().map(|c| Complex64::new(c[0], c[1])).collect(),
        )
    }
}

impl From<TransmitterProfile> for ProfileRepr {
    fn from(p: TransmitterProfile) -> Self {
        ProfileRepr {
            label: p.label,
            coeffs: p.coeffs.iter().map(|c| [c.re, c.im]).collect(),
        }
    }
}

impl TransmitterProfile {
    pub fn new(label: impl Into<String>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Config("transmitter needs at least b1".into()));
        }
        if (coeffs[0] - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(Error::Config(format!(
                "b1 must equal 1, got {}",
                coeffs[0]
            )));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Config("non-finite transmitter coefficient".into()));
        }
        Ok(TransmitterProfile {
            label: label.into(),
            coeffs,
        })
    }

    /// Linear device with `b = [1, 0, ..., 0]` of the given odd order.
    pub fn linear(label: impl Into<String>, order: usize) -> Result<Self> {
        if order % 2 == 0 {
            return Err(Error::Config(format!("order {order} must be odd")));
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); order.div_ceil(2)];
        coeffs[0] = Complex64::new(1.0, 0.0);
        Self::new(label, coeffs)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Odd polynomial order `P`.
    pub fn order(&self) -> usize {
        2 * self.coeffs.len() - 1
    }

    /// Output of the nonlinearity for one input sample.
    #[inline]
    pub fn eval(&self, u: Complex64) -> Complex64 {
        let r = u.norm_sqr();
        let mut acc = Complex64::new(0.0, 0.0);
        for b in self.coeffs.iter().rev() {
            acc = acc * r + b;
        }
        u * acc
    }
}

/// Transmitter-1 and Transmitter-2 nonlinearities (order 7).
pub fn reference_profiles() -> Vec<TransmitterProfile> {
    let c = Complex64::new;
    vec![
        TransmitterProfile::new(
            "tx1",
            vec![
                c(1.0, 0.0),
                c(-0.0735, -0.0114),
                c(-0.0986, 0.0590),
                c(-0.0547, -0.0055),
            ],
        )
        .expect("valid constant profile"),
        TransmitterProfile::new(
            "tx2",
            vec![
                c(1.0, 0.0),
                c(-0.0910, 0.1580),
                c(0.2503, 0.0286),
                c(0.0155, 0.0025),
            ],
        )
        .expect("valid constant profile"),
    ]
}

/// Combined FIR taps `h[0..=L]` of transmitter memory and multipath.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    taps: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn new(taps: Vec<Complex64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Config("channel needs at least one tap".into()));
        }
        Ok(ChannelRealization { taps })
    }

    pub fn identity() -> Self {
        ChannelRealization {
            taps: vec![Complex64::new(1.0, 0.0)],
        }
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    /// Channel order `L`.
    pub fn order(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn power(&self) -> f64 {
        self.taps.iter().map(|h| h.norm_sqr()).sum()
    }
}

/// Noise level as Eb/N0 in dB. `+inf` means noiseless.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub ebn0_db: f64,
}

impl NoiseSpec {
    pub fn new(ebn0_db: f64) -> Result<Self> {
        if ebn0_db.is_nan() || ebn0_db == f64::NEG_INFINITY {
            return Err(Error::Config(format!("invalid Eb/N0 {ebn0_db} dB")));
        }
        Ok(NoiseSpec { ebn0_db })
    }

    pub fn noiseless() -> Self {
        NoiseSpec {
            ebn0_db: f64::INFINITY,
        }
    }

    /// Per-sample complex noise variance for a received signal of mean power
    /// `rx_power`. Bits are counted per useful subcarrier (2 per QPSK symbol),
    /// so the cyclic prefix overhead lowers the energy per bit.
    pub fn noise_variance(&self, rx_power: f64, spec: &FrameSpec) -> f64 {
        if self.ebn0_db == f64::INFINITY {
            return 0.0;
        }
        let rho = 10f64.powf(self.ebn0_db / 10.0);
        rx_power * spec.symbol_len() as f64 / (2.0 * spec.n_subcarriers as f64 * rho)
    }
}

pub fn apply_static_nonlinearity(u: &TimeSeries, profile: &TransmitterProfile) -> TimeSeries {
    u.iter().map(|&s| profile.eval(s)).collect::<Vec<_>>().into()
}

/// Linear convolution with zero initial state, truncated to the input length.
pub fn fir_filter(x: &TimeSeries, ch: &ChannelRealization) -> TimeSeries {
    let taps = ch.taps();
    let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
    for (l, h) in taps.iter().enumerate() {
        if h.norm_sqr() == 0.0 {
            continue;
        }
        for (yn, xn) in y[l.min(x.len())..].iter_mut().zip(x.iter()) {
            *yn += h * xn;
        }
    }
    y.into()
}

/// Random multipath with tap 0 always occupied and `n_paths - 1` further delays
/// drawn without replacement from `1..=max_delay`. Occupied taps are i.i.d.
/// circular complex Gaussian, then scaled to unit total power.
pub fn draw_rayleigh_channel(
    rng_seed: u64,
    max_delay: usize,
    n_paths: usize,
) -> Result<ChannelRealization> {
    if n_paths == 0 || n_paths > max_delay + 1 {
        return Err(Error::Config(format!(
            "{n_paths} paths do not fit in delays 0..={max_delay}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut delays = vec![0usize];
    delays.extend(
        index::sample(&mut rng, max_delay, n_paths - 1)
            .into_iter()
            .map(|d| d + 1),
    );
    let mut taps = vec![Complex64::new(0.0, 0.0); max_delay + 1];
    for d in delays {
        taps[d] = complex_gaussian(&mut rng);
    }
    let norm = taps.iter().map(|h| h.norm_sqr()).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|h| *h /= norm);
    Ok(ChannelRealization { taps })
}

/// Unit-variance circular complex Gaussian sample.
pub(crate) fn complex_gaussian<R: rand::Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Adds circular white Gaussian noise with the variance implied by the
/// measured power of `x` and the Eb/N0 convention of [`NoiseSpec::noise_variance`].
pub fn add_awgn(x: &TimeSeries, noise: &NoiseSpec, spec: &FrameSpec, rng_seed: u64) -> TimeSeries {
    let variance = noise.noise_variance(mean_power(x), spec);
    if variance == 0.0 {
        return x.clone();
    }
    let sigma = variance.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    x.iter()
        .map(|s| s + complex_gaussian(&mut rng) * sigma)
        .collect::<Vec<_>>()
        .into()
}

/// Full Hammerstein chain: nonlinearity, FIR channel, AWGN.
pub fn transmit(
    frame: &TimeSeries,
    profile: &TransmitterProfile,
    ch: &ChannelRealization,
    noise: &NoiseSpec,
    spec: &FrameSpec,
    rng_seed: u64,
) -> TimeSeries {
    let clean = fir_filter(&apply_static_nonlinearity(frame, profile), ch);
    add_awgn(&clean, noise, spec, rng_seed)
}
