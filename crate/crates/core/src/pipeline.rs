//! Two-stage receiver: pilot-based channel estimate, one-tap equalisation and
//! hard decisions, then a second separation against the regenerated payload.

use num_complex::Complex64;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::BasisConfig;
use crate::ofdm::{pilot_symbols, qpsk_hard_decision, FdSymbolVector, FrameSpec, Modem, TimeSeries};
use crate::separation::{Fingerprint, LinearEstimate, Separator, Solver, Source};
use crate::{Error, Result};

/// How the payload symbols enter the second regression.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadMode {
    /// One regression over all payload samples.
    #[default]
    Concatenated,
    /// One regression per payload symbol, fingerprints averaged.
    PerSymbolMean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub basis: BasisConfig,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub payload_mode: PayloadMode,
}

impl PipelineConfig {
    pub fn new(basis: BasisConfig) -> Self {
        PipelineConfig {
            basis,
            solver: Solver::Dense,
            payload_mode: PayloadMode::Concatenated,
        }
    }

    pub fn with_solver(mut self, solver: Solver) -> Self {
        self.solver = solver;
        self
    }

    fn separator(&self) -> Separator {
        Separator::new(self.basis, self.solver)
    }
}

/// Received samples of one frame, split into pilot and payload parts.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameCapture {
    d_p: TimeSeries,
    d_u: TimeSeries,
    pilot_fd: FdSymbolVector,
    spec: FrameSpec,
}

impl FrameCapture {
    pub fn new(
        d_p: TimeSeries,
        d_u: TimeSeries,
        pilot_fd: FdSymbolVector,
        spec: FrameSpec,
    ) -> Result<Self> {
        spec.validate()?;
        let sym = spec.symbol_len();
        if d_p.len() != sym {
            return Err(Error::size("pilot capture length", sym, d_p.len()));
        }
        let payload = spec.n_payload_symbols * sym;
        if d_u.len() != payload {
            return Err(Error::size("payload capture length", payload, d_u.len()));
        }
        if pilot_fd.len() != spec.n_subcarriers {
            return Err(Error::size("pilot symbol length", spec.n_subcarriers, pilot_fd.len()));
        }
        Ok(FrameCapture {
            d_p,
            d_u,
            pilot_fd,
            spec,
        })
    }

    /// Splits a whole received frame, using the standard pilot for `spec`.
    pub fn from_frame(rx: &[Complex64], spec: &FrameSpec) -> Result<Self> {
        if rx.len() != spec.frame_len() {
            return Err(Error::size("received frame length", spec.frame_len(), rx.len()));
        }
        let sym = spec.symbol_len();
        FrameCapture::new(
            rx[..sym].to_vec().into(),
            rx[sym..].to_vec().into(),
            pilot_symbols(spec),
            *spec,
        )
    }

    pub fn d_p(&self) -> &TimeSeries {
        &self.d_p
    }

    pub fn d_u(&self) -> &TimeSeries {
        &self.d_u
    }

    pub fn pilot_fd(&self) -> &FdSymbolVector {
        &self.pilot_fd
    }

    pub fn spec(&self) -> &FrameSpec {
        &self.spec
    }
}

/// Equalised payload, one entry per OFDM symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct EqualizedPayload {
    /// Soft values `D / (H drive)`, on the unit-power constellation scale.
    pub u_hat_e: Vec<Vec<Complex64>>,
    pub u_hat_f: Vec<FdSymbolVector>,
}

impl EqualizedPayload {
    pub fn n_symbols(&self) -> usize {
        self.u_hat_f.len()
    }

    /// Fraction of decisions differing from `truth`.
    pub fn symbol_error_rate(&self, truth: &[FdSymbolVector]) -> f64 {
        let mut total = 0usize;
        let mut wrong = 0usize;
        for (a, b) in self.u_hat_f.iter().zip(truth) {
            total += a.len();
            wrong += a.iter().zip(b.iter()).filter(|(x, y)| x != y).count();
        }
        if total == 0 {
            0.0
        } else {
            wrong as f64 / total as f64
        }
    }

    /// Replaces a `fraction` of the decisions (chosen by `seed`) with the
    /// constellation point rotated by 90 degrees.
    pub fn with_flipped_symbols(&self, fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Config(format!("flip fraction {fraction} outside [0, 1]")));
        }
        let n_sub = self.u_hat_f.first().map_or(0, |s| s.len());
        let total = n_sub * self.u_hat_f.len();
        let count = (fraction * total as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut symbols: Vec<Vec<Complex64>> =
            self.u_hat_f.iter().map(|s| s.as_slice().to_vec()).collect();
        for i in index::sample(&mut rng, total, count) {
            let v = &mut symbols[i / n_sub][i % n_sub];
            *v *= Complex64::new(0.0, 1.0);
        }
        Ok(EqualizedPayload {
            u_hat_e: self.u_hat_e.clone(),
            u_hat_f: symbols
                .into_iter()
                .map(FdSymbolVector::from_symbols)
                .collect::<Result<_>>()?,
        })
    }
}

/// Everything the receiver extracts from one frame.
#[derive(Clone, Debug)]
pub struct FrameResult {
    pub h_pilot: LinearEstimate,
    pub b_pilot: Fingerprint,
    pub b_payload: Fingerprint,
    pub equalized: EqualizedPayload,
}

/// Receiver for one frame spec; caches the DFT plans and pilot waveform.
#[derive(Clone, Debug)]
pub struct Receiver {
    modem: Modem,
    cfg: PipelineConfig,
    pilot_fd: FdSymbolVector,
    pilot_wave: TimeSeries,
}

impl Receiver {
    pub fn new(spec: &FrameSpec, cfg: PipelineConfig) -> Result<Self> {
        spec.validate()?;
        cfg.basis.validate()?;
        let modem = Modem::new(spec);
        let pilot_fd = pilot_symbols(spec);
        let pilot_wave = modem.modulate_all([&pilot_fd])?;
        Ok(Receiver {
            modem,
            cfg,
            pilot_fd,
            pilot_wave,
        })
    }

    pub fn spec(&self) -> &FrameSpec {
        self.modem.spec()
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    fn check(&self, cap: &FrameCapture) -> Result<()> {
        if cap.spec != *self.spec() {
            return Err(Error::Config("capture frame spec differs from the receiver's".into()));
        }
        Ok(())
    }

    fn pilot_wave_for(&self, cap: &FrameCapture) -> Result<TimeSeries> {
        if cap.pilot_fd == self.pilot_fd {
            Ok(self.pilot_wave.clone())
        } else {
            self.modem.modulate_all([&cap.pilot_fd])
        }
    }

    /// Separation of the pilot symbol (silence before the frame).
    pub fn estimate_from_pilot(&self, cap: &FrameCapture) -> Result<(LinearEstimate, Fingerprint)> {
        self.check(cap)?;
        let wave = self.pilot_wave_for(cap)?;
        let s = self.cfg.separator().run(&[], &wave, &cap.d_p, Source::Pilot)?;
        Ok((s.linear, s.fingerprint))
    }

    /// `Ĥ = DFT(ĥ)` zero-padded to `N` (non-unitary, so the circular channel
    /// acts as a per-bin product).
    pub fn frequency_response(&self, h_hat: &LinearEstimate) -> Result<Vec<Complex64>> {
        let n = self.spec().n_subcarriers;
        if h_hat.h_hat.len() > n {
            return Err(Error::size("channel taps (<= subcarriers)", n, h_hat.h_hat.len()));
        }
        let mut padded = h_hat.h_hat.clone();
        padded.resize(n, Complex64::new(0.0, 0.0));
        let root_n = (n as f64).sqrt();
        Ok(self.modem.dft(&padded)?.into_iter().map(|v| v * root_n).collect())
    }

    pub fn equalize_and_demod(
        &self,
        cap: &FrameCapture,
        h_hat: &LinearEstimate,
    ) -> Result<EqualizedPayload> {
        self.check(cap)?;
        let big_h = self.frequency_response(h_hat)?;
        let peak = big_h.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if let Some((bin, v)) = big_h
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.norm() >= 1e-12 * peak) || peak == 0.0)
        {
            return Err(Error::SpectralNull {
                bin,
                magnitude: v.norm(),
            });
        }
        let drive = self.spec().drive_rms;
        let mut u_hat_e = Vec::with_capacity(self.spec().n_payload_symbols);
        let mut u_hat_f = Vec::with_capacity(self.spec().n_payload_symbols);
        for chunk in cap.d_u.chunks_exact(self.spec().symbol_len()) {
            let d = self.modem.demodulate(chunk)?;
            let soft: Vec<Complex64> = d.iter().zip(&big_h).map(|(x, h)| x / (h * drive)).collect();
            u_hat_f.push(qpsk_hard_decision(&soft));
            u_hat_e.push(soft);
        }
        Ok(EqualizedPayload { u_hat_e, u_hat_f })
    }

    /// Re-modulated decisions with cyclic prefixes, at the transmit drive.
    pub fn regenerate_reference(&self, eq: &EqualizedPayload) -> Result<TimeSeries> {
        if eq.u_hat_f.is_empty() {
            return Err(Error::Degenerate("no payload symbols to regenerate".into()));
        }
        self.modem.modulate_all(&eq.u_hat_f)
    }

    /// Second separation: regenerated payload against the received payload.
    /// The pilot waveform tail serves as the regression history.
    pub fn extract_payload_fingerprint(
        &self,
        cap: &FrameCapture,
        eq: &EqualizedPayload,
    ) -> Result<Fingerprint> {
        self.check(cap)?;
        if eq.n_symbols() != self.spec().n_payload_symbols {
            return Err(Error::size(
                "equalised payload symbols",
                self.spec().n_payload_symbols,
                eq.n_symbols(),
            ));
        }
        let reference = self.regenerate_reference(eq)?;
        let pilot = self.pilot_wave_for(cap)?;
        let sep = self.cfg.separator();
        match self.cfg.payload_mode {
            PayloadMode::Concatenated => Ok(sep
                .run(&pilot, &reference, &cap.d_u, Source::Payload)?
                .fingerprint),
            PayloadMode::PerSymbolMean => {
                let sym = self.spec().symbol_len();
                let mut acc: Vec<Complex64> = Vec::new();
                let mut cond = 0.0f64;
                let mut history: &[Complex64] = &pilot;
                for (u, d) in reference.chunks_exact(sym).zip(cap.d_u.chunks_exact(sym)) {
                    let fp = sep.run(history, u, d, Source::Payload)?.fingerprint;
                    if acc.is_empty() {
                        acc = fp.b_hat;
                    } else {
                        acc.iter_mut().zip(&fp.b_hat).for_each(|(a, b)| *a += b);
                    }
                    cond = cond.max(fp.condition_number);
                    history = u;
                }
                let n = eq.n_symbols() as f64;
                Ok(Fingerprint {
                    b_hat: acc.into_iter().map(|v| v / n).collect(),
                    source: Source::Payload,
                    condition_number: cond,
                })
            }
        }
    }

    /// Pilot estimate, equalisation and payload fingerprint of one frame.
    pub fn process(&self, cap: &FrameCapture) -> Result<FrameResult> {
        let (h_pilot, b_pilot) = self.estimate_from_pilot(cap)?;
        let equalized = self.equalize_and_demod(cap, &h_pilot)?;
        let b_payload = self.extract_payload_fingerprint(cap, &equalized)?;
        Ok(FrameResult {
            h_pilot,
            b_pilot,
            b_payload,
            equalized,
        })
    }
}

pub fn estimate_from_pilot(
    cap: &FrameCapture,
    cfg: &BasisConfig,
) -> Result<(LinearEstimate, Fingerprint)> {
    Receiver::new(cap.spec(), PipelineConfig::new(*cfg))?.estimate_from_pilot(cap)
}

pub fn equalize_and_demod(cap: &FrameCapture, h_hat: &LinearEstimate) -> Result<EqualizedPayload> {
    let cfg = BasisConfig::new(1, h_hat.h_hat.len().max(1))?;
    Receiver::new(cap.spec(), PipelineConfig::new(cfg))?.equalize_and_demod(cap, h_hat)
}

pub fn regenerate_reference(eq: &EqualizedPayload, spec: &FrameSpec) -> Result<TimeSeries> {
    if eq.u_hat_f.is_empty() {
        return Err(Error::Degenerate("no payload symbols to regenerate".into()));
    }
    Modem::new(spec).modulate_all(&eq.u_hat_f)
}

pub fn extract_payload_fingerprint(
    cap: &FrameCapture,
    eq: &EqualizedPayload,
    cfg: &BasisConfig,
) -> Result<Fingerprint> {
    Receiver::new(cap.spec(), PipelineConfig::new(*cfg))?.extract_payload_fingerprint(cap, eq)
}

/// `(Re b̂3, Im b̂3)`.
pub fn feature_from_fingerprint(fp: &Fingerprint) -> Result<(f64, f64)> {
    let b3 = fp
        .b3()
        .ok_or_else(|| Error::size("fingerprint length (>= 2)", 2, fp.b_hat.len()))?;
    Ok((b3.re, b3.im))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{
        draw_rayleigh_channel, reference_profiles, transmit, ChannelRealization, NoiseSpec,
        TransmitterProfile,
    };
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn small_spec(p: usize) -> FrameSpec {
        FrameSpec::new(256, 64, p).unwrap().with_drive(0.5).unwrap()
    }

    fn frame(
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
        let rx = transmit(&tx, profile, ch, &noise, spec, seed ^ 0xabc);
        (FrameCapture::from_frame(&rx, spec).unwrap(), payloads)
    }

    fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    fn cfg() -> PipelineConfig {
        PipelineConfig::new(BasisConfig::new(7, 9).unwrap())
    }

    #[test]
    fn capture_length_checks() {
        let spec = small_spec(2);
        assert!(FrameCapture::from_frame(&vec![c(0.0, 0.0); 100], &spec).is_err());
        assert!(FrameCapture::new(
            TimeSeries::zeros(320),
            TimeSeries::zeros(320),
            pilot_symbols(&spec),
            spec
        )
        .is_err());
    }

    #[test]
    fn noiseless_pilot_recovers_channel() {
        let spec = small_spec(1);
        let rx = Receiver::new(&spec, cfg()).unwrap();
        for (i, prof) in reference_profiles().iter().enumerate() {
            let ch = draw_rayleigh_channel(40 + i as u64, 8, 5).unwrap();
            let (cap, _) = frame(&spec, prof, &ch, NoiseSpec::noiseless(), 3);
            let (h, b) = rx.estimate_from_pilot(&cap).unwrap();
            assert!(max_err(&h.h_hat, ch.taps()) < 1e-6);
            assert!(max_err(&b.b_hat, prof.coeffs()) < 1e-6);
            assert_eq!(b.source, Source::Pilot);
        }
    }

    #[test]
    fn identity_device_and_channel() {
        let spec = small_spec(1);
        let lin = TransmitterProfile::linear("lin", 7).unwrap();
        let (cap, truth) = frame(&spec, &lin, &ChannelRealization::identity(), NoiseSpec::noiseless(), 5);
        let res = Receiver::new(&spec, cfg()).unwrap().process(&cap).unwrap();
        assert!(max_err(&res.b_pilot.b_hat, lin.coeffs()) < 1e-9);
        assert!(max_err(&res.b_payload.b_hat, lin.coeffs()) < 1e-9);
        assert_eq!(res.equalized.symbol_error_rate(&truth), 0.0);
    }

    #[test]
    fn unit_channel_passes_through() {
        let spec = small_spec(1);
        let rx = Receiver::new(&spec, cfg()).unwrap();
        let lin = TransmitterProfile::linear("lin", 7).unwrap();
        let (cap, _) = frame(&spec, &lin, &ChannelRealization::identity(), NoiseSpec::noiseless(), 6);
        let mut h = vec![c(0.0, 0.0); 9];
        h[0] = c(1.0, 0.0);
        let eq = rx.equalize_and_demod(&cap, &LinearEstimate { h_hat: h }).unwrap();
        let d = Modem::new(&spec).demodulate(cap.d_u()).unwrap();
        let scaled: Vec<_> = d.iter().map(|v| v / spec.drive_rms).collect();
        assert!(max_err(&eq.u_hat_e[0], &scaled) < 1e-12);
    }

    #[test]
    fn exact_channel_linear_device_zero_errors() {
        let spec = small_spec(4);
        let rx = Receiver::new(&spec, cfg()).unwrap();
        let lin = TransmitterProfile::linear("lin", 7).unwrap();
        let ch = draw_rayleigh_channel(7, 8, 5).unwrap();
        let (cap, truth) = frame(&spec, &lin, &ch, NoiseSpec::noiseless(), 7);
        let eq = rx
            .equalize_and_demod(&cap, &LinearEstimate { h_hat: ch.taps().to_vec() })
            .unwrap();
        assert_eq!(eq.symbol_error_rate(&truth), 0.0);
        for (soft, t) in eq.u_hat_e.iter().zip(&truth) {
            assert!(max_err(soft, t) < 1e-9);
        }
    }

    #[test]
    fn spectral_null_is_reported() {
        let spec = small_spec(1);
        let rx = Receiver::new(&spec, cfg()).unwrap();
        let (cap, _) = frame(
            &spec,
            &reference_profiles()[0],
            &ChannelRealization::identity(),
            NoiseSpec::noiseless(),
            8,
        );
        // h = [1, 1] has a zero at the Nyquist bin
        let h = LinearEstimate {
            h_hat: vec![c(1.0, 0.0), c(1.0, 0.0)],
        };
        match rx.equalize_and_demod(&cap, &h) {
            Err(Error::SpectralNull { bin, .. }) => assert_eq!(bin, 128),
            other => panic!("expected spectral null, got {other:?}"),
        }
    }

    #[test]
    fn regenerated_reference_matches_transmitter() {
        let spec = small_spec(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let payloads: Vec<_> = (0..3).map(|_| FdSymbolVector::random(256, &mut rng)).collect();
        let eq = EqualizedPayload {
            u_hat_e: payloads.iter().map(|p| p.as_slice().to_vec()).collect(),
            u_hat_f: payloads.clone(),
        };
        let reference = regenerate_reference(&eq, &spec).unwrap();
        let tx = Modem::new(&spec).build_frame(&pilot_symbols(&spec), &payloads).unwrap();
        assert_eq!(reference.len(), 3 * 320);
        assert!(max_err(&reference, &tx[320..]) < 1e-15);
        let empty = EqualizedPayload {
            u_hat_e: vec![],
            u_hat_f: vec![],
        };
        assert!(regenerate_reference(&empty, &spec).is_err());
    }

    #[test]
    fn payload_fingerprint_noiseless_round_trip() {
        let spec = small_spec(2);
        for solver in [Solver::Dense, Solver::Correlation] {
            for mode in [PayloadMode::Concatenated, PayloadMode::PerSymbolMean] {
                let mut pc = cfg().with_solver(solver);
                pc.payload_mode = mode;
                let rx = Receiver::new(&spec, pc).unwrap();
                let prof = &reference_profiles()[0];
                let ch = draw_rayleigh_channel(11, 8, 5).unwrap();
                let (cap, truth) = frame(&spec, prof, &ch, NoiseSpec::noiseless(), 11);
                let res = rx.process(&cap).unwrap();
                assert_eq!(res.equalized.symbol_error_rate(&truth), 0.0);
                assert!(max_err(&res.b_payload.b_hat, prof.coeffs()) < 1e-5, "{solver:?} {mode:?}");
                assert_eq!(res.b_payload.source, Source::Payload);
            }
        }
    }

    #[test]
    fn flipping_changes_requested_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let syms: Vec<_> = (0..2).map(|_| FdSymbolVector::random(100, &mut rng)).collect();
        let eq = EqualizedPayload {
            u_hat_e: syms.iter().map(|p| p.as_slice().to_vec()).collect(),
            u_hat_f: syms.clone(),
        };
        let flipped = eq.with_flipped_symbols(0.1, 1).unwrap();
        assert!((flipped.symbol_error_rate(&syms) - 0.1).abs() < 1e-12);
        assert_eq!(eq.with_flipped_symbols(0.0, 1).unwrap(), eq);
        assert!(eq.with_flipped_symbols(1.5, 1).is_err());
    }

    #[test]
    fn feature_extraction() {
        let fp = |b: Vec<Complex64>| Fingerprint {
            b_hat: b,
            source: Source::Pilot,
            condition_number: 1.0,
        };
        let t = reference_profiles();
        assert_eq!(feature_from_fingerprint(&fp(t[0].coeffs().to_vec())).unwrap(), (-0.0735, -0.0114));
        assert_eq!(feature_from_fingerprint(&fp(t[1].coeffs().to_vec())).unwrap(), (-0.0910, 0.1580));
        assert_eq!(
            feature_from_fingerprint(&fp(vec![c(1.0, 0.0), c(0.0, 0.0)])).unwrap(),
            (0.0, 0.0)
        );
        assert!(feature_from_fingerprint(&fp(vec![c(1.0, 0.0)])).is_err());
    }
}
