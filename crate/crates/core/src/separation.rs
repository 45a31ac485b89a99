//! Hammerstein parameter separation.
//!
//! Least squares over the orthogonalised regression matrix `Psi` gives the
//! virtual channel `h ⊗ b°` (with `b° = U^-1 b`). Its zero-delay block is
//! `h0 b°`; mapping back through `U` and normalising the first coefficient to
//! one yields the nonlinear fingerprint `b̂`. The linear taps `ĥ` follow from a
//! second least-squares fit of `d` on `Psi (I ⊗ b°)`.
//!
//! Two solvers produce the same estimate. [`Solver::Dense`] forms `Psi` and
//! factors it by QR. [`Solver::Correlation`] never forms `Psi`: every entry of
//! `Psi^H Psi` is a lagged correlation of the orthonormalised per-sample basis,
//! so the Gram matrix is assembled in `O(rows * taps * basis^2)` and solved by
//! Cholesky, which is well conditioned because `Psi` is nearly orthonormal.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{
    build_regression_matrix_with_history, compute_ortho_transform, fill_basis,
    orthogonal_regression_matrix, BasisConfig, OrthoTransform, RegressionMatrix,
};
use crate::linalg::{hpd_solve, ls_solve, ls_solve_with_r, RANK_TOLERANCE};
use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Least-squares estimate of the virtual channel, `[h0 b°, h1 b°, ..., hL b°]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KronVector {
    values: Vec<Complex64>,
    cfg: BasisConfig,
    condition_number: f64,
}

impl KronVector {
    pub fn new(values: Vec<Complex64>, cfg: BasisConfig) -> Result<Self> {
        if values.len() != cfg.n_cols() {
            return Err(Error::size("virtual channel length", cfg.n_cols(), values.len()));
        }
        Ok(KronVector {
            values,
            cfg,
            condition_number: f64::NAN,
        })
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn config(&self) -> &BasisConfig {
        &self.cfg
    }

    /// Block of tap `l`, i.e. `h_l b°`.
    pub fn block(&self, l: usize) -> &[Complex64] {
        let k = self.cfg.n_basis();
        &self.values[l * k..(l + 1) * k]
    }

    /// `(L+1) x (P+1)/2` matrix whose row `l` is block `l`; rank one when the
    /// model is exact.
    pub fn reshape(&self) -> DMatrix<Complex64> {
        let k = self.cfg.n_basis();
        DMatrix::from_row_slice(self.cfg.n_taps, k, &self.values)
    }

    /// 2-norm condition number of the regression matrix it was solved from.
    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        KronVector {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Pilot,
    Payload,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Pilot => "pilot",
            Source::Payload => "payload",
        }
    }
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Estimated nonlinear coefficients `b̂` with `b̂[0] = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Fingerprint {
    pub b_hat: Vec<Complex64>,
    pub source: Source,
    pub condition_number: f64,
}

impl Fingerprint {
    /// The `b3` coefficient, if present.
    pub fn b3(&self) -> Option<Complex64> {
        self.b_hat.get(1).copied()
    }
}

/// Estimated FIR taps `ĥ`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearEstimate {
    pub h_hat: Vec<Complex64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// Householder QR of the explicit regression matrix.
    #[default]
    Dense,
    /// Cholesky on the lag-correlation Gram matrix.
    Correlation,
}

fn condition_from_triangular(r: &DMatrix<Complex64>) -> f64 {
    let s = crate::linalg::singular_values(r);
    s[0] / s[s.len() - 1]
}

/// `ĥ_b° = argmin ||Psi w - d||`.
pub fn estimate_kron_vector(psi: &RegressionMatrix, d: &[Complex64]) -> Result<KronVector> {
    let (values, r) = ls_solve_with_r(psi.entries(), d)?;
    Ok(KronVector {
        values,
        cfg: *psi.config(),
        condition_number: condition_from_triangular(&r),
    })
}

/// `b̂ = U (h0 b°) / [U (h0 b°)]_0`.
pub fn separate_nonlinear(
    kv: &KronVector,
    t: &OrthoTransform,
    source: Source,
) -> Result<Fingerprint> {
    let k = kv.cfg.n_basis();
    if t.dim() != k {
        return Err(Error::size("orthogonal transform dimension", k, t.dim()));
    }
    // h0 b in the conventional basis; normalising after U keeps b̂[0] = 1 exact
    let lead = t.apply(kv.block(0));
    let denom = lead[0];
    if !(denom.norm() > 1e-12 * kv.norm()) {
        return Err(Error::Degenerate(format!(
            "leading coefficient |h0 b1| = {:.3e} is numerically zero (tap 0 unobservable)",
            denom.norm()
        )));
    }
    let mut b_hat: Vec<Complex64> = lead.iter().map(|v| v / denom).collect();
    b_hat[0] = Complex64::new(1.0, 0.0);
    Ok(Fingerprint {
        b_hat,
        source,
        condition_number: kv.condition_number,
    })
}

/// `ĥ = argmin ||Psi (I ⊗ b°) h - d||` with `b° = U^-1 b̂`.
pub fn separate_linear(
    psi: &RegressionMatrix,
    fp: &Fingerprint,
    t: &OrthoTransform,
    d: &[Complex64],
) -> Result<LinearEstimate> {
    let cfg = psi.config();
    let k = cfg.n_basis();
    if fp.b_hat.len() != k {
        return Err(Error::size("fingerprint length", k, fp.b_hat.len()));
    }
    let b_o = nalgebra::DVector::from_vec(t.apply_inverse(&fp.b_hat));
    let mut collapsed = DMatrix::zeros(psi.nrows(), cfg.n_taps);
    for l in 0..cfg.n_taps {
        collapsed.set_column(l, &(psi.block(l) * &b_o));
    }
    Ok(LinearEstimate {
        h_hat: ls_solve(&collapsed, d)?,
    })
}

/// Everything produced by one separation run.
#[derive(Clone, Debug)]
pub struct Separation {
    pub linear: LinearEstimate,
    pub fingerprint: Fingerprint,
    pub kron: KronVector,
    pub transform: OrthoTransform,
}

/// Runs the separation with a chosen solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Separator {
    pub cfg: BasisConfig,
    pub solver: Solver,
}

impl Separator {
    pub fn new(cfg: BasisConfig, solver: Solver) -> Self {
        Separator { cfg, solver }
    }

    /// Separates the system mapping input `u` to output `d`. `history` holds
    /// the input samples just before `u[0]` (oldest first); anything older is
    /// taken as zero. Output rows cover `u` only.
    pub fn run(
        &self,
        history: &[Complex64],
        u: &[Complex64],
        d: &[Complex64],
        source: Source,
    ) -> Result<Separation> {
        self.cfg.validate()?;
        if u.len() != d.len() {
            return Err(Error::size("output length (= input length)", u.len(), d.len()));
        }
        if u.len() <= self.cfg.n_cols() {
            return Err(Error::size(
                "regression length (> taps x basis)",
                self.cfg.n_cols() + 1,
                u.len(),
            ));
        }
        match self.solver {
            Solver::Dense => self.run_dense(history, u, d, source),
            Solver::Correlation => self.run_correlation(history, u, d, source),
        }
    }

    fn run_dense(
        &self,
        history: &[Complex64],
        u: &[Complex64],
        d: &[Complex64],
        source: Source,
    ) -> Result<Separation> {
        let phi = build_regression_matrix_with_history(history, u, &self.cfg)?;
        let t = compute_ortho_transform(u, &self.cfg)?;
        let psi = orthogonal_regression_matrix(&phi, &t)?;
        let kron = estimate_kron_vector(&psi, d)?;
        let fingerprint = separate_nonlinear(&kron, &t, source)?;
        let linear = separate_linear(&psi, &fingerprint, &t, d)?;
        Ok(Separation {
            linear,
            fingerprint,
            kron,
            transform: t,
        })
    }

    fn run_correlation(
        &self,
        history: &[Complex64],
        u: &[Complex64],
        d: &[Complex64],
        source: Source,
    ) -> Result<Separation> {
        let cfg = &self.cfg;
        let k = cfg.n_basis();
        let taps = cfg.n_taps;
        let t = moment_transform(u, k)?;

        let ext = extended_record(history, u, cfg.max_delay());
        let psi = RadialBasis::orthonormal(&ext, &t);
        let gram = psi.lagged_gram(taps, u.len());
        let rhs = psi.lagged_rhs(taps, d);
        let condition_number = condition_from_gram(&gram, cfg.n_cols())?;
        let values = hpd_solve(gram, &rhs)?;
        let kron = KronVector {
            values,
            cfg: *cfg,
            condition_number,
        };
        let fingerprint = separate_nonlinear(&kron, &t, source)?;

        // Psi_l b° = Phi_l b̂: the collapsed columns are delayed copies of the
        // fitted nonlinearity output.
        let mut basis = vec![ZERO; k];
        let s: Vec<Complex64> = ext
            .iter()
            .map(|&v| {
                fill_basis(v, &mut basis);
                basis.iter().zip(&fingerprint.b_hat).map(|(p, b)| p * b).sum()
            })
            .collect();
        let s = RadialBasis::scalar(s);
        let lin_gram = s.lagged_gram(taps, u.len());
        condition_from_gram(&lin_gram, taps)?;
        let lin_rhs = s.lagged_rhs(taps, d);
        let h_hat = hpd_solve(lin_gram, &lin_rhs)?;
        Ok(Separation {
            linear: LinearEstimate { h_hat },
            fingerprint,
            kron,
            transform: t,
        })
    }
}

/// `U` from the Cholesky factor of the zero-delay Gram `Phi0^H Phi0`, whose
/// `(j, c)` entry is the real moment `sum |u|^(2(j + c + 1))`. The factor is
/// real and equals the positive-diagonal QR factor up to rounding.
fn moment_transform(u: &[Complex64], k: usize) -> Result<OrthoTransform> {
    let mut moments = vec![0.0f64; 2 * k - 1];
    for v in u {
        let r = v.norm_sqr();
        let mut p = r;
        for m in moments.iter_mut() {
            *m += p;
            p *= r;
        }
    }
    let gram = DMatrix::from_fn(k, k, |j, c| moments[j + c]);
    let collinear = |col: usize| {
        Error::Degenerate(format!(
            "polynomial basis column {} is (nearly) collinear with lower orders; \
             constant-envelope input cannot separate polynomial orders",
            col + 1
        ))
    };
    let r = gram.clone().cholesky().ok_or_else(|| collinear(k - 1))?.l().transpose();
    for i in 0..k {
        // squared relative pivot; rounding leaves collinear columns near 1e-16
        if !(r[(i, i)].powi(2) > 1e-12 * gram[(i, i)]) {
            return Err(collinear(i));
        }
    }
    OrthoTransform::from_triangular(r.map(|x| Complex64::new(x, 0.0)))
}

/// `L` samples of (zero-padded) history followed by `u`.
fn extended_record(history: &[Complex64], u: &[Complex64], l_max: usize) -> Vec<Complex64> {
    let mut ext = Vec::with_capacity(l_max + u.len());
    let kept = &history[history.len().saturating_sub(l_max)..];
    ext.resize(l_max - kept.len(), ZERO);
    ext.extend_from_slice(kept);
    ext.extend_from_slice(u);
    ext
}

/// Per-sample basis values `v[t] * q[t][j]` with real `q`. With a real `U`
/// every orthonormalised column is `u * poly_j(|u|^2)` for a real polynomial,
/// so lagged products reduce to `conj(v[t]) v[t + tau]` times real weights.
struct RadialBasis {
    v: Vec<Complex64>,
    /// Row-major, `k` per sample.
    q: Vec<f64>,
    k: usize,
}

impl RadialBasis {
    fn orthonormal(ext: &[Complex64], t: &OrthoTransform) -> Self {
        let k = t.dim();
        let u = t.matrix().map(|x| x.re);
        let mut powers = vec![0.0; k];
        let mut q = vec![0.0; ext.len() * k];
        for (v, row) in ext.iter().zip(q.chunks_exact_mut(k)) {
            let r = v.norm_sqr();
            let mut p = 1.0;
            for x in powers.iter_mut() {
                *x = p;
                p *= r;
            }
            for (c, slot) in row.iter_mut().enumerate() {
                // U is upper triangular
                *slot = (0..=c).map(|j| powers[j] * u[(j, c)]).sum();
            }
        }
        RadialBasis { v: ext.to_vec(), q, k }
    }

    fn scalar(v: Vec<Complex64>) -> Self {
        let q = vec![1.0; v.len()];
        RadialBasis { v, q, k: 1 }
    }

    fn at(&self, t: usize, j: usize) -> Complex64 {
        self.v[t] * self.q[t * self.k + j]
    }

    /// `Psi^H Psi` for columns `(l, j) -> x_j[L + n - l]`, `n in 0..rows`,
    /// with `L = taps - 1`.
    fn lagged_gram(&self, taps: usize, rows: usize) -> DMatrix<Complex64> {
        let k = self.k;
        let l_max = taps - 1;
        let len = self.v.len();
        debug_assert_eq!(len, rows + l_max);
        let kk = k * k;

        let full = self.lag_sums(taps);

        let partial = |tau: usize, range: std::ops::Range<usize>, out: &mut [Complex64]| {
            for t in range {
                for j in 0..k {
                    let aj = self.at(t, j).conj();
                    for c in 0..k {
                        out[j * k + c] += aj * self.at(t + tau, c);
                    }
                }
            }
        };

        let n = taps * k;
        let mut g = DMatrix::zeros(n, n);
        let mut edge = vec![ZERO; kk];
        for l in 0..taps {
            for m in 0..=l {
                let tau = l - m;
                // block (l, m) sums t over [L - l, L - l + rows)
                edge.iter_mut().for_each(|e| *e = ZERO);
                partial(tau, 0..l_max - l, &mut edge);
                partial(tau, l_max - l + rows..len - tau, &mut edge);
                for j in 0..k {
                    for c in 0..k {
                        let v = full[tau * kk + j * k + c] - edge[j * k + c];
                        g[(l * k + j, m * k + c)] = v;
                        g[(m * k + c, l * k + j)] = v.conj();
                    }
                }
            }
        }
        g
    }

    /// `out[tau][j*k + c] = sum_t conj(x_j[t]) x_c[t + tau]` over the whole
    /// record, for `tau < taps`. Hot loop of the correlation solver.
    fn lag_sums(&self, taps: usize) -> Vec<Complex64> {
        match self.k {
            1 => lag_sums_fixed::<1>(&self.v, self.q.as_chunks().0, taps),
            2 => lag_sums_fixed::<2>(&self.v, self.q.as_chunks().0, taps),
            3 => lag_sums_fixed::<3>(&self.v, self.q.as_chunks().0, taps),
            4 => lag_sums_fixed::<4>(&self.v, self.q.as_chunks().0, taps),
            k => lag_sums_dyn(&self.v, &self.q, k, taps),
        }
    }

    /// `Psi^H d` for the same column layout as [`Self::lagged_gram`].
    fn lagged_rhs(&self, taps: usize, d: &[Complex64]) -> Vec<Complex64> {
        match self.k {
            1 => rhs_fixed::<1>(&self.v, self.q.as_chunks().0, taps, d),
            2 => rhs_fixed::<2>(&self.v, self.q.as_chunks().0, taps, d),
            3 => rhs_fixed::<3>(&self.v, self.q.as_chunks().0, taps, d),
            4 => rhs_fixed::<4>(&self.v, self.q.as_chunks().0, taps, d),
            k => rhs_dyn(&self.v, &self.q, k, taps, d),
        }
    }
}

fn rhs_fixed<const K: usize>(v: &[Complex64], q: &[[f64; K]], taps: usize, d: &[Complex64]) -> Vec<Complex64> {
    let l_max = taps - 1;
    let mut out = Vec::with_capacity(taps * K);
    for l in 0..taps {
        let base = l_max - l;
        let (mut re, mut im) = ([0.0f64; K], [0.0f64; K]);
        for ((v, q), dn) in v[base..].iter().zip(&q[base..]).zip(d) {
            let z = v.conj() * dn;
            for j in 0..K {
                re[j] += z.re * q[j];
                im[j] += z.im * q[j];
            }
        }
        out.extend((0..K).map(|j| Complex64::new(re[j], im[j])));
    }
    out
}

fn rhs_dyn(v: &[Complex64], q: &[f64], k: usize, taps: usize, d: &[Complex64]) -> Vec<Complex64> {
    let l_max = taps - 1;
    let mut out = vec![ZERO; taps * k];
    for (l, acc) in out.chunks_exact_mut(k).enumerate() {
        let base = l_max - l;
        let rows = v[base..].iter().zip(q[base * k..].chunks_exact(k));
        for ((v, q), dn) in rows.zip(d) {
            let z = v.conj() * dn;
            for (a, qj) in acc.iter_mut().zip(q) {
                *a += z * qj;
            }
        }
    }
    out
}

fn lag_sums_fixed<const K: usize>(v: &[Complex64], q: &[[f64; K]], taps: usize) -> Vec<Complex64> {
    let len = v.len();
    let mut out = Vec::with_capacity(taps * K * K);
    for tau in 0..taps.min(len) {
        let mut sr = [[0.0f64; K]; K];
        let mut si = [[0.0f64; K]; K];
        let pairs = v[..len - tau].iter().zip(&v[tau..]).zip(q[..len - tau].iter().zip(&q[tau..]));
        for ((a, b), (qa, qb)) in pairs {
            let w = a.conj() * b;
            for j in 0..K {
                let (wr, wi) = (w.re * qa[j], w.im * qa[j]);
                for c in 0..K {
                    sr[j][c] += wr * qb[c];
                    si[j][c] += wi * qb[c];
                }
            }
        }
        for j in 0..K {
            for c in 0..K {
                out.push(Complex64::new(sr[j][c], si[j][c]));
            }
        }
    }
    out.resize(taps * K * K, ZERO);
    out
}

fn lag_sums_dyn(v: &[Complex64], q: &[f64], k: usize, taps: usize) -> Vec<Complex64> {
    let len = v.len();
    let kk = k * k;
    let mut full = vec![ZERO; taps * kk];
    for tau in 0..taps.min(len) {
        let acc = &mut full[tau * kk..(tau + 1) * kk];
        for t in 0..len - tau {
            let w = v[t].conj() * v[t + tau];
            let (qa, qb) = (&q[t * k..(t + 1) * k], &q[(t + tau) * k..(t + tau + 1) * k]);
            for (j, qj) in qa.iter().enumerate() {
                let wj = w * qj;
                for (c, qc) in qb.iter().enumerate() {
                    acc[j * k + c] += wj * qc;
                }
            }
        }
    }
    full
}

fn condition_from_gram(g: &DMatrix<Complex64>, cols: usize) -> Result<f64> {
    let eig = g.clone().symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    let rank = eig
        .iter()
        .filter(|&&e| e > (RANK_TOLERANCE * RANK_TOLERANCE) * max)
        .count();
    if rank < cols || min <= 0.0 {
        return Err(Error::Singular { rank, cols });
    }
    Ok((max / min).sqrt())
}

/// Dense separation with zero history, for a known input `u` and output `d`.
pub fn separate(
    u: &[Complex64],
    d: &[Complex64],
    cfg: &BasisConfig,
) -> Result<(LinearEstimate, Fingerprint)> {
    let s = Separator::new(*cfg, Solver::Dense).run(&[], u, d, Source::Pilot)?;
    Ok((s.linear, s.fingerprint))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_regression_matrix;
    use crate::device::{complex_gaussian, reference_profiles, TransmitterProfile};
    use crate::linalg::singular_values;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn gaussian(n: usize, seed: u64, scale: f64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| complex_gaussian(&mut rng) * scale).collect()
    }

    /// Direct Hammerstein output with zero initial state.
    fn hammerstein(u: &[Complex64], b: &[Complex64], h: &[Complex64]) -> Vec<Complex64> {
        let x0: Vec<Complex64> = u
            .iter()
            .map(|&v| b.iter().enumerate().map(|(k, bk)| bk * v * v.norm_sqr().powi(k as i32)).sum())
            .collect();
        (0..u.len())
            .map(|n| (0..h.len()).filter(|&l| l <= n).map(|l| h[l] * x0[n - l]).sum())
            .collect()
    }

    fn kron(h: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        h.iter().flat_map(|hl| b.iter().map(move |bk| hl * bk)).collect()
    }

    fn random_b(seed: u64) -> Vec<Complex64> {
        let mut b = gaussian(4, seed, 0.1);
        b[0] = c(1.0, 0.0);
        b
    }

    fn unit_h(taps: usize, seed: u64) -> Vec<Complex64> {
        let h = gaussian(taps, seed, 1.0);
        let norm = h.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        h.iter().map(|v| v / norm).collect()
    }

    fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn noiseless_kron_recovery_is_rank_one() {
        let cfg = BasisConfig::new(7, 5).unwrap();
        let u = gaussian(600, 1, 0.6);
        let t = compute_ortho_transform(&u, &cfg).unwrap();
        let psi = orthogonal_regression_matrix(&build_regression_matrix(&u, &cfg).unwrap(), &t).unwrap();
        let h = unit_h(5, 2);
        let truth = kron(&h, &t.apply_inverse(&random_b(3)));
        let d: Vec<_> = (psi.entries() * DVector::from_vec(truth.clone())).iter().copied().collect();
        let kv = estimate_kron_vector(&psi, &d).unwrap();
        assert!(max_err(kv.values(), &truth) < 1e-9);
        let s = singular_values(&kv.reshape());
        assert!(s[1] / s[0] < 1e-8);
    }

    #[test]
    fn nonlinear_separation_round_trip() {
        let cfg = BasisConfig::new(7, 4).unwrap();
        let u = gaussian(300, 4, 0.7);
        let t = compute_ortho_transform(&u, &cfg).unwrap();
        for seed in 0..10 {
            let b = random_b(seed);
            let h = unit_h(4, seed + 100);
            let kv = KronVector::new(kron(&h, &t.apply_inverse(&b)), cfg).unwrap();
            let fp = separate_nonlinear(&kv, &t, Source::Pilot).unwrap();
            assert!(max_err(&fp.b_hat, &b) < 1e-9);
            assert_eq!(fp.b_hat[0], c(1.0, 0.0));
            let scaled = separate_nonlinear(&kv.scaled(c(-3.0, 0.25)), &t, Source::Pilot).unwrap();
            assert!(max_err(&scaled.b_hat, &fp.b_hat) < 1e-12);
        }
        let lin = TransmitterProfile::linear("lin", 7).unwrap();
        let kv = KronVector::new(kron(&unit_h(4, 9), &t.apply_inverse(lin.coeffs())), cfg).unwrap();
        let fp = separate_nonlinear(&kv, &t, Source::Payload).unwrap();
        assert!(max_err(&fp.b_hat, lin.coeffs()) < 1e-12);
    }

    #[test]
    fn zero_leading_tap_is_degenerate() {
        let cfg = BasisConfig::new(7, 2).unwrap();
        let t = OrthoTransform::identity(4);
        let mut h = unit_h(2, 1);
        h[0] = c(0.0, 0.0);
        let kv = KronVector::new(kron(&h, &random_b(1)), cfg).unwrap();
        assert!(matches!(
            separate_nonlinear(&kv, &t, Source::Pilot),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn linear_separation_recovers_taps() {
        let cfg = BasisConfig::new(7, 6).unwrap();
        let u = gaussian(800, 10, 0.6);
        let b = random_b(11);
        let h = unit_h(6, 12);
        let d = hammerstein(&u, &b, &h);
        let (lin, fp) = separate(&u, &d, &cfg).unwrap();
        assert!(max_err(&lin.h_hat, &h) < 1e-8);
        assert!(max_err(&fp.b_hat, &b) < 1e-8);

        // rank-one left factor of the reshaped virtual channel, up to scale
        let phi = build_regression_matrix(&u, &cfg).unwrap();
        let t = compute_ortho_transform(&u, &cfg).unwrap();
        let psi = orthogonal_regression_matrix(&phi, &t).unwrap();
        let kv = estimate_kron_vector(&psi, &d).unwrap();
        let svd = kv.reshape().svd(true, false);
        let (imax, _) = svd.singular_values.argmax();
        let left: Vec<_> = svd.u.unwrap().column(imax).iter().copied().collect();
        let scale = lin.h_hat[0] / left[0];
        let aligned: Vec<_> = left.iter().map(|v| v * scale).collect();
        assert!(max_err(&aligned, &lin.h_hat) < 1e-6);
    }

    #[test]
    fn scalar_regression_when_single_tap() {
        let cfg = BasisConfig::new(7, 1).unwrap();
        let u = gaussian(100, 13, 1.0);
        let d: Vec<_> = u.iter().map(|v| v * c(0.3, -0.4)).collect();
        let s = Separator::new(cfg, Solver::Dense).run(&[], &u, &d, Source::Pilot).unwrap();
        let gain = u.iter().zip(&d).map(|(a, b)| a.conj() * b).sum::<Complex64>()
            / u.iter().map(|a| a.norm_sqr()).sum::<f64>();
        assert!((s.linear.h_hat[0] - gain).norm() < 1e-10);
        assert!(max_err(&s.fingerprint.b_hat, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]) < 1e-10);
    }

    #[test]
    fn identity_system_separates_to_identity() {
        let cfg = BasisConfig::new(7, 9).unwrap();
        let u = gaussian(500, 14, 0.5);
        for solver in [Solver::Dense, Solver::Correlation] {
            let s = Separator::new(cfg, solver).run(&[], &u, &u, Source::Pilot).unwrap();
            let mut h = vec![c(0.0, 0.0); 9];
            h[0] = c(1.0, 0.0);
            assert!(max_err(&s.linear.h_hat, &h) < 1e-8);
            assert!(max_err(&s.fingerprint.b_hat, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]) < 1e-8);
        }
    }

    #[test]
    fn correlation_solver_matches_dense() {
        let cfg = BasisConfig::new(7, 9).unwrap();
        for seed in 0..4 {
            let hist = gaussian(8, seed + 50, 0.5);
            let u = gaussian(700, seed + 60, 0.5);
            let full: Vec<_> = hist.iter().chain(&u).copied().collect();
            let b = reference_profiles()[seed as usize % 2].coeffs().to_vec();
            let h = unit_h(9, seed + 70);
            let mut d = hammerstein(&full, &b, &h).split_off(8);
            let noise = gaussian(700, seed + 80, 0.01);
            d.iter_mut().zip(&noise).for_each(|(a, n)| *a += n);
            let dense = Separator::new(cfg, Solver::Dense).run(&hist, &u, &d, Source::Pilot).unwrap();
            let corr = Separator::new(cfg, Solver::Correlation).run(&hist, &u, &d, Source::Pilot).unwrap();
            assert!(max_err(dense.kron.values(), corr.kron.values()) < 1e-9);
            assert!(max_err(&dense.fingerprint.b_hat, &corr.fingerprint.b_hat) < 1e-9);
            assert!(max_err(&dense.linear.h_hat, &corr.linear.h_hat) < 1e-9);
            let rel = (dense.kron.condition_number() / corr.kron.condition_number() - 1.0).abs();
            assert!(rel < 1e-6);
        }
    }

    #[test]
    fn short_history_is_zero_padded() {
        let cfg = BasisConfig::new(5, 4).unwrap();
        let hist = gaussian(1, 90, 0.5);
        let u = gaussian(200, 91, 0.5);
        let d = gaussian(200, 92, 0.5);
        let dense = Separator::new(cfg, Solver::Dense).run(&hist, &u, &d, Source::Pilot).unwrap();
        let corr = Separator::new(cfg, Solver::Correlation).run(&hist, &u, &d, Source::Pilot).unwrap();
        assert!(max_err(dense.kron.values(), corr.kron.values()) < 1e-9);
    }

    #[test]
    fn moment_transform_matches_qr() {
        let cfg = BasisConfig::new(7, 1).unwrap();
        let u = gaussian(2048, 7, 0.5);
        let qr = compute_ortho_transform(&u, &cfg).unwrap();
        let mom = moment_transform(&u, 4).unwrap();
        let scale = qr.matrix().iter().map(|v| v.norm()).fold(0.0, f64::max);
        let diff = (qr.matrix() - mom.matrix()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(diff / scale < 1e-9, "{diff} vs {scale}");

        let constant: Vec<_> = (0..64).map(|i| Complex64::from_polar(0.5, i as f64)).collect();
        assert!(matches!(moment_transform(&constant, 2), Err(Error::Degenerate(_))));
    }

    #[test]
    fn wide_basis_matches_dense() {
        // five basis functions take the generic lag-sum kernel
        let cfg = BasisConfig::new(9, 3).unwrap();
        let hist = gaussian(2, 30, 0.5);
        let u = gaussian(400, 31, 0.5);
        let d = gaussian(400, 32, 0.5);
        let dense = Separator::new(cfg, Solver::Dense).run(&hist, &u, &d, Source::Pilot).unwrap();
        let corr = Separator::new(cfg, Solver::Correlation).run(&hist, &u, &d, Source::Pilot).unwrap();
        let scale = dense.kron.norm();
        assert!(max_err(dense.kron.values(), corr.kron.values()) < 1e-9 * scale.max(1.0));
        assert!(max_err(&dense.linear.h_hat, &corr.linear.h_hat) < 1e-8);
    }

    #[test]
    fn length_checks() {
        let cfg = BasisConfig::new(7, 9).unwrap();
        let u = gaussian(30, 1, 1.0);
        assert!(separate(&u, &u, &cfg).is_err());
        let u = gaussian(100, 1, 1.0);
        assert!(separate(&u, &u[..99], &cfg).is_err());
    }

    #[test]
    fn noisy_estimate_is_unbiased() {
        let cfg = BasisConfig::new(3, 2).unwrap();
        let u = gaussian(400, 20, 0.8);
        let t = compute_ortho_transform(&u, &cfg).unwrap();
        let psi = orthogonal_regression_matrix(&build_regression_matrix(&u, &cfg).unwrap(), &t).unwrap();
        let truth = kron(&unit_h(2, 21), &t.apply_inverse(&[c(1.0, 0.0), c(-0.1, 0.05)]));
        let clean = psi.entries() * DVector::from_vec(truth.clone());
        let draws: Vec<Vec<Complex64>> = (0..200)
            .map(|s| {
                let noise = gaussian(400, 1000 + s, 0.3);
                let d: Vec<_> = clean.iter().zip(&noise).map(|(a, b)| a + b).collect();
                estimate_kron_vector(&psi, &d).unwrap().values().to_vec()
            })
            .collect();
        for i in 0..truth.len() {
            for part in [|z: Complex64| z.re, |z: Complex64| z.im] {
                let xs: Vec<f64> = draws.iter().map(|v| part(v[i])).collect();
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
                let se = (var / xs.len() as f64).sqrt();
                assert!((mean - part(truth[i])).abs() < 3.5 * se + 1e-12, "component {i}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn scale_ambiguity(seed in any::<u64>(), re in -2.0f64..2.0, im in -2.0f64..2.0) {
            prop_assume!(re.abs() + im.abs() > 0.1);
            let scale = c(re, im);
            let cfg = BasisConfig::new(7, 3).unwrap();
            let u = gaussian(300, seed, 0.6);
            let b = random_b(seed ^ 5);
            let h = unit_h(3, seed ^ 7);
            let hc: Vec<_> = h.iter().map(|v| v * scale).collect();
            let (lin1, fp1) = separate(&u, &hammerstein(&u, &b, &h), &cfg).unwrap();
            let (lin2, fp2) = separate(&u, &hammerstein(&u, &b, &hc), &cfg).unwrap();
            prop_assert!(max_err(&fp1.b_hat, &fp2.b_hat) < 1e-8);
            let expect: Vec<_> = lin1.h_hat.iter().map(|v| v * scale).collect();
            prop_assert!(max_err(&lin2.h_hat, &expect) < 1e-8);
        }
    }
}

