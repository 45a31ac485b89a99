//! Polynomial regression matrices for the Hammerstein model.
//!
//! Row `n` of delayed block `l` holds the basis `[v, v|v|^2, ..., v|v|^{P-1}]`
//! evaluated at `v = u(n - l)`, with samples before the record taken from an
//! optional history and zero beyond it. The orthogonalised matrix right-multiplies
//! every block by the same upper-triangular `U`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Polynomial order `P` (odd) and number of FIR taps `L + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub order: usize,
    pub n_taps: usize,
}

impl BasisConfig {
    pub fn new(order: usize, n_taps: usize) -> Result<Self> {
        let cfg = BasisConfig { order, n_taps };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 || self.order % 2 == 0 {
            return Err(Error::Config(format!(
                "polynomial order {} must be odd and positive",
                self.order
            )));
        }
        if self.n_taps == 0 {
            return Err(Error::Config("at least one FIR tap is required".into()));
        }
        Ok(())
    }

    /// Number of basis functions per tap, `(P + 1) / 2`.
    pub fn n_basis(&self) -> usize {
        self.order.div_ceil(2)
    }

    /// FIR order `L`.
    pub fn max_delay(&self) -> usize {
        self.n_taps - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_taps * self.n_basis()
    }
}

/// `[u, u|u|^2, ..., u|u|^{P-1}]`.
pub fn conventional_basis(u: Complex64, order: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); order.div_ceil(2)];
    fill_basis(u, &mut out);
    out
}

#[inline]
pub(crate) fn fill_basis(u: Complex64, out: &mut [Complex64]) {
    let r = u.norm_sqr();
    let mut v = u;
    for slot in out.iter_mut() {
        *slot = v;
        v *= r;
    }
}

/// Regression matrix organised as `n_taps` delayed blocks of `n_basis` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionMatrix {
    entries: DMatrix<Complex64>,
    cfg: BasisConfig,
}

impl RegressionMatrix {
    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn config(&self) -> &BasisConfig {
        &self.cfg
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    /// Columns of delayed block `l`.
    pub fn block(&self, l: usize) -> nalgebra::DMatrixView<'_, Complex64> {
        let k = self.cfg.n_basis();
        self.entries.columns(l * k, k)
    }
}

/// Conventional matrix `Phi` with zero history before the first sample.
pub fn build_regression_matrix(u: &[Complex64], cfg: &BasisConfig) -> Result<RegressionMatrix> {
    build_regression_matrix_with_history(&[], u, cfg)
}

/// Conventional matrix `Phi` for the record `u`, where `history` holds the
/// samples immediately preceding `u[0]` (oldest first). Samples older than the
/// history are zero. Rows correspond to `u` only.
pub fn build_regression_matrix_with_history(
    history: &[Complex64],
    u: &[Complex64],
    cfg: &BasisConfig,
) -> Result<RegressionMatrix> {
    cfg.validate()?;
    let l_max = cfg.max_delay();
    if u.len() <= l_max {
        return Err(Error::size("regression record length (> L)", l_max + 1, u.len()));
    }
    let k = cfg.n_basis();
    let h = history.len();
    let rows = u.len();
    let extended: Vec<Complex64> = history.iter().chain(u).copied().collect();
    let basis: Vec<Complex64> = {
        let mut b = vec![Complex64::new(0.0, 0.0); extended.len() * k];
        for (s, chunk) in extended.iter().zip(b.chunks_exact_mut(k)) {
            fill_basis(*s, chunk);
        }
        b
    };
    let mut m = DMatrix::zeros(rows, cfg.n_cols());
    for l in 0..cfg.n_taps {
        for n in 0..rows {
            // index into the extended record; negative means before the history
            let t = (h + n) as isize - l as isize;
            if t < 0 {
                continue;
            }
            let t = t as usize;
            for j in 0..k {
                m[(n, l * k + j)] = basis[t * k + j];
            }
        }
    }
    Ok(RegressionMatrix {
        entries: m,
        cfg: *cfg,
    })
}

/// Upper-triangular `U` mapping the zero-delay conventional block to
/// orthonormal columns.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthoTransform {
    u: DMatrix<Complex64>,
    u_inv: DMatrix<Complex64>,
}

impl OrthoTransform {
    /// Builds the transform from the upper-triangular factor `R`; `U = R^-1`.
    pub(crate) fn from_triangular(r: DMatrix<Complex64>) -> Result<Self> {
        let k = r.nrows();
        let u = r
            .solve_upper_triangular(&DMatrix::identity(k, k))
            .ok_or_else(|| Error::Degenerate("singular triangular factor".into()))?;
        Ok(OrthoTransform { u, u_inv: r })
    }

    pub fn identity(k: usize) -> Self {
        OrthoTransform {
            u: DMatrix::identity(k, k),
            u_inv: DMatrix::identity(k, k),
        }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.u
    }

    /// `U^-1`, the triangular factor of the zero-delay block.
    pub fn inverse(&self) -> &DMatrix<Complex64> {
        &self.u_inv
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// `U v`.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        mat_vec(&self.u, v)
    }

    /// `U^-1 v`, e.g. `b° = U^-1 b`.
    pub fn apply_inverse(&self, v: &[Complex64]) -> Vec<Complex64> {
        mat_vec(&self.u_inv, v)
    }
}

fn mat_vec(m: &DMatrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

/// Thin QR of the zero-delay conventional block of `u`, with the diagonal of
/// `R` rotated to positive reals; `U = R^-1`.
pub fn compute_ortho_transform(u: &[Complex64], cfg: &BasisConfig) -> Result<OrthoTransform> {
    cfg.validate()?;
    let k = cfg.n_basis();
    if u.len() < k {
        return Err(Error::size("samples for orthogonalisation", k, u.len()));
    }
    let mut phi0 = DMatrix::zeros(u.len(), k);
    let mut row = vec![Complex64::new(0.0, 0.0); k];
    for (n, s) in u.iter().enumerate() {
        fill_basis(*s, &mut row);
        for j in 0..k {
            phi0[(n, j)] = row[j];
        }
    }
    let col_norms: Vec<f64> = (0..k).map(|j| phi0.column(j).norm()).collect();
    let mut r = phi0.qr().r();
    for i in 0..k {
        let d = r[(i, i)];
        let rel = d.norm() / col_norms[i].max(f64::MIN_POSITIVE);
        if !(rel > 1e-9) {
            return Err(Error::Degenerate(format!(
                "polynomial basis column {} is (nearly) collinear with lower orders \
                 (relative pivot {rel:.1e}); constant-envelope input cannot separate \
                 polynomial orders",
                i + 1
            )));
        }
        let phase = d / d.norm();
        for j in i..k {
            r[(i, j)] *= phase.conj();
        }
    }
    OrthoTransform::from_triangular(r)
}

/// `Psi = Phi (I ⊗ U)`.
pub fn orthogonal_regression_matrix(
    phi: &RegressionMatrix,
    t: &OrthoTransform,
) -> Result<RegressionMatrix> {
    let k = phi.cfg.n_basis();
    if t.dim() != k {
        return Err(Error::size("orthogonal transform dimension", k, t.dim()));
    }
    let mut psi = DMatrix::zeros(phi.nrows(), phi.cfg.n_cols());
    for l in 0..phi.cfg.n_taps {
        let block = phi.block(l) * t.matrix();
        psi.columns_mut(l * k, k).copy_from(&block);
    }
    Ok(RegressionMatrix {
        entries: psi,
        cfg: phi.cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::complex_gaussian;
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

    #[test]
    fn basis_examples() {
        assert!(conventional_basis(c(0.0, 0.0), 7).iter().all(|v| v.norm() == 0.0));
        assert_eq!(
            conventional_basis(c(1.0, 1.0), 7),
            vec![c(1.0, 1.0), c(2.0, 2.0), c(4.0, 4.0), c(8.0, 8.0)]
        );
        let u = Complex64::from_polar(1.0, 0.3);
        for v in conventional_basis(u, 7) {
            assert!((v - u).norm() < 1e-15);
        }
    }

    #[test]
    fn small_regression_matrix() {
        let cfg = BasisConfig::new(3, 2).unwrap();
        let phi = build_regression_matrix(&[c(1.0, 0.0), c(2.0, 0.0)], &cfg).unwrap();
        let expected = DMatrix::from_row_slice(
            2,
            4,
            &[
                c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0),
                c(2.0, 0.0), c(8.0, 0.0), c(1.0, 0.0), c(1.0, 0.0),
            ],
        );
        assert_eq!(phi.entries(), &expected);
        assert!(build_regression_matrix(&[c(1.0, 0.0), c(2.0, 0.0)], &BasisConfig::new(3, 3).unwrap()).is_err());
    }

    #[test]
    fn zero_delay_rows_are_the_basis() {
        let cfg = BasisConfig::new(5, 1).unwrap();
        let u = gaussian(10, 1, 1.0);
        let phi = build_regression_matrix(&u, &cfg).unwrap();
        for (n, s) in u.iter().enumerate() {
            let row: Vec<_> = phi.entries().row(n).iter().copied().collect();
            assert_eq!(row, conventional_basis(*s, 5));
        }
    }

    #[test]
    fn history_fills_delayed_rows() {
        let cfg = BasisConfig::new(3, 3).unwrap();
        let hist = gaussian(2, 2, 1.0);
        let u = gaussian(6, 3, 1.0);
        let with = build_regression_matrix_with_history(&hist, &u, &cfg).unwrap();
        let full: Vec<_> = hist.iter().chain(&u).copied().collect();
        let long = build_regression_matrix(&full, &cfg).unwrap();
        assert_eq!(with.entries(), &long.entries().rows(2, 6).into_owned());
    }

    #[test]
    fn degree_one_transform_is_inverse_norm() {
        let cfg = BasisConfig::new(1, 1).unwrap();
        let u = gaussian(50, 4, 1.0);
        let t = compute_ortho_transform(&u, &cfg).unwrap();
        let norm = u.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!((t.matrix()[(0, 0)] - c(1.0 / norm, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn constant_envelope_is_rejected() {
        let cfg = BasisConfig::new(7, 1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let qpsk: Vec<_> = (0..64)
            .map(|i| c(if i % 2 == 0 { h } else { -h }, if i % 3 == 0 { h } else { -h }))
            .collect();
        let err = compute_ortho_transform(&qpsk, &cfg).unwrap_err();
        assert!(matches!(err, Error::Degenerate(ref m) if m.contains("constant-envelope")));
    }

    #[test]
    fn identity_transform_keeps_phi() {
        let cfg = BasisConfig::new(7, 3).unwrap();
        let phi = build_regression_matrix(&gaussian(20, 5, 1.0), &cfg).unwrap();
        let psi = orthogonal_regression_matrix(&phi, &OrthoTransform::identity(4)).unwrap();
        assert_eq!(psi, phi);
        assert!(orthogonal_regression_matrix(&phi, &OrthoTransform::identity(3)).is_err());
    }

    fn gram_error_from_identity(m: &DMatrix<Complex64>) -> f64 {
        let g = m.adjoint() * m;
        (g - DMatrix::identity(m.ncols(), m.ncols())).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn orthonormal_zero_delay_block() {
        for (seed, scale) in [(6, 1.0), (7, 0.5), (8, 0.1)] {
            let cfg = BasisConfig::new(7, 1).unwrap();
            let u = gaussian(2000, seed, scale);
            let t = compute_ortho_transform(&u, &cfg).unwrap();
            let phi = build_regression_matrix(&u, &cfg).unwrap();
            let psi = orthogonal_regression_matrix(&phi, &t).unwrap();
            assert!(gram_error_from_identity(psi.entries()) < 1e-10);
            for i in 0..4 {
                assert!(t.inverse()[(i, i)].im == 0.0 && t.inverse()[(i, i)].re > 0.0);
                for j in 0..i {
                    assert_eq!(t.matrix()[(i, j)], c(0.0, 0.0));
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn padding_rows_are_zero(seed in any::<u64>(), taps in 1usize..6) {
            let cfg = BasisConfig::new(5, taps).unwrap();
            let phi = build_regression_matrix(&gaussian(30, seed, 1.0), &cfg).unwrap();
            for l in 0..taps {
                let block = phi.block(l);
                for r in 0..l {
                    prop_assert!(block.row(r).iter().all(|v| v.norm() == 0.0));
                }
                // block l is block 0 shifted down by l rows
                for r in l..30 {
                    prop_assert_eq!(block.row(r).into_owned(), phi.block(0).row(r - l).into_owned());
                }
            }
        }

        #[test]
        fn representation_equivalence(seed in any::<u64>()) {
            let cfg = BasisConfig::new(7, 4).unwrap();
            let u = gaussian(200, seed, 0.6);
            let phi = build_regression_matrix(&u, &cfg).unwrap();
            let t = compute_ortho_transform(&u, &cfg).unwrap();
            let psi = orthogonal_regression_matrix(&phi, &t).unwrap();
            let h = gaussian(4, seed ^ 11, 1.0);
            let mut b = gaussian(4, seed ^ 13, 0.2);
            b[0] = c(1.0, 0.0);
            let b_o = t.apply_inverse(&b);
            let kron = |h: &[Complex64], b: &[Complex64]| {
                let v: Vec<_> = h.iter().flat_map(|hl| b.iter().map(move |bk| hl * bk)).collect();
                nalgebra::DVector::from_vec(v)
            };
            let lhs = phi.entries() * kron(&h, &b);
            let rhs = psi.entries() * kron(&h, &b_o);
            prop_assert!((&lhs - &rhs).norm() / lhs.norm() < 1e-10);
        }
    }
}
