//! Adaptive geometric source separation.
//!
//! Each frequency bin owns an M×N demixing matrix `W(k)`; the separated
//! outputs are `y(k) = W(k) x(k)`. After every frame `W(k)` takes one
//! stochastic-gradient step on
//!
//! ```text
//!   α(k)·J1 + J2,   J1 = ‖y yᴴ − diag(y yᴴ)‖²,   J2 = ‖W A − I‖²,   α(k) = ‖x(k)‖⁻⁴
//! ```
//!
//! using instantaneous correlation estimates, so each step costs only
//! matrix-vector products. New sources start from the delay-and-sum row
//! `w_{m,i}(k) = a*_{i,m}(k) / N` (see [`SeparationState::init_column`]).

use std::fmt;

use num_complex::Complex64;

use crate::error::{config_err, validation_err, Result};
use crate::geometry::SteeringVector;
use crate::stft::SpectralFrame;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SourceId(pub String);

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SourceId {
    fn from(s: &str) -> Self {
        SourceId(s.to_owned())
    }
}

/// Small dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn mul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix shapes do not conform");
        CMatrix::from_fn(self.rows, rhs.cols, |r, c| {
            (0..self.cols).map(|i| self[(r, i)] * rhs[(i, c)]).sum()
        })
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len(), "matrix shapes do not conform");
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    /// Squared Frobenius norm, `trace(M Mᴴ)`.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn scale(&self, s: f64) -> CMatrix {
        CMatrix::from_fn(self.rows, self.cols, |r, c| self[(r, c)] * s)
    }

    pub fn sub(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix::from_fn(self.rows, self.cols, |r, c| self[(r, c)] - rhs[(r, c)])
    }

    pub fn add(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix::from_fn(self.rows, self.cols, |r, c| self[(r, c)] + rhs[(r, c)])
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

/// `E y` with `E = y yᴴ − diag(y yᴴ)`; component `m` is `y_m Σ_{i≠m} |y_i|²`.
fn cross_talk(y: &[Complex64], out: &mut [Complex64]) {
    let total: f64 = y.iter().map(|v| v.norm_sqr()).sum();
    for (o, v) in out.iter_mut().zip(y) {
        *o = v * (total - v.norm_sqr());
    }
}

/// Decorrelation cost `‖y yᴴ − diag(y yᴴ)‖²` under the instantaneous estimate.
pub fn cost_j1(y: &[Complex64]) -> f64 {
    let p: Vec<f64> = y.iter().map(|v| v.norm_sqr()).collect();
    let total: f64 = p.iter().sum();
    total * total - p.iter().map(|v| v * v).sum::<f64>()
}

/// Geometric cost `‖W A − I‖²`.
pub fn cost_j2(w: &CMatrix, a: &CMatrix) -> f64 {
    w.mul(a).sub(&CMatrix::identity(w.rows())).norm_sqr()
}

/// `4 (E y) xᴴ`, the decorrelation gradient with respect to `W*`.
///
/// Gradients here follow the convention `∂J/∂Re W + j ∂J/∂Im W`, which is
/// what a step `W − μ G` descends along.
pub fn gradient_j1(w: &CMatrix, x: &[Complex64], y: &[Complex64]) -> CMatrix {
    assert_eq!(w.cols(), x.len());
    assert_eq!(w.rows(), y.len());
    let mut ey = vec![ZERO; y.len()];
    cross_talk(y, &mut ey);
    CMatrix::from_fn(w.rows(), w.cols(), |m, n| ey[m] * x[n].conj() * 4.0)
}

/// `2 (W A − I) Aᴴ`, the geometric-constraint gradient with respect to `W*`.
pub fn gradient_j2(w: &CMatrix, a: &CMatrix) -> CMatrix {
    let err = w.mul(a).sub(&CMatrix::identity(w.rows()));
    err.mul(&a.adjoint()).scale(2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GssConfig {
    /// Adaptation rate μ.
    pub mu: f64,
    /// Bins whose input energy ‖x‖² falls below this are not adapted.
    pub energy_floor: f64,
}

impl Default for GssConfig {
    fn default() -> Self {
        Self {
            mu: 0.01,
            energy_floor: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SourceRow {
    id: SourceId,
    /// Bin-major, N weights per bin.
    weights: Vec<Complex64>,
    steering: SteeringVector,
}

/// Demixing matrices for all bins plus the steering columns of the active sources.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationState {
    cfg: GssConfig,
    num_mics: usize,
    num_bins: usize,
    rows: Vec<SourceRow>,
}

impl SeparationState {
    pub fn new(num_mics: usize, num_bins: usize, cfg: GssConfig) -> Result<Self> {
        if num_mics == 0 || num_bins == 0 {
            return config_err("separation needs at least one microphone and one bin");
        }
        if !(cfg.mu >= 0.0 && cfg.mu.is_finite()) {
            return config_err(format!("adaptation rate {} must be finite and non-negative", cfg.mu));
        }
        Ok(Self {
            cfg,
            num_mics,
            num_bins,
            rows: Vec::new(),
        })
    }

    pub fn config(&self) -> &GssConfig {
        &self.cfg
    }

    pub fn num_mics(&self) -> usize {
        self.num_mics
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn num_sources(&self) -> usize {
        self.rows.len()
    }

    pub fn source_ids(&self) -> impl Iterator<Item = &SourceId> {
        self.rows.iter().map(|r| &r.id)
    }

    pub fn position(&self, id: &SourceId) -> Option<usize> {
        self.rows.iter().position(|r| &r.id == id)
    }

    /// Weights of source `m` at bin `k`.
    pub fn weights(&self, m: usize, k: usize) -> &[Complex64] {
        &self.rows[m].weights[k * self.num_mics..(k + 1) * self.num_mics]
    }

    pub fn demixing_matrix(&self, k: usize) -> CMatrix {
        CMatrix::from_fn(self.rows.len(), self.num_mics, |m, n| self.weights(m, k)[n])
    }

    pub fn steering_matrix(&self, k: usize) -> CMatrix {
        CMatrix::from_fn(self.num_mics, self.rows.len(), |n, m| self.rows[m].steering.bin(k)[n])
    }

    /// Overwrites the weights of source `m` with the delay-and-sum
    /// initialisation `w_{m,i}(k) = a*_{i,m}(k) / N`, leaving other rows alone.
    ///
    /// The conjugate phase-aligns the mics, so `(W A)_{mm} = 1`.
    pub fn init_column(&mut self, m: usize) {
        let inv_n = 1.0 / self.num_mics as f64;
        let row = &mut self.rows[m];
        for (w, a) in row.weights.iter_mut().zip(row.steering.as_slice()) {
            *w = a.conj() * inv_n;
        }
    }

    pub fn add_source(&mut self, id: SourceId, steering: SteeringVector) -> Result<()> {
        if self.position(&id).is_some() {
            return validation_err(format!("source '{id}' is already active"));
        }
        if steering.num_mics() != self.num_mics || steering.num_bins() != self.num_bins {
            return config_err(format!(
                "steering vector is {}×{}, state expects {} mics × {} bins",
                steering.num_mics(),
                steering.num_bins(),
                self.num_mics,
                self.num_bins
            ));
        }
        self.rows.push(SourceRow {
            id,
            weights: vec![ZERO; self.num_mics * self.num_bins],
            steering,
        });
        self.init_column(self.rows.len() - 1);
        Ok(())
    }

    pub fn remove_source(&mut self, id: &SourceId) -> Result<()> {
        match self.position(id) {
            Some(m) => {
                self.rows.remove(m);
                Ok(())
            }
            None => validation_err(format!("source '{id}' is not active")),
        }
    }

    fn check_input(&self, x: &SpectralFrame) -> Result<()> {
        if x.channels() != self.num_mics || x.num_bins() != self.num_bins {
            return config_err(format!(
                "frame is {} channels × {} bins, separation expects {} × {}",
                x.channels(),
                x.num_bins(),
                self.num_mics,
                self.num_bins
            ));
        }
        Ok(())
    }

    /// `y(k) = W(k) x(k)` for every bin.
    pub fn separate(&self, x: &SpectralFrame) -> Result<SpectralFrame> {
        self.check_input(x)?;
        let n = self.num_mics;
        let mut y = SpectralFrame::zeros(x.frame_index(), self.rows.len(), self.num_bins);
        let mut xk = vec![ZERO; n];
        for k in 0..self.num_bins {
            x.gather_bin(k, &mut xk);
            for (m, row) in self.rows.iter().enumerate() {
                let w = &row.weights[k * n..(k + 1) * n];
                y.channel_mut(m)[k] = w.iter().zip(&xk).map(|(a, b)| a * b).sum();
            }
        }
        Ok(y)
    }

    /// One gradient step `W ← W − μ[α ∇J1 + ∇J2]` in every bin, given the
    /// frame's input `x` and output `y = W x`.
    ///
    /// Bins with negligible input energy, or whose step would produce
    /// non-finite weights, keep their previous weights.
    pub fn update(&mut self, x: &SpectralFrame, y: &SpectralFrame) -> Result<()> {
        self.check_input(x)?;
        let m_count = self.rows.len();
        if y.channels() != m_count || y.num_bins() != self.num_bins {
            return config_err("output frame does not match the active sources");
        }
        if m_count == 0 || self.cfg.mu == 0.0 {
            return Ok(());
        }
        let n = self.num_mics;
        let mu = self.cfg.mu;
        let mut xk = vec![ZERO; n];
        let mut yk = vec![ZERO; m_count];
        let mut ey = vec![ZERO; m_count];
        let mut err = vec![ZERO; m_count];
        let mut next = vec![ZERO; m_count * n];
        for k in 0..self.num_bins {
            x.gather_bin(k, &mut xk);
            let energy: f64 = xk.iter().map(|v| v.norm_sqr()).sum();
            if !(energy >= self.cfg.energy_floor) {
                continue;
            }
            let alpha = 1.0 / (energy * energy);
            y.gather_bin(k, &mut yk);
            cross_talk(&yk, &mut ey);
            let mut finite = true;
            for (m, row) in self.rows.iter().enumerate() {
                let w = &row.weights[k * n..(k + 1) * n];
                // Row m of W A − I.
                for (j, e) in err.iter_mut().enumerate() {
                    let a = self.rows[j].steering.bin(k);
                    *e = w.iter().zip(a).map(|(wi, ai)| wi * ai).sum();
                    if j == m {
                        *e -= 1.0;
                    }
                }
                let g1 = ey[m] * (4.0 * alpha);
                for (i, out) in next[m * n..(m + 1) * n].iter_mut().enumerate() {
                    let mut g2 = ZERO;
                    for (j, e) in err.iter().enumerate() {
                        g2 += e * self.rows[j].steering.bin(k)[i].conj();
                    }
                    *out = w[i] - (g1 * xk[i].conj() + g2 * 2.0) * mu;
                    finite &= out.re.is_finite() && out.im.is_finite();
                }
            }
            if finite {
                for (m, row) in self.rows.iter_mut().enumerate() {
                    row.weights[k * n..(k + 1) * n].copy_from_slice(&next[m * n..(m + 1) * n]);
                }
            }
        }
        Ok(())
    }

    /// Separates `x`, adapts on it, and returns the pre-update output.
    pub fn process(&mut self, x: &SpectralFrame, adapt: bool) -> Result<SpectralFrame> {
        let y = self.separate(x)?;
        if adapt {
            self.update(x, &y)?;
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{self, ArrayScene};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut ChaCha8Rng) -> Complex64 {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMatrix {
        CMatrix::from_fn(r, c, |_, _| rand_c(rng))
    }

    fn steering(delays: &[f64], frame_size: usize) -> SteeringVector {
        SteeringVector::from_delays(delays, frame_size)
    }

    fn state_with(ids: &[&str], num_mics: usize, frame_size: usize, mu: f64) -> SeparationState {
        let mut st = SeparationState::new(num_mics, frame_size / 2 + 1, GssConfig { mu, ..Default::default() }).unwrap();
        for (j, id) in ids.iter().enumerate() {
            let d: Vec<f64> = (0..num_mics).map(|i| (i as f64 - 1.5) * (j as f64 + 0.7)).collect();
            st.add_source((*id).into(), steering(&d, frame_size)).unwrap();
        }
        st
    }

    fn random_frame(rng: &mut ChaCha8Rng, channels: usize, bins: usize) -> SpectralFrame {
        SpectralFrame::from_channels(
            0,
            (0..channels).map(|_| (0..bins).map(|_| rand_c(rng)).collect()).collect(),
        )
        .unwrap()
    }

    /// Central differences of `f` along Re and Im of each entry of `w`.
    fn fd_gradient(w: &CMatrix, f: impl Fn(&CMatrix) -> f64) -> CMatrix {
        let h = 1e-6;
        CMatrix::from_fn(w.rows(), w.cols(), |r, c| {
            let bump = |delta: Complex64| {
                let mut p = w.clone();
                p[(r, c)] += delta;
                let mut q = w.clone();
                q[(r, c)] -= delta;
                (f(&p) - f(&q)) / (2.0 * h)
            };
            Complex64::new(bump(Complex64::new(h, 0.0)), bump(Complex64::new(0.0, h)))
        })
    }

    fn rel_err(a: &CMatrix, b: &CMatrix) -> f64 {
        a.sub(b).norm_sqr().sqrt() / b.norm_sqr().sqrt().max(1e-300)
    }

    #[test]
    fn identity_demixing_passes_input_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut st = SeparationState::new(3, 5, GssConfig::default()).unwrap();
        for j in 0..3 {
            st.add_source(format!("s{j}").as_str().into(), steering(&[0.0; 3], 8)).unwrap();
            for k in 0..5 {
                let row = &mut st.rows[j].weights[k * 3..k * 3 + 3];
                row.fill(ZERO);
                row[j] = Complex64::new(1.0, 0.0);
            }
        }
        let x = random_frame(&mut rng, 3, 5);
        assert_eq!(st.separate(&x).unwrap().channel(1), x.channel(1));
        let zero = SpectralFrame::zeros(0, 3, 5);
        assert!(st.separate(&zero).unwrap().channel(2).iter().all(|v| *v == ZERO));
    }

    #[test]
    fn separate_matches_matrix_vector_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut st = state_with(&["a", "b"], 4, 16, 0.01);
        for row in &mut st.rows {
            row.weights.iter_mut().for_each(|w| *w = rand_c(&mut rng));
        }
        let x = random_frame(&mut rng, 4, 9);
        let y = st.separate(&x).unwrap();
        for k in 0..9 {
            let mut xk = vec![ZERO; 4];
            x.gather_bin(k, &mut xk);
            let want = st.demixing_matrix(k).mul_vec(&xk);
            for m in 0..2 {
                assert!((y.channel(m)[k] - want[m]).norm() < 1e-14);
            }
        }
        assert!(st.separate(&random_frame(&mut rng, 3, 9)).is_err());
    }

    #[test]
    fn init_is_delay_and_sum() {
        let d = [0.3, -1.2, 4.9, 2.0, -0.5];
        let st = state_with(&[], 5, 32, 0.01);
        let mut st = st;
        st.add_source("x".into(), steering(&d, 32)).unwrap();
        for k in 0..17 {
            for (i, &di) in d.iter().enumerate() {
                let phase = 2.0 * std::f64::consts::PI * k as f64 * di / 32.0;
                let want = Complex64::new(phase.cos(), phase.sin()) / 5.0;
                assert!((st.weights(0, k)[i] - want).norm() < 1e-15);
            }
            // Unity gain towards the source.
            let gain: Complex64 = st.weights(0, k).iter().zip(st.rows[0].steering.bin(k)).map(|(w, a)| w * a).sum();
            assert!((gain - 1.0).norm() < 1e-12);
        }

        let mut single = SeparationState::new(1, 9, GssConfig::default()).unwrap();
        single.add_source("x".into(), steering(&[2.5], 16)).unwrap();
        for k in 0..9 {
            assert_eq!(single.weights(0, k)[0], single.rows[0].steering.bin(k)[0].conj());
        }

        let mut zero = SeparationState::new(8, 9, GssConfig::default()).unwrap();
        zero.add_source("x".into(), steering(&[0.0; 8], 16)).unwrap();
        assert!((0..9).all(|k| zero.weights(0, k).iter().all(|w| *w == Complex64::new(0.125, 0.0))));
    }

    #[test]
    fn duplicate_or_unknown_ids_are_rejected() {
        let mut st = state_with(&["a"], 4, 16, 0.01);
        assert!(st.add_source("a".into(), steering(&[0.0; 4], 16)).is_err());
        assert!(st.remove_source(&"zzz".into()).is_err());
        assert!(st.add_source("b".into(), steering(&[0.0; 3], 16)).is_err());
    }

    #[test]
    fn add_then_remove_restores_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut st = state_with(&["a", "b"], 4, 16, 0.05);
        let x = random_frame(&mut rng, 4, 9);
        st.process(&x, true).unwrap();
        let before = st.clone();
        st.add_source("c".into(), steering(&[1.0, 2.0, 3.0, 4.0], 16)).unwrap();
        st.remove_source(&"c".into()).unwrap();
        assert_eq!(st, before);
    }

    #[test]
    fn removing_middle_source_keeps_other_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut st = state_with(&["a", "b", "c"], 4, 16, 0.05);
        for _ in 0..5 {
            let x = random_frame(&mut rng, 4, 9);
            st.process(&x, true).unwrap();
        }
        let a = st.rows[0].weights.clone();
        let c = st.rows[2].weights.clone();
        st.remove_source(&"b".into()).unwrap();
        assert_eq!(st.num_sources(), 2);
        assert_eq!(st.rows[0].weights, a);
        assert_eq!(st.rows[1].weights, c);
    }

    #[test]
    fn single_source_or_single_active_output_has_no_cross_talk_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = rand_mat(&mut rng, 1, 4);
        let x: Vec<_> = (0..4).map(|_| rand_c(&mut rng)).collect();
        let y = w.mul_vec(&x);
        assert!(gradient_j1(&w, &x, &y).as_slice().iter().all(|v| *v == ZERO));

        let w = rand_mat(&mut rng, 3, 4);
        let y = vec![ZERO, Complex64::new(0.3, -2.0), ZERO];
        assert!(gradient_j1(&w, &x, &y).as_slice().iter().all(|v| *v == ZERO));
    }

    #[test]
    fn geometric_gradient_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // Unitary A (scaled DFT) has the easy inverse Aᴴ.
        let n = 3;
        let a = CMatrix::from_fn(n, n, |r, c| {
            Complex64::from_polar(1.0 / (n as f64).sqrt(), -2.0 * std::f64::consts::PI * (r * c) as f64 / n as f64)
        });
        let g = gradient_j2(&a.adjoint(), &a);
        assert!(g.norm_sqr() < 1e-28);

        let a = rand_mat(&mut rng, 4, 2);
        let g = gradient_j2(&CMatrix::zeros(2, 4), &a);
        assert!(g.sub(&a.adjoint().scale(-2.0)).norm_sqr() < 1e-28);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let m = rng.random_range(1..=4);
            let n = rng.random_range(1..=4);
            let w = rand_mat(&mut rng, m, n);
            let a = rand_mat(&mut rng, n, m);
            let x: Vec<_> = (0..n).map(|_| rand_c(&mut rng)).collect();
            let y = w.mul_vec(&x);
            let g1 = gradient_j1(&w, &x, &y);
            let fd1 = fd_gradient(&w, |w| cost_j1(&w.mul_vec(&x)));
            if m > 1 {
                assert!(rel_err(&g1, &fd1) < 1e-5, "J1 rel err {}", rel_err(&g1, &fd1));
            } else {
                assert!(fd1.norm_sqr() < 1e-12);
            }
            let g2 = gradient_j2(&w, &a);
            let fd2 = fd_gradient(&w, |w| cost_j2(w, &a));
            assert!(rel_err(&g2, &fd2) < 1e-5, "J2 rel err {}", rel_err(&g2, &fd2));
        }
    }

    #[test]
    fn update_matches_dense_gradient_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut st = state_with(&["a", "b", "c"], 4, 16, 0.02);
        for row in &mut st.rows {
            row.weights.iter_mut().for_each(|w| *w = rand_c(&mut rng) * 0.3);
        }
        let x = random_frame(&mut rng, 4, 9);
        let before = st.clone();
        let y = st.process(&x, true).unwrap();
        for k in 0..9 {
            let w = before.demixing_matrix(k);
            let a = before.steering_matrix(k);
            let mut xk = vec![ZERO; 4];
            x.gather_bin(k, &mut xk);
            let mut yk = vec![ZERO; 3];
            y.gather_bin(k, &mut yk);
            let energy: f64 = xk.iter().map(|v| v.norm_sqr()).sum();
            let step = gradient_j1(&w, &xk, &yk)
                .scale(1.0 / (energy * energy))
                .add(&gradient_j2(&w, &a))
                .scale(0.02);
            let want = w.sub(&step);
            assert!(st.demixing_matrix(k).sub(&want).norm_sqr() < 1e-26);
        }
    }

    #[test]
    fn zero_rate_and_silent_bins_leave_weights_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut st = state_with(&["a", "b"], 4, 16, 0.0);
        let before = st.clone();
        st.process(&random_frame(&mut rng, 4, 9), true).unwrap();
        assert_eq!(st, before);

        let mut st = state_with(&["a", "b"], 4, 16, 0.1);
        let before = st.clone();
        let mut x = random_frame(&mut rng, 4, 9);
        for c in 0..4 {
            x.channel_mut(c)[3] = ZERO;
        }
        st.process(&x, true).unwrap();
        assert_eq!(st.weights(0, 3), before.weights(0, 3));
        assert_eq!(st.weights(1, 3), before.weights(1, 3));
        assert_ne!(st.weights(0, 4), before.weights(0, 4));
    }

    #[test]
    fn small_step_never_increases_combined_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let m = rng.random_range(1..=4);
            let n = rng.random_range(1..=4);
            // Two bins; bin 1 carries arbitrary steering phases.
            let mut st = SeparationState::new(n, 2, GssConfig { mu: 1e-6, ..Default::default() }).unwrap();
            for j in 0..m {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
                st.add_source(format!("{j}").as_str().into(), steering(&a, 2)).unwrap();
            }
            for row in &mut st.rows {
                row.weights.iter_mut().for_each(|w| *w = rand_c(&mut rng));
            }
            let x = random_frame(&mut rng, n, 2);
            let mut xk = vec![ZERO; n];
            x.gather_bin(1, &mut xk);
            let energy: f64 = xk.iter().map(|v| v.norm_sqr()).sum();
            let cost = |st: &SeparationState| {
                let w = st.demixing_matrix(1);
                cost_j1(&w.mul_vec(&xk)) / (energy * energy) + cost_j2(&w, &st.steering_matrix(1))
            };
            let before = cost(&st);
            st.process(&x, true).unwrap();
            assert!(cost(&st) <= before + 1e-12);
        }
    }

    #[test]
    fn adaptation_lowers_cost_on_two_source_mixture() {
        // Anechoic mixture built directly in the frequency domain, x = A s.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scene = ArrayScene {
            mic_positions: geometry::circular_array(4, 0.1),
            source_directions: vec![geometry::direction_from_angles(0.0, 0.0), geometry::direction_from_angles(120.0, 0.0)],
            speed_of_sound: 343.0,
            sample_rate: 16_000.0,
        };
        let frame_size = 64;
        let a = geometry::steering_matrix(&geometry::delays(&scene).unwrap(), frame_size).unwrap();
        let mut st = SeparationState::new(4, 33, GssConfig::default()).unwrap();
        for (j, col) in a.clone().into_columns().into_iter().enumerate() {
            st.add_source(format!("{j}").as_str().into(), col).unwrap();
        }
        let mut costs = Vec::new();
        for t in 0..500 {
            // Non-stationary sources: independent random gains per frame.
            let g: Vec<f64> = (0..2).map(|j| if (t / 7 + j) % 3 == 0 { 0.1 } else { 1.0 }).collect();
            let mut x = SpectralFrame::zeros(t, 4, 33);
            for k in 0..33 {
                let s: Vec<_> = (0..2).map(|j| rand_c(&mut rng) * g[j]).collect();
                let xk: Vec<_> = (0..4).map(|i| (0..2).map(|j| a.get(k, i, j) * s[j]).sum()).collect();
                x.scatter_bin(k, &xk);
            }
            let mut cost = 0.0;
            for k in 0..33 {
                let w = st.demixing_matrix(k);
                let mut xk = vec![ZERO; 4];
                x.gather_bin(k, &mut xk);
                let e: f64 = xk.iter().map(|v| v.norm_sqr()).sum();
                cost += cost_j1(&w.mul_vec(&xk)) / (e * e) + cost_j2(&w, &st.steering_matrix(k));
            }
            costs.push(cost);
            st.process(&x, true).unwrap();
        }
        let initial: f64 = costs[..50].iter().sum::<f64>() / 50.0;
        let last: f64 = costs[450..].iter().sum::<f64>() / 50.0;
        assert!(last < initial, "initial {initial}, final {last}");
    }
}
