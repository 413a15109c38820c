//! Covariance spectrum of the Gaussian prior on the periodic unit square, Karhunen-Loeve
//! sampling of `N(0, C^{alpha/2})`, and the Cameron-Martin norm.
//!
//! Conventions:
//! * Fourier modes are `phi_k(x) = exp(2 pi i k.x)`, unit norm in `L2(D)`.
//! * A grid field is `v(x) = sum_k c_k phi_k(x)` over the FFT band `k in {-N/2, .., N/2-1}^2`,
//!   so synthesis is an unnormalised inverse DFT and analysis is a forward DFT scaled by `1/N^2`.
//! * Real fields carry Hermitian coefficients `c_{-k} = conj(c_k)`.
//! * Sampled fields leave every Nyquist mode (`|k_x| = N/2` or `|k_y| = N/2`) empty. This keeps the
//!   band symmetric, so refining the grid only adds modes and never re-pairs existing ones.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridField;

/// Parameters of the prior covariance `C` and of the phase-field potential.
///
/// `C^{-1} = delta eps^{-2 a1} Lap^2 - q delta eps^{-2 a2} Lap + tau^2 delta eps^{-2 a3}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorParams {
    pub delta: f64,
    pub q: f64,
    pub tau: f64,
    pub eps: f64,
    pub c: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b: f64,
    pub r: f64,
    pub alpha: f64,
}

impl PriorParams {
    /// Phase-field prior for the small-noise regime (`c = 3/2`, `eps = 0.01`).
    pub fn phase_field_small_noise() -> Self {
        Self { delta: 0.01, q: 0.1, tau: 1.0, eps: 0.01, c: 1.5, a1: 0.0, a2: 1.0, a3: 0.0, b: 4.0, r: 1.0, alpha: 2.0 }
    }

    /// Phase-field prior for order-one noise (`c = 0`).
    pub fn phase_field_order_one() -> Self {
        Self {
            delta: 100.0,
            q: 0.1,
            tau: 1.0,
            eps: 0.01,
            c: 0.0,
            a1: -1.5,
            a2: -0.5,
            a3: -1.0,
            b: 1.0,
            r: 1.0,
            alpha: 2.0,
        }
    }

    /// Level set prior; the same in both noise regimes apart from `c`.
    pub fn level_set(c: f64) -> Self {
        Self { delta: 1.0, q: 0.0, tau: 50.0, c, ..Self::phase_field_small_noise() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidPrior(m.to_string()));
        let all =
            [self.delta, self.q, self.tau, self.eps, self.c, self.a1, self.a2, self.a3, self.b, self.r, self.alpha];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("all parameters must be finite");
        }
        if self.delta <= 0.0 {
            return bad("delta must be > 0");
        }
        if self.tau <= 0.0 {
            return bad("tau must be > 0");
        }
        if self.q < 0.0 {
            return bad("q must be >= 0");
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad("eps must lie in (0, 1)");
        }
        if self.c < 0.0 {
            return bad("c must be >= 0");
        }
        if self.r < 0.0 {
            return bad("r must be >= 0");
        }
        if self.b <= 0.0 {
            return bad("b must be > 0");
        }
        if self.alpha <= 1.0 {
            return bad("alpha must exceed d/2 = 1");
        }
        Ok(())
    }

    /// Noise scale `eps^c`.
    pub fn noise_scale(&self) -> f64 {
        self.eps.powf(self.c)
    }

    /// Precision symbol `1 / lambda` at squared wavenumber `s = (2 pi |k|)^2`.
    #[inline]
    pub fn precision_symbol(&self, s: f64) -> f64 {
        self.delta * self.eps.powf(-2.0 * self.a1) * s * s
            + self.q * self.delta * self.eps.powf(-2.0 * self.a2) * s
            + self.tau * self.tau * self.delta * self.eps.powf(-2.0 * self.a3)
    }

    /// Eigenvalue `lambda_k` of `C` for integer wavevector `k`.
    pub fn eigenvalue(&self, k: (i64, i64)) -> f64 {
        1.0 / self.precision_symbol(wavenumber_sq(k))
    }
}

/// `(2 pi |k|)^2`.
#[inline]
pub fn wavenumber_sq(k: (i64, i64)) -> f64 {
    let (kx, ky) = (k.0 as f64, k.1 as f64);
    4.0 * PI * PI * (kx * kx + ky * ky)
}

/// Signed frequency of FFT index `idx` on an `n`-point axis.
#[inline]
pub fn freq(idx: usize, n: usize) -> i64 {
    if idx < n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

/// FFT index of signed frequency `k` on an `n`-point axis.
#[inline]
pub fn index_of(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

#[inline]
fn is_nyquist(idx: usize, n: usize) -> bool {
    idx == n / 2
}

pub fn check_grid_size(n: usize) -> Result<()> {
    if n < 4 || !n.is_power_of_two() {
        return Err(Error::Config(format!("grid size N={n} must be a power of two >= 4")));
    }
    Ok(())
}

/// Two-dimensional complex FFT on an `n x n` row-major buffer.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn transform(&self, buf: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        debug_assert_eq!(buf.len(), n * n);
        fft.process(buf);
        transpose_in_place(buf, n);
        fft.process(buf);
        transpose_in_place(buf, n);
    }

    /// Unnormalised forward transform, `X_k = sum_x v_x exp(-2 pi i k.x)`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.forward)
    }

    /// Unnormalised inverse transform, `v_x = sum_k X_k exp(+2 pi i k.x)`.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.inverse)
    }

    /// Fourier coefficients `c_k` of a grid field (forward DFT divided by `N^2`).
    pub fn analyse(&self, u: &GridField) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        let norm = 1.0 / (self.n * self.n) as f64;
        buf.iter_mut().for_each(|c| *c *= norm);
        buf
    }

    /// Evaluates `sum_k c_k phi_k` on the grid. Returns the real part and the largest
    /// absolute imaginary residue.
    pub fn synthesise(&self, coeffs: &[Complex64]) -> (GridField, f64) {
        let mut buf = coeffs.to_vec();
        self.inverse(&mut buf);
        let max_imag = buf.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));
        let values = buf.into_iter().map(|c| c.re).collect();
        (GridField::from_values(self.n, values).expect("square buffer"), max_imag)
    }
}

fn transpose_in_place(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// Fourier coefficients of a real periodic field on the `N x N` FFT band.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    n: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(n: usize) -> Self {
        Self { n, coeffs: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    pub fn from_coeffs(n: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != n * n {
            return Err(Error::Config(format!("expected {} coefficients", n * n)));
        }
        Ok(Self { n, coeffs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient at signed wavevector `k`, wrapped onto the band.
    pub fn coeff(&self, k: (i64, i64)) -> Complex64 {
        self.coeffs[index_of(k.0, self.n) * self.n + index_of(k.1, self.n)]
    }

    /// Largest violation of `c(-k) = conj(c(k))`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                let p = ((n - a) % n) * n + (n - b) % n;
                worst = worst.max((self.coeffs[a * n + b] - self.coeffs[p].conj()).norm());
            }
        }
        worst
    }

    /// Copies the modes of this field that lie inside the band of an `m x m` grid (`m <= N`),
    /// leaving the coarse Nyquist modes empty.
    pub fn truncated(&self, m: usize) -> Result<SpectralField> {
        if m > self.n || m == 0 {
            return Err(Error::Config(format!("cannot truncate N={} to N={m}", self.n)));
        }
        let mut out = SpectralField::zeros(m);
        for a in 0..m {
            if is_nyquist(a, m) {
                continue;
            }
            for b in 0..m {
                if is_nyquist(b, m) {
                    continue;
                }
                out.coeffs[a * m + b] = self.coeff((freq(a, m), freq(b, m)));
            }
        }
        Ok(out)
    }
}

/// A mode pair drawn together: `c_idx = s (xi_1 + i xi_2)/sqrt 2` and `c_partner = conj(c_idx)`,
/// or a single real draw when `idx == partner`.
#[derive(Clone, Copy, Debug)]
struct ModeDraw {
    idx: usize,
    partner: usize,
    k: (i64, i64),
}

/// Precomputed spectrum of `C` and the sampling scales `lambda_k^{alpha/4}` on an `N x N` band.
#[derive(Clone, Debug)]
pub struct PriorSpectrum {
    n: usize,
    params: PriorParams,
    lambda: Vec<f64>,
    scale: Vec<f64>,
    draws: Vec<ModeDraw>,
    fft: Fft2,
}

impl PriorSpectrum {
    pub fn new(params: &PriorParams, n: usize) -> Result<Self> {
        params.validate()?;
        check_grid_size(n)?;
        let mut lambda = vec![0.0; n * n];
        let mut scale = vec![0.0; n * n];
        let mut draws = Vec::with_capacity(n * n / 2 + 1);
        for a in 0..n {
            for b in 0..n {
                let k = (freq(a, n), freq(b, n));
                let lam = params.eigenvalue(k);
                lambda[a * n + b] = lam;
                if is_nyquist(a, n) || is_nyquist(b, n) {
                    continue;
                }
                scale[a * n + b] = lam.powf(params.alpha / 4.0);
                let upper = k.1 > 0 || (k.1 == 0 && k.0 > 0);
                if upper || k == (0, 0) {
                    let partner = ((n - a) % n) * n + (n - b) % n;
                    draws.push(ModeDraw { idx: a * n + b, partner, k });
                }
            }
        }
        Ok(Self { n, params: *params, lambda, scale, draws, fft: Fft2::new(n) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &PriorParams {
        &self.params
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// `lambda_k` in FFT order (defined on the full band, Nyquist included).
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Standard deviation scale `lambda_k^{alpha/4}` of each sampled mode; zero on Nyquist modes.
    pub fn sample_scale(&self) -> &[f64] {
        &self.scale
    }

    /// Prior variance of coefficient `c_k`, `E|c_k|^2 = lambda_k^{alpha/2}` (zero on Nyquist modes).
    pub fn coeff_variance(&self, k: (i64, i64)) -> f64 {
        let s = self.scale[index_of(k.0, self.n) * self.n + index_of(k.1, self.n)];
        s * s
    }

    /// Pointwise prior variance `sum_k lambda_k^{alpha/2} |phi_k|^2` of the sampled field.
    pub fn pointwise_variance(&self) -> f64 {
        self.scale.iter().map(|s| s * s).sum()
    }

    /// Prior covariance between two grid nodes separated by `(di, dj)` cells.
    pub fn covariance_at_offset(&self, di: i64, dj: i64) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                let s = self.scale[a * n + b];
                if s == 0.0 {
                    continue;
                }
                let phase = 2.0 * PI * (freq(a, n) * di + freq(b, n) * dj) as f64 / n as f64;
                acc += s * s * phase.cos();
            }
        }
        acc
    }

    /// Karhunen-Loeve coefficients from a sequential generator (fixed draw order).
    pub fn draw_coeffs<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut SpectralField) {
        debug_assert_eq!(out.n, self.n);
        for d in &self.draws {
            let s = self.scale[d.idx];
            if d.idx == d.partner {
                let x: f64 = rng.sample(StandardNormal);
                out.coeffs[d.idx] = Complex64::new(s * x, 0.0);
            } else {
                let x: f64 = rng.sample(StandardNormal);
                let y: f64 = rng.sample(StandardNormal);
                let c = Complex64::new(x, y) * (s / SQRT_2);
                out.coeffs[d.idx] = c;
                out.coeffs[d.partner] = c.conj();
            }
        }
    }

    /// Karhunen-Loeve coefficients whose per-mode normals depend only on `(seed, k)`.
    ///
    /// The normals for wavevector `k` come from ChaCha8 stream `k` of `seed`, so the same
    /// seed yields identical draws for every shared mode regardless of `N`.
    pub fn nested_coeffs(&self, seed: u64) -> SpectralField {
        let mut out = SpectralField::zeros(self.n);
        let base = ChaCha8Rng::seed_from_u64(seed);
        for d in &self.draws {
            let (x, y) = mode_normals(&base, d.k);
            let s = self.scale[d.idx];
            if d.idx == d.partner {
                out.coeffs[d.idx] = Complex64::new(s * x, 0.0);
            } else {
                let c = Complex64::new(x, y) * (s / SQRT_2);
                out.coeffs[d.idx] = c;
                out.coeffs[d.partner] = c.conj();
            }
        }
        out
    }

    /// Draws one prior realisation on the grid with nested per-mode randomness.
    pub fn sample(&self, seed: u64) -> GridField {
        self.synthesise(&self.nested_coeffs(seed))
    }

    pub fn synthesise(&self, coeffs: &SpectralField) -> GridField {
        let (field, _) = self.fft.synthesise(&coeffs.coeffs);
        field
    }

    /// `C^power` applied to a grid field, restricted to the sampled band (Nyquist modes removed).
    pub fn apply_cov_power(&self, f: &GridField, power: f64) -> Result<GridField> {
        if f.n() != self.n {
            return Err(Error::GridMismatch { expected: self.n, got: f.n() });
        }
        let mut c = self.fft.analyse(f);
        for (idx, ck) in c.iter_mut().enumerate() {
            if self.scale[idx] == 0.0 {
                *ck = Complex64::new(0.0, 0.0);
            } else {
                *ck *= self.lambda[idx].powf(power);
            }
        }
        Ok(self.fft.synthesise(&c).0)
    }

    /// Cameron-Martin norm squared `sum_k |u_k|^2 / lambda_k`, over the full band.
    pub fn cm_norm_sq(&self, u: &GridField) -> Result<f64> {
        if u.n() != self.n {
            return Err(Error::GridMismatch { expected: self.n, got: u.n() });
        }
        let c = self.fft.analyse(u);
        Ok(c.iter().zip(&self.lambda).map(|(ck, lam)| ck.norm_sqr() / lam).sum())
    }
}

/// Two standard normals for wavevector `k` drawn from ChaCha8 stream `k` of `base`.
fn mode_normals(base: &ChaCha8Rng, k: (i64, i64)) -> (f64, f64) {
    let stream = ((k.0 as i32 as u32 as u64) << 32) | (k.1 as i32 as u32 as u64);
    let mut rng = base.clone();
    rng.set_stream(stream);
    rng.set_word_pos(0);
    (rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Eigenvalue of `C` at wavevector `k`.
pub fn eigenvalue(k: (i64, i64), p: &PriorParams) -> f64 {
    p.eigenvalue(k)
}

/// One prior draw of `N(0, C^{alpha/2})` on the `N x N` grid.
pub fn sample_prior(p: &PriorParams, n: usize, seed: u64) -> Result<GridField> {
    Ok(PriorSpectrum::new(p, n)?.sample(seed))
}

/// Cameron-Martin norm squared of a continuous grid field.
pub fn cm_norm_sq(u: &GridField, p: &PriorParams) -> Result<f64> {
    PriorSpectrum::new(p, u.n())?.cm_norm_sq(u)
}

/// Quadratures of `|Lap u|^2` and `|grad u|^2` over the unit square, computed spectrally.
pub fn derivative_energies(fft: &Fft2, u: &GridField) -> (f64, f64) {
    let n = fft.n();
    let c = fft.analyse(u);
    let mut lap = 0.0;
    let mut grad = 0.0;
    for a in 0..n {
        for b in 0..n {
            let s = wavenumber_sq((freq(a, n), freq(b, n)));
            let m = c[a * n + b].norm_sqr();
            lap += m * s * s;
            grad += m * s;
        }
    }
    (lap, grad)
}
