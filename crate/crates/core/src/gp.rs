//! Closed-form Gaussian posterior for linear observations under the `alpha = 2` prior
//! `N(0, C)` (the phase-field model with `r = 0`).
//!
//! With representers `r_j = K^* e_j` and `A = eps^{2c} Sigma + K C K^*`,
//! `m_y = sum_j (C r_j) [A^{-1} y]_j` and `C_y = C - C K^* A^{-1} K C`.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::observation::{ForwardMap, ObservationSet};
use crate::posterior::threshold;
use crate::spectral::{PriorParams, PriorSpectrum, SpectralField};

#[derive(Clone, Debug)]
pub struct GPPosterior {
    spectrum: PriorSpectrum,
    forward: ForwardMap,
    obs: ObservationSet,
    /// `C r_j`.
    cov_representers: Vec<GridField>,
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
    mean: GridField,
}

/// Builds the posterior on an `N x N` grid. The noise scale `eps^c` is taken from `obs`.
pub fn gp_solve(obs: &ObservationSet, p: &PriorParams, n: usize) -> Result<GPPosterior> {
    if p.alpha != 2.0 {
        return Err(Error::Config(format!("closed-form posterior needs alpha = 2, got {}", p.alpha)));
    }
    let spectrum = PriorSpectrum::new(p, n)?;
    let forward = obs.forward_map(n)?;
    let j = obs.len();
    let cov_representers: Vec<GridField> = (0..j)
        .into_par_iter()
        .map(|k| spectrum.apply_cov_power(&forward.representer(k), 1.0))
        .collect::<Result<_>>()?;
    let mut gram = DMatrix::zeros(j, j);
    for (col, cr) in cov_representers.iter().enumerate() {
        for (row, v) in forward.apply(cr)?.into_iter().enumerate() {
            gram[(row, col)] = v;
        }
    }
    let s2 = obs.noise_scale().powi(2);
    let a = obs.sigma() * s2 + &gram;
    let a = (&a + a.transpose()) * 0.5;
    let chol = Cholesky::new(a).ok_or_else(|| {
        Error::Refused("eps^{2c} Sigma + K C K^* is not positive definite; no regularisation applied".into())
    })?;
    let weights = chol.solve(&DVector::from_column_slice(obs.y()));
    let mean = combine(n, &cov_representers, weights.as_slice());
    Ok(GPPosterior { spectrum, forward, obs: obs.clone(), cov_representers, gram, chol, weights, mean })
}

fn combine(n: usize, fields: &[GridField], w: &[f64]) -> GridField {
    let mut out = vec![0.0; n * n];
    for (f, &c) in fields.iter().zip(w) {
        for (o, v) in out.iter_mut().zip(f.values()) {
            *o += c * v;
        }
    }
    GridField::from_values(n, out).expect("grid size")
}

impl GPPosterior {
    pub fn n(&self) -> usize {
        self.spectrum.n()
    }

    pub fn mean(&self) -> &GridField {
        &self.mean
    }

    pub fn thresholded_mean(&self) -> GridField {
        threshold(&self.mean)
    }

    /// `K C K^*`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn spectrum(&self) -> &PriorSpectrum {
        &self.spectrum
    }

    /// `C_y f`.
    pub fn apply_covariance(&self, f: &GridField) -> Result<GridField> {
        let cf = self.spectrum.apply_cov_power(f, 1.0)?;
        let kcf = self.forward.apply(&cf)?;
        let z = self.chol.solve(&DVector::from_vec(kcf));
        let correction = combine(self.n(), &self.cov_representers, z.as_slice());
        cf.lin_comb(1.0, &correction, -1.0)
    }

    /// Posterior variance of the grid value at node `(i, j)`.
    pub fn pointwise_variance(&self, i: usize, j: usize) -> f64 {
        let c = DVector::from_iterator(self.cov_representers.len(), self.cov_representers.iter().map(|f| f.get(i, j)));
        let z = self.chol.solve(&c);
        self.spectrum.pointwise_variance() - c.dot(&z)
    }

    /// Gradient of `J(u) = 1/2 |u|_E^2 + 1/2 eps^{-2c} |Sigma^{-1/2}(y - Ku)|^2` in `L2`,
    /// as coefficients on the sampled band (Nyquist modes dropped).
    pub fn objective_gradient(&self, u: &GridField) -> Result<Vec<Complex64>> {
        let fft = self.spectrum.fft();
        let ku = self.forward.apply(u)?;
        let resid: Vec<f64> = self.obs.y().iter().zip(&ku).map(|(y, k)| y - k).collect();
        let s2 = self.obs.noise_scale().powi(2);
        let w: Vec<f64> = self.obs.sigma_solve(&resid).iter().map(|v| v / s2).collect();
        let data = self.forward.adjoint(&w);
        let uc = fft.analyse(u);
        let dc = fft.analyse(&data);
        let lambda = self.spectrum.lambda();
        let scale = self.spectrum.sample_scale();
        Ok((0..uc.len())
            .map(|k| if scale[k] == 0.0 { Complex64::new(0.0, 0.0) } else { uc[k] / lambda[k] - dc[k] })
            .collect())
    }

    pub fn objective_gradient_norm(&self, u: &GridField) -> Result<f64> {
        Ok(self.objective_gradient(u)?.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
    }

    /// Writes `K C K^*` as a dense CSV matrix.
    pub fn write_gram_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for r in 0..self.gram.nrows() {
            let row: Vec<String> = (0..self.gram.ncols()).map(|c| format!("{:.16e}", self.gram[(r, c)])).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        std::fs::write(path, s)?;
        Ok(())
    }

    /// One exact posterior draw from the prior draw `u0` and noise `eta` by the
    /// representer correction `u0 + C K^* A^{-1}(y - K u0 - eps^c eta)`.
    fn condition(&self, u0: GridField, eta: &[f64]) -> GridField {
        let ku = self.forward.apply_values(u0.values());
        let s = self.obs.noise_scale();
        let r: Vec<f64> = self.obs.y().iter().zip(&ku).zip(eta).map(|((y, k), e)| y - k - s * e).collect();
        let z = self.chol.solve(&DVector::from_vec(r));
        let corr = combine(self.n(), &self.cov_representers, z.as_slice());
        u0.lin_comb(1.0, &corr, 1.0).expect("same grid")
    }

    pub fn weights(&self) -> &[f64] {
        self.weights.as_slice()
    }
}

/// `count` draws from `N(m_y, C_y)` by Matheron's rule. Draw `k` uses ChaCha8 stream `k`
/// of `seed`.
pub fn gp_sample(post: &GPPosterior, count: usize, seed: u64) -> Vec<GridField> {
    let sigma_l = post.obs.sigma().clone().cholesky().expect("validated covariance").l();
    (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let mut c = SpectralField::zeros(post.n());
            post.spectrum.draw_coeffs(&mut rng, &mut c);
            let u0 = post.spectrum.synthesise(&c);
            let xi = DVector::from_iterator(
                post.obs.len(),
                (0..post.obs.len()).map(|_| rng.sample::<f64, _>(StandardNormal)),
            );
            let eta = &sigma_l * xi;
            post.condition(u0, eta.as_slice())
        })
        .collect()
}

/// Pointwise fraction of samples with `S(u) = +1`.
pub fn positive_fraction(samples: &[GridField]) -> Result<GridField> {
    let first = samples.first().ok_or_else(|| Error::Config("no samples".into()))?;
    let n = first.n();
    let mut acc = vec![0.0; n * n];
    for s in samples {
        first.check_same_grid(s)?;
        for (a, &v) in acc.iter_mut().zip(s.values()) {
            if v > 0.0 {
                *a += 1.0;
            }
        }
    }
    let k = samples.len() as f64;
    GridField::from_values(n, acc.into_iter().map(|a| a / k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observation::ObservationLayout;

    fn params() -> PriorParams {
        PriorParams { r: 0.0, ..PriorParams::phase_field_order_one() }
    }

    fn problem(n: usize, noise: f64) -> ObservationSet {
        let layout = ObservationLayout::uniform(5, n);
        let y = (0..25).map(|i| if (i / 5 + i % 5) % 3 == 0 { 1.0 } else { -0.5 }).collect();
        ObservationSet::with_identity(layout, y, noise).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_mean() {
        let obs = problem(16, 0.1).with_data(vec![0.0; 25]).unwrap();
        let post = gp_solve(&obs, &params(), 16).unwrap();
        assert!(post.mean().max_abs() == 0.0);
    }

    #[test]
    fn scalar_conjugate_formula() {
        let n = 16;
        let p = params();
        let layout = ObservationLayout { points: vec![[0.5, 0.5]], window: 1.0 };
        let obs = ObservationSet::new(layout, vec![0.7], DMatrix::from_element(1, 1, 2.0), 0.3).unwrap();
        let post = gp_solve(&obs, &p, n).unwrap();
        let l0 = p.eigenvalue((0, 0));
        let coef = l0 / (0.09 * 2.0 + l0) * 0.7;
        for &v in post.mean().values() {
            assert!((v - coef).abs() < 1e-12 * coef.abs());
        }
    }

    #[test]
    fn gram_is_symmetric() {
        let post = gp_solve(&problem(32, 0.1), &params(), 32).unwrap();
        let g = post.gram();
        let asym = (g - g.transpose()).amax();
        assert!(asym <= 1e-12 * g.amax());
    }

    #[test]
    fn mean_minimises_objective() {
        let obs = problem(32, 0.1);
        let post = gp_solve(&obs, &params(), 32).unwrap();
        let at_zero = post.objective_gradient_norm(&GridField::zeros(32)).unwrap();
        let at_mean = post.objective_gradient_norm(post.mean()).unwrap();
        assert!(at_mean < 1e-8 * at_zero, "{at_mean} vs {at_zero}");
    }

    #[test]
    fn mean_interpolates_as_noise_vanishes() {
        let mut last = f64::INFINITY;
        for noise in [1.0, 0.1, 0.01, 0.001] {
            let obs = problem(32, noise);
            let post = gp_solve(&obs, &params(), 32).unwrap();
            let km = post.forward.apply(post.mean()).unwrap();
            let r: f64 = km.iter().zip(obs.y()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(r < last);
            last = r;
        }
    }

    #[test]
    fn covariance_action_matches_pointwise_variance() {
        let post = gp_solve(&problem(16, 0.1), &params(), 16).unwrap();
        let mut e = GridField::zeros(16);
        e.values_mut()[3 * 16 + 5] = 256.0;
        let col = post.apply_covariance(&e).unwrap();
        let v = post.pointwise_variance(3, 5);
        assert!((col.get(3, 5) - v).abs() < 1e-10 * v);
        assert!(v < post.spectrum().pointwise_variance());
    }

    #[test]
    fn alpha_other_than_two_rejected() {
        let p = PriorParams { alpha: 3.0, ..params() };
        assert!(gp_solve(&problem(16, 0.1), &p, 16).is_err());
    }

    #[test]
    fn samples_are_seeded() {
        let post = gp_solve(&problem(16, 0.1), &params(), 16).unwrap();
        let a = gp_sample(&post, 3, 5);
        let b = gp_sample(&post, 3, 5);
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }
}
