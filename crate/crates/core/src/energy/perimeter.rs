use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::posterior::threshold;
use crate::spectral::{check_grid_size, PriorParams, PriorSpectrum};

/// Interface length `l(N) = 1/(2N^2) sum |D w|` of a binary field, with `D` the periodic
/// central-difference gradient.
pub fn perimeter_estimate(w: &GridField) -> Result<f64> {
    if !w.is_binary() {
        return Err(Error::NotBinary);
    }
    let n = w.n();
    let inv_2h = n as f64 / 2.0;
    let mut sum = 0.0;
    for i in 0..n {
        let ip = (i + 1) % n;
        let im = (i + n - 1) % n;
        for j in 0..n {
            let jp = (j + 1) % n;
            let jm = (j + n - 1) % n;
            let dx = (w.get(ip, j) - w.get(im, j)) * inv_2h;
            let dy = (w.get(i, jp) - w.get(i, jm)) * inv_2h;
            if dx != 0.0 || dy != 0.0 {
                sum += dx.hypot(dy);
            }
        }
    }
    Ok(sum / (2.0 * (n * n) as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StudyRow {
    pub alpha: f64,
    pub n: usize,
    pub ell: f64,
}

/// `l(N)` of the thresholded prior draw for every `(alpha, N)` pair, one realisation of the
/// normals shared across all `N`.
#[derive(Clone, Debug, Serialize)]
pub struct InterfaceStudy {
    pub seed: u64,
    pub rows: Vec<StudyRow>,
}

impl InterfaceStudy {
    /// `(N, l(N))` for one `alpha`, sorted by `N`.
    pub fn series(&self, alpha: f64) -> Vec<(usize, f64)> {
        let mut s: Vec<_> = self.rows.iter().filter(|r| r.alpha == alpha).map(|r| (r.n, r.ell)).collect();
        s.sort_by_key(|r| r.0);
        s
    }

    /// Slope of `log l` against `log N` between consecutive resolutions.
    pub fn loglog_slopes(&self, alpha: f64) -> Vec<f64> {
        self.series(alpha).windows(2).map(|w| (w[1].1 / w[0].1).ln() / (w[1].0 as f64 / w[0].0 as f64).ln()).collect()
    }

    /// `|l(2N) - l(N)|` between consecutive resolutions.
    pub fn differences(&self, alpha: f64) -> Vec<f64> {
        self.series(alpha).windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect()
    }

    /// Least-squares slope of `log l` against `log N` over the whole series.
    pub fn fitted_slope(&self, alpha: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self.series(alpha).iter().map(|&(n, l)| ((n as f64).ln(), l.ln())).collect();
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("alpha,N,ell\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{:.12e}\n", r.alpha, r.n, r.ell));
        }
        s
    }
}

/// Interface length of `S(v)` for `v ~ N(0, C^{alpha/2})` across resolutions.
///
/// The coefficients are drawn once on the finest grid and truncated to each coarser one, so
/// every `N` sees the same realisation of the shared modes.
pub fn interface_scaling_study(base: &PriorParams, alphas: &[f64], ns: &[usize], seed: u64) -> Result<InterfaceStudy> {
    for &n in ns {
        check_grid_size(n)?;
    }
    let n_max = *ns.iter().max().ok_or_else(|| Error::Config("empty N list".into()))?;
    let per_alpha: Vec<Result<Vec<StudyRow>>> = alphas
        .par_iter()
        .map(|&alpha| {
            let p = PriorParams { alpha, ..*base };
            let fine = PriorSpectrum::new(&p, n_max)?.nested_coeffs(seed);
            ns.par_iter()
                .map(|&n| {
                    let coarse = fine.truncated(n)?;
                    let v = PriorSpectrum::new(&p, n)?.synthesise(&coarse);
                    Ok(StudyRow { alpha, n, ell: perimeter_estimate(&threshold(&v))? })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_alpha {
        rows.extend(r?);
    }
    Ok(InterfaceStudy { seed, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stripe(n: usize) -> GridField {
        let v = (0..n * n)
            .map(|idx| {
                let x = (idx / n) as f64 / n as f64;
                if x > 0.25 && x < 0.75 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        GridField::binary_from_values(n, v).unwrap()
    }

    // direct count: jump columns times rows times the central-difference magnitude
    fn stripe_oracle(w: &GridField) -> f64 {
        let n = w.n();
        let mut jump_columns = 0;
        for i in 0..n {
            if w.get((i + 1) % n, 0) != w.get((i + n - 1) % n, 0) {
                jump_columns += 1;
            }
        }
        (jump_columns * n) as f64 * (n as f64) / (2.0 * (n * n) as f64)
    }

    #[test]
    fn constant_has_no_interface() {
        let w = GridField::binary_from_values(16, vec![1.0; 256]).unwrap();
        assert_eq!(perimeter_estimate(&w).unwrap(), 0.0);
    }

    #[test]
    fn stripe_is_exactly_two() {
        for n in [8, 16, 64, 128, 256] {
            let w = stripe(n);
            assert_eq!(perimeter_estimate(&w).unwrap(), 2.0);
            assert_eq!(stripe_oracle(&w), 2.0);
        }
    }

    #[test]
    fn continuous_input_rejected() {
        let w = GridField::constant(8, 1.0);
        assert!(matches!(perimeter_estimate(&w), Err(Error::NotBinary)));
    }

    #[test]
    fn nested_study_reuses_coarse_realisation() {
        let p = PriorParams::level_set(1.5);
        let study = interface_scaling_study(&p, &[3.0], &[16, 32], 9).unwrap();
        let direct = {
            let coeffs = PriorSpectrum::new(&PriorParams { alpha: 3.0, ..p }, 32).unwrap().nested_coeffs(9);
            let coarse = coeffs.truncated(16).unwrap();
            let v = PriorSpectrum::new(&PriorParams { alpha: 3.0, ..p }, 16).unwrap().synthesise(&coarse);
            perimeter_estimate(&threshold(&v)).unwrap()
        };
        assert_eq!(study.series(3.0)[0], (16, direct));
        let own = perimeter_estimate(&threshold(&sample_at(&p, 3.0, 16, 9))).unwrap();
        assert!((own - direct).abs() < 1e-12);
    }

    fn sample_at(p: &PriorParams, alpha: f64, n: usize, seed: u64) -> GridField {
        PriorSpectrum::new(&PriorParams { alpha, ..*p }, n).unwrap().sample(seed)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn invariant_under_flip_and_translation(
            bits in prop::collection::vec(any::<bool>(), 64),
            di in -8isize..8,
            dj in -8isize..8,
        ) {
            let v: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
            let w = GridField::binary_from_values(8, v.clone()).unwrap();
            let flipped = GridField::binary_from_values(8, v.iter().map(|x| -x).collect()).unwrap();
            let base = perimeter_estimate(&w).unwrap();
            prop_assert_eq!(perimeter_estimate(&flipped).unwrap(), base);
            let shifted = GridField::binary_from_values(8, w.translated(di, dj).into_values()).unwrap();
            prop_assert!((perimeter_estimate(&shifted).unwrap() - base).abs() <= 1e-12 * base.max(1.0));
        }
    }
}
