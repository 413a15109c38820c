//! Linear forward map (mollified point observations), Gaussian noise model, truth fields
//! and synthetic data generation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{window_weights_1d, GridField};

/// Observation locations and the side length of the square averaging window around each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationLayout {
    pub points: Vec<[f64; 2]>,
    pub window: f64,
}

impl ObservationLayout {
    /// `m x m` points at cell centres `((i + 1/2)/m, (j + 1/2)/m)`, window side `2 / n_inversion`.
    pub fn uniform(m: usize, n_inversion: usize) -> Self {
        let mut points = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                points.push([(i as f64 + 0.5) / m as f64, (j as f64 + 0.5) / m as f64]);
            }
        }
        Self { points, window: default_window(n_inversion) }
    }

    /// `count` points drawn uniformly on the unit square.
    pub fn random(count: usize, n_inversion: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..count).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        Self { points, window: default_window(n_inversion) }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Default averaging window: two inversion-grid cells.
pub fn default_window(n_inversion: usize) -> f64 {
    2.0 / n_inversion as f64
}

/// The forward map `K` discretised on an `N x N` grid: each row is a sparse list of
/// non-negative quadrature weights summing to one.
#[derive(Clone, Debug)]
pub struct ForwardMap {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl ForwardMap {
    pub fn new(layout: &ObservationLayout, n: usize) -> Result<Self> {
        let h = 1.0 / n as f64;
        if !(layout.window >= h * (1.0 - 1e-12)) {
            return Err(Error::Config(format!(
                "observation window {} is smaller than one grid cell (1/{n})",
                layout.window
            )));
        }
        if layout.window > 1.0 {
            return Err(Error::Config(format!("observation window {} exceeds the domain", layout.window)));
        }
        let rows = layout
            .points
            .iter()
            .map(|p| {
                let wx = window_weights_1d(p[0], layout.window, n);
                let wy = window_weights_1d(p[1], layout.window, n);
                let mut row = Vec::with_capacity(wx.len() * wy.len());
                for &(i, a) in &wx {
                    for &(j, b) in &wy {
                        row.push((i * n + j, a * b));
                    }
                }
                row
            })
            .collect();
        Ok(Self { n, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn apply_values(&self, values: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(idx, w)| w * values[idx]).sum()).collect()
    }

    pub fn apply(&self, u: &GridField) -> Result<Vec<f64>> {
        if u.n() != self.n {
            return Err(Error::GridMismatch { expected: self.n, got: u.n() });
        }
        Ok(self.apply_values(u.values()))
    }

    /// Representer `K^* e_j` with respect to the grid `L2` quadrature, so that
    /// `(1/N^2) sum_x K^* e_j(x) u(x) = (K u)_j`.
    pub fn representer(&self, j: usize) -> GridField {
        let nn = (self.n * self.n) as f64;
        let mut values = vec![0.0; self.n * self.n];
        for &(idx, w) in &self.rows[j] {
            values[idx] += w * nn;
        }
        GridField::from_values(self.n, values).expect("square")
    }

    /// `K^* z` as a grid field.
    pub fn adjoint(&self, z: &[f64]) -> GridField {
        let nn = (self.n * self.n) as f64;
        let mut values = vec![0.0; self.n * self.n];
        for (row, &zj) in self.rows.iter().zip(z) {
            for &(idx, w) in row {
                values[idx] += w * nn * zj;
            }
        }
        GridField::from_values(self.n, values).expect("square")
    }
}

/// Data `y = K u + eps^c eta`, `eta ~ N(0, Sigma)`, together with the observation layout.
#[derive(Clone, Debug)]
pub struct ObservationSet {
    layout: ObservationLayout,
    y: Vec<f64>,
    sigma: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    noise_scale: f64,
    seed: Option<u64>,
}

impl ObservationSet {
    pub fn new(layout: ObservationLayout, y: Vec<f64>, sigma: DMatrix<f64>, noise_scale: f64) -> Result<Self> {
        let j = layout.len();
        if y.len() != j || sigma.nrows() != j || sigma.ncols() != j {
            return Err(Error::Config(format!(
                "inconsistent observation sizes: {} points, {} data, {}x{} covariance",
                j,
                y.len(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if !(noise_scale >= 0.0) {
            return Err(Error::Config("noise scale must be >= 0".into()));
        }
        let sym = (&sigma - sigma.transpose()).amax();
        if sym > 1e-12 * sigma.amax().max(1.0) {
            return Err(Error::InvalidCovariance);
        }
        let chol = Cholesky::new(sigma.clone()).ok_or(Error::InvalidCovariance)?;
        Ok(Self { layout, y, sigma, chol, noise_scale, seed: None })
    }

    /// Identity noise covariance.
    pub fn with_identity(layout: ObservationLayout, y: Vec<f64>, noise_scale: f64) -> Result<Self> {
        let j = y.len();
        Self::new(layout, y, DMatrix::identity(j, j), noise_scale)
    }

    /// No observations at all.
    pub fn empty(window: f64, noise_scale: f64) -> Self {
        Self::with_identity(ObservationLayout { points: vec![], window }, vec![], noise_scale)
            .expect("empty set is valid")
    }

    pub fn layout(&self) -> &ObservationLayout {
        &self.layout
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn forward_map(&self, n: usize) -> Result<ForwardMap> {
        ForwardMap::new(&self.layout, n)
    }

    /// Returns a copy with the data vector replaced.
    pub fn with_data(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.len() {
            return Err(Error::Config("data length mismatch".into()));
        }
        Ok(Self { y, ..self.clone() })
    }

    /// `|Sigma^{-1/2} (y - Ku)|^2` given `Ku`.
    pub fn weighted_residual_sq(&self, ku: &[f64]) -> f64 {
        if self.y.is_empty() {
            return 0.0;
        }
        let r = DVector::from_iterator(self.y.len(), self.y.iter().zip(ku).map(|(y, k)| y - k));
        let z = self.chol.l().solve_lower_triangular(&r).expect("cholesky factor is invertible");
        z.norm_squared()
    }

    /// `1/2 eps^{-2c} |Sigma^{-1/2} (y - Ku)|^2` given `Ku`.
    pub fn misfit_from_ku(&self, ku: &[f64]) -> f64 {
        let w = self.weighted_residual_sq(ku);
        if w == 0.0 {
            return 0.0;
        }
        if self.noise_scale == 0.0 {
            return f64::INFINITY;
        }
        0.5 * w / (self.noise_scale * self.noise_scale)
    }

    /// `Sigma^{-1} v`.
    pub fn sigma_solve(&self, v: &[f64]) -> Vec<f64> {
        self.chol.solve(&DVector::from_column_slice(v)).as_slice().to_vec()
    }

    /// Writes the layout and data as CSV (`x,y,value`) and `Sigma` as a dense CSV matrix.
    pub fn write_csv(&self, obs_path: &Path, sigma_path: &Path) -> Result<()> {
        let mut s = String::from("x,y,value\n");
        for (p, v) in self.layout.points.iter().zip(&self.y) {
            let _ = writeln!(s, "{:.16e},{:.16e},{:.16e}", p[0], p[1], v);
        }
        fs::write(obs_path, s)?;
        let mut m = String::new();
        for i in 0..self.sigma.nrows() {
            let row: Vec<String> = (0..self.sigma.ncols()).map(|j| format!("{:.16e}", self.sigma[(i, j)])).collect();
            m.push_str(&row.join(","));
            m.push('\n');
        }
        fs::write(sigma_path, m)?;
        Ok(())
    }

    /// Reads a set written by [`ObservationSet::write_csv`].
    pub fn read_csv(obs_path: &Path, sigma_path: &Path, window: f64, noise_scale: f64) -> Result<Self> {
        let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("'{t}': {e}")));
        let text = fs::read_to_string(obs_path)?;
        let mut points = Vec::new();
        let mut y = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!("expected x,y,value: {line}")));
            }
            points.push([parse(cols[0])?, parse(cols[1])?]);
            y.push(parse(cols[2])?);
        }
        let stext = fs::read_to_string(sigma_path)?;
        let mut entries = Vec::new();
        let mut rows = 0;
        for line in stext.lines().filter(|l| !l.trim().is_empty()) {
            for t in line.split(',') {
                entries.push(parse(t)?);
            }
            rows += 1;
        }
        if entries.len() != rows * rows {
            return Err(Error::Parse("covariance CSV is not square".into()));
        }
        let sigma = DMatrix::from_row_slice(rows, rows, &entries);
        Self::new(ObservationLayout { points, window }, y, sigma, noise_scale)
    }
}

/// Which truth geometry a [`TruthField`] holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TruthKind {
    /// Disc of radius 0.25 centred at (0.5, 0.5).
    A,
    /// One large ellipse and two small discs.
    B,
    /// Checkerboard with cells of side 1/10.
    C,
    Custom(String),
}

#[derive(Clone, Debug)]
pub struct TruthField {
    pub field: GridField,
    pub kind: TruthKind,
}

fn indicator_field(n: usize, inside: impl Fn(f64, f64) -> bool) -> GridField {
    let f = GridField::from_fn(n, |x, y| if inside(x, y) { 1.0 } else { -1.0 });
    GridField::binary_from_values(n, f.into_values()).expect("values are +-1")
}

impl TruthField {
    pub fn disc(n: usize, centre: [f64; 2], radius: f64) -> GridField {
        indicator_field(n, |x, y| (x - centre[0]).powi(2) + (y - centre[1]).powi(2) < radius * radius)
    }

    pub fn truth_a(n: usize) -> Self {
        Self { field: Self::disc(n, [0.5, 0.5], 0.25), kind: TruthKind::A }
    }

    pub fn truth_b(n: usize) -> Self {
        let field = indicator_field(n, |x, y| {
            let ellipse = ((x - 0.35) / 0.22).powi(2) + ((y - 0.6) / 0.15).powi(2) < 1.0;
            let d1 = (x - 0.72).powi(2) + (y - 0.25).powi(2) < 0.10 * 0.10;
            let d2 = (x - 0.78).powi(2) + (y - 0.72).powi(2) < 0.08 * 0.08;
            ellipse || d1 || d2
        });
        Self { field, kind: TruthKind::B }
    }

    pub fn truth_c(n: usize) -> Self {
        let field = indicator_field(n, |x, y| {
            // small offset keeps nodes on cell edges on a definite side
            let cx = (10.0 * x + 1e-9).floor() as i64;
            let cy = (10.0 * y + 1e-9).floor() as i64;
            (cx + cy).rem_euclid(2) == 0
        });
        Self { field, kind: TruthKind::C }
    }

    pub fn custom(field: GridField, label: impl Into<String>) -> Result<Self> {
        if !field.is_binary() {
            return Err(Error::NotBinary);
        }
        Ok(Self { field, kind: TruthKind::Custom(label.into()) })
    }

    pub fn n(&self) -> usize {
        self.field.n()
    }
}

/// `K u` on the grid of `u`.
pub fn apply_k(u: &GridField, obs: &ObservationSet) -> Result<Vec<f64>> {
    obs.forward_map(u.n())?.apply(u)
}

/// `1/2 eps^{-2c} |Sigma^{-1/2} (y - K u)|^2`.
pub fn misfit(u: &GridField, obs: &ObservationSet) -> Result<f64> {
    let ku = apply_k(u, obs)?;
    Ok(obs.misfit_from_ku(&ku))
}

/// Synthetic data `y = K(truth) + eps^c Sigma^{1/2} xi` with `K` evaluated on the truth grid.
/// Refuses truths that are not strictly finer than the inversion grid.
pub fn synthesize_data(
    truth: &TruthField,
    layout: &ObservationLayout,
    sigma: DMatrix<f64>,
    noise_scale: f64,
    n_inversion: usize,
    seed: u64,
) -> Result<ObservationSet> {
    if truth.n() <= n_inversion {
        return Err(Error::Refused(format!(
            "inverse crime: truth grid N={} must be finer than inversion grid N={n_inversion}",
            truth.n()
        )));
    }
    let clean = ForwardMap::new(layout, truth.n())?.apply(&truth.field)?;
    let mut obs = ObservationSet::new(layout.clone(), clean, sigma, noise_scale)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi = DVector::from_iterator(obs.len(), (0..obs.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let noise = obs.chol.l() * xi;
    for (y, e) in obs.y.iter_mut().zip(noise.iter()) {
        *y += noise_scale * e;
    }
    obs.seed = Some(seed);
    Ok(obs)
}
