//! Real-valued fields sampled on the uniform periodic `N x N` grid of the unit square.
//!
//! Node `(i, j)` sits at `(x_i, y_j) = (i / N, j / N)` and is stored at `values[i * N + j]`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Continuous,
    /// Every value lies in `{-1, 0, +1}`.
    Binary,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::Continuous => "continuous",
            FieldKind::Binary => "binary",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    n: usize,
    values: Vec<f64>,
    kind: FieldKind,
}

fn is_ternary(v: f64) -> bool {
    v == 1.0 || v == -1.0 || v == 0.0
}

impl GridField {
    pub fn zeros(n: usize) -> Self {
        Self { n, values: vec![0.0; n * n], kind: FieldKind::Continuous }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self { n, values: vec![value; n * n], kind: FieldKind::Continuous }
    }

    /// Continuous field from row-major values.
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Config(format!("expected {} values for N={n}, got {}", n * n, values.len())));
        }
        Ok(Self { n, values, kind: FieldKind::Continuous })
    }

    /// Binary field from row-major values; every value must lie in `{-1, 0, +1}`.
    pub fn binary_from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        let mut f = Self::from_values(n, values)?;
        if !f.values.iter().all(|&v| is_ternary(v)) {
            return Err(Error::NotBinary);
        }
        f.kind = FieldKind::Binary;
        Ok(f)
    }

    /// Samples `f(x, y)` at every grid node.
    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let h = 1.0 / n as f64;
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(f(i as f64 * h, j as f64 * h));
            }
        }
        Self { n, values, kind: FieldKind::Continuous }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.kind = FieldKind::Continuous;
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Periodic access with signed indices.
    #[inline]
    pub fn get_wrapped(&self, i: isize, j: isize) -> f64 {
        let n = self.n as isize;
        self.get(i.rem_euclid(n) as usize, j.rem_euclid(n) as usize)
    }

    pub fn is_binary(&self) -> bool {
        self.kind == FieldKind::Binary
    }

    /// Mean value over the grid, i.e. the quadrature of the field over the unit square.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { n: self.n, values: self.values.iter().map(|&v| f(v)).collect(), kind: FieldKind::Continuous }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.map(|v| a * v);
        if self.is_binary() && (a == 1.0 || a == -1.0) {
            out.kind = FieldKind::Binary;
        }
        out
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &GridField, b: f64) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            n: self.n,
            values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect(),
            kind: FieldKind::Continuous,
        })
    }

    pub fn check_same_grid(&self, other: &GridField) -> Result<()> {
        if self.n != other.n {
            return Err(Error::GridMismatch { expected: self.n, got: other.n });
        }
        Ok(())
    }

    /// Relative L2 distance `|self - other| / |other|` under grid quadrature.
    pub fn rel_l2_distance(&self, other: &GridField) -> Result<f64> {
        self.check_same_grid(other)?;
        let num: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = other.values.iter().map(|b| b * b).sum();
        Ok((num / den).sqrt())
    }

    /// Periodic translation by whole cells: `out(i, j) = self(i - di, j - dj)`.
    pub fn translated(&self, di: isize, dj: isize) -> Self {
        let n = self.n;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = self.get_wrapped(i as isize - di, j as isize - dj);
            }
        }
        Self { n, values, kind: self.kind }
    }

    /// Majority-vote downsampling of a binary field onto an `m x m` grid. Each coarse node
    /// takes the sign of the area-weighted mean of the fine field over its cell
    /// (ties become 0), so `m` need not divide `N`.
    pub fn downsample_majority(&self, m: usize) -> Result<Self> {
        if !self.is_binary() {
            return Err(Error::NotBinary);
        }
        if m == 0 || m > self.n {
            return Err(Error::Config(format!("cannot downsample N={} to N={m}", self.n)));
        }
        let cell = 1.0 / m as f64;
        let axis: Vec<Vec<(usize, f64)>> = (0..m).map(|c| window_weights_1d(c as f64 * cell, cell, self.n)).collect();
        let mut values = Vec::with_capacity(m * m);
        for wx in &axis {
            for wy in &axis {
                let mut s = 0.0;
                for &(i, a) in wx {
                    for &(j, b) in wy {
                        s += a * b * self.get(i, j);
                    }
                }
                // exact ties can come out as +-1e-17
                values.push(if s > 1e-12 {
                    1.0
                } else if s < -1e-12 {
                    -1.0
                } else {
                    0.0
                });
            }
        }
        Self::binary_from_values(m, values)
    }

    /// Row-major CSV: a `N,kind` header line, a line with the values of the header,
    /// then `N` lines of `N` values. Floats use 17 significant digits so that the
    /// text form round-trips exactly.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 25 + 32);
        s.push_str("N,kind\n");
        let _ = writeln!(s, "{},{}", self.n, self.kind.as_str());
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{:.16e}", self.get(i, j));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("N,kind") => {}
            other => return Err(Error::Parse(format!("bad field header: {other:?}"))),
        }
        let meta = lines.next().ok_or_else(|| Error::Parse("missing N,kind line".into()))?;
        let (n_str, kind_str) =
            meta.split_once(',').ok_or_else(|| Error::Parse(format!("bad metadata line: {meta}")))?;
        let n: usize = n_str.trim().parse().map_err(|e| Error::Parse(format!("bad N '{n_str}': {e}")))?;
        let mut values = Vec::with_capacity(n * n);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            for tok in line.split(',') {
                values.push(tok.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad value '{tok}': {e}")))?);
            }
        }
        match kind_str.trim() {
            "continuous" => Self::from_values(n, values),
            "binary" => Self::binary_from_values(n, values),
            other => Err(Error::Parse(format!("unknown field kind '{other}'"))),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv_str(&fs::read_to_string(path)?)
    }

    /// Writes an 8-bit binary graymap (`P5`) and a JSON sidecar recording the affine
    /// value-to-gray mapping. Image rows run from `y` near 1 (top) to `y = 0` (bottom),
    /// columns run along `x`.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let n = self.n;
        let (lo, hi) =
            self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
        let mut bytes = format!("P5\n{n} {n}\n255\n").into_bytes();
        for r in 0..n {
            let j = n - 1 - r;
            for i in 0..n {
                let g = if scale > 0.0 { ((self.get(i, j) - lo) * scale).round() } else { 128.0 };
                bytes.push(g.clamp(0.0, 255.0) as u8);
            }
        }
        fs::File::create(path)?.write_all(&bytes)?;
        let sidecar = serde_json::json!({
            "n": n,
            "kind": self.kind.as_str(),
            "value_min": lo,
            "value_max": hi,
            "gray_per_unit": scale,
            "mapping": "gray = round((value - value_min) * gray_per_unit)",
            "orientation": "rows top-to-bottom are y descending, columns are x ascending",
        });
        fs::write(path.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }
}

/// Normalised overlap weights of the periodic interval `[center - width/2, center + width/2]`
/// with the node cells `[(i - 1/2)/n, (i + 1/2)/n]` of an `n`-point axis. Requires `width <= 1`.
pub fn window_weights_1d(center: f64, width: f64, n: usize) -> Vec<(usize, f64)> {
    let h = 1.0 / n as f64;
    let lo = center - 0.5 * width;
    let hi = center + 0.5 * width;
    let first = (lo / h - 0.5).floor() as i64;
    let last = (hi / h + 0.5).ceil() as i64;
    let mut acc: Vec<(usize, f64)> = Vec::new();
    for m in first..=last {
        let a = lo.max((m as f64 - 0.5) * h);
        let b = hi.min((m as f64 + 0.5) * h);
        if b > a {
            let idx = m.rem_euclid(n as i64) as usize;
            match acc.iter_mut().find(|p| p.0 == idx) {
                Some(p) => p.1 += (b - a) / width,
                None => acc.push((idx, (b - a) / width)),
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_constructor_rejects_other_values() {
        assert!(matches!(GridField::binary_from_values(2, vec![1.0, -1.0, 0.0, 0.5]), Err(Error::NotBinary)));
        assert!(GridField::binary_from_values(2, vec![1.0, -1.0, 0.0, 1.0]).is_ok());
    }

    #[test]
    fn wrong_length_is_config_error() {
        assert!(matches!(GridField::from_values(3, vec![0.0; 8]), Err(Error::Config(_))));
    }

    #[test]
    fn majority_vote_downsampling() {
        // Disc on a fine grid, majority-voted onto coarse grids that do and do not divide N.
        let disc = |n: usize| {
            let vals =
                GridField::from_fn(n, |x, y| if (x - 0.5).powi(2) + (y - 0.5).powi(2) < 0.09 { 1.0 } else { -1.0 });
            GridField::binary_from_values(n, vals.into_values()).unwrap()
        };
        let fine = disc(240);
        for m in [16, 30, 37] {
            let c = fine.downsample_majority(m).unwrap();
            let direct = disc(m);
            let agree = c.values().iter().zip(direct.values()).filter(|(a, b)| a == b).count();
            assert!(agree as f64 / (m * m) as f64 > 0.95, "m={m}");
        }
        assert!(GridField::zeros(4).downsample_majority(2).is_err());
    }

    #[test]
    fn window_weights_sum_to_one() {
        for (c, w, n) in [(0.0, 0.1, 32), (0.99, 0.25, 17), (0.5, 1.0, 8), (0.3, 1.0 / 64.0, 64)] {
            let ws = window_weights_1d(c, w, n);
            let total: f64 = ws.iter().map(|p| p.1).sum();
            assert!((total - 1.0).abs() < 1e-14);
            assert!(ws.iter().all(|p| p.0 < n && p.1 > 0.0));
        }
        let whole = window_weights_1d(0.5, 1.0, 8);
        assert_eq!(whole.len(), 8);
        assert!(whole.iter().all(|p| (p.1 - 0.125).abs() < 1e-15));
    }

    #[test]
    fn pgm_has_expected_size() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.pgm");
        GridField::from_fn(8, |x, y| x - y).write_pgm(&p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), "P5\n8 8\n255\n".len() + 64);
        assert!(dir.path().join("f.json").exists());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(vals in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 9)) {
            let f = GridField::from_values(3, vals).unwrap();
            let g = GridField::from_csv_str(&f.to_csv_string()).unwrap();
            prop_assert_eq!(f, g);
        }
    }
}
