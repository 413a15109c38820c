use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::PriorParams;

/// Odd transition profile sampled on `M + 1` uniform nodes over `[-T, T]`.
///
/// Only the half `t >= 0` is stored; `U(0) = 0` and `U(-t) = -U(t)` hold by construction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileGrid {
    t_max: f64,
    m: usize,
    half: Vec<f64>,
}

impl ProfileGrid {
    /// Samples `f` on `t >= 0` and extends it oddly. `M` must be even.
    pub fn from_fn(t_max: f64, m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        check_layout(t_max, m)?;
        let h = 2.0 * t_max / m as f64;
        let mut half: Vec<f64> = (0..=m / 2).map(|j| f(j as f64 * h)).collect();
        half[0] = 0.0;
        Ok(Self { t_max, m, half })
    }

    /// From the values `U(t_j)`, `t_j = j h`, `j = 0..=M/2`; the first must be 0.
    pub fn from_half_values(t_max: f64, half: Vec<f64>) -> Result<Self> {
        if half.len() < 2 {
            return Err(Error::Resolution("profile needs at least two nodes".into()));
        }
        let m = 2 * (half.len() - 1);
        check_layout(t_max, m)?;
        if half[0] != 0.0 {
            return Err(Error::Config("odd profile must vanish at t = 0".into()));
        }
        Ok(Self { t_max, m, half })
    }

    pub fn tanh(t_max: f64, m: usize, width: f64) -> Result<Self> {
        Self::from_fn(t_max, m, |t| (t / width).tanh())
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.t_max / self.m as f64
    }

    pub fn half_values(&self) -> &[f64] {
        &self.half
    }

    /// All `M + 1` node values from `-T` to `T`.
    pub fn values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.half.iter().rev().map(|x| -x).collect();
        v.extend_from_slice(&self.half[1..]);
        v
    }

    /// Catmull-Rom interpolation of the profile; `+-1` beyond `T`.
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return -self.eval(-t);
        }
        if t > self.t_max {
            return 1.0;
        }
        let h = self.spacing();
        let n = self.half.len() - 1;
        let s = t / h;
        let j = (s.floor() as usize).min(n - 1);
        let f = s - j as f64;
        let at = |k: isize| -> f64 {
            if k < 0 {
                -self.half[(-k) as usize]
            } else if k as usize > n {
                1.0
            } else {
                self.half[k as usize]
            }
        };
        let j = j as isize;
        let (p0, p1, p2, p3) = (at(j - 1), at(j), at(j + 1), at(j + 2));
        let f2 = f * f;
        let f3 = f2 * f;
        0.5 * (2.0 * p1
            + (p2 - p0) * f
            + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * f2
            + (3.0 * p1 - p0 - 3.0 * p2 + p3) * f3)
    }
}

fn check_layout(t_max: f64, m: usize) -> Result<()> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::Config("profile half-width must be > 0".into()));
    }
    if m < 16 {
        return Err(Error::Resolution(format!("profile grid needs M >= 16, got {m}")));
    }
    if !m.is_multiple_of(2) {
        return Err(Error::Config(format!("profile grid needs even M, got {m}")));
    }
    Ok(())
}

/// Discrete `e(U) = int 1/2 delta U''^2 + q/2 delta U'^2 + r/4 (1 - U^2)^2 dt`.
struct Discrete {
    h: f64,
    n: usize,
    delta: f64,
    q: f64,
    r: f64,
}

/// A linear functional of the unknowns `x_1..x_n` plus a constant.
struct Lin {
    idx: [usize; 3],
    coef: [f64; 3],
    len: usize,
    constant: f64,
}

impl Lin {
    fn eval(&self, x: &[f64]) -> f64 {
        (0..self.len).fold(self.constant, |acc, k| acc + self.coef[k] * x[self.idx[k]])
    }
}

impl Discrete {
    fn new(p: &PriorParams, t_max: f64, m: usize) -> Self {
        Self { h: 2.0 * t_max / m as f64, n: m / 2, delta: p.delta, q: p.q, r: p.r }
    }

    /// Quadrature weight of node `j` in the folded trapezoid rule.
    fn weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.n {
            self.h
        } else {
            2.0 * self.h
        }
    }

    /// Node value `x_k` as a term of a linear functional; `x_0 = 0`, `x_{-1} = -x_1`,
    /// `x_{n+1} = 1`.
    fn push(&self, lin: &mut Lin, k: isize, c: f64) {
        let n = self.n as isize;
        if k == 0 {
            return;
        }
        if k > n {
            lin.constant += c;
            return;
        }
        let (var, c) = if k < 0 { ((-k - 1) as usize, -c) } else { ((k - 1) as usize, c) };
        for s in 0..lin.len {
            if lin.idx[s] == var {
                lin.coef[s] += c;
                return;
            }
        }
        lin.idx[lin.len] = var;
        lin.coef[lin.len] = c;
        lin.len += 1;
    }

    fn second_difference(&self, j: usize) -> Lin {
        let mut l = Lin { idx: [0; 3], coef: [0.0; 3], len: 0, constant: 0.0 };
        let h2 = self.h * self.h;
        let j = j as isize;
        self.push(&mut l, j + 1, 1.0 / h2);
        self.push(&mut l, j, -2.0 / h2);
        self.push(&mut l, j - 1, 1.0 / h2);
        l
    }

    fn first_difference(&self, j: usize) -> Lin {
        let mut l = Lin { idx: [0; 3], coef: [0.0; 3], len: 0, constant: 0.0 };
        let j = j as isize;
        self.push(&mut l, j + 1, 0.5 / self.h);
        self.push(&mut l, j - 1, -0.5 / self.h);
        l
    }

    fn node(x: &[f64], j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            x[j - 1]
        }
    }

    fn energy(&self, x: &[f64]) -> f64 {
        let mut e = 0.0;
        for j in 0..=self.n {
            let d2 = self.second_difference(j).eval(x);
            let d1 = self.first_difference(j).eval(x);
            let u = Self::node(x, j);
            let well = 1.0 - u * u;
            e += self.weight(j)
                * (0.5 * self.delta * d2 * d2 + 0.5 * self.q * self.delta * d1 * d1 + 0.25 * self.r * well * well);
        }
        e
    }

    /// Energy, gradient and banded Hessian (`hess[i][d]` holds entry `(i, i + d)`).
    fn derivatives(&self, x: &[f64], grad: &mut [f64], hess: &mut [[f64; 3]]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        hess.iter_mut().for_each(|h| *h = [0.0; 3]);
        let mut e = 0.0;
        for j in 0..=self.n {
            let w = self.weight(j);
            for (lin, k) in [(self.second_difference(j), self.delta), (self.first_difference(j), self.q * self.delta)] {
                let v = lin.eval(x);
                e += w * 0.5 * k * v * v;
                for a in 0..lin.len {
                    grad[lin.idx[a]] += w * k * v * lin.coef[a];
                    for b in 0..lin.len {
                        let (ia, ib) = (lin.idx[a], lin.idx[b]);
                        if ib >= ia {
                            hess[ia][ib - ia] += w * k * lin.coef[a] * lin.coef[b];
                        }
                    }
                }
            }
            if j > 0 {
                let u = x[j - 1];
                let well = 1.0 - u * u;
                e += w * 0.25 * self.r * well * well;
                grad[j - 1] -= w * self.r * u * well;
                hess[j - 1][0] += w * self.r * (3.0 * u * u - 1.0);
            } else {
                e += w * 0.25 * self.r;
            }
        }
        e
    }
}

/// Factorises a symmetric matrix of bandwidth 2 in place as `L L^T`; `false` if not SPD.
fn banded_cholesky(a: &mut [[f64; 3]]) -> bool {
    // l[i][d] stores L(i, i - d)
    let n = a.len();
    let mut l = vec![[0.0f64; 3]; n];
    for i in 0..n {
        for d in (0..3).rev() {
            if d > i {
                continue;
            }
            let jcol = i - d;
            let mut s = a[jcol][d];
            for k in 1..3 {
                // sum over columns jcol - k shared by rows i and jcol
                if k > jcol || d + k > 2 {
                    continue;
                }
                s -= l[i][d + k] * l[jcol][k];
            }
            if d == 0 {
                if !(s > 0.0) || !s.is_finite() {
                    return false;
                }
                l[i][0] = s.sqrt();
            } else {
                l[i][d] = s / l[jcol][0];
            }
        }
    }
    for (dst, src) in a.iter_mut().zip(l) {
        *dst = src;
    }
    true
}

fn banded_solve(l: &[[f64; 3]], b: &mut [f64]) {
    let n = l.len();
    for i in 0..n {
        let mut s = b[i];
        for d in 1..3 {
            if d <= i {
                s -= l[i][d] * b[i - d];
            }
        }
        b[i] = s / l[i][0];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for d in 1..3 {
            if i + d < n {
                s -= l[i + d][d] * b[i + d];
            }
        }
        b[i] = s / l[i][0];
    }
}

/// Trapezoid quadrature of the profile energy with second-order central differences,
/// taking `U = +-1` beyond `[-T, T]`.
pub fn profile_energy(u: &ProfileGrid, p: &PriorParams) -> Result<f64> {
    check_layout(u.t_max, u.m)?;
    let d = Discrete::new(p, u.t_max, u.m);
    Ok(d.energy(&u.half[1..]))
}

/// Closed-form energy of `tanh(t / s)` on the whole line.
pub fn tanh_energy(s: f64, p: &PriorParams) -> f64 {
    8.0 * p.delta / (15.0 * s.powi(3)) + 2.0 * p.q * p.delta / (3.0 * s) + p.r * s / 3.0
}

/// Optimal `tanh` width and its energy, an upper bound for `P^delta`.
pub fn tanh_upper_bound(p: &PriorParams) -> (f64, f64) {
    let (d, q, r) = (p.delta, p.q, p.r);
    let s2 = (2.0 * q * d / 3.0 + (4.0 * q * q * d * d / 9.0 + 4.0 * r / 3.0 * 8.0 * d / 5.0).sqrt()) / (2.0 * r / 3.0);
    let s = s2.sqrt();
    (s, tanh_energy(s, p))
}

/// Lower bound `(8/3) sqrt(q delta r / 8)` obtained by dropping the curvature term.
pub fn modica_mortola_bound(p: &PriorParams) -> f64 {
    8.0 / 3.0 * (p.q * p.delta * p.r / 8.0).sqrt()
}

#[derive(Clone, Debug)]
pub struct PDeltaOptions {
    pub t_max: f64,
    pub m: usize,
    pub penalty: f64,
    pub start_widths: Vec<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PDeltaOptions {
    fn default() -> Self {
        Self { t_max: 10.0, m: 2048, penalty: 1e3, start_widths: vec![0.5, 1.0, 2.0], max_iter: 200, tol: 1e-13 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StartResult {
    pub width: f64,
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimal transition energy and the minimising profile.
#[derive(Clone, Debug, Serialize)]
pub struct PDelta {
    pub value: f64,
    pub profile: ProfileGrid,
    pub converged: bool,
    /// Set when no start converged; `value` is then the best energy seen.
    pub warning: bool,
    pub starts: Vec<StartResult>,
}

/// `P^delta = inf e(U)` over odd profiles, by damped Newton iteration from several `tanh`
/// starts.
pub fn p_delta(p: &PriorParams, opts: &PDeltaOptions) -> Result<PDelta> {
    if !(p.delta > 0.0 && p.q > 0.0 && p.r > 0.0) {
        return Err(Error::InvalidPrior("P^delta needs delta, q, r > 0".into()));
    }
    check_layout(opts.t_max, opts.m)?;
    let d = Discrete::new(p, opts.t_max, opts.m);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut starts = Vec::new();
    for &w in &opts.start_widths {
        let x0 = ProfileGrid::tanh(opts.t_max, opts.m, w)?.half[1..].to_vec();
        let (x, iterations, converged) = newton(&d, x0, opts);
        let energy = d.energy(&x);
        starts.push(StartResult { width: w, energy, iterations, converged });
        if best.as_ref().is_none_or(|b| energy < b.0) {
            best = Some((energy, x));
        }
    }
    let (value, x) = best.ok_or_else(|| Error::Config("no start widths".into()))?;
    let converged = starts.iter().any(|s| s.converged);
    if !converged {
        warn!("P^delta minimisation did not converge; reporting best value {value}");
    }
    let mut half = vec![0.0];
    half.extend(x);
    Ok(PDelta {
        value,
        profile: ProfileGrid { t_max: opts.t_max, m: opts.m, half },
        converged,
        warning: !converged,
        starts,
    })
}

fn newton(d: &Discrete, mut x: Vec<f64>, opts: &PDeltaOptions) -> (Vec<f64>, usize, bool) {
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut hess = vec![[0.0; 3]; n];
    let objective = |x: &[f64]| d.energy(x) + opts.penalty * (x[n - 1] - 1.0).powi(2);
    for it in 0..opts.max_iter {
        let e = d.derivatives(&x, &mut grad, &mut hess) + opts.penalty * (x[n - 1] - 1.0).powi(2);
        grad[n - 1] += 2.0 * opts.penalty * (x[n - 1] - 1.0);
        hess[n - 1][0] += 2.0 * opts.penalty;

        let scale = hess.iter().map(|h| h[0].abs()).fold(0.0, f64::max);
        let mut shift = 0.0;
        let mut step = grad.iter().map(|g| -g).collect::<Vec<_>>();
        loop {
            let mut l = hess.clone();
            l.iter_mut().for_each(|r| r[0] += shift);
            if banded_cholesky(&mut l) {
                banded_solve(&l, &mut step);
                break;
            }
            shift = if shift == 0.0 { 1e-10 * scale } else { shift * 10.0 };
        }
        let decrement: f64 = -grad.iter().zip(&step).map(|(g, s)| g * s).sum::<f64>();
        if decrement.abs() <= opts.tol * e.abs().max(1e-300) {
            return (x, it, true);
        }
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            if objective(&trial) <= e - 1e-4 * t * decrement || t < 1e-12 {
                x = trial;
                break;
            }
            t *= 0.5;
        }
    }
    (x, opts.max_iter, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> PriorParams {
        PriorParams { delta: 0.01, q: 0.1, r: 1.0, ..PriorParams::phase_field_small_noise() }
    }

    // independent oracle: dense Cholesky of the expanded matrix
    #[test]
    fn banded_cholesky_matches_dense() {
        let n = 7;
        let mut band = vec![[0.0; 3]; n];
        let mut dense = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            band[i] = [6.0 + i as f64, -1.0 - 0.1 * i as f64, 0.5];
            for d in 0..3 {
                if i + d < n {
                    dense[(i, i + d)] = band[i][d];
                    dense[(i + d, i)] = band[i][d];
                }
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let expected = dense.cholesky().unwrap().solve(&nalgebra::DVector::from_vec(b.clone()));
        assert!(banded_cholesky(&mut band));
        let mut got = b;
        banded_solve(&band, &mut got);
        for i in 0..n {
            assert!((got[i] - expected[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn banded_cholesky_detects_indefinite() {
        let mut band = vec![[1.0, 2.0, 0.0], [1.0, 0.0, 0.0]];
        assert!(!banded_cholesky(&mut band));
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let p = params();
        let d = Discrete::new(&p, 2.0, 16);
        let x: Vec<f64> = (1..=8).map(|j| (j as f64 * 0.3).tanh() * 0.9).collect();
        let mut g = vec![0.0; 8];
        let mut h = vec![[0.0; 3]; 8];
        let e = d.derivatives(&x, &mut g, &mut h);
        assert!((e - d.energy(&x)).abs() < 1e-14);
        let step = 1e-6;
        for i in 0..8 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += step;
            xm[i] -= step;
            let fd = (d.energy(&xp) - d.energy(&xm)) / (2.0 * step);
            assert!((fd - g[i]).abs() < 1e-6 * g[i].abs().max(1.0), "grad {i}: {fd} vs {}", g[i]);
            let mut gp = vec![0.0; 8];
            let mut gm = vec![0.0; 8];
            let mut tmp = vec![[0.0; 3]; 8];
            d.derivatives(&xp, &mut gp, &mut tmp);
            d.derivatives(&xm, &mut gm, &mut tmp);
            for dd in 0..3 {
                if i + dd < 8 {
                    let fd = (gp[i + dd] - gm[i + dd]) / (2.0 * step);
                    assert!((fd - h[i][dd]).abs() < 1e-5 * h[i][dd].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn small_grid_is_a_resolution_error() {
        assert!(matches!(ProfileGrid::tanh(10.0, 8, 1.0), Err(Error::Resolution(_))));
    }

    #[test]
    fn tanh_quadrature_matches_closed_form_and_refines() {
        let p = params();
        let s = 0.6;
        let exact = tanh_energy(s, &p);
        let coarse = profile_energy(&ProfileGrid::tanh(10.0, 2048, s).unwrap(), &p).unwrap();
        let fine = profile_energy(&ProfileGrid::tanh(10.0, 4096, s).unwrap(), &p).unwrap();
        assert!((fine - exact).abs() < 1e-4 * exact, "{fine} vs {exact}");
        assert!((coarse - fine).abs() < 1e-4 * fine);
        assert!((fine - exact).abs() < (coarse - exact).abs());
    }

    #[test]
    fn tail_beyond_t_is_negligible() {
        let p = params();
        let s = 0.5;
        // decay rate 2/s; T = 20 s / 2 covers it
        let a = profile_energy(&ProfileGrid::tanh(5.0, 1024, s).unwrap(), &p).unwrap();
        let b = profile_energy(&ProfileGrid::tanh(10.0, 2048, s).unwrap(), &p).unwrap();
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn optimal_width_is_a_stationary_point() {
        let p = params();
        let (s, e) = tanh_upper_bound(&p);
        assert!((s - 0.469).abs() < 1e-3);
        assert!((e - 0.2095).abs() < 1e-3);
        for ds in [1e-3, -1e-3] {
            assert!(tanh_energy(s + ds, &p) > e);
        }
    }

    #[test]
    fn recentred_shift_keeps_energy() {
        let p = params();
        let (s, _) = tanh_upper_bound(&p);
        let base = ProfileGrid::tanh(10.0, 2048, s).unwrap();
        // locate the root of the shifted profile and recentre on it
        let (mut lo, mut hi) = (0.0, 10.0);
        let full = |t: f64| ((t - 0.37) / s).tanh();
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if full(mid) < 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let root = 0.5 * (lo + hi);
        let recentred = ProfileGrid::from_fn(10.0, 2048, |t| full(t + root)).unwrap();
        let e0 = profile_energy(&base, &p).unwrap();
        let e1 = profile_energy(&recentred, &p).unwrap();
        assert!((e0 - e1).abs() < 1e-6);
    }

    #[test]
    fn p_delta_sandwich_and_stability() {
        let p = params();
        let r = p_delta(&p, &PDeltaOptions::default()).unwrap();
        assert!(r.converged && !r.warning);
        let lower = modica_mortola_bound(&p);
        let (_, upper) = tanh_upper_bound(&p);
        assert!(lower <= r.value && r.value <= upper, "{lower} <= {} <= {upper}", r.value);
        let fine = p_delta(&p, &PDeltaOptions { m: 4096, ..Default::default() }).unwrap();
        assert!((fine.value - r.value).abs() < 1e-3 * r.value);
        let u = &r.profile;
        assert_eq!(u.eval(0.0), 0.0);
        assert!((u.eval(u.t_max()) - 1.0).abs() < 1e-6);
        assert!((u.eval(-1.3) + u.eval(1.3)).abs() < 1e-15);
    }

    #[test]
    fn p_delta_nondecreasing_in_delta() {
        let mut last = 0.0;
        for delta in [0.005, 0.01, 0.02, 0.04] {
            let p = PriorParams { delta, ..params() };
            let v = p_delta(&p, &PDeltaOptions { m: 1024, ..Default::default() }).unwrap().value;
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn p_delta_needs_positive_parameters() {
        let p = PriorParams { q: 0.0, ..params() };
        assert!(p_delta(&p, &PDeltaOptions::default()).is_err());
    }

    #[test]
    fn interpolation_reproduces_nodes() {
        let u = ProfileGrid::tanh(4.0, 64, 0.7).unwrap();
        let h = u.spacing();
        for (j, v) in u.half_values().iter().enumerate() {
            assert!((u.eval(j as f64 * h) - v).abs() < 1e-12);
        }
        assert_eq!(u.values().len(), 65);
        assert_eq!(u.eval(5.0), 1.0);
        assert_eq!(u.eval(-5.0), -1.0);
    }
}
