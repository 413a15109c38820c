//! Preconditioned Crank-Nicolson sampling of `exp(-A(u))` against `N(0, C^{alpha/2})`.
//!
//! The chain state is held as Karhunen-Loeve coefficients. Each step draws one prior
//! sample in coefficient space, performs one inverse transform and evaluates `A` once.
//! Every step consumes the same random numbers whether or not it is accepted, so a chain
//! is a deterministic function of its seed and stream and can be checkpointed exactly.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::energy::perimeter_estimate;
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::posterior::{threshold, Potential, TargetKind, TargetSpec};
use crate::spectral::{PriorSpectrum, SpectralField};

/// Acceptance rates are reported over non-overlapping windows of this many steps.
pub const ACCEPT_WINDOW: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainConfig {
    pub beta: f64,
    /// Total number of steps `M`.
    pub steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Substream of `seed` used by this chain.
    pub stream: u64,
    /// Thinning of the `A` and perimeter traces.
    pub thin: usize,
    /// Every `mean_stride`-th post-burn-in state enters the ergodic means.
    pub mean_stride: usize,
    pub record_perimeter: bool,
}

impl ChainConfig {
    /// Burn-in `M/2`, thinning 100, every state in the mean.
    pub fn new(beta: f64, steps: usize, seed: u64) -> Self {
        Self { beta, steps, burn_in: steps / 2, seed, stream: 0, thin: 100, mean_stride: 1, record_perimeter: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if self.steps <= self.burn_in {
            return Err(Error::Config(format!("steps ({}) must exceed burn-in ({})", self.steps, self.burn_in)));
        }
        if self.thin == 0 || self.mean_stride == 0 {
            return Err(Error::Config("thinning and mean stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// Everything needed to continue a chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub coeffs: SpectralField,
    pub a_current: f64,
    pub step: u64,
    pub beta: f64,
    pub burn_in: u64,
    pub seed: u64,
    pub stream: u64,
    /// Position of the chain's generator.
    pub word_pos: u128,
    pub accepted: u64,
    /// Acceptances in the current (incomplete) window.
    pub window_accepts: u32,
    /// Outcomes of the most recent steps, at most [`ACCEPT_WINDOW`].
    pub recent: VecDeque<bool>,
    pub running_sum: Vec<f64>,
    pub running_sum_sign: Vec<f64>,
    pub n_summed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ChainDiagnostics {
    /// `(last step of window, acceptance rate)` per completed window.
    pub acceptance: Vec<(u64, f64)>,
    /// `(step, A)` every `thin` steps.
    pub a_trace: Vec<(u64, f64)>,
    /// `(step, l(N) of S(u))` every `thin` steps, when recorded.
    pub perimeter_trace: Vec<(u64, f64)>,
}

impl ChainDiagnostics {
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("step,acceptance_rate,A,perimeter\n");
        let mut acc = self.acceptance.iter().peekable();
        let mut per = self.perimeter_trace.iter().peekable();
        for &(step, a) in &self.a_trace {
            let rate = match acc.peek() {
                Some(&&(st, r)) if st == step => {
                    acc.next();
                    format!("{r}")
                }
                _ => String::new(),
            };
            let p = match per.peek() {
                Some(&&(st, v)) if st == step => {
                    per.next();
                    format!("{v:.12e}")
                }
                _ => String::new(),
            };
            s.push_str(&format!("{step},{rate},{a:.12e},{p}\n"));
        }
        s
    }

    /// Post-burn-in perimeter samples.
    pub fn perimeters_after(&self, burn_in: u64) -> Vec<f64> {
        self.perimeter_trace.iter().filter(|(s, _)| *s > burn_in).map(|(_, v)| *v).collect()
    }
}

/// Index of the first window from which the acceptance rate changes by less than `rel_tol`
/// (relative) between consecutive windows for `run` consecutive windows. Two zero rates in
/// a row count as stable.
pub fn stabilisation_window(rates: &[f64], rel_tol: f64, run: usize) -> Option<usize> {
    let stable = |a: f64, b: f64| {
        if a == 0.0 && b == 0.0 {
            true
        } else if a == 0.0 {
            false
        } else {
            ((b - a) / a).abs() < rel_tol
        }
    };
    let mut streak = 0;
    for k in 1..rates.len() {
        if stable(rates[k - 1], rates[k]) {
            streak += 1;
            if streak == run {
                return Some(k - run);
            }
        } else {
            streak = 0;
        }
    }
    None
}

/// Result of a finished chain.
#[derive(Clone, Debug)]
pub struct ChainOutput {
    /// Ergodic mean of the post-burn-in states.
    pub mean: GridField,
    /// `S(mean)`.
    pub thresholded_mean: GridField,
    /// Ergodic mean of `S(u)`.
    pub mean_of_sign: GridField,
    pub diagnostics: ChainDiagnostics,
    pub acceptance_rate: f64,
    pub state: ChainState,
    pub checkpoints: Vec<ChainState>,
}

/// A single pCN chain over a fixed prior spectrum and potential.
pub struct Chain<'a, P: Potential> {
    spectrum: &'a PriorSpectrum,
    potential: P,
    config: ChainConfig,
    rng: ChaCha8Rng,
    state: ChainState,
    field: GridField,
    diagnostics: ChainDiagnostics,
    xi: SpectralField,
    proposal: SpectralField,
}

fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl<'a, P: Potential> Chain<'a, P> {
    /// Starts from a prior draw taken from the chain's own stream.
    pub fn new(spectrum: &'a PriorSpectrum, potential: P, config: ChainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = chain_rng(config.seed, config.stream);
        let mut coeffs = SpectralField::zeros(spectrum.n());
        spectrum.draw_coeffs(&mut rng, &mut coeffs);
        Self::start_from(spectrum, potential, config, coeffs, rng)
    }

    /// Starts from given coefficients.
    pub fn from_coeffs(
        spectrum: &'a PriorSpectrum,
        potential: P,
        config: ChainConfig,
        coeffs: SpectralField,
    ) -> Result<Self> {
        config.validate()?;
        let rng = chain_rng(config.seed, config.stream);
        Self::start_from(spectrum, potential, config, coeffs, rng)
    }

    fn start_from(
        spectrum: &'a PriorSpectrum,
        potential: P,
        config: ChainConfig,
        coeffs: SpectralField,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let n = spectrum.n();
        if coeffs.n() != n {
            return Err(Error::GridMismatch { expected: n, got: coeffs.n() });
        }
        let field = spectrum.synthesise(&coeffs);
        let a_current = potential.value(&field);
        let state = ChainState {
            coeffs,
            a_current,
            step: 0,
            beta: config.beta,
            burn_in: config.burn_in as u64,
            seed: config.seed,
            stream: config.stream,
            word_pos: rng.get_word_pos(),
            accepted: 0,
            window_accepts: 0,
            recent: VecDeque::with_capacity(ACCEPT_WINDOW),
            running_sum: vec![0.0; n * n],
            running_sum_sign: vec![0.0; n * n],
            n_summed: 0,
        };
        Ok(Self {
            spectrum,
            potential,
            config,
            rng,
            state,
            field,
            diagnostics: ChainDiagnostics::default(),
            xi: SpectralField::zeros(n),
            proposal: SpectralField::zeros(n),
        })
    }

    /// Resumes from a checkpoint; `config` supplies the run length and recording options.
    pub fn resume(
        spectrum: &'a PriorSpectrum,
        potential: P,
        config: ChainConfig,
        checkpoint: Checkpoint,
    ) -> Result<Self> {
        config.validate()?;
        let Checkpoint { state, diagnostics } = checkpoint;
        let n = spectrum.n();
        if state.coeffs.n() != n {
            return Err(Error::GridMismatch { expected: n, got: state.coeffs.n() });
        }
        if state.seed != config.seed || state.stream != config.stream || state.beta != config.beta {
            return Err(Error::Checkpoint("checkpoint does not match the chain configuration".into()));
        }
        let mut rng = chain_rng(state.seed, state.stream);
        rng.set_word_pos(state.word_pos);
        let field = spectrum.synthesise(&state.coeffs);
        Ok(Self {
            spectrum,
            potential,
            config,
            rng,
            state,
            field,
            diagnostics,
            xi: SpectralField::zeros(n),
            proposal: SpectralField::zeros(n),
        })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    /// Current grid field.
    pub fn field(&self) -> &GridField {
        &self.field
    }

    pub fn diagnostics(&self) -> &ChainDiagnostics {
        &self.diagnostics
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { state: self.state.clone(), diagnostics: self.diagnostics.clone() }
    }

    /// One pCN step; returns whether the proposal was accepted.
    pub fn step(&mut self) -> bool {
        let beta = self.config.beta;
        let keep = (1.0 - beta * beta).sqrt();
        self.spectrum.draw_coeffs(&mut self.rng, &mut self.xi);
        let uniform: f64 = self.rng.random();
        for ((p, c), x) in self.proposal.coeffs_mut().iter_mut().zip(self.state.coeffs.coeffs()).zip(self.xi.coeffs()) {
            *p = *c * keep + *x * beta;
        }
        let candidate = self.spectrum.synthesise(&self.proposal);
        let a_new = self.potential.value(&candidate);
        let log_ratio = self.state.a_current - a_new;
        let accept = log_ratio >= 0.0 || uniform.ln() < log_ratio;
        if accept {
            std::mem::swap(&mut self.state.coeffs, &mut self.proposal);
            self.field = candidate;
            self.state.a_current = a_new;
        }
        self.record(accept);
        accept
    }

    fn record(&mut self, accept: bool) {
        let st = &mut self.state;
        st.step += 1;
        st.word_pos = self.rng.get_word_pos();
        if accept {
            st.accepted += 1;
            st.window_accepts += 1;
        }
        if st.recent.len() == ACCEPT_WINDOW {
            st.recent.pop_front();
        }
        st.recent.push_back(accept);
        let step = st.step;
        if step.is_multiple_of(ACCEPT_WINDOW as u64) {
            self.diagnostics.acceptance.push((step, st.window_accepts as f64 / ACCEPT_WINDOW as f64));
            st.window_accepts = 0;
        }
        if step.is_multiple_of(self.config.thin as u64) {
            self.diagnostics.a_trace.push((step, st.a_current));
            if self.config.record_perimeter {
                let ell = perimeter_estimate(&threshold(&self.field)).expect("thresholded field is binary");
                self.diagnostics.perimeter_trace.push((step, ell));
            }
        }
        if step > st.burn_in && (step - st.burn_in).is_multiple_of(self.config.mean_stride as u64) {
            for ((s, g), &v) in st.running_sum.iter_mut().zip(&mut st.running_sum_sign).zip(self.field.values()) {
                *s += v;
                *g += if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
            st.n_summed += 1;
        }
    }

    /// Steps until the configured length is reached, saving a checkpoint every
    /// `checkpoint_every` steps when given.
    pub fn run(mut self, checkpoint_every: Option<usize>) -> Result<ChainOutput> {
        let mut checkpoints = Vec::new();
        while self.state.step < self.config.steps as u64 {
            self.step();
            if let Some(every) = checkpoint_every {
                if every > 0 && self.state.step.is_multiple_of(every as u64) {
                    checkpoints.push(self.state.clone());
                }
            }
        }
        self.finish(checkpoints)
    }

    /// Steps until `step` (or the configured length) without finishing.
    pub fn advance_to(&mut self, step: u64) {
        let stop = step.min(self.config.steps as u64);
        while self.state.step < stop {
            self.step();
        }
    }

    fn finish(self, checkpoints: Vec<ChainState>) -> Result<ChainOutput> {
        let n = self.spectrum.n();
        let k = self.state.n_summed.max(1) as f64;
        let mean = GridField::from_values(n, self.state.running_sum.iter().map(|s| s / k).collect())?;
        let mean_of_sign = GridField::from_values(n, self.state.running_sum_sign.iter().map(|s| s / k).collect())?;
        let acceptance_rate = self.state.accepted as f64 / self.state.step.max(1) as f64;
        Ok(ChainOutput {
            thresholded_mean: threshold(&mean),
            mean,
            mean_of_sign,
            diagnostics: self.diagnostics,
            acceptance_rate,
            state: self.state,
            checkpoints,
        })
    }
}

/// Runs a chain for a target on an `N x N` grid.
pub fn run_chain(target: &TargetSpec, n: usize, config: ChainConfig) -> Result<ChainOutput> {
    let spectrum = PriorSpectrum::new(&target.prior, n)?;
    let potential = crate::posterior::TargetPotential::new(target, n)?;
    Chain::new(&spectrum, potential, config)?.run(None)
}

/// Independent chains on disjoint substreams `0..chains` of the same seed, run concurrently.
pub fn run_chains<P: Potential + Clone + Sync + Send>(
    spectrum: &PriorSpectrum,
    potential: &P,
    config: &ChainConfig,
    chains: usize,
) -> Result<Vec<ChainOutput>> {
    (0..chains as u64)
        .into_par_iter()
        .map(|stream| {
            let cfg = ChainConfig { stream, ..config.clone() };
            Chain::new(spectrum, potential.clone(), cfg)?.run(None)
        })
        .collect()
}

/// Serialised chain state plus the diagnostics gathered so far.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: ChainState,
    pub diagnostics: ChainDiagnostics,
}

const MAGIC: &[u8; 8] = b"BINVCKPT";
const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|x| self.f64(*x));
    }
    fn pairs(&mut self, v: &[(u64, f64)]) {
        self.u64(v.len() as u64);
        for &(a, b) in v {
            self.u64(a);
            self.f64(b);
        }
    }
}

struct Reader<'b> {
    buf: &'b [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const K: usize>(&mut self) -> Result<[u8; K]> {
        let end = self.pos + K;
        let bytes = self.buf.get(self.pos..end).ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        self.pos = end;
        Ok(bytes.try_into().expect("length checked"))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
    fn len(&mut self, max: usize) -> Result<usize> {
        let k = self.u64()? as usize;
        if k > max {
            return Err(Error::Checkpoint(format!("implausible length {k}")));
        }
        Ok(k)
    }
    fn f64s(&mut self, max: usize) -> Result<Vec<f64>> {
        let k = self.len(max)?;
        (0..k).map(|_| self.f64()).collect()
    }
    fn pairs(&mut self) -> Result<Vec<(u64, f64)>> {
        let k = self.len(self.buf.len() / 16)?;
        (0..k).map(|_| Ok((self.u64()?, self.f64()?))).collect()
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.state;
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.u64(s.coeffs.n() as u64);
        for c in s.coeffs.coeffs() {
            w.f64(c.re);
            w.f64(c.im);
        }
        w.f64(s.a_current);
        w.u64(s.step);
        w.f64(s.beta);
        w.u64(s.burn_in);
        w.u64(s.seed);
        w.u64(s.stream);
        w.u128(s.word_pos);
        w.u64(s.accepted);
        w.u32(s.window_accepts);
        w.u64(s.recent.len() as u64);
        s.recent.iter().for_each(|&b| w.0.push(b as u8));
        w.f64s(&s.running_sum);
        w.f64s(&s.running_sum_sign);
        w.u64(s.n_summed);
        w.pairs(&self.diagnostics.acceptance);
        w.pairs(&self.diagnostics.a_trace);
        w.pairs(&self.diagnostics.perimeter_trace);
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        if buf.len() < 12 || &buf[..8] != MAGIC {
            return Err(Error::Checkpoint("not a chain checkpoint".into()));
        }
        let mut r = Reader { buf, pos: 8 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let n = r.u64()? as usize;
        if n == 0 || n.saturating_mul(n).saturating_mul(16) > buf.len() {
            return Err(Error::Checkpoint("bad grid size".into()));
        }
        let coeffs = (0..n * n).map(|_| Ok(Complex64::new(r.f64()?, r.f64()?))).collect::<Result<Vec<_>>>()?;
        let coeffs = SpectralField::from_coeffs(n, coeffs)?;
        let a_current = r.f64()?;
        let step = r.u64()?;
        let beta = r.f64()?;
        let burn_in = r.u64()?;
        let seed = r.u64()?;
        let stream = r.u64()?;
        let word_pos = r.u128()?;
        let accepted = r.u64()?;
        let window_accepts = r.u32()?;
        let k = r.len(ACCEPT_WINDOW)?;
        let mut recent = VecDeque::with_capacity(ACCEPT_WINDOW);
        for _ in 0..k {
            recent.push_back(r.take::<1>()?[0] != 0);
        }
        let running_sum = r.f64s(n * n)?;
        let running_sum_sign = r.f64s(n * n)?;
        if running_sum.len() != n * n || running_sum_sign.len() != n * n {
            return Err(Error::Checkpoint("accumulator size mismatch".into()));
        }
        let n_summed = r.u64()?;
        let diagnostics = ChainDiagnostics { acceptance: r.pairs()?, a_trace: r.pairs()?, perimeter_trace: r.pairs()? };
        if r.pos != buf.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self {
            state: ChainState {
                coeffs,
                a_current,
                step,
                beta,
                burn_in,
                seed,
                stream,
                word_pos,
                accepted,
                window_accepts,
                recent,
                running_sum,
                running_sum_sign,
                n_summed,
            },
            diagnostics,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

/// Equal-width histogram.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
        let mut counts = vec![0; bins];
        for &s in samples {
            if s < lo || s > hi || width <= 0.0 {
                continue;
            }
            let k = (((s - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self { edges, counts }
    }

    /// Centre of the fullest bin.
    pub fn mode(&self) -> f64 {
        let k = (0..self.counts.len()).max_by_key(|&k| (self.counts[k], std::cmp::Reverse(k))).unwrap_or(0);
        0.5 * (self.edges[k] + self.edges[k + 1])
    }
}

pub fn sample_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Critical value of the two-sample KS statistic at the 5% level.
pub fn ks_critical_5pc(n: usize, m: usize) -> f64 {
    1.358 * ((n + m) as f64 / (n * m) as f64).sqrt()
}

/// Prior and posterior distributions of the interface length of `S(v)`.
#[derive(Clone, Debug, Serialize)]
pub struct PerimeterPosterior {
    pub prior: Histogram,
    pub posterior: Histogram,
    pub prior_std: f64,
    pub posterior_std: f64,
    pub truth: f64,
    pub ks_statistic: f64,
}

impl PerimeterPosterior {
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,prior_count,posterior_count\n");
        for k in 0..self.prior.counts.len() {
            s.push_str(&format!(
                "{:.12e},{:.12e},{},{}\n",
                self.prior.edges[k],
                self.prior.edges[k + 1],
                self.prior.counts[k],
                self.posterior.counts[k]
            ));
        }
        s
    }
}

/// Interface lengths of `S(v)` for independent prior draws.
pub fn prior_perimeter_samples(spectrum: &PriorSpectrum, count: usize, seed: u64) -> Vec<f64> {
    (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = chain_rng(seed, k);
            let mut c = SpectralField::zeros(spectrum.n());
            spectrum.draw_coeffs(&mut rng, &mut c);
            perimeter_estimate(&threshold(&spectrum.synthesise(&c))).expect("binary")
        })
        .collect()
}

/// Histograms of prior and posterior interface lengths on shared bins, with the true
/// field's value for reference. Refused unless `alpha > 2`, where the length is finite.
pub fn perimeter_posterior(
    target: &TargetSpec,
    prior_samples: &[f64],
    posterior_samples: &[f64],
    truth: f64,
    bins: usize,
) -> Result<PerimeterPosterior> {
    if target.kind != TargetKind::LevelSet {
        return Err(Error::Refused("perimeter statistics need a level set target".into()));
    }
    if target.prior.alpha <= 2.0 {
        return Err(Error::Refused(format!(
            "alpha = {} <= 2: interface length is infinite in the continuum",
            target.prior.alpha
        )));
    }
    if prior_samples.len() < 2 || posterior_samples.len() < 2 || bins == 0 {
        return Err(Error::Config("perimeter histograms need samples and bins".into()));
    }
    let all = prior_samples.iter().chain(posterior_samples).chain(std::iter::once(&truth));
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    Ok(PerimeterPosterior {
        prior: Histogram::new(prior_samples, lo, hi, bins),
        posterior: Histogram::new(posterior_samples, lo, hi, bins),
        prior_std: sample_std(prior_samples),
        posterior_std: sample_std(posterior_samples),
        truth,
        ks_statistic: ks_statistic(prior_samples, posterior_samples),
    })
}
