//! End-to-end experiments: truth generation, data synthesis, inversion by pCN (phase field
//! or level set) or by the closed-form Gaussian posterior, and the artifacts of a run.
//!
//! Configurations are flat `key = value` files; `#` starts a comment. Recognised keys:
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `method` | `phase_field`, `level_set` or `gp` | `level_set` |
//! | `noise` | `small` (`c = 3/2`) or `order_one` (`c = 0`) | `small` |
//! | `truth` | `A`, `B`, `C` or `file:<path>` (CSV grid) | `A` |
//! | `n` | inversion grid per axis | 128 |
//! | `n_truth` | truth grid per axis, must exceed `n` | 256 (320 for `C`) |
//! | `obs_per_axis` | observations form a uniform `m x m` layout | 15 |
//! | `window` | side of the averaging window | `2/n` |
//! | `delta`, `q`, `tau`, `r`, `alpha`, `eps` | prior overrides | preset |
//! | `beta`, `steps`, `burn_in`, `thin`, `mean_stride` | pCN settings | method dependent |
//! | `seed`, `data_seed` | chain and noise seeds | 1, 2 |
//! | `gp_samples` | posterior draws for the `gp` method | 200 |
//! | `perimeter_bins` | histogram bins (level set, `alpha > 2`) | 30 |
//! | `prior_samples` | prior draws for the perimeter histogram | 500 |
//! | `dump_gram` | write the Gram matrix (`gp`) | false |
//! | `paper_scale` | `M = 10^6`, burn-in `5 x 10^5` | false |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use nalgebra::DMatrix;
use serde_json::json;

use crate::energy::perimeter_estimate;
use crate::error::{Error, Result};
use crate::gp::{gp_sample, gp_solve, positive_fraction};
use crate::grid::GridField;
use crate::observation::{synthesize_data, ObservationLayout, TruthField, TruthKind};
use crate::pcn::{perimeter_posterior, prior_perimeter_samples, Chain, ChainConfig};
use crate::posterior::{scaling_exponent, TargetKind, TargetPotential, TargetSpec};
use crate::spectral::{PriorParams, PriorSpectrum};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    PhaseField,
    LevelSet,
    Gp,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::PhaseField => "phase_field",
            Method::LevelSet => "level_set",
            Method::Gp => "gp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseRegime {
    Small,
    OrderOne,
}

impl NoiseRegime {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseRegime::Small => "small",
            NoiseRegime::OrderOne => "order_one",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TruthSource {
    A,
    B,
    C,
    File(PathBuf),
}

impl TruthSource {
    fn label(&self) -> String {
        match self {
            TruthSource::A => "A".into(),
            TruthSource::B => "B".into(),
            TruthSource::C => "C".into(),
            TruthSource::File(p) => format!("file:{}", p.display()),
        }
    }
}

const KEYS: &[&str] = &[
    "method",
    "noise",
    "truth",
    "n",
    "n_truth",
    "obs_per_axis",
    "window",
    "delta",
    "q",
    "tau",
    "r",
    "alpha",
    "eps",
    "beta",
    "steps",
    "burn_in",
    "thin",
    "mean_stride",
    "seed",
    "data_seed",
    "gp_samples",
    "perimeter_bins",
    "prior_samples",
    "dump_gram",
    "paper_scale",
];

/// Raw `key = value` pairs in file order of precedence (later settings win).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigMap(pub BTreeMap<String, String>);

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut errors = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() => {
                    map.insert(k.trim().to_string(), v.trim().to_string());
                }
                _ => errors.push(format!("line {}: expected key = value, got '{raw}'", lineno + 1)),
            }
        }
        if !errors.is_empty() {
            return Err(Error::Config(errors.join("; ")));
        }
        Ok(Self(map))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.0.insert(key.to_string(), value.into());
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
            self.set(k.trim(), v.trim());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub noise: NoiseRegime,
    pub truth: TruthSource,
    pub n: usize,
    pub n_truth: usize,
    pub obs_per_axis: usize,
    pub window: f64,
    pub prior: PriorParams,
    pub beta: f64,
    pub steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub mean_stride: usize,
    pub seed: u64,
    pub data_seed: u64,
    pub gp_samples: usize,
    pub perimeter_bins: usize,
    pub prior_samples: usize,
    pub dump_gram: bool,
    pub paper_scale: bool,
    /// Keys that were given but have no effect for this method.
    pub ignored: Vec<String>,
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("'{v}' is not a boolean")),
    }
}

impl ExperimentConfig {
    /// Validates all keys at once; every problem found is listed in the error.
    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        let m = &map.0;
        let mut errors: Vec<String> =
            m.keys().filter(|k| !KEYS.contains(&k.as_str())).map(|k| format!("unknown key '{k}'")).collect();

        fn get<T: std::str::FromStr>(m: &BTreeMap<String, String>, key: &str, errors: &mut Vec<String>) -> Option<T> {
            let v = m.get(key)?;
            match v.parse() {
                Ok(x) => Some(x),
                Err(_) => {
                    errors.push(format!("{key}: cannot parse '{v}'"));
                    None
                }
            }
        }
        let flag = |key: &str, errors: &mut Vec<String>| -> bool {
            match m.get(key).map(|v| parse_bool(v)) {
                Some(Ok(b)) => b,
                Some(Err(e)) => {
                    errors.push(format!("{key}: {e}"));
                    false
                }
                None => false,
            }
        };

        let method = match m.get("method").map(String::as_str) {
            None | Some("level_set") => Method::LevelSet,
            Some("phase_field") => Method::PhaseField,
            Some("gp") => Method::Gp,
            Some(o) => {
                errors.push(format!("method: unknown '{o}'"));
                Method::LevelSet
            }
        };
        let noise = match m.get("noise").map(String::as_str) {
            None | Some("small") => NoiseRegime::Small,
            Some("order_one") => NoiseRegime::OrderOne,
            Some(o) => {
                errors.push(format!("noise: unknown '{o}'"));
                NoiseRegime::Small
            }
        };
        let truth = match m.get("truth").map(String::as_str) {
            None | Some("A") => TruthSource::A,
            Some("B") => TruthSource::B,
            Some("C") => TruthSource::C,
            Some(s) if s.starts_with("file:") => TruthSource::File(PathBuf::from(&s[5..])),
            Some(o) => {
                errors.push(format!("truth: unknown '{o}'"));
                TruthSource::A
            }
        };
        let paper_scale = flag("paper_scale", &mut errors);
        let dump_gram = flag("dump_gram", &mut errors);

        let mut prior = match (method, noise) {
            (Method::LevelSet, NoiseRegime::Small) => PriorParams::level_set(1.5),
            (Method::LevelSet, NoiseRegime::OrderOne) => PriorParams::level_set(0.0),
            (_, NoiseRegime::Small) => PriorParams::phase_field_small_noise(),
            (_, NoiseRegime::OrderOne) => PriorParams::phase_field_order_one(),
        };
        if method == Method::Gp {
            prior.r = 0.0;
        }
        for (key, slot) in [
            ("delta", &mut prior.delta),
            ("q", &mut prior.q),
            ("tau", &mut prior.tau),
            ("r", &mut prior.r),
            ("alpha", &mut prior.alpha),
            ("eps", &mut prior.eps),
        ] {
            if let Some(v) = get::<f64>(m, key, &mut errors) {
                *slot = v;
            }
        }
        if let Err(e) = prior.validate() {
            errors.push(e.to_string());
        }

        let n = get(m, "n", &mut errors).unwrap_or(128usize);
        let default_truth = if truth == TruthSource::C { 320 } else { 256 };
        let n_truth = get(m, "n_truth", &mut errors).unwrap_or(default_truth);
        let obs_per_axis = get(m, "obs_per_axis", &mut errors).unwrap_or(15usize);
        let window = get(m, "window", &mut errors).unwrap_or(2.0 / n as f64);
        let default_steps = if paper_scale { 1_000_000 } else { 100_000 };
        let steps = get(m, "steps", &mut errors).unwrap_or(default_steps);
        let burn_in = get(m, "burn_in", &mut errors).unwrap_or(steps / 2);
        let default_beta = if method == Method::LevelSet { 0.05 } else { 0.01 };
        let beta = get(m, "beta", &mut errors).unwrap_or(default_beta);
        let thin = get(m, "thin", &mut errors).unwrap_or(100usize);
        let mean_stride = get(m, "mean_stride", &mut errors).unwrap_or(1usize);
        let seed = get(m, "seed", &mut errors).unwrap_or(1u64);
        let data_seed = get(m, "data_seed", &mut errors).unwrap_or(2u64);
        let gp_samples = get(m, "gp_samples", &mut errors).unwrap_or(200usize);
        let perimeter_bins = get(m, "perimeter_bins", &mut errors).unwrap_or(30usize);
        let prior_samples = get(m, "prior_samples", &mut errors).unwrap_or(500usize);

        if let Err(e) = crate::spectral::check_grid_size(n) {
            errors.push(format!("n: {e}"));
        }
        if n_truth <= n {
            errors.push(format!("n_truth ({n_truth}) must exceed n ({n})"));
        }
        if obs_per_axis == 0 {
            errors.push("obs_per_axis must be >= 1".into());
        }
        if method != Method::Gp {
            let cc = ChainConfig { burn_in, thin, mean_stride, ..ChainConfig::new(beta, steps, seed) };
            if let Err(e) = cc.validate() {
                errors.push(e.to_string());
            }
        }
        if method == Method::PhaseField && prior.alpha != 2.0 {
            errors.push("phase_field uses alpha = 2".into());
        }
        if method == Method::Gp && prior.alpha != 2.0 {
            errors.push("gp uses alpha = 2".into());
        }
        let ignored: Vec<String> = if method == Method::Gp {
            ["beta", "steps", "burn_in", "thin", "mean_stride"]
                .iter()
                .filter(|k| m.contains_key(**k))
                .map(|k| k.to_string())
                .collect()
        } else {
            Vec::new()
        };
        if !errors.is_empty() {
            return Err(Error::Config(errors.join("; ")));
        }
        for k in &ignored {
            warn!("key '{k}' has no effect for the gp method");
        }
        Ok(Self {
            method,
            noise,
            truth,
            n,
            n_truth,
            obs_per_axis,
            window,
            prior,
            beta,
            steps,
            burn_in,
            thin,
            mean_stride,
            seed,
            data_seed,
            gp_samples,
            perimeter_bins,
            prior_samples,
            dump_gram,
            paper_scale,
            ignored,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(&ConfigMap::parse(text)?)
    }

    /// Fully resolved configuration as a key map; feeding it back reproduces `self`.
    pub fn to_map(&self) -> ConfigMap {
        let p = &self.prior;
        let mut m = ConfigMap::default();
        m.set("method", self.method.as_str());
        m.set("noise", self.noise.as_str());
        m.set("truth", self.truth.label());
        m.set("n", self.n.to_string());
        m.set("n_truth", self.n_truth.to_string());
        m.set("obs_per_axis", self.obs_per_axis.to_string());
        m.set("window", format!("{:?}", self.window));
        for (k, v) in [("delta", p.delta), ("q", p.q), ("tau", p.tau), ("r", p.r), ("alpha", p.alpha), ("eps", p.eps)] {
            m.set(k, format!("{v:?}"));
        }
        if self.method != Method::Gp {
            m.set("beta", format!("{:?}", self.beta));
            m.set("steps", self.steps.to_string());
            m.set("burn_in", self.burn_in.to_string());
            m.set("thin", self.thin.to_string());
            m.set("mean_stride", self.mean_stride.to_string());
        }
        m.set("seed", self.seed.to_string());
        m.set("data_seed", self.data_seed.to_string());
        m.set("gp_samples", self.gp_samples.to_string());
        m.set("perimeter_bins", self.perimeter_bins.to_string());
        m.set("prior_samples", self.prior_samples.to_string());
        m.set("dump_gram", self.dump_gram.to_string());
        m.set("paper_scale", self.paper_scale.to_string());
        m
    }

    /// Configuration recorded in a manifest written by [`run_experiment`].
    pub fn from_manifest(manifest: &serde_json::Value) -> Result<Self> {
        let cfg = manifest
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| Error::Parse("manifest has no config object".into()))?;
        let mut m = ConfigMap::default();
        for (k, v) in cfg {
            let v = v.as_str().ok_or_else(|| Error::Parse(format!("config value for {k} is not a string")))?;
            m.set(k, v);
        }
        Self::from_map(&m)
    }

    pub fn target_kind(&self) -> TargetKind {
        if self.method == Method::LevelSet {
            TargetKind::LevelSet
        } else {
            TargetKind::PhaseField
        }
    }

    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            burn_in: self.burn_in,
            thin: self.thin,
            mean_stride: self.mean_stride,
            record_perimeter: self.method == Method::LevelSet && self.prior.alpha > 2.0,
            ..ChainConfig::new(self.beta, self.steps, self.seed)
        }
    }

    pub fn truth_field(&self) -> Result<TruthField> {
        Ok(match &self.truth {
            TruthSource::A => TruthField::truth_a(self.n_truth),
            TruthSource::B => TruthField::truth_b(self.n_truth),
            TruthSource::C => TruthField::truth_c(self.n_truth),
            TruthSource::File(p) => {
                let f = GridField::read_csv(p)?;
                if f.n() != self.n_truth {
                    return Err(Error::GridMismatch { expected: self.n_truth, got: f.n() });
                }
                TruthField::custom(f, p.display().to_string())?
            }
        })
    }
}

/// Fraction of nodes where `recon` agrees with the truth after majority-vote downsampling of
/// the truth to the grid of `recon`.
pub fn classification_score(recon: &GridField, truth: &TruthField) -> Result<f64> {
    if !recon.is_binary() {
        return Err(Error::NotBinary);
    }
    if truth.n() < recon.n() {
        return Err(Error::GridMismatch { expected: recon.n(), got: truth.n() });
    }
    let t = if truth.n() == recon.n() { truth.field.clone() } else { truth.field.downsample_majority(recon.n())? };
    let hits = recon.values().iter().zip(t.values()).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / recon.values().len() as f64)
}

/// Summary returned by [`run_experiment`].
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub score: f64,
    pub manifest: serde_json::Value,
}

/// Runs one experiment and writes its artifacts into `dir`. A directory created here is
/// removed again if the run fails.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<ExperimentOutcome> {
    let created = !dir.exists();
    std::fs::create_dir_all(dir)?;
    let result = run_inner(cfg, dir);
    if result.is_err() {
        if created {
            let _ = std::fs::remove_dir_all(dir);
        } else {
            for name in ARTIFACTS {
                let _ = std::fs::remove_file(dir.join(name));
            }
        }
    }
    result
}

const ARTIFACTS: &[&str] = &[
    "truth.csv",
    "truth.pgm",
    "truth.pgm.json",
    "observations.csv",
    "sigma.csv",
    "mean.csv",
    "thresholded_mean.csv",
    "thresholded_mean.pgm",
    "thresholded_mean.pgm.json",
    "mean_of_sign.csv",
    "positive_fraction.csv",
    "diagnostics.csv",
    "perimeter_histogram.csv",
    "gram.csv",
    "manifest.json",
];

fn run_inner(cfg: &ExperimentConfig, dir: &Path) -> Result<ExperimentOutcome> {
    let clock = Instant::now();
    let truth = cfg.truth_field()?;
    truth.field.write_csv(&dir.join("truth.csv"))?;
    truth.field.write_pgm(&dir.join("truth.pgm"))?;

    let layout = ObservationLayout { window: cfg.window, ..ObservationLayout::uniform(cfg.obs_per_axis, cfg.n) };
    let j = layout.len();
    let noise_scale = cfg.prior.noise_scale();
    let obs = synthesize_data(&truth, &layout, DMatrix::identity(j, j), noise_scale, cfg.n, cfg.data_seed)?;
    obs.write_csv(&dir.join("observations.csv"), &dir.join("sigma.csv"))?;

    let scaling = match cfg.method {
        Method::LevelSet => None,
        _ => Some(scaling_exponent(&cfg.prior)?),
    };
    info!(
        "{} run, noise {}, prior {:?}, scaling exponent {:?}",
        cfg.method.as_str(),
        cfg.noise.as_str(),
        cfg.prior,
        scaling
    );

    let mut extra = serde_json::Map::new();
    let recon = match cfg.method {
        Method::Gp => {
            let post = gp_solve(&obs, &cfg.prior, cfg.n)?;
            post.mean().write_csv(&dir.join("mean.csv"))?;
            let samples = gp_sample(&post, cfg.gp_samples, cfg.seed);
            positive_fraction(&samples)?.write_csv(&dir.join("positive_fraction.csv"))?;
            if cfg.dump_gram {
                post.write_gram_csv(&dir.join("gram.csv"))?;
            }
            post.thresholded_mean()
        }
        Method::PhaseField | Method::LevelSet => {
            let target = TargetSpec::new(cfg.target_kind(), cfg.prior, obs.clone())?;
            let spectrum = PriorSpectrum::new(&cfg.prior, cfg.n)?;
            let potential = TargetPotential::new(&target, cfg.n)?;
            let chain_cfg = cfg.chain_config();
            let out = Chain::new(&spectrum, potential, chain_cfg.clone())?.run(None)?;
            out.mean.write_csv(&dir.join("mean.csv"))?;
            out.mean_of_sign.write_csv(&dir.join("mean_of_sign.csv"))?;
            std::fs::write(dir.join("diagnostics.csv"), out.diagnostics.to_csv_string())?;
            extra.insert("acceptance_rate".into(), json!(out.acceptance_rate));
            if chain_cfg.record_perimeter {
                let prior_ell = prior_perimeter_samples(&spectrum, cfg.prior_samples, cfg.seed ^ 0x5eed);
                let post_ell = out.diagnostics.perimeters_after(chain_cfg.burn_in as u64);
                let truth_ell = perimeter_estimate(&truth.field.downsample_majority(cfg.n)?)?;
                let pp = perimeter_posterior(&target, &prior_ell, &post_ell, truth_ell, cfg.perimeter_bins)?;
                std::fs::write(dir.join("perimeter_histogram.csv"), pp.to_csv_string())?;
                extra.insert(
                    "perimeter".into(),
                    json!({
                        "truth": pp.truth,
                        "prior_std": pp.prior_std,
                        "posterior_std": pp.posterior_std,
                        "posterior_mode": pp.posterior.mode(),
                        "ks_statistic": pp.ks_statistic,
                    }),
                );
            }
            out.thresholded_mean
        }
    };
    recon.write_csv(&dir.join("thresholded_mean.csv"))?;
    recon.write_pgm(&dir.join("thresholded_mean.pgm"))?;
    let score = classification_score(&recon, &truth)?;

    let config: serde_json::Map<String, serde_json::Value> =
        cfg.to_map().0.into_iter().map(|(k, v)| (k, json!(v))).collect();
    let truth_kind = match &truth.kind {
        TruthKind::Custom(s) => format!("custom:{s}"),
        k => format!("{k:?}"),
    };
    let mut manifest = json!({
        "config": config,
        "prior": cfg.prior,
        "scaling_exponent": scaling,
        "noise_scale": noise_scale,
        "observations": j,
        "truth_kind": truth_kind,
        "grid_points": cfg.n * cfg.n,
        "truth_grid_points": cfg.n_truth * cfg.n_truth,
        "seeds": { "chain": cfg.seed, "data": cfg.data_seed },
        "ignored_keys": cfg.ignored,
        "classification_score": score,
    });
    let obj = manifest.as_object_mut().expect("object");
    obj.extend(extra);
    obj.insert("wall_time".into(), json!(clock.elapsed().as_secs_f64()));
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(ExperimentOutcome { dir: dir.to_path_buf(), score, manifest })
}
