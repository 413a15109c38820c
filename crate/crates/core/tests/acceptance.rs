//! End-to-end acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line.

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use binverse::energy::{
    gamma_check, interface_scaling_study, modica_mortola_bound, p_delta, perimeter_estimate, tanh_upper_bound, Disc,
    PDeltaOptions,
};
use binverse::experiments::{run_experiment, ExperimentConfig, ExperimentOutcome};
use binverse::gp::gp_solve;
use binverse::grid::GridField;
use binverse::observation::{synthesize_data, ObservationLayout, TruthField};
use binverse::pcn::{run_chain, stabilisation_window, Chain, ChainConfig};
use binverse::posterior::{resolve_scalings, threshold, TargetKind, TargetSpec};
use binverse::spectral::{PriorParams, PriorSpectrum};
use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;

/// Written to the stdout handle directly so the line survives output capture.
fn report(id: u32, pass: bool, detail: String) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {id}: {} {detail}", if pass { "PASS" } else { "FAIL" }).unwrap();
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn window_rates(dir: &std::path::Path) -> Vec<f64> {
    let text = std::fs::read_to_string(dir.join("diagnostics.csv")).unwrap();
    text.lines()
        .skip(1)
        .filter_map(|l| {
            let rate = l.split(',').nth(1).unwrap();
            (!rate.is_empty()).then(|| rate.parse().unwrap())
        })
        .collect()
}

const TRUTH_A_BASE: &str = "n = 128\nobs_per_axis = 15\nsteps = 100000\ntruth = A\nnoise = small\n";

fn truth_a_level_set() -> &'static ExperimentOutcome {
    static RUN: OnceLock<ExperimentOutcome> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = ExperimentConfig::parse(&format!("{TRUTH_A_BASE}method = level_set\n")).unwrap();
        run_experiment(&cfg, &scratch_dir("truth_a_level_set")).unwrap()
    })
}

#[test]
fn criterion_01_pcn_prior_invariance() {
    let clock = Instant::now();
    let p = PriorParams::phase_field_small_noise();
    let n = 64;
    let spectrum = PriorSpectrum::new(&p, n).unwrap();
    let zero = |_: &GridField| 0.0;
    let mut chain = Chain::new(&spectrum, zero, ChainConfig::new(0.5, 100_000, 11)).unwrap();
    let modes = [(1, 0), (0, 1), (1, 1)];
    let mut sum = [Complex64::new(0.0, 0.0); 3];
    let mut sum_sq = [0.0; 3];
    let steps = 100_000;
    for _ in 0..steps {
        chain.step();
        for (m, &k) in modes.iter().enumerate() {
            let c = chain.state().coeffs.coeff(k);
            sum[m] += c;
            sum_sq[m] += c.norm_sqr();
        }
    }
    let mut worst: f64 = 0.0;
    let mut detail = String::new();
    for (m, &k) in modes.iter().enumerate() {
        let mean = sum[m] / steps as f64;
        let var = sum_sq[m] / steps as f64 - mean.norm_sqr();
        let want = spectrum.coeff_variance(k);
        let rel = (var / want - 1.0).abs();
        worst = worst.max(rel);
        detail += &format!("k={k:?} var={var:.4e} lambda={want:.4e} rel={rel:.3}; ");
    }
    let elapsed = clock.elapsed();
    let pass = worst < 0.10 && elapsed < Duration::from_secs(120);
    report(1, pass, format!("{detail}time {elapsed:.1?}"));
    assert!(pass);
}

#[test]
fn criterion_02_perimeter_estimator() {
    let mut detail = String::new();
    let mut pass = true;
    for n in [64, 128, 256] {
        let stripe = threshold(&GridField::from_fn(n, |x, _| if x > 0.25 && x < 0.75 { 1.0 } else { -1.0 }));
        let ell = perimeter_estimate(&stripe).unwrap();
        pass &= ell == 2.0;
        detail += &format!("stripe N={n} l={ell}; ");
    }
    let disc = TruthField::disc(512, [0.5, 0.5], 0.25);
    let ell = perimeter_estimate(&disc).unwrap();
    let rel = (ell / (PI / 2.0) - 1.0).abs();
    pass &= rel < 0.05;
    report(2, pass, format!("{detail}disc N=512 l={ell:.5} rel={rel:.4}"));
    assert!(pass);
}

#[test]
fn criterion_03_interface_scaling() {
    let clock = Instant::now();
    let ns = [64, 128, 256, 512, 1024];
    let study = interface_scaling_study(&PriorParams::level_set(1.5), &[1.5, 2.0, 3.0], &ns, 1).unwrap();
    let rough = study.fitted_slope(1.5);
    let diffs = study.differences(3.0);
    let monotone = diffs.windows(2).all(|w| w[1] < w[0]);
    let slopes = study.loglog_slopes(2.0);
    let last = *slopes.last().unwrap();
    let series = study.series(2.0);
    let increasing = series[series.len() - 1].1 > series[series.len() - 2].1;
    let elapsed = clock.elapsed();
    let pass = rough > 0.2 && monotone && last < 0.05 && increasing && elapsed < Duration::from_secs(300);
    report(
        3,
        pass,
        format!(
            "alpha=1.5 slope {rough:.3}; alpha=3 diffs {diffs:.4?}; alpha=2 slopes {slopes:.4?} \
             increasing {increasing}; time {elapsed:.1?}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_scaling_rows() {
    let small = resolve_scalings(1.5, 3.0).unwrap();
    let order_one = resolve_scalings(0.0, 3.0).unwrap();
    let pass = (small.a1, small.a2, small.b) == (0.0, 1.0, 4.0)
        && (order_one.a1, order_one.a2, order_one.b) == (-1.5, -0.5, 1.0);
    report(
        4,
        pass,
        format!(
            "c=3/2 -> ({}, {}, {}); c=0 -> ({}, {}, {})",
            small.a1, small.a2, small.b, order_one.a1, order_one.a2, order_one.b
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_p_delta_sandwich() {
    let p = PriorParams { delta: 0.01, q: 0.1, r: 1.0, ..PriorParams::phase_field_small_noise() };
    let opts = PDeltaOptions::default();
    let coarse = p_delta(&p, &opts).unwrap();
    let fine = p_delta(&p, &PDeltaOptions { m: 2 * opts.m, ..opts.clone() }).unwrap();
    let lower = modica_mortola_bound(&p);
    let (_, upper) = tanh_upper_bound(&p);
    let drift = (fine.value - coarse.value).abs() / fine.value;
    let pass = lower <= coarse.value && coarse.value <= upper && drift < 1e-3;
    report(
        5,
        pass,
        format!(
            "lower {lower:.6} <= P {:.6} <= upper {upper:.6}; gaps {:.6} / {:.6}; M-doubling drift {drift:.2e}",
            coarse.value,
            coarse.value - lower,
            upper - coarse.value
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_gamma_limit() {
    let clock = Instant::now();
    let p = PriorParams::phase_field_small_noise();
    let pd = p_delta(&p, &PDeltaOptions::default()).unwrap();
    let disc = Disc { centre: [0.5, 0.5], radius: 0.25 };
    let r = gamma_check(&disc, &[0.08, 0.04, 0.02], 1024, &p, &pd.profile, pd.value).unwrap();
    let gaps: Vec<f64> = r.gaps.iter().map(|g| g.abs()).collect();
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let elapsed = clock.elapsed();
    let pass = decreasing && gaps[2] < 0.10 && elapsed < Duration::from_secs(300);
    report(6, pass, format!("relative gaps {gaps:.4?}; time {elapsed:.1?}"));
    assert!(pass);
}

#[test]
fn criterion_07_gp_matches_pcn() {
    let n = 64;
    // Smooth prior with most variance in the lowest modes; noise std 1.
    let p = PriorParams {
        delta: TAU.powi(-4),
        q: 0.0,
        tau: TAU * TAU,
        eps: 0.5,
        c: 0.0,
        a1: 0.0,
        a2: 0.0,
        a3: 0.0,
        r: 0.0,
        ..PriorParams::phase_field_small_noise()
    };
    let truth = TruthField::truth_a(128);
    let layout = ObservationLayout::uniform(5, n);
    let obs = synthesize_data(&truth, &layout, DMatrix::identity(25, 25), p.noise_scale(), n, 2).unwrap();
    let gp = gp_solve(&obs, &p, n).unwrap();
    let target = TargetSpec::new(TargetKind::PhaseField, p, obs).unwrap();
    let cfg = ChainConfig { burn_in: 20_000, ..ChainConfig::new(0.2, 200_000, 1) };
    let out = run_chain(&target, n, cfg).unwrap();
    let rel = out.mean.rel_l2_distance(gp.mean()).unwrap();
    let pass = rel < 0.05;
    report(7, pass, format!("relative L2 {rel:.4}; acceptance {:.3}", out.acceptance_rate));
    assert!(pass);
}

#[test]
fn criterion_08_desk_reconstruction() {
    let clock = Instant::now();
    let out = truth_a_level_set();
    let elapsed = clock.elapsed();
    let pass = out.score >= 0.9 && elapsed < Duration::from_secs(600);
    report(8, pass, format!("pixel agreement {:.4}; time {elapsed:.1?}", out.score));
    assert!(pass);
}

#[test]
fn criterion_09_perimeter_contraction() {
    let cfg = ExperimentConfig::parse(
        "method = level_set\nn = 128\nobs_per_axis = 15\nsteps = 100000\ntruth = B\nalpha = 3\nbeta = 0.02\n",
    )
    .unwrap();
    let out = run_experiment(&cfg, &scratch_dir("truth_b_level_set")).unwrap();
    let stats = &out.manifest["perimeter"];
    let get = |k: &str| stats[k].as_f64().unwrap();
    let (prior_std, post_std, mode, truth) =
        (get("prior_std"), get("posterior_std"), get("posterior_mode"), get("truth"));
    let rel = (mode - truth).abs() / truth;
    let pass = post_std < 0.5 * prior_std && rel < 0.15;
    report(
        9,
        pass,
        format!("std {post_std:.4} vs prior {prior_std:.4}; mode {mode:.4} vs truth {truth:.4} ({rel:.3})"),
    );
    assert!(pass);
}

#[test]
fn criterion_10_mixing_asymmetry() {
    let level_set = truth_a_level_set();
    let cfg = ExperimentConfig::parse(&format!("{TRUTH_A_BASE}method = phase_field\n")).unwrap();
    let phase_field = run_experiment(&cfg, &scratch_dir("truth_a_phase_field")).unwrap();
    let ls = stabilisation_window(&window_rates(&level_set.dir), 0.1, 50);
    let pf = stabilisation_window(&window_rates(&phase_field.dir), 0.1, 50);
    let step = |w: Option<usize>| w.map(|k| k * 1000);
    let pass = match (ls, pf) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        _ => false,
    };
    report(10, pass, format!("stabilisation step level set {:?}, phase field {:?}", step(ls), step(pf)));
    assert!(pass);
}
