use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use binverse::energy::{
    gamma_check, interface_scaling_study, modica_mortola_bound, p_delta, tanh_upper_bound, Disc, PDeltaOptions,
};
use binverse::experiments::{classification_score, run_experiment, ConfigMap, ExperimentConfig};
use binverse::observation::TruthField;
use binverse::spectral::{PriorParams, PriorSpectrum};
use binverse::{GridField, Result};

#[derive(Parser)]
#[command(name = "binverse", version, about = "Bayesian inversion for binary fields on the periodic unit square")]
struct Cli {
    /// Output root; overridden by BINVERSE_OUT.
    #[arg(long, global = true, default_value = "binverse_out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one prior sample and write it as CSV and PGM.
    SamplePrior {
        #[arg(long, default_value_t = 128)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// phase-field-small, phase-field-order-one or level-set
        #[arg(long, default_value = "level-set")]
        preset: String,
        #[arg(long)]
        alpha: Option<f64>,
        /// Also write the thresholded sample.
        #[arg(long)]
        threshold: bool,
    },
    /// Interface length of thresholded prior draws across resolutions.
    PerimeterStudy {
        #[arg(long, value_delimiter = ',', default_value = "1.5,2,3")]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "64,128,256,512,1024")]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// pCN inversion (phase_field or level_set) from a config file.
    PcnRun(RunArgs),
    /// Closed-form Gaussian inversion from a config file.
    GpRun(RunArgs),
    /// Sharp-interface limit check on a disc.
    GammaCheck {
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.08,0.04,0.02")]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 0.25)]
        radius: f64,
        #[arg(long, default_value_t = 2048)]
        profile_m: usize,
    },
    /// Minimal transition-profile energy.
    PDelta {
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        #[arg(long, default_value_t = 0.1)]
        q: f64,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 2048)]
        m: usize,
        #[arg(long, default_value_t = 10.0)]
        t_max: f64,
    },
    /// Pixel agreement between a binary reconstruction and a truth (both CSV grids).
    Score {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// key=value overrides applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// M = 10^6 with burn-in 5 x 10^5.
    #[arg(long)]
    paper_scale: bool,
    /// Run directory name under the output root.
    #[arg(long)]
    name: Option<String>,
}

fn output_root(cli_out: &Path) -> PathBuf {
    std::env::var_os("BINVERSE_OUT").map(PathBuf::from).unwrap_or_else(|| cli_out.to_path_buf())
}

fn preset(name: &str) -> Result<PriorParams> {
    match name {
        "phase-field-small" => Ok(PriorParams::phase_field_small_noise()),
        "phase-field-order-one" => Ok(PriorParams::phase_field_order_one()),
        "level-set" => Ok(PriorParams::level_set(1.5)),
        o => Err(binverse::Error::Config(format!("unknown preset '{o}'"))),
    }
}

fn run_config(args: &RunArgs, method: &str, root: &Path) -> Result<()> {
    let mut map = match &args.config {
        Some(p) => ConfigMap::read(p)?,
        None => ConfigMap::default(),
    };
    if method == "gp" {
        map.set("method", "gp");
    } else if map.0.get("method").map(String::as_str) == Some("gp") {
        return Err(binverse::Error::Config("pcn-run needs method = phase_field or level_set".into()));
    }
    map.apply_overrides(&args.set)?;
    if args.paper_scale {
        map.set("paper_scale", "true");
    }
    let cfg = ExperimentConfig::from_map(&map)?;
    let name = args.name.clone().unwrap_or_else(|| format!("{}_{}", cfg.method.as_str(), cfg.noise.as_str()));
    let out = run_experiment(&cfg, &root.join(name))?;
    println!("{}: classification score {:.4}", out.dir.display(), out.score);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let root = output_root(&cli.out);
    match cli.command {
        Command::SamplePrior { n, seed, preset: name, alpha, threshold } => {
            let mut p = preset(&name)?;
            if let Some(a) = alpha {
                p.alpha = a;
            }
            let dir = root.join("sample_prior");
            std::fs::create_dir_all(&dir)?;
            let v = PriorSpectrum::new(&p, n)?.sample(seed);
            v.write_csv(&dir.join(format!("sample_{seed}.csv")))?;
            v.write_pgm(&dir.join(format!("sample_{seed}.pgm")))?;
            if threshold {
                let s = binverse::posterior::threshold(&v);
                s.write_csv(&dir.join(format!("sample_{seed}_sign.csv")))?;
                s.write_pgm(&dir.join(format!("sample_{seed}_sign.pgm")))?;
            }
            println!("{}", dir.display());
        }
        Command::PerimeterStudy { alphas, ns, seed } => {
            let study = interface_scaling_study(&PriorParams::level_set(1.5), &alphas, &ns, seed)?;
            let dir = root.join("perimeter_study");
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("perimeter_study.csv"), study.to_csv_string())?;
            for a in &alphas {
                println!("alpha {a}: fitted log-log slope {:.4}", study.fitted_slope(*a));
            }
        }
        Command::PcnRun(args) => run_config(&args, "pcn", &root)?,
        Command::GpRun(args) => run_config(&args, "gp", &root)?,
        Command::GammaCheck { n, eps, radius, profile_m } => {
            let p = PriorParams::phase_field_small_noise();
            let pd = p_delta(&p, &PDeltaOptions { m: profile_m, ..Default::default() })?;
            let disc = Disc { centre: [0.5, 0.5], radius };
            let report = gamma_check(&disc, &eps, n, &p, &pd.profile, pd.value)?;
            report.write(&root.join("gamma_check"))?;
            for (e, g) in report.eps_list.iter().zip(&report.gaps) {
                println!("eps {e}: relative gap {g:.3e}");
            }
        }
        Command::PDelta { delta, q, r, m, t_max } => {
            let p = PriorParams { delta, q, r, ..PriorParams::phase_field_small_noise() };
            let pd = p_delta(&p, &PDeltaOptions { m, t_max, ..Default::default() })?;
            let dir = root.join("p_delta");
            std::fs::create_dir_all(&dir)?;
            let mut csv = String::from("t,U\n");
            let h = pd.profile.spacing();
            for (k, u) in pd.profile.values().iter().enumerate() {
                csv.push_str(&format!("{:.12e},{:.16e}\n", -t_max + k as f64 * h, u));
            }
            std::fs::write(dir.join("profile.csv"), csv)?;
            let summary = serde_json::json!({
                "p_delta": pd.value,
                "converged": pd.converged,
                "warning": pd.warning,
                "lower_bound": modica_mortola_bound(&p),
                "tanh_upper_bound": tanh_upper_bound(&p).1,
                "starts": pd.starts,
            });
            std::fs::write(dir.join("p_delta.json"), serde_json::to_string_pretty(&summary)?)?;
            println!("P^delta = {:.10} (converged: {})", pd.value, pd.converged);
        }
        Command::Score { recon, truth } => {
            let r = GridField::read_csv(&recon)?;
            let t = TruthField::custom(GridField::read_csv(&truth)?, truth.display().to_string())?;
            println!("{:.6}", classification_score(&r, &t)?);
        }
    }
    info!("done");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
