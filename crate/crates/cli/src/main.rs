use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mfreg::experiment::{contrast_init, report, run_experiment, ExperimentConfig, Mode, ResultBundle, Selector};
use mfreg::lrd::{Scenario, SimulationMethod, SimulationOptions, Simulator, SpharmaSpec};
use mfreg::regression::{
    aggregated_covariances, anova_design, gls_fit, ols_residuals, synthesize_response, true_beta, DesignMatrix,
};
use mfreg::sample::CoefficientSample;
use mfreg::spectral::{estimate_from_residuals, ContrastFit, periodogram, plugin_gls, LrdFamily};
use mfreg::{Error, Result};

/// Functional regression on the sphere with long-range dependent errors.
#[derive(Parser, Debug)]
#[command(name = "mfreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate errors and responses of the preset model.
    Simulate {
        #[arg(long, default_value = "dpbs")]
        scenario: Scenario,
        #[arg(long = "n-times", default_value_t = 100)]
        n_times: usize,
        #[arg(long, default_value_t = 30)]
        truncation: usize,
        #[arg(long, default_value_t = 5)]
        regressors: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "circulant-embedding")]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the regression coefficients of a response sample.
    Fit {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        response: PathBuf,
        #[arg(long, default_value = "dpbs")]
        scenario: Scenario,
        /// `oracle` uses the true covariance, `plugin` estimates it first.
        #[arg(long, default_value = "oracle")]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the error spectral parameters from OLS residuals.
    EstimateSpectrum {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        response: PathBuf,
        #[arg(long, default_value = "dpbs")]
        scenario: Scenario,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the Monte Carlo experiment and write a result bundle.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<Mode>,
        /// Restrict to one scenario.
        #[arg(long)]
        scenario: Option<Scenario>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        repetitions: Option<usize>,
        /// 100 repetitions at N = 50, 100, 500.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Extract figure data from a result bundle.
    Report {
        #[arg(long)]
        bundle: PathBuf,
        /// Figure selector, e.g. `emqe-beta`, `figure-9` or `all`.
        #[arg(long, default_value = "all")]
        figure: Selector,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum Method {
    CirculantEmbedding,
    TruncatedFilter,
}

fn write_json(path: &Path, value: &ContrastFit) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_pair(design: &Path, response: &Path) -> Result<(DesignMatrix, CoefficientSample)> {
    let x = DesignMatrix::read_text(design)?;
    let y = CoefficientSample::read(response)?;
    if x.n_times() != y.n_times() {
        return Err(Error::Dimension(format!(
            "design has {} rows but the response has {} times",
            x.n_times(),
            y.n_times()
        )));
    }
    Ok((x, y))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            scenario,
            n_times,
            truncation,
            regressors,
            seed,
            method,
            out,
        } => {
            let spec = SpharmaSpec::preset(scenario, truncation);
            spec.validate()?;
            let opts = SimulationOptions {
                method: match method {
                    Method::CirculantEmbedding => SimulationMethod::CirculantEmbedding,
                    Method::TruncatedFilter => SimulationMethod::TruncatedFilter,
                },
                ..Default::default()
            };
            let mut eps = Simulator::new(&spec, n_times, &opts)?.draw(seed)?;
            eps.meta.seed = Some(seed);
            let x = anova_design(n_times, regressors)?;
            let beta = true_beta(truncation, regressors);
            let y = synthesize_response(&x, &beta, &eps)?;
            create_dir(&out)?;
            eps.write_text(&out.join("errors.txt"))?;
            y.write_text(&out.join("response.txt"))?;
            x.write_text(&out.join("design.txt"))?;
            beta.write_text(&out.join("beta_true.tsv"))?;
            log::info!("wrote {}", out.display());
        }
        Command::Fit {
            design,
            response,
            scenario,
            mode,
            out,
        } => {
            let (x, y) = load_pair(&design, &response)?;
            let spec = SpharmaSpec::preset(scenario, y.max_degree());
            let fit = match mode {
                Mode::Oracle => gls_fit(&x, &y, &aggregated_covariances(&spec, y.n_times())?)?,
                Mode::Plugin => {
                    let family = LrdFamily::new(spec.clone());
                    let c = estimate_from_residuals(&x, &y, &family, &contrast_init(&spec.exponents))?;
                    log::info!("theta = {:?}", c.theta);
                    plugin_gls(&x, &y, &c.theta, &family)?
                }
                Mode::Both => return Err(Error::Config("fit takes --mode oracle or plugin".into())),
            };
            fit.write_text(&out)?;
        }
        Command::EstimateSpectrum {
            design,
            response,
            scenario,
            out,
        } => {
            let (x, y) = load_pair(&design, &response)?;
            let spec = SpharmaSpec::preset(scenario, y.max_degree());
            let family = LrdFamily::new(spec.clone());
            let c = estimate_from_residuals(&x, &y, &family, &contrast_init(&spec.exponents))?;
            create_dir(&out)?;
            periodogram(&ols_residuals(&x, &y)?)?.write_text(&out.join("periodogram.tsv"))?;
            write_json(&out.join("theta.json"), &c)?;
            println!("{}", serde_json::to_string(&c.theta).unwrap_or_default());
        }
        Command::Experiment {
            config,
            seed,
            mode,
            scenario,
            out,
            repetitions,
            paper_scale,
            threads,
        } => {
            let mut c = match &config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::default(),
            };
            if paper_scale {
                c = c.paper_scale();
            }
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(m) = mode {
                c.mode = m;
            }
            if let Some(s) = scenario {
                c.scenarios = vec![s];
            }
            if let Some(o) = out {
                c.output = o;
            }
            if let Some(r) = repetitions {
                c.repetitions = r;
            }
            if let Some(t) = threads {
                c.threads = t;
            }
            let bundle = run_experiment(&c)?;
            println!(
                "{} files in {} ({} of {} repetitions failed)",
                bundle.manifest.files.len(),
                bundle.root.display(),
                bundle.manifest.failed_repetitions,
                bundle.manifest.total_repetitions
            );
        }
        Command::Report { bundle, figure, out } => {
            let b = ResultBundle::open(&bundle)?;
            for p in report(&b, figure, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
