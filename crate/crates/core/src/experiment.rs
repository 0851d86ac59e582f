//! Monte Carlo experiments: configuration, execution, result bundles and
//! figure data.
//!
//! A bundle directory looks like
//!
//! ```text
//! out/
//!   config.toml  metadata.json  manifest.json
//!   dpbs/beta_true.tsv  dpbs/alpha_true.tsv
//!   dpbs/N50/rem.tsv
//!   dpbs/N50/oracle/{beta_hat,emqe_beta,emqe_predictor,l1_prediction,rtpem}.tsv
//!   dpbs/N50/oracle/l1_prediction_hist.json
//!   dpbs/N50/plugin/... theta_hat.tsv l1_spectral.tsv l1_spectral_hist.json
//! ```
//!
//! Every file except `manifest.json` is listed in the manifest with its
//! SHA-256. Repetition `r` of cell `(scenario, N)` draws its noise from the
//! substreams keyed `(seed, scenario, N, r)` then `(n, j)`, so outputs do
//! not depend on the thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harmonics::{HarmonicTable, QuadratureGrid};
use crate::lrd::{trace_surrogate, LrdExponentFamily, Scenario, SimulationMethod, SimulationOptions, Simulator, SpharmaSpec};
use crate::regression::{
    aggregated_covariances, anova_design, gls_fit_factored, reconstruct_beta, synthesize_response, true_beta,
    BetaCoefficients, DesignMatrix,
};
use crate::residuals::{
    emqe_beta, emqe_predictor, figure_times, histogram, l1_prediction_norms, l1_spectral_norms,
    repetition_mean_fields, HistogramSummary, Repetition, RepetitionStack,
};
use crate::rng;
use crate::sample::CoefficientSample;
use crate::spectral::{estimate_from_residuals, plugin_gls, ContrastFit, LrdFamily};
use crate::toeplitz::ToeplitzFactor;

pub const PRESET_SIM: &str = "paper-sim";

/// Which estimators an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Oracle,
    Plugin,
    Both,
}

impl Mode {
    pub fn oracle(&self) -> bool {
        matches!(self, Mode::Oracle | Mode::Both)
    }

    pub fn plugin(&self) -> bool {
        matches!(self, Mode::Plugin | Mode::Both)
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oracle" => Ok(Mode::Oracle),
            "plugin" => Ok(Mode::Plugin),
            "both" => Ok(Mode::Both),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Parameter preset; only `paper-sim` is defined.
    pub preset: String,
    pub scenarios: Vec<Scenario>,
    pub sample_sizes: Vec<usize>,
    pub repetitions: usize,
    /// Truncation degree `M`.
    pub truncation: usize,
    /// Number of regressors `p`.
    pub regressors: usize,
    pub seed: u64,
    pub mode: Mode,
    pub output: PathBuf,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub bins: usize,
    pub burn_in: usize,
    pub simulation: SimulationMethod,
    /// Skip spectral estimation and plug in the true parameters.
    pub pin_theta_to_truth: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: PRESET_SIM.into(),
            scenarios: vec![Scenario::Dpbs, Scenario::Ipbs],
            sample_sizes: vec![50, 100, 200],
            repetitions: 20,
            truncation: 30,
            regressors: 5,
            seed: 20_240_601,
            mode: Mode::Both,
            output: PathBuf::from("results"),
            threads: 0,
            bins: 12,
            burn_in: 500,
            simulation: SimulationMethod::CirculantEmbedding,
            pin_theta_to_truth: false,
        }
    }
}

impl ExperimentConfig {
    /// Full simulation-study scale: 100 repetitions, `N = 50, 100, 500`.
    pub fn paper_scale(mut self) -> Self {
        self.repetitions = 100;
        self.sample_sizes = vec![50, 100, 500];
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.preset != PRESET_SIM {
            return Err(Error::Config(format!("unknown preset '{}'", self.preset)));
        }
        if self.scenarios.is_empty() || self.sample_sizes.is_empty() {
            return Err(Error::Config("need at least one scenario and one sample size".into()));
        }
        if self.repetitions == 0 || self.truncation == 0 || self.regressors == 0 || self.bins == 0 {
            return Err(Error::Config("repetitions, truncation, regressors and bins must be positive".into()));
        }
        if let Some(n) = self.sample_sizes.iter().find(|n| **n < self.regressors.max(3)) {
            return Err(Error::Config(format!("sample size {n} is too small for {} regressors", self.regressors)));
        }
        for s in &self.scenarios {
            self.spec(*s).validate()?;
        }
        Ok(())
    }

    pub fn spec(&self, scenario: Scenario) -> SpharmaSpec {
        SpharmaSpec::preset(scenario, self.truncation)
    }

    pub fn simulation_options(&self) -> SimulationOptions {
        SimulationOptions {
            method: self.simulation,
            burn_in: self.burn_in,
            filter_len: None,
        }
    }
}

/// Fixed starting point of the contrast minimization, away from the truth.
pub fn contrast_init(exponents: &LrdExponentFamily) -> Vec<f64> {
    match exponents {
        LrdExponentFamily::Dpbs { .. } => vec![0.5, 0.5, 0.5],
        LrdExponentFamily::Ipbs { .. } => vec![0.5, 0.5],
        LrdExponentFamily::Constant { .. } => vec![0.5],
        LrdExponentFamily::Table { .. } => Vec::new(),
    }
}

/// Outputs of all repetitions of one `(scenario, N)` cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub scenario: Scenario,
    pub n_times: usize,
    pub oracle: Option<RepetitionStack>,
    pub plugin: Option<RepetitionStack>,
    /// Contrast diagnostics per successful plug-in repetition (absent when
    /// pinned to the truth).
    pub contrasts: Vec<Option<ContrastFit>>,
    /// Repetition indices of the stacks.
    pub repetitions: Vec<usize>,
    pub failed: usize,
}

struct RepOutcome {
    oracle: Option<Repetition>,
    plugin: Option<(Repetition, Option<ContrastFit>)>,
}

/// Seed of repetition `r` in cell `(scenario, N)`.
pub fn repetition_seed(seed: u64, scenario: Scenario, n_times: usize, r: usize) -> u64 {
    rng::derive_seed(seed, &[rng::TAG_REPETITION, scenario.tag(), n_times as u64, r as u64])
}

/// Runs every repetition of one cell (in the current thread pool).
pub fn run_cell(config: &ExperimentConfig, scenario: Scenario, n_times: usize) -> Result<CellResult> {
    let spec = config.spec(scenario);
    let x = anova_design(n_times, config.regressors)?;
    let beta = true_beta(config.truncation, config.regressors);
    let sim = Simulator::new(&spec, n_times, &config.simulation_options())?;
    let factors: Vec<ToeplitzFactor> = if config.mode.oracle() {
        aggregated_covariances(&spec, n_times)?
            .par_iter()
            .map(|c| c.factor())
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let family = LrdFamily::new(spec.clone());
    let theta0 = spec.exponents.params();
    let init = contrast_init(&spec.exponents);
    let snapshot_times = figure_times(n_times);

    let outcomes: Vec<Result<RepOutcome>> = (0..config.repetitions)
        .into_par_iter()
        .map(|r| {
            let eps = sim.draw(repetition_seed(config.seed, scenario, n_times, r))?;
            let y = synthesize_response(&x, &beta, &eps)?;
            let responses: Vec<Vec<f64>> = y.degrees().map(|n| y.degree_average(n)).collect();
            let snapshot = y.select_times(&snapshot_times)?;
            let oracle = if config.mode.oracle() {
                Some(Repetition {
                    fit: gls_fit_factored(&x, &y, &factors)?,
                    responses: responses.clone(),
                    theta: None,
                    snapshot: Some(snapshot.clone()),
                })
            } else {
                None
            };
            let plugin = if config.mode.plugin() {
                let (theta, diag) = if config.pin_theta_to_truth {
                    (theta0.clone(), None)
                } else {
                    let fit = estimate_from_residuals(&x, &y, &family, &init)?;
                    (fit.theta.clone(), Some(fit))
                };
                let fit = plugin_gls(&x, &y, &theta, &family)?;
                Some((
                    Repetition {
                        fit,
                        responses,
                        theta: Some(theta),
                        snapshot: Some(snapshot),
                    },
                    diag,
                ))
            } else {
                None
            };
            Ok(RepOutcome { oracle, plugin })
        })
        .collect();

    let mk = || RepetitionStack::new(n_times, spec.first_degree, spec.max_degree, config.regressors, snapshot_times.clone());
    let mut oracle = config.mode.oracle().then(mk);
    let mut plugin = config.mode.plugin().then(mk);
    let mut contrasts = Vec::new();
    let mut repetitions = Vec::new();
    let mut failed = 0;
    for (r, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(o) => {
                if let (Some(s), Some(rep)) = (oracle.as_mut(), o.oracle) {
                    s.push(rep)?;
                }
                if let (Some(s), Some((rep, diag))) = (plugin.as_mut(), o.plugin) {
                    s.push(rep)?;
                    contrasts.push(diag);
                }
                repetitions.push(r);
            }
            Err(e) => {
                log::warn!("{} N={n_times} repetition {r} failed: {e}", scenario.name());
                failed += 1;
            }
        }
    }
    Ok(CellResult {
        scenario,
        n_times,
        oracle,
        plugin,
        contrasts,
        repetitions,
        failed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngProvenance {
    pub master_seed: u64,
    pub generator: String,
    pub substream_key: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
    pub rng: RngProvenance,
    pub failed_repetitions: usize,
    pub total_repetitions: usize,
}

/// An experiment output directory.
#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl ResultBundle {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Ok(ResultBundle {
            root: root.to_path_buf(),
            manifest,
        })
    }

    /// Manifest paths whose file name is `name`.
    pub fn find(&self, name: &str) -> Vec<&str> {
        self.manifest
            .files
            .iter()
            .map(|e| e.path.as_str())
            .filter(|p| Path::new(p).file_name().and_then(|f| f.to_str()) == Some(name))
            .collect()
    }

    /// Recomputes every hash; returns the paths that do not match.
    pub fn verify(&self) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for e in &self.manifest.files {
            let path = self.root.join(&e.path);
            let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
            if hex::encode(Sha256::digest(&bytes)) != e.sha256 {
                bad.push(e.path.clone());
            }
        }
        Ok(bad)
    }
}

// Sequential writer recording every file for the manifest.
struct BundleWriter {
    root: PathBuf,
    files: Vec<ManifestEntry>,
}

impl BundleWriter {
    fn write(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.push(ManifestEntry {
            path: rel.to_string(),
            sha256: hex::encode(Sha256::digest(contents)),
            bytes: contents.len() as u64,
        });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }
}

fn tsv(header: &str, rows: impl IntoIterator<Item = String>) -> Vec<u8> {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out.into_bytes()
}

fn beta_table(beta: &BetaCoefficients) -> Vec<u8> {
    tsv(
        "n\tj\tvalue",
        beta.degrees().flat_map(|n| (1..=beta.p).map(move |j| format!("{n}\t{j}\t{:e}", beta.get(n, j)))),
    )
}

fn surface_table(grid: &QuadratureGrid, times: &[usize], fields: &[Vec<f64>]) -> Vec<u8> {
    let mut out = String::from("t\tcolatitude\tlongitude\tvalue\n");
    for (t, f) in times.iter().zip(fields) {
        for (p, v) in grid.nodes.iter().zip(f) {
            let _ = writeln!(out, "{t}\t{:e}\t{:e}\t{:e}", p.colatitude, p.longitude, v);
        }
    }
    out.into_bytes()
}

#[derive(Serialize)]
struct DegreeHistogram {
    n: usize,
    #[serde(flatten)]
    histogram: HistogramSummary,
}

fn degree_histograms(first: usize, per_degree: &[Vec<f64>], bins: usize, name: &str) -> Result<Vec<DegreeHistogram>> {
    per_degree
        .iter()
        .enumerate()
        .map(|(i, v)| {
            Ok(DegreeHistogram {
                n: first + i,
                histogram: histogram(v, bins, name)?,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct ScenarioMeta {
    trace_surrogate: f64,
    alpha_min: f64,
    alpha_max: f64,
}

#[derive(Serialize)]
struct CellMeta {
    repetitions: usize,
    failed: usize,
    contrast_not_converged: usize,
}

#[derive(Serialize)]
struct Metadata {
    scenarios: BTreeMap<String, ScenarioMeta>,
    cells: BTreeMap<String, CellMeta>,
    l1_spectral_pole_window: String,
    time_index: String,
    simulation: SimulationMethod,
}

fn write_stack(
    w: &mut BundleWriter,
    dir: &str,
    stack: &RepetitionStack,
    reps: &[usize],
    beta: &BetaCoefficients,
    table: &HarmonicTable,
    bins: usize,
) -> Result<()> {
    let first = stack.first_degree;
    let p = stack.p;
    w.write(
        &format!("{dir}/beta_hat.tsv"),
        &tsv(
            "rep\tn\tj\tvalue",
            stack.reps().iter().zip(reps).flat_map(|(rep, r)| {
                rep.fit.degrees.iter().enumerate().flat_map(move |(i, d)| {
                    (0..p).map(move |j| format!("{r}\t{}\t{}\t{:e}", first + i, j + 1, d.beta_hat[j]))
                })
            }),
        ),
    )?;
    w.write(&format!("{dir}/emqe_beta.tsv"), &beta_table(&emqe_beta(stack, beta)?))?;
    let ep = emqe_predictor(stack)?;
    w.write(
        &format!("{dir}/emqe_predictor.tsv"),
        &tsv(
            "n\tt\tvalue",
            ep.iter()
                .enumerate()
                .flat_map(|(i, row)| row.iter().enumerate().map(move |(t, v)| format!("{}\t{t}\t{v:e}", first + i))),
        ),
    )?;
    let l1 = l1_prediction_norms(stack, false)?;
    let n_inv = 1.0 / stack.n_times as f64;
    w.write(
        &format!("{dir}/l1_prediction.tsv"),
        &tsv(
            "n\trep\tvalue\tnormalized",
            l1.iter().enumerate().flat_map(|(i, row)| {
                row.iter()
                    .zip(reps)
                    .map(move |(v, r)| format!("{}\t{r}\t{v:e}\t{:e}", first + i, v * n_inv))
            }),
        ),
    )?;
    w.json(
        &format!("{dir}/l1_prediction_hist.json"),
        &degree_histograms(first, &l1, bins, "l1_prediction")?,
    )?;
    let mf = repetition_mean_fields(stack, table, &stack.snapshot_times)?;
    w.write(&format!("{dir}/rtpem.tsv"), &surface_table(table.grid(), &mf.times, &mf.rtpem))?;
    Ok(())
}

/// Writes the statistics of one cell under `<scenario>/N<N>/`.
fn write_cell(w: &mut BundleWriter, config: &ExperimentConfig, cell: &CellResult, table: &HarmonicTable) -> Result<()> {
    let base = format!("{}/N{}", cell.scenario.name(), cell.n_times);
    let beta = true_beta(config.truncation, config.regressors);
    if let Some(any) = cell.oracle.as_ref().or(cell.plugin.as_ref()) {
        if !any.is_empty() {
            let mf = repetition_mean_fields(any, table, &any.snapshot_times)?;
            w.write(&format!("{base}/rem.tsv"), &surface_table(table.grid(), &mf.times, &mf.rem))?;
        }
    }
    if let Some(s) = &cell.oracle {
        if !s.is_empty() {
            write_stack(w, &format!("{base}/oracle"), s, &cell.repetitions, &beta, table, config.bins)?;
        }
    }
    if let Some(s) = &cell.plugin {
        if s.is_empty() {
            return Ok(());
        }
        let dir = format!("{base}/plugin");
        write_stack(w, &dir, s, &cell.repetitions, &beta, table, config.bins)?;
        w.write(
            &format!("{dir}/theta_hat.tsv"),
            &tsv(
                "rep\ttheta\tcontrast\titerations\tconverged",
                s.reps().iter().zip(&cell.repetitions).zip(&cell.contrasts).map(|((rep, r), c)| {
                    let th: Vec<String> = rep.theta.iter().flatten().map(|v| format!("{v:e}")).collect();
                    match c {
                        Some(c) => format!("{r}\t{}\t{:e}\t{}\t{}", th.join(","), c.value, c.iterations, c.converged),
                        None => format!("{r}\t{}\tNaN\t0\tpinned", th.join(",")),
                    }
                }),
            ),
        )?;
        let spec = config.spec(cell.scenario);
        let family = LrdFamily::new(spec.clone());
        let l1 = l1_spectral_norms(s, &family, &spec.exponents.params())?;
        w.write(
            &format!("{dir}/l1_spectral.tsv"),
            &tsv(
                "n\trep\tvalue",
                l1.iter().enumerate().flat_map(|(i, row)| {
                    row.iter()
                        .zip(&cell.repetitions)
                        .map(move |(v, r)| format!("{}\t{r}\t{v:e}", s.first_degree + i))
                }),
            ),
        )?;
        w.json(
            &format!("{dir}/l1_spectral_hist.json"),
            &degree_histograms(s.first_degree, &l1, config.bins, "l1_spectral")?,
        )?;
    }
    Ok(())
}

/// Runs the experiment and writes its bundle to `config.output`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultBundle> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if config.threads > 0 {
        builder = builder.num_threads(config.threads);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &ExperimentConfig) -> Result<ResultBundle> {
    let root = config.output.clone();
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let mut w = BundleWriter {
        root: root.clone(),
        files: Vec::new(),
    };
    w.write("config.toml", config.to_toml()?.as_bytes())?;
    let table = HarmonicTable::new(QuadratureGrid::for_degree(config.truncation), config.truncation);
    let mut meta = Metadata {
        scenarios: BTreeMap::new(),
        cells: BTreeMap::new(),
        l1_spectral_pole_window: "frequencies with |w| < 2 pi / N excluded".into(),
        time_index: "0-based; figure times floor(i (N-1) / 8), i = 0..8".into(),
        simulation: config.simulation,
    };
    let (mut failed, mut total) = (0, 0);
    for &scenario in &config.scenarios {
        let spec = config.spec(scenario);
        let alphas = spec.exponents.values(config.truncation)?;
        w.write(
            &format!("{}/beta_true.tsv", scenario.name()),
            &beta_table(&true_beta(config.truncation, config.regressors)),
        )?;
        w.write(
            &format!("{}/alpha_true.tsv", scenario.name()),
            &tsv("n\talpha", alphas.iter().enumerate().map(|(i, a)| format!("{}\t{a:e}", i + 1))),
        )?;
        meta.scenarios.insert(
            scenario.name().into(),
            ScenarioMeta {
                trace_surrogate: trace_surrogate(&spec)?,
                alpha_min: alphas.iter().cloned().fold(f64::INFINITY, f64::min),
                alpha_max: alphas.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            },
        );
        for &n_times in &config.sample_sizes {
            log::info!("running {} N={n_times} ({} repetitions)", scenario.name(), config.repetitions);
            let cell = run_cell(config, scenario, n_times)?;
            failed += cell.failed;
            total += config.repetitions;
            write_cell(&mut w, config, &cell, &table)?;
            meta.cells.insert(
                format!("{}/N{}", scenario.name(), n_times),
                CellMeta {
                    repetitions: config.repetitions,
                    failed: cell.failed,
                    contrast_not_converged: cell.contrasts.iter().flatten().filter(|c| !c.converged).count(),
                },
            );
        }
    }
    if failed * 20 > total {
        return Err(Error::RunFailed { failed, total });
    }
    w.json("metadata.json", &meta)?;
    let manifest = Manifest {
        files: w.files.clone(),
        rng: RngProvenance {
            master_seed: config.seed,
            generator: "ChaCha8 seeded by SHA-256 of (seed, tags)".into(),
            substream_key: ["repetition", "scenario", "N", "r", "noise", "n", "j"].iter().map(|s| s.to_string()).collect(),
        },
        failed_repetitions: failed,
        total_repetitions: total,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))? + "\n";
    let path = root.join("manifest.json");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(ResultBundle { root, manifest })
}

/// Figure-data selectors accepted by [`report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    BetaTrue,
    Surfaces,
    Rem,
    Rtpem,
    EmqeBeta,
    EmqePredictor,
    L1Prediction,
    L1Spectral,
    All,
}

impl std::str::FromStr for Selector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "beta-true" | "figure-1" => Selector::BetaTrue,
            "surfaces" | "figure-2" => Selector::Surfaces,
            "rem" | "figure-3" => Selector::Rem,
            "rtpem" | "figure-4" => Selector::Rtpem,
            "emqe-beta" | "figure-6" => Selector::EmqeBeta,
            "emqe-predictor" | "figure-8" => Selector::EmqePredictor,
            "l1-prediction" | "figure-9" => Selector::L1Prediction,
            "l1-spectral" | "figure-10" => Selector::L1Spectral,
            "all" => Selector::All,
            other => return Err(Error::Config(format!("unknown report selector '{other}'"))),
        })
    }
}

impl Selector {
    const EACH: [Selector; 8] = [
        Selector::BetaTrue,
        Selector::Surfaces,
        Selector::Rem,
        Selector::Rtpem,
        Selector::EmqeBeta,
        Selector::EmqePredictor,
        Selector::L1Prediction,
        Selector::L1Spectral,
    ];

    fn figure(&self) -> &'static str {
        match self {
            Selector::BetaTrue => "figure-1",
            Selector::Surfaces => "figure-2",
            Selector::Rem => "figure-3",
            Selector::Rtpem => "figure-4",
            Selector::EmqeBeta => "figure-6",
            Selector::EmqePredictor => "figure-8",
            Selector::L1Prediction => "figure-9",
            Selector::L1Spectral => "figure-10",
            Selector::All => "all",
        }
    }

    // bundle file the figure is derived from
    fn source(&self) -> &'static str {
        match self {
            Selector::BetaTrue | Selector::Surfaces => "beta_true.tsv",
            Selector::Rem => "rem.tsv",
            Selector::Rtpem => "rtpem.tsv",
            Selector::EmqeBeta => "emqe_beta.tsv",
            Selector::EmqePredictor => "emqe_predictor.tsv",
            Selector::L1Prediction => "l1_prediction_hist.json",
            Selector::L1Spectral => "l1_spectral_hist.json",
            Selector::All => "",
        }
    }
}

fn read_beta(path: &Path) -> Result<BetaCoefficients> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        let parse_err = |e: String| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1));
        if f.len() != 3 {
            return Err(parse_err("expected 3 columns".into()));
        }
        let n: usize = f[0].parse().map_err(|e| parse_err(format!("{e}")))?;
        let j: usize = f[1].parse().map_err(|e| parse_err(format!("{e}")))?;
        let v: f64 = f[2].parse().map_err(|e| parse_err(format!("{e}")))?;
        rows.push((n, j, v));
    }
    let first = rows.iter().map(|r| r.0).min().ok_or_else(|| Error::Parse("empty beta table".into()))?;
    let max = rows.iter().map(|r| r.0).max().unwrap_or(first);
    let p = rows.iter().map(|r| r.1).max().unwrap_or(1);
    let mut b = BetaCoefficients::zeros(first, max, p);
    for (n, j, v) in rows {
        b.set(n, j, v);
    }
    Ok(b)
}

// "dpbs/N50/oracle/emqe_beta.tsv" -> "dpbs_N50_oracle"
fn cell_label(rel: &str) -> String {
    let parent = Path::new(rel).parent().map(|p| p.to_string_lossy().into_owned()).unwrap_or_default();
    parent.replace(['/', '\\'], "_")
}

/// Writes the data behind one figure (or all of them) into `out`; returns
/// the files written.
pub fn report(bundle: &ResultBundle, which: Selector, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    if which == Selector::All {
        let mut written = Vec::new();
        for s in Selector::EACH {
            match report(bundle, s, out) {
                Ok(mut w) => written.append(&mut w),
                Err(Error::NotComputed(msg)) => log::info!("skipping {}: {msg}", s.figure()),
                Err(e) => return Err(e),
            }
        }
        return Ok(written);
    }
    let sources = bundle.find(which.source());
    if sources.is_empty() {
        return Err(Error::NotComputed(format!("{} ({}) is not in the bundle", which.figure(), which.source())));
    }
    let mut written = Vec::new();
    for rel in sources {
        let src = bundle.root.join(rel);
        let label = cell_label(rel);
        let dest = out.join(format!("{}_{label}.tsv", which.figure()));
        let bytes = match which {
            Selector::Surfaces => {
                let beta = read_beta(&src)?;
                let grid = QuadratureGrid::for_degree(beta.max_degree);
                let table = HarmonicTable::new(grid, beta.max_degree);
                let fields = reconstruct_beta(&beta, &table)?;
                let mut s = String::from("j\tcolatitude\tlongitude\tvalue\n");
                for (j, f) in fields.iter().enumerate() {
                    for (p, v) in table.grid().nodes.iter().zip(f) {
                        let _ = writeln!(s, "{}\t{:e}\t{:e}\t{v:e}", j + 1, p.colatitude, p.longitude);
                    }
                }
                s.into_bytes()
            }
            Selector::L1Prediction | Selector::L1Spectral => {
                let text = fs::read_to_string(&src).map_err(|e| Error::io(&src, e))?;
                let hists: Vec<serde_json::Value> =
                    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", src.display())))?;
                let mut s = String::from("n\tbin_low\tbin_high\tcount\n");
                for h in hists {
                    let n = h["n"].as_u64().unwrap_or(0);
                    let edges: Vec<f64> = h["bin_edges"].as_array().into_iter().flatten().filter_map(|v| v.as_f64()).collect();
                    let counts: Vec<u64> = h["counts"].as_array().into_iter().flatten().filter_map(|v| v.as_u64()).collect();
                    for (i, c) in counts.iter().enumerate() {
                        let _ = writeln!(s, "{n}\t{:e}\t{:e}\t{c}", edges[i], edges[i + 1]);
                    }
                }
                s.into_bytes()
            }
            _ => fs::read(&src).map_err(|e| Error::io(&src, e))?,
        };
        fs::write(&dest, bytes).map_err(|e| Error::io(&dest, e))?;
        written.push(dest);
    }
    Ok(written)
}

/// Simulated error sample of the preset model, as used by one repetition.
pub fn simulate_preset(scenario: Scenario, truncation: usize, n_times: usize, opts: &SimulationOptions, seed: u64) -> Result<CoefficientSample> {
    Simulator::new(&SpharmaSpec::preset(scenario, truncation), n_times, opts)?.draw(seed)
}

/// The preset design for `N` time points.
pub fn preset_design(n_times: usize, regressors: usize) -> Result<DesignMatrix> {
    anova_design(n_times, regressors)
}
