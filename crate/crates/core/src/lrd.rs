//! Multifractionally integrated SPHARMA(1,1) errors.
//!
//! Each Laplace-Beltrami eigenspace `n` carries an ARFIMA(1, d_n, 1) process
//! with memory `d_n = alpha(n, theta) / 2`, AR eigenvalue `phi_n`, MA
//! eigenvalue `psi_n` and innovation variance `sigma2_n`. Spectral densities
//! and autocovariances in this module are *degree level*: they describe a
//! process driven by innovations of variance `sigma2_n`. Each of the
//! `2n + 1` orders carries an equal share, so a single coefficient series
//! `V_{n,j}` has autocovariance `B_n(t) / (2n + 1)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::harmonics::sphere_dim;
use crate::rng;
use crate::sample::{CoefficientSample, SampleMeta};

/// Free coefficients of the decreasing sequence in the paper-sim preset.
pub const DPBS_THETA0: [f64; 3] = [0.75, 0.76, 0.77];
/// Coefficients of the increasing sequence in the paper-sim preset.
pub const IPBS_UPSILON0: [f64; 2] = [1.0, 1.0];
/// Number of points in the DPBS/IPBS abscissa grids.
pub const DEFAULT_GRID_LEN: usize = 30;

/// Dependence scenario of the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Dpbs,
    Ipbs,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Dpbs => "dpbs",
            Scenario::Ipbs => "ipbs",
        }
    }

    pub fn tag(&self) -> u64 {
        match self {
            Scenario::Dpbs => 1,
            Scenario::Ipbs => 2,
        }
    }

    pub fn true_exponents(&self) -> LrdExponentFamily {
        match self {
            Scenario::Dpbs => LrdExponentFamily::Dpbs {
                theta: DPBS_THETA0,
                grid_len: DEFAULT_GRID_LEN,
            },
            Scenario::Ipbs => LrdExponentFamily::Ipbs {
                upsilon: IPBS_UPSILON0,
                grid_len: DEFAULT_GRID_LEN,
            },
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dpbs" => Ok(Scenario::Dpbs),
            "ipbs" => Ok(Scenario::Ipbs),
            other => Err(Error::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Abscissa `x_n` of the DPBS grid: `x_1 = 0`, step `G / (G - 1)`.
pub fn dpbs_abscissa(n: usize, grid_len: usize) -> f64 {
    (n as f64 - 1.0) * grid_len as f64 / (grid_len as f64 - 1.0)
}

/// Abscissa `x_n` of the IPBS grid: `x_1 = -pi`, step `2 pi / (G - 1)`.
pub fn ipbs_abscissa(n: usize, grid_len: usize) -> f64 {
    -PI + (n as f64 - 1.0) * 2.0 * PI / (grid_len as f64 - 1.0)
}

/// DPBS normalizer: `sup_{i = 1..100} (i x^2 + (i+1) x + (i+2)) / 100`.
pub fn dpbs_normalizer(x: f64) -> f64 {
    (1..=100)
        .map(|i| {
            let i = i as f64;
            (i * x * x + (i + 1.0) * x + (i + 2.0)) / 100.0
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Decreasing sequence `alpha(n, theta) = (t1 x^2 + t2 x + t3) / t4(x_n)`.
pub fn alpha_dpbs(n: usize, theta: &[f64; 3]) -> f64 {
    alpha_dpbs_on(n, theta, DEFAULT_GRID_LEN)
}

fn alpha_dpbs_on(n: usize, theta: &[f64; 3], grid_len: usize) -> f64 {
    let x = dpbs_abscissa(n, grid_len);
    (theta[0] * x * x + theta[1] * x + theta[2]) / dpbs_normalizer(x)
}

/// Increasing sequence `alpha(n, u) = 1 - 1 / (9 exp(u1 + u2 x_n))`.
pub fn alpha_ipbs(n: usize, upsilon: &[f64; 2]) -> f64 {
    alpha_ipbs_on(n, upsilon, DEFAULT_GRID_LEN)
}

fn alpha_ipbs_on(n: usize, upsilon: &[f64; 2], grid_len: usize) -> f64 {
    let x = ipbs_abscissa(n, grid_len);
    1.0 - 1.0 / (9.0 * (upsilon[0] + upsilon[1] * x).exp())
}

/// Per-degree LRD exponents `alpha(n, theta)`, defined for `n >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LrdExponentFamily {
    Dpbs { theta: [f64; 3], grid_len: usize },
    Ipbs { upsilon: [f64; 2], grid_len: usize },
    /// Same exponent on every degree.
    Constant { alpha: f64 },
    /// `values[n - 1]` is the exponent of degree `n`.
    Table { values: Vec<f64> },
}

impl LrdExponentFamily {
    pub fn alpha(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::Domain("LRD exponents are indexed from degree 1".into()));
        }
        Ok(match self {
            LrdExponentFamily::Dpbs { theta, grid_len } => alpha_dpbs_on(n, theta, *grid_len),
            LrdExponentFamily::Ipbs { upsilon, grid_len } => alpha_ipbs_on(n, upsilon, *grid_len),
            LrdExponentFamily::Constant { alpha } => *alpha,
            LrdExponentFamily::Table { values } => *values.get(n - 1).ok_or_else(|| {
                Error::Index(format!("exponent table has no entry for degree {n}"))
            })?,
        })
    }

    pub fn values(&self, max_degree: usize) -> Result<Vec<f64>> {
        (1..=max_degree).map(|n| self.alpha(n)).collect()
    }

    /// Free parameters that minimum-contrast fitting adjusts.
    pub fn params(&self) -> Vec<f64> {
        match self {
            LrdExponentFamily::Dpbs { theta, .. } => theta.to_vec(),
            LrdExponentFamily::Ipbs { upsilon, .. } => upsilon.to_vec(),
            LrdExponentFamily::Constant { alpha } => vec![*alpha],
            LrdExponentFamily::Table { .. } => Vec::new(),
        }
    }

    /// Same functional form with new free parameters.
    pub fn with_params(&self, p: &[f64]) -> Result<Self> {
        let want = self.params().len();
        if p.len() != want {
            return Err(Error::Dimension(format!("expected {want} parameters, got {}", p.len())));
        }
        Ok(match self {
            LrdExponentFamily::Dpbs { grid_len, .. } => LrdExponentFamily::Dpbs {
                theta: [p[0], p[1], p[2]],
                grid_len: *grid_len,
            },
            LrdExponentFamily::Ipbs { grid_len, .. } => LrdExponentFamily::Ipbs {
                upsilon: [p[0], p[1]],
                grid_len: *grid_len,
            },
            LrdExponentFamily::Constant { .. } => LrdExponentFamily::Constant { alpha: p[0] },
            LrdExponentFamily::Table { values } => LrdExponentFamily::Table {
                values: values.clone(),
            },
        })
    }

    /// Checks `0 <= alpha(n) < 1` on degrees `first..=max` (the parametric
    /// families must be strictly positive).
    pub fn validate(&self, first: usize, max: usize) -> Result<()> {
        let strict = !matches!(self, LrdExponentFamily::Table { .. } | LrdExponentFamily::Constant { .. });
        for n in first.max(1)..=max {
            let a = self.alpha(n)?;
            let ok = if strict { a > 0.0 && a < 1.0 } else { (0.0..1.0).contains(&a) };
            if !ok || !a.is_finite() {
                return Err(Error::Domain(format!("LRD exponent alpha({n}) = {a} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Parameters of the SPHARMA(1,1) error process on degrees `first..=max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpharmaSpec {
    pub first_degree: usize,
    pub max_degree: usize,
    /// Innovation variance per degree, `sigma2[n - first_degree]`.
    pub sigma2: Vec<f64>,
    /// AR eigenvalues `lambda_n(Phi_1)`.
    pub phi: Vec<f64>,
    /// MA eigenvalues `lambda_n(Psi_1)`.
    pub psi: Vec<f64>,
    pub exponents: LrdExponentFamily,
}

/// Parameters of one degree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeParams {
    pub sigma2: f64,
    pub phi: f64,
    pub psi: f64,
    pub alpha: f64,
}

impl SpharmaSpec {
    /// Simulation-study model: `sigma2_n = (n+1)^{-3/2}`,
    /// `phi_n = [0.7 (n + 1/n)]^{-3/2}`, `psi_n = 0.4 (n + 1/n)^{-3/2}`.
    pub fn preset(scenario: Scenario, max_degree: usize) -> Self {
        let degrees = 1..=max_degree;
        let sigma2 = degrees.clone().map(|n| (n as f64 + 1.0).powf(-1.5)).collect();
        let phi = degrees
            .clone()
            .map(|n| {
                let n = n as f64;
                (0.7 * (n + 1.0 / n)).powf(-1.5)
            })
            .collect();
        let psi = degrees
            .map(|n| {
                let n = n as f64;
                0.4 * (n + 1.0 / n).powf(-1.5)
            })
            .collect();
        SpharmaSpec {
            first_degree: 1,
            max_degree,
            sigma2,
            phi,
            psi,
            exponents: scenario.true_exponents(),
        }
    }

    pub fn degrees(&self) -> std::ops::RangeInclusive<usize> {
        self.first_degree..=self.max_degree
    }

    pub fn n_degrees(&self) -> usize {
        self.max_degree + 1 - self.first_degree
    }

    pub fn with_exponents(&self, exponents: LrdExponentFamily) -> Self {
        SpharmaSpec {
            exponents,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.first_degree > self.max_degree {
            return Err(Error::Config("first degree exceeds truncation degree".into()));
        }
        let k = self.n_degrees();
        if self.sigma2.len() != k || self.phi.len() != k || self.psi.len() != k {
            return Err(Error::Dimension(format!(
                "per-degree sequences must have {k} entries"
            )));
        }
        for n in self.degrees() {
            let i = n - self.first_degree;
            if !(self.sigma2[i] > 0.0) || !self.sigma2[i].is_finite() {
                return Err(Error::Domain(format!("sigma2 at degree {n} must be positive")));
            }
            if !(self.phi[i].abs() < 1.0) {
                return Err(Error::Unstable {
                    degree: n,
                    value: self.phi[i],
                });
            }
            if !self.psi[i].is_finite() {
                return Err(Error::Domain(format!("psi at degree {n} is not finite")));
            }
        }
        self.exponents.validate(self.first_degree, self.max_degree)
    }

    pub fn degree(&self, n: usize) -> Result<DegreeParams> {
        if n < self.first_degree || n > self.max_degree {
            return Err(Error::Index(format!(
                "degree {n} outside {}..={}",
                self.first_degree, self.max_degree
            )));
        }
        let i = n - self.first_degree;
        Ok(DegreeParams {
            sigma2: self.sigma2[i],
            phi: self.phi[i],
            psi: self.psi[i],
            alpha: self.exponents.alpha(n)?,
        })
    }
}

/// Fractional integration weights: coefficients of `(1 - z)^{-d}` up to
/// `z^len`.
pub fn frac_int_coeffs(d: f64, len: usize) -> Result<Vec<f64>> {
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::Domain(format!("fractional exponent {d} outside (0, 1)")));
    }
    let mut out = Vec::with_capacity(len + 1);
    out.push(1.0);
    for k in 1..=len {
        let kf = k as f64;
        out.push(out[k - 1] * (kf - 1.0 + d) / kf);
    }
    Ok(out)
}

fn arma_modulus(phi: f64, psi: f64, omega: f64) -> f64 {
    let c = omega.cos();
    (1.0 + 2.0 * psi * c + psi * psi) / (1.0 - 2.0 * phi * c + phi * phi)
}

/// ARMA(1,1) factor `|1 + psi e^{-iw}|^2 / |1 - phi e^{-iw}|^2 / (2 pi)`.
pub fn arma_spectral_factor(n: usize, spec: &SpharmaSpec, omega: f64) -> Result<f64> {
    let p = spec.degree(n)?;
    Ok(arma_modulus(p.phi, p.psi, omega) / (2.0 * PI))
}

fn density_from(p: &DegreeParams, omega: f64) -> f64 {
    let s = 4.0 * (omega / 2.0).sin().powi(2);
    p.sigma2 * arma_modulus(p.phi, p.psi, omega) / (2.0 * PI) * s.powf(-p.alpha / 2.0)
}

/// Degree-level spectral density
/// `f_n(w) = sigma2_n M_n(w) [4 sin^2(w/2)]^{-alpha_n / 2}`.
pub fn spectral_density(n: usize, spec: &SpharmaSpec, omega: f64) -> Result<f64> {
    let p = spec.degree(n)?;
    if omega == 0.0 || (omega.abs() < 1e-300) {
        return Err(Error::Pole);
    }
    Ok(density_from(&p, omega))
}

/// Autocovariance `gamma(0..len)` of ARFIMA(0, d, 0) with unit innovations.
pub fn fi_autocovariance(d: f64, len: usize) -> Vec<f64> {
    let mut g = Vec::with_capacity(len);
    if len == 0 {
        return g;
    }
    g.push(if d == 0.0 {
        1.0
    } else {
        (ln_gamma(1.0 - 2.0 * d) - 2.0 * ln_gamma(1.0 - d)).exp()
    });
    for h in 1..len {
        let hf = h as f64;
        g.push(g[h - 1] * (hf - 1.0 + d) / (hf - d));
    }
    g
}

const MIN_LOG2_GRID: u32 = 15;
const MAX_LOG2_GRID: u32 = 20;
const REFINEMENT_TOL: f64 = 1e-6;

/// Degree-level autocovariance `B_n(t) = int e^{iwt} f_n(w) dw`, `t = 0..n_lags`.
pub fn covariance_bn(n: usize, spec: &SpharmaSpec, n_lags: usize) -> Result<Vec<f64>> {
    let p = spec.degree(n)?;
    if !(p.phi.abs() < 1.0) {
        return Err(Error::Unstable {
            degree: n,
            value: p.phi,
        });
    }
    invert_density(&p, n_lags)
}

/// Numerical Fourier inversion of the ARFIMA(1,d,1) density.
///
/// The pole `f(0+) [4 sin^2(w/2)]^{-d}` is integrated in closed form (it is
/// the fractional-noise autocovariance); the remainder vanishes at `w = 0`
/// and is integrated with the periodic trapezoid rule, refined until two
/// consecutive grids agree to `1e-6` relative to `B(0)`.
pub(crate) fn invert_density(p: &DegreeParams, n_lags: usize) -> Result<Vec<f64>> {
    if n_lags == 0 {
        return Ok(Vec::new());
    }
    let d = p.alpha / 2.0;
    if !(0.0..0.5).contains(&d) {
        return Err(Error::Domain(format!("memory parameter {d} outside [0, 1/2)")));
    }
    let pole_weight = p.sigma2 * arma_modulus(p.phi, p.psi, 0.0);
    let pole: Vec<f64> = fi_autocovariance(d, n_lags)
        .into_iter()
        .map(|g| pole_weight * g)
        .collect();
    let mut log2 = MIN_LOG2_GRID;
    while (1usize << log2) < 4 * n_lags {
        log2 += 1;
    }
    let mut prev = remainder_trapezoid(p, d, 1 << log2, n_lags);
    loop {
        log2 += 1;
        let next = remainder_trapezoid(p, d, 1 << log2, n_lags);
        let scale = (pole[0] + next[0]).abs().max(f64::MIN_POSITIVE);
        let change = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale;
        if change <= REFINEMENT_TOL {
            return Ok(pole.iter().zip(&next).map(|(a, b)| a + b).collect());
        }
        if log2 >= MAX_LOG2_GRID {
            return Err(Error::Quadrature(format!(
                "relative change {change:e} after 2^{log2} frequencies"
            )));
        }
        prev = next;
    }
}

fn remainder_trapezoid(p: &DegreeParams, d: f64, k: usize, n_lags: usize) -> Vec<f64> {
    let a0 = arma_modulus(p.phi, p.psi, 0.0);
    let scale = p.sigma2 / (2.0 * PI);
    let mut buf: Vec<Complex64> = (0..k)
        .map(|i| {
            if i == 0 {
                return Complex64::new(0.0, 0.0);
            }
            let w = 2.0 * PI * i as f64 / k as f64;
            let s = 4.0 * (w / 2.0).sin().powi(2);
            let r = scale * (arma_modulus(p.phi, p.psi, w) - a0) * s.powf(-d);
            Complex64::new(r, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(k).process(&mut buf);
    let h = 2.0 * PI / k as f64;
    buf[..n_lags].iter().map(|c| h * c.re).collect()
}

/// `sum_n (2n+1) B_n^{order}(0)`: the truncated trace of the lag-0
/// covariance operator (with equal splitting this is `sum_n B_n(0)`).
pub fn trace_surrogate(spec: &SpharmaSpec) -> Result<f64> {
    let mut total = 0.0;
    for n in spec.degrees() {
        let b0 = covariance_bn(n, spec, 1)?[0];
        total += sphere_dim(n) as f64 * (b0 / sphere_dim(n) as f64);
    }
    Ok(total)
}

/// How the fractional integration is realised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SimulationMethod {
    /// Exact Gaussian draw with covariance `B_n(t)/(2n+1)` by circulant
    /// embedding.
    #[default]
    CirculantEmbedding,
    /// ARMA recursion followed by a truncated `(1 - B)^{-d}` filter.
    TruncatedFilter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub method: SimulationMethod,
    pub burn_in: usize,
    /// Truncated filter length; defaults to `max(2000, 4N)`.
    pub filter_len: Option<usize>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            method: SimulationMethod::CirculantEmbedding,
            burn_in: 500,
            filter_len: None,
        }
    }
}

/// Simulates `V_{n,j}(t)`, `t = 1..N`, for every degree of `spec` with the
/// default (exact) method.
pub fn simulate(spec: &SpharmaSpec, n_times: usize, burn_in: usize, seed: u64) -> Result<CoefficientSample> {
    simulate_with(
        spec,
        n_times,
        seed,
        &SimulationOptions {
            burn_in,
            ..SimulationOptions::default()
        },
    )
}

pub fn simulate_with(
    spec: &SpharmaSpec,
    n_times: usize,
    seed: u64,
    opts: &SimulationOptions,
) -> Result<CoefficientSample> {
    Simulator::new(spec, n_times, opts)?.draw(seed)
}

/// Per-degree simulation plans for a fixed `(spec, N)`, reusable across
/// seeds.
pub struct Simulator {
    spec: SpharmaSpec,
    n_times: usize,
    opts: SimulationOptions,
    plans: Vec<DegreePlan>,
}

enum DegreePlan {
    Circulant {
        sqrt_eig: Vec<f64>,
        fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    },
    Filter {
        params: DegreeParams,
        lead: usize,
        filter: Option<FilterPlan>,
    },
}

impl Simulator {
    pub fn new(spec: &SpharmaSpec, n_times: usize, opts: &SimulationOptions) -> Result<Self> {
        spec.validate()?;
        if n_times < 2 {
            return Err(Error::Domain("sample size must be at least 2".into()));
        }
        let plans = spec
            .degrees()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&n| Self::plan(spec, n, n_times, opts))
            .collect::<Result<_>>()?;
        Ok(Simulator {
            spec: spec.clone(),
            n_times,
            opts: *opts,
            plans,
        })
    }

    fn plan(spec: &SpharmaSpec, n: usize, n_times: usize, opts: &SimulationOptions) -> Result<DegreePlan> {
        let p = spec.degree(n)?;
        let dim = sphere_dim(n);
        let mut planner = FftPlanner::new();
        Ok(match opts.method {
            SimulationMethod::CirculantEmbedding => {
                let eig = circulant_eigenvalues(&p, dim, n_times, n)?;
                let m = eig.len() as f64;
                DegreePlan::Circulant {
                    fft: planner.plan_fft_forward(eig.len()),
                    sqrt_eig: eig.into_iter().map(|l| (l / m).sqrt()).collect(),
                }
            }
            SimulationMethod::TruncatedFilter => {
                let d = p.alpha / 2.0;
                let len = opts.filter_len.unwrap_or_else(|| (4 * n_times).max(2000));
                let lead = opts.burn_in + if d > 0.0 { len } else { 0 };
                let filter = if d > 0.0 {
                    Some(FilterPlan::new(&frac_int_coeffs(d, len)?, lead + n_times, &mut planner))
                } else {
                    None
                };
                DegreePlan::Filter {
                    params: p,
                    lead,
                    filter,
                }
            }
        })
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn spec(&self) -> &SpharmaSpec {
        &self.spec
    }

    /// One realisation; order `(n, j)` uses the substream `(seed, noise, n, j)`.
    pub fn draw(&self, seed: u64) -> Result<CoefficientSample> {
        let n_times = self.n_times;
        let per_degree: Vec<Vec<Vec<f64>>> = self
            .spec
            .degrees()
            .zip(&self.plans)
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&(n, plan)| {
                (1..=sphere_dim(n))
                    .map(|j| {
                        let r = rng::stream(seed, &[rng::TAG_NOISE, n as u64, j as u64]);
                        self.draw_series(n, plan, r)
                    })
                    .collect()
            })
            .collect();
        let mut sample = CoefficientSample::zeros(n_times, self.spec.first_degree, self.spec.max_degree)?;
        for (n, streams) in self.spec.degrees().zip(per_degree) {
            for (j, s) in streams.iter().enumerate() {
                sample.set_series(n, j + 1, s)?;
            }
        }
        sample.meta = SampleMeta {
            seed: Some(seed),
            source: Some(format!("spharma(1,1) {:?}", self.opts.method)),
        };
        Ok(sample)
    }

    fn draw_series(&self, n: usize, plan: &DegreePlan, mut r: impl Rng) -> Vec<f64> {
        let n_times = self.n_times;
        match plan {
            DegreePlan::Circulant { sqrt_eig, fft } => {
                let mut buf: Vec<Complex64> = sqrt_eig
                    .iter()
                    .map(|&s| {
                        let a: f64 = r.sample(StandardNormal);
                        let b: f64 = r.sample(StandardNormal);
                        Complex64::new(a * s, b * s)
                    })
                    .collect();
                fft.process(&mut buf);
                buf[..n_times].iter().map(|c| c.re).collect()
            }
            DegreePlan::Filter { params: p, lead, filter } => {
                let total = lead + n_times;
                let sd = (p.sigma2 / sphere_dim(n) as f64).sqrt();
                let mut u = Vec::with_capacity(total);
                let (mut prev_u, mut prev_eta) = (0.0, 0.0);
                for _ in 0..total {
                    let eta = sd * r.sample::<f64, _>(StandardNormal);
                    let v = p.phi * prev_u + eta + p.psi * prev_eta;
                    u.push(v);
                    prev_u = v;
                    prev_eta = eta;
                }
                match filter {
                    Some(f) => f.apply(&u)[*lead..total].to_vec(),
                    None => u[*lead..total].to_vec(),
                }
            }
        }
    }
}

fn circulant_eigenvalues(p: &DegreeParams, dim: usize, n_times: usize, n: usize) -> Result<Vec<f64>> {
    let mut half = n_times;
    for _ in 0..4 {
        let cov = invert_density(p, half + 1)?;
        let m = 2 * half;
        let mut buf: Vec<Complex64> = (0..m)
            .map(|k| {
                let lag = if k <= half { k } else { m - k };
                Complex64::new(cov[lag] / dim as f64, 0.0)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(m).process(&mut buf);
        let eig: Vec<f64> = buf.iter().map(|c| c.re).collect();
        let max = eig.iter().cloned().fold(0.0, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if min >= -1e-10 * max {
            return Ok(eig.into_iter().map(|l| l.max(0.0)).collect());
        }
        half *= 2;
    }
    Err(Error::NotPositiveDefinite { degree: Some(n) })
}

// FFT convolution of a long series with a fixed filter.
struct FilterPlan {
    spectrum: Vec<Complex64>,
    fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
    size: usize,
}

impl FilterPlan {
    fn new(filter: &[f64], signal_len: usize, planner: &mut FftPlanner<f64>) -> Self {
        let size = (signal_len + filter.len()).next_power_of_two();
        let fwd = planner.plan_fft_forward(size);
        let inv = planner.plan_fft_inverse(size);
        let mut spectrum = vec![Complex64::new(0.0, 0.0); size];
        for (s, f) in spectrum.iter_mut().zip(filter) {
            *s = Complex64::new(*f, 0.0);
        }
        fwd.process(&mut spectrum);
        FilterPlan {
            spectrum,
            fwd,
            inv,
            size,
        }
    }

    // Causal convolution, first `signal.len()` outputs.
    fn apply(&self, signal: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.size];
        for (b, s) in buf.iter_mut().zip(signal) {
            *b = Complex64::new(*s, 0.0);
        }
        self.fwd.process(&mut buf);
        for (b, h) in buf.iter_mut().zip(&self.spectrum) {
            *b *= h;
        }
        self.inv.process(&mut buf);
        let norm = 1.0 / self.size as f64;
        buf[..signal.len()].iter().map(|c| c.re * norm).collect()
    }
}
