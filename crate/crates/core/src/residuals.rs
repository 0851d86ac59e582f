//! Error statistics across Monte Carlo repetitions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{flat_index, sphere_dim, HarmonicTable};
use crate::lrd::spectral_density;
use crate::regression::{BetaCoefficients, GlsFit};
use crate::sample::CoefficientSample;
use crate::spectral::LrdFamily;

/// Figure times for `N = 500`.
pub const PRESET_TIMES_500: [usize; 9] = [0, 62, 124, 187, 249, 311, 374, 436, 499];

/// `floor(i (N-1) / 8)`, `i = 0..=8`; equals [`PRESET_TIMES_500`] at `N = 500`.
pub fn figure_times(n_times: usize) -> Vec<usize> {
    let mut t: Vec<usize> = (0..=8).map(|i| i * (n_times.saturating_sub(1)) / 8).collect();
    t.dedup();
    t
}

/// Named time presets.
pub fn time_preset(name: &str) -> Result<Vec<usize>> {
    match name {
        "paper-times-500" => Ok(PRESET_TIMES_500.to_vec()),
        other => Err(Error::Config(format!("unknown time preset '{other}'"))),
    }
}

/// One Monte Carlo repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct Repetition {
    pub fit: GlsFit,
    /// Order-averaged responses `Y_n(t)`, one series per degree.
    pub responses: Vec<Vec<f64>>,
    /// Estimated spectral parameters, on the plug-in path.
    pub theta: Option<Vec<f64>>,
    /// Responses `Y_{n,k}` at the stack's snapshot times.
    pub snapshot: Option<CoefficientSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionStack {
    pub n_times: usize,
    pub first_degree: usize,
    pub max_degree: usize,
    pub p: usize,
    pub snapshot_times: Vec<usize>,
    reps: Vec<Repetition>,
}

impl RepetitionStack {
    pub fn new(n_times: usize, first_degree: usize, max_degree: usize, p: usize, snapshot_times: Vec<usize>) -> Self {
        RepetitionStack {
            n_times,
            first_degree,
            max_degree,
            p,
            snapshot_times,
            reps: Vec::new(),
        }
    }

    pub fn push(&mut self, rep: Repetition) -> Result<()> {
        let f = &rep.fit;
        let n_deg = self.max_degree + 1 - self.first_degree;
        let ok = f.n_times == self.n_times
            && f.first_degree == self.first_degree
            && f.max_degree == self.max_degree
            && f.p == self.p
            && rep.responses.len() == n_deg
            && rep.responses.iter().all(|r| r.len() == self.n_times)
            && rep.snapshot.as_ref().map_or(true, |s| {
                s.n_times() == self.snapshot_times.len()
                    && s.first_degree() == self.first_degree
                    && s.max_degree() == self.max_degree
            });
        if !ok {
            return Err(Error::Dimension("repetition does not match the stack shape".into()));
        }
        self.reps.push(rep);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn reps(&self) -> &[Repetition] {
        &self.reps
    }

    pub fn degrees(&self) -> std::ops::RangeInclusive<usize> {
        self.first_degree..=self.max_degree
    }

    fn require_reps(&self) -> Result<()> {
        if self.reps.is_empty() {
            return Err(Error::NotComputed("repetition stack is empty".into()));
        }
        Ok(())
    }
}

/// `(1/R) sum_r (beta_hat_{n,j} - beta_{n,j})^2`.
pub fn emqe_beta(stack: &RepetitionStack, truth: &BetaCoefficients) -> Result<BetaCoefficients> {
    stack.require_reps()?;
    if truth.p != stack.p || truth.first_degree > stack.first_degree || truth.max_degree < stack.max_degree {
        return Err(Error::Dimension("true coefficients do not cover the fitted degrees".into()));
    }
    let r = stack.len() as f64;
    Ok(BetaCoefficients::from_fn(stack.first_degree, stack.max_degree, stack.p, |n, j| {
        stack
            .reps
            .iter()
            .map(|rep| (rep.fit.degree(n).beta_hat[j - 1] - truth.get(n, j)).powi(2))
            .sum::<f64>()
            / r
    }))
}

/// `(1/R) sum_r (Ŷ_n(t) - Y_n(t))^2`, indexed `[n - first][t]`.
pub fn emqe_predictor(stack: &RepetitionStack) -> Result<Vec<Vec<f64>>> {
    stack.require_reps()?;
    let r = stack.len() as f64;
    Ok(stack
        .degrees()
        .enumerate()
        .map(|(i, n)| {
            (0..stack.n_times)
                .map(|t| {
                    stack
                        .reps
                        .iter()
                        .map(|rep| (rep.fit.degree(n).predictor[t] - rep.responses[i][t]).powi(2))
                        .sum::<f64>()
                        / r
                })
                .collect()
        })
        .collect())
}

/// `sum_t |Ŷ_n(t) - Y_n(t)|` per degree and repetition, indexed
/// `[n - first][r]`; divided by `N` when `normalize` is set.
pub fn l1_prediction_norms(stack: &RepetitionStack, normalize: bool) -> Result<Vec<Vec<f64>>> {
    stack.require_reps()?;
    let scale = if normalize { 1.0 / stack.n_times as f64 } else { 1.0 };
    Ok(stack
        .degrees()
        .enumerate()
        .map(|(i, n)| {
            stack
                .reps
                .iter()
                .map(|rep| {
                    rep.fit
                        .degree(n)
                        .predictor
                        .iter()
                        .zip(&rep.responses[i])
                        .map(|(a, b)| (a - b).abs())
                        .sum::<f64>()
                        * scale
                })
                .collect()
        })
        .collect())
}

const L1_MIN_POINTS: usize = 1 << 11;
const L1_MAX_POINTS: usize = 1 << 17;
const L1_TOL: f64 = 1e-6;

/// `int_{2pi/N <= |w| <= pi} |f_n(w; theta_hat) - f_n(w; theta0)| dw` for
/// degree-level densities. The integrand is evaluated on a grid uniform in
/// `log w`, refined until two grids agree to `1e-6` relative to
/// `int |f_n(.; theta0)|`.
pub fn l1_spectral_norm(family: &LrdFamily, theta_hat: &[f64], theta0: &[f64], n: usize, n_times: usize) -> Result<f64> {
    let spec_hat = family.spec_at(theta_hat)?;
    let spec0 = family.spec_at(theta0)?;
    let lo = (2.0 * PI / n_times as f64).ln();
    let hi = PI.ln();
    let integrate = |points: usize, g: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        let h = (hi - lo) / (points - 1) as f64;
        let mut acc = 0.0;
        for i in 0..points {
            let w = (lo + h * i as f64).exp();
            let v = g(w)? * w;
            acc += if i == 0 || i == points - 1 { 0.5 * v } else { v };
        }
        Ok(2.0 * h * acc)
    };
    let diff = |w: f64| -> Result<f64> { Ok((spectral_density(n, &spec_hat, w)? - spectral_density(n, &spec0, w)?).abs()) };
    let base = |w: f64| -> Result<f64> { spectral_density(n, &spec0, w) };
    let scale = integrate(L1_MIN_POINTS, &base)?;
    let mut points = L1_MIN_POINTS;
    let mut prev = integrate(points, &diff)?;
    loop {
        points = 2 * points - 1;
        let next = integrate(points, &diff)?;
        if (next - prev).abs() <= L1_TOL * scale {
            return Ok(next);
        }
        if points >= L1_MAX_POINTS {
            return Err(Error::Quadrature(format!(
                "L1 spectral distance at degree {n} did not settle ({prev:e} vs {next:e})"
            )));
        }
        prev = next;
    }
}

/// [`l1_spectral_norm`] for every degree and repetition, indexed
/// `[n - first][r]`.
pub fn l1_spectral_norms(stack: &RepetitionStack, family: &LrdFamily, theta0: &[f64]) -> Result<Vec<Vec<f64>>> {
    stack.require_reps()?;
    let thetas = stack
        .reps
        .iter()
        .map(|r| r.theta.as_deref().ok_or_else(|| Error::NotComputed("repetition has no spectral estimate".into())))
        .collect::<Result<Vec<_>>>()?;
    stack
        .degrees()
        .map(|n| thetas.iter().map(|th| l1_spectral_norm(family, th, theta0, n, stack.n_times)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSummary {
    pub statistic: String,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width bins over `[min, max]` (unit-width range around a constant
/// sample).
pub fn histogram(values: &[f64], bins: usize, statistic: &str) -> Result<HistogramSummary> {
    if values.is_empty() {
        return Err(Error::Domain("histogram of an empty sample".into()));
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("histogram input has non-finite values".into()));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if max > min { (min, max) } else { (min - 0.5, max + 0.5) };
    let width = (hi - lo) / bins as f64;
    let mut bin_edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
    bin_edges.push(hi);
    let mut counts = vec![0; bins];
    for v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Ok(HistogramSummary {
        statistic: statistic.to_string(),
        bin_edges,
        counts,
    })
}

/// Repetition-averaged response (REM) and predictor (RTPEM) surfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFields {
    pub times: Vec<usize>,
    /// `rem[i][node]` at `times[i]`.
    pub rem: Vec<Vec<f64>>,
    pub rtpem: Vec<Vec<f64>>,
}

/// Surfaces `E^[Y_t(x)]` and `E^[Ŷ_t(x)]` on the table's grid at `times`,
/// which must be among the stack's snapshot times.
pub fn repetition_mean_fields(stack: &RepetitionStack, table: &HarmonicTable, times: &[usize]) -> Result<MeanFields> {
    stack.require_reps()?;
    if stack.max_degree > table.lmax() {
        return Err(Error::GridExactness {
            exact: table.lmax(),
            requested: stack.max_degree,
        });
    }
    let width = (table.lmax() + 1) * (table.lmax() + 1);
    let r = stack.len() as f64;
    let mut rem = Vec::with_capacity(times.len());
    let mut rtpem = Vec::with_capacity(times.len());
    for &t in times {
        if t >= stack.n_times {
            return Err(Error::Index(format!("time {t} outside 0..{}", stack.n_times)));
        }
        let slot = stack
            .snapshot_times
            .iter()
            .position(|s| *s == t)
            .ok_or_else(|| Error::NotComputed(format!("no response snapshot at time {t}")))?;
        let mut y = vec![0.0; width];
        let mut yhat = vec![0.0; width];
        for rep in &stack.reps {
            let snap = rep
                .snapshot
                .as_ref()
                .ok_or_else(|| Error::NotComputed("repetition has no response snapshot".into()))?;
            for n in stack.degrees() {
                let pred = rep.fit.degree(n).predictor[t];
                for j in 1..=sphere_dim(n) {
                    let k = flat_index(n, j);
                    y[k] += snap.get(slot, n, j)? / r;
                    yhat[k] += pred / r;
                }
            }
        }
        rem.push(table.synthesize(&y)?);
        rtpem.push(table.synthesize(&yhat)?);
    }
    Ok(MeanFields {
        times: times.to_vec(),
        rem,
        rtpem,
    })
}
