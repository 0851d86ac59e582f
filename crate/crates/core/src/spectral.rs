//! Frequency-domain estimation: fDFT, periodograms, Whittle-type minimum
//! contrast and the plug-in GLS estimator.
//!
//! Periodograms are order averages, `I_n(w) = (1/(2n+1)) sum_j |X~_{n,j}(w)|^2`,
//! so their expectation is the per-order spectral density `f_n(w)/(2n+1)`.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::sphere_dim;
use crate::lrd::{arma_spectral_factor, LrdExponentFamily, SpharmaSpec};
use crate::optimize::{self, NelderMeadOptions};
use crate::regression::{aggregated_covariances, gls_fit, ols_residuals, DesignMatrix, GlsFit};
use crate::sample::CoefficientSample;

/// `X~_w = (2 pi T)^{-1/2} sum_{t=1}^T X_t e^{-iwt}` for every coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct FdftFrame {
    pub omega: f64,
    first_degree: usize,
    coeffs: Vec<Complex64>,
}

impl FdftFrame {
    pub fn get(&self, n: usize, j: usize) -> Complex64 {
        let base = n * n - self.first_degree * self.first_degree;
        self.coeffs[base + j - 1]
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

pub fn fdft(sample: &CoefficientSample, omega: f64) -> Result<FdftFrame> {
    let t_len = sample.n_times();
    if t_len < 2 {
        return Err(Error::Domain("fDFT needs at least two time points".into()));
    }
    let norm = 1.0 / (2.0 * PI * t_len as f64).sqrt();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); sample.width()];
    for t in 0..t_len {
        let e = Complex64::from_polar(norm, -omega * (t + 1) as f64);
        for (c, v) in coeffs.iter_mut().zip(sample.row(t)) {
            *c += e * v;
        }
    }
    Ok(FdftFrame {
        omega,
        first_degree: sample.first_degree(),
        coeffs,
    })
}

/// `F_T(w) = (1/T) |sum_t e^{-iwt}|^2`.
pub fn fejer_kernel(t_len: usize, omega: f64) -> f64 {
    let s = (omega / 2.0).sin();
    if s.abs() < 1e-12 {
        return t_len as f64;
    }
    let r = (t_len as f64 * omega / 2.0).sin() / s;
    r * r / t_len as f64
}

/// Order-averaged periodograms at the positive Fourier frequencies
/// `w_k = 2 pi k / T`, `k = 1..=floor((T-1)/2)`; negative frequencies follow
/// by symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodogramSet {
    pub n_times: usize,
    pub first_degree: usize,
    pub max_degree: usize,
    freqs: Vec<f64>,
    // (degree, k) row-major
    values: Vec<f64>,
}

impl PeriodogramSet {
    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn degrees(&self) -> std::ops::RangeInclusive<usize> {
        self.first_degree..=self.max_degree
    }

    pub fn degree(&self, n: usize) -> &[f64] {
        let k = self.freqs.len();
        let i = (n - self.first_degree) * k;
        &self.values[i..i + k]
    }

    /// `I_n(w_k)` for signed `k != 0`.
    pub fn get(&self, n: usize, k: isize) -> Result<f64> {
        let a = k.unsigned_abs();
        if a == 0 || a > self.freqs.len() || n < self.first_degree || n > self.max_degree {
            return Err(Error::Index(format!("periodogram ordinate (n={n}, k={k})")));
        }
        Ok(self.degree(n)[a - 1])
    }

    /// Columns `n omega value`, both signs of frequency.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut out = String::from("n\tomega\tvalue\n");
        let k = self.freqs.len();
        for n in self.degrees() {
            let row = self.degree(n);
            for i in (0..k).rev() {
                out.push_str(&format!("{n}\t{:e}\t{:e}\n", -self.freqs[i], row[i]));
            }
            for i in 0..k {
                out.push_str(&format!("{n}\t{:e}\t{:e}\n", self.freqs[i], row[i]));
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

pub fn periodogram(sample: &CoefficientSample) -> Result<PeriodogramSet> {
    let t_len = sample.n_times();
    if t_len < 3 {
        return Err(Error::Domain("periodogram needs at least three time points".into()));
    }
    let k_max = (t_len - 1) / 2;
    let fft = FftPlanner::new().plan_fft_forward(t_len);
    let norm = 1.0 / (2.0 * PI * t_len as f64);
    let per_degree: Vec<Vec<f64>> = sample
        .degrees()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&n| {
            let dim = sphere_dim(n);
            let mut acc = vec![0.0; k_max];
            for j in 1..=dim {
                let mut buf: Vec<Complex64> = sample.series(n, j).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
                fft.process(&mut buf);
                for (a, c) in acc.iter_mut().zip(&buf[1..=k_max]) {
                    *a += c.norm_sqr();
                }
            }
            acc.into_iter().map(|a| a * norm / dim as f64).collect()
        })
        .collect();
    Ok(PeriodogramSet {
        n_times: t_len,
        first_degree: sample.first_degree(),
        max_degree: sample.max_degree(),
        freqs: (1..=k_max).map(|k| 2.0 * PI * k as f64 / t_len as f64).collect(),
        values: per_degree.concat(),
    })
}

/// Parametric per-order spectral model
/// `f_n(w; theta) = c_n(theta) A_n(w) [4 sin^2(w/2)]^{-e_n(theta)}`
/// with a parameter-free shape `A_n`.
pub trait SpectralFamily: Sync {
    fn n_params(&self) -> usize;
    fn lower(&self) -> Vec<f64>;
    fn upper(&self) -> Vec<f64>;
    /// Extra constraints beyond the box.
    fn admissible(&self, theta: &[f64]) -> bool;
    fn shape(&self, n: usize, omega: f64) -> Result<f64>;
    /// `(c_n, e_n)`.
    fn scale_exponent(&self, theta: &[f64], n: usize) -> Result<(f64, f64)>;

    fn density(&self, theta: &[f64], n: usize, omega: f64) -> Result<f64> {
        if omega == 0.0 {
            return Err(Error::Pole);
        }
        let (c, e) = self.scale_exponent(theta, n)?;
        Ok(c * self.shape(n, omega)? * (4.0 * (omega / 2.0).sin().powi(2)).powf(-e))
    }
}

/// Model of the error process with unknown LRD exponents and known
/// SPHARMA short-memory part.
#[derive(Debug, Clone)]
pub struct LrdFamily {
    pub spec: SpharmaSpec,
}

impl LrdFamily {
    pub fn new(spec: SpharmaSpec) -> Self {
        LrdFamily { spec }
    }

    pub fn exponents(&self, theta: &[f64]) -> Result<LrdExponentFamily> {
        self.spec.exponents.with_params(theta)
    }

    /// Model with exponents given by `theta`.
    pub fn spec_at(&self, theta: &[f64]) -> Result<SpharmaSpec> {
        let s = self.spec.with_exponents(self.exponents(theta)?);
        s.validate()?;
        Ok(s)
    }
}

impl SpectralFamily for LrdFamily {
    fn n_params(&self) -> usize {
        self.spec.exponents.params().len()
    }

    fn lower(&self) -> Vec<f64> {
        match self.spec.exponents {
            LrdExponentFamily::Dpbs { .. } => vec![-1.0; 3],
            LrdExponentFamily::Ipbs { .. } => vec![-5.0; 2],
            LrdExponentFamily::Constant { .. } => vec![1e-3],
            LrdExponentFamily::Table { .. } => Vec::new(),
        }
    }

    fn upper(&self) -> Vec<f64> {
        match self.spec.exponents {
            LrdExponentFamily::Dpbs { .. } => vec![2.0; 3],
            LrdExponentFamily::Ipbs { .. } => vec![5.0; 2],
            LrdExponentFamily::Constant { .. } => vec![0.999],
            LrdExponentFamily::Table { .. } => Vec::new(),
        }
    }

    fn admissible(&self, theta: &[f64]) -> bool {
        self.exponents(theta)
            .and_then(|e| e.validate(self.spec.first_degree, self.spec.max_degree))
            .is_ok()
    }

    fn shape(&self, n: usize, omega: f64) -> Result<f64> {
        Ok(2.0 * PI * arma_spectral_factor(n, &self.spec, omega)?)
    }

    fn scale_exponent(&self, theta: &[f64], n: usize) -> Result<(f64, f64)> {
        let p = self.spec.degree(n)?;
        let alpha = self.exponents(theta)?.alpha(n)?;
        Ok((p.sigma2 / (2.0 * PI * sphere_dim(n) as f64), alpha / 2.0))
    }
}

/// White noise with common per-order variance `v` (density `v / 2 pi`).
#[derive(Debug, Clone, Copy)]
pub struct WhiteNoiseFamily;

impl SpectralFamily for WhiteNoiseFamily {
    fn n_params(&self) -> usize {
        1
    }

    fn lower(&self) -> Vec<f64> {
        vec![1e-12]
    }

    fn upper(&self) -> Vec<f64> {
        vec![1e12]
    }

    fn admissible(&self, theta: &[f64]) -> bool {
        theta[0] > 0.0
    }

    fn shape(&self, _n: usize, _omega: f64) -> Result<f64> {
        Ok(1.0)
    }

    fn scale_exponent(&self, theta: &[f64], _n: usize) -> Result<(f64, f64)> {
        Ok((theta[0] / (2.0 * PI), 0.0))
    }
}

struct DegreeTerms {
    weight: f64,
    mean_log_shape: f64,
    // I_n(w_k) / A_n(w_k)
    ratio: Vec<f64>,
}

/// Whittle contrast of a spectral family against a periodogram set.
pub struct ContrastProblem<'a> {
    family: &'a dyn SpectralFamily,
    data: &'a PeriodogramSet,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    log_s: Vec<f64>,
    mean_log_s: f64,
    terms: Vec<DegreeTerms>,
}

impl<'a> ContrastProblem<'a> {
    /// Default weights `w_n = 2n + 1`.
    pub fn new(family: &'a dyn SpectralFamily, data: &'a PeriodogramSet) -> Result<Self> {
        let w: Vec<f64> = data.degrees().map(|n| sphere_dim(n) as f64).collect();
        Self::with_weights(family, data, w)
    }

    pub fn with_weights(family: &'a dyn SpectralFamily, data: &'a PeriodogramSet, weights: Vec<f64>) -> Result<Self> {
        let n_deg = data.max_degree + 1 - data.first_degree;
        if weights.len() != n_deg {
            return Err(Error::Dimension(format!("{} weights for {n_deg} degrees", weights.len())));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Domain("contrast weights must be nonnegative".into()));
        }
        let freqs = data.freqs();
        if freqs.is_empty() {
            return Err(Error::Domain("no nonzero Fourier frequencies".into()));
        }
        let k = freqs.len() as f64;
        let log_s: Vec<f64> = freqs.iter().map(|w| (4.0 * (w / 2.0).sin().powi(2)).ln()).collect();
        let mean_log_s = log_s.iter().sum::<f64>() / k;
        let terms = data
            .degrees()
            .zip(weights)
            .map(|(n, weight)| {
                let shapes = freqs.iter().map(|w| family.shape(n, *w)).collect::<Result<Vec<_>>>()?;
                Ok(DegreeTerms {
                    weight,
                    mean_log_shape: shapes.iter().map(|a| a.ln()).sum::<f64>() / k,
                    ratio: data.degree(n).iter().zip(&shapes).map(|(i, a)| i / a).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ContrastProblem {
            family,
            data,
            lower: family.lower(),
            upper: family.upper(),
            log_s,
            mean_log_s,
            terms,
        })
    }

    pub fn family(&self) -> &dyn SpectralFamily {
        self.family
    }

    pub fn data(&self) -> &PeriodogramSet {
        self.data
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.lower.len() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.lower.len(),
                theta.len()
            )));
        }
        let in_box = theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(t, (l, h))| *t >= *l && *t <= *h);
        if !in_box {
            return Err(Error::Bounds(format!("{theta:?} outside the parameter box")));
        }
        if !self.family.admissible(theta) {
            return Err(Error::Bounds(format!("{theta:?} gives exponents outside (0, 1)")));
        }
        Ok(())
    }
}

/// `sum_n w_n (1/K) sum_k [log f_n(w_k) + I_n(w_k) / f_n(w_k)]`.
pub fn whittle_contrast(theta: &[f64], prob: &ContrastProblem) -> Result<f64> {
    prob.check(theta)?;
    let k = prob.log_s.len() as f64;
    let mut total = 0.0;
    for (n, t) in prob.data.degrees().zip(&prob.terms) {
        if t.weight == 0.0 {
            continue;
        }
        let (c, e) = prob.family.scale_exponent(theta, n)?;
        let fit: f64 = if e == 0.0 {
            t.ratio.iter().sum()
        } else {
            t.ratio.iter().zip(&prob.log_s).map(|(r, ls)| r * (e * ls).exp()).sum()
        };
        total += t.weight * (c.ln() + t.mean_log_shape - e * prob.mean_log_s + fit / (c * k));
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastFit {
    pub theta: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn minimum_contrast(prob: &ContrastProblem, init: &[f64]) -> Result<ContrastFit> {
    minimum_contrast_with(prob, init, &NelderMeadOptions::default())
}

pub fn minimum_contrast_with(prob: &ContrastProblem, init: &[f64], opts: &NelderMeadOptions) -> Result<ContrastFit> {
    prob.check(init)?;
    let f = |th: &[f64]| whittle_contrast(th, prob).unwrap_or(f64::INFINITY);
    let m = optimize::minimize(&f, init, &prob.lower, &prob.upper, opts);
    if !m.value.is_finite() {
        return Err(Error::Bounds("no admissible parameter found".into()));
    }
    if !m.converged {
        log::warn!("minimum contrast stopped after {} iterations without converging", m.iterations);
    }
    Ok(ContrastFit {
        theta: m.x,
        value: m.value,
        iterations: m.iterations,
        converged: m.converged,
    })
}

/// Estimates `theta` from the periodogram of OLS residuals.
pub fn estimate_from_residuals(x: &DesignMatrix, y: &CoefficientSample, family: &LrdFamily, init: &[f64]) -> Result<ContrastFit> {
    let resid = ols_residuals(x, y)?;
    let pg = periodogram(&resid)?;
    let prob = ContrastProblem::new(family, &pg)?;
    minimum_contrast(&prob, init)
}

/// Degree-level `B^_n(t)`, `t = 0..N`, of the model at `theta`.
pub fn invert_to_covariance(theta: &[f64], family: &LrdFamily, n_times: usize) -> Result<Vec<Vec<f64>>> {
    let spec = family.spec_at(theta)?;
    spec.degrees()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&n| crate::lrd::covariance_bn(n, &spec, n_times))
        .collect()
}

/// GLS with the order-averaged covariances implied by `theta`.
pub fn plugin_gls(x: &DesignMatrix, y: &CoefficientSample, theta: &[f64], family: &LrdFamily) -> Result<GlsFit> {
    let spec = family.spec_at(theta)?;
    let covs = aggregated_covariances(&spec, x.n_times())?;
    gls_fit(x, y, &covs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lrd::{covariance_bn, Scenario, SimulationOptions, Simulator, DPBS_THETA0};
    use crate::regression::{anova_design, synthesize_response, true_beta};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sample(t: usize, first: usize, max: usize, seed: u64) -> CoefficientSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = (max + 1) * (max + 1) - first * first;
        CoefficientSample::from_vec(t, first, max, (0..t * w).map(|_| rng.gen::<f64>() - 0.5).collect()).unwrap()
    }

    #[test]
    fn fdft_examples() {
        let s = random_sample(16, 1, 2, 1);
        let f0 = fdft(&s, 0.0).unwrap();
        let sum: f64 = s.series(2, 3).iter().sum();
        assert!((f0.get(2, 3).re - sum / (2.0 * PI * 16.0).sqrt()).abs() < 1e-12);

        let c = CoefficientSample::from_vec(16, 1, 1, vec![2.5; 48]).unwrap();
        let f = fdft(&c, 2.0 * PI / 16.0).unwrap();
        assert!(f.coeffs().iter().all(|z| z.norm() < 1e-10));

        // conjugate symmetry and Parseval
        let w = 0.7;
        let (a, b) = (fdft(&s, w).unwrap(), fdft(&s, -w).unwrap());
        for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
            assert!((x - y.conj()).norm() < 1e-10);
        }
        let energy: f64 = (0..16).map(|k| fdft(&s, 2.0 * PI * k as f64 / 16.0).unwrap().norm_sqr()).sum();
        let direct: f64 = s.data().iter().map(|v| v * v).sum::<f64>() / (2.0 * PI);
        assert!((energy - direct).abs() < 1e-8);
    }

    #[test]
    fn fejer_examples() {
        assert_eq!(fejer_kernel(9, 0.0), 9.0);
        assert!(fejer_kernel(2, PI).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let w = rng.gen::<f64>() * 2.0 * PI - PI;
            assert!(fejer_kernel(17, w) >= 0.0);
        }
        // definition as a double sum
        let (t, w) = (7, 0.9);
        let direct = (0..t)
            .flat_map(|a| (0..t).map(move |b| ((a as f64 - b as f64) * w).cos()))
            .sum::<f64>()
            / t as f64;
        assert!((fejer_kernel(t, w) - direct).abs() < 1e-12);
    }

    #[test]
    fn periodogram_matches_fdft() {
        let s = random_sample(21, 2, 3, 3);
        let pg = periodogram(&s).unwrap();
        for k in [1usize, 4, 10] {
            let f = fdft(&s, 2.0 * PI * k as f64 / 21.0).unwrap();
            let direct: f64 = (1..=7).map(|j| f.get(3, j).norm_sqr()).sum::<f64>() / 7.0;
            assert!((pg.get(3, k as isize).unwrap() - direct).abs() < 1e-12);
            assert_eq!(pg.get(3, k as isize).unwrap(), pg.get(3, -(k as isize)).unwrap());
        }
        assert!(pg.get(3, 0).is_err());
    }

    fn white_spec(n: usize, sigma2: f64) -> SpharmaSpec {
        SpharmaSpec {
            first_degree: n,
            max_degree: n,
            sigma2: vec![sigma2],
            phi: vec![0.0],
            psi: vec![0.0],
            exponents: LrdExponentFamily::Table { values: vec![0.0; n] },
        }
    }

    #[test]
    fn white_noise_periodogram_level() {
        let spec = white_spec(4, 2.7);
        let s = Simulator::new(&spec, 2000, &SimulationOptions::default()).unwrap().draw(11).unwrap();
        let pg = periodogram(&s).unwrap();
        let mean = pg.degree(4).iter().sum::<f64>() / pg.freqs().len() as f64;
        let level = 2.7 / (2.0 * PI * 9.0);
        assert!((mean / level - 1.0).abs() < 0.1);
    }

    #[test]
    fn sinusoid_concentrates() {
        let t = 64;
        let k0 = 5;
        let mut s = CoefficientSample::zeros(t, 1, 1).unwrap();
        let series: Vec<f64> = (1..=t).map(|i| (2.0 * PI * (k0 * i) as f64 / t as f64).cos()).collect();
        s.set_series(1, 2, &series).unwrap();
        let pg = periodogram(&s).unwrap();
        let total: f64 = pg.degree(1).iter().sum();
        assert!(pg.get(1, k0 as isize).unwrap() / total > 0.999);
    }

    #[test]
    fn white_noise_contrast_closed_form() {
        let s = random_sample(101, 3, 3, 5);
        let pg = periodogram(&s).unwrap();
        let prob = ContrastProblem::new(&WhiteNoiseFamily, &pg).unwrap();
        let mean = pg.degree(3).iter().sum::<f64>() / pg.freqs().len() as f64;
        let fit = minimum_contrast(&prob, &[1.0]).unwrap();
        assert!((fit.theta[0] / (2.0 * PI * mean) - 1.0).abs() < 1e-4, "{fit:?}");
        let at = whittle_contrast(&[2.0 * PI * mean], &prob).unwrap();
        for v in [0.5, 0.9, 1.1, 2.0] {
            assert!(whittle_contrast(&[2.0 * PI * mean * v], &prob).unwrap() > at);
        }
        // scaling data and model by e^c shifts the contrast by c * sum w
        let c: f64 = 0.8;
        let scaled = CoefficientSample::from_vec(101, 3, 3, s.data().iter().map(|v| v * (c / 2.0).exp()).collect()).unwrap();
        let pg2 = periodogram(&scaled).unwrap();
        let prob2 = ContrastProblem::new(&WhiteNoiseFamily, &pg2).unwrap();
        let shifted = whittle_contrast(&[2.0 * PI * mean * c.exp()], &prob2).unwrap();
        assert!((shifted - at - 7.0 * c).abs() < 1e-10);
        assert!(matches!(whittle_contrast(&[-1.0], &prob), Err(Error::Bounds(_))));
    }

    #[test]
    fn farima_exponent_recovery() {
        let d = 0.3;
        let spec = SpharmaSpec {
            exponents: LrdExponentFamily::Constant { alpha: 2.0 * d },
            ..white_spec(2, 1.0)
        };
        let s = Simulator::new(&spec, 2000, &SimulationOptions::default()).unwrap().draw(21).unwrap();
        let pg = periodogram(&s).unwrap();
        let fam = LrdFamily::new(spec.clone());
        let prob = ContrastProblem::new(&fam, &pg).unwrap();
        let fit = minimum_contrast(&prob, &[0.5]).unwrap();
        assert!(fit.converged);
        assert!((fit.theta[0] / 2.0 - d).abs() < 0.05, "{fit:?}");
        // weights rescaling leaves the argmin unchanged
        let prob3 = ContrastProblem::with_weights(&fam, &pg, vec![15.0]).unwrap();
        let fit3 = minimum_contrast(&prob3, &[0.5]).unwrap();
        assert!((fit3.theta[0] - fit.theta[0]).abs() < 1e-4);
    }

    #[test]
    fn contrast_prefers_truth() {
        let spec = SpharmaSpec::preset(Scenario::Dpbs, 30);
        let s = Simulator::new(&spec, 2000, &SimulationOptions::default()).unwrap().draw(7).unwrap();
        let pg = periodogram(&s).unwrap();
        let fam = LrdFamily::new(spec.clone());
        let prob = ContrastProblem::new(&fam, &pg).unwrap();
        let at_truth = whittle_contrast(&DPBS_THETA0, &prob).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut wins = 0;
        let mut tried = 0;
        while tried < 20 {
            let th: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * 3.0 - 1.0).collect();
            if !fam.admissible(&th) {
                continue;
            }
            tried += 1;
            if at_truth <= whittle_contrast(&th, &prob).unwrap() {
                wins += 1;
            }
        }
        assert!(wins >= 18);
        let fit = minimum_contrast(&prob, &DPBS_THETA0).unwrap();
        assert!(fit.value <= at_truth);
        assert!(fam.admissible(&fit.theta));
    }

    #[test]
    fn plugin_coincides_with_oracle_at_truth() {
        let spec = SpharmaSpec::preset(Scenario::Ipbs, 6);
        let n_times = 80;
        let x = anova_design(n_times, 5).unwrap();
        let eps = Simulator::new(&spec, n_times, &SimulationOptions::default()).unwrap().draw(2).unwrap();
        let y = synthesize_response(&x, &true_beta(6, 5), &eps).unwrap();
        let fam = LrdFamily::new(spec.clone());
        let theta0 = spec.exponents.params();
        let oracle = gls_fit(&x, &y, &aggregated_covariances(&spec, n_times).unwrap()).unwrap();
        let plug = plugin_gls(&x, &y, &theta0, &fam).unwrap();
        for (a, b) in oracle.degrees.iter().zip(&plug.degrees) {
            for (u, v) in a.beta_hat.iter().zip(&b.beta_hat) {
                assert!((u - v).abs() < 1e-10);
            }
        }
        let bhat = invert_to_covariance(&theta0, &fam, n_times).unwrap();
        for (n, b) in spec.degrees().zip(&bhat) {
            let direct = covariance_bn(n, &spec, n_times).unwrap();
            assert!(b.iter().zip(&direct).all(|(u, v)| (u - v).abs() < 1e-8));
            assert!(b.iter().all(|v| v.abs() <= b[0]));
        }
    }

    #[test]
    fn estimated_covariance_factorizes_at_500() {
        let spec = SpharmaSpec::preset(Scenario::Dpbs, 30);
        let fam = LrdFamily::new(spec);
        let th = [0.6, 0.7, 0.5];
        assert!(fam.admissible(&th));
        let covs = aggregated_covariances(&fam.spec_at(&th).unwrap(), 500).unwrap();
        assert!(covs.iter().all(|c| c.factor().is_ok()));
    }

    #[test]
    fn mean_periodogram_is_fejer_smoothed_spectrum() {
        let spec = SpharmaSpec::preset(Scenario::Dpbs, 2);
        let t = 64;
        let sim = Simulator::new(&spec, t, &SimulationOptions::default()).unwrap();
        let reps = 100;
        let pgs: Vec<PeriodogramSet> = (0..reps).map(|r| periodogram(&sim.draw(r).unwrap()).unwrap()).collect();
        for n in 1..=2 {
            let b = covariance_bn(n, &spec, t).unwrap();
            let dim = sphere_dim(n) as f64;
            for k in [1usize, 3, 10, 25] {
                let w = 2.0 * PI * k as f64 / t as f64;
                let expected = (b[0]
                    + 2.0
                        * (1..t)
                            .map(|u| (1.0 - u as f64 / t as f64) * (w * u as f64).cos() * b[u])
                            .sum::<f64>())
                    / (2.0 * PI * dim);
                let vals: Vec<f64> = pgs.iter().map(|p| p.get(n, k as isize).unwrap()).collect();
                let m = vals.iter().sum::<f64>() / reps as f64;
                let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
                assert!((m - expected).abs() < 3.0 * sd / (reps as f64).sqrt(), "n={n} k={k}");
            }
        }
    }
}
