//! Functional multiple regression on the sphere.
//!
//! With scalar regressors `X_{t,j}` and functional parameters
//! `beta_j(x) = sum_n beta_{n,j} sum_k S_{n,k}(x)`, every harmonic
//! coefficient of the response obeys
//! `Y_{n,k}(t) = sum_j X_{t,j} beta_{n,j} + V_{n,k}(t)`.
//! The fit works on the order average `Y_n(t)`, whose error covariance is
//! `B_n(t) / (2n+1)^2` under the equal split of innovation variance.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::harmonics::{sphere_dim, HarmonicTable};
use crate::lrd::{covariance_bn, SpharmaSpec};
use crate::sample::CoefficientSample;
use crate::toeplitz::{ToeplitzCov, ToeplitzFactor};

/// `N x p` matrix of scalar regressors, full column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 || n < p {
            return Err(Error::SingularDesign(format!("{n}x{p} design needs N >= p >= 1")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("design matrix has non-finite entries".into()));
        }
        let r = x.clone().qr().r();
        let scale = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = scale * 1e-10 * n as f64;
        if r.diagonal().iter().any(|v| v.abs() <= tol) {
            return Err(Error::SingularDesign(format!("{n}x{p} design is rank deficient")));
        }
        Ok(DesignMatrix { x })
    }

    pub fn n_times(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// `X b` as a time series.
    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        (0..self.n_times())
            .map(|t| (0..self.p()).map(|j| self.x[(t, j)] * b[j]).sum())
            .collect()
    }

    /// Whitespace- or comma-separated table with one header line.
    pub fn read_text(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if lineno == 0 || line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1))))
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::Parse(format!("line {}: ragged row", lineno + 1)));
                }
            }
            rows.push(row);
        }
        let p = rows.first().map(Vec::len).unwrap_or(0);
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(x)
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        let header: Vec<String> = (1..=self.p()).map(|j| format!("x{j}")).collect();
        writeln!(out, "{}", header.join("\t")).map_err(io)?;
        for t in 0..self.n_times() {
            let row: Vec<String> = (0..self.p()).map(|j| format!("{}", self.x[(t, j)])).collect();
            writeln!(out, "{}", row.join("\t")).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// One-way ANOVA design: `p` contiguous treatment blocks of length
/// `floor(N/p)`, the last block absorbing the remainder.
pub fn anova_design(n_times: usize, p: usize) -> Result<DesignMatrix> {
    if p == 0 || n_times < p {
        return Err(Error::SingularDesign(format!("cannot split {n_times} times into {p} blocks")));
    }
    let block = n_times / p;
    let x = DMatrix::from_fn(n_times, p, |t, j| {
        let b = (t / block).min(p - 1);
        if b == j {
            1.0
        } else {
            0.0
        }
    });
    DesignMatrix::new(x)
}

/// Fourier coefficients `beta_{n,j}` on degrees `first..=max`, `j = 1..=p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaCoefficients {
    pub first_degree: usize,
    pub max_degree: usize,
    pub p: usize,
    // row-major (n, j)
    values: Vec<f64>,
}

impl BetaCoefficients {
    pub fn zeros(first_degree: usize, max_degree: usize, p: usize) -> Self {
        BetaCoefficients {
            first_degree,
            max_degree,
            p,
            values: vec![0.0; (max_degree + 1 - first_degree) * p],
        }
    }

    pub fn from_fn(first_degree: usize, max_degree: usize, p: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut b = Self::zeros(first_degree, max_degree, p);
        for n in first_degree..=max_degree {
            for j in 1..=p {
                b.values[(n - first_degree) * p + j - 1] = f(n, j);
            }
        }
        b
    }

    pub fn degrees(&self) -> std::ops::RangeInclusive<usize> {
        self.first_degree..=self.max_degree
    }

    /// `beta_{n,j}`, `j` 1-based.
    pub fn get(&self, n: usize, j: usize) -> f64 {
        self.values[(n - self.first_degree) * self.p + j - 1]
    }

    pub fn set(&mut self, n: usize, j: usize, v: f64) {
        self.values[(n - self.first_degree) * self.p + j - 1] = v;
    }

    /// The `p` coefficients of degree `n`.
    pub fn degree(&self, n: usize) -> &[f64] {
        let i = (n - self.first_degree) * self.p;
        &self.values[i..i + self.p]
    }

    pub fn scaled(&self, c: f64) -> Self {
        BetaCoefficients {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// `sum_n beta_{n,j}^2 (2n+1)` for each regressor.
    pub fn square_sums(&self) -> Vec<f64> {
        (1..=self.p)
            .map(|j| self.degrees().map(|n| self.get(n, j).powi(2) * sphere_dim(n) as f64).sum())
            .collect()
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut out = String::from("n\tj\tbeta\n");
        for n in self.degrees() {
            for j in 1..=self.p {
                out.push_str(&format!("{n}\t{j}\t{:e}\n", self.get(n, j)));
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Beta-density shaped coefficients
/// `beta_{n,j} = x_n^{a-1} (1-x_n)^{r_j-1} Gamma(a+r_j) / (6 Gamma(a) Gamma(r_j))`
/// with `a = 2`, `r_j = 5j/(j+1)` and `x_n = (n-1)/(M-1)`, degrees `1..=M`.
pub fn true_beta(max_degree: usize, p: usize) -> BetaCoefficients {
    let a: f64 = 2.0;
    BetaCoefficients::from_fn(1, max_degree, p, |n, j| {
        let x = if max_degree > 1 {
            (n as f64 - 1.0) / (max_degree as f64 - 1.0)
        } else {
            0.0
        };
        let r = 5.0 * j as f64 / (j as f64 + 1.0);
        let norm = (ln_gamma(a + r) - ln_gamma(a) - ln_gamma(r)).exp();
        x.powf(a - 1.0) * (1.0 - x).powf(r - 1.0) * norm / 6.0
    })
}

/// `Y_{n,k}(t) = sum_j X_{t,j} beta_{n,j} + V_{n,k}(t)`.
pub fn synthesize_response(x: &DesignMatrix, beta: &BetaCoefficients, eps: &CoefficientSample) -> Result<CoefficientSample> {
    if eps.n_times() != x.n_times() {
        return Err(Error::Dimension(format!(
            "design has {} rows, errors have {} times",
            x.n_times(),
            eps.n_times()
        )));
    }
    if beta.p != x.p() {
        return Err(Error::Dimension(format!("design has {} columns, beta has {}", x.p(), beta.p)));
    }
    if eps.first_degree() < beta.first_degree || eps.max_degree() > beta.max_degree {
        return Err(Error::Dimension("error degrees not covered by beta".into()));
    }
    let mut y = eps.clone();
    y.meta.source = Some("response".into());
    for n in eps.degrees() {
        let mean = x.apply(beta.degree(n));
        for j in 1..=sphere_dim(n) {
            let s: Vec<f64> = eps.series(n, j).iter().zip(&mean).map(|(e, m)| e + m).collect();
            y.set_series(n, j, &s)?;
        }
    }
    Ok(y)
}

/// Covariance of the order-averaged error `Y_n - X beta_n`:
/// Toeplitz in `B_n(t) / (2n+1)^2`, for each degree of `spec`.
pub fn aggregated_covariances(spec: &SpharmaSpec, n_times: usize) -> Result<Vec<ToeplitzCov>> {
    spec.degrees()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&n| {
            let dim = sphere_dim(n) as f64;
            let b = covariance_bn(n, spec, n_times)?;
            ToeplitzCov::new(b.into_iter().map(|v| v / (dim * dim)).collect(), Some(n))
        })
        .collect()
}

/// Result of the per-degree GLS fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlsFit {
    pub first_degree: usize,
    pub max_degree: usize,
    pub p: usize,
    pub n_times: usize,
    pub degrees: Vec<DegreeFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeFit {
    pub beta_hat: Vec<f64>,
    /// `(Xᵀ Λ_n^{-1} X)^{-1}`, row-major `p x p`.
    pub variance: Vec<f64>,
    /// `Ŷ_n(t) = (X beta_hat_n)(t)`.
    pub predictor: Vec<f64>,
    /// `||Y_n - X beta_hat_n||^2` in the `Λ_n^{-1}` norm.
    pub loss: f64,
}

impl GlsFit {
    pub fn degree(&self, n: usize) -> &DegreeFit {
        &self.degrees[n - self.first_degree]
    }

    pub fn variance(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.p, self.p, &self.degree(n).variance)
    }

    /// Total loss `L = sum_n ||eps_n||^2_{Λ_n^{-1}}`.
    pub fn loss(&self) -> f64 {
        self.degrees.iter().map(|d| d.loss).sum()
    }

    pub fn beta(&self) -> BetaCoefficients {
        BetaCoefficients::from_fn(self.first_degree, self.max_degree, self.p, |n, j| {
            self.degree(n).beta_hat[j - 1]
        })
    }

    /// Columns `n j beta_hat variance`.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut out = String::from("n\tj\tbeta_hat\tvariance\n");
        for (i, d) in self.degrees.iter().enumerate() {
            for j in 0..self.p {
                out.push_str(&format!(
                    "{}\t{}\t{:e}\t{:e}\n",
                    self.first_degree + i,
                    j + 1,
                    d.beta_hat[j],
                    d.variance[j * self.p + j]
                ));
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// GLS of one series: `beta = (Xᵀ Λ^{-1} X)^{-1} Xᵀ Λ^{-1} y`.
pub fn gls_series(x: &DesignMatrix, y: &[f64], factor: &ToeplitzFactor) -> Result<DegreeFit> {
    let (n_times, p) = (x.n_times(), x.p());
    if y.len() != n_times || factor.size() != n_times {
        return Err(Error::Dimension(format!(
            "series {} / covariance {} / design {} lengths differ",
            y.len(),
            factor.size(),
            n_times
        )));
    }
    let mut xw = DMatrix::zeros(n_times, p);
    for j in 0..p {
        let col: Vec<f64> = x.matrix().column(j).iter().cloned().collect();
        xw.set_column(j, &DVector::from_vec(factor.whiten(&col)?));
    }
    let yw = DVector::from_vec(factor.whiten(y)?);
    let gram = xw.transpose() * &xw;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::SingularDesign("whitened normal equations are singular".into()))?;
    let beta = chol.solve(&(xw.transpose() * &yw));
    let variance = chol.inverse();
    let resid = &yw - &xw * &beta;
    let beta_hat: Vec<f64> = beta.iter().cloned().collect();
    Ok(DegreeFit {
        predictor: x.apply(&beta_hat),
        beta_hat,
        variance: variance.transpose().iter().cloned().collect(),
        loss: resid.norm_squared(),
    })
}

/// Per-degree GLS on the order-averaged responses. `covs[i]` is the
/// covariance of degree `first_degree + i`.
pub fn gls_fit(x: &DesignMatrix, y: &CoefficientSample, covs: &[ToeplitzCov]) -> Result<GlsFit> {
    let factors = covs.par_iter().map(|c| c.factor()).collect::<Result<Vec<_>>>()?;
    gls_fit_factored(x, y, &factors)
}

/// As [`gls_fit`] with covariances already factored.
pub fn gls_fit_factored(x: &DesignMatrix, y: &CoefficientSample, factors: &[ToeplitzFactor]) -> Result<GlsFit> {
    let n_deg = y.max_degree() + 1 - y.first_degree();
    if factors.len() != n_deg {
        return Err(Error::Dimension(format!(
            "{} covariances for {n_deg} degrees",
            factors.len()
        )));
    }
    if y.n_times() != x.n_times() {
        return Err(Error::Dimension("response and design lengths differ".into()));
    }
    let degrees = y
        .degrees()
        .zip(factors)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(n, f)| gls_series(x, &y.degree_average(n), f))
        .collect::<Result<Vec<_>>>()?;
    Ok(GlsFit {
        first_degree: y.first_degree(),
        max_degree: y.max_degree(),
        p: x.p(),
        n_times: x.n_times(),
        degrees,
    })
}

/// Ordinary least-squares residuals `Y_{n,k} - X beta_hat_{n,k}` for every
/// coefficient series.
pub fn ols_residuals(x: &DesignMatrix, y: &CoefficientSample) -> Result<CoefficientSample> {
    if y.n_times() != x.n_times() {
        return Err(Error::Dimension("response and design lengths differ".into()));
    }
    let qr = x.matrix().clone().qr();
    let q = qr.q();
    let mut out = y.clone();
    out.meta.source = Some("ols residuals".into());
    for n in y.degrees() {
        for j in 1..=sphere_dim(n) {
            let s = DVector::from_vec(y.series(n, j));
            let fitted = &q * (q.transpose() * &s);
            let r: Vec<f64> = (s - fitted).iter().cloned().collect();
            out.set_series(n, j, &r)?;
        }
    }
    Ok(out)
}

/// `beta_j(x) = sum_n beta_{n,j} sum_k S_{n,k}(x)` at every node of the
/// table's grid; one field per regressor.
pub fn reconstruct_beta(beta: &BetaCoefficients, table: &HarmonicTable) -> Result<Vec<Vec<f64>>> {
    if beta.max_degree > table.lmax() {
        return Err(Error::GridExactness {
            exact: table.lmax(),
            requested: beta.max_degree,
        });
    }
    let mut fields = vec![vec![0.0; table.grid().len()]; beta.p];
    for n in beta.degrees() {
        let zonal = table.order_sum(n)?;
        for (j, field) in fields.iter_mut().enumerate() {
            let b = beta.get(n, j + 1);
            if b != 0.0 {
                for (f, z) in field.iter_mut().zip(&zonal) {
                    *f += b * z;
                }
            }
        }
    }
    Ok(fields)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::{addition_kernel, ManifoldSpec, QuadratureGrid, SphPoint};
    use crate::lrd::{Scenario, Simulator, SimulationOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn anova_examples() {
        let x = anova_design(5, 5).unwrap();
        assert_eq!(x.matrix(), &DMatrix::identity(5, 5));
        let x = anova_design(10, 5).unwrap();
        for j in 0..5 {
            assert_eq!(x.matrix().column(j).sum(), 2.0);
        }
        let g = x.matrix().transpose() * x.matrix();
        assert_eq!(g, DMatrix::identity(5, 5) * 2.0);
        let x = anova_design(503, 5).unwrap();
        assert_eq!(x.matrix().column(4).sum(), 100.0 + 3.0);
        assert!(anova_design(500, 5).is_ok());
        assert!(anova_design(3, 5).is_err());
    }

    #[test]
    fn rank_deficient_design_is_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(DesignMatrix::new(x), Err(Error::SingularDesign(_))));
    }

    #[test]
    fn true_beta_golden_values() {
        let b = true_beta(30, 5);
        for j in 1..=5 {
            assert_eq!(b.get(1, j), 0.0);
            assert!(b.get(30, j).abs() < 1e-300);
        }
        // x = 14/29, rho = 2.5: Gamma(4.5)/(Gamma(2)Gamma(2.5)) = 3.5 * 2.5 = 8.75
        let x: f64 = 14.0 / 29.0;
        let expected = x * (1.0 - x).powf(1.5) * 8.75 / 6.0;
        assert!((b.get(15, 1) - expected).abs() < 1e-14);
        assert!((b.get(15, 1) - 0.261_894_713_578_892).abs() < 1e-12, "{}", b.get(15, 1));
        assert!(b.square_sums().iter().all(|s| s.is_finite()));
    }

    #[test]
    fn synthesis_identities() {
        let x = anova_design(12, 3).unwrap();
        let beta = BetaCoefficients::from_fn(1, 3, 3, |n, j| (n * j) as f64 * 0.1);
        let zero = CoefficientSample::zeros(12, 1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise: Vec<f64> = (0..12 * zero.width()).map(|_| rng.gen::<f64>()).collect();
        let eps = CoefficientSample::from_vec(12, 1, 3, noise).unwrap();

        let y0 = synthesize_response(&x, &beta, &zero).unwrap();
        assert_eq!(y0.series(2, 4), x.apply(beta.degree(2)));
        let yb0 = synthesize_response(&x, &BetaCoefficients::zeros(1, 3, 3), &eps).unwrap();
        assert_eq!(yb0.data(), eps.data());
        let y2 = synthesize_response(&x, &beta.scaled(2.0), &eps).unwrap();
        let y1 = synthesize_response(&x, &beta, &eps).unwrap();
        for ((a, b), c) in y2.data().iter().zip(y1.data()).zip(y0.data()) {
            assert!((a - b - c).abs() < 1e-12);
        }
        let short = CoefficientSample::zeros(11, 1, 3).unwrap();
        assert!(synthesize_response(&x, &beta, &short).is_err());
    }

    fn random_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DesignMatrix {
        DesignMatrix::new(DMatrix::from_fn(n, p, |_, _| rng.gen::<f64>() * 2.0 - 1.0)).unwrap()
    }

    #[test]
    fn identity_weights_give_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_design(&mut rng, 40, 4);
        let y: Vec<f64> = (0..40).map(|_| rng.gen::<f64>()).collect();
        let fit = gls_series(&x, &y, &ToeplitzCov::identity(40).factor().unwrap()).unwrap();
        let qr = x.matrix().clone().qr();
        let qty = qr.q().transpose() * DVector::from_vec(y);
        let oracle = qr.r().solve_upper_triangular(&qty).unwrap();
        for (a, b) in fit.beta_hat.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    fn ar_cov(n: usize, phi: f64) -> ToeplitzCov {
        ToeplitzCov::new((0..n).map(|h| phi.powi(h as i32)).collect(), None).unwrap()
    }

    #[test]
    fn gls_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_design(&mut rng, 60, 3);
        let cov = ar_cov(60, 0.6);
        let f = cov.factor().unwrap();
        let y: Vec<f64> = (0..60).map(|_| rng.gen::<f64>()).collect();
        let fit = gls_series(&x, &y, &f).unwrap();

        // noiseless
        let b0 = [0.3, -1.2, 2.0];
        let exact = gls_series(&x, &x.apply(&b0), &f).unwrap();
        for (a, b) in exact.beta_hat.iter().zip(b0) {
            assert!((a - b).abs() < 1e-10);
        }
        // scale invariance
        let scaled = gls_series(&x, &y, &cov.scaled(17.0).factor().unwrap()).unwrap();
        for (a, b) in scaled.beta_hat.iter().zip(&fit.beta_hat) {
            assert!((a - b).abs() < 1e-12);
        }
        // residual orthogonality Xᵀ Λ^{-1} (y - X beta) = 0
        let resid: Vec<f64> = y.iter().zip(&fit.predictor).map(|(a, b)| a - b).collect();
        let li = f.solve(&resid).unwrap();
        for j in 0..3 {
            let dot: f64 = x.matrix().column(j).iter().zip(&li).map(|(a, b)| a * b).sum();
            assert!(dot.abs() < 1e-8);
        }
        // predictor is X beta_hat
        assert_eq!(fit.predictor, x.apply(&fit.beta_hat));
        // variance against dense oracle
        let dense = cov.to_dense();
        let li = dense.clone().cholesky().unwrap().inverse();
        let oracle = (x.matrix().transpose() * li * x.matrix()).try_inverse().unwrap();
        let v = DMatrix::from_row_slice(3, 3, &fit.variance);
        assert!((v - oracle).norm() < 1e-10);
        // minimality of the loss
        for _ in 0..100 {
            let d: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() - 0.5).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            let b: Vec<f64> = fit.beta_hat.iter().zip(&d).map(|(a, e)| a + 1e-3 * e / norm).collect();
            let r: Vec<f64> = y.iter().zip(x.apply(&b)).map(|(a, b)| a - b).collect();
            assert!(f.quad_form(&r).unwrap() >= fit.loss);
        }
    }

    #[test]
    fn monte_carlo_unbiasedness_and_variance() {
        let spec = SpharmaSpec::preset(Scenario::Dpbs, 3);
        let n_times = 100;
        let x = anova_design(n_times, 5).unwrap();
        let beta = true_beta(3, 5);
        let covs = aggregated_covariances(&spec, n_times).unwrap();
        let sim = Simulator::new(&spec, n_times, &SimulationOptions::default()).unwrap();
        let reps = 200;
        let fits: Vec<GlsFit> = (0..reps)
            .map(|r| {
                let eps = sim.draw(1000 + r).unwrap();
                gls_fit(&x, &synthesize_response(&x, &beta, &eps).unwrap(), &covs).unwrap()
            })
            .collect();
        for n in 1..=3 {
            let v = fits[0].variance(n);
            let mut mean = DVector::zeros(5);
            for f in &fits {
                mean += DVector::from_column_slice(&f.degree(n).beta_hat);
            }
            mean /= reps as f64;
            let mut emp = DMatrix::zeros(5, 5);
            for f in &fits {
                let d = DVector::from_column_slice(&f.degree(n).beta_hat) - &mean;
                emp += &d * d.transpose();
            }
            emp /= (reps - 1) as f64;
            for j in 0..5 {
                let se = (v[(j, j)] / reps as f64).sqrt();
                assert!((mean[j] - beta.get(n, j + 1)).abs() < 3.0 * se, "n={n} j={j}");
            }
            assert!((&emp - &v).norm() / v.norm() < 0.15, "n={n}");
        }
    }

    #[test]
    fn ols_residuals_are_orthogonal() {
        let x = anova_design(20, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = CoefficientSample::from_vec(20, 1, 2, (0..20 * 8).map(|_| rng.gen()).collect()).unwrap();
        let r = ols_residuals(&x, &s).unwrap();
        for j in 0..4 {
            let dot: f64 = x.matrix().column(j).iter().zip(r.series(2, 3)).map(|(a, b)| a * b).sum();
            assert!(dot.abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruction_matches_zonal_sum() {
        let table = HarmonicTable::new(QuadratureGrid::for_degree(6), 6);
        let mut beta = BetaCoefficients::zeros(1, 6, 2);
        beta.set(2, 1, 1.0);
        let fields = reconstruct_beta(&beta, &table).unwrap();
        let sphere = ManifoldSpec::sphere();
        // sum_k S_{2,k}(x) has no closed form pointwise, but its square
        // integrates to the number of orders, and its inner product with
        // S_{2,k} is 1.
        let norm2: f64 = fields[0].iter().zip(&table.grid().weights).map(|(f, w)| f * f * w).sum();
        assert!((norm2 - 5.0).abs() < 1e-10);
        assert!(fields[1].iter().all(|v| *v == 0.0));
        // zonal check: sum_k S_{2,k}(x) S_{2,k}(y) integrated against the
        // field at y gives the field value at x
        let x0 = SphPoint::new(0.7, 1.3).unwrap();
        let direct: f64 = (1..=5)
            .map(|k| crate::harmonics::real_harmonic(2, k, &x0).unwrap())
            .sum();
        let via_kernel: f64 = table
            .grid()
            .nodes
            .iter()
            .zip(&table.grid().weights)
            .zip(&fields[0])
            .map(|((y, w), f)| addition_kernel(2, &x0, y, &sphere).unwrap() * f * w)
            .sum();
        assert!((direct - via_kernel).abs() < 1e-10);
        let doubled = reconstruct_beta(&beta.scaled(2.0), &table).unwrap();
        for (a, b) in doubled[0].iter().zip(&fields[0]) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn design_text_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.tsv");
        let x = anova_design(10, 2).unwrap();
        x.write_text(&path).unwrap();
        assert_eq!(DesignMatrix::read_text(&path).unwrap(), x);
    }
}
