//! Harmonic analysis on compact two-point homogeneous spaces.
//!
//! Zonal quantities (Jacobi kernels, eigenspace dimensions, Laplace-Beltrami
//! eigenvalues) are available for any `(alpha, beta, eps)` triple. The
//! eigenfunction basis itself is only implemented for the 2-sphere, where
//! `S_{n,j}` are the real orthonormal spherical harmonics with the order
//! index `j = 1..=2n+1` running over `m = -n..=n` (sine type for `m < 0`,
//! cosine type for `m > 0`).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Parameters of a compact two-point homogeneous space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub d: usize,
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
    pub omega_d: f64,
}

impl ManifoldSpec {
    /// The unit sphere S².
    pub fn sphere() -> Self {
        ManifoldSpec {
            d: 2,
            alpha: 0.0,
            beta: 0.0,
            eps: 1.0,
            omega_d: 4.0 * PI,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "s2" | "sphere" => Ok(Self::sphere()),
            other => Err(Error::Config(format!("unknown manifold preset '{other}'"))),
        }
    }

    pub fn new(d: usize, alpha: f64, beta: f64, eps: f64, omega_d: f64) -> Result<Self> {
        let spec = ManifoldSpec {
            d,
            alpha,
            beta,
            eps,
            omega_d,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Domain("manifold dimension must be positive".into()));
        }
        if !(self.alpha > -1.0 && self.beta > -1.0) {
            return Err(Error::Domain(format!(
                "Jacobi parameters must exceed -1 (alpha={}, beta={})",
                self.alpha, self.beta
            )));
        }
        if !(self.eps > 0.0 && self.omega_d > 0.0) {
            return Err(Error::Domain("eps and omega_d must be positive".into()));
        }
        Ok(())
    }

    pub fn is_sphere(&self) -> bool {
        self.d == 2 && self.alpha == 0.0 && self.beta == 0.0
    }
}

/// A point on S² in colatitude/longitude coordinates (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphPoint {
    pub colatitude: f64,
    pub longitude: f64,
}

impl SphPoint {
    pub fn new(colatitude: f64, longitude: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&colatitude) {
            return Err(Error::Domain(format!("colatitude {colatitude} outside [0, pi]")));
        }
        if !(0.0..2.0 * PI).contains(&longitude) {
            return Err(Error::Domain(format!("longitude {longitude} outside [0, 2pi)")));
        }
        Ok(SphPoint {
            colatitude,
            longitude,
        })
    }

    /// Cosine of the great-circle distance to `other`.
    pub fn cos_distance(&self, other: &SphPoint) -> f64 {
        let c = self.colatitude.cos() * other.colatitude.cos()
            + self.colatitude.sin()
                * other.colatitude.sin()
                * (self.longitude - other.longitude).cos();
        c.clamp(-1.0, 1.0)
    }
}

/// Jacobi polynomial `P_n^{(a,b)}(x)` by the ascending three-term recurrence.
pub fn jacobi_poly(n: usize, a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > -1.0 && b > -1.0) {
        return Err(Error::Domain(format!("Jacobi parameters ({a}, {b}) must exceed -1")));
    }
    let x = check_unit_interval(x)?;
    Ok(jacobi_unchecked(n, a, b, x))
}

fn check_unit_interval(x: f64) -> Result<f64> {
    if !x.is_finite() || x.abs() > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("Jacobi argument {x} outside [-1, 1]")));
    }
    Ok(x.clamp(-1.0, 1.0))
}

fn jacobi_unchecked(n: usize, a: f64, b: f64, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = (a + 1.0) + 0.5 * (a + b + 2.0) * (x - 1.0);
    for k in 2..=n {
        let k = k as f64;
        let s = 2.0 * k + a + b;
        let c1 = 2.0 * k * (k + a + b) * (s - 2.0);
        let c2 = (s - 1.0) * (s * (s - 2.0) * x + a * a - b * b);
        let c3 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * s;
        let next = (c2 * cur - c3 * prev) / c1;
        prev = cur;
        cur = next;
    }
    cur
}

/// `R_n(c) = P_n(c) / P_n(1)` for the manifold's Jacobi parameters.
pub fn normalized_jacobi(n: usize, spec: &ManifoldSpec, c: f64) -> Result<f64> {
    spec.validate()?;
    let c = check_unit_interval(c)?;
    let at_one = jacobi_unchecked(n, spec.alpha, spec.beta, 1.0);
    Ok(jacobi_unchecked(n, spec.alpha, spec.beta, c) / at_one)
}

/// Dimension `delta(n, d)` of the degree-`n` eigenspace.
pub fn eigenspace_dim(n: usize, spec: &ManifoldSpec) -> usize {
    if n == 0 {
        return 1;
    }
    let (a, b) = (spec.alpha, spec.beta);
    let nf = n as f64;
    let log_dim = (2.0 * nf + a + b + 1.0).ln()
        + ln_gamma(b + 1.0)
        + ln_gamma(nf + a + b + 1.0)
        + ln_gamma(nf + a + 1.0)
        - ln_gamma(a + 1.0)
        - ln_gamma(a + b + 2.0)
        - ln_gamma(nf + 1.0)
        - ln_gamma(nf + b + 1.0);
    log_dim.exp().round() as usize
}

/// Number of S² harmonics of degree `n`.
#[inline]
pub fn sphere_dim(n: usize) -> usize {
    2 * n + 1
}

/// Laplace-Beltrami eigenvalue `-n eps (n eps + alpha + beta + 1)`.
pub fn lb_eigenvalue(n: usize, spec: &ManifoldSpec) -> f64 {
    let ne = n as f64 * spec.eps;
    -ne * (ne + spec.alpha + spec.beta + 1.0)
}

/// Zonal kernel `delta(n,d)/omega_d * R_n(cos dist(x, y))` on S².
pub fn addition_kernel(n: usize, x: &SphPoint, y: &SphPoint, spec: &ManifoldSpec) -> Result<f64> {
    let r = normalized_jacobi(n, spec, x.cos_distance(y))?;
    Ok(eigenspace_dim(n, spec) as f64 / spec.omega_d * r)
}

/// Position of `(n, j)` (with `j` 1-based) in a degree-major flat layout
/// that starts at degree 0.
#[inline]
pub fn flat_index(n: usize, j: usize) -> usize {
    n * n + j - 1
}

/// All real spherical harmonics of degree `0..=lmax` at `p`, in
/// [`flat_index`] order.
pub fn harmonics_upto(lmax: usize, p: &SphPoint) -> Vec<f64> {
    let x = p.colatitude.cos();
    let s = p.colatitude.sin();
    let plm = normalized_legendre_table(lmax, x, s);
    let mut out = vec![0.0; (lmax + 1) * (lmax + 1)];
    let (cos_m, sin_m): (Vec<f64>, Vec<f64>) = (0..=lmax)
        .map(|m| {
            let a = m as f64 * p.longitude;
            (a.cos(), a.sin())
        })
        .unzip();
    for n in 0..=lmax {
        let base = n * n + n; // slot of m = 0
        out[base] = plm[leg_index(n, 0)];
        for m in 1..=n {
            let v = std::f64::consts::SQRT_2 * plm[leg_index(n, m)];
            out[base + m] = v * cos_m[m];
            out[base - m] = v * sin_m[m];
        }
    }
    out
}

#[inline]
fn leg_index(n: usize, m: usize) -> usize {
    n * (n + 1) / 2 + m
}

// Orthonormal associated Legendre functions (no Condon-Shortley phase),
// scaled so that the m = 0 column integrates to one over S².
fn normalized_legendre_table(lmax: usize, x: f64, s: f64) -> Vec<f64> {
    let mut p = vec![0.0; (lmax + 1) * (lmax + 2) / 2];
    p[0] = 1.0 / (4.0 * PI).sqrt();
    for m in 0..=lmax {
        if m > 0 {
            let mf = m as f64;
            p[leg_index(m, m)] =
                ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * p[leg_index(m - 1, m - 1)];
        }
        if m < lmax {
            p[leg_index(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * x * p[leg_index(m, m)];
        }
        for n in (m + 2)..=lmax {
            let (nf, mf) = (n as f64, m as f64);
            let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf)).sqrt();
            let b = (((nf - 1.0) * (nf - 1.0) - mf * mf) / (4.0 * (nf - 1.0) * (nf - 1.0) - 1.0))
                .sqrt();
            p[leg_index(n, m)] = a * (x * p[leg_index(n - 1, m)] - b * p[leg_index(n - 2, m)]);
        }
    }
    p
}

/// Real orthonormal spherical harmonic `S_{n,j}` on S² (`j` is 1-based).
pub fn real_harmonic(n: usize, j: usize, p: &SphPoint) -> Result<f64> {
    if j == 0 || j > sphere_dim(n) {
        return Err(Error::Index(format!(
            "order index {j} outside 1..={} for degree {n}",
            sphere_dim(n)
        )));
    }
    Ok(harmonics_upto(n, p)[flat_index(n, j)])
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];
    let kf = k as f64;
    for i in 0..(k + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (kf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(k, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(k, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        nodes[k - 1 - i] = -x;
        weights[i] = w;
        weights[k - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(k: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if k == 0 {
        return (1.0, 0.0);
    }
    for n in 2..=k {
        let nf = n as f64;
        let p2 = ((2.0 * nf - 1.0) * x * p1 - (nf - 1.0) * p0) / nf;
        p0 = p1;
        p1 = p2;
    }
    let kf = k as f64;
    (p1, kf * (x * p1 - p0) / (x * x - 1.0))
}

/// Product quadrature on S²: Gauss-Legendre in `cos(colatitude)` times the
/// trapezoid rule in longitude.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub nodes: Vec<SphPoint>,
    pub weights: Vec<f64>,
    n_colat: usize,
    n_lon: usize,
    exact_degree: usize,
}

impl QuadratureGrid {
    /// Grid that integrates products of harmonics of degree `<= max_degree`
    /// exactly.
    pub fn for_degree(max_degree: usize) -> Self {
        let n_colat = max_degree + 1;
        let n_lon = 2 * max_degree + 1;
        let (xs, ws) = gauss_legendre(n_colat);
        let dphi = 2.0 * PI / n_lon as f64;
        let mut nodes = Vec::with_capacity(n_colat * n_lon);
        let mut weights = Vec::with_capacity(n_colat * n_lon);
        for (x, w) in xs.iter().zip(&ws) {
            let colat = x.clamp(-1.0, 1.0).acos();
            for k in 0..n_lon {
                nodes.push(SphPoint {
                    colatitude: colat,
                    longitude: k as f64 * dphi,
                });
                weights.push(w * dphi);
            }
        }
        QuadratureGrid {
            nodes,
            weights,
            n_colat,
            n_lon,
            exact_degree: max_degree,
        }
    }

    pub fn exact_degree(&self) -> usize {
        self.exact_degree
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// (colatitude nodes, longitude nodes) of the tensor grid.
    pub fn shape(&self) -> (usize, usize) {
        (self.n_colat, self.n_lon)
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn check_degree(&self, n: usize) -> Result<()> {
        if n > self.exact_degree {
            return Err(Error::GridExactness {
                exact: self.exact_degree,
                requested: n,
            });
        }
        Ok(())
    }
}

/// Quadrature approximation of `<field, S_{n,j}>`.
pub fn project_field(field: &[f64], grid: &QuadratureGrid, n: usize, j: usize) -> Result<f64> {
    grid.check_degree(n)?;
    if field.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "field has {} values, grid has {} nodes",
            field.len(),
            grid.len()
        )));
    }
    if j == 0 || j > sphere_dim(n) {
        return Err(Error::Index(format!("order index {j} outside 1..={}", sphere_dim(n))));
    }
    let idx = flat_index(n, j);
    Ok(grid
        .nodes
        .iter()
        .zip(&grid.weights)
        .zip(field)
        .map(|((p, w), f)| w * f * harmonics_upto(n, p)[idx])
        .sum())
}

/// Harmonics of degree `0..=lmax` tabulated on a grid, for repeated
/// analysis and synthesis.
#[derive(Debug, Clone)]
pub struct HarmonicTable {
    lmax: usize,
    grid: QuadratureGrid,
    // values[node * width + flat_index]
    values: Vec<f64>,
}

impl HarmonicTable {
    pub fn new(grid: QuadratureGrid, lmax: usize) -> Self {
        let width = (lmax + 1) * (lmax + 1);
        let mut values = Vec::with_capacity(grid.len() * width);
        for p in &grid.nodes {
            values.extend(harmonics_upto(lmax, p));
        }
        HarmonicTable { lmax, grid, values }
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    fn width(&self) -> usize {
        (self.lmax + 1) * (self.lmax + 1)
    }

    /// Field values from coefficients in [`flat_index`] order (degrees
    /// `0..=lmax`; shorter inputs are zero-padded).
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        let width = self.width();
        if coeffs.len() > width {
            return Err(Error::Dimension(format!(
                "{} coefficients exceed table width {width}",
                coeffs.len()
            )));
        }
        Ok(self
            .values
            .chunks_exact(width)
            .map(|row| row.iter().zip(coeffs).map(|(s, c)| s * c).sum())
            .collect())
    }

    /// Coefficients of degrees `0..=lmax` by quadrature.
    pub fn analyze(&self, field: &[f64]) -> Result<Vec<f64>> {
        self.grid.check_degree(self.lmax)?;
        if field.len() != self.grid.len() {
            return Err(Error::Dimension(format!(
                "field has {} values, grid has {} nodes",
                field.len(),
                self.grid.len()
            )));
        }
        let width = self.width();
        let mut out = vec![0.0; width];
        for ((row, w), f) in self.values.chunks_exact(width).zip(&self.grid.weights).zip(field) {
            let wf = w * f;
            for (o, s) in out.iter_mut().zip(row) {
                *o += wf * s;
            }
        }
        Ok(out)
    }

    /// `sum_k S_{n,k}(x)` for degree `n` at every node.
    pub fn order_sum(&self, n: usize) -> Result<Vec<f64>> {
        if n > self.lmax {
            return Err(Error::GridExactness {
                exact: self.lmax,
                requested: n,
            });
        }
        let width = self.width();
        Ok(self
            .values
            .chunks_exact(width)
            .map(|row| row[n * n..(n + 1) * (n + 1)].iter().sum())
            .collect())
    }
}
