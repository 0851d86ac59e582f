//! Harmonic coefficient samples `V_{n,j}(t)` and their file formats.
//!
//! Layout is row-major over `(t, n, j)` with degrees `first_degree..=max_degree`
//! and `j = 1..=2n+1`. On disk a sample is either a headered text table
//! (`t n j value`, 1-based `t` and `j`) or a little-endian `f64` block with a
//! JSON sidecar carrying the dimensions and seed.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::sphere_dim;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SampleMeta {
    /// Seed the sample was generated from, if simulated.
    pub seed: Option<u64>,
    /// Free-form description of the generating model.
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSample {
    n_times: usize,
    first_degree: usize,
    max_degree: usize,
    data: Vec<f64>,
    pub meta: SampleMeta,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    n_times: usize,
    first_degree: usize,
    max_degree: usize,
    layout: String,
    #[serde(flatten)]
    meta: SampleMeta,
}

impl CoefficientSample {
    pub fn zeros(n_times: usize, first_degree: usize, max_degree: usize) -> Result<Self> {
        if first_degree > max_degree {
            return Err(Error::Dimension(format!(
                "first degree {first_degree} exceeds max degree {max_degree}"
            )));
        }
        let width = Self::width_for(first_degree, max_degree);
        Ok(CoefficientSample {
            n_times,
            first_degree,
            max_degree,
            data: vec![0.0; n_times * width],
            meta: SampleMeta::default(),
        })
    }

    pub fn from_vec(
        n_times: usize,
        first_degree: usize,
        max_degree: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        let mut s = Self::zeros(0, first_degree, max_degree)?;
        if data.len() != n_times * s.width() {
            return Err(Error::Dimension(format!(
                "expected {} values, got {}",
                n_times * s.width(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("sample contains non-finite values".into()));
        }
        s.n_times = n_times;
        s.data = data;
        Ok(s)
    }

    fn width_for(first: usize, max: usize) -> usize {
        (max + 1) * (max + 1) - first * first
    }

    /// Number of coefficients per time point.
    pub fn width(&self) -> usize {
        Self::width_for(self.first_degree, self.max_degree)
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn first_degree(&self) -> usize {
        self.first_degree
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn degrees(&self) -> std::ops::RangeInclusive<usize> {
        self.first_degree..=self.max_degree
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn same_shape(&self, other: &CoefficientSample) -> bool {
        self.n_times == other.n_times
            && self.first_degree == other.first_degree
            && self.max_degree == other.max_degree
    }

    /// Column of `(n, j)` within a row; `j` is 1-based.
    #[inline]
    pub fn column(&self, n: usize, j: usize) -> usize {
        debug_assert!(n >= self.first_degree && n <= self.max_degree);
        debug_assert!(j >= 1 && j <= sphere_dim(n));
        n * n - self.first_degree * self.first_degree + j - 1
    }

    fn check(&self, t: usize, n: usize, j: usize) -> Result<()> {
        if t >= self.n_times || n < self.first_degree || n > self.max_degree || j == 0 || j > sphere_dim(n) {
            return Err(Error::Index(format!("(t={t}, n={n}, j={j}) outside sample")));
        }
        Ok(())
    }

    /// Value at 0-based time `t`, degree `n`, 1-based order `j`.
    pub fn get(&self, t: usize, n: usize, j: usize) -> Result<f64> {
        self.check(t, n, j)?;
        Ok(self.data[t * self.width() + self.column(n, j)])
    }

    pub fn set(&mut self, t: usize, n: usize, j: usize, v: f64) -> Result<()> {
        self.check(t, n, j)?;
        let w = self.width();
        let c = self.column(n, j);
        self.data[t * w + c] = v;
        Ok(())
    }

    /// Coefficients of all degrees at time `t`.
    pub fn row(&self, t: usize) -> &[f64] {
        let w = self.width();
        &self.data[t * w..(t + 1) * w]
    }

    /// Time series of coefficient `(n, j)`.
    pub fn series(&self, n: usize, j: usize) -> Vec<f64> {
        let w = self.width();
        let c = self.column(n, j);
        (0..self.n_times).map(|t| self.data[t * w + c]).collect()
    }

    pub fn set_series(&mut self, n: usize, j: usize, values: &[f64]) -> Result<()> {
        if values.len() != self.n_times {
            return Err(Error::Dimension(format!(
                "series length {} != sample length {}",
                values.len(),
                self.n_times
            )));
        }
        let w = self.width();
        let c = self.column(n, j);
        for (t, v) in values.iter().enumerate() {
            self.data[t * w + c] = *v;
        }
        Ok(())
    }

    /// Rows at the given 0-based times, in that order.
    pub fn select_times(&self, times: &[usize]) -> Result<Self> {
        let w = self.width();
        let mut data = Vec::with_capacity(times.len() * w);
        for &t in times {
            if t >= self.n_times {
                return Err(Error::Index(format!("time {t} outside 0..{}", self.n_times)));
            }
            data.extend_from_slice(self.row(t));
        }
        let mut s = Self::from_vec(times.len(), self.first_degree, self.max_degree, data)?;
        s.meta = self.meta.clone();
        Ok(s)
    }

    /// Order average `(1/(2n+1)) sum_j V_{n,j}(t)` for degree `n`.
    pub fn degree_average(&self, n: usize) -> Vec<f64> {
        let w = self.width();
        let start = self.column(n, 1);
        let dim = sphere_dim(n);
        (0..self.n_times)
            .map(|t| {
                let row = &self.data[t * w + start..t * w + start + dim];
                row.iter().sum::<f64>() / dim as f64
            })
            .collect()
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "t\tn\tj\tvalue").map_err(io)?;
        for t in 0..self.n_times {
            for n in self.degrees() {
                for j in 1..=sphere_dim(n) {
                    let v = self.data[t * self.width() + self.column(n, j)];
                    writeln!(out, "{}\t{}\t{}\t{:e}", t, n, j, v).map_err(io)?;
                }
            }
        }
        out.flush().map_err(io)
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if lineno == 0 || line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::Parse(format!("line {}: expected 4 columns", lineno + 1)));
            }
            let p = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)));
            let v = f[3]
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            rows.push((p(f[0])?, p(f[1])?, p(f[2])?, v));
        }
        if rows.is_empty() {
            return Err(Error::Parse("sample file has no rows".into()));
        }
        let n_times = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let first = rows.iter().map(|r| r.1).min().unwrap_or(0);
        let max = rows.iter().map(|r| r.1).max().unwrap_or(0);
        let mut s = Self::zeros(n_times, first, max)?;
        if rows.len() != n_times * s.width() {
            return Err(Error::Parse(format!(
                "expected {} rows for a complete sample, found {}",
                n_times * s.width(),
                rows.len()
            )));
        }
        for (t, n, j, v) in rows {
            s.set(t, n, j, v)?;
        }
        Ok(s)
    }

    /// Writes `<stem>.bin` and `<stem>.json`.
    pub fn write_binary(&self, bin_path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(bin_path, bytes).map_err(|e| Error::io(bin_path, e))?;
        let sidecar = Sidecar {
            format: "f64-le".into(),
            n_times: self.n_times,
            first_degree: self.first_degree,
            max_degree: self.max_degree,
            layout: "row-major (t, n, j)".into(),
            meta: self.meta.clone(),
        };
        let json_path = bin_path.with_extension("json");
        let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(&json_path, text + "\n").map_err(|e| Error::io(&json_path, e))
    }

    pub fn read_binary(bin_path: &Path) -> Result<Self> {
        let json_path = bin_path.with_extension("json");
        let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        if sidecar.format != "f64-le" {
            return Err(Error::Parse(format!("unsupported sample format '{}'", sidecar.format)));
        }
        let bytes = fs::read(bin_path).map_err(|e| Error::io(bin_path, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Parse("binary sample length is not a multiple of 8".into()));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let mut s = Self::from_vec(sidecar.n_times, sidecar.first_degree, sidecar.max_degree, data)?;
        s.meta = sidecar.meta;
        Ok(s)
    }

    /// Reads either format, chosen by extension (`.bin` or text).
    pub fn read(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => Self::read_binary(path),
            _ => Self::read_text(path),
        }
    }
}
