//! Row-major design matrices and regression datasets.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Dense `n x p` covariate matrix stored row-major, so that each observation
/// is a contiguous slice for kernel evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("design needs at least one row"));
        }
        let p = rows[0].len();
        if p == 0 {
            return Err(Error::invalid("design needs at least one column"));
        }
        let mut data = Vec::with_capacity(n * p);
        for r in rows {
            if r.len() != p {
                return Err(Error::DimensionMismatch {
                    what: "design row length",
                    expected: p,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(n, p, data)
    }

    pub fn from_row_major(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::invalid("design needs n >= 1 and p >= 1"));
        }
        if data.len() != n * p {
            return Err(Error::DimensionMismatch {
                what: "design buffer length",
                expected: n * p,
                got: data.len(),
            });
        }
        ensure_finite(&data, "design matrix")?;
        Ok(Self { n, p, data })
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.p)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Per-column affine transform applied before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    /// Column means and sample SDs; constant columns keep SD 1.
    pub fn fit(x: &Design) -> Self {
        let n = x.nrows() as f64;
        let mut means = vec![0.0; x.ncols()];
        let mut sds = vec![1.0; x.ncols()];
        for j in 0..x.ncols() {
            let col = x.column(j);
            let m = col.iter().sum::<f64>() / n;
            let var = if x.nrows() > 1 {
                col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            means[j] = m;
            if var > 0.0 {
                sds[j] = var.sqrt();
            }
        }
        Self { means, sds }
    }

    pub fn apply(&self, x: &Design) -> Result<Design> {
        if x.ncols() != self.means.len() {
            return Err(Error::DimensionMismatch {
                what: "standardization columns",
                expected: self.means.len(),
                got: x.ncols(),
            });
        }
        let p = x.ncols();
        let data = x
            .as_slice()
            .iter()
            .enumerate()
            .map(|(k, v)| (v - self.means[k % p]) / self.sds[k % p])
            .collect();
        Design::from_row_major(x.nrows(), p, data)
    }
}

/// Covariates plus response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Design,
    pub y: Vec<f64>,
    /// Covariate column names, `x1..xp` when none were given.
    pub names: Vec<String>,
    /// Which columns were standardized before fitting.
    pub standardized: Vec<bool>,
}

impl Dataset {
    pub fn new(x: Design, y: Vec<f64>) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                what: "response length",
                expected: x.nrows(),
                got: y.len(),
            });
        }
        ensure_finite(&y, "response")?;
        let p = x.ncols();
        Ok(Self {
            x,
            y,
            names: (1..=p).map(|j| format!("x{j}")).collect(),
            standardized: vec![false; p],
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn standardize(mut self, s: &Standardization) -> Result<Self> {
        self.x = s.apply(&self.x)?;
        self.standardized = vec![true; self.p()];
        Ok(self)
    }
}
