//! Cholesky factorization with a fixed jitter ladder.

use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Relative jitters tried in order; each is scaled by the mean diagonal.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Lower Cholesky factor of `A + jitter * I`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: Mat<f64>,
    jitter: f64,
}

impl SpdFactor {
    /// Factorizes a symmetric matrix (only the lower triangle is read),
    /// walking [`JITTER_LADDER`] until the factorization succeeds.
    pub fn new(a: MatRef<'_, f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::invalid(format!("cannot factorize a {}x{} matrix", n, a.ncols())));
        }
        let mean_diag = (0..n).map(|i| a[(i, i)]).sum::<f64>() / n as f64;
        if !mean_diag.is_finite() {
            return Err(Error::non_finite("matrix to factorize"));
        }
        let mut tried = Vec::with_capacity(JITTER_LADDER.len());
        let mut shifted: Option<Mat<f64>> = None;
        for &delta in &JITTER_LADDER {
            let jitter = delta * mean_diag.abs();
            tried.push(jitter);
            let llt = if jitter == 0.0 {
                a.llt(Side::Lower)
            } else {
                let m = shifted.get_or_insert_with(|| a.to_owned());
                for i in 0..n {
                    m[(i, i)] = a[(i, i)] + jitter;
                }
                m.llt(Side::Lower)
            };
            if let Ok(llt) = llt {
                let l = llt.L().to_owned();
                if (0..n).all(|i| l[(i, i)].is_finite() && l[(i, i)] > 0.0) {
                    return Ok(Self { l, jitter });
                }
            }
        }
        Err(Error::Factorization { ladder: tried })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Absolute diagonal shift that was needed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn l(&self) -> MatRef<'_, f64> {
        self.l.as_ref()
    }

    /// `log |A|`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    /// Overwrites `b` with `L^{-1} b`.
    pub fn solve_lower_in_place(&self, b: &mut Mat<f64>) {
        self.l.as_ref().solve_lower_triangular_in_place(b.as_mut());
    }

    /// `L^{-1} b` for a single vector.
    pub fn solve_lower_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut m = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        self.solve_lower_in_place(&mut m);
        (0..b.len()).map(|i| m[(i, 0)]).collect()
    }

    /// `A^{-1} b`.
    pub fn solve(&self, b: &Mat<f64>) -> Mat<f64> {
        let mut x = b.clone();
        self.solve_lower_in_place(&mut x);
        self.l.as_ref().transpose().solve_upper_triangular_in_place(x.as_mut());
        x
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let x = self.solve(&Mat::from_fn(b.len(), 1, |i, _| b[i]));
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }

    /// `b^T A^{-1} b`.
    pub fn quad_form(&self, b: &[f64]) -> f64 {
        self.solve_lower_vec(b).iter().map(|v| v * v).sum()
    }

    /// Explicit `A^{-1}`; only the gradient path needs it.
    pub fn inverse(&self) -> Mat<f64> {
        self.solve(&Mat::identity(self.dim(), self.dim()))
    }
}
