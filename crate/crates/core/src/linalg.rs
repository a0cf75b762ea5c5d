//! Small dense linear-algebra helpers shared by the GP code paths.
//!
//! Every solve against a covariance matrix goes through [`SpdFactor`], a
//! Cholesky factorization with a bounded jitter escalation. Nothing in the
//! crate forms an explicit inverse outside of test oracles.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter levels tried, in order, when a plain Cholesky fails.
pub const JITTER_LEVELS: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky factorization of a symmetric positive-definite matrix.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl SpdFactor {
    /// Factorizes `m`, escalating diagonal jitter `eps * scale` through
    /// [`JITTER_LEVELS`] if needed.
    pub fn new(m: &DMatrix<f64>, scale: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "cannot factor a {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("matrix has non-finite entries".into()));
        }
        if let Some(chol) = m.clone().cholesky() {
            return Ok(Self { chol, jitter: 0.0 });
        }
        let mut attempted = Vec::with_capacity(JITTER_LEVELS.len());
        for eps in JITTER_LEVELS {
            let jitter = eps * scale;
            attempted.push(jitter);
            let mut shifted = m.clone();
            for i in 0..shifted.nrows() {
                shifted[(i, i)] += jitter;
            }
            if let Some(chol) = shifted.cholesky() {
                log::debug!("cholesky needed jitter {jitter:e} on a {}x{} matrix", m.nrows(), m.ncols());
                return Ok(Self { chol, jitter });
            }
        }
        Err(Error::Factorization { attempted })
    }

    /// Factorizes without any jitter; fails if `m` is not numerically PD.
    pub fn strict(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "cannot factor a {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        m.clone()
            .cholesky()
            .map(|chol| Self { chol, jitter: 0.0 })
            .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Diagonal jitter that was added before the factorization succeeded.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `M^{-1} B`
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `L^{-1} B` where `M = L L^T`.
    pub fn half_solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("cholesky factor has a non-zero diagonal")
    }

    pub fn half_solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("cholesky factor has a non-zero diagonal")
    }

    /// `log det M`, as twice the sum of the log-diagonal of the factor.
    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// The lower-triangular factor `L`.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Reconstructs the factorized matrix (including any jitter).
    pub fn matrix(&self) -> DMatrix<f64> {
        let l = self.chol.l();
        &l * l.transpose()
    }
}

/// Replaces `m` with `(m + m^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over all entries.
pub fn max_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch in max_rel_err");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn max_rel_err_vec(a: &DVector<f64>, b: &DVector<f64>, floor: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch in max_rel_err_vec");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Log-determinant of a small SPD matrix stored row-major in `a` (n <= 8),
/// factorized in place on the stack. Returns `None` if not positive definite.
pub fn small_spd_log_det(n: usize, a: &[f64]) -> Option<f64> {
    debug_assert!(n <= 8 && a.len() >= n * n);
    let mut l = [0.0f64; 64];
    let mut log_det = 0.0;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * 8 + k] * l[j * 8 + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[j * 8 + j] = djj;
        log_det += djj.ln();
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * 8 + k] * l[j * 8 + k];
            }
            l[i * 8 + j] = s / djj;
        }
    }
    Some(2.0 * log_det)
}
