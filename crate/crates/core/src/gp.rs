//! Dense Gaussian-process machinery: the squared-exponential kernel, the
//! exact posterior (the FGP baseline), the log-GP back-transform and the
//! log-Gaussian entropy used by the walk planner.

use std::collections::HashSet;
use std::f64::consts::{E, PI};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SpdFactor};

/// Identifier of a region (a vertex of the road graph).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionId(pub usize);

/// Context vector of a region; in the simulator, normalized grid coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionFeature(Vec<f64>);

impl RegionFeature {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid(format!("non-finite feature {coords:?}")));
        }
        Ok(Self(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

/// A region together with its feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub id: RegionId,
    pub feature: RegionFeature,
}

impl Region {
    pub fn new(id: usize, coords: Vec<f64>) -> Result<Self> {
        Ok(Self { id: RegionId(id), feature: RegionFeature::new(coords)? })
    }
}

/// Kernel hyperparameters and the constant prior mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub signal_var: f64,
    pub noise_var: f64,
    pub length_scales: Vec<f64>,
    pub prior_mean: f64,
}

impl Hyperparameters {
    pub fn new(signal_var: f64, noise_var: f64, length_scales: Vec<f64>, prior_mean: f64) -> Result<Self> {
        let hyp = Self { signal_var, noise_var, length_scales, prior_mean };
        hyp.validate()?;
        Ok(hyp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_var > 0.0 && self.signal_var.is_finite()) {
            return Err(Error::Invalid(format!("signal variance must be > 0, got {}", self.signal_var)));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::Invalid(format!("noise variance must be >= 0, got {}", self.noise_var)));
        }
        if self.length_scales.is_empty() || self.length_scales.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Invalid(format!("length-scales must be > 0, got {:?}", self.length_scales)));
        }
        if !self.prior_mean.is_finite() {
            return Err(Error::Invalid("prior mean must be finite".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    /// Prior variance of a single region, `signal + noise`.
    pub fn prior_var(&self) -> f64 {
        self.signal_var + self.noise_var
    }

    fn inv_length_scales(&self) -> Vec<f64> {
        self.length_scales.iter().map(|l| 1.0 / l).collect()
    }
}

/// Squared-exponential covariance plus a noise term that fires on region
/// identity (`same_region`), not on feature equality.
pub fn kernel(a: &RegionFeature, b: &RegionFeature, same_region: bool, hyp: &Hyperparameters) -> Result<f64> {
    if a.dim() != hyp.dim() || b.dim() != hyp.dim() {
        return Err(Error::Dimension(format!(
            "features of dimension {} and {} against {} length-scales",
            a.dim(),
            b.dim(),
            hyp.dim()
        )));
    }
    Ok(se_unchecked(a.coords(), b.coords(), &hyp.inv_length_scales(), hyp.signal_var)
        + if same_region { hyp.noise_var } else { 0.0 })
}

#[inline]
fn se_unchecked(a: &[f64], b: &[f64], inv_ls: &[f64], signal_var: f64) -> f64 {
    let mut d2 = 0.0;
    for i in 0..inv_ls.len() {
        let t = (a[i] - b[i]) * inv_ls[i];
        d2 += t * t;
    }
    signal_var * (-0.5 * d2).exp()
}

fn check_dims(regions: &[Region], hyp: &Hyperparameters) -> Result<()> {
    match regions.iter().find(|r| r.feature.dim() != hyp.dim()) {
        Some(r) => Err(Error::Dimension(format!(
            "region {:?} has a {}-dimensional feature, expected {}",
            r.id,
            r.feature.dim(),
            hyp.dim()
        ))),
        None => Ok(()),
    }
}

/// Cross-covariance matrix `Sigma_AB`.
pub fn cov_matrix(a: &[Region], b: &[Region], hyp: &Hyperparameters) -> Result<DMatrix<f64>> {
    check_dims(a, hyp)?;
    check_dims(b, hyp)?;
    let inv_ls = hyp.inv_length_scales();
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
        let ra = &a[i];
        let rb = &b[j];
        se_unchecked(ra.feature.coords(), rb.feature.coords(), &inv_ls, hyp.signal_var)
            + if ra.id == rb.id { hyp.noise_var } else { 0.0 }
    }))
}

/// Symmetric covariance `Sigma_AA`, evaluating each pair once.
pub fn cov_symmetric(a: &[Region], hyp: &Hyperparameters) -> Result<DMatrix<f64>> {
    check_dims(a, hyp)?;
    let inv_ls = hyp.inv_length_scales();
    let n = a.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = se_unchecked(a[i].feature.coords(), a[j].feature.coords(), &inv_ls, hyp.signal_var)
                + if a[i].id == a[j].id { hyp.noise_var } else { 0.0 };
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Observed regions `D` and their log-measurements `z_D`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    regions: Vec<Region>,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(regions: Vec<Region>, values: Vec<f64>) -> Result<Self> {
        if regions.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} regions but {} measurements",
                regions.len(),
                values.len()
            )));
        }
        let mut seen = HashSet::with_capacity(regions.len());
        if let Some(dup) = regions.iter().find(|r| !seen.insert(r.id)) {
            return Err(Error::Invalid(format!("duplicate region {:?} in dataset", dup.id)));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite measurement".into()));
        }
        Ok(Self { regions, values })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn contains(&self, id: RegionId) -> bool {
        self.regions.iter().any(|r| r.id == id)
    }

    /// Inserts a measurement, replacing the stored value on a revisit.
    pub fn upsert(&mut self, region: Region, value: f64) {
        match self.regions.iter().position(|r| r.id == region.id) {
            Some(i) => self.values[i] = value,
            None => {
                self.regions.push(region);
                self.values.push(value);
            }
        }
    }

    /// Drops every measurement whose region satisfies `pred`; returns how many were dropped.
    pub fn remove_where(&mut self, mut pred: impl FnMut(RegionId) -> bool) -> usize {
        let before = self.regions.len();
        let mut keep_values = Vec::with_capacity(before);
        let mut keep_regions = Vec::with_capacity(before);
        for (r, v) in self.regions.drain(..).zip(self.values.drain(..)) {
            if !pred(r.id) {
                keep_regions.push(r);
                keep_values.push(v);
            }
        }
        self.regions = keep_regions;
        self.values = keep_values;
        before - self.regions.len()
    }

    /// `z_D - mu_D`
    pub fn residuals(&self, prior_mean: f64) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.values.iter().map(|v| v - prior_mean))
    }

    /// Concatenates datasets; fails on overlapping regions.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Dataset>) -> Result<Self> {
        let mut regions = Vec::new();
        let mut values = Vec::new();
        for p in parts {
            regions.extend(p.regions.iter().cloned());
            values.extend_from_slice(&p.values);
        }
        Self::new(regions, values)
    }
}

/// Mean vector and covariance matrix over an ordered query set.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPredictive {
    pub query: Vec<RegionId>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianPredictive {
    pub fn variances(&self) -> DVector<f64> {
        self.cov.diagonal()
    }

    /// Sub-distribution over the given query positions.
    pub fn restrict(&self, positions: &[usize]) -> Self {
        let n = positions.len();
        Self {
            query: positions.iter().map(|&i| self.query[i]).collect(),
            mean: DVector::from_fn(n, |i, _| self.mean[positions[i]]),
            cov: DMatrix::from_fn(n, n, |i, j| self.cov[(positions[i], positions[j])]),
        }
    }

    /// Largest asymmetry `|C_ij - C_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = linalg::max_abs(&self.cov).max(f64::MIN_POSITIVE);
        let n = self.cov.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.cov[(i, j)] - self.cov[(j, i)]).abs());
            }
        }
        worst / scale
    }

    /// Smallest eigenvalue of the symmetrized covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.cov.is_empty() {
            return 0.0;
        }
        let mut c = self.cov.clone();
        linalg::symmetrize(&mut c);
        c.symmetric_eigenvalues().min()
    }
}

/// Exact GP posterior conditioned on a dataset, factorized once so it can
/// answer many queries.
#[derive(Clone, Debug)]
pub struct ExactGp {
    data: Dataset,
    hyp: Hyperparameters,
    factor: SpdFactor,
    /// `L^{-1} (z_D - mu_D)`
    whitened: DVector<f64>,
}

impl ExactGp {
    pub fn fit(data: &Dataset, hyp: &Hyperparameters) -> Result<Self> {
        hyp.validate()?;
        let k_dd = cov_symmetric(data.regions(), hyp)?;
        let factor = SpdFactor::new(&k_dd, hyp.signal_var)?;
        let whitened = factor.half_solve_vec(&data.residuals(hyp.prior_mean));
        Ok(Self { data: data.clone(), hyp: hyp.clone(), factor, whitened })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// `L^{-1} Sigma_DS` for a query set.
    pub fn whiten(&self, query: &[Region]) -> Result<DMatrix<f64>> {
        let k_ds = cov_matrix(self.data.regions(), query, &self.hyp)?;
        Ok(self.factor.half_solve(&k_ds))
    }

    /// Posterior means and variances, without the full covariance.
    pub fn marginals(&self, query: &[Region]) -> Result<(DVector<f64>, DVector<f64>)> {
        let v = self.whiten(query)?;
        Ok(self.marginals_from_whitened(&v))
    }

    pub fn marginals_from_whitened(&self, v: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = v.ncols();
        let mean = DVector::from_fn(n, |j, _| self.hyp.prior_mean + v.column(j).dot(&self.whitened));
        let prior = self.hyp.prior_var();
        let var = DVector::from_fn(n, |j, _| (prior - v.column(j).norm_squared()).max(0.0));
        (mean, var)
    }

    pub fn predict(&self, query: &[Region]) -> Result<GaussianPredictive> {
        let v = self.whiten(query)?;
        let mean = DVector::from_fn(query.len(), |j, _| self.hyp.prior_mean + v.column(j).dot(&self.whitened));
        let mut cov = cov_symmetric(query, &self.hyp)?;
        cov -= v.transpose() * &v;
        linalg::symmetrize(&mut cov);
        Ok(GaussianPredictive { query: query.iter().map(|r| r.id).collect(), mean, cov })
    }
}

/// Exact GP posterior over `query` given `data`.
pub fn gp_posterior(data: &Dataset, query: &[Region], hyp: &Hyperparameters) -> Result<GaussianPredictive> {
    let mut seen = HashSet::with_capacity(query.len());
    if let Some(dup) = query.iter().find(|r| !seen.insert(r.id)) {
        return Err(Error::Invalid(format!("duplicate query region {:?}", dup.id)));
    }
    ExactGp::fit(data, hyp)?.predict(query)
}

/// Log-GP posterior mean `exp(mean + var / 2)`; the flag is set when the
/// result overflowed and was saturated to `f64::MAX`.
pub fn lgp_mean_saturating(mean: f64, var: f64) -> (f64, bool) {
    let v = (mean + 0.5 * var.max(0.0)).exp();
    if v.is_finite() {
        (v, false)
    } else {
        (f64::MAX, true)
    }
}

pub fn lgp_mean(mean: f64, var: f64) -> f64 {
    let (v, saturated) = lgp_mean_saturating(mean, var);
    if saturated {
        log::warn!("log-GP mean overflowed at mean={mean}, var={var}; saturated");
    }
    v
}

/// Count transform applied to pickup counts before GP modeling.
pub fn log_count(y: f64) -> f64 {
    (y + 1.0).ln()
}

/// Inverse of [`log_count`] applied to a Gaussian predictive in log space.
pub fn count_from_log(mean: f64, var: f64) -> f64 {
    (lgp_mean(mean, var) - 1.0).max(0.0)
}

/// `ln(2 pi e) / 2`, the entropy of a unit-variance Gaussian.
pub fn half_ln_2pi_e() -> f64 {
    0.5 * (2.0 * PI * E).ln()
}

/// Log-Gaussian joint entropy `1/2 log((2 pi e)^n |cov|) + sum(mean)`.
pub fn lgp_entropy(pred: &GaussianPredictive) -> Result<f64> {
    let n = pred.mean.len();
    if pred.cov.nrows() != n || pred.cov.ncols() != n {
        return Err(Error::Dimension(format!(
            "mean of length {n} with a {}x{} covariance",
            pred.cov.nrows(),
            pred.cov.ncols()
        )));
    }
    let log_det = if n == 0 { 0.0 } else { SpdFactor::strict(&pred.cov)?.log_det() };
    Ok(n as f64 * half_ln_2pi_e() + 0.5 * log_det + pred.mean.sum())
}

/// Same as [`lgp_entropy`] for a small covariance given row-major (n <= 8).
pub fn lgp_entropy_small(mean: &[f64], cov: &[f64]) -> Result<f64> {
    let n = mean.len();
    if n > 8 || cov.len() != n * n {
        return Err(Error::Dimension(format!("small entropy needs n <= 8, got {n}")));
    }
    let log_det = linalg::small_spd_log_det(n, cov)
        .ok_or_else(|| Error::Numerical("walk covariance is not positive definite".into()))?;
    Ok(n as f64 * half_ln_2pi_e() + 0.5 * log_det + mean.iter().sum::<f64>())
}
