//! Centralized PIC and PITC predictors.
//!
//! These see every vehicle's data at once and serve as reference
//! implementations for the decentralized protocol in [`crate::fusion`].
//! `(Gamma_DD + Lambda)^{-1}` is applied through the matrix inversion lemma,
//! so nothing of size `|D| x |D|` is ever factorized.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fusion::{Assignment, SupportSet, VehicleId};
use crate::gp::{cov_matrix, cov_symmetric, Dataset, GaussianPredictive, Hyperparameters, Region, RegionId};
use crate::linalg::{self, SpdFactor};

/// Block structure of the centralized data with the factorized
/// block-diagonal `Lambda` and the matching global summary matrix.
#[derive(Clone, Debug)]
pub struct PicOperator {
    blocks: Vec<Dataset>,
    support: SupportSet,
    lambda_blocks: Vec<SpdFactor>,
    offsets: Vec<usize>,
    block_of: HashMap<RegionId, usize>,
    data: Dataset,
    /// `Sigma_DU`
    sigma_du: DMatrix<f64>,
    /// `Lambda^{-1} Sigma_DU`
    x: DMatrix<f64>,
    sigma_ddot: DMatrix<f64>,
    sigma_ddot_factor: SpdFactor,
}

impl PicOperator {
    /// `blocks[k]` holds the data of vehicle `k + 1`.
    pub fn new(blocks: Vec<Dataset>, support: &SupportSet, hyp: &Hyperparameters) -> Result<Self> {
        let data = Dataset::concat(&blocks)?;
        if let Some(r) = data.regions().iter().find(|r| support.contains(r.id)) {
            return Err(Error::Invalid(format!("block data contains support region {:?}", r.id)));
        }
        let mut offsets = Vec::with_capacity(blocks.len() + 1);
        let mut block_of = HashMap::with_capacity(data.len());
        offsets.push(0);
        for (k, b) in blocks.iter().enumerate() {
            block_of.extend(b.regions().iter().map(|r| (r.id, k)));
            offsets.push(offsets[k] + b.len());
        }

        let sigma_du = cov_matrix(data.regions(), support.regions(), hyp)?;
        let mut lambda_blocks = Vec::with_capacity(blocks.len());
        let mut x = DMatrix::zeros(data.len(), support.len());
        for (k, b) in blocks.iter().enumerate() {
            let rows = sigma_du.rows(offsets[k], b.len()).into_owned();
            let mut lam = cov_symmetric(b.regions(), hyp)?;
            lam -= &rows * support.factor().solve(&rows.transpose());
            linalg::symmetrize(&mut lam);
            let f = SpdFactor::new(&lam, hyp.signal_var)?;
            x.rows_mut(offsets[k], b.len()).copy_from(&f.solve(&rows));
            lambda_blocks.push(f);
        }
        let mut sigma_ddot = support.prior_cov() + sigma_du.transpose() * &x;
        linalg::symmetrize(&mut sigma_ddot);
        let sigma_ddot_factor = SpdFactor::new(&sigma_ddot, hyp.signal_var)?;
        Ok(Self {
            blocks,
            support: support.clone(),
            lambda_blocks,
            offsets,
            block_of,
            data,
            sigma_du,
            x,
            sigma_ddot,
            sigma_ddot_factor,
        })
    }

    pub fn blocks(&self) -> &[Dataset] {
        &self.blocks
    }

    pub fn support(&self) -> &SupportSet {
        &self.support
    }

    /// All data, blocks concatenated in order.
    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Block index holding an observed region.
    pub fn block_of(&self, id: RegionId) -> Option<usize> {
        self.block_of.get(&id).copied()
    }

    /// `Sigma_UU + Sigma_UD Lambda^{-1} Sigma_DU`, computed centrally.
    pub fn sigma_ddot(&self) -> &DMatrix<f64> {
        &self.sigma_ddot
    }

    /// Applies `Lambda^{-1}` to a `|D|`-row matrix block by block.
    fn lambda_solve(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for (k, f) in self.lambda_blocks.iter().enumerate() {
            let n = self.blocks[k].len();
            if n > 0 {
                let rows = m.rows(self.offsets[k], n).into_owned();
                out.rows_mut(self.offsets[k], n).copy_from(&f.solve(&rows));
            }
        }
        out
    }

    /// Dense `Lambda` (test and diagnostic use only).
    pub fn lambda_dense(&self) -> DMatrix<f64> {
        let n = self.data.len();
        let mut m = DMatrix::zeros(n, n);
        for (k, f) in self.lambda_blocks.iter().enumerate() {
            let (o, len) = (self.offsets[k], self.blocks[k].len());
            m.view_mut((o, o), (len, len)).copy_from(&f.matrix());
        }
        m
    }

    /// Low-rank cross-covariance `Gamma_SD = Sigma_SU Sigma_UU^{-1} Sigma_UD`.
    fn low_rank(&self, query: &[Region], hyp: &Hyperparameters) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let proj = self.support.project(query, hyp)?;
        Ok((&proj.alpha * self.sigma_du.transpose(), proj.cross))
    }

    fn predict_with(&self, z_d: &DVector<f64>, query: &[Region], cross: DMatrix<f64>, hyp: &Hyperparameters) -> Result<GaussianPredictive> {
        if z_d.len() != self.data.len() {
            return Err(Error::Dimension(format!("{} measurements for {} data regions", z_d.len(), self.data.len())));
        }
        let r = z_d.add_scalar(-hyp.prior_mean);
        let lam_r = self.lambda_solve(&DMatrix::from_column_slice(r.len(), 1, r.as_slice()));
        let xt_r = self.x.transpose() * &r;
        let q = &cross * &self.x;
        let mean = (&cross * &lam_r).column(0).into_owned() - &q * self.sigma_ddot_factor.solve_vec(&xt_r);
        let mean = mean.add_scalar(hyp.prior_mean);

        let y = self.lambda_solve(&cross.transpose());
        let mut cov = cov_symmetric(query, hyp)?;
        cov -= &cross * y;
        cov += &q * self.sigma_ddot_factor.solve(&q.transpose());
        linalg::symmetrize(&mut cov);
        Ok(GaussianPredictive { query: query.iter().map(|s| s.id).collect(), mean, cov })
    }
}

/// PIC predictive: exact covariances between a query region and the data
/// block of its assigned vehicle, low-rank ones elsewhere.
pub fn pic_predict(
    op: &PicOperator,
    z_d: &DVector<f64>,
    query: &[Region],
    tau: &Assignment,
    hyp: &Hyperparameters,
) -> Result<GaussianPredictive> {
    let (mut cross, _) = op.low_rank(query, hyp)?;
    for (i, s) in query.iter().enumerate() {
        let k = tau
            .of(s.id)
            .ok_or_else(|| Error::Protocol(format!("region {:?} has no assigned vehicle", s.id)))?;
        if k == VehicleId(0) || k.index() >= op.blocks.len() {
            return Err(Error::Protocol(format!("region {:?} assigned to unknown vehicle {k}", s.id)));
        }
        let block = &op.blocks[k.index()];
        if !block.is_empty() {
            let exact = cov_matrix(std::slice::from_ref(s), block.regions(), hyp)?;
            cross.view_mut((i, op.offsets[k.index()]), (1, block.len())).copy_from(&exact);
        }
    }
    op.predict_with(z_d, query, cross, hyp)
}

/// PITC predictive: low-rank covariances between every query region and the data.
pub fn pitc_predict(op: &PicOperator, z_d: &DVector<f64>, query: &[Region], hyp: &Hyperparameters) -> Result<GaussianPredictive> {
    let (cross, _) = op.low_rank(query, hyp)?;
    op.predict_with(z_d, query, cross, hyp)
}

/// Largest absolute entry of the difference between a dense inverse of
/// `Gamma_DD + Lambda` and its matrix-inversion-lemma form.
pub fn woodbury_inverse_check(op: &PicOperator) -> Result<f64> {
    let n = op.data.len();
    if n == 0 {
        return Ok(0.0);
    }
    let gamma_dd = &op.sigma_du * op.support.factor().solve(&op.sigma_du.transpose());
    let dense = (gamma_dd + op.lambda_dense())
        .try_inverse()
        .ok_or_else(|| Error::Numerical("dense inverse of Gamma_DD + Lambda failed".into()))?;
    let lam_inv = op.lambda_solve(&DMatrix::identity(n, n));
    let lemma = lam_inv - &op.x * op.sigma_ddot_factor.solve(&op.x.transpose());
    Ok(linalg::max_abs(&(dense - lemma)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::gp_posterior;

    fn hyp() -> Hyperparameters {
        Hyperparameters::new(1.2, 0.15, vec![0.35, 0.5], -0.2).unwrap()
    }

    fn region(i: usize) -> Region {
        Region::new(i, vec![(i % 9) as f64 / 9.0, (i / 9) as f64 / 9.0]).unwrap()
    }

    fn block(ids: &[usize]) -> Dataset {
        let regions: Vec<_> = ids.iter().map(|&i| region(i)).collect();
        let values = ids.iter().map(|&i| (i as f64 * 0.71).cos()).collect();
        Dataset::new(regions, values).unwrap()
    }

    #[test]
    fn no_data_gives_prior() {
        let h = hyp();
        let support = SupportSet::new(vec![region(0), region(40)], &h).unwrap();
        let op = PicOperator::new(vec![Dataset::empty(), Dataset::empty()], &support, &h).unwrap();
        let query = vec![region(5), region(6)];
        let tau = Assignment::uniform(query.iter().map(|s| s.id), VehicleId(2));
        let p = pic_predict(&op, &DVector::zeros(0), &query, &tau, &h).unwrap();
        assert!(linalg::max_abs(&(p.cov - cov_symmetric(&query, &h).unwrap())) < 1e-14);
        assert!(p.mean.iter().all(|m| (m - h.prior_mean).abs() < 1e-14));
        assert_eq!(woodbury_inverse_check(&op).unwrap(), 0.0);
    }

    #[test]
    fn single_block_collapses_to_exact_gp() {
        let h = hyp();
        let support = SupportSet::new(vec![region(0), region(22), region(60)], &h).unwrap();
        let data = block(&[3, 4, 12, 13, 31, 50]);
        let op = PicOperator::new(vec![data.clone()], &support, &h).unwrap();
        let query = vec![region(5), region(30), region(70)];
        let tau = Assignment::uniform(query.iter().map(|s| s.id), VehicleId(1));
        let z = DVector::from_column_slice(data.values());
        let pic = pic_predict(&op, &z, &query, &tau, &h).unwrap();
        let fgp = gp_posterior(&data, &query, &h).unwrap();
        assert!(linalg::max_rel_err(&pic.cov, &fgp.cov, h.signal_var) < 1e-10);
        assert!(linalg::max_rel_err_vec(&pic.mean, &fgp.mean, h.signal_var) < 1e-10);
    }

    #[test]
    fn unknown_vehicle_in_assignment_is_rejected() {
        let h = hyp();
        let support = SupportSet::new(vec![region(0)], &h).unwrap();
        let op = PicOperator::new(vec![block(&[1])], &support, &h).unwrap();
        let query = vec![region(2)];
        let tau = Assignment::uniform([RegionId(2)], VehicleId(3));
        let z = DVector::from_element(1, 0.5);
        assert!(matches!(pic_predict(&op, &z, &query, &tau, &h), Err(Error::Protocol(_))));
    }

    #[test]
    fn woodbury_residual_is_small_for_unequal_blocks() {
        let h = hyp();
        let support = SupportSet::new(vec![region(0), region(44), region(80)], &h).unwrap();
        let blocks = vec![block(&[1, 2, 3, 10, 11]), block(&[]), block(&[30, 31]), block(&[60, 61, 62, 70])];
        let op = PicOperator::new(blocks, &support, &h).unwrap();
        assert!(woodbury_inverse_check(&op).unwrap() < 1e-8);
        assert_eq!(op.block_of(RegionId(31)), Some(2));
    }
}
