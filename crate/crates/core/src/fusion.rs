//! Decentralized data fusion over a common support set.
//!
//! Each vehicle compresses its local data into a [`LocalSummary`], the
//! summaries are summed into a [`GlobalSummary`], and every vehicle then
//! predicts with its own data plus the global summary ([`LocalPredictor`]).
//! Regions are assigned to the vehicle with the smallest predictive variance
//! and the per-vehicle predictions are stitched into one globally consistent
//! predictive distribution.
//!
//! Vehicles only ever read each other's *messages*: local summaries,
//! per-region variance scalars and `gamma` rows. Raw data stays local.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{cov_matrix, cov_symmetric, Dataset, GaussianPredictive, Hyperparameters, Region, RegionId};
use crate::linalg::{self, SpdFactor};

/// One-based vehicle identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VehicleId(pub usize);

impl VehicleId {
    /// Zero-based position of this vehicle in per-fleet vectors.
    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn from_index(i: usize) -> Self {
        Self(i + 1)
    }
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// The common support set `U` and its factorized prior covariance.
#[derive(Clone, Debug)]
pub struct SupportSet {
    regions: Vec<Region>,
    prior_cov: DMatrix<f64>,
    factor: SpdFactor,
    ids: HashSet<RegionId>,
}

impl SupportSet {
    pub fn new(regions: Vec<Region>, hyp: &Hyperparameters) -> Result<Self> {
        let mut ids = HashSet::with_capacity(regions.len());
        if let Some(dup) = regions.iter().find(|r| !ids.insert(r.id)) {
            return Err(Error::Invalid(format!("duplicate support region {:?}", dup.id)));
        }
        let prior_cov = cov_symmetric(&regions, hyp)?;
        let factor = SpdFactor::new(&prior_cov, hyp.signal_var)?;
        Ok(Self { regions, prior_cov, factor, ids })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn contains(&self, id: RegionId) -> bool {
        self.ids.contains(&id)
    }

    /// `Sigma_UU`
    pub fn prior_cov(&self) -> &DMatrix<f64> {
        &self.prior_cov
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    /// `Sigma_SU` and `Sigma_SU Sigma_UU^{-1}` for a query set.
    pub fn project(&self, query: &[Region], hyp: &Hyperparameters) -> Result<SupportProjection> {
        let cross = cov_matrix(query, &self.regions, hyp)?;
        let alpha = self.factor.solve(&cross.transpose()).transpose();
        Ok(SupportProjection { cross, alpha })
    }
}

/// Query-side quantities that depend only on the support set.
#[derive(Clone, Debug)]
pub struct SupportProjection {
    /// `Sigma_SU`, one row per query region.
    pub cross: DMatrix<f64>,
    /// `Sigma_SU Sigma_UU^{-1}`, one row per query region.
    pub alpha: DMatrix<f64>,
}

impl SupportProjection {
    /// `Sigma_ss'|U` for query positions `i`, `j` given the prior covariance `sigma_ij`.
    pub fn conditional(&self, i: usize, j: usize, sigma_ij: f64) -> f64 {
        sigma_ij - self.cross.row(i).dot(&self.alpha.row(j))
    }
}

/// `(z_U^k, Sigma_UU^k)`: the broadcast summary of one vehicle's data.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalSummary {
    pub vec: DVector<f64>,
    pub mat: DMatrix<f64>,
}

impl LocalSummary {
    pub fn zeros(support_len: usize) -> Self {
        Self { vec: DVector::zeros(support_len), mat: DMatrix::zeros(support_len, support_len) }
    }

    pub fn support_len(&self) -> usize {
        self.vec.len()
    }
}

/// `(z_U, Sigma_UU)` after folding in every vehicle's local summary.
#[derive(Clone, Debug)]
pub struct GlobalSummary {
    pub vec: DVector<f64>,
    pub mat: DMatrix<f64>,
    pub contributors: BTreeSet<VehicleId>,
    factor: SpdFactor,
    /// `Sigma_UU^{-1} z_U` with the aggregated matrix.
    weights: DVector<f64>,
}

impl GlobalSummary {
    fn from_parts(vec: DVector<f64>, mat: DMatrix<f64>, contributors: BTreeSet<VehicleId>, scale: f64) -> Result<Self> {
        let factor = SpdFactor::new(&mat, scale)?;
        let weights = factor.solve_vec(&vec);
        Ok(Self { vec, mat, contributors, factor, weights })
    }

    /// Rebuilds a summary from its transmitted parts, refactoring the matrix.
    pub fn from_wire(
        vec: DVector<f64>,
        mat: DMatrix<f64>,
        contributors: BTreeSet<VehicleId>,
        support: &SupportSet,
    ) -> Result<Self> {
        let n = support.len();
        if vec.len() != n || mat.shape() != (n, n) {
            return Err(Error::Dimension(format!("global summary of size {} for a support set of {n}", vec.len())));
        }
        Self::from_parts(vec, mat, contributors, support.prior_cov().diagonal().max())
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Combines two global summaries built from disjoint vehicle sets.
    pub fn merge(&self, other: &GlobalSummary, support: &SupportSet) -> Result<Self> {
        if let Some(v) = self.contributors.intersection(&other.contributors).next() {
            return Err(Error::Protocol(format!("vehicle {v} folded into both summaries")));
        }
        let vec = &self.vec + &other.vec;
        let mat = &self.mat + &other.mat - support.prior_cov();
        let contributors = self.contributors.union(&other.contributors).copied().collect();
        Self::from_parts(vec, mat, contributors, support.prior_cov().diagonal().max())
    }
}

/// A vehicle's factorized local state: its data conditioned on the support set.
#[derive(Clone, Debug)]
pub struct LocalModel {
    data: Dataset,
    /// Factor of `Sigma_{D_k D_k | U}`.
    factor: SpdFactor,
    /// `L^{-1} Sigma_{D_k U}`
    a: DMatrix<f64>,
    /// `L^{-1} (z_{D_k} - mu_{D_k})`
    b: DVector<f64>,
    summary: LocalSummary,
}

impl LocalModel {
    /// Points of `data` that lie in the support set are dropped with a warning.
    pub fn new(data: &Dataset, support: &SupportSet, hyp: &Hyperparameters) -> Result<Self> {
        let mut data = data.clone();
        let dropped = data.remove_where(|id| support.contains(id));
        if dropped > 0 {
            log::warn!("dropped {dropped} local observations that lie in the support set");
        }
        let sigma_ud = cov_matrix(support.regions(), data.regions(), hyp)?;
        let w = support.factor().half_solve(&sigma_ud);
        let mut cond = cov_symmetric(data.regions(), hyp)?;
        cond -= w.transpose() * &w;
        linalg::symmetrize(&mut cond);
        let factor = SpdFactor::new(&cond, hyp.signal_var)?;
        let a = factor.half_solve(&sigma_ud.transpose());
        let b = factor.half_solve_vec(&data.residuals(hyp.prior_mean));
        let mut mat = a.transpose() * &a;
        linalg::symmetrize(&mut mat);
        let summary = LocalSummary { vec: a.transpose() * &b, mat };
        Ok(Self { data, factor, a, b, summary })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn summary(&self) -> &LocalSummary {
        &self.summary
    }

    /// Factor of the support-conditional data covariance.
    pub fn conditional_factor(&self) -> &SpdFactor {
        &self.factor
    }

    /// `L^{-1} Sigma_{D_k S}` for a query set.
    pub fn whiten(&self, query: &[Region], hyp: &Hyperparameters) -> Result<DMatrix<f64>> {
        Ok(self.factor.half_solve(&cov_matrix(self.data.regions(), query, hyp)?))
    }
}

/// Local summary of one vehicle's data.
pub fn local_summary(data_k: &Dataset, support: &SupportSet, hyp: &Hyperparameters) -> Result<LocalSummary> {
    Ok(LocalModel::new(data_k, support, hyp)?.summary)
}

/// Folds every vehicle's local summary into the global summary.
///
/// Messages are sorted by vehicle id before summation so the result does
/// not depend on arrival order.
pub fn aggregate(locals: &[(VehicleId, LocalSummary)], support: &SupportSet) -> Result<GlobalSummary> {
    let mut ordered: Vec<&(VehicleId, LocalSummary)> = locals.iter().collect();
    ordered.sort_by_key(|(id, _)| *id);
    let n = support.len();
    let mut vec = DVector::zeros(n);
    let mut mat = support.prior_cov().clone();
    let mut contributors = BTreeSet::new();
    for (id, s) in ordered {
        if !contributors.insert(*id) {
            return Err(Error::Protocol(format!("duplicate local summary from vehicle {id}")));
        }
        if s.vec.len() != n || s.mat.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "summary from {id} has support size {}, expected {n}",
                s.vec.len()
            )));
        }
        vec += &s.vec;
        mat += &s.mat;
    }
    GlobalSummary::from_parts(vec, mat, contributors, support.prior_cov().diagonal().max())
}

/// Per-vehicle predictive over a query set, kept in factored form so that
/// covariance entries and `gamma` rows can be served on request.
#[derive(Clone, Debug)]
pub struct LocalPredictor {
    pub owner: VehicleId,
    pub query: Vec<RegionId>,
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
    /// Rows `gamma_sU^k`.
    pub gamma: DMatrix<f64>,
    /// Rows `Sigma_UU^{-1} gamma_Us^k` using the aggregated matrix.
    gamma_solved: DMatrix<f64>,
    /// Rows `Sigma_sU^k` (local-data term).
    sdot_su: DMatrix<f64>,
}

impl LocalPredictor {
    /// Builds vehicle `owner`'s predictor for `query`. `summary` must be the
    /// summary this vehicle broadcast (it is what `global` contains).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        owner: VehicleId,
        model: &LocalModel,
        summary: &LocalSummary,
        global: &GlobalSummary,
        support: &SupportSet,
        proj: &SupportProjection,
        query: &[Region],
        hyp: &Hyperparameters,
    ) -> Result<Self> {
        if !global.contributors.contains(&owner) {
            return Err(Error::Protocol(format!("global summary does not include vehicle {owner}")));
        }
        let u = support.len();
        if summary.support_len() != u || proj.cross.shape() != (query.len(), u) {
            return Err(Error::Dimension("support size differs between summary, projection and support set".into()));
        }
        let b = model.whiten(query, hyp)?;
        let zdot_s = b.transpose() * &model.b;
        let sdot_su = b.transpose() * &model.a;
        let gamma = &proj.cross + &proj.alpha * &summary.mat - &sdot_su;
        let gamma_solved = global.factor.solve(&gamma.transpose()).transpose();

        let n = query.len();
        let mean = DVector::from_fn(n, |i, _| {
            hyp.prior_mean + gamma.row(i).dot(&global.weights.transpose()) - proj.alpha.row(i).dot(&summary.vec.transpose())
                + zdot_s[i]
        });
        let prior = hyp.prior_var();
        let var = DVector::from_fn(n, |i, _| {
            prior - gamma.row(i).dot(&proj.alpha.row(i))
                + proj.alpha.row(i).dot(&sdot_su.row(i))
                + gamma.row(i).dot(&gamma_solved.row(i))
                - b.column(i).norm_squared()
        });
        Ok(Self { owner, query: query.iter().map(|r| r.id).collect(), mean, var, gamma, gamma_solved, sdot_su })
    }

    /// Message with this vehicle's predictive variances, for the assignment.
    pub fn variance_report(&self) -> VarianceReport {
        VarianceReport { from: self.owner, regions: self.query.clone(), variances: self.var.iter().copied().collect() }
    }

    /// Materializes the full predictive over the query set.
    pub fn to_vehicle_predictive(
        &self,
        model: &LocalModel,
        query: &[Region],
        proj: &SupportProjection,
        hyp: &Hyperparameters,
    ) -> Result<VehiclePredictive> {
        let b = model.whiten(query, hyp)?;
        let mut cov = cov_symmetric(query, hyp)?;
        cov -= &self.gamma * proj.alpha.transpose();
        cov += &proj.alpha * self.sdot_su.transpose();
        cov += &self.gamma * self.gamma_solved.transpose();
        cov -= b.transpose() * &b;
        linalg::symmetrize(&mut cov);
        Ok(VehiclePredictive {
            owner: self.owner,
            query: query.to_vec(),
            mean: self.mean.clone(),
            cov,
            gamma: self.gamma.clone(),
        })
    }
}

/// Full predictive of one vehicle (its possibly inconsistent local view).
#[derive(Clone, Debug)]
pub struct VehiclePredictive {
    pub owner: VehicleId,
    pub query: Vec<Region>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// One `gamma_sU^k` row per query region.
    pub gamma: DMatrix<f64>,
}

/// Vehicle `k`'s predictive over `query` from its data, its local summary and the global summary.
#[allow(clippy::too_many_arguments)]
pub fn ddf_plus_local(
    k: VehicleId,
    data_k: &Dataset,
    local_k: &LocalSummary,
    global: &GlobalSummary,
    query: &[Region],
    support: &SupportSet,
    hyp: &Hyperparameters,
) -> Result<VehiclePredictive> {
    let model = LocalModel::new(data_k, support, hyp)?;
    let proj = support.project(query, hyp)?;
    LocalPredictor::new(k, &model, local_k, global, support, &proj, query, hyp)?.to_vehicle_predictive(&model, query, &proj, hyp)
}

/// Per-region predictive variances broadcast by one vehicle.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceReport {
    pub from: VehicleId,
    pub regions: Vec<RegionId>,
    pub variances: Vec<f64>,
}

/// Regroups variance reports from `vehicles` vehicles into per-region vectors.
pub fn collect_variances(reports: &[VarianceReport], vehicles: usize) -> Result<BTreeMap<RegionId, Vec<f64>>> {
    let mut table: BTreeMap<RegionId, Vec<f64>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for rep in reports {
        if rep.from.0 == 0 || rep.from.0 > vehicles {
            return Err(Error::Protocol(format!("report from unknown vehicle {}", rep.from)));
        }
        if !seen.insert(rep.from) {
            return Err(Error::Protocol(format!("duplicate variance report from {}", rep.from)));
        }
        if rep.regions.len() != rep.variances.len() {
            return Err(Error::Dimension(format!("malformed variance report from {}", rep.from)));
        }
        for (s, v) in rep.regions.iter().zip(&rep.variances) {
            table.entry(*s).or_insert_with(|| vec![f64::NAN; vehicles])[rep.from.index()] = *v;
        }
    }
    Ok(table)
}

/// Region-to-vehicle assignment and the variances it was decided from.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub map: BTreeMap<RegionId, VehicleId>,
    pub basis_variances: BTreeMap<RegionId, Vec<f64>>,
}

impl Assignment {
    pub fn of(&self, s: RegionId) -> Option<VehicleId> {
        self.map.get(&s).copied()
    }

    /// Assigns every region to one vehicle, bypassing the variance rule.
    pub fn uniform(regions: impl IntoIterator<Item = RegionId>, to: VehicleId) -> Self {
        Self { map: regions.into_iter().map(|s| (s, to)).collect(), basis_variances: BTreeMap::new() }
    }
}

/// `tau_s = argmin_k sigma_ss^k`; ties go to the smallest vehicle id.
pub fn assign(per_vehicle_vars: &BTreeMap<RegionId, Vec<f64>>) -> Result<Assignment> {
    let mut map = BTreeMap::new();
    for (s, vars) in per_vehicle_vars {
        if vars.is_empty() {
            return Err(Error::Protocol(format!("no variance reports for region {s:?}")));
        }
        if let Some(k) = vars.iter().position(|v| v.is_nan()) {
            return Err(Error::Protocol(format!(
                "vehicle {} did not report a variance for region {s:?}",
                VehicleId::from_index(k)
            )));
        }
        let mut best = 0;
        for (k, v) in vars.iter().enumerate().skip(1) {
            if *v < vars[best] {
                best = k;
            }
        }
        map.insert(*s, VehicleId::from_index(best));
    }
    Ok(Assignment { map, basis_variances: per_vehicle_vars.clone() })
}

/// Globally consistent predictive assembled from per-vehicle predictives.
///
/// Pure function of its inputs: every vehicle assembling it obtains the same result.
pub fn ddf_plus_consistent(
    assignment: &Assignment,
    vehicle_preds: &[VehiclePredictive],
    global: &GlobalSummary,
    support: &SupportSet,
    hyp: &Hyperparameters,
) -> Result<GaussianPredictive> {
    let first = vehicle_preds
        .first()
        .ok_or_else(|| Error::Protocol("no vehicle predictives supplied".into()))?;
    let query = &first.query;
    let mut by_owner: BTreeMap<VehicleId, &VehiclePredictive> = BTreeMap::new();
    for p in vehicle_preds {
        if p.query.len() != query.len() || p.query.iter().zip(query).any(|(a, b)| a.id != b.id) {
            return Err(Error::Protocol(format!("vehicle {} predicted a different query set", p.owner)));
        }
        if by_owner.insert(p.owner, p).is_some() {
            return Err(Error::Protocol(format!("duplicate predictive from {}", p.owner)));
        }
    }
    let tau: Vec<&VehiclePredictive> = query
        .iter()
        .map(|s| {
            let k = assignment
                .of(s.id)
                .ok_or_else(|| Error::Protocol(format!("region {:?} has no assigned vehicle", s.id)))?;
            by_owner
                .get(&k)
                .copied()
                .ok_or_else(|| Error::Protocol(format!("missing gamma row for region {:?} from {k}", s.id)))
        })
        .collect::<Result<_>>()?;

    let proj = support.project(query, hyp)?;
    let solved: BTreeMap<VehicleId, DMatrix<f64>> = by_owner
        .iter()
        .map(|(k, p)| (*k, global.factor.solve(&p.gamma.transpose())))
        .collect();
    let prior = cov_symmetric(query, hyp)?;
    let n = query.len();
    let mean = DVector::from_fn(n, |i, _| tau[i].mean[i]);
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = if tau[i].owner == tau[j].owner {
                tau[i].cov[(i, j)]
            } else {
                proj.conditional(i, j, prior[(i, j)])
                    + tau[i].gamma.row(i).dot(&solved[&tau[j].owner].column(j).transpose())
            };
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(GaussianPredictive { query: query.iter().map(|r| r.id).collect(), mean, cov })
}

/// Consistent predictive assembled from per-vehicle [`LocalPredictor`]s that
/// all cover the same query set. Only the rows of each region's assigned
/// vehicle are kept; joint covariances over any subset are served lazily.
#[derive(Clone, Debug)]
pub struct ConsistentPredictive {
    query: Vec<Region>,
    proj: SupportProjection,
    hyp: Hyperparameters,
    owner_of: Vec<usize>,
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
    gamma: DMatrix<f64>,
    gamma_solved: DMatrix<f64>,
    sdot_su: DMatrix<f64>,
}

impl ConsistentPredictive {
    /// `locals[k]` must belong to vehicle `k + 1`.
    pub fn new(
        locals: &[LocalPredictor],
        assignment: &Assignment,
        proj: SupportProjection,
        query: &[Region],
        hyp: &Hyperparameters,
    ) -> Result<Self> {
        for (k, l) in locals.iter().enumerate() {
            if l.owner.index() != k || l.query.len() != query.len() {
                return Err(Error::Protocol(format!("local predictor {} out of place", l.owner)));
            }
        }
        let owner_of: Vec<usize> = query
            .iter()
            .map(|s| match assignment.of(s.id) {
                Some(k) if k.0 >= 1 && k.index() < locals.len() => Ok(k.index()),
                _ => Err(Error::Protocol(format!("region {:?} has no valid assignment", s.id))),
            })
            .collect::<Result<_>>()?;
        let n = query.len();
        let u = proj.cross.ncols();
        let pick = |f: &dyn Fn(&LocalPredictor) -> &DMatrix<f64>| {
            DMatrix::from_fn(n, u, |i, c| f(&locals[owner_of[i]])[(i, c)])
        };
        let gamma = pick(&|l| &l.gamma);
        let gamma_solved = pick(&|l| &l.gamma_solved);
        let sdot_su = pick(&|l| &l.sdot_su);
        let mean = DVector::from_fn(n, |i, _| locals[owner_of[i]].mean[i]);
        let var = DVector::from_fn(n, |i, _| locals[owner_of[i]].var[i]);
        Ok(Self { query: query.to_vec(), proj, hyp: hyp.clone(), owner_of, mean, var, gamma, gamma_solved, sdot_su })
    }

    pub fn len(&self) -> usize {
        self.query.len()
    }

    pub fn is_empty(&self) -> bool {
        self.query.is_empty()
    }

    pub fn query(&self) -> &[Region] {
        &self.query
    }

    /// Assigned vehicle of the region at query position `i`.
    pub fn owner(&self, i: usize) -> VehicleId {
        VehicleId::from_index(self.owner_of[i])
    }

    /// Mean vector and covariance over the given query positions.
    /// `models[k]` must be vehicle `k + 1`'s local model.
    pub fn joint(&self, models: &[LocalModel], positions: &[usize]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let regions: Vec<Region> = positions.iter().map(|&i| self.query[i].clone()).collect();
        let prior = cov_symmetric(&regions, &self.hyp)?;
        let n = positions.len();

        // whitened local cross-covariances, only for the vehicles involved
        let mut b: BTreeMap<usize, (Vec<usize>, DMatrix<f64>)> = BTreeMap::new();
        for (a, &i) in positions.iter().enumerate() {
            b.entry(self.owner_of[i]).or_insert_with(|| (Vec::new(), DMatrix::zeros(0, 0))).0.push(a);
        }
        for (k, (members, m)) in b.iter_mut() {
            let model = models
                .get(*k)
                .ok_or_else(|| Error::Protocol(format!("no local model for vehicle {}", VehicleId::from_index(*k))))?;
            let sub: Vec<Region> = members.iter().map(|&a| regions[a].clone()).collect();
            *m = model.whiten(&sub, &self.hyp)?;
        }
        let mut slot = vec![0usize; n];
        for (members, _) in b.values() {
            for (c, &a) in members.iter().enumerate() {
                slot[a] = c;
            }
        }

        let mut cov = DMatrix::zeros(n, n);
        for a in 0..n {
            let i = positions[a];
            let ki = self.owner_of[i];
            for c in a..n {
                let j = positions[c];
                let kj = self.owner_of[j];
                let mut v = self.proj.conditional(i, j, prior[(a, c)])
                    + self.gamma.row(i).dot(&self.gamma_solved.row(j));
                if ki == kj {
                    let bk = &b[&ki].1;
                    v += self.proj.cross.row(i).dot(&self.proj.alpha.row(j)) - self.gamma.row(i).dot(&self.proj.alpha.row(j))
                        + self.proj.alpha.row(i).dot(&self.sdot_su.row(j))
                        - bk.column(slot[a]).dot(&bk.column(slot[c]));
                }
                cov[(a, c)] = v;
                cov[(c, a)] = v;
            }
        }
        let mean = DVector::from_fn(n, |a, _| self.mean[positions[a]]);
        Ok((mean, cov))
    }
}
/// Summary-only predictor (the GP-DDF baseline): every query region is
/// treated as conditionally independent of all data given the support set.
pub fn ddf_baseline(
    global: &GlobalSummary,
    query: &[Region],
    support: &SupportSet,
    hyp: &Hyperparameters,
) -> Result<GaussianPredictive> {
    let proj = support.project(query, hyp)?;
    let mean = DVector::from_fn(query.len(), |i, _| hyp.prior_mean + proj.cross.row(i).dot(&global.weights.transpose()));
    let mut cov = cov_symmetric(query, hyp)?;
    cov -= &proj.cross * proj.alpha.transpose();
    cov += &proj.cross * global.factor.solve(&proj.cross.transpose());
    linalg::symmetrize(&mut cov);
    Ok(GaussianPredictive { query: query.iter().map(|r| r.id).collect(), mean, cov })
}

/// Means and variances of [`ddf_baseline`] without forming the full covariance.
pub fn ddf_baseline_marginals(
    global: &GlobalSummary,
    proj: &SupportProjection,
    hyp: &Hyperparameters,
) -> (DVector<f64>, DVector<f64>) {
    let n = proj.cross.nrows();
    let solved = global.factor.solve(&proj.cross.transpose());
    let mean = DVector::from_fn(n, |i, _| hyp.prior_mean + proj.cross.row(i).dot(&global.weights.transpose()));
    let prior = hyp.prior_var();
    let var = DVector::from_fn(n, |i, _| {
        prior - proj.cross.row(i).dot(&proj.alpha.row(i)) + proj.cross.row(i).dot(&solved.column(i).transpose())
    });
    (mean, var)
}
