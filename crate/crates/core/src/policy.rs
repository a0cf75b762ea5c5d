//! One fusion round per simulation step for each of the three data-fusion
//! methods. A round predicts every not-yet-observed region and can serve
//! joint predictives over small region subsets for walk planning.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::config::Policy;
use crate::error::{Error, Result};
use crate::fusion::{
    aggregate, assign, collect_variances, ConsistentPredictive, GlobalSummary, LocalModel, LocalPredictor,
    SupportProjection, SupportSet, VehicleId,
};
use crate::gp::{cov_symmetric, Dataset, ExactGp, Hyperparameters, Region, RegionId};

/// Wall time spent in a round, split into work every vehicle repeats
/// (or the central server does) and work private to each vehicle.
#[derive(Clone, Debug, Default)]
pub struct RoundTiming {
    pub shared_ms: f64,
    pub per_vehicle_ms: Vec<f64>,
}

impl RoundTiming {
    /// Average per-vehicle cost of the round.
    pub fn per_vehicle(&self) -> f64 {
        let n = self.per_vehicle_ms.len().max(1) as f64;
        self.shared_ms + self.per_vehicle_ms.iter().sum::<f64>() / n
    }
}

enum Inner {
    Fgp {
        /// `L^{-1} Sigma_DS`
        white: DMatrix<f64>,
    },
    Ddf {
        proj: SupportProjection,
        /// `Sigma_UU^{-1} Sigma_US` with the aggregated matrix.
        solved: DMatrix<f64>,
    },
    DdfPlus {
        models: Vec<LocalModel>,
        consistent: ConsistentPredictive,
    },
}

pub struct Round {
    query: Vec<Region>,
    pos: HashMap<RegionId, usize>,
    hyp: Hyperparameters,
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
    pub timing: RoundTiming,
    inner: Inner,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn build_models(datasets: &[Dataset], support: &SupportSet, hyp: &Hyperparameters) -> Result<(Vec<LocalModel>, Vec<f64>)> {
    let built: Vec<(Result<LocalModel>, f64)> = datasets
        .par_iter()
        .map(|d| {
            let t = Instant::now();
            let m = LocalModel::new(d, support, hyp);
            (m, ms(t))
        })
        .collect();
    let mut models = Vec::with_capacity(built.len());
    let mut times = Vec::with_capacity(built.len());
    for (m, t) in built {
        models.push(m?);
        times.push(t);
    }
    Ok((models, times))
}

fn global_summary(models: &[LocalModel], support: &SupportSet) -> Result<GlobalSummary> {
    let messages: Vec<_> = models
        .iter()
        .enumerate()
        .map(|(i, m)| (VehicleId::from_index(i), m.summary().clone()))
        .collect();
    aggregate(&messages, support)
}

impl Round {
    /// Runs the fusion method over `datasets` (one per vehicle) and predicts `query`.
    pub fn build(
        policy: Policy,
        datasets: &[Dataset],
        support: &SupportSet,
        query: Vec<Region>,
        hyp: &Hyperparameters,
    ) -> Result<Self> {
        if datasets.is_empty() {
            return Err(Error::Invalid("a fusion round needs at least one vehicle".into()));
        }
        let pos = query.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
        let (inner, mean, var, timing) = match policy {
            Policy::Fgp => {
                let t = Instant::now();
                let all = Dataset::concat(datasets)?;
                let gp = ExactGp::fit(&all, hyp)?;
                let white = gp.whiten(&query)?;
                let (mean, var) = gp.marginals_from_whitened(&white);
                let timing = RoundTiming { shared_ms: ms(t), per_vehicle_ms: vec![0.0; datasets.len()] };
                (Inner::Fgp { white }, mean, var, timing)
            }
            Policy::GpDdf => {
                let (models, mut per_vehicle_ms) = build_models(datasets, support, hyp)?;
                let t = Instant::now();
                let global = global_summary(&models, support)?;
                let shared_ms = ms(t);
                let t = Instant::now();
                let proj = support.project(&query, hyp)?;
                let solved = global.factor().solve(&proj.cross.transpose());
                let n = query.len();
                let mean = DVector::from_fn(n, |i, _| hyp.prior_mean + proj.cross.row(i).dot(&global.weights().transpose()));
                let prior = hyp.prior_var();
                let var = DVector::from_fn(n, |i, _| {
                    prior - proj.cross.row(i).dot(&proj.alpha.row(i)) + proj.cross.row(i).dot(&solved.column(i).transpose())
                });
                // every vehicle evaluates the same summary-only predictor
                let predict_ms = ms(t);
                per_vehicle_ms.iter_mut().for_each(|v| *v += predict_ms);
                (Inner::Ddf { proj, solved }, mean, var, RoundTiming { shared_ms, per_vehicle_ms })
            }
            Policy::GpDdfPlus => {
                let (models, mut per_vehicle_ms) = build_models(datasets, support, hyp)?;
                let t = Instant::now();
                let global = global_summary(&models, support)?;
                let proj = support.project(&query, hyp)?;
                let mut shared_ms = ms(t);
                let locals: Vec<(Result<LocalPredictor>, f64)> = models
                    .par_iter()
                    .enumerate()
                    .map(|(i, m)| {
                        let t = Instant::now();
                        let l = LocalPredictor::new(VehicleId::from_index(i), m, m.summary(), &global, support, &proj, &query, hyp);
                        (l, ms(t))
                    })
                    .collect();
                let mut predictors = Vec::with_capacity(locals.len());
                for (k, (l, dt)) in locals.into_iter().enumerate() {
                    predictors.push(l?);
                    per_vehicle_ms[k] += dt;
                }
                let t = Instant::now();
                let reports: Vec<_> = predictors.iter().map(LocalPredictor::variance_report).collect();
                let tau = assign(&collect_variances(&reports, predictors.len())?)?;
                let consistent = ConsistentPredictive::new(&predictors, &tau, proj, &query, hyp)?;
                shared_ms += ms(t);
                let (mean, var) = (consistent.mean.clone(), consistent.var.clone());
                (Inner::DdfPlus { models, consistent }, mean, var, RoundTiming { shared_ms, per_vehicle_ms })
            }
        };
        Ok(Self { query, pos, hyp: hyp.clone(), mean, var, timing, inner })
    }

    pub fn query(&self) -> &[Region] {
        &self.query
    }

    pub fn position(&self, id: RegionId) -> Option<usize> {
        self.pos.get(&id).copied()
    }

    /// Vehicle responsible for a region under the consistent predictor, if any.
    pub fn owner(&self, id: RegionId) -> Option<VehicleId> {
        match &self.inner {
            Inner::DdfPlus { consistent, .. } => self.position(id).map(|i| consistent.owner(i)),
            _ => None,
        }
    }

    /// Joint predictive over the given query positions.
    pub fn joint(&self, positions: &[usize]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = positions.len();
        let regions: Vec<Region> = positions.iter().map(|&i| self.query[i].clone()).collect();
        match &self.inner {
            Inner::Fgp { white } => {
                let cols: Vec<_> = positions.iter().map(|&i| white.column(i)).collect();
                let mut cov = cov_symmetric(&regions, &self.hyp)?;
                for a in 0..n {
                    for c in a..n {
                        let v = cov[(a, c)] - cols[a].dot(&cols[c]);
                        cov[(a, c)] = v;
                        cov[(c, a)] = v;
                    }
                }
                Ok((DVector::from_fn(n, |a, _| self.mean[positions[a]]), cov))
            }
            Inner::Ddf { proj, solved } => {
                let mut cov = cov_symmetric(&regions, &self.hyp)?;
                for a in 0..n {
                    let i = positions[a];
                    for c in a..n {
                        let j = positions[c];
                        let v = proj.conditional(i, j, cov[(a, c)]) + proj.cross.row(i).dot(&solved.column(j).transpose());
                        cov[(a, c)] = v;
                        cov[(c, a)] = v;
                    }
                }
                Ok((DVector::from_fn(n, |a, _| self.mean[positions[a]]), cov))
            }
            Inner::DdfPlus { models, consistent } => consistent.joint(models, positions),
        }
    }
}
