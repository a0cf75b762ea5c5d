//! One-shot prediction benchmark: FGP, GP-DDF and GP-DDF+ on a fixed dataset,
//! reporting per-vehicle wall time and RMSE over the query regions.

use std::time::Instant;

use rand::seq::index::sample;
use serde::Serialize;

use crate::config::{Policy, RunConfig};
use crate::error::{Error, Result};
use crate::field::DemandField;
use crate::fusion::{
    aggregate, assign, collect_variances, ddf_baseline_marginals, ConsistentPredictive, LocalModel, LocalPredictor,
    SupportSet, VehicleId,
};
use crate::gp::{count_from_log, log_count, Dataset, ExactGp, Hyperparameters, Region};
use crate::sim::{stream_rng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: Policy,
    pub data_size: usize,
    /// Median over repetitions of the wall time one vehicle spends.
    pub per_vehicle_ms: f64,
    pub rmse: f64,
}

/// A fixed fusion problem: query set, support set and per-vehicle data.
#[derive(Clone, Debug)]
pub struct BenchProblem {
    pub hyp: Hyperparameters,
    pub query: Vec<Region>,
    pub truth: Vec<f64>,
    pub support: SupportSet,
    pub datasets: Vec<Dataset>,
}

impl BenchProblem {
    /// Draws the query set first, then the support set and the data from the
    /// remaining regions; vehicle `k` owns the data in the `k`-th column strip.
    pub fn new(cfg: &RunConfig, field: &DemandField, data_size: usize, query_size: usize) -> Result<Self> {
        let regions = field.graph.regions();
        let n = regions.len();
        if query_size + cfg.support_size + data_size > n {
            return Err(Error::Invalid(format!(
                "{query_size} query + {} support + {data_size} data regions exceed the {n} regions of the field",
                cfg.support_size
            )));
        }
        let hyp = cfg.hyperparameters(field.log_mean())?;
        let mut rng = stream_rng(cfg.seed, Stream::Bench);
        let mut order = sample(&mut rng, n, n).into_vec();
        let query_idx: Vec<usize> = order.drain(..query_size).collect();
        let support_idx: Vec<usize> = order.drain(..cfg.support_size).collect();
        let data_idx: Vec<usize> = order.drain(..data_size).collect();

        let support = SupportSet::new(support_idx.iter().map(|&i| regions[i].clone()).collect(), &hyp)?;
        let strip = field.cols.div_ceil(cfg.vehicles);
        let mut parts: Vec<(Vec<Region>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); cfg.vehicles];
        for &i in &data_idx {
            let col = regions[i].id.0 % field.cols;
            let k = (col / strip).min(cfg.vehicles - 1);
            parts[k].0.push(regions[i].clone());
            parts[k].1.push(log_count(field.truth[i]));
        }
        let datasets = parts.into_iter().map(|(r, v)| Dataset::new(r, v)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            hyp,
            query: query_idx.iter().map(|&i| regions[i].clone()).collect(),
            truth: query_idx.iter().map(|&i| field.truth[i]).collect(),
            support,
            datasets,
        })
    }

    fn rmse(&self, mean: &[f64], var: &[f64]) -> f64 {
        let se: f64 = self.truth.iter().zip(mean.iter().zip(var)).map(|(y, (m, v))| (y - count_from_log(*m, *v)).powi(2)).sum();
        (se / self.truth.len().max(1) as f64).sqrt()
    }

    /// Runs `policy` once, returning the per-vehicle time in ms and the RMSE.
    pub fn run(&self, policy: Policy) -> Result<(f64, f64)> {
        let hyp = &self.hyp;
        let k = self.datasets.len() as f64;
        match policy {
            Policy::Fgp => {
                let t = Instant::now();
                let gp = ExactGp::fit(&Dataset::concat(&self.datasets)?, hyp)?;
                let (mean, var) = gp.marginals(&self.query)?;
                let ms = t.elapsed().as_secs_f64() * 1e3;
                Ok((ms, self.rmse(mean.as_slice(), var.as_slice())))
            }
            Policy::GpDdf => {
                let t = Instant::now();
                let models = self.models()?;
                let local_ms = t.elapsed().as_secs_f64() * 1e3 / k;
                let t = Instant::now();
                let messages = self.messages(&models);
                let global = aggregate(&messages, &self.support)?;
                let proj = self.support.project(&self.query, hyp)?;
                let (mean, var) = ddf_baseline_marginals(&global, &proj, hyp);
                let ms = local_ms + t.elapsed().as_secs_f64() * 1e3;
                Ok((ms, self.rmse(mean.as_slice(), var.as_slice())))
            }
            Policy::GpDdfPlus => {
                let t = Instant::now();
                let models = self.models()?;
                let local_ms = t.elapsed().as_secs_f64() * 1e3 / k;
                let t = Instant::now();
                let messages = self.messages(&models);
                let global = aggregate(&messages, &self.support)?;
                let proj = self.support.project(&self.query, hyp)?;
                let shared_ms = t.elapsed().as_secs_f64() * 1e3;
                let t = Instant::now();
                let predictors = models
                    .iter()
                    .enumerate()
                    .map(|(i, m)| {
                        LocalPredictor::new(VehicleId::from_index(i), m, m.summary(), &global, &self.support, &proj, &self.query, hyp)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let predict_ms = t.elapsed().as_secs_f64() * 1e3 / k;
                let t = Instant::now();
                let reports: Vec<_> = predictors.iter().map(LocalPredictor::variance_report).collect();
                let tau = assign(&collect_variances(&reports, predictors.len())?)?;
                let consistent = ConsistentPredictive::new(&predictors, &tau, proj, &self.query, hyp)?;
                let ms = local_ms + shared_ms + predict_ms + t.elapsed().as_secs_f64() * 1e3;
                Ok((ms, self.rmse(consistent.mean.as_slice(), consistent.var.as_slice())))
            }
        }
    }

    fn models(&self) -> Result<Vec<LocalModel>> {
        self.datasets.iter().map(|d| LocalModel::new(d, &self.support, &self.hyp)).collect()
    }

    fn messages(&self, models: &[LocalModel]) -> Vec<(VehicleId, crate::fusion::LocalSummary)> {
        models.iter().enumerate().map(|(i, m)| (VehicleId::from_index(i), m.summary().clone())).collect()
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Benchmarks every method on one problem, taking the median time over `reps` runs.
pub fn predict_bench(problem: &BenchProblem, reps: usize) -> Result<Vec<BenchRow>> {
    let data_size = problem.datasets.iter().map(Dataset::len).sum();
    Policy::ALL
        .iter()
        .map(|&method| {
            let mut times = Vec::with_capacity(reps.max(1));
            let mut rmse = f64::NAN;
            for _ in 0..reps.max(1) {
                let (ms, r) = problem.run(method)?;
                times.push(ms);
                rmse = r;
            }
            Ok(BenchRow { method, data_size, per_vehicle_ms: median(times), rmse })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::synthetic_field;

    #[test]
    fn small_problem_partitions_data_by_strip() {
        let cfg = RunConfig { rows: 10, cols: 20, vehicles: 4, support_size: 8, ..RunConfig::default() };
        let field = synthetic_field(&cfg).unwrap();
        let p = BenchProblem::new(&cfg, &field, 60, 20).unwrap();
        assert_eq!(p.datasets.iter().map(Dataset::len).sum::<usize>(), 60);
        for (k, d) in p.datasets.iter().enumerate() {
            assert!(d.regions().iter().all(|r| (r.id.0 % 20) / 5 == k));
        }
        let rows = predict_bench(&p, 1).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.rmse.is_finite() && r.per_vehicle_ms >= 0.0));
        assert!(BenchProblem::new(&cfg, &field, 190, 20).is_err());
    }
}
