//! Random small instances and the decentralized-vs-centralized checks run on them.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fusion::{
    aggregate, assign, collect_variances, ddf_baseline, ddf_plus_consistent, Assignment, ConsistentPredictive, GlobalSummary, LocalModel,
    LocalPredictor, SupportSet, VehicleId,
};
use crate::gp::{gp_posterior, Dataset, Hyperparameters, Region, RegionId};
use crate::linalg;
use crate::pic::{pic_predict, pitc_predict, woodbury_inverse_check, PicOperator};

/// Size ranges for generated instances (all bounds inclusive).
#[derive(Clone, Debug)]
pub struct FuzzShape {
    pub vehicles: (usize, usize),
    pub block_size: (usize, usize),
    pub support_size: (usize, usize),
    pub query_size: (usize, usize),
}

impl Default for FuzzShape {
    fn default() -> Self {
        Self { vehicles: (2, 4), block_size: (0, 15), support_size: (3, 12), query_size: (1, 8) }
    }
}

impl FuzzShape {
    pub fn single_vehicle() -> Self {
        Self { vehicles: (1, 1), block_size: (1, 15), ..Self::default() }
    }
}

/// A generated instance: hyperparameters, support set, per-vehicle data,
/// query regions and an arbitrary assignment of the query regions.
#[derive(Clone, Debug)]
pub struct FuzzInstance {
    pub hyp: Hyperparameters,
    pub support: SupportSet,
    pub blocks: Vec<Dataset>,
    pub query: Vec<Region>,
    pub tau: Assignment,
}

fn random_region(rng: &mut ChaCha8Rng, id: usize) -> Result<Region> {
    Region::new(id, vec![rng.random::<f64>(), rng.random::<f64>()])
}

pub fn generate(seed: u64, shape: &FuzzShape) -> Result<FuzzInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signal_var = rng.random_range(0.5..=2.0);
    let hyp = Hyperparameters::new(
        signal_var,
        signal_var * rng.random_range(0.05..=0.3),
        vec![rng.random_range(0.2..=0.6), rng.random_range(0.2..=0.6)],
        rng.random_range(-1.0..=1.0),
    )?;
    let mut next_id = 0usize;
    let mut fresh = |rng: &mut ChaCha8Rng, n: usize| -> Result<Vec<Region>> {
        let out = (next_id..next_id + n).map(|id| random_region(rng, id)).collect();
        next_id += n;
        out
    };

    let u = rng.random_range(shape.support_size.0..=shape.support_size.1);
    let support = SupportSet::new(fresh(&mut rng, u)?, &hyp)?;
    let k = rng.random_range(shape.vehicles.0..=shape.vehicles.1);
    let mut blocks = Vec::with_capacity(k);
    for _ in 0..k {
        let n = rng.random_range(shape.block_size.0..=shape.block_size.1);
        let regions = fresh(&mut rng, n)?;
        let values = (0..n).map(|_| hyp.prior_mean + rng.random_range(-2.0..=2.0)).collect();
        blocks.push(Dataset::new(regions, values)?);
    }
    let s = rng.random_range(shape.query_size.0..=shape.query_size.1);
    let query = fresh(&mut rng, s)?;
    let tau = Assignment {
        map: query.iter().map(|r| (r.id, VehicleId(rng.random_range(1..=k)))).collect(),
        basis_variances: Default::default(),
    };
    Ok(FuzzInstance { hyp, support, blocks, query, tau })
}

/// Residuals of one instance. Relative errors use the signal variance as floor.
#[derive(Clone, Debug, Default)]
pub struct InstanceReport {
    /// consistent decentralized predictive vs PIC, means
    pub mean_err: f64,
    /// consistent decentralized predictive vs PIC, covariances
    pub cov_err: f64,
    /// aggregated summary matrix vs the centrally computed one
    pub summary_matrix_err: f64,
    /// Woodbury residual divided by `1 / noise_var`
    pub woodbury_err: f64,
    /// summary-only baseline vs PITC
    pub baseline_err: f64,
    /// lazy assembler vs materialized assembler (absolute)
    pub assembler_err: f64,
    /// `max_s (min_k var_k(s) - baseline var(s))`, positive when the baseline is tighter
    pub variance_excess: f64,
    /// smallest eigenvalue of the PIC covariance relative to its trace scale
    pub pic_min_eig: f64,
}

/// Runs the full message-passing protocol and compares it against the centralized operators.
pub fn check_instance(inst: &FuzzInstance) -> Result<InstanceReport> {
    let hyp = &inst.hyp;
    let floor = hyp.signal_var;
    let models: Vec<LocalModel> = inst
        .blocks
        .iter()
        .map(|b| LocalModel::new(b, &inst.support, hyp))
        .collect::<Result<_>>()?;
    let messages: Vec<_> = models
        .iter()
        .enumerate()
        .map(|(i, m)| (VehicleId::from_index(i), m.summary().clone()))
        .collect();
    let global = aggregate(&messages, &inst.support)?;
    let proj = inst.support.project(&inst.query, hyp)?;
    let locals: Vec<LocalPredictor> = models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            LocalPredictor::new(VehicleId::from_index(i), m, m.summary(), &global, &inst.support, &proj, &inst.query, hyp)
        })
        .collect::<Result<_>>()?;
    let preds = locals
        .iter()
        .zip(&models)
        .map(|(l, m)| l.to_vehicle_predictive(m, &inst.query, &proj, hyp))
        .collect::<Result<Vec<_>>>()?;
    let consistent = ddf_plus_consistent(&inst.tau, &preds, &global, &inst.support, hyp)?;

    let op = PicOperator::new(inst.blocks.clone(), &inst.support, hyp)?;
    let z = DVector::from_column_slice(op.data().values());
    let pic = pic_predict(&op, &z, &inst.query, &inst.tau, hyp)?;
    let pitc = pitc_predict(&op, &z, &inst.query, hyp)?;
    let baseline = ddf_baseline(&global, &inst.query, &inst.support, hyp)?;

    let view = ConsistentPredictive::new(&locals, &inst.tau, proj, &inst.query, hyp)?;
    let all: Vec<usize> = (0..inst.query.len()).collect();
    let (lazy_mean, lazy_cov) = view.joint(&models, &all)?;

    let reports: Vec<_> = locals.iter().map(|l| l.variance_report()).collect();
    let table = collect_variances(&reports, locals.len())?;
    let tau_star = assign(&table)?;
    let base_var = baseline.variances();
    let variance_excess = inst
        .query
        .iter()
        .enumerate()
        .map(|(i, s)| table[&s.id][tau_star.of(s.id).expect("assigned").index()] - base_var[i])
        .fold(f64::NEG_INFINITY, f64::max);

    // arrival order, incremental merging and the assembling vehicle must not matter
    let mut order_err: f64 = 0.0;
    let mut summary_gap = |g: &GlobalSummary| {
        order_err = order_err.max(linalg::max_abs(&(&g.mat - &global.mat))).max((&g.vec - &global.vec).amax());
    };
    let reversed: Vec<_> = messages.iter().rev().cloned().collect();
    summary_gap(&aggregate(&reversed, &inst.support)?);
    let mid = messages.len() / 2;
    let mut rotated = messages[mid..].to_vec();
    rotated.extend_from_slice(&messages[..mid]);
    summary_gap(&aggregate(&rotated, &inst.support)?);
    let halves = aggregate(&messages[..mid], &inst.support)?.merge(&aggregate(&messages[mid..], &inst.support)?, &inst.support)?;
    summary_gap(&halves);
    let permuted: Vec<_> = preds.iter().rev().cloned().collect();
    let reassembled = ddf_plus_consistent(&inst.tau, &permuted, &global, &inst.support, hyp)?;
    order_err = order_err
        .max(linalg::max_abs(&(&reassembled.cov - &consistent.cov)))
        .max((&reassembled.mean - &consistent.mean).amax());

    let trace_scale = pic.cov.trace().abs().max(floor);
    Ok(InstanceReport {
        mean_err: linalg::max_rel_err_vec(&consistent.mean, &pic.mean, floor),
        cov_err: linalg::max_rel_err(&consistent.cov, &pic.cov, floor),
        summary_matrix_err: linalg::max_rel_err(&global.mat, op.sigma_ddot(), floor),
        woodbury_err: woodbury_inverse_check(&op)? * hyp.noise_var,
        baseline_err: linalg::max_rel_err(&baseline.cov, &pitc.cov, floor)
            .max(linalg::max_rel_err_vec(&baseline.mean, &pitc.mean, floor)),
        assembler_err: linalg::max_abs(&(lazy_cov - &consistent.cov))
            .max((lazy_mean - &consistent.mean).amax())
            .max(order_err),
        variance_excess,
        pic_min_eig: pic.min_eigenvalue() / trace_scale,
    })
}

/// Single-vehicle collapse: consistent decentralized vs PIC vs exact GP.
pub fn check_single_vehicle(inst: &FuzzInstance) -> Result<f64> {
    let hyp = &inst.hyp;
    let floor = hyp.signal_var;
    let report = check_instance(inst)?;
    let data = Dataset::concat(&inst.blocks)?;
    let exact = gp_posterior(&data, &inst.query, hyp)?;
    let op = PicOperator::new(inst.blocks.clone(), &inst.support, hyp)?;
    let z = DVector::from_column_slice(op.data().values());
    let pic = pic_predict(&op, &z, &inst.query, &inst.tau, hyp)?;
    Ok(report
        .mean_err
        .max(report.cov_err)
        .max(linalg::max_rel_err(&pic.cov, &exact.cov, floor))
        .max(linalg::max_rel_err_vec(&pic.mean, &exact.mean, floor)))
}

/// Per-check maxima over a corpus.
#[derive(Clone, Debug, Default)]
pub struct CorpusReport {
    pub instances: usize,
    pub mean_err: f64,
    pub cov_err: f64,
    pub summary_matrix_err: f64,
    pub woodbury_err: f64,
    pub baseline_err: f64,
    pub assembler_err: f64,
    pub variance_excess: f64,
    pub pic_min_eig: f64,
    pub single_vehicle_err: f64,
}

/// Tolerance per check, as `(name, value, tolerance)`.
pub const TOLERANCES: [(&str, f64); 7] = [
    ("consistent vs PIC (mean)", 1e-8),
    ("consistent vs PIC (cov)", 1e-8),
    ("summary matrix identity", 1e-9),
    ("Woodbury residual", 1e-8),
    ("baseline vs PITC", 1e-8),
    ("single vehicle vs exact GP", 1e-8),
    ("order/assembler invariance", 1e-12),
];

impl CorpusReport {
    pub fn rows(&self) -> Vec<(&'static str, f64, f64)> {
        let vals = [
            self.mean_err,
            self.cov_err,
            self.summary_matrix_err,
            self.woodbury_err,
            self.baseline_err,
            self.single_vehicle_err,
            self.assembler_err,
        ];
        TOLERANCES.iter().zip(vals).map(|((n, t), v)| (*n, v, *t)).collect()
    }

    pub fn passed(&self) -> bool {
        self.rows().iter().all(|(_, v, t)| v <= t)
    }
}

/// Runs `instances` multi-vehicle and `instances / 4` single-vehicle instances.
pub fn run_corpus(seed: u64, instances: usize) -> Result<CorpusReport> {
    let mut out = CorpusReport { pic_min_eig: f64::INFINITY, variance_excess: f64::NEG_INFINITY, ..Default::default() };
    let shape = FuzzShape::default();
    for i in 0..instances {
        let r = check_instance(&generate(seed.wrapping_add(i as u64), &shape)?)?;
        out.instances += 1;
        out.mean_err = out.mean_err.max(r.mean_err);
        out.cov_err = out.cov_err.max(r.cov_err);
        out.summary_matrix_err = out.summary_matrix_err.max(r.summary_matrix_err);
        out.woodbury_err = out.woodbury_err.max(r.woodbury_err);
        out.baseline_err = out.baseline_err.max(r.baseline_err);
        out.assembler_err = out.assembler_err.max(r.assembler_err);
        out.variance_excess = out.variance_excess.max(r.variance_excess);
        out.pic_min_eig = out.pic_min_eig.min(r.pic_min_eig);
    }
    let single = FuzzShape::single_vehicle();
    for i in 0..(instances / 4).max(1) {
        let inst = generate(seed.wrapping_add(1 << 32).wrapping_add(i as u64), &single)?;
        out.single_vehicle_err = out.single_vehicle_err.max(check_single_vehicle(&inst)?);
    }
    Ok(out)
}

/// Ids of the query regions of an instance, in order.
pub fn query_ids(inst: &FuzzInstance) -> Vec<RegionId> {
    inst.query.iter().map(|r| r.id).collect()
}
