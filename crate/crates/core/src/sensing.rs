//! Entropy-driven walk planning.
//!
//! Every vehicle scores all length-`H` walks from its current region by the
//! log-Gaussian entropy of the unobserved regions the walk would visit and
//! picks the best one on its own. [`joint_walk_oracle`] does the exhaustive
//! joint search over all vehicles, which is only feasible on tiny instances.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gp::{lgp_entropy, lgp_entropy_small, GaussianPredictive, RegionId};
use crate::graph::RoadGraph;

/// Region sequence of length `H + 1` starting at the vehicle's region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Walk {
    pub steps: Vec<RegionId>,
    /// Distinct visited regions that are still unobserved, in visit order.
    pub new_regions: Vec<RegionId>,
}

impl Walk {
    pub fn new(steps: Vec<RegionId>, excluded: impl Fn(RegionId) -> bool) -> Self {
        let new_regions = new_regions(&steps, excluded);
        Self { steps, new_regions }
    }

    pub fn start(&self) -> RegionId {
        self.steps[0]
    }

    pub fn end(&self) -> RegionId {
        *self.steps.last().expect("walk has at least one step")
    }
}

fn new_regions(steps: &[RegionId], excluded: impl Fn(RegionId) -> bool) -> Vec<RegionId> {
    let mut out: Vec<RegionId> = Vec::with_capacity(steps.len());
    for &s in &steps[1..] {
        if !excluded(s) && !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkScore {
    pub walk: Walk,
    pub entropy: f64,
}

/// Snapshot of a vehicle's predictive over the regions it might visit,
/// plus the set of regions it already knows to be observed (or in the
/// support set).
#[derive(Clone, Debug)]
pub struct SensingContext {
    pos: HashMap<RegionId, usize>,
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    excluded: Arc<HashSet<RegionId>>,
}

impl SensingContext {
    pub fn new(ids: &[RegionId], mean: Vec<f64>, cov: DMatrix<f64>, excluded: Arc<HashSet<RegionId>>) -> Result<Self> {
        if mean.len() != ids.len() || cov.shape() != (ids.len(), ids.len()) {
            return Err(Error::Dimension(format!(
                "sensing table for {} regions has {} means and a {:?} covariance",
                ids.len(),
                mean.len(),
                cov.shape()
            )));
        }
        let pos = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        Ok(Self { pos, mean, cov, excluded })
    }

    pub fn from_predictive(pred: &GaussianPredictive, excluded: Arc<HashSet<RegionId>>) -> Result<Self> {
        Self::new(&pred.query, pred.mean.iter().copied().collect(), pred.cov.clone(), excluded)
    }

    /// Same context with every predictive mean shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self { mean: self.mean.iter().map(|m| m + c).collect(), ..self.clone() }
    }

    pub fn is_excluded(&self, id: RegionId) -> bool {
        self.excluded.contains(&id)
    }

    /// Log-Gaussian entropy of the given regions; `-inf` for an empty set.
    pub fn entropy(&self, regions: &[RegionId]) -> Result<f64> {
        if regions.is_empty() {
            return Ok(f64::NEG_INFINITY);
        }
        let idx = regions
            .iter()
            .map(|r| {
                self.pos
                    .get(r)
                    .copied()
                    .ok_or_else(|| Error::Invalid(format!("region {r:?} is outside the sensing context")))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = idx.len();
        if n <= 8 {
            let mut cov = [0.0; 64];
            let mut mean = [0.0; 8];
            for (a, &i) in idx.iter().enumerate() {
                mean[a] = self.mean[i];
                for (b, &j) in idx.iter().enumerate() {
                    cov[a * n + b] = self.cov[(i, j)];
                }
            }
            lgp_entropy_small(&mean[..n], &cov[..n * n])
        } else {
            let pred = GaussianPredictive {
                query: regions.to_vec(),
                mean: nalgebra::DVector::from_fn(n, |a, _| self.mean[idx[a]]),
                cov: DMatrix::from_fn(n, n, |a, b| self.cov[(idx[a], idx[b])]),
            };
            lgp_entropy(&pred)
        }
    }
}

fn for_each_walk(graph: &RoadGraph, start: RegionId, h: usize, mut visit: impl FnMut(&[RegionId])) {
    fn rec(graph: &RoadGraph, h: usize, path: &mut Vec<RegionId>, visit: &mut dyn FnMut(&[RegionId])) {
        if path.len() == h + 1 {
            visit(path);
            return;
        }
        let last = *path.last().expect("path starts non-empty");
        for &n in graph.neighbors(last) {
            path.push(n);
            rec(graph, h, path, visit);
            path.pop();
        }
    }
    let mut path = Vec::with_capacity(h + 1);
    path.push(start);
    rec(graph, h, &mut path, &mut visit);
}

fn check_start(graph: &RoadGraph, start: RegionId, h: usize) -> Result<()> {
    if !graph.contains(start) {
        return Err(Error::Invalid(format!("start region {start:?} is not in the graph")));
    }
    if h == 0 {
        return Err(Error::Invalid("walk length must be at least 1".into()));
    }
    Ok(())
}

/// All walks of length `h` from `start`, in lexicographic order of region ids.
/// `new_regions` here only excludes the start region.
pub fn enumerate_walks(graph: &RoadGraph, start: RegionId, h: usize) -> Result<Vec<Walk>> {
    check_start(graph, start, h)?;
    let mut out = Vec::new();
    for_each_walk(graph, start, h, |p| out.push(Walk::new(p.to_vec(), |_| false)));
    Ok(out)
}

/// Entropy of a walk's unobserved regions under `ctx`.
pub fn score_walk(walk: &Walk, ctx: &SensingContext) -> Result<WalkScore> {
    let walk = Walk::new(walk.steps.clone(), |r| ctx.is_excluded(r));
    let entropy = ctx.entropy(&walk.new_regions)?;
    Ok(WalkScore { walk, entropy })
}

/// Outcome of one vehicle's walk selection.
#[derive(Clone, Debug)]
pub struct Selection {
    pub best: WalkScore,
    pub evaluated: usize,
    /// Walks whose covariance was not positive definite (scored `-inf`).
    pub failed: usize,
    /// Set when no walk visits an unobserved region and the walk heading
    /// towards the nearest unobserved region was taken instead.
    pub fallback: bool,
}

/// Picks the highest-entropy walk; the first walk in enumeration order wins ties.
pub fn select_walk(graph: &RoadGraph, start: RegionId, h: usize, ctx: &SensingContext) -> Result<Selection> {
    check_start(graph, start, h)?;
    let mut best: Option<(Vec<RegionId>, f64)> = None;
    let mut evaluated = 0;
    let mut failed = 0;
    let mut first_err = None;
    for_each_walk(graph, start, h, |path| {
        evaluated += 1;
        let score = match ctx.entropy(&new_regions(path, |r| ctx.is_excluded(r))) {
            Ok(v) => v,
            Err(Error::Numerical(_)) => {
                failed += 1;
                f64::NEG_INFINITY
            }
            Err(e) => {
                first_err.get_or_insert(e);
                f64::NEG_INFINITY
            }
        };
        if best.as_ref().is_none_or(|(_, b)| score > *b) {
            best = Some((path.to_vec(), score));
        }
    });
    if let Some(e) = first_err {
        return Err(e);
    }
    let (steps, entropy) = best.ok_or_else(|| Error::Planner(format!("no walks of length {h} from {start:?}")))?;
    if entropy > f64::NEG_INFINITY {
        let walk = Walk::new(steps, |r| ctx.is_excluded(r));
        return Ok(Selection { best: WalkScore { walk, entropy }, evaluated, failed, fallback: false });
    }

    let dist = graph.distance_to(|r| !ctx.is_excluded(r));
    let mut target: Option<(Vec<RegionId>, usize)> = None;
    for_each_walk(graph, start, h, |path| {
        let d = dist[graph.position(*path.last().expect("non-empty")).expect("walk stays in graph")];
        if target.as_ref().is_none_or(|(_, b)| d < *b) {
            target = Some((path.to_vec(), d));
        }
    });
    let (steps, _) = target.expect("at least one walk exists");
    let walk = Walk::new(steps, |r| ctx.is_excluded(r));
    Ok(Selection { best: WalkScore { walk, entropy: f64::NEG_INFINITY }, evaluated, failed, fallback: true })
}

/// Entropy of the union of the walks' unobserved regions.
pub fn joint_entropy(walks: &[Walk], ctx: &SensingContext) -> Result<f64> {
    let mut union: Vec<RegionId> = Vec::new();
    for w in walks {
        for r in new_regions(&w.steps, |r| ctx.is_excluded(r)) {
            if !union.contains(&r) {
                union.push(r);
            }
        }
    }
    ctx.entropy(&union)
}

/// Largest joint-walk count the exhaustive oracle will enumerate.
pub const ORACLE_LIMIT: u128 = 1 << 20;

/// Exhaustive search for the joint walk tuple with maximum joint entropy.
/// Limited to two vehicles and walks of length at most 3.
pub fn joint_walk_oracle(graph: &RoadGraph, starts: &[RegionId], h: usize, ctx: &SensingContext) -> Result<(Vec<Walk>, f64)> {
    let per_vehicle = starts
        .iter()
        .map(|&s| enumerate_walks(graph, s, h))
        .collect::<Result<Vec<_>>>()?;
    let count = per_vehicle.iter().map(|w| w.len() as u128).product::<u128>();
    if starts.is_empty() || starts.len() > 2 || h > 3 || count > ORACLE_LIMIT {
        return Err(Error::TooLarge { count });
    }
    if count == 0 {
        return Err(Error::Planner("some vehicle has no walks".into()));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut choice = vec![0usize; starts.len()];
    loop {
        let tuple: Vec<Walk> = choice.iter().enumerate().map(|(k, &i)| per_vehicle[k][i].clone()).collect();
        let v = match joint_entropy(&tuple, ctx) {
            Ok(v) => v,
            Err(Error::Numerical(_)) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((choice.clone(), v));
        }
        let mut k = starts.len();
        loop {
            if k == 0 {
                let (idx, v) = best.expect("count > 0");
                let walks = idx
                    .iter()
                    .enumerate()
                    .map(|(k, &i)| Walk::new(per_vehicle[k][i].steps.clone(), |r| ctx.is_excluded(r)))
                    .collect();
                return Ok((walks, v));
            }
            k -= 1;
            choice[k] += 1;
            if choice[k] < per_vehicle[k].len() {
                break;
            }
            choice[k] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{half_ln_2pi_e, Region};

    fn chain() -> RoadGraph {
        let regions: Vec<_> = (0..3).map(|i| Region::new(i, vec![i as f64]).unwrap()).collect();
        RoadGraph::new(regions, &[(RegionId(0), RegionId(1)), (RegionId(1), RegionId(2))]).unwrap()
    }

    fn diag_ctx(ids: &[usize], means: &[f64], vars: &[f64], excluded: &[usize]) -> SensingContext {
        let ids: Vec<_> = ids.iter().map(|&i| RegionId(i)).collect();
        let cov = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(vars));
        let ex = excluded.iter().map(|&i| RegionId(i)).collect();
        SensingContext::new(&ids, means.to_vec(), cov, Arc::new(ex)).unwrap()
    }

    #[test]
    fn chain_has_a_single_walk() {
        let walks = enumerate_walks(&chain(), RegionId(0), 2).unwrap();
        assert_eq!(walks.len(), 1);
        assert_eq!(walks[0].steps, vec![RegionId(0), RegionId(1), RegionId(2)]);
        assert!(enumerate_walks(&chain(), RegionId(2), 1).unwrap().is_empty());
    }

    #[test]
    fn walk_with_no_moves_is_a_planner_error() {
        let ctx = diag_ctx(&[0, 1, 2], &[0.0; 3], &[1.0; 3], &[]);
        assert!(matches!(select_walk(&chain(), RegionId(2), 1, &ctx), Err(Error::Planner(_))));
        assert!(matches!(select_walk(&chain(), RegionId(7), 1, &ctx), Err(Error::Invalid(_))));
    }

    #[test]
    fn single_new_region_scores_unit_entropy() {
        let ctx = diag_ctx(&[0, 1, 2], &[0.0; 3], &[1.0; 3], &[]);
        let w = Walk::new(vec![RegionId(0), RegionId(1)], |_| false);
        assert!((score_walk(&w, &ctx).unwrap().entropy - half_ln_2pi_e()).abs() < 1e-15);
    }

    #[test]
    fn empty_walk_scores_negative_infinity() {
        let ctx = diag_ctx(&[0, 1, 2], &[0.0; 3], &[1.0; 3], &[1]);
        let w = Walk::new(vec![RegionId(0), RegionId(1)], |_| false);
        let s = score_walk(&w, &ctx).unwrap();
        assert!(s.walk.new_regions.is_empty());
        assert_eq!(s.entropy, f64::NEG_INFINITY);
    }

    #[test]
    fn higher_variance_and_higher_mean_win() {
        // star: 0 -> {1, 2}
        let regions: Vec<_> = (0..3).map(|i| Region::new(i, vec![i as f64]).unwrap()).collect();
        let g = RoadGraph::new(regions, &[(RegionId(0), RegionId(1)), (RegionId(0), RegionId(2))]).unwrap();
        let by_var = diag_ctx(&[0, 1, 2], &[0.0; 3], &[1.0, 1.0, 4.0], &[]);
        assert_eq!(select_walk(&g, RegionId(0), 1, &by_var).unwrap().best.walk.end(), RegionId(2));
        let by_mean = diag_ctx(&[0, 1, 2], &[0.0, 2.0, 0.0], &[1.0; 3], &[]);
        assert_eq!(select_walk(&g, RegionId(0), 1, &by_mean).unwrap().best.walk.end(), RegionId(1));
        let tie = diag_ctx(&[0, 1, 2], &[0.0; 3], &[1.0; 3], &[]);
        assert_eq!(select_walk(&g, RegionId(0), 1, &tie).unwrap().best.walk.end(), RegionId(1));
    }

    #[test]
    fn fallback_heads_to_nearest_unobserved_region() {
        let g = RoadGraph::grid(1, 6, |_, _| true).unwrap();
        let ctx = diag_ctx(&[0, 1, 2, 3, 4, 5], &[0.0; 6], &[1.0; 6], &[0, 1, 2, 3, 4]);
        let sel = select_walk(&g, RegionId(2), 1, &ctx).unwrap();
        assert!(sel.fallback);
        assert_eq!(sel.best.walk.end(), RegionId(3));
    }

    #[test]
    fn oracle_refuses_large_instances() {
        let g = RoadGraph::grid(3, 3, |_, _| true).unwrap();
        let ctx = diag_ctx(&(0..9).collect::<Vec<_>>(), &[0.0; 9], &[1.0; 9], &[]);
        let r = joint_walk_oracle(&g, &[RegionId(0), RegionId(1), RegionId(2)], 1, &ctx);
        assert!(matches!(r, Err(Error::TooLarge { .. })));
        assert!(matches!(joint_walk_oracle(&g, &[RegionId(0)], 4, &ctx), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn oracle_spreads_two_vehicles_on_a_line() {
        // both vehicles at region 1 of 0 - 1 - 2; local choice sends both to region 0
        let g = RoadGraph::grid(1, 3, |_, _| true).unwrap();
        let ctx = diag_ctx(&[0, 1, 2], &[0.0; 3], &[2.0, 1.0, 1.5], &[1]);
        let das = select_walk(&g, RegionId(1), 1, &ctx).unwrap().best.walk;
        assert_eq!(das.end(), RegionId(0));
        let (walks, v) = joint_walk_oracle(&g, &[RegionId(1), RegionId(1)], 1, &ctx).unwrap();
        let ends: HashSet<_> = walks.iter().map(Walk::end).collect();
        assert_eq!(ends.len(), 2);
        assert!(v > joint_entropy(&[das.clone(), das], &ctx).unwrap());
    }
}
