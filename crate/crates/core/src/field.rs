//! Demand and supply fields over a grid of regions.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gp::{log_count, Hyperparameters, RegionId};
use crate::graph::RoadGraph;
use crate::linalg::SpdFactor;

/// Per-region demand counts with the derived demand distribution and a
/// supply distribution, aligned with the regions of `graph`.
#[derive(Clone, Debug)]
pub struct DemandField {
    pub rows: usize,
    pub cols: usize,
    pub graph: RoadGraph,
    pub truth: Vec<f64>,
    pub demand_dist: Vec<f64>,
    /// Unnormalized supply weights as given (all ones when absent).
    pub supply: Vec<f64>,
    pub supply_dist: Vec<f64>,
}

/// Normalizes non-negative weights; all-zero weights give the uniform distribution.
pub fn normalize(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        weights.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / weights.len() as f64; weights.len()]
    }
}

impl DemandField {
    /// Builds a field from `(row, col, demand, supply)` cells; cells not
    /// listed are excluded from the graph. Without supply weights the supply
    /// distribution is uniform.
    pub fn from_cells(rows: usize, cols: usize, cells: &[(usize, usize, f64, Option<f64>)]) -> Result<Self> {
        let mut grid: Vec<Option<(f64, Option<f64>)>> = vec![None; rows * cols];
        for &(r, c, y, s) in cells {
            if r >= rows || c >= cols {
                return Err(Error::Invalid(format!("cell ({r}, {c}) outside a {rows}x{cols} grid")));
            }
            if !(y >= 0.0) || !y.is_finite() {
                return Err(Error::Invalid(format!("demand at ({r}, {c}) must be finite and non-negative, got {y}")));
            }
            if s.is_some_and(|s| !(s >= 0.0) || !s.is_finite()) {
                return Err(Error::Invalid(format!("supply at ({r}, {c}) must be finite and non-negative")));
            }
            if grid[r * cols + c].replace((y, s)).is_some() {
                return Err(Error::Invalid(format!("cell ({r}, {c}) listed twice")));
            }
        }
        let graph = RoadGraph::grid(rows, cols, |r, c| grid[r * cols + c].is_some())?;
        let cell = |id: RegionId| grid[id.0].expect("graph only holds listed cells");
        let truth: Vec<f64> = graph.regions().iter().map(|r| cell(r.id).0).collect();
        let supply: Vec<Option<f64>> = graph.regions().iter().map(|r| cell(r.id).1).collect();
        let supply: Vec<f64> = if supply.iter().all(Option::is_some) {
            supply.iter().map(|s| s.expect("checked")).collect()
        } else {
            if supply.iter().any(Option::is_some) {
                log::warn!("supply given for only some cells; using a uniform supply distribution");
            }
            vec![1.0; truth.len()]
        };
        let supply_dist = normalize(&supply);
        let demand_dist = normalize(&truth);
        Ok(Self { rows, cols, graph, truth, demand_dist, supply, supply_dist })
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn truth_of(&self, id: RegionId) -> Option<f64> {
        self.graph.position(id).map(|i| self.truth[i])
    }

    /// Mean of `ln(y + 1)` over all regions.
    pub fn log_mean(&self) -> f64 {
        self.truth.iter().map(|&y| log_count(y)).sum::<f64>() / self.len().max(1) as f64
    }

    /// `(row, col, demand, supply weight)` per region, in graph order.
    pub fn cells(&self) -> Vec<(usize, usize, f64, f64)> {
        self.graph
            .regions()
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.0 / self.cols, r.id.0 % self.cols, self.truth[i], self.supply[i]))
            .collect()
    }
}

/// Hotspot bumps added to the synthetic log-field.
#[derive(Clone, Debug, PartialEq)]
pub struct HotspotConfig {
    /// Mean of the log-field before hotspots.
    pub base: f64,
    pub count: usize,
    pub amplitude: f64,
    /// Radius in grid cells.
    pub radius: f64,
}

/// Unit-variance SE correlation along one grid axis.
fn axis_factor(n: usize, scale: f64, length: f64) -> Result<SpdFactor> {
    let mut k = DMatrix::from_fn(n, n, |i, j| {
        let d = (i as f64 - j as f64) / scale / length;
        (-0.5 * d * d).exp()
    });
    for i in 0..n {
        k[(i, i)] += 1e-8;
    }
    SpdFactor::new(&k, 1.0)
}

/// Draws `f = sqrt(signal_var) * L_r Z L_c^T` on the full grid, which has
/// the separable SE covariance of the model kernel (without the noise term).
fn sample_grid(rng: &mut ChaCha8Rng, rows: usize, cols: usize, hyp: &Hyperparameters) -> Result<DMatrix<f64>> {
    if hyp.dim() != 2 {
        return Err(Error::Invalid(format!("grid fields need 2 length-scales, got {}", hyp.dim())));
    }
    let scale = rows.max(cols) as f64;
    let lr = axis_factor(rows, scale, hyp.length_scales[0])?.lower();
    let lc = axis_factor(cols, scale, hyp.length_scales[1])?.lower();
    let z = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok((lr * z * lc.transpose()) * hyp.signal_var.sqrt())
}

/// Synthetic field: a GP log-field with hotspots, exponentiated and rounded
/// to counts; supply is an independent draw from the same prior.
pub fn gen_demand(
    field_rng: &mut ChaCha8Rng,
    supply_rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    hyp: &Hyperparameters,
    hot: &HotspotConfig,
) -> Result<DemandField> {
    if rows == 0 || cols == 0 {
        return Err(Error::Invalid(format!("grid must be non-empty, got {rows}x{cols}")));
    }
    let mut f = sample_grid(field_rng, rows, cols, hyp)?;
    f.add_scalar_mut(hot.base);
    for _ in 0..hot.count {
        let (hr, hc) = (field_rng.random_range(0..rows) as f64, field_rng.random_range(0..cols) as f64);
        let two_r2 = 2.0 * hot.radius * hot.radius;
        for r in 0..rows {
            for c in 0..cols {
                let d2 = (r as f64 - hr).powi(2) + (c as f64 - hc).powi(2);
                f[(r, c)] += hot.amplitude * (-d2 / two_r2).exp();
            }
        }
    }
    let supply = sample_grid(supply_rng, rows, cols, hyp)?;
    let mut cells = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let y = (f[(r, c)].exp() - 1.0).round().max(0.0);
            cells.push((r, c, y, Some(supply[(r, c)].exp())));
        }
    }
    DemandField::from_cells(rows, cols, &cells)
}

/// Sample skewness `m3 / m2^(3/2)`.
pub fn skewness(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    if m2 == 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}
