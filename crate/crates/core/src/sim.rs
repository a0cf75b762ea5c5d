//! Closed-loop fleet simulation.
//!
//! Each step: every vehicle plans a walk from the current fusion round, the
//! fleet moves hop by hop (vehicles in id order within a hop), observations
//! and pickups are applied as vehicles enter regions, and a new fusion round
//! over every region produces the step's metrics and the next step's plans.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;
use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Policy, RunConfig};
use crate::error::{Error, Result};
use crate::field::{gen_demand, DemandField, HotspotConfig};
use crate::fusion::{SupportSet, VehicleId};
use crate::gp::{count_from_log, log_count, Dataset, Hyperparameters, Region, RegionId};
use crate::policy::Round;
use crate::sensing::{select_walk, SensingContext, Selection};

/// Independent random streams, so that adding draws to one subsystem
/// never shifts another.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum Stream {
    Field = 1,
    Supply = 2,
    Support = 3,
    Users = 4,
    Spawn = 5,
    Pickup = 6,
    Bench = 7,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Synthetic field for a configuration.
pub fn synthetic_field(cfg: &RunConfig) -> Result<DemandField> {
    let hyp = cfg.hyperparameters(cfg.field_base)?;
    let hot = HotspotConfig {
        base: cfg.field_base,
        count: cfg.hotspots,
        amplitude: cfg.hotspot_amplitude,
        radius: cfg.hotspot_radius,
    };
    gen_demand(
        &mut stream_rng(cfg.seed, Stream::Field),
        &mut stream_rng(cfg.seed, Stream::Supply),
        cfg.rows,
        cfg.cols,
        &hyp,
        &hot,
    )
}

/// Seeded uniform sample of `size` regions.
pub fn choose_support(regions: &[Region], size: usize, seed: u64, hyp: &Hyperparameters) -> Result<SupportSet> {
    if size >= regions.len() {
        return Err(Error::Invalid(format!("support size {size} needs more than {} regions", regions.len())));
    }
    let mut idx = sample(&mut stream_rng(seed, Stream::Support), regions.len(), size).into_vec();
    idx.sort_unstable();
    SupportSet::new(idx.into_iter().map(|i| regions[i].clone()).collect(), hyp)
}

#[derive(Clone, Debug)]
pub struct VehicleState {
    pub id: VehicleId,
    pub location: RegionId,
    pub data: Dataset,
    /// Moves since this vehicle joined the vacant fleet.
    pub cruise_steps: usize,
}

#[derive(Clone, Debug)]
pub struct UserState {
    pub id: u64,
    pub location: RegionId,
    pub spawn_step: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub rmse: f64,
    pub kld: f64,
    pub avg_cruise: f64,
    pub avg_wait: f64,
    pub total_pickups: usize,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug)]
pub struct Pickup {
    pub vehicle: VehicleId,
    pub region: RegionId,
    pub user: u64,
    pub cruise: usize,
    pub wait: usize,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub row: MetricsRow,
    /// Vehicle locations at the start of the step.
    pub starts: Vec<RegionId>,
    pub plans: Vec<Selection>,
    pub pickups: Vec<Pickup>,
    pub moves: usize,
}

/// `sum_s P(s) ln(P(s) / Q(s))` after smoothing both distributions by `eps`.
pub fn smoothed_kld(p: &[f64], q: &[f64], eps: f64) -> f64 {
    let n = p.len() as f64;
    let norm = 1.0 + n * eps;
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            let (a, b) = ((a + eps) / norm, (b + eps) / norm);
            a * (a / b).ln()
        })
        .sum::<f64>()
        .max(0.0)
}

pub struct Simulation {
    cfg: RunConfig,
    field: DemandField,
    hyp: Hyperparameters,
    support: SupportSet,
    vehicles: Vec<VehicleState>,
    users: Vec<UserState>,
    next_user: u64,
    /// Observed region -> vehicle slot holding its measurement.
    observed: HashMap<RegionId, VehicleId>,
    round: Round,
    t: usize,
    demand: WeightedIndex<f64>,
    supply: WeightedIndex<f64>,
    user_rng: ChaCha8Rng,
    spawn_rng: ChaCha8Rng,
    pickup_rng: ChaCha8Rng,
    history: VecDeque<Vec<RegionId>>,
    total_cruise: usize,
    total_wait: usize,
    pickups: usize,
    failed_walks: usize,
    fallback_walks: usize,
}

impl Simulation {
    pub fn new(cfg: &RunConfig, field: DemandField) -> Result<Self> {
        cfg.validate()?;
        if field.is_empty() {
            return Err(Error::Invalid("demand field has no regions".into()));
        }
        let hyp = cfg.hyperparameters(field.log_mean())?;
        let support = choose_support(field.graph.regions(), cfg.support_size, cfg.support_seed, &hyp)?;
        let weighted = |w: &[f64]| WeightedIndex::new(w).map_err(|e| Error::Invalid(format!("bad distribution: {e}")));
        let demand = weighted(&field.demand_dist)?;
        let supply = weighted(&field.supply_dist)?;
        let mut user_rng = stream_rng(cfg.seed, Stream::Users);
        let mut spawn_rng = stream_rng(cfg.seed, Stream::Spawn);
        let region_at = |i: usize| field.graph.regions()[i].id;
        let vehicles = (0..cfg.vehicles)
            .map(|k| VehicleState {
                id: VehicleId::from_index(k),
                location: region_at(supply.sample(&mut spawn_rng)),
                data: Dataset::empty(),
                cruise_steps: 0,
            })
            .collect();
        let users = (0..cfg.users as u64)
            .map(|id| UserState { id, location: region_at(demand.sample(&mut user_rng)), spawn_step: 0 })
            .collect();
        let datasets = vec![Dataset::empty(); cfg.vehicles];
        let round = Round::build(cfg.policy, &datasets, &support, field.graph.regions().to_vec(), &hyp)?;
        Ok(Self {
            cfg: cfg.clone(),
            hyp,
            support,
            vehicles,
            users,
            next_user: cfg.users as u64,
            observed: HashMap::new(),
            round,
            t: 0,
            demand,
            supply,
            user_rng,
            spawn_rng,
            pickup_rng: stream_rng(cfg.seed, Stream::Pickup),
            history: VecDeque::new(),
            total_cruise: 0,
            total_wait: 0,
            pickups: 0,
            failed_walks: 0,
            fallback_walks: 0,
            field,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn field(&self) -> &DemandField {
        &self.field
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyp
    }

    pub fn support(&self) -> &SupportSet {
        &self.support
    }

    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn users(&self) -> &[UserState] {
        &self.users
    }

    pub fn round(&self) -> &Round {
        &self.round
    }

    pub fn step_index(&self) -> usize {
        self.t
    }

    /// Number of distinct observed regions.
    pub fn observed_count(&self) -> usize {
        self.observed.len()
    }

    pub fn failed_walks(&self) -> usize {
        self.failed_walks
    }

    pub fn fallback_walks(&self) -> usize {
        self.fallback_walks
    }

    fn excluded(&self) -> Arc<HashSet<RegionId>> {
        let mut ex: HashSet<RegionId> = self.observed.keys().copied().collect();
        ex.extend(self.support.regions().iter().map(|r| r.id));
        Arc::new(ex)
    }

    /// Sensing context over the given regions from the current fusion round.
    /// Observed and support regions are left out of the table.
    pub fn context_over(&self, regions: &[RegionId], excluded: Arc<HashSet<RegionId>>) -> Result<SensingContext> {
        let mut ids = Vec::new();
        let mut positions = Vec::new();
        for &r in regions {
            if excluded.contains(&r) {
                continue;
            }
            let p = self
                .round
                .position(r)
                .ok_or_else(|| Error::Invalid(format!("unobserved region {r:?} missing from the fusion round")))?;
            ids.push(r);
            positions.push(p);
        }
        let (mean, cov) = self.round.joint(&positions)?;
        SensingContext::new(&ids, mean.iter().copied().collect(), cov, excluded)
    }

    /// One sensing context per vehicle, covering what it can reach this step.
    pub fn contexts(&self) -> Result<Vec<SensingContext>> {
        let excluded = self.excluded();
        self.vehicles
            .par_iter()
            .map(|v| {
                let reach = self.field.graph.reachable(v.location, self.cfg.horizon);
                self.context_over(&reach, excluded.clone())
            })
            .collect()
    }

    fn observe(&mut self, k: usize, r: RegionId) {
        if self.support.contains(r) {
            return;
        }
        let owner = self.vehicles[k].id;
        match self.observed.get(&r) {
            Some(o) if *o != owner => return,
            Some(_) => {}
            None => {
                self.observed.insert(r, owner);
            }
        }
        let y = self.field.truth_of(r).expect("vehicles stay on the graph");
        let region = self.field.graph.region(r).expect("vehicles stay on the graph").clone();
        self.vehicles[k].data.upsert(region, log_count(y));
    }

    fn try_pickup(&mut self, k: usize, r: RegionId) -> Option<Pickup> {
        let waiting: Vec<usize> = (0..self.users.len()).filter(|&u| self.users[u].location == r).collect();
        if waiting.is_empty() {
            return None;
        }
        let u = waiting[self.pickup_rng.random_range(0..waiting.len())];
        let user = self.users[u].clone();
        let vehicle = &mut self.vehicles[k];
        let event = Pickup {
            vehicle: vehicle.id,
            region: r,
            user: user.id,
            cruise: vehicle.cruise_steps,
            wait: self.t - user.spawn_step,
        };
        self.total_cruise += event.cruise;
        self.total_wait += event.wait;
        self.pickups += 1;

        // the slot's replacement keeps the fleet's data and starts from supply
        vehicle.location = self.field.graph.regions()[self.supply.sample(&mut self.spawn_rng)].id;
        vehicle.cruise_steps = 0;
        self.users[u] = UserState {
            id: self.next_user,
            location: self.field.graph.regions()[self.demand.sample(&mut self.user_rng)].id,
            spawn_step: self.t,
        };
        self.next_user += 1;
        Some(event)
    }

    fn metrics(&self, wall_time_ms: f64) -> MetricsRow {
        let mut se = 0.0;
        for (i, region) in self.field.graph.regions().iter().enumerate() {
            let p = self.round.position(region.id).expect("every region is predicted");
            se += (self.field.truth[i] - count_from_log(self.round.mean[p], self.round.var[p])).powi(2);
        }
        let rmse = (se / self.field.len() as f64).sqrt();

        let kld = smoothed_kld(&self.fleet_distribution(), &self.field.demand_dist, self.cfg.smoothing);
        let n = self.pickups.max(1) as f64;
        MetricsRow {
            step: self.t,
            rmse,
            kld,
            avg_cruise: if self.pickups > 0 { self.total_cruise as f64 / n } else { 0.0 },
            avg_wait: if self.pickups > 0 { self.total_wait as f64 / n } else { 0.0 },
            total_pickups: self.pickups,
            wall_time_ms,
        }
    }

    /// Fleet distribution over the trailing window, aligned with the graph.
    pub fn fleet_distribution(&self) -> Vec<f64> {
        let mut counts = vec![0.0; self.field.len()];
        for locs in &self.history {
            for r in locs {
                counts[self.field.graph.position(*r).expect("on graph")] += 1.0;
            }
        }
        crate::field::normalize(&counts)
    }

    /// Plans with `contexts` (one per vehicle, as from [`Self::contexts`]) and advances one step.
    pub fn step_with(&mut self, contexts: &[SensingContext]) -> Result<StepOutcome> {
        if contexts.len() != self.vehicles.len() {
            return Err(Error::Dimension(format!("{} contexts for {} vehicles", contexts.len(), self.vehicles.len())));
        }
        self.t += 1;
        let h = self.cfg.horizon;
        let starts: Vec<RegionId> = self.vehicles.iter().map(|v| v.location).collect();
        let planned: Vec<(Result<Selection>, f64)> = starts
            .par_iter()
            .zip(contexts)
            .map(|(&s, ctx)| {
                let t = Instant::now();
                let sel = select_walk(&self.field.graph, s, h, ctx);
                (sel, t.elapsed().as_secs_f64() * 1e3)
            })
            .collect();
        let mut plans = Vec::with_capacity(planned.len());
        let mut plan_ms = 0.0;
        for (p, dt) in planned {
            let p = p?;
            self.failed_walks += p.failed;
            self.fallback_walks += usize::from(p.fallback);
            plans.push(p);
            plan_ms += dt;
        }
        let round_ms = self.round.timing.per_vehicle();

        let mut active = vec![true; self.vehicles.len()];
        let mut pickups = Vec::new();
        let mut moves = 0;
        for hop in 1..=h {
            for k in 0..self.vehicles.len() {
                if !active[k] {
                    continue;
                }
                let next = plans[k].best.walk.steps[hop];
                self.vehicles[k].location = next;
                self.vehicles[k].cruise_steps += 1;
                moves += 1;
                self.observe(k, next);
                if let Some(p) = self.try_pickup(k, next) {
                    pickups.push(p);
                    active[k] = false;
                }
            }
        }

        self.history.push_back(self.vehicles.iter().map(|v| v.location).collect());
        while self.history.len() > self.cfg.window {
            self.history.pop_front();
        }

        let query = self.field.graph.regions().to_vec();
        let datasets: Vec<Dataset> = self.vehicles.iter().map(|v| v.data.clone()).collect();
        self.round = Round::build(self.cfg.policy, &datasets, &self.support, query, &self.hyp)?;

        let wall = if self.cfg.record_wall_time { round_ms + plan_ms / self.vehicles.len() as f64 } else { 0.0 };
        Ok(StepOutcome { row: self.metrics(wall), starts, plans, pickups, moves })
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        let contexts = self.contexts()?;
        self.step_with(&contexts)
    }
}

/// Outcome of a full run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub policy: Policy,
    pub rows: Vec<MetricsRow>,
    /// Users still waiting at the end of the run and their mean wait so far.
    pub unserved_users: usize,
    pub unserved_mean_wait: f64,
    pub failed_walks: usize,
    pub fallback_walks: usize,
    pub observed_regions: usize,
}

impl RunResult {
    pub fn final_row(&self) -> &MetricsRow {
        self.rows.last().expect("runs have at least one step")
    }
}

/// Runs `cfg.steps` steps on `field`, honouring `cfg.threads`.
pub fn run(cfg: &RunConfig, field: DemandField) -> Result<RunResult> {
    let body = || -> Result<RunResult> {
        let mut sim = Simulation::new(cfg, field)?;
        let mut rows = Vec::with_capacity(cfg.steps);
        for _ in 0..cfg.steps {
            let out = sim.step()?;
            log::debug!("step {} rmse {:.4} pickups {}", out.row.step, out.row.rmse, out.row.total_pickups);
            rows.push(out.row);
        }
        Ok(RunResult {
            policy: cfg.policy,
            rows,
            unserved_users: sim.users.len(),
            unserved_mean_wait: sim.users.iter().map(|u| (sim.t - u.spawn_step) as f64).sum::<f64>()
                / sim.users.len().max(1) as f64,
            failed_walks: sim.failed_walks,
            fallback_walks: sim.fallback_walks,
            observed_regions: sim.observed.len(),
        })
    };
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?
            .install(body),
        None => body(),
    }
}
