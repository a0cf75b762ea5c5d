//! Run configuration, read from a flat JSON object.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Hyperparameters;

/// Data-fusion method the fleet runs before planning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    #[serde(rename = "fgp")]
    Fgp,
    #[serde(rename = "gpddf")]
    GpDdf,
    #[serde(rename = "gpddf+")]
    GpDdfPlus,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Fgp, Policy::GpDdf, Policy::GpDdfPlus];
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Policy::Fgp => "fgp",
            Policy::GpDdf => "gpddf",
            Policy::GpDdfPlus => "gpddf+",
        })
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fgp" => Ok(Policy::Fgp),
            "gpddf" => Ok(Policy::GpDdf),
            "gpddf+" => Ok(Policy::GpDdfPlus),
            other => Err(Error::Invalid(format!("unknown policy {other:?} (expected fgp, gpddf or gpddf+)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub rows: usize,
    pub cols: usize,
    pub vehicles: usize,
    pub users: usize,
    pub steps: usize,
    pub horizon: usize,

    pub signal_var: f64,
    pub noise_var: f64,
    pub length_scales: Vec<f64>,
    /// Constant prior mean in log space; the log-field average when absent.
    pub prior_mean: Option<f64>,

    pub support_size: usize,
    pub support_seed: u64,
    pub policy: Policy,
    pub seed: u64,
    pub out: PathBuf,
    /// Trailing window (steps) for the fleet distribution.
    pub window: usize,
    /// Additive smoothing for the KLD distributions.
    pub smoothing: f64,

    /// Demand field CSV; a synthetic field is generated when absent.
    pub field: Option<PathBuf>,
    /// Mean of the synthetic log-demand field.
    pub field_base: f64,
    pub hotspots: usize,
    pub hotspot_amplitude: f64,
    /// Hotspot radius in grid cells.
    pub hotspot_radius: f64,

    /// Record per-vehicle wall time in the metrics CSV (otherwise 0).
    pub record_wall_time: bool,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rows: 50,
            cols: 100,
            vehicles: 20,
            users: 200,
            steps: 960,
            horizon: 4,
            signal_var: 1.0,
            noise_var: 0.05,
            length_scales: vec![0.05, 0.05],
            prior_mean: None,
            support_size: 64,
            support_seed: 7,
            policy: Policy::GpDdfPlus,
            seed: 1,
            out: PathBuf::from("out"),
            window: 10,
            smoothing: 1e-6,
            field: None,
            field_base: 0.5,
            hotspots: 6,
            hotspot_amplitude: 2.5,
            hotspot_radius: 1.5,
            record_wall_time: false,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("rows", self.rows),
            ("cols", self.cols),
            ("vehicles", self.vehicles),
            ("users", self.users),
            ("steps", self.steps),
            ("horizon", self.horizon),
            ("support_size", self.support_size),
            ("window", self.window),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Invalid(format!("{name} must be positive")));
        }
        if self.threads == Some(0) {
            return Err(Error::Invalid("threads must be positive".into()));
        }
        if !(self.smoothing > 0.0) {
            return Err(Error::Invalid("smoothing must be positive".into()));
        }
        if self.support_size >= self.rows * self.cols {
            return Err(Error::Invalid(format!(
                "support size {} leaves no regions outside the support set",
                self.support_size
            )));
        }
        if self.length_scales.len() != 2 {
            return Err(Error::Invalid(format!(
                "grid regions have 2 features but {} length-scales were given",
                self.length_scales.len()
            )));
        }
        self.hyperparameters(0.0).map(|_| ())
    }

    /// Model hyperparameters with `fallback_mean` used when no prior mean is configured.
    pub fn hyperparameters(&self, fallback_mean: f64) -> Result<Hyperparameters> {
        Hyperparameters::new(
            self.signal_var,
            self.noise_var,
            self.length_scales.clone(),
            self.prior_mean.unwrap_or(fallback_mean),
        )
    }
}
