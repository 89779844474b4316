//! Monte Carlo drops of the network.
//!
//! Two modes: `ModelFaithful` samples exactly the random structure the
//! analytic coverage integrates (HPPP of BSs with LoS marks, truncated NB UE
//! count, thinned interferers), while `FullDrop` places BSs and UEs and lets
//! every UE associate, so idle BSs and UE counts emerge from the geometry.
//!
//! Every drop draws from its own ChaCha8 stream (`master_seed`, stream =
//! drop index), so results do not depend on scheduling or thread count.

mod faithful;
mod full;
mod stats;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::CoverageModel;
use crate::error::{Error, Result};
use crate::fading::{FadingKind, SchedulerKind};
use crate::netmodel::NetworkConfig;
use crate::pathloss::{Branch, PathLossModel};

pub use stats::{wilson_interval, CoverageEstimate, CurvePoint, GapEstimate, Histogram, SimSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    ModelFaithful,
    FullDrop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub base: NetworkConfig,
    pub model: PathLossModel,
    pub scheduler: SchedulerKind,
    pub fading: FadingKind,
    pub mode: SimMode,
    /// Disc radius around the origin, km.
    pub sim_radius: f64,
    pub n_drops: usize,
    pub master_seed: u64,
}

/// Default disc radius: `max(10 / sqrt(lambda), 0.5)` km.
pub fn default_sim_radius(lambda: f64) -> f64 {
    (10.0 / lambda.sqrt()).max(0.5)
}

impl SimConfig {
    pub fn new(base: NetworkConfig, model: PathLossModel, scheduler: SchedulerKind, mode: SimMode) -> Self {
        Self {
            sim_radius: default_sim_radius(base.lambda),
            base,
            model,
            scheduler,
            fading: FadingKind::Rayleigh,
            mode,
            n_drops: 10_000,
            master_seed: 0,
        }
    }

    pub fn with_drops(mut self, n: usize) -> Self {
        self.n_drops = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_fading(mut self, fading: FadingKind) -> Self {
        self.fading = fading;
        self
    }

    pub fn with_radius(mut self, radius_km: f64) -> Self {
        self.sim_radius = radius_km;
        self
    }

    /// Checks the parameters and that the disc is at least five times the
    /// 99th percentile of the analytic serving distance.
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.n_drops == 0 {
            return Err(Error::InvalidConfig("n_drops must be at least 1".into()));
        }
        if !(self.sim_radius > 0.0) || !self.sim_radius.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sim_radius must be positive and finite, got {}",
                self.sim_radius
            )));
        }
        let q99 = CoverageModel::new(self.base, &self.model)?.serving_distance_quantile(0.99);
        if self.sim_radius < 5.0 * q99 {
            return Err(Error::InvalidConfig(format!(
                "sim_radius {} km is below 5x the 99th-percentile serving distance ({q99:.4} km)",
                self.sim_radius
            )));
        }
        Ok(())
    }

    pub(crate) fn drop_rng(&self, drop_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(drop_index);
        rng
    }
}

/// One drop as seen by the typical UE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropOutcome {
    /// km; infinite when the disc held no BS.
    pub serving_distance: f64,
    pub serving_branch: Branch,
    /// UEs sharing the serving BS, the typical UE included.
    pub k_served: usize,
    /// Power gain of the scheduled link.
    pub gain: f64,
    /// Aggregate interference, W.
    pub i_agg: f64,
    pub sinr: f64,
}

impl DropOutcome {
    pub(crate) fn assemble(
        cfg: &NetworkConfig,
        model: &PathLossModel,
        serving: Option<(f64, Branch)>,
        k_served: usize,
        gain: f64,
        i_agg: f64,
    ) -> Self {
        let (serving_distance, serving_branch) = serving.unwrap_or((f64::INFINITY, Branch::Nlos));
        let mut out = Self {
            serving_distance,
            serving_branch,
            k_served,
            gain: if serving.is_some() { gain } else { 0.0 },
            i_agg,
            sinr: 0.0,
        };
        out.sinr = out.recompute_sinr(cfg, model);
        out
    }

    /// `P zeta(r) gain / (I + P_N)` from the stored fields.
    pub fn recompute_sinr(&self, cfg: &NetworkConfig, model: &PathLossModel) -> f64 {
        if !self.serving_distance.is_finite() {
            return 0.0;
        }
        let zeta = model.gain(self.serving_distance, self.serving_branch);
        cfg.tx_power * zeta * self.gain / (self.i_agg + cfg.noise_power)
    }
}

/// PF and RR outcomes sharing one realization (geometry, marks,
/// interference). RR schedules the typical UE's own draw, PF the best of
/// the `k_served` draws. In model-faithful mode the UE count is only drawn
/// for PF-configured runs; with RR both halves see `k = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedOutcome {
    pub pf: DropOutcome,
    pub rr: DropOutcome,
    /// BSs realized on the disc.
    pub n_bs: usize,
    /// BSs transmitting (serving BS included).
    pub n_active: usize,
}

impl PairedOutcome {
    pub fn for_scheduler(&self, s: SchedulerKind) -> &DropOutcome {
        match s {
            SchedulerKind::ProportionalFair => &self.pf,
            SchedulerKind::RoundRobin => &self.rr,
        }
    }
}

/// Prepared state shared by all drops of one configuration.
pub struct Simulator {
    cfg: SimConfig,
    inner: Engine,
}

enum Engine {
    Faithful(faithful::Faithful),
    Full(full::Full),
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let inner = match cfg.mode {
            SimMode::ModelFaithful => Engine::Faithful(faithful::Faithful::new(&cfg)?),
            SimMode::FullDrop => Engine::Full(full::Full::new(&cfg)),
        };
        Ok(Self { cfg, inner })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn run_paired(&self, drop_index: u64) -> PairedOutcome {
        let mut rng = self.cfg.drop_rng(drop_index);
        let out = match &self.inner {
            Engine::Faithful(f) => f.drop(&self.cfg, &mut rng),
            Engine::Full(f) => f.drop(&self.cfg, &mut rng),
        };
        if out.pf.serving_distance > self.cfg.sim_radius / 5.0 {
            log::warn!(
                "drop {drop_index}: serving distance {:.4} km exceeds a fifth of the disc radius",
                out.pf.serving_distance
            );
        }
        out
    }

    pub fn run(&self, drop_index: u64) -> DropOutcome {
        *self.run_paired(drop_index).for_scheduler(self.cfg.scheduler)
    }

    /// All `n_drops` paired drops, in drop-index order.
    pub fn run_all_paired(&self) -> Vec<PairedOutcome> {
        (0..self.cfg.n_drops as u64)
            .into_par_iter()
            .map(|i| self.run_paired(i))
            .collect()
    }

    /// All `n_drops` drops for the configured scheduler, in drop-index order.
    pub fn run_all(&self) -> Vec<DropOutcome> {
        let s = self.cfg.scheduler;
        (0..self.cfg.n_drops as u64)
            .into_par_iter()
            .map(|i| *self.run_paired(i).for_scheduler(s))
            .collect()
    }
}

pub fn run_drop_model_faithful(cfg: &SimConfig, drop_index: u64) -> Result<DropOutcome> {
    let mut c = cfg.clone();
    c.mode = SimMode::ModelFaithful;
    Ok(Simulator::new(c)?.run(drop_index))
}

pub fn run_drop_full(cfg: &SimConfig, drop_index: u64) -> Result<DropOutcome> {
    let mut c = cfg.clone();
    c.mode = SimMode::FullDrop;
    Ok(Simulator::new(c)?.run(drop_index))
}

fn require_drops(cfg: &SimConfig) -> Result<()> {
    if cfg.n_drops < 100 {
        return Err(Error::InsufficientData(format!(
            "coverage estimates need at least 100 drops, got {}",
            cfg.n_drops
        )));
    }
    Ok(())
}

/// Fraction of drops with SINR above `gamma`, with a Wilson 95% interval.
pub fn estimate_coverage(cfg: &SimConfig, gamma: f64) -> Result<CoverageEstimate> {
    require_drops(cfg)?;
    let drops = Simulator::new(cfg.clone())?.run_all();
    Ok(CoverageEstimate::from_sinrs(drops.iter().map(|d| d.sinr), gamma))
}

/// Coverage over a threshold grid from a single set of drops.
pub fn estimate_curve(cfg: &SimConfig, gammas: &[f64]) -> Result<Vec<CurvePoint>> {
    require_drops(cfg)?;
    let drops = Simulator::new(cfg.clone())?.run_all();
    let sinrs: Vec<f64> = drops.iter().map(|d| d.sinr).collect();
    Ok(stats::curve_from_sinrs(&sinrs, gammas))
}

#[cfg(test)]
mod tests;
