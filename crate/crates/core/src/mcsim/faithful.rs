use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::{DropOutcome, PairedOutcome, SimConfig};
use crate::error::{Error, Result};
use crate::fading::{sample_fading, SchedulerKind};
use crate::netmodel::{active_bs_density, active_ue_count_distribution, UeCountDistribution, UeCountSampler};
use crate::pathloss::Branch;

pub(super) struct Faithful {
    active_fraction: f64,
    ue_counts: UeCountSampler,
    n_bs: Poisson<f64>,
}

impl Faithful {
    pub(super) fn new(cfg: &SimConfig) -> Result<Self> {
        let lambda = cfg.base.lambda;
        let mean = lambda * std::f64::consts::PI * cfg.sim_radius * cfg.sim_radius;
        Ok(Self {
            active_fraction: active_bs_density(&cfg.base)? / lambda,
            // round robin is PF with a single UE, so it needs no NB law
            ue_counts: match cfg.scheduler {
                SchedulerKind::ProportionalFair => active_ue_count_distribution(&cfg.base)?,
                SchedulerKind::RoundRobin => UeCountDistribution::point_mass_one(),
            }
            .sampler(),
            n_bs: Poisson::new(mean).map_err(|e| Error::InvalidConfig(format!("BS count law: {e}")))?,
        })
    }

    pub(super) fn drop(&self, cfg: &SimConfig, rng: &mut ChaCha8Rng) -> PairedOutcome {
        let model = &cfg.model;
        let n = self.n_bs.sample(rng) as usize;
        // only distances matter to the typical UE at the origin
        let mut bs: Vec<(f64, Branch, f64)> = Vec::with_capacity(n);
        let mut serving: Option<usize> = None;
        for i in 0..n {
            let r = cfg.sim_radius * rng.random::<f64>().sqrt();
            let branch = if rng.random::<f64>() < model.los_prob(r) {
                Branch::Los
            } else {
                Branch::Nlos
            };
            let zeta = model.gain(r, branch);
            if serving.is_none_or(|s| zeta > bs[s].2) {
                serving = Some(i);
            }
            bs.push((r, branch, zeta));
        }

        let k = self.ue_counts.sample(rng);
        let (rr_gain, pf_gain) = match serving {
            Some(s) => {
                let r_m = bs[s].0 * 1000.0;
                let own = sample_fading(cfg.fading, r_m, rng);
                let best = (1..k).fold(own, |m, _| m.max(sample_fading(cfg.fading, r_m, rng)));
                (own, best)
            }
            None => (0.0, 0.0),
        };

        // every other BS is weaker than the serving one; keep each with the
        // active fraction
        let mut i_agg = 0.0;
        let mut n_active = usize::from(serving.is_some());
        for (i, &(r, _, zeta)) in bs.iter().enumerate() {
            if Some(i) == serving || rng.random::<f64>() >= self.active_fraction {
                continue;
            }
            n_active += 1;
            i_agg += cfg.base.tx_power * zeta * sample_fading(cfg.fading, r * 1000.0, rng);
        }

        let link = serving.map(|s| (bs[s].0, bs[s].1));
        PairedOutcome {
            pf: DropOutcome::assemble(&cfg.base, model, link, k, pf_gain, i_agg),
            rr: DropOutcome::assemble(&cfg.base, model, link, k, rr_gain, i_agg),
            n_bs: n,
            n_active,
        }
    }
}
