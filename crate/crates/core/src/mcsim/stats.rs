use serde::{Deserialize, Serialize};

use super::{PairedOutcome, SimConfig, SimMode};
use crate::fading::SchedulerKind;
use crate::pathloss::Branch;

const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `n` at 95% confidence.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageEstimate {
    pub gamma: f64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
}

impl CoverageEstimate {
    pub fn from_sinrs(sinrs: impl IntoIterator<Item = f64>, gamma: f64) -> Self {
        let (mut hits, mut n) = (0, 0);
        for s in sinrs {
            n += 1;
            if s > gamma {
                hits += 1;
            }
        }
        Self::from_counts(gamma, hits, n)
    }

    fn from_counts(gamma: f64, hits: usize, n: usize) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(hits, n);
        Self {
            gamma,
            p_hat: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
            ci_lo,
            ci_hi,
            n,
        }
    }

    /// Binomial standard deviation of `p_hat`.
    pub fn sigma(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.n.max(1) as f64).sqrt()
    }

    pub fn ci_width(&self) -> f64 {
        self.ci_hi - self.ci_lo
    }
}

pub type CurvePoint = CoverageEstimate;

pub(super) fn curve_from_sinrs(sinrs: &[f64], gammas: &[f64]) -> Vec<CurvePoint> {
    let mut sorted = sinrs.to_vec();
    sorted.sort_by(f64::total_cmp);
    gammas
        .iter()
        .map(|&g| {
            let above = sorted.len() - sorted.partition_point(|&s| s <= g);
            CoverageEstimate::from_counts(g, above, sorted.len())
        })
        .collect()
}

/// Paired estimate of `p_PF - p_RR` from drops sharing their geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub gamma: f64,
    pub gap: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
}

impl GapEstimate {
    pub fn from_paired(drops: &[PairedOutcome], gamma: f64) -> Self {
        let n = drops.len();
        let diffs = drops
            .iter()
            .map(|d| f64::from(u8::from(d.pf.sinr > gamma)) - f64::from(u8::from(d.rr.sinr > gamma)));
        let (mut sum, mut sq) = (0.0, 0.0);
        for x in diffs {
            sum += x;
            sq += x * x;
        }
        let nf = n.max(1) as f64;
        let mean = sum / nf;
        let var = if n > 1 { (sq - nf * mean * mean) / (nf - 1.0) } else { 0.0 };
        let half = Z95 * (var.max(0.0) / nf).sqrt();
        Self {
            gamma,
            gap: mean,
            ci_lo: mean - half,
            ci_hi: mean + half,
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(edges: Vec<f64>) -> Self {
        let counts = vec![0; edges.len().saturating_sub(1)];
        Self { edges, counts }
    }

    /// Log-spaced bins between `lo` and `hi`.
    pub fn log_spaced(lo: f64, hi: f64, bins: usize) -> Self {
        let step = (hi / lo).ln() / bins as f64;
        Self::new((0..=bins).map(|i| lo * (step * i as f64).exp()).collect())
    }

    /// Adds `x`; values outside the edges are dropped.
    pub fn add(&mut self, x: f64) {
        if self.edges.len() < 2 || !(x >= self.edges[0]) || x >= *self.edges.last().unwrap() {
            return;
        }
        let i = self.edges.partition_point(|&e| e <= x) - 1;
        self.counts[i] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Aggregate record of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub mode: SimMode,
    pub scheduler: SchedulerKind,
    pub lambda: f64,
    pub n_drops: usize,
    pub master_seed: u64,
    pub sim_radius: f64,
    pub coverage: Vec<CoverageEstimate>,
    pub los_fraction: f64,
    pub active_fraction: f64,
    /// Empirical law of `k_served`; entry i counts drops with k = i + 1.
    pub k_counts: Vec<u64>,
    pub serving_distance: Histogram,
}

impl SimSummary {
    pub fn from_paired(cfg: &SimConfig, drops: &[PairedOutcome], gammas: &[f64]) -> Self {
        let outcomes: Vec<_> = drops.iter().map(|d| *d.for_scheduler(cfg.scheduler)).collect();
        let sinrs: Vec<f64> = outcomes.iter().map(|d| d.sinr).collect();
        let mut hist = Histogram::log_spaced(1e-4, cfg.sim_radius, 60);
        let mut k_counts: Vec<u64> = Vec::new();
        let mut los = 0usize;
        let (mut n_bs, mut n_active) = (0usize, 0usize);
        for (d, p) in outcomes.iter().zip(drops) {
            hist.add(d.serving_distance);
            if d.serving_branch == Branch::Los {
                los += 1;
            }
            if d.k_served > k_counts.len() {
                k_counts.resize(d.k_served, 0);
            }
            if d.k_served >= 1 {
                k_counts[d.k_served - 1] += 1;
            }
            n_bs += p.n_bs;
            n_active += p.n_active;
        }
        let n = drops.len().max(1) as f64;
        Self {
            mode: cfg.mode,
            scheduler: cfg.scheduler,
            lambda: cfg.base.lambda,
            n_drops: drops.len(),
            master_seed: cfg.master_seed,
            sim_radius: cfg.sim_radius,
            coverage: curve_from_sinrs(&sinrs, gammas),
            los_fraction: los as f64 / n,
            active_fraction: if n_bs == 0 { 0.0 } else { n_active as f64 / n_bs as f64 },
            k_counts,
            serving_distance: hist,
        }
    }
}
