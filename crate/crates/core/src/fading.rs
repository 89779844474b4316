//! Small-scale fading and the PF-selected channel gain.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    RoundRobin,
    ProportionalFair,
}

impl SchedulerKind {
    pub fn short_name(self) -> &'static str {
        match self {
            SchedulerKind::RoundRobin => "rr",
            SchedulerKind::ProportionalFair => "pf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingKind {
    Rayleigh,
    RicianDistanceDependent,
}

/// CCDF of the maximum of `k` unit-mean exponentials.
pub fn pf_gain_ccdf(y: f64, k: u32) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("gain must be non-negative, got {y}")));
    }
    if k == 0 {
        return Err(Error::Domain("UE count must be at least 1".into()));
    }
    // 1 - (1 - e^-y)^k
    Ok(-(k as f64 * (-(-y).exp_m1()).ln()).exp_m1())
}

/// Draws `k` i.i.d. unit-mean exponential gains and returns the largest one
/// together with its index.
pub fn sample_pf_gain<R: Rng + ?Sized>(k: usize, rng: &mut R) -> (f64, usize) {
    assert!(k >= 1, "UE count must be at least 1");
    let mut best = (f64::NEG_INFINITY, 0);
    for i in 0..k {
        let h: f64 = Exp1.sample(rng);
        if h > best.0 {
            best = (h, i);
        }
    }
    best
}

/// Rician K-factor in dB for a link of `r_m` meters: 13 - 0.03 r.
pub fn rician_k_factor(r_m: f64) -> f64 {
    13.0 - 0.03 * r_m
}

/// Unit-mean Rician power gain with linear K-factor `k`.
pub fn sample_rician<R: Rng + ?Sized>(k: f64, rng: &mut R) -> f64 {
    let los = (k / (k + 1.0)).sqrt();
    let sigma = (0.5 / (k + 1.0)).sqrt();
    let x: f64 = StandardNormal.sample(rng);
    let y: f64 = StandardNormal.sample(rng);
    let re = los + sigma * x;
    let im = sigma * y;
    re * re + im * im
}

/// One unit-mean power gain. `r_m` (meters) only matters for Rician fading.
pub fn sample_fading<R: Rng + ?Sized>(kind: FadingKind, r_m: f64, rng: &mut R) -> f64 {
    match kind {
        FadingKind::Rayleigh => Exp1.sample(rng),
        FadingKind::RicianDistanceDependent => {
            let k = 10f64.powf(rician_k_factor(r_m) / 10.0);
            sample_rician(k, rng)
        }
    }
}
