//! Population model: BS and UE densities, the Gamma cell-area law, and the
//! (truncated) Negative Binomial number of UEs per BS.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::units::dbm_to_watts;

/// Default cap on the truncation point of the UE-count distribution.
pub const DEFAULT_KMAX_CAP: usize = 10_000;

/// Scalar parameters of the network. Powers are in watts, densities per km².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// BS density (BSs/km²).
    pub lambda: f64,
    /// Active-UE density (UEs/km²).
    pub rho: f64,
    /// Shape parameter of the cell-area Gamma law.
    pub q: f64,
    pub tx_power: f64,
    pub noise_power: f64,
    /// Mass left outside the truncated UE-count distribution.
    pub epsilon: f64,
    #[serde(default = "default_kmax_cap")]
    pub kmax_cap: usize,
}

fn default_kmax_cap() -> usize {
    DEFAULT_KMAX_CAP
}

impl NetworkConfig {
    /// Reference parameter set: 300 UEs/km², q = 4.05, 24 dBm transmit power,
    /// -95 dBm noise and epsilon = 0.001.
    pub fn reference(lambda: f64) -> Self {
        Self {
            lambda,
            rho: 300.0,
            q: 4.05,
            tx_power: dbm_to_watts(24.0),
            noise_power: dbm_to_watts(-95.0),
            epsilon: 1e-3,
            kmax_cap: DEFAULT_KMAX_CAP,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("rho", self.rho),
            ("q", self.q),
            ("tx_power", self.tx_power),
            ("noise_power", self.noise_power),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.1) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must lie in (0, 0.1], got {}",
                self.epsilon
            )));
        }
        if self.kmax_cap == 0 {
            return Err(Error::InvalidConfig("kmax_cap must be at least 1".into()));
        }
        Ok(())
    }

    /// Success probability of the Negative Binomial UE count, rho / (rho + q lambda).
    pub fn nb_success_prob(&self) -> f64 {
        self.rho / (self.rho + self.q * self.lambda)
    }

    /// Probability that a BS has no UE, (q lambda / (rho + q lambda))^q.
    pub fn idle_probability(&self) -> f64 {
        (-self.q * (self.rho / (self.q * self.lambda)).ln_1p()).exp()
    }
}

/// Density of active BSs, lambda [1 - (1 + rho/(q lambda))^-q].
pub fn active_bs_density(cfg: &NetworkConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(active_density_unchecked(cfg))
}

pub(crate) fn active_density_unchecked(cfg: &NetworkConfig) -> f64 {
    let x = cfg.rho / (cfg.q * cfg.lambda);
    -cfg.lambda * (-cfg.q * x.ln_1p()).exp_m1()
}

/// Gamma(shape q, rate q lambda) density of the per-BS coverage area (km²).
pub fn cell_area_pdf(x: f64, cfg: &NetworkConfig) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("cell area must be positive, got {x}")));
    }
    let rate = cfg.q * cfg.lambda;
    let ln = cfg.q * rate.ln() + (cfg.q - 1.0) * x.ln() - rate * x - ln_gamma(cfg.q);
    Ok(ln.exp())
}

fn ln_nb_pmf(k: u64, q: f64, p: f64) -> f64 {
    let k = k as f64;
    ln_gamma(k + q) - ln_gamma(k + 1.0) - ln_gamma(q) + k * p.ln() + q * (-p).ln_1p()
}

/// Negative Binomial probability of `k` UEs in a BS cell, evaluated in the
/// log domain.
pub fn ue_count_pmf(k: u64, cfg: &NetworkConfig) -> f64 {
    let p = cfg.nb_success_prob();
    if k == 0 {
        return cfg.idle_probability();
    }
    ln_nb_pmf(k, cfg.q, p).exp()
}

/// Parameters needed to extend a truncated distribution past its stored range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct NbTail {
    q: f64,
    p: f64,
    active_fraction: f64,
}

/// UEs per active BS: the Negative Binomial conditioned on at least one UE,
/// stored for k = 1..=kmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeCountDistribution {
    /// `pmf[i]` is the probability of `i + 1` UEs.
    pub pmf: Vec<f64>,
    pub kmax: usize,
    /// 1 - F(kmax).
    pub mass_deficit: f64,
    tail: Option<NbTail>,
}

impl UeCountDistribution {
    /// All mass on a single UE. Round-robin analysis and the UDN limit both use it.
    pub fn point_mass_one() -> Self {
        Self {
            pmf: vec![1.0],
            kmax: 1,
            mass_deficit: 0.0,
            tail: None,
        }
    }

    /// Probability of exactly `k` UEs (zero outside 1..=kmax).
    pub fn prob(&self, k: usize) -> f64 {
        if k == 0 || k > self.kmax {
            0.0
        } else {
            self.pmf[k - 1]
        }
    }

    pub fn cdf(&self, k: usize) -> f64 {
        self.pmf.iter().take(k).sum()
    }

    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    pub fn is_point_mass_one(&self) -> bool {
        self.kmax == 1 && self.pmf[0] == 1.0
    }

    /// Builds an inverse-CDF sampler over the untruncated law (the tail beyond
    /// kmax is included until its mass drops below 1e-15).
    pub fn sampler(&self) -> UeCountSampler {
        let mut cdf = Vec::with_capacity(self.kmax + 16);
        let mut acc = 0.0;
        for &p in &self.pmf {
            acc += p;
            cdf.push(acc);
        }
        if let Some(tail) = self.tail {
            let mut k = self.kmax as u64;
            while 1.0 - acc > 1e-15 && cdf.len() < 10 * (self.kmax + 1000) {
                k += 1;
                let p = ln_nb_pmf(k, tail.q, tail.p).exp() / tail.active_fraction;
                if p == 0.0 {
                    break;
                }
                acc += p;
                cdf.push(acc);
            }
        }
        UeCountSampler { cdf }
    }
}

/// Draws UE counts from a [`UeCountDistribution`].
#[derive(Debug, Clone)]
pub struct UeCountSampler {
    cdf: Vec<f64>,
}

impl UeCountSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().unwrap_or(&1.0);
        let u: f64 = rng.random::<f64>() * total;
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1) + 1
    }
}

/// Truncated Negative Binomial UE count per active BS, stopping at the
/// smallest kmax whose CMF reaches 1 - epsilon.
pub fn active_ue_count_distribution(cfg: &NetworkConfig) -> Result<UeCountDistribution> {
    cfg.validate()?;
    let p = cfg.nb_success_prob();
    let active_fraction = -(-cfg.q * (cfg.rho / (cfg.q * cfg.lambda)).ln_1p()).exp_m1();
    let target = 1.0 - cfg.epsilon;

    let mut pmf = Vec::new();
    let mut sum = 0.0;
    let mut comp = 0.0;
    loop {
        let k = pmf.len() as u64 + 1;
        if pmf.len() >= cfg.kmax_cap {
            return Err(Error::KmaxExceedsCap {
                cap: cfg.kmax_cap,
                epsilon: cfg.epsilon,
            });
        }
        let v = ln_nb_pmf(k, cfg.q, p).exp() / active_fraction;
        pmf.push(v);
        // Neumaier summation
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        if sum + comp >= target {
            break;
        }
    }
    let kmax = pmf.len();
    Ok(UeCountDistribution {
        pmf,
        kmax,
        mass_deficit: (1.0 - (sum + comp)).max(0.0),
        tail: Some(NbTail {
            q: cfg.q,
            p,
            active_fraction,
        }),
    })
}
