//! Analytic coverage probability.
//!
//! The typical UE is served by the strongest BS (largest path gain under its
//! LoS/NLoS state). For each piece `n` and branch, the serving-distance
//! density uses the full BS density, the interference Laplace transform uses
//! the active-BS density, and the PF gain is the maximum of `k` unit-mean
//! exponentials with `k` drawn from the truncated Negative Binomial.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fading::SchedulerKind;
use crate::netmodel::{active_density_unchecked, active_ue_count_distribution, NetworkConfig, UeCountDistribution};
use crate::pathloss::{Branch, PathLossModel};
use crate::quadrature::{integrate, integrate_vec, Interval, QuadOptions};

/// Largest alternating-sum term tolerated relative to the running coverage
/// (itself bounded by one).
pub const INSTABILITY_RATIO: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    UpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodTag {
    Exact,
    UpperBound,
    MonteCarlo,
}

impl From<Method> for MethodTag {
    fn from(m: Method) -> Self {
        match m {
            Method::Exact => MethodTag::Exact,
            Method::UpperBound => MethodTag::UpperBound,
        }
    }
}

impl Method {
    /// Exact below the sparse regime boundary of 100 BSs/km², upper bound below it.
    pub fn auto(lambda: f64) -> Self {
        if lambda >= 100.0 {
            Method::Exact
        } else {
            Method::UpperBound
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageQuery {
    pub cfg: NetworkConfig,
    pub model: PathLossModel,
    /// SINR threshold (linear).
    pub gamma: f64,
    pub scheduler: SchedulerKind,
    pub method: Method,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PieceTerms {
    pub t_los: f64,
    pub t_nlos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub value: f64,
    pub method: MethodTag,
    pub quad_error: f64,
    pub terms: Vec<PieceTerms>,
    /// Set when the exact method was requested but the upper bound was used.
    pub fallback: Option<String>,
}

/// Numerical settings of the analytic engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineOptions {
    /// Outer integral over the serving distance.
    pub outer: QuadOptions,
    /// Absolute accuracy of each Laplace exponent.
    pub laplace_exponent_tol: f64,
    /// Serving-distance densities below this are treated as zero.
    pub density_floor: f64,
    /// Fall back to the upper bound when the alternating sum is unstable.
    pub fallback_on_instability: bool,
    #[doc(hidden)]
    pub fault_flip_delta_sign: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            outer: QuadOptions::outer(),
            laplace_exponent_tol: 1e-11,
            density_floor: 1e-15,
            fallback_on_instability: true,
            fault_flip_delta_sign: false,
        }
    }
}

/// Cumulative `int_0^r Pr_L(u) 2 pi u du` on a log grid that includes every
/// piece boundary; queries integrate the remaining stretch from the nearest
/// node below.
#[derive(Debug, Clone)]
struct LosMassTable {
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
}

// the GK error floor is ~1e-14 relative, so ask for a little less
const MASS_OPTS: QuadOptions = QuadOptions::new(1e-300, 1e-12);

impl LosMassTable {
    fn new(model: &PathLossModel) -> Self {
        let mut nodes: Vec<f64> = (0..=400).map(|i| 1e-6 * 10f64.powf(i as f64 / 40.0)).collect();
        nodes.extend(model.breakpoints());
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let mut cumulative = Vec::with_capacity(nodes.len());
        let mut acc = integrate(|u| los_density(model, u), Interval::Finite(0.0, nodes[0]), &MASS_OPTS).value;
        cumulative.push(acc);
        for w in nodes.windows(2) {
            acc += integrate(|u| los_density(model, u), Interval::Finite(w[0], w[1]), &MASS_OPTS).value;
            cumulative.push(acc);
        }
        Self { nodes, cumulative }
    }

    fn los_mass(&self, model: &PathLossModel, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if !r.is_finite() {
            let last = *self.nodes.last().unwrap();
            let tail = integrate(
                |u| los_density(model, u),
                Interval::ToInfinity { a: last, scale: last },
                &MASS_OPTS,
            );
            return self.cumulative.last().unwrap() + tail.value;
        }
        let idx = self.nodes.partition_point(|&x| x <= r);
        if idx == 0 {
            return integrate(|u| los_density(model, u), Interval::Finite(0.0, r), &MASS_OPTS).value;
        }
        let base = self.nodes[idx - 1];
        self.cumulative[idx - 1]
            + integrate(|u| los_density(model, u), Interval::Finite(base, r), &MASS_OPTS).value
    }
}

fn los_density(model: &PathLossModel, u: f64) -> f64 {
    model.los_prob(u) * 2.0 * PI * u
}

/// Everything needed to evaluate coverage for one network configuration and
/// path loss model.
#[derive(Debug, Clone)]
pub struct CoverageModel<'a> {
    pub cfg: NetworkConfig,
    pub model: &'a PathLossModel,
    pub lambda_tilde: f64,
    pub options: EngineOptions,
    masses: LosMassTable,
}

/// Intermediate per-(r, branch) quantities of the conditional coverage.
#[derive(Debug, Clone)]
struct LinkTerms {
    delta: f64,
    /// `-ln L(t gamma / (P zeta))` for t = 1..=kmax.
    exponents: Vec<f64>,
    exponent_err: f64,
}

impl<'a> CoverageModel<'a> {
    pub fn new(cfg: NetworkConfig, model: &'a PathLossModel) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            lambda_tilde: active_density_unchecked(&cfg),
            cfg,
            model,
            options: EngineOptions::default(),
            masses: LosMassTable::new(model),
        })
    }

    pub fn with_options(mut self, options: EngineOptions) -> Self {
        self.options = options;
        self
    }

    /// `int_0^r Pr_L(u) 2 pi u du`.
    pub fn los_mass(&self, r: f64) -> f64 {
        self.masses.los_mass(self.model, r)
    }

    /// `int_0^r (1 - Pr_L(u)) 2 pi u du`.
    pub fn nlos_mass(&self, r: f64) -> f64 {
        if !r.is_finite() {
            return f64::INFINITY;
        }
        PI * r * r - self.los_mass(r)
    }

    fn check_piece(&self, r: f64, n: usize) -> Result<()> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("distance must be positive, got {r} km")));
        }
        if n >= self.model.num_pieces() {
            return Err(Error::Domain(format!("piece index {n} out of range")));
        }
        Ok(())
    }

    /// Density of "served by a `branch` BS of piece `n` at distance r".
    pub fn serving_pdf(&self, r: f64, n: usize, branch: Branch) -> f64 {
        let lambda = self.cfg.lambda;
        let piece = self.model.piece(n);
        let own = piece.gain(r, branch);
        let rival = self.model.inverse_gain(branch.other(), own);
        let p_los = piece.los_prob.eval(r);
        let (own_mass, rival_mass, p) = match branch {
            Branch::Los => (self.los_mass(r), self.nlos_mass(rival), p_los),
            Branch::Nlos => (self.nlos_mass(r), self.los_mass(rival), 1.0 - p_los),
        };
        if p <= 0.0 {
            return 0.0;
        }
        (-lambda * (own_mass + rival_mass)).exp() * p * 2.0 * PI * r * lambda
    }

    /// Laplace exponents `2 pi lambda~ [int ...]` of the interference seen by
    /// a UE served over `branch` at distance `r`, one per entry of `s`.
    pub fn laplace_exponents(&self, branch: Branch, r: f64, s: &[f64]) -> (Vec<f64>, f64) {
        let n = self.model.piece_index(r);
        let own = self.model.piece(n).gain(r, branch);
        let rival_start = self.model.inverse_gain(branch.other(), own);
        let (los_start, nlos_start) = match branch {
            Branch::Los => (r, rival_start),
            Branch::Nlos => (rival_start, r),
        };
        let p = self.cfg.tx_power;
        let scale = 2.0 * PI * self.lambda_tilde;
        let opts = QuadOptions::new(self.options.laplace_exponent_tol / scale, 1e-13);
        let mut total = vec![0.0; s.len()];
        let mut err = 0.0;
        for (start, b) in [(los_start, Branch::Los), (nlos_start, Branch::Nlos)] {
            if !start.is_finite() {
                continue;
            }
            let weight = |u: f64| {
                let pl = self.model.los_prob(u);
                match b {
                    Branch::Los => pl,
                    Branch::Nlos => 1.0 - pl,
                }
            };
            let integrand = |u: f64, out: &mut [f64]| {
                let w = weight(u) * u;
                if w == 0.0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    return;
                }
                let pz = p * self.model.gain(u, b);
                for (o, &sv) in out.iter_mut().zip(s) {
                    let x = sv * pz;
                    *o = w * x / (1.0 + x);
                }
            };
            let mut lo = start;
            let cuts: Vec<f64> = self.model.breakpoints().filter(|&d| d > start).collect();
            for &hi in &cuts {
                let res = integrate_vec(integrand, s.len(), Interval::Finite(lo, hi), &opts);
                err += res.errors.iter().cloned().fold(0.0, f64::max);
                for (t, v) in total.iter_mut().zip(&res.values) {
                    *t += v;
                }
                lo = hi;
            }
            let res = integrate_vec(
                integrand,
                s.len(),
                Interval::ToInfinity {
                    a: lo,
                    scale: lo.max(1e-6),
                },
                &opts,
            );
            err += res.errors.iter().cloned().fold(0.0, f64::max);
            for (t, v) in total.iter_mut().zip(&res.values) {
                *t += v;
            }
        }
        for t in total.iter_mut() {
            *t *= scale;
        }
        (total, err * scale)
    }

    fn delta(&self, gain: f64, gamma: f64) -> f64 {
        let sign = if self.options.fault_flip_delta_sign { 1.0 } else { -1.0 };
        (sign * gamma * self.cfg.noise_power / (self.cfg.tx_power * gain)).exp()
    }

    fn link_terms(&self, r: f64, n: usize, branch: Branch, gamma: f64, kmax: usize) -> LinkTerms {
        let gain = self.model.piece(n).gain(r, branch);
        let delta = self.delta(gain, gamma);
        if delta == 0.0 {
            return LinkTerms {
                delta,
                exponents: vec![0.0; kmax],
                exponent_err: 0.0,
            };
        }
        let base = gamma / (self.cfg.tx_power * gain);
        let s: Vec<f64> = (1..=kmax).map(|t| t as f64 * base).collect();
        let (exponents, exponent_err) = self.laplace_exponents(branch, r, &s);
        LinkTerms {
            delta,
            exponents,
            exponent_err,
        }
    }

    /// Exact conditional coverage via the alternating binomial sum. Returns
    /// the value and an error estimate.
    pub fn conditional_exact(
        &self,
        r: f64,
        n: usize,
        branch: Branch,
        dist: &UeCountDistribution,
        gamma: f64,
    ) -> Result<(f64, f64)> {
        let terms = self.link_terms(r, n, branch, gamma, dist.kmax);
        exact_sum(&terms, dist, r)
    }

    /// Jensen upper bound of the conditional coverage.
    pub fn conditional_upper(
        &self,
        r: f64,
        n: usize,
        branch: Branch,
        dist: &UeCountDistribution,
        gamma: f64,
    ) -> (f64, f64) {
        let terms = self.link_terms(r, n, branch, gamma, 1);
        upper_sum(&terms, dist)
    }

    /// Coverage probability for the given UE-count law and method. Errors
    /// from the exact sum propagate unchanged (no fallback here).
    pub fn coverage_with(&self, gamma: f64, dist: &UeCountDistribution, method: Method) -> Result<CoverageResult> {
        if !(gamma > 0.0) {
            return Err(Error::Domain(format!("SINR threshold must be positive, got {gamma}")));
        }
        let mut terms = Vec::with_capacity(self.model.num_pieces());
        let mut quad_error = 0.0;
        let floor = self.options.density_floor;
        let scale_hint = 0.5 / self.cfg.lambda.sqrt();
        for (n, piece) in self.model.pieces().iter().enumerate() {
            let mut failure: Option<Error> = None;
            let mut inner_err = 0.0f64;
            let integrand = |r: f64, out: &mut [f64]| {
                out[0] = 0.0;
                out[1] = 0.0;
                if failure.is_some() || !(r > 0.0) {
                    return;
                }
                for (slot, branch) in [(0, Branch::Los), (1, Branch::Nlos)] {
                    let f = self.serving_pdf(r, n, branch);
                    if f < floor {
                        continue;
                    }
                    let cond = match method {
                        Method::Exact => self.conditional_exact(r, n, branch, dist, gamma),
                        Method::UpperBound => Ok(self.conditional_upper(r, n, branch, dist, gamma)),
                    };
                    match cond {
                        Ok((c, e)) => {
                            out[slot] = f * c;
                            inner_err = inner_err.max(e);
                        }
                        Err(e) => failure = Some(e),
                    }
                }
            };
            let interval = if piece.d_hi.is_finite() {
                Interval::Finite(piece.d_lo, piece.d_hi)
            } else {
                Interval::ToInfinity {
                    a: piece.d_lo,
                    scale: piece.d_lo.max(scale_hint),
                }
            };
            let res = integrate_vec(integrand, 2, interval, &self.options.outer);
            if let Some(e) = failure {
                return Err(e);
            }
            if !res.converged {
                log::warn!("outer quadrature on piece {n} did not reach tolerance (error {:e})", res.errors[0] + res.errors[1]);
            }
            quad_error += res.errors[0] + res.errors[1] + inner_err;
            terms.push(PieceTerms {
                t_los: res.values[0],
                t_nlos: res.values[1],
            });
        }
        let value: f64 = terms.iter().map(|t| t.t_los + t.t_nlos).sum();
        if value < -quad_error || value > 1.0 + quad_error {
            log::warn!("coverage {value} outside [0, 1] beyond its error bound {quad_error:e}");
        }
        Ok(CoverageResult {
            value,
            method: method.into(),
            quad_error,
            terms,
            fallback: None,
        })
    }

    /// Coverage for a scheduler: round robin uses the single-UE law, PF the
    /// truncated Negative Binomial. Exact falls back to the upper bound when
    /// the alternating sum is unstable (unless disabled in the options).
    pub fn coverage(&self, gamma: f64, scheduler: SchedulerKind, method: Method) -> Result<CoverageResult> {
        let dist = match scheduler {
            SchedulerKind::RoundRobin => UeCountDistribution::point_mass_one(),
            SchedulerKind::ProportionalFair => active_ue_count_distribution(&self.cfg)?,
        };
        match self.coverage_with(gamma, &dist, method) {
            Err(Error::Instability { r_km, max_term }) if self.options.fallback_on_instability => {
                let reason = format!(
                    "exact sum unstable at r = {r_km:.4} km (term {max_term:.2e}); used upper bound"
                );
                log::warn!("lambda = {}: {reason}", self.cfg.lambda);
                let mut res = self.coverage_with(gamma, &dist, Method::UpperBound)?;
                res.fallback = Some(reason);
                Ok(res)
            }
            other => other,
        }
    }

    /// Probability that the serving link is LoS.
    pub fn serving_los_probability(&self) -> f64 {
        let opts = QuadOptions::new(1e-10, 1e-10);
        let scale_hint = 0.5 / self.cfg.lambda.sqrt();
        self.model
            .pieces()
            .iter()
            .enumerate()
            .map(|(n, piece)| {
                let interval = if piece.d_hi.is_finite() {
                    Interval::Finite(piece.d_lo, piece.d_hi)
                } else {
                    Interval::ToInfinity {
                        a: piece.d_lo,
                        scale: piece.d_lo.max(scale_hint),
                    }
                };
                integrate(|x| self.serving_pdf(x, n, Branch::Los), interval, &opts).value
            })
            .sum()
    }

    /// CDF of the serving distance, summed over pieces and branches.
    pub fn serving_distance_cdf(&self, r: f64) -> f64 {
        let opts = QuadOptions::new(1e-10, 1e-10);
        let mut total = 0.0;
        for (n, piece) in self.model.pieces().iter().enumerate() {
            if piece.d_lo >= r {
                break;
            }
            let hi = piece.d_hi.min(r);
            total += integrate(
                |x| self.serving_pdf(x, n, Branch::Los) + self.serving_pdf(x, n, Branch::Nlos),
                Interval::Finite(piece.d_lo, hi),
                &opts,
            )
            .value;
        }
        total
    }

    /// Serving-distance quantile by bisection on the CDF.
    pub fn serving_distance_quantile(&self, p: f64) -> f64 {
        let mut hi = 1.0 / self.cfg.lambda.sqrt();
        while self.serving_distance_cdf(hi) < p {
            hi *= 2.0;
            if hi > 1e6 {
                return f64::INFINITY;
            }
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.serving_distance_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-6 * hi {
                break;
            }
        }
        hi
    }
}

fn neumaier_add(sum: &mut f64, comp: &mut f64, v: f64) {
    let t = *sum + v;
    if sum.abs() >= v.abs() {
        *comp += (*sum - t) + v;
    } else {
        *comp += (v - t) + *sum;
    }
    *sum = t;
}

/// Weight of `k` UEs with the truncated tail mass lumped onto kmax. The
/// coverage is increasing in k, so this keeps the sum a lower bound on the
/// untruncated value while restoring total mass one.
fn count_weight(dist: &UeCountDistribution, k: usize) -> f64 {
    if k == dist.kmax {
        dist.prob(k) + dist.mass_deficit
    } else {
        dist.prob(k)
    }
}

fn exact_sum(terms: &LinkTerms, dist: &UeCountDistribution, r: f64) -> Result<(f64, f64)> {
    if terms.delta == 0.0 {
        return Ok((0.0, 0.0));
    }
    let ln_delta = terms.delta.ln();
    let kmax = dist.kmax;
    let ln_fact: Vec<f64> = (0..=kmax).map(|i| ln_gamma(i as f64 + 1.0)).collect();
    let mut total = 0.0;
    let mut total_comp = 0.0;
    let mut max_term = 0.0f64;
    for k in 1..=kmax {
        let w = count_weight(dist, k);
        if w == 0.0 {
            continue;
        }
        // 1 - sum_{t=0}^{k} C(k,t) (-delta)^t L_t, with the t = 0 term cancelled
        let mut s = 0.0;
        let mut c = 0.0;
        for t in 1..=k {
            let ln_mag = ln_fact[k] - ln_fact[t] - ln_fact[k - t] + t as f64 * ln_delta - terms.exponents[t - 1];
            let mag = ln_mag.exp();
            max_term = max_term.max(mag);
            let term = if t % 2 == 1 { mag } else { -mag };
            neumaier_add(&mut s, &mut c, term);
        }
        neumaier_add(&mut total, &mut total_comp, (s + c) * w);
        if max_term > INSTABILITY_RATIO * (total + total_comp).abs().max(1.0) {
            return Err(Error::Instability { r_km: r, max_term });
        }
    }
    let value = total + total_comp;
    // each term carries the relative error of its Laplace exponent
    let err = max_term * (terms.exponent_err + kmax as f64 * f64::EPSILON);
    Ok((value, err))
}

fn upper_sum(terms: &LinkTerms, dist: &UeCountDistribution) -> (f64, f64) {
    if terms.delta == 0.0 {
        return (0.0, 0.0);
    }
    let x = terms.delta * (-terms.exponents[0]).exp();
    let ln_miss = (-x).ln_1p();
    let mut total = 0.0;
    let mut comp = 0.0;
    for k in 1..=dist.kmax {
        let w = count_weight(dist, k);
        neumaier_add(&mut total, &mut comp, -(k as f64 * ln_miss).exp_m1() * w);
    }
    (total + comp, terms.exponent_err)
}

fn check_s(s: f64) -> Result<()> {
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("Laplace argument must be non-negative, got {s}")));
    }
    Ok(())
}

/// Serving-distance density of the LoS branch on piece `n`.
pub fn serving_distance_pdf_los(r: f64, n: usize, cfg: &NetworkConfig, model: &PathLossModel) -> Result<f64> {
    let m = CoverageModel::new(*cfg, model)?;
    m.check_piece(r, n)?;
    Ok(m.serving_pdf(r, n, Branch::Los))
}

/// Serving-distance density of the NLoS branch on piece `n`.
pub fn serving_distance_pdf_nlos(r: f64, n: usize, cfg: &NetworkConfig, model: &PathLossModel) -> Result<f64> {
    let m = CoverageModel::new(*cfg, model)?;
    m.check_piece(r, n)?;
    Ok(m.serving_pdf(r, n, Branch::Nlos))
}

/// Laplace transform of the aggregate interference for a LoS serving link at `r`.
pub fn laplace_interference_los(s: f64, r: f64, cfg: &NetworkConfig, model: &PathLossModel) -> Result<f64> {
    check_s(s)?;
    let m = CoverageModel::new(*cfg, model)?;
    m.check_piece(r, 0)?;
    Ok((-m.laplace_exponents(Branch::Los, r, &[s]).0[0]).exp())
}

/// Laplace transform of the aggregate interference for an NLoS serving link at `r`.
pub fn laplace_interference_nlos(s: f64, r: f64, cfg: &NetworkConfig, model: &PathLossModel) -> Result<f64> {
    check_s(s)?;
    let m = CoverageModel::new(*cfg, model)?;
    m.check_piece(r, 0)?;
    Ok((-m.laplace_exponents(Branch::Nlos, r, &[s]).0[0]).exp())
}

/// Exact expectation over the UE count of the conditional coverage at `r`.
pub fn conditional_coverage_exact(
    r: f64,
    n: usize,
    branch: Branch,
    cfg: &NetworkConfig,
    model: &PathLossModel,
    dist: &UeCountDistribution,
    gamma: f64,
) -> Result<f64> {
    let m = CoverageModel::new(*cfg, model)?;
    m.check_piece(r, n)?;
    Ok(m.conditional_exact(r, n, branch, dist, gamma)?.0)
}

/// Jensen upper bound of [`conditional_coverage_exact`].
pub fn conditional_coverage_upper(
    r: f64,
    n: usize,
    branch: Branch,
    cfg: &NetworkConfig,
    model: &PathLossModel,
    dist: &UeCountDistribution,
    gamma: f64,
) -> Result<f64> {
    let m = CoverageModel::new(*cfg, model)?;
    m.check_piece(r, n)?;
    Ok(m.conditional_upper(r, n, branch, dist, gamma).0)
}

/// Coverage probability `sum_n (T_n^L + T_n^NL)`.
pub fn coverage_probability(query: &CoverageQuery) -> Result<CoverageResult> {
    CoverageModel::new(query.cfg, &query.model)?.coverage(query.gamma, query.scheduler, query.method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathloss::make_3gpp_case;
    use proptest::prelude::*;

    fn total_mass(m: &CoverageModel) -> f64 {
        let opts = QuadOptions::new(1e-12, 1e-10);
        let mut total = 0.0;
        for (n, piece) in m.model.pieces().iter().enumerate() {
            let interval = if piece.d_hi.is_finite() {
                Interval::Finite(piece.d_lo, piece.d_hi)
            } else {
                Interval::ToInfinity { a: piece.d_lo, scale: piece.d_lo.max(0.5 / m.cfg.lambda.sqrt()) }
            };
            for b in [Branch::Los, Branch::Nlos] {
                total += integrate(|r| m.serving_pdf(r, n, b), interval, &opts).value;
            }
        }
        total
    }

    #[test]
    fn serving_density_normalizes() {
        let model = make_3gpp_case();
        for lambda in [1.0, 100.0, 1e4] {
            let m = CoverageModel::new(NetworkConfig::reference(lambda), &model).unwrap();
            let t = total_mass(&m);
            assert!((t - 1.0).abs() < 1e-6, "lambda {lambda}: {t}");
        }
    }

    #[test]
    fn pure_los_and_pure_nlos_reduce_to_rayleigh_distance() {
        for p in [0.0, 1.0] {
            let model = PathLossModel::single_slope(1e-12, 3.0, p).unwrap();
            let lambda = 50.0;
            let m = CoverageModel::new(NetworkConfig::reference(lambda), &model).unwrap();
            let (on, off) = if p == 1.0 { (Branch::Los, Branch::Nlos) } else { (Branch::Nlos, Branch::Los) };
            for r in [0.01, 0.05, 0.1, 0.3] {
                let want = 2.0 * PI * lambda * r * (-lambda * PI * r * r).exp();
                let got = m.serving_pdf(r, 0, on);
                assert!((got / want - 1.0).abs() < 1e-9, "r {r}: {got} vs {want}");
                assert_eq!(m.serving_pdf(r, 0, off), 0.0);
            }
        }
    }

    #[test]
    fn laplace_at_zero_is_one_and_decreasing() {
        let model = make_3gpp_case();
        let cfg = NetworkConfig::reference(100.0);
        for r in [0.01, 0.03, 0.2] {
            assert_eq!(laplace_interference_los(0.0, r, &cfg, &model).unwrap(), 1.0);
            assert_eq!(laplace_interference_nlos(0.0, r, &cfg, &model).unwrap(), 1.0);
            let mut prev = 1.0;
            for e in -2..=14 {
                let s = 10f64.powi(e);
                let l = laplace_interference_los(s, r, &cfg, &model).unwrap();
                assert!(l > 0.0 && l <= prev, "s {s}: {l} after {prev}");
                prev = l;
            }
        }
        assert!(laplace_interference_los(-1.0, 0.1, &cfg, &model).is_err());
    }

    /// Composite Simpson on a log grid, independent of the adaptive rule.
    fn simpson_log(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let (la, lb) = (a.ln(), b.ln());
        let h = (lb - la) / n as f64;
        let g = |t: f64| {
            let u = t.exp();
            f(u) * u
        };
        let mut s = g(la) + g(lb);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * g(la + i as f64 * h);
        }
        s * h / 3.0
    }

    fn brute_laplace(s: f64, r: f64, serve: Branch, cfg: &NetworkConfig, model: &PathLossModel) -> f64 {
        let zeta = model.gain(r, serve);
        // nearest distance at which the other branch reaches the same gain
        let other = serve.other();
        let (mut lo, mut hi) = (1e-9f64, 1e6f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if model.gain(mid, other) > zeta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (los_start, nlos_start) = match serve {
            Branch::Los => (r, hi),
            Branch::Nlos => (hi, r),
        };
        let lt = cfg.lambda * (1.0 - (1.0 + cfg.rho / (cfg.q * cfg.lambda)).powf(-cfg.q));
        let mut exponent = 0.0;
        for (start, b) in [(los_start, Branch::Los), (nlos_start, Branch::Nlos)] {
            let f = |u: f64| {
                let pl = model.los_prob(u);
                let w = if b == Branch::Los { pl } else { 1.0 - pl };
                let x = s * cfg.tx_power * model.gain(u, b);
                w * u * x / (1.0 + x)
            };
            let mut edges = vec![start];
            edges.extend(model.breakpoints().filter(|&d| d > start));
            edges.push(1e5);
            for w in edges.windows(2) {
                exponent += simpson_log(f, w[0], w[1], 400_000);
            }
        }
        (-2.0 * PI * lt * exponent).exp()
    }

    #[test]
    fn laplace_matches_brute_force() {
        let model = make_3gpp_case();
        for lambda in [10.0, 1000.0] {
            let cfg = NetworkConfig::reference(lambda);
            for r in [0.02, 0.1] {
                let serve_gain = model.gain(r, Branch::Los);
                let s = 1.0 / (cfg.tx_power * serve_gain);
                let got = laplace_interference_los(s, r, &cfg, &model).unwrap();
                let want = brute_laplace(s, r, Branch::Los, &cfg, &model);
                assert!((got - want).abs() < 1e-7, "LoS lambda {lambda} r {r}: {got} vs {want}");
                let s = 1.0 / (cfg.tx_power * model.gain(r, Branch::Nlos));
                let got = laplace_interference_nlos(s, r, &cfg, &model).unwrap();
                let want = brute_laplace(s, r, Branch::Nlos, &cfg, &model);
                assert!((got - want).abs() < 1e-7, "NLoS lambda {lambda} r {r}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn single_ue_sum_is_delta_times_laplace() {
        let model = make_3gpp_case();
        let cfg = NetworkConfig::reference(300.0);
        let one = UeCountDistribution::point_mass_one();
        let gamma = 2.0;
        for (r, b) in [(0.02, Branch::Los), (0.09, Branch::Nlos), (0.2, Branch::Los)] {
            let n = model.piece_index(r);
            let zeta = model.gain(r, b);
            let delta = (-gamma * cfg.noise_power / (cfg.tx_power * zeta)).exp();
            let s = gamma / (cfg.tx_power * zeta);
            let l = match b {
                Branch::Los => laplace_interference_los(s, r, &cfg, &model),
                Branch::Nlos => laplace_interference_nlos(s, r, &cfg, &model),
            }
            .unwrap();
            let exact = conditional_coverage_exact(r, n, b, &cfg, &model, &one, gamma).unwrap();
            let upper = conditional_coverage_upper(r, n, b, &cfg, &model, &one, gamma).unwrap();
            assert!((exact - delta * l).abs() < 1e-12, "{exact} vs {}", delta * l);
            assert!((upper - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_threshold_gives_full_coverage() {
        let model = make_3gpp_case();
        for lambda in [10.0, 1000.0] {
            let m = CoverageModel::new(NetworkConfig::reference(lambda), &model).unwrap();
            for method in [Method::Exact, Method::UpperBound] {
                let c = m.coverage(1e-9, SchedulerKind::ProportionalFair, method).unwrap();
                assert!((c.value - 1.0).abs() < 1e-5, "{lambda} {method:?}: {}", c.value);
            }
        }
    }

    #[test]
    fn round_robin_is_pf_with_one_ue() {
        let model = make_3gpp_case();
        let m = CoverageModel::new(NetworkConfig::reference(200.0), &model).unwrap();
        let one = UeCountDistribution::point_mass_one();
        for gamma in [0.3, 1.0, 5.0] {
            for method in [Method::Exact, Method::UpperBound] {
                let rr = m.coverage(gamma, SchedulerKind::RoundRobin, method).unwrap().value;
                let pf1 = m.coverage_with(gamma, &one, method).unwrap().value;
                assert!((rr - pf1).abs() < 1e-9);
            }
            let ex = m.coverage_with(gamma, &one, Method::Exact).unwrap().value;
            let ub = m.coverage_with(gamma, &one, Method::UpperBound).unwrap().value;
            assert!((ex - ub).abs() < 1e-9);
        }
    }

    #[test]
    fn pf_dominates_rr_and_decreases_in_gamma() {
        let model = make_3gpp_case();
        for i in 0..10 {
            let lambda = 10f64.powf(i as f64 * 4.0 / 9.0);
            let m = CoverageModel::new(NetworkConfig::reference(lambda), &model).unwrap();
            let method = Method::auto(lambda);
            let mut prev = (1.0 + 1e-9, 1.0 + 1e-9);
            for db in [-10.0, -5.0, 0.0, 5.0, 10.0] {
                let g = crate::units::db_to_linear(db);
                let pf = m.coverage(g, SchedulerKind::ProportionalFair, method).unwrap();
                let rr = m.coverage(g, SchedulerKind::RoundRobin, method).unwrap();
                let tol = pf.quad_error + rr.quad_error;
                assert!(pf.value >= rr.value - tol, "lambda {lambda} {db} dB: {} < {}", pf.value, rr.value);
                for v in [pf.value, rr.value] {
                    assert!((-1e-9..=1.0 + 1e-6).contains(&v));
                }
                assert!(pf.value <= prev.0 + 1e-9 && rr.value <= prev.1 + 1e-9);
                prev = (pf.value, rr.value);
            }
        }
    }

    #[test]
    fn upper_bound_dominates_exact() {
        let model = make_3gpp_case();
        for lambda in [100.0, 1000.0, 1e4] {
            let m = CoverageModel::new(NetworkConfig::reference(lambda), &model).unwrap();
            for gamma in [0.1, 1.0, 10.0] {
                let ex = m.coverage(gamma, SchedulerKind::ProportionalFair, Method::Exact).unwrap();
                let ub = m.coverage(gamma, SchedulerKind::ProportionalFair, Method::UpperBound).unwrap();
                assert!(ex.fallback.is_none());
                assert!(ub.value >= ex.value - ex.quad_error - ub.quad_error, "{} < {}", ub.value, ex.value);
            }
        }
    }

    #[test]
    fn sparse_exact_falls_back_or_errors() {
        let model = make_3gpp_case();
        let m = CoverageModel::new(NetworkConfig::reference(1.0), &model).unwrap();
        let res = m.coverage(1.0, SchedulerKind::ProportionalFair, Method::Exact).unwrap();
        assert_eq!(res.method, MethodTag::UpperBound);
        assert!(res.fallback.is_some());
        let strict = m.clone().with_options(EngineOptions {
            fallback_on_instability: false,
            ..EngineOptions::default()
        });
        assert!(matches!(
            strict.coverage(1.0, SchedulerKind::ProportionalFair, Method::Exact),
            Err(Error::Instability { .. })
        ));
    }

    #[test]
    fn flipped_noise_sign_is_caught() {
        let model = make_3gpp_case();
        let m = CoverageModel::new(NetworkConfig::reference(1.0), &model).unwrap().with_options(EngineOptions {
            fault_flip_delta_sign: true,
            ..EngineOptions::default()
        });
        let v = m.coverage(1.0, SchedulerKind::RoundRobin, Method::UpperBound).unwrap().value;
        assert!(!(0.0..=1.0).contains(&v), "{v}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = make_3gpp_case();
        let cfg = NetworkConfig::reference(10.0);
        let one = UeCountDistribution::point_mass_one();
        assert!(serving_distance_pdf_los(0.0, 0, &cfg, &model).is_err());
        assert!(serving_distance_pdf_nlos(0.1, 7, &cfg, &model).is_err());
        assert!(conditional_coverage_exact(-1.0, 0, Branch::Los, &cfg, &model, &one, 1.0).is_err());
        let q = CoverageQuery {
            cfg,
            model: model.clone(),
            gamma: 0.0,
            scheduler: SchedulerKind::RoundRobin,
            method: Method::UpperBound,
        };
        assert!(coverage_probability(&q).is_err());
        let q = CoverageQuery { cfg: cfg.with_lambda(-1.0), gamma: 1.0, ..q };
        assert!(coverage_probability(&q).is_err());
    }

    #[test]
    fn serving_distance_quantile_inverts_cdf() {
        let model = make_3gpp_case();
        let m = CoverageModel::new(NetworkConfig::reference(30.0), &model).unwrap();
        for p in [0.1, 0.5, 0.99] {
            let r = m.serving_distance_quantile(p);
            assert!((m.serving_distance_cdf(r) - p).abs() < 1e-5);
        }
        let los = m.serving_los_probability();
        assert!(los > 0.0 && los < 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn conditional_upper_bounds_exact(
            log_lambda in 2.0f64..4.0,
            log_r in -2.3f64..-0.5,
            gamma_db in -10.0f64..10.0,
            los in any::<bool>(),
        ) {
            let model = make_3gpp_case();
            let cfg = NetworkConfig::reference(10f64.powf(log_lambda));
            let dist = active_ue_count_distribution(&cfg).unwrap();
            let r = 10f64.powf(log_r);
            let n = model.piece_index(r);
            let b = if los { Branch::Los } else { Branch::Nlos };
            let gamma = crate::units::db_to_linear(gamma_db);
            let m = CoverageModel::new(cfg, &model).unwrap();
            if let Ok((ex, err)) = m.conditional_exact(r, n, b, &dist, gamma) {
                let (ub, _) = m.conditional_upper(r, n, b, &dist, gamma);
                prop_assert!(ub >= ex - err - 1e-10, "{} < {}", ub, ex);
                prop_assert!((-1e-9..=1.0 + 1e-9).contains(&ex));
                prop_assert!((0.0..=1.0).contains(&ub));
            }
        }
    }
}
