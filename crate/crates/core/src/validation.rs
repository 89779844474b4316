//! Acceptance checks shared by the `acceptance` test target and the CLI
//! `validate` command. Each check returns a [`CriterionOutcome`]; none of
//! them panic on a numerical miss.

use std::time::Instant;

use serde::Serialize;

use crate::ase::{ase_cached, AseQuery, CurveCache};
use crate::coverage::{laplace_interference_los, laplace_interference_nlos, CoverageModel, Method};
use crate::error::Result;
use crate::fading::{pf_gain_ccdf, sample_pf_gain, FadingKind, SchedulerKind};
use crate::mcsim::{CoverageEstimate, GapEstimate, SimConfig, SimMode, Simulator};
use crate::netmodel::{active_ue_count_distribution, NetworkConfig, UeCountDistribution};
use crate::pathloss::{make_3gpp_case, Branch, PathLossModel};
use crate::quadrature::{integrate, Interval, QuadOptions};
use crate::units::db_to_linear;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {} [{}] {}: {} ({:.1} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub master_seed: u64,
    /// Multiplies every Monte Carlo drop count (1.0 = full size).
    pub drop_scale: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            master_seed: 20_240_601,
            drop_scale: 1.0,
        }
    }
}

impl ValidationOptions {
    fn drops(&self, n: usize) -> usize {
        ((n as f64 * self.drop_scale).round() as usize).max(100)
    }
}

pub const CRITERIA: [u8; 8] = [1, 2, 3, 4, 5, 6, 7, 8];

pub fn run_criterion(id: u8, opts: &ValidationOptions) -> CriterionOutcome {
    let start = Instant::now();
    let (name, res) = match id {
        1 => ("ASE at 1000 BSs/km2", ase_reproduction()),
        2 => ("sparse PF/RR coverage ratio", sparse_gain(opts)),
        3 => ("upper bound vs simulation", upper_bound_quality(opts)),
        4 => ("PF/RR convergence in UDN", udn_convergence()),
        5 => ("truncation point at lambda = 10", kmax_example()),
        6 => ("model-faithful simulation vs exact", oracle_equivalence(opts)),
        7 => ("property suite", property_suite(opts)),
        8 => ("Rician narrows the PF-RR gap", rician_gap(opts)),
        _ => ("unknown", Ok((false, format!("no criterion {id}")))),
    };
    let (passed, detail) = res.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionOutcome {
        id,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all(opts: &ValidationOptions) -> Vec<CriterionOutcome> {
    CRITERIA.iter().map(|&id| run_criterion(id, opts)).collect()
}

type Check = Result<(bool, String)>;

fn coverage(lambda: f64, model: &PathLossModel, gamma: f64, s: SchedulerKind, m: Method) -> Result<f64> {
    Ok(CoverageModel::new(NetworkConfig::reference(lambda), model)?.coverage(gamma, s, m)?.value)
}

fn ase_reproduction() -> Check {
    let model = make_3gpp_case();
    let cache = CurveCache::new();
    let query = |scheduler| AseQuery {
        cfg: NetworkConfig::reference(1000.0),
        model: model.clone(),
        scheduler,
        method: Method::Exact,
        gamma0: 1.0,
    };
    let pf = ase_cached(&query(SchedulerKind::ProportionalFair), &cache)?;
    let rr = ase_cached(&query(SchedulerKind::RoundRobin), &cache)?;
    let gain = pf.value / rr.value - 1.0;
    let ok_pf = (pf.value / 590.1 - 1.0).abs() <= 0.05;
    let ok_rr = (rr.value / 564.6 - 1.0).abs() <= 0.05;
    let ok_gain = (gain - 0.0452).abs() <= 0.01;
    Ok((
        ok_pf && ok_rr && ok_gain && pf.fallback.is_none() && rr.fallback.is_none(),
        format!(
            "PF {:.2} (target 590.1 +-5%), RR {:.2} (target 564.6 +-5%), gain {:.2}% (target 4.52 +-1 pp)",
            pf.value,
            rr.value,
            100.0 * gain
        ),
    ))
}

fn full_drop(lambda: f64, scheduler: SchedulerKind, n: usize, seed: u64) -> SimConfig {
    SimConfig::new(NetworkConfig::reference(lambda), make_3gpp_case(), scheduler, SimMode::FullDrop)
        .with_drops(n)
        .with_seed(seed)
}

fn sparse_gain(opts: &ValidationOptions) -> Check {
    let cfg = full_drop(1.0, SchedulerKind::ProportionalFair, opts.drops(20_000), opts.master_seed);
    let drops = Simulator::new(cfg)?.run_all_paired();
    let pf = CoverageEstimate::from_sinrs(drops.iter().map(|d| d.pf.sinr), 1.0);
    let rr = CoverageEstimate::from_sinrs(drops.iter().map(|d| d.rr.sinr), 1.0);
    let ratio = pf.p_hat / rr.p_hat;
    Ok((
        (2.34..=3.16).contains(&ratio),
        format!(
            "{} drops: PF {:.4}, RR {:.4}, ratio {:.3} (target [2.34, 3.16])",
            drops.len(),
            pf.p_hat,
            rr.p_hat,
            ratio
        ),
    ))
}

fn upper_bound_quality(opts: &ValidationOptions) -> Check {
    let model = make_3gpp_case();
    let mut ok = true;
    let mut max_gap = 0.0f64;
    let mut parts = Vec::new();
    for (i, lambda) in [1.0, 3.0, 10.0, 30.0, 100.0].into_iter().enumerate() {
        let m = CoverageModel::new(NetworkConfig::reference(lambda), &model)?;
        let ub = m.coverage(1.0, SchedulerKind::ProportionalFair, Method::UpperBound)?;
        let ex = m.coverage(1.0, SchedulerKind::ProportionalFair, Method::Exact)?;
        let cfg = full_drop(
            lambda,
            SchedulerKind::ProportionalFair,
            opts.drops(10_000),
            opts.master_seed + i as u64,
        );
        let est = CoverageEstimate::from_sinrs(Simulator::new(cfg)?.run_all().iter().map(|d| d.sinr), 1.0);
        let gap = (ub.value - est.p_hat).abs();
        max_gap = max_gap.max(gap);
        let gap_ok = gap <= 0.04 + 3.0 * est.sigma();
        let exact_ran = ex.fallback.is_none();
        let dom_ok = !exact_ran || ub.value >= ex.value - ub.quad_error - ex.quad_error;
        ok &= gap_ok && dom_ok;
        parts.push(format!(
            "lambda {lambda}: UB {:.4} MC {:.4}+-{:.4} exact {}",
            ub.value,
            est.p_hat,
            est.sigma(),
            if exact_ran { format!("{:.4}", ex.value) } else { "unstable".into() }
        ));
    }
    Ok((ok, format!("max |UB - MC| {:.4}; {}", max_gap, parts.join("; "))))
}

fn udn_convergence() -> Check {
    let model = make_3gpp_case();
    let mut ratios = Vec::new();
    for lambda in [100.0, 1000.0, 1e4] {
        let pf = coverage(lambda, &model, 1.0, SchedulerKind::ProportionalFair, Method::Exact)?;
        let rr = coverage(lambda, &model, 1.0, SchedulerKind::RoundRobin, Method::Exact)?;
        ratios.push(pf / rr);
    }
    let last = ratios[2];
    let monotone = ratios.windows(2).all(|w| w[1] <= w[0]);
    Ok((
        (last - 1.0).abs() <= 0.01 && monotone,
        format!(
            "PF/RR at lambda 1e2, 1e3, 1e4: {:.5}, {:.5}, {:.5}",
            ratios[0], ratios[1], ratios[2]
        ),
    ))
}

fn kmax_example() -> Check {
    let d = active_ue_count_distribution(&NetworkConfig::reference(10.0))?;
    Ok((d.kmax == 102, format!("K~max = {} (target 102), tail mass {:.2e}", d.kmax, d.mass_deficit)))
}

fn oracle_equivalence(opts: &ValidationOptions) -> Check {
    let model = make_3gpp_case();
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, lambda) in [100.0, 1000.0].into_iter().enumerate() {
        let exact = coverage(lambda, &model, 1.0, SchedulerKind::ProportionalFair, Method::Exact)?;
        let cfg = SimConfig::new(
            NetworkConfig::reference(lambda),
            model.clone(),
            SchedulerKind::ProportionalFair,
            SimMode::ModelFaithful,
        )
        .with_drops(opts.drops(100_000))
        .with_seed(opts.master_seed + 100 + i as u64);
        let est = CoverageEstimate::from_sinrs(Simulator::new(cfg)?.run_all().iter().map(|d| d.sinr), 1.0);
        let diff = (est.p_hat - exact).abs();
        ok &= diff <= 0.02;
        parts.push(format!("lambda {lambda}: MC {:.4} exact {:.4} diff {:.4}", est.p_hat, exact, diff));
    }
    Ok((ok, parts.join("; ")))
}

fn rician_gap(opts: &ValidationOptions) -> Check {
    let n = opts.drops(100_000);
    let mut gaps = Vec::new();
    for fading in [FadingKind::Rayleigh, FadingKind::RicianDistanceDependent] {
        let cfg = full_drop(1000.0, SchedulerKind::ProportionalFair, n, opts.master_seed + 200).with_fading(fading);
        gaps.push(GapEstimate::from_paired(&Simulator::new(cfg)?.run_all_paired(), 1.0));
    }
    let (ray, ric) = (gaps[0], gaps[1]);
    Ok((
        ric.gap < ray.gap && ric.ci_hi < ray.ci_lo,
        format!(
            "{n} paired drops each: Rayleigh gap {:.4} [{:.4}, {:.4}], Rician gap {:.4} [{:.4}, {:.4}]",
            ray.gap, ray.ci_lo, ray.ci_hi, ric.gap, ric.ci_lo, ric.ci_hi
        ),
    ))
}

fn property_suite(opts: &ValidationOptions) -> Check {
    let mut failures: Vec<String> = Vec::new();
    let mut note = |ok: bool, what: String| {
        if !ok {
            failures.push(what);
        }
    };
    let model = make_3gpp_case();

    // serving-distance normalization
    for lambda in [1.0, 100.0, 1e4] {
        let m = CoverageModel::new(NetworkConfig::reference(lambda), &model)?;
        let total = serving_mass(&m);
        note((total - 1.0).abs() <= 1e-6, format!("normalization {total} at lambda {lambda}"));
    }

    // Laplace transform at zero and monotone in s
    let cfg = NetworkConfig::reference(100.0);
    for r in [0.01, 0.05, 0.2] {
        for branch in [Branch::Los, Branch::Nlos] {
            let lap = |s: f64| match branch {
                Branch::Los => laplace_interference_los(s, r, &cfg, &model),
                Branch::Nlos => laplace_interference_nlos(s, r, &cfg, &model),
            };
            note(lap(0.0)? == 1.0, format!("L(0) != 1 at r {r}"));
            let mut prev = 1.0;
            for e in -2..=14 {
                let v = lap(10f64.powi(e))?;
                note(v > 0.0 && v <= prev, format!("L not monotone at r {r}, s 1e{e}"));
                prev = v;
            }
        }
    }

    // PF >= RR on a 10 x 5 grid, and RR equals PF with a single UE
    let one = UeCountDistribution::point_mass_one();
    for i in 0..10 {
        let lambda = 10f64.powf(i as f64 * 4.0 / 9.0);
        let m = CoverageModel::new(NetworkConfig::reference(lambda), &model)?;
        let method = Method::auto(lambda);
        for db in [-10.0, -5.0, 0.0, 5.0, 10.0] {
            let g = db_to_linear(db);
            let pf = m.coverage(g, SchedulerKind::ProportionalFair, method)?;
            let rr = m.coverage(g, SchedulerKind::RoundRobin, method)?;
            note(
                pf.value >= rr.value - pf.quad_error - rr.quad_error,
                format!("PF {} < RR {} at lambda {lambda:.3}, {db} dB", pf.value, rr.value),
            );
            if db == 0.0 {
                let pf1 = m.coverage_with(g, &one, method)?;
                note(
                    (pf1.value - rr.value).abs() <= 1e-9,
                    format!("RR {} vs single-UE PF {} at lambda {lambda:.3}", rr.value, pf1.value),
                );
            }
        }
    }

    // mean of the best of ten exponentials
    let h10: f64 = (1..=10).map(|i| 1.0 / i as f64).sum();
    let mean = integrate(
        |y| pf_gain_ccdf(y, 10).unwrap_or(f64::NAN),
        Interval::ToInfinity { a: 0.0, scale: 1.0 },
        &QuadOptions::new(1e-12, 1e-12),
    )
    .value;
    note((mean - h10).abs() < 1e-9, format!("CCDF mean {mean} vs H10 {h10}"));
    {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.master_seed);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_pf_gain(10, &mut rng).0).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt();
        note((m - h10).abs() <= 3.0 * sd, format!("sample mean {m} vs H10 {h10} (sigma {sd})"));
    }

    // quadrature references
    let q = |f: &dyn Fn(f64) -> f64, iv: Interval| integrate(f, iv, &QuadOptions::new(1e-12, 1e-12)).value;
    let e = q(&|u: f64| (-u).exp(), Interval::ToInfinity { a: 0.0, scale: 1.0 });
    note((e - 1.0).abs() <= 1e-10, format!("int exp(-u) = {e}"));
    let s = q(&|u: f64| u.powf(-0.5), Interval::Finite(0.0, 1.0));
    note((s - 2.0).abs() <= 1e-6, format!("int u^-1/2 = {s}"));

    // bitwise reproducibility under 1 and 8 workers
    for mode in [SimMode::ModelFaithful, SimMode::FullDrop] {
        let mut cfg = full_drop(30.0, SchedulerKind::ProportionalFair, 200, opts.master_seed);
        cfg.mode = mode;
        let sim = Simulator::new(cfg)?;
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map(|p| p.install(|| sim.run_all_paired()))
        };
        let same = match (run(1), run(8)) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        };
        note(same, format!("{mode:?} drops differ between 1 and 8 workers"));
    }

    let ok = failures.is_empty();
    let detail = if ok {
        "normalization, Laplace, PF >= RR grid, RR identity, H10, quadrature, reproducibility".to_string()
    } else {
        failures.join("; ")
    };
    Ok((ok, detail))
}

/// Total mass of the serving-distance densities over all pieces and branches.
pub fn serving_mass(m: &CoverageModel) -> f64 {
    let opts = QuadOptions::new(1e-12, 1e-10);
    let hint = 0.5 / m.cfg.lambda.sqrt();
    let mut total = 0.0;
    for (n, piece) in m.model.pieces().iter().enumerate() {
        let interval = if piece.d_hi.is_finite() {
            Interval::Finite(piece.d_lo, piece.d_hi)
        } else {
            Interval::ToInfinity {
                a: piece.d_lo,
                scale: piece.d_lo.max(hint),
            }
        };
        for b in [Branch::Los, Branch::Nlos] {
            total += integrate(|r| m.serving_pdf(r, n, b), interval, &opts).value;
        }
    }
    total
}
