//! Lambda/gamma sweep producing one row per (lambda, gamma, scheduler).

use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use udnpf::ase::{ase_cached, AseQuery, CurveCache};
use udnpf::coverage::{CoverageModel, CoverageResult, Method};
use udnpf::mcsim::{CoverageEstimate, PairedOutcome, SimConfig, SimSummary, Simulator};
use udnpf::netmodel::active_ue_count_distribution;
use udnpf::SchedulerKind;

use crate::config::{McSpec, SweepSpec};

/// Analytic columns first, then the optional Monte Carlo ones.
pub const COLUMNS: [&str; 16] = [
    "lambda",
    "gamma_db",
    "scheduler",
    "lambda_tilde",
    "kmax",
    "pcov_exact",
    "pcov_ub",
    "ase",
    "pf_rr_ratio",
    "method_used",
    "quad_error",
    "wall_time",
    "errors",
    "pcov_mc",
    "mc_ci_lo",
    "mc_ci_hi",
];
pub const MC_COLUMNS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub lambda: f64,
    pub gamma_db: f64,
    pub scheduler: String,
    pub lambda_tilde: Option<f64>,
    pub kmax: Option<u64>,
    pub pcov_exact: Option<f64>,
    pub pcov_ub: Option<f64>,
    pub ase: Option<f64>,
    /// Ratio of PF to RR coverage under `method_used`.
    pub pf_rr_ratio: Option<f64>,
    pub method_used: String,
    pub quad_error: Option<f64>,
    /// Seconds spent on this lambda, shared by its rows.
    pub wall_time: f64,
    pub errors: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pcov_mc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_ci_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_ci_hi: Option<f64>,
}

impl Row {
    pub fn failed(&self) -> bool {
        !self.errors.is_empty()
    }

    /// Rounds every float to 12 significant digits so the text form is exact.
    fn rounded(mut self) -> Self {
        for v in [&mut self.lambda, &mut self.gamma_db, &mut self.wall_time] {
            *v = round12(*v);
        }
        for v in [
            &mut self.lambda_tilde,
            &mut self.pcov_exact,
            &mut self.pcov_ub,
            &mut self.ase,
            &mut self.pf_rr_ratio,
            &mut self.quad_error,
            &mut self.pcov_mc,
            &mut self.mc_ci_lo,
            &mut self.mc_ci_hi,
        ] {
            *v = v.map(round12);
        }
        self
    }

    pub fn field(&self, column: &str) -> String {
        let f = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        match column {
            "lambda" => fmt_num(self.lambda),
            "gamma_db" => fmt_num(self.gamma_db),
            "scheduler" => self.scheduler.clone(),
            "lambda_tilde" => f(self.lambda_tilde),
            "kmax" => self.kmax.map(|k| k.to_string()).unwrap_or_default(),
            "pcov_exact" => f(self.pcov_exact),
            "pcov_ub" => f(self.pcov_ub),
            "ase" => f(self.ase),
            "pf_rr_ratio" => f(self.pf_rr_ratio),
            "method_used" => self.method_used.clone(),
            "quad_error" => f(self.quad_error),
            "wall_time" => fmt_num(self.wall_time),
            "errors" => self.errors.clone(),
            "pcov_mc" => f(self.pcov_mc),
            "mc_ci_lo" => f(self.mc_ci_lo),
            "mc_ci_hi" => f(self.mc_ci_hi),
            _ => String::new(),
        }
    }
}

/// Shortest text that parses back to the same value; scientific notation
/// for very small or large magnitudes.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Per-lambda analytic results for one gamma and scheduler.
#[derive(Default)]
struct Point {
    exact: Option<CoverageResult>,
    ub: Option<CoverageResult>,
    fell_back: bool,
    errors: Vec<String>,
}

impl Point {
    fn chosen(&self, method: Method) -> Option<&CoverageResult> {
        match method {
            Method::Exact if self.fell_back => self.ub.as_ref(),
            Method::Exact => self.exact.as_ref(),
            Method::UpperBound => self.ub.as_ref(),
        }
    }

    fn method_used(&self, method: Method) -> &'static str {
        match (self.chosen(method), method) {
            (None, _) => "",
            (Some(_), Method::Exact) if self.fell_back => "upper_bound_fallback",
            (Some(_), Method::Exact) => "exact",
            (Some(_), Method::UpperBound) => "upper_bound",
        }
    }
}

pub fn run_sweep(spec: &SweepSpec, mc_dump: Option<&Path>) -> Vec<Row> {
    let per_lambda: Vec<Vec<Row>> = spec
        .lambdas
        .par_iter()
        .map(|&lambda| rows_for_lambda(spec, lambda, mc_dump))
        .collect();
    per_lambda.into_iter().flatten().map(Row::rounded).collect()
}

fn rows_for_lambda(spec: &SweepSpec, lambda: f64, mc_dump: Option<&Path>) -> Vec<Row> {
    let start = Instant::now();
    let cfg = spec.base.with_lambda(lambda);
    let method = spec.method.for_lambda(lambda);
    let gammas = spec.gammas();
    let schedulers = [SchedulerKind::ProportionalFair, SchedulerKind::RoundRobin];

    let mut shared_errors = Vec::new();
    let engine = CoverageModel::new(cfg, &spec.model);
    let kmax = match active_ue_count_distribution(&cfg) {
        Ok(d) => Some(d.kmax as u64),
        Err(e) => {
            shared_errors.push(format!("kmax: {e}"));
            None
        }
    };

    // points[g][s] for the two schedulers
    let mut points: Vec<[Point; 2]> = gammas.iter().map(|_| Default::default()).collect();
    match &engine {
        Ok(m) => {
            for (g, &gamma) in gammas.iter().enumerate() {
                for (s, &sched) in schedulers.iter().enumerate() {
                    let p = &mut points[g][s];
                    match m.coverage(gamma, sched, Method::UpperBound) {
                        Ok(r) => p.ub = Some(r),
                        Err(e) => p.errors.push(format!("upper bound: {e}")),
                    }
                    if method == Method::Exact {
                        match m.coverage(gamma, sched, Method::Exact) {
                            Ok(r) if r.fallback.is_some() => p.fell_back = true,
                            Ok(r) => p.exact = Some(r),
                            Err(e) => p.errors.push(format!("exact: {e}")),
                        }
                    }
                }
            }
        }
        Err(e) => shared_errors.push(format!("model: {e}")),
    }

    let ase: Vec<Option<Result<f64, String>>> = schedulers
        .iter()
        .map(|&sched| {
            if !spec.ase || !spec.schedulers.contains(&sched) {
                return None;
            }
            let q = AseQuery {
                cfg,
                model: spec.model.clone(),
                scheduler: sched,
                method,
                gamma0: spec.gamma0,
            };
            Some(ase_cached(&q, &CurveCache::new()).map(|r| r.value).map_err(|e| format!("ase: {e}")))
        })
        .collect();

    let mc = spec.mc.as_ref().map(|mc| run_mc(spec, mc, lambda, &gammas, mc_dump));
    let wall_time = start.elapsed().as_secs_f64();

    let mut rows = Vec::new();
    for (g, &gamma_db) in spec.gamma_db.iter().enumerate() {
        let chosen: Vec<Option<f64>> = points[g].iter().map(|p| p.chosen(method).map(|r| r.value)).collect();
        let ratio = match (chosen[0], chosen[1]) {
            (Some(pf), Some(rr)) if rr > 0.0 => Some(pf / rr),
            _ => None,
        };
        for &sched in &spec.schedulers {
            let s = if sched == SchedulerKind::ProportionalFair { 0 } else { 1 };
            let p = &points[g][s];
            let mut errors = shared_errors.clone();
            errors.extend(p.errors.iter().cloned());
            let ase_value = match &ase[s] {
                Some(Ok(v)) => Some(*v),
                Some(Err(e)) => {
                    errors.push(e.clone());
                    None
                }
                None => None,
            };
            let (pcov_mc, mc_ci_lo, mc_ci_hi) = match &mc {
                Some(Ok(est)) => {
                    let e = &est[s][g];
                    (Some(e.p_hat), Some(e.ci_lo), Some(e.ci_hi))
                }
                Some(Err(e)) => {
                    errors.push(format!("mc: {e}"));
                    (None, None, None)
                }
                None => (None, None, None),
            };
            rows.push(Row {
                lambda,
                gamma_db,
                scheduler: sched.short_name().to_string(),
                lambda_tilde: engine.as_ref().ok().map(|m| m.lambda_tilde),
                kmax,
                pcov_exact: p.exact.as_ref().map(|r| r.value),
                pcov_ub: p.ub.as_ref().map(|r| r.value),
                ase: ase_value,
                pf_rr_ratio: ratio,
                method_used: p.method_used(method).to_string(),
                quad_error: p.chosen(method).map(|r| r.quad_error),
                wall_time,
                errors: errors.join("; "),
                pcov_mc,
                mc_ci_lo,
                mc_ci_hi,
            });
        }
    }
    rows
}

/// Paired drops at one lambda; returns estimates indexed [PF, RR][gamma].
fn run_mc(
    spec: &SweepSpec,
    mc: &McSpec,
    lambda: f64,
    gammas: &[f64],
    dump: Option<&Path>,
) -> Result<[Vec<CoverageEstimate>; 2]> {
    let mut cfg = SimConfig::new(
        spec.base.with_lambda(lambda),
        spec.model.clone(),
        SchedulerKind::ProportionalFair,
        mc.mode,
    )
    .with_drops(mc.drops)
    .with_seed(mc.seed)
    .with_fading(mc.fading);
    if let Some(r) = mc.radius_km {
        cfg = cfg.with_radius(r);
    }
    let drops = Simulator::new(cfg.clone())?.run_all_paired();
    let est = |s: SchedulerKind| -> Vec<CoverageEstimate> {
        gammas
            .iter()
            .map(|&g| CoverageEstimate::from_sinrs(drops.iter().map(|d| d.for_scheduler(s).sinr), g))
            .collect()
    };
    if let Some(dir) = dump {
        dump_drops(dir, &cfg, &drops, gammas)?;
    }
    Ok([est(SchedulerKind::ProportionalFair), est(SchedulerKind::RoundRobin)])
}

#[derive(Serialize)]
struct DropRecord {
    drop: usize,
    n_bs: usize,
    n_active: usize,
    serving_distance_km: f64,
    serving_branch: String,
    k_served: usize,
    i_agg_w: f64,
    pf_gain: f64,
    pf_sinr: f64,
    rr_gain: f64,
    rr_sinr: f64,
}

fn dump_drops(dir: &Path, cfg: &SimConfig, drops: &[PairedOutcome], gammas: &[f64]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tag = format!("lambda_{}", cfg.base.lambda);
    let path = dir.join(format!("drops_{tag}.csv"));
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    for (i, d) in drops.iter().enumerate() {
        w.serialize(DropRecord {
            drop: i,
            n_bs: d.n_bs,
            n_active: d.n_active,
            serving_distance_km: d.pf.serving_distance,
            serving_branch: format!("{:?}", d.pf.serving_branch).to_lowercase(),
            k_served: d.pf.k_served,
            i_agg_w: d.pf.i_agg,
            pf_gain: d.pf.gain,
            pf_sinr: d.pf.sinr,
            rr_gain: d.rr.gain,
            rr_sinr: d.rr.sinr,
        })?;
    }
    w.flush()?;

    let summaries: Vec<SimSummary> = [SchedulerKind::ProportionalFair, SchedulerKind::RoundRobin]
        .into_iter()
        .map(|s| {
            let mut c = cfg.clone();
            c.scheduler = s;
            SimSummary::from_paired(&c, drops, gammas)
        })
        .collect();
    let path = dir.join(format!("summary_{tag}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&summaries)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round12_keeps_twelve_digits() {
        assert_eq!(round12(0.123456789012345), 0.123456789012);
        assert_eq!(round12(987654321.987654), 987654321.988);
        assert_eq!(round12(0.0), 0.0);
        let x = round12(std::f64::consts::PI);
        assert_eq!(x.to_string().parse::<f64>().unwrap(), x);
    }
}
