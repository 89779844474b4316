//! Area spectral efficiency from coverage curves.
//!
//! With `x = ln(1 + gamma)` the integral `int p(gamma) / (1 + gamma) dgamma`
//! becomes `int p dx`, so curves are interpolated and integrated on that
//! axis with a monotone (Fritsch-Carlson) cubic.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::LN_2;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::coverage::{CoverageModel, Method};
use crate::error::{Error, Result};
use crate::fading::SchedulerKind;
use crate::netmodel::{active_bs_density, NetworkConfig};
use crate::pathloss::PathLossModel;

/// Stop extending the gamma grid once coverage drops below this.
pub const PCOV_FLOOR: f64 = 1e-4;
/// Largest SINR threshold (linear) on the gamma grid.
pub const GAMMA_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct AseQuery {
    pub cfg: NetworkConfig,
    pub model: PathLossModel,
    pub scheduler: SchedulerKind,
    pub method: Method,
    /// Minimum working SINR (linear).
    pub gamma0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AseResult {
    /// bps/Hz/km²
    pub value: f64,
    pub error: f64,
    pub lambda_tilde: f64,
    /// Coverage samples `(gamma, p)` the integral was built from.
    pub curve: Vec<(f64, f64)>,
    /// Any exact-to-upper-bound fallback seen while sampling the curve.
    pub fallback: Option<String>,
}

/// Monotone cubic Hermite interpolant of `p` against `x = ln(1 + gamma)`.
#[derive(Debug, Clone)]
struct MonotoneCurve {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCurve {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let secant: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = secant[0];
        slopes[n - 1] = secant[n - 2];
        for i in 1..n - 1 {
            slopes[i] = if secant[i - 1] * secant[i] <= 0.0 {
                0.0
            } else {
                0.5 * (secant[i - 1] + secant[i])
            };
        }
        for i in 0..n - 1 {
            if secant[i] == 0.0 {
                slopes[i] = 0.0;
                slopes[i + 1] = 0.0;
                continue;
            }
            let a = slopes[i] / secant[i];
            let b = slopes[i + 1] / secant[i];
            let h = a * a + b * b;
            if h > 9.0 {
                let t = 3.0 / h.sqrt();
                slopes[i] = t * a * secant[i];
                slopes[i + 1] = t * b * secant[i];
            }
        }
        Self { x, y, slopes }
    }

    fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.x[i + 1] - self.x[i];
        let t = (x - self.x[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.y[i]
            + (t3 - 2.0 * t2 + t) * h * self.slopes[i]
            + (-2.0 * t3 + 3.0 * t2) * self.y[i + 1]
            + (t3 - t2) * h * self.slopes[i + 1]
    }

    fn segment(&self, x: f64) -> usize {
        self.x.partition_point(|&v| v <= x).clamp(1, self.x.len() - 1) - 1
    }

    /// Exact integral of the cubic over `[a, b]` (two-point Gauss per segment).
    fn integral(&self, a: f64, b: f64) -> f64 {
        let g = 0.5 / 3f64.sqrt();
        let mut total = 0.0;
        for i in 0..self.x.len() - 1 {
            let lo = self.x[i].max(a);
            let hi = self.x[i + 1].min(b);
            if hi <= lo {
                continue;
            }
            let mid = 0.5 * (lo + hi);
            let w = hi - lo;
            total += 0.5 * w * (self.eval(mid - g * w) + self.eval(mid + g * w));
        }
        total
    }
}

fn validate_samples(samples: &[(f64, f64)]) -> Result<()> {
    if samples.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 coverage samples, got {}",
            samples.len()
        )));
    }
    for &(g, p) in samples {
        if !(g >= 0.0) || !g.is_finite() {
            return Err(Error::InsufficientData(format!("invalid threshold {g}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InsufficientData(format!("coverage {p} outside [0, 1]")));
        }
    }
    Ok(())
}

/// ASE from a sampled coverage curve: `lambda~/ln2 * int_{gamma0}^{gamma_last}
/// p / (1 + gamma) + lambda~ log2(1 + gamma0) p(gamma0)`.
pub fn ase_from_curve(samples: &[(f64, f64)], lambda_tilde: f64, gamma0: f64) -> Result<f64> {
    validate_samples(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if sorted.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InsufficientData("duplicate thresholds in coverage curve".into()));
    }
    if gamma0 < sorted[0].0 || gamma0 > sorted[sorted.len() - 1].0 {
        return Err(Error::InsufficientData(format!(
            "gamma0 = {gamma0} lies outside the sampled range"
        )));
    }
    let curve = MonotoneCurve::new(
        sorted.iter().map(|s| s.0.ln_1p()).collect(),
        sorted.iter().map(|s| s.1).collect(),
    );
    let x0 = gamma0.ln_1p();
    let xend = *curve.x.last().unwrap();
    let integral = curve.integral(x0, xend);
    Ok(lambda_tilde / LN_2 * integral + lambda_tilde * x0 / LN_2 * curve.eval(x0))
}

/// Memoised coverage values per (lambda, scheduler, method), keyed by threshold.
#[derive(Debug, Default)]
pub struct CurveCache {
    inner: Mutex<HashMap<(u64, SchedulerKind, Method), BTreeMap<u64, f64>>>,
}

impl CurveCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn get(&self, key: (u64, SchedulerKind, Method), gamma: f64) -> Option<f64> {
        self.inner.lock().unwrap().get(&key)?.get(&gamma.to_bits()).copied()
    }

    fn put(&self, key: (u64, SchedulerKind, Method), gamma: f64, p: f64) {
        self.inner
            .lock()
            .unwrap()
            .entry(key)
            .or_default()
            .insert(gamma.to_bits(), p);
    }
}

/// Absolute tolerance on the `int p dx` integral driving grid refinement.
const REFINE_TOL: f64 = 1e-5;
const INITIAL_STEP: f64 = 0.25;
const MIN_STEP: f64 = 1.0 / 64.0;

/// ASE of an analytic coverage curve.
pub fn ase(query: &AseQuery) -> Result<AseResult> {
    ase_cached(query, &CurveCache::new())
}

pub fn ase_cached(query: &AseQuery, cache: &CurveCache) -> Result<AseResult> {
    if !(query.gamma0 > 0.0) {
        return Err(Error::Domain(format!("gamma0 must be positive, got {}", query.gamma0)));
    }
    let lambda_tilde = active_bs_density(&query.cfg)?;
    let engine = CoverageModel::new(query.cfg, &query.model)?;
    let key = (query.cfg.lambda.to_bits(), query.scheduler, query.method);
    let fallback: Mutex<Option<String>> = Mutex::new(None);
    let quad_err: Mutex<f64> = Mutex::new(0.0);

    let eval = |x: f64| -> Result<f64> {
        let gamma = x.exp_m1();
        if let Some(p) = cache.get(key, gamma) {
            return Ok(p);
        }
        let r = engine.coverage(gamma, query.scheduler, query.method)?;
        if let Some(f) = r.fallback {
            fallback.lock().unwrap().get_or_insert(f);
        }
        let mut e = quad_err.lock().unwrap();
        *e = e.max(r.quad_error);
        let p = r.value.clamp(0.0, 1.0);
        cache.put(key, gamma, p);
        Ok(p)
    };
    let eval_many = |xs: &[f64]| -> Result<Vec<f64>> { xs.par_iter().map(|&x| eval(x)).collect() };

    let x0 = query.gamma0.ln_1p();
    let xcap = GAMMA_CAP.ln_1p();
    let mut points: Vec<(f64, f64)> = Vec::new();
    // extend the grid in batches until coverage falls below the floor
    let mut next = x0;
    'extend: loop {
        let batch: Vec<f64> = (0..8)
            .map(|i| next + i as f64 * INITIAL_STEP)
            .filter(|&x| x <= xcap)
            .collect();
        if batch.is_empty() {
            break;
        }
        let vals = eval_many(&batch)?;
        for (x, p) in batch.iter().zip(vals) {
            points.push((*x, p));
            if p < PCOV_FLOOR {
                break 'extend;
            }
        }
        next = batch.last().unwrap() + INITIAL_STEP;
    }
    if points.last().map(|p| p.0) < Some(xcap) && points.last().map(|p| p.1 >= PCOV_FLOOR) == Some(true) {
        let p = eval(xcap)?;
        points.push((xcap, p));
    }
    while points.len() < 4 {
        let x = points.last().unwrap().0 + INITIAL_STEP;
        let p = eval(x)?;
        points.push((x, p));
    }

    // refine intervals where linear and monotone-cubic integrals disagree
    let mut refine_err = 0.0;
    for _ in 0..8 {
        let curve = MonotoneCurve::new(points.iter().map(|p| p.0).collect(), points.iter().map(|p| p.1).collect());
        let mut mids = Vec::new();
        refine_err = 0.0;
        for w in points.windows(2) {
            let h = w[1].0 - w[0].0;
            let linear = 0.5 * h * (w[0].1 + w[1].1);
            let cubic = curve.integral(w[0].0, w[1].0);
            let diff = (linear - cubic).abs();
            refine_err += diff;
            if diff > REFINE_TOL * h && h > MIN_STEP {
                mids.push(0.5 * (w[0].0 + w[1].0));
            }
        }
        if mids.is_empty() {
            break;
        }
        let vals = eval_many(&mids)?;
        points.extend(mids.into_iter().zip(vals));
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    let samples: Vec<(f64, f64)> = points.iter().map(|&(x, p)| (x.exp_m1(), p)).collect();
    // monotone repair: coverage is non-increasing in gamma
    let mut samples = samples;
    for i in 1..samples.len() {
        if samples[i].1 > samples[i - 1].1 {
            samples[i].1 = samples[i - 1].1;
        }
    }
    let value = ase_from_curve(&samples, lambda_tilde, query.gamma0)?;
    let xs = points.last().unwrap().0 - x0;
    let quad = *quad_err.lock().unwrap();
    let error = lambda_tilde / LN_2 * (refine_err + quad * (xs + x0)) ;
    Ok(AseResult {
        value,
        error,
        lambda_tilde,
        curve: samples,
        fallback: fallback.into_inner().unwrap(),
    })
}
