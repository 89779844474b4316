//! Adaptive 21-point Gauss-Kronrod quadrature with interval bisection.
//!
//! Semi-infinite ranges are mapped onto (0, 1) with
//! `u = a + scale * t / (1 - t)`. Vector-valued integrands share one
//! subdivision, which is how a family of related integrals (for example a
//! Laplace transform at many arguments) is evaluated for the price of one.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_208_067_766,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];

// Gauss weights for the odd-indexed Kronrod nodes
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

/// Integration range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interval {
    Finite(f64, f64),
    /// `[a, +inf)`; `scale` sets where the mapped variable puts its midpoint.
    ToInfinity { a: f64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl QuadOptions {
    pub const fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            max_subdivisions: 2000,
        }
    }

    /// Default for integrals nested inside other integrals.
    pub const fn inner() -> Self {
        Self::new(1e-8, 0.0)
    }

    /// Default for outermost integrals.
    pub const fn outer() -> Self {
        Self::new(1e-6, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VecQuadResult {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut e = err.abs();
    if res_asc != 0.0 && e != 0.0 {
        e = res_asc * (200.0 * e / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        e = e.max(50.0 * f64::EPSILON * res_abs);
    }
    e
}

struct Panel {
    a: f64,
    b: f64,
    values: Vec<f64>,
    errors: Vec<f64>,
    key: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key)
    }
}

/// Integrand on the reference variable: maps the interval and applies the
/// Jacobian.
struct Mapped<F> {
    f: F,
    interval: Interval,
    buf: Vec<f64>,
}

impl<F: FnMut(f64, &mut [f64])> Mapped<F> {
    fn eval(&mut self, t: f64, out: &mut [f64]) {
        match self.interval {
            Interval::Finite(..) => (self.f)(t, out),
            Interval::ToInfinity { a, scale } => {
                let one_minus = 1.0 - t;
                let u = a + scale * t / one_minus;
                let jac = scale / (one_minus * one_minus);
                (self.f)(u, &mut self.buf);
                for (o, v) in out.iter_mut().zip(&self.buf) {
                    *o = if *v == 0.0 { 0.0 } else { v * jac };
                }
            }
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match self.interval {
            Interval::Finite(a, b) => (a, b),
            Interval::ToInfinity { .. } => (0.0, 1.0),
        }
    }
}

fn gk21<F: FnMut(f64, &mut [f64])>(
    f: &mut Mapped<F>,
    a: f64,
    b: f64,
    dim: usize,
    nodes: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    // row 0: center, rows 2j+1 / 2j+2: center -/+ half * XGK[j]
    f.eval(center, &mut nodes[..dim]);
    for j in 0..10 {
        let dx = half * XGK[j];
        let (lo, rest) = nodes[(2 * j + 1) * dim..].split_at_mut(dim);
        f.eval(center - dx, lo);
        f.eval(center + dx, &mut rest[..dim]);
    }
    let h = half.abs();
    let mut values = vec![0.0; dim];
    let mut errors = vec![0.0; dim];
    for c in 0..dim {
        let fc = nodes[c];
        let mut res_k = WGK[10] * fc;
        let mut res_g = 0.0;
        let mut res_abs = res_k.abs();
        for j in 0..10 {
            let lo = nodes[(2 * j + 1) * dim + c];
            let hi = nodes[(2 * j + 2) * dim + c];
            res_k += WGK[j] * (lo + hi);
            res_abs += WGK[j] * (lo.abs() + hi.abs());
            if j % 2 == 1 {
                res_g += WG[j / 2] * (lo + hi);
            }
        }
        let mean = 0.5 * res_k;
        let mut asc = WGK[10] * (fc - mean).abs();
        for j in 0..10 {
            let lo = nodes[(2 * j + 1) * dim + c];
            let hi = nodes[(2 * j + 2) * dim + c];
            asc += WGK[j] * ((lo - mean).abs() + (hi - mean).abs());
        }
        values[c] = res_k * half;
        errors[c] = rescale_error((res_k - res_g) * half, res_abs * h, asc * h);
    }
    (values, errors)
}

/// Integrates a vector-valued integrand of dimension `dim`. The stopping
/// rule requires every component to meet `max(abs_tol, rel_tol * |value|)`.
pub fn integrate_vec<F>(f: F, dim: usize, interval: Interval, opts: &QuadOptions) -> VecQuadResult
where
    F: FnMut(f64, &mut [f64]),
{
    let mut mapped = Mapped {
        f,
        interval,
        buf: vec![0.0; dim],
    };
    let (a, b) = mapped.bounds();
    if a == b {
        return VecQuadResult {
            values: vec![0.0; dim],
            errors: vec![0.0; dim],
            evaluations: 0,
            converged: true,
        };
    }
    let mut scratch = vec![0.0; 21 * dim];
    let (v0, e0) = gk21(&mut mapped, a, b, dim, &mut scratch);
    let mut evaluations = 21;
    let mut totals = v0.clone();
    let mut errs = e0.clone();

    let tol = |c: usize, totals: &[f64]| opts.abs_tol.max(opts.rel_tol * totals[c].abs());
    let key = |errors: &[f64], totals: &[f64]| -> f64 {
        errors
            .iter()
            .enumerate()
            .map(|(c, e)| e / tol(c, totals).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    };
    let done = |errs: &[f64], totals: &[f64]| (0..dim).all(|c| errs[c] <= tol(c, totals));

    let mut heap = BinaryHeap::new();
    heap.push(Panel {
        a,
        b,
        key: key(&e0, &totals),
        values: v0,
        errors: e0,
    });

    let mut converged = done(&errs, &totals);
    let mut subdivisions = 1;
    while !converged && subdivisions < opts.max_subdivisions {
        let Some(p) = heap.pop() else { break };
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            // interval can no longer be split in floating point
            heap.push(Panel { key: 0.0, ..p });
            break;
        }
        let (lv, le) = gk21(&mut mapped, p.a, mid, dim, &mut scratch);
        let (rv, re) = gk21(&mut mapped, mid, p.b, dim, &mut scratch);
        evaluations += 42;
        for c in 0..dim {
            totals[c] += lv[c] + rv[c] - p.values[c];
            errs[c] += le[c] + re[c] - p.errors[c];
        }
        heap.push(Panel {
            a: p.a,
            b: mid,
            key: key(&le, &totals),
            values: lv,
            errors: le,
        });
        heap.push(Panel {
            a: mid,
            b: p.b,
            key: key(&re, &totals),
            values: rv,
            errors: re,
        });
        subdivisions += 1;
        converged = done(&errs, &totals);
    }

    // re-add from the panels to shed accumulated rounding in the running sums
    let mut values = vec![0.0; dim];
    let mut errors = vec![0.0; dim];
    for p in heap.iter() {
        for c in 0..dim {
            values[c] += p.values[c];
            errors[c] += p.errors[c];
        }
    }
    if !converged {
        converged = done(&errors, &values);
    }
    VecQuadResult {
        values,
        errors,
        evaluations,
        converged,
    }
}

/// Scalar adaptive integration; never fails, reports convergence instead.
pub fn integrate<F>(mut f: F, interval: Interval, opts: &QuadOptions) -> QuadResult
where
    F: FnMut(f64) -> f64,
{
    let r = integrate_vec(|x, out: &mut [f64]| out[0] = f(x), 1, interval, opts);
    QuadResult {
        value: r.values[0],
        error: r.errors[0],
        evaluations: r.evaluations,
        converged: r.converged,
    }
}

/// Adaptive integration to absolute tolerance `tol`, returning
/// `(value, error_estimate)` or the best estimate inside an error when the
/// subdivision budget runs out.
pub fn quadrature<F>(f: F, interval: Interval, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let r = integrate(f, interval, &QuadOptions::new(tol, 0.0));
    if r.converged {
        Ok((r.value, r.error))
    } else {
        Err(Error::Quadrature {
            value: r.value,
            error: r.error,
        })
    }
}
