//! Multi-piece LoS/NLoS path loss.
//!
//! Every distance in this module is in km: the reference gains of the 3GPP
//! pico-cell fit are defined at 1 km. Configuration files speak meters and
//! convert at the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Los,
    Nlos,
}

impl Branch {
    pub fn other(self) -> Self {
        match self {
            Branch::Los => Branch::Nlos,
            Branch::Nlos => Branch::Los,
        }
    }
}

/// LoS probability law of one piece. Lengths are in km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LosProbability {
    Constant { p: f64 },
    /// 1 - coeff * exp(-length / r)
    OneMinusExpInverse { coeff: f64, length: f64 },
    /// coeff * exp(-r / length)
    ExpDecay { coeff: f64, length: f64 },
    /// clamp(intercept - slope * r, 0, 1)
    Linear { intercept: f64, slope: f64 },
}

impl LosProbability {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            LosProbability::Constant { p } => p,
            LosProbability::OneMinusExpInverse { coeff, length } => {
                if r <= 0.0 {
                    1.0
                } else {
                    1.0 - coeff * (-length / r).exp()
                }
            }
            LosProbability::ExpDecay { coeff, length } => coeff * (-r / length).exp(),
            LosProbability::Linear { intercept, slope } => (intercept - slope * r).clamp(0.0, 1.0),
        }
    }
}

/// One distance band `(d_lo, d_hi]` with power-law LoS and NLoS gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossPiece {
    pub d_lo: f64,
    pub d_hi: f64,
    pub a_los: f64,
    pub a_nlos: f64,
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    pub los_prob: LosProbability,
}

impl PathLossPiece {
    pub fn gain(&self, r: f64, branch: Branch) -> f64 {
        let (a, alpha) = self.coeffs(branch);
        a * r.powf(-alpha)
    }

    pub fn coeffs(&self, branch: Branch) -> (f64, f64) {
        match branch {
            Branch::Los => (self.a_los, self.alpha_los),
            Branch::Nlos => (self.a_nlos, self.alpha_nlos),
        }
    }

    fn contains(&self, r: f64, first: bool) -> bool {
        (r > self.d_lo || (first && r >= self.d_lo)) && r <= self.d_hi
    }
}

/// Ordered pieces tiling (0, +inf).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PathLossPiece>", into = "Vec<PathLossPiece>")]
pub struct PathLossModel {
    pieces: Vec<PathLossPiece>,
}

impl TryFrom<Vec<PathLossPiece>> for PathLossModel {
    type Error = Error;

    fn try_from(pieces: Vec<PathLossPiece>) -> Result<Self> {
        PathLossModel::new(pieces)
    }
}

impl From<PathLossModel> for Vec<PathLossPiece> {
    fn from(m: PathLossModel) -> Self {
        m.pieces
    }
}

/// Parameters of the 3GPP pico-cell case.
pub mod gpp {
    pub const A_LOS: f64 = 4.168_693_834_703_355e-11; // 10^-10.38
    pub const A_NLOS: f64 = 2.884_031_503_126_606e-15; // 10^-14.54
    pub const ALPHA_LOS: f64 = 2.09;
    pub const ALPHA_NLOS: f64 = 3.75;
    /// km
    pub const R1: f64 = 0.156;
    /// km
    pub const R2: f64 = 0.030;
}

/// The two-piece 3GPP case: single power laws on both pieces, LoS
/// probability `1 - 5 exp(-R1/r)` up to `d1 = R1 / ln 10` and `5 exp(-r/R2)`
/// beyond.
pub fn make_3gpp_case() -> PathLossModel {
    let d1 = gpp::R1 / std::f64::consts::LN_10;
    let piece = |d_lo, d_hi, los_prob| PathLossPiece {
        d_lo,
        d_hi,
        a_los: gpp::A_LOS,
        a_nlos: gpp::A_NLOS,
        alpha_los: gpp::ALPHA_LOS,
        alpha_nlos: gpp::ALPHA_NLOS,
        los_prob,
    };
    PathLossModel::new(vec![
        piece(
            0.0,
            d1,
            LosProbability::OneMinusExpInverse {
                coeff: 5.0,
                length: gpp::R1,
            },
        ),
        piece(
            d1,
            f64::INFINITY,
            LosProbability::ExpDecay {
                coeff: 5.0,
                length: gpp::R2,
            },
        ),
    ])
    .expect("3GPP case is a valid model")
}

/// Upper end of the [`los_cutoff_distance`] search.
const CUTOFF_SEARCH_LIMIT: f64 = 1e4;

impl PathLossModel {
    pub fn new(pieces: Vec<PathLossPiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidConfig("path loss model needs at least one piece".into()));
        }
        if pieces[0].d_lo != 0.0 {
            return Err(Error::InvalidConfig("first piece must start at 0".into()));
        }
        if pieces.last().unwrap().d_hi != f64::INFINITY {
            return Err(Error::InvalidConfig("last piece must extend to infinity".into()));
        }
        for (i, p) in pieces.iter().enumerate() {
            if !(p.d_lo < p.d_hi) {
                return Err(Error::InvalidConfig(format!("piece {i} has empty range")));
            }
            if i > 0 && pieces[i - 1].d_hi != p.d_lo {
                return Err(Error::InvalidConfig(format!("pieces {} and {i} do not tile", i - 1)));
            }
            if !(p.a_los > 0.0 && p.a_nlos > 0.0) {
                return Err(Error::InvalidConfig(format!("piece {i} gains must be positive")));
            }
            if !(p.alpha_los > 0.0 && p.alpha_nlos > 0.0) {
                return Err(Error::InvalidConfig(format!("piece {i} exponents must be positive")));
            }
            let hi = if p.d_hi.is_finite() { p.d_hi } else { p.d_lo.max(1e-3) * 1e4 };
            let lo = if p.d_lo > 0.0 { p.d_lo } else { hi * 1e-6 };
            let mut prev = f64::INFINITY;
            for j in 0..=200 {
                let r = lo * (hi / lo).powf(j as f64 / 200.0);
                let v = p.los_prob.eval(r);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidConfig(format!(
                        "piece {i} LoS probability {v} at r = {r} km is outside [0, 1]"
                    )));
                }
                if v > prev + 1e-12 {
                    return Err(Error::InvalidConfig(format!(
                        "piece {i} LoS probability increases at r = {r} km"
                    )));
                }
                prev = v;
            }
        }
        for i in 1..pieces.len() {
            let d = pieces[i].d_lo;
            for b in [Branch::Los, Branch::Nlos] {
                if pieces[i].gain(d, b) > pieces[i - 1].gain(d, b) {
                    return Err(Error::InvalidConfig(format!(
                        "{b:?} path loss is not decreasing across the boundary at {d} km"
                    )));
                }
            }
            let left = pieces[i - 1].los_prob.eval(d);
            let right = pieces[i].los_prob.eval(d);
            if right > left {
                log::debug!(
                    "LoS probability jumps up at {d} km ({left:.4} -> {right:.4}); kept as defined"
                );
            }
        }
        Ok(Self { pieces })
    }

    /// One-piece model with a single power law on both branches and a fixed
    /// LoS probability.
    pub fn single_slope(a: f64, alpha: f64, los_prob: f64) -> Result<Self> {
        Self::new(vec![PathLossPiece {
            d_lo: 0.0,
            d_hi: f64::INFINITY,
            a_los: a,
            a_nlos: a,
            alpha_los: alpha,
            alpha_nlos: alpha,
            los_prob: LosProbability::Constant { p: los_prob },
        }])
    }

    pub fn pieces(&self) -> &[PathLossPiece] {
        &self.pieces
    }

    pub fn num_pieces(&self) -> usize {
        self.pieces.len()
    }

    /// Piece boundaries `d_1 .. d_{N-1}` (finite interior points).
    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.pieces[1..].iter().map(|p| p.d_lo)
    }

    pub fn piece_index(&self, r: f64) -> usize {
        self.pieces
            .iter()
            .enumerate()
            .position(|(i, p)| p.contains(r, i == 0))
            .unwrap_or(self.pieces.len() - 1)
    }

    pub fn piece(&self, n: usize) -> &PathLossPiece {
        &self.pieces[n]
    }

    /// Gain without the domain check; callers guarantee r > 0.
    #[inline]
    pub fn gain(&self, r: f64, branch: Branch) -> f64 {
        self.pieces[self.piece_index(r)].gain(r, branch)
    }

    #[inline]
    pub fn los_prob(&self, r: f64) -> f64 {
        self.pieces[self.piece_index(r)].los_prob.eval(r)
    }

    /// Generalised inverse of the assembled `branch` law: the distance at
    /// which it falls to `target`, or the piece boundary when `target` sits
    /// inside a downward jump.
    pub fn inverse_gain(&self, branch: Branch, target: f64) -> f64 {
        for (i, p) in self.pieces.iter().enumerate() {
            let upper = if i == 0 { f64::INFINITY } else { p.gain(p.d_lo, branch) };
            if target >= upper {
                return p.d_lo;
            }
            let lower = if p.d_hi.is_finite() { p.gain(p.d_hi, branch) } else { 0.0 };
            if target >= lower {
                let (a, alpha) = p.coeffs(branch);
                return (a / target).powf(1.0 / alpha).clamp(p.d_lo, p.d_hi);
            }
        }
        f64::INFINITY
    }

    /// Same inverse computed by bracketed bisection on the assembled law.
    pub fn inverse_gain_bisection(&self, branch: Branch, target: f64) -> f64 {
        let mut lo = 1e-12;
        let mut hi = 1.0;
        while self.gain(hi, branch) > target {
            hi *= 2.0;
            if hi > 1e12 {
                return f64::INFINITY;
            }
        }
        while self.gain(lo, branch) <= target {
            lo /= 2.0;
            if lo < 1e-300 {
                return 0.0;
            }
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if self.gain(mid, branch) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo) <= 1e-15 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Smallest distance beyond which the LoS probability never exceeds
    /// `threshold`, or infinity when no such distance is found.
    pub fn los_cutoff_distance(&self, threshold: f64) -> f64 {
        let last = self.pieces.last().unwrap();
        let far = last.d_lo.max(1.0) * CUTOFF_SEARCH_LIMIT;
        if last.los_prob.eval(far) > threshold {
            return f64::INFINITY;
        }
        for p in self.pieces.iter().rev() {
            let hi = if p.d_hi.is_finite() { p.d_hi } else { far };
            let start = if p.d_lo > 0.0 { p.d_lo * (1.0 + 1e-12) } else { 1e-12 };
            if p.los_prob.eval(start) <= threshold {
                continue;
            }
            // per-piece laws are non-increasing
            let (mut lo, mut hi) = (start, hi);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if p.los_prob.eval(mid) > threshold {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return hi;
        }
        0.0
    }
}

/// Path-loss gain with the domain check.
pub fn pathloss(model: &PathLossModel, r: f64, branch: Branch) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {r} km")));
    }
    Ok(model.gain(r, branch))
}

pub fn los_probability(model: &PathLossModel, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {r} km")));
    }
    Ok(model.los_prob(r))
}

/// Distance `r1` at which the assembled NLoS law equals the LoS law of
/// piece `n` at `r`.
pub fn invert_nlos_to_los(model: &PathLossModel, n: usize, r: f64) -> f64 {
    model.inverse_gain(Branch::Nlos, model.piece(n).gain(r, Branch::Los))
}

/// Distance `r2` at which the assembled LoS law equals the NLoS law of
/// piece `n` at `r`.
pub fn invert_los_to_nlos(model: &PathLossModel, n: usize, r: f64) -> f64 {
    model.inverse_gain(Branch::Los, model.piece(n).gain(r, Branch::Nlos))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gpp_constants() {
        assert!((gpp::A_LOS / 10f64.powf(-10.38) - 1.0).abs() < 1e-14);
        assert!((gpp::A_NLOS / 10f64.powf(-14.54) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn breakpoint_is_67_75_m() {
        let m = make_3gpp_case();
        let d1 = m.breakpoints().next().unwrap();
        assert!((d1 * 1000.0 - 67.75).abs() < 0.005, "{d1}");
        assert!((m.piece(0).los_prob.eval(d1) - 0.5).abs() < 1e-12);
        assert!((m.piece(1).los_prob.eval(d1) - 0.5228).abs() < 1e-3);
    }

    #[test]
    fn gain_examples() {
        let m = make_3gpp_case();
        assert_eq!(pathloss(&m, 1.0, Branch::Los).unwrap(), gpp::A_LOS);
        let l = pathloss(&m, 0.05, Branch::Los).unwrap().log10();
        assert!((l + 7.661).abs() < 1e-3, "{l}");
        let nl = pathloss(&m, 0.05, Branch::Nlos).unwrap().log10();
        assert!((nl + 9.661).abs() < 1e-3, "{nl}");
        // 3GPP dB forms: 103.8 + 20.9 log10(R) and 145.4 + 37.5 log10(R)
        let db = |g: f64| -10.0 * g.log10();
        assert!((db(m.gain(0.05, Branch::Los)) - (103.8 + 20.9 * 0.05f64.log10())).abs() < 1e-9);
        assert!((db(m.gain(0.05, Branch::Nlos)) - (145.4 + 37.5 * 0.05f64.log10())).abs() < 1e-9);
    }

    #[test]
    fn los_probability_examples() {
        let m = make_3gpp_case();
        assert!((los_probability(&m, 1e-6).unwrap() - 1.0).abs() < 1e-12);
        let v = los_probability(&m, 0.04828).unwrap();
        assert!((v - 0.803).abs() < 1e-3, "{v}");
        let v = los_probability(&m, 0.3).unwrap();
        assert!((v - 2.27e-4).abs() < 1e-6, "{v}");
    }

    #[test]
    fn domain_errors() {
        let m = make_3gpp_case();
        assert!(pathloss(&m, 0.0, Branch::Los).is_err());
        assert!(los_probability(&m, -1.0).is_err());
    }

    #[test]
    fn r2_at_one_km() {
        let m = make_3gpp_case();
        let r2 = invert_los_to_nlos(&m, 1, 1.0);
        let want = 10f64.powf(4.16 / 2.09);
        assert!((r2 / want - 1.0).abs() < 1e-12, "{r2}");
        assert!((r2 - 97.82).abs() < 0.01, "{r2}");
    }

    #[test]
    fn rejects_gaps_and_increasing_laws() {
        let mut p = make_3gpp_case().pieces().to_vec();
        p[1].d_lo = 0.1;
        assert!(PathLossModel::new(p).is_err());

        let mut p = make_3gpp_case().pieces().to_vec();
        p[1].a_los *= 1e3;
        assert!(PathLossModel::new(p).is_err());

        let mut p = make_3gpp_case().pieces().to_vec();
        p[0].los_prob = LosProbability::Constant { p: 1.5 };
        assert!(PathLossModel::new(p).is_err());
    }

    #[test]
    fn inverse_handles_downward_jump() {
        let m = PathLossModel::new(vec![
            PathLossPiece {
                d_lo: 0.0,
                d_hi: 0.1,
                a_los: 1e-10,
                a_nlos: 1e-14,
                alpha_los: 2.0,
                alpha_nlos: 3.5,
                los_prob: LosProbability::Constant { p: 0.5 },
            },
            PathLossPiece {
                d_lo: 0.1,
                d_hi: f64::INFINITY,
                a_los: 1e-11,
                a_nlos: 1e-15,
                alpha_los: 2.5,
                alpha_nlos: 4.0,
                los_prob: LosProbability::Constant { p: 0.5 },
            },
        ])
        .unwrap();
        // value strictly between the one-sided limits at 0.1 km
        let left = m.piece(0).gain(0.1, Branch::Los);
        let right = m.piece(1).gain(0.1, Branch::Los);
        let target = (left * right).sqrt();
        assert_eq!(m.inverse_gain(Branch::Los, target), 0.1);
        for &t in &[left * 10.0, right * 0.1] {
            let a = m.inverse_gain(Branch::Los, t);
            let b = m.inverse_gain_bisection(Branch::Los, t);
            assert!((a / b - 1.0).abs() < 1e-10, "{a} {b}");
        }
    }

    #[test]
    fn cutoff_distance() {
        let m = make_3gpp_case();
        let d = m.los_cutoff_distance(1e-6);
        assert!((m.los_prob(d) - 1e-6).abs() < 1e-9);
        let all = PathLossModel::single_slope(1e-10, 3.0, 1.0).unwrap();
        assert!(all.los_cutoff_distance(1e-6).is_infinite());
        let none = PathLossModel::single_slope(1e-10, 3.0, 0.0).unwrap();
        assert_eq!(none.los_cutoff_distance(1e-6), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn inverse_round_trips(log_r in -3.0f64..2.0, los in any::<bool>()) {
                let m = make_3gpp_case();
                let b = if los { Branch::Los } else { Branch::Nlos };
                let r = 10f64.powf(log_r);
                let back = m.inverse_gain(b, m.gain(r, b));
                prop_assert!((back / r - 1.0).abs() < 1e-12, "{} -> {}", r, back);
                let bis = m.inverse_gain_bisection(b, m.gain(r, b));
                prop_assert!((bis / r - 1.0).abs() < 1e-9);
            }

            // below about 3.12 m the NLoS law is the stronger of the two
            #[test]
            fn los_beats_nlos(log_r in (0.0032f64.log10())..2.0) {
                let m = make_3gpp_case();
                let r = 10f64.powf(log_r);
                prop_assert!(m.gain(r, Branch::Los) > m.gain(r, Branch::Nlos));
            }

            #[test]
            fn los_probability_is_a_probability(r in 1e-6f64..50.0) {
                let p = los_probability(&make_3gpp_case(), r).unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }
}
