//! TOML run configuration. Everything a human types is in dB, dBm or meters;
//! [`FileConfig::resolve`] converts to the linear/watt/km units of the engine.

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use udnpf::coverage::Method;
use udnpf::mcsim::SimMode;
use udnpf::pathloss::{make_3gpp_case, LosProbability, PathLossModel, PathLossPiece};
use udnpf::units::{db_to_linear, dbm_to_watts};
use udnpf::{FadingKind, NetworkConfig, SchedulerKind};

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub pathloss: PathLossSection,
    #[serde(default)]
    pub sweep: SweepSection,
    pub mc: Option<McSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub rho: f64,
    pub q: f64,
    pub tx_power_dbm: f64,
    pub noise_dbm: f64,
    pub epsilon: f64,
    pub kmax_cap: usize,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            rho: 300.0,
            q: 4.05,
            tx_power_dbm: 24.0,
            noise_dbm: -95.0,
            epsilon: 1e-3,
            kmax_cap: udnpf::netmodel::DEFAULT_KMAX_CAP,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossSection {
    #[serde(rename = "3gpp_case", default = "yes")]
    pub gpp_case: bool,
    #[serde(default)]
    pub pieces: Vec<PieceSpec>,
}

fn yes() -> bool {
    true
}

impl Default for PathLossSection {
    fn default() -> Self {
        Self {
            gpp_case: true,
            pieces: Vec::new(),
        }
    }
}

/// One distance band. Distances in meters; `*_db_at_1km` is the path loss
/// in dB at 1 km, so the gain is `10^(-db/10) * r_km^-alpha`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceSpec {
    pub from_m: f64,
    /// Omitted on the last piece.
    pub to_m: Option<f64>,
    pub los_db_at_1km: f64,
    pub nlos_db_at_1km: f64,
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    pub los_prob: LosProbSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LosProbSpec {
    Constant { p: f64 },
    /// 1 - coeff * exp(-length_m / r)
    OneMinusExpInverse { coeff: f64, length_m: f64 },
    /// coeff * exp(-r / length_m)
    ExpDecay { coeff: f64, length_m: f64 },
    /// intercept - slope_per_m * r, clamped to [0, 1]
    Linear { intercept: f64, slope_per_m: f64 },
}

impl LosProbSpec {
    fn to_model(&self) -> LosProbability {
        match *self {
            LosProbSpec::Constant { p } => LosProbability::Constant { p },
            LosProbSpec::OneMinusExpInverse { coeff, length_m } => LosProbability::OneMinusExpInverse {
                coeff,
                length: length_m / 1000.0,
            },
            LosProbSpec::ExpDecay { coeff, length_m } => LosProbability::ExpDecay {
                coeff,
                length: length_m / 1000.0,
            },
            LosProbSpec::Linear { intercept, slope_per_m } => LosProbability::Linear {
                intercept,
                slope: slope_per_m * 1000.0,
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub lambda: Vec<f64>,
    pub gamma_db: Vec<f64>,
    pub gamma0_db: f64,
    pub schedulers: Vec<String>,
    pub method: String,
    pub ase: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            lambda: vec![1.0, 10.0, 100.0, 1000.0, 10_000.0],
            gamma_db: vec![0.0],
            gamma0_db: 0.0,
            schedulers: vec!["pf".into(), "rr".into()],
            method: "auto".into(),
            ase: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub drops: usize,
    pub seed: u64,
    pub mode: String,
    pub fading: String,
    /// km; the engine default when omitted.
    pub radius_km: Option<f64>,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            drops: 10_000,
            seed: 0,
            mode: "full_drop".into(),
            fading: "rayleigh".into(),
            radius_km: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Auto,
    Fixed(Method),
}

impl MethodChoice {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "auto" => MethodChoice::Auto,
            "exact" => MethodChoice::Fixed(Method::Exact),
            "upper" | "upper_bound" => MethodChoice::Fixed(Method::UpperBound),
            _ => bail!("unknown method '{s}' (expected exact, upper or auto)"),
        })
    }

    pub fn for_lambda(self, lambda: f64) -> Method {
        match self {
            MethodChoice::Auto => Method::auto(lambda),
            MethodChoice::Fixed(m) => m,
        }
    }
}

pub fn parse_scheduler(s: &str) -> Result<SchedulerKind> {
    Ok(match s {
        "pf" => SchedulerKind::ProportionalFair,
        "rr" => SchedulerKind::RoundRobin,
        _ => bail!("unknown scheduler '{s}' (expected pf or rr)"),
    })
}

#[derive(Debug, Clone)]
pub struct McSpec {
    pub drops: usize,
    pub seed: u64,
    pub mode: SimMode,
    pub fading: FadingKind,
    pub radius_km: Option<f64>,
}

/// A fully resolved sweep in engine units.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: NetworkConfig,
    pub model: PathLossModel,
    pub lambdas: Vec<f64>,
    pub gamma_db: Vec<f64>,
    /// Linear.
    pub gamma0: f64,
    pub schedulers: Vec<SchedulerKind>,
    pub method: MethodChoice,
    pub ase: bool,
    pub mc: Option<McSpec>,
}

impl SweepSpec {
    pub fn gammas(&self) -> Vec<f64> {
        self.gamma_db.iter().map(|&g| db_to_linear(g)).collect()
    }
}

impl FileConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("parsing config")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn resolve(&self) -> Result<SweepSpec> {
        let n = &self.network;
        let base = NetworkConfig {
            lambda: 1.0,
            rho: n.rho,
            q: n.q,
            tx_power: dbm_to_watts(n.tx_power_dbm),
            noise_power: dbm_to_watts(n.noise_dbm),
            epsilon: n.epsilon,
            kmax_cap: n.kmax_cap,
        };
        base.validate()?;

        let model = if self.pathloss.pieces.is_empty() {
            if !self.pathloss.gpp_case {
                bail!("pathloss: set 3gpp_case = true or give [[pathloss.pieces]]");
            }
            make_3gpp_case()
        } else {
            let pieces = self
                .pathloss
                .pieces
                .iter()
                .map(|p| PathLossPiece {
                    d_lo: p.from_m / 1000.0,
                    d_hi: p.to_m.map_or(f64::INFINITY, |m| m / 1000.0),
                    a_los: db_to_linear(-p.los_db_at_1km),
                    a_nlos: db_to_linear(-p.nlos_db_at_1km),
                    alpha_los: p.alpha_los,
                    alpha_nlos: p.alpha_nlos,
                    los_prob: p.los_prob.to_model(),
                })
                .collect();
            PathLossModel::new(pieces)?
        };

        let s = &self.sweep;
        if s.lambda.is_empty() || s.gamma_db.is_empty() || s.schedulers.is_empty() {
            bail!("sweep: lambda, gamma_db and schedulers must be non-empty");
        }
        if let Some(bad) = s.lambda.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            bail!("sweep: lambda must be positive, got {bad}");
        }
        let schedulers = s.schedulers.iter().map(|x| parse_scheduler(x)).collect::<Result<Vec<_>>>()?;

        let mc = self.mc.as_ref().map(McSection::resolve).transpose()?;
        Ok(SweepSpec {
            base,
            model,
            lambdas: s.lambda.clone(),
            gamma_db: s.gamma_db.clone(),
            gamma0: db_to_linear(s.gamma0_db),
            schedulers,
            method: MethodChoice::parse(&s.method)?,
            ase: s.ase,
            mc,
        })
    }
}

impl McSection {
    fn resolve(&self) -> Result<McSpec> {
        let mode = match self.mode.as_str() {
            "full_drop" | "full" => SimMode::FullDrop,
            "model_faithful" | "faithful" => SimMode::ModelFaithful,
            m => bail!("mc: unknown mode '{m}' (expected full_drop or model_faithful)"),
        };
        let fading = match self.fading.as_str() {
            "rayleigh" => FadingKind::Rayleigh,
            "rician" => FadingKind::RicianDistanceDependent,
            f => bail!("mc: unknown fading '{f}' (expected rayleigh or rician)"),
        };
        if self.drops == 0 {
            bail!("mc: drops must be at least 1");
        }
        Ok(McSpec {
            drops: self.drops,
            seed: self.seed,
            mode,
            fading,
            radius_km: self.radius_km,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_setup() {
        let spec = FileConfig::from_toml("").unwrap().resolve().unwrap();
        assert_eq!(spec.base, NetworkConfig::reference(1.0));
        assert_eq!(spec.model, make_3gpp_case());
        assert_eq!(spec.lambdas.len(), 5);
        assert!(spec.mc.is_none());
        assert_eq!(spec.gamma0, 1.0);
    }

    #[test]
    fn custom_pieces_convert_units() {
        let text = r#"
            [pathloss]
            3gpp_case = false
            [[pathloss.pieces]]
            from_m = 0.0
            los_db_at_1km = 120.0
            nlos_db_at_1km = 120.0
            alpha_los = 3.0
            alpha_nlos = 3.0
            los_prob = { kind = "exp_decay", coeff = 1.0, length_m = 30.0 }
        "#;
        let spec = FileConfig::from_toml(text).unwrap().resolve().unwrap();
        let p = spec.model.piece(0);
        assert!((p.a_los / 1e-12 - 1.0).abs() < 1e-12);
        assert_eq!(p.los_prob, LosProbability::ExpDecay { coeff: 1.0, length: 0.03 });
        assert!(p.d_hi.is_infinite());
    }

    #[test]
    fn explicit_pieces_reproduce_preset() {
        let piece = |from: f64, to: &str, law: &str| {
            format!(
                "[[pathloss.pieces]]\nfrom_m = {from}\n{to}los_db_at_1km = 103.8\nnlos_db_at_1km = 145.4\n\
                 alpha_los = 2.09\nalpha_nlos = 3.75\nlos_prob = {law}\n"
            )
        };
        let d1 = 156.0 / std::f64::consts::LN_10;
        let text = format!(
            "[pathloss]\n3gpp_case = false\n{}{}",
            piece(0.0, &format!("to_m = {d1}\n"), r#"{ kind = "one_minus_exp_inverse", coeff = 5.0, length_m = 156.0 }"#),
            piece(d1, "", r#"{ kind = "exp_decay", coeff = 5.0, length_m = 30.0 }"#),
        );
        let model = FileConfig::from_toml(&text).unwrap().resolve().unwrap().model;
        let preset = make_3gpp_case();
        for r in [0.005, 0.05, 0.0677, 0.07, 0.5] {
            for b in [udnpf::Branch::Los, udnpf::Branch::Nlos] {
                assert!((model.gain(r, b) / preset.gain(r, b) - 1.0).abs() < 1e-12);
            }
            assert!((model.los_prob(r) - preset.los_prob(r)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "[sweep]\nlambda = []",
            "[sweep]\nmethod = \"fast\"",
            "[sweep]\nschedulers = [\"max_ci\"]",
            "[mc]\nmode = \"agent\"",
            "[network]\nrho = -1.0",
            "[pathloss]\n3gpp_case = false",
            "[nonsense]\nx = 1",
        ] {
            let r = FileConfig::from_toml(text).and_then(|c| c.resolve());
            assert!(r.is_err(), "{text}");
        }
    }
}
