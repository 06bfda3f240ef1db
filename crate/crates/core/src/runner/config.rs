//! Experiment configuration, read from TOML.

use crate::decouple::EnsembleKind;
use crate::error::{ensure, Error, Result};
use crate::geom::Band;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SCENARIOS: [&str; 13] = [
    "bilinear-l2",
    "refined",
    "linear-dyadic",
    "restriction2d",
    "squarefn",
    "broad-value",
    "broad-decompose",
    "restriction",
    "twoends",
    "furstenberg",
    "prune",
    "wavepacket-verify",
    "none",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: String,
    /// Scales `R`, powers of two in ascending order. Planar and incidence
    /// scenarios read them as `1/Δ` and `1/δ`.
    pub scales: Vec<u64>,
    pub eps: f64,
    pub seed: u64,
    pub trials: u64,
    pub out: PathBuf,
    /// Transversality band `[lo, hi]` for pairs of caps.
    pub band: [f64; 2],
    pub plot: bool,
    /// Replaces the scenario's default growth-exponent threshold.
    pub max_exponent: Option<f64>,
    pub couplings: Couplings,
    pub ensemble: EnsembleSpec,
    pub grid: GridSpec,
    pub decouple: DecoupleSpec,
    pub broad: BroadSpec,
    pub restriction: RestrictionSpec,
    pub incidence: IncidenceSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: "none".into(),
            scales: vec![64, 256],
            eps: 0.1,
            seed: 1,
            trials: 3,
            out: PathBuf::from("out"),
            band: [Band::default().lo, Band::default().hi],
            plot: true,
            max_exponent: None,
            couplings: Couplings::default(),
            ensemble: EnsembleSpec::default(),
            grid: GridSpec::default(),
            decouple: DecoupleSpec::default(),
            broad: BroadSpec::default(),
            restriction: RestrictionSpec::default(),
            incidence: IncidenceSpec::default(),
        }
    }
}

/// Integer overrides for `K`, `K₁`, `K₂`, `K₃`. When absent, the effective
/// value is the symbolic coupling at `R`, rounded and clamped to the
/// scenario's minimum.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Couplings {
    pub k: Option<usize>,
    pub k1: Option<usize>,
    pub k2: Option<usize>,
    pub k3: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coupling {
    pub name: &'static str,
    pub symbolic: &'static str,
    /// `R^{ε^j}` at the given `R`.
    pub value: f64,
    pub effective: usize,
}

impl Couplings {
    /// `(name, symbolic form, power of ε, override, minimum)`.
    fn table(&self) -> [(&'static str, &'static str, i32, Option<usize>, usize); 4] {
        [
            ("K", "R^{eps^10}", 10, self.k, 8),
            ("K1", "R^{eps^6}", 6, self.k1, 4),
            ("K2", "R^{eps^4}", 4, self.k2, 4),
            ("K3", "R^{eps^2}", 2, self.k3, 2),
        ]
    }

    pub fn resolve(&self, r: f64, eps: f64) -> Vec<Coupling> {
        self.table()
            .into_iter()
            .map(|(name, symbolic, j, over, min)| {
                let value = r.powf(eps.powi(j));
                let effective = over.unwrap_or_else(|| (value.round() as usize).max(min));
                Coupling { name, symbolic, value, effective }
            })
            .collect()
    }

    pub fn get(&self, name: &str, r: f64, eps: f64) -> usize {
        self.resolve(r, eps).into_iter().find(|c| c.name == name).map(|c| c.effective).expect("known coupling")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSpec {
    /// Ensemble names; empty selects the scenario default. The refined
    /// scenario takes `bush` and `sparse`; incidence scenarios take the
    /// generators `bush`, `parallel`, `random`.
    pub kinds: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Spatial sample spacing for ball and block grids.
    pub spacing: f64,
    /// Horizontal oversampling of the restriction quadrature.
    pub oversample: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { spacing: 1.0, oversample: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoupleSpec {
    /// Bilinear pieces have side `R^{-delta_power}`, rounded to a whole
    /// number of caps; 0 selects the fixed side 1/2.
    pub delta_power: f64,
    /// Minimum `|sin|` between normals of planar curve pairs.
    pub min_sin: f64,
    /// Square-function pieces: `caps` or `planes`.
    pub squarefn_mode: String,
    /// Also label each square-function pair narrow or broad.
    pub classify: bool,
}

impl Default for DecoupleSpec {
    fn default() -> Self {
        DecoupleSpec { delta_power: 0.0, min_sin: 0.5, squarefn_mode: "caps".into(), classify: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BroadSpec {
    pub a: usize,
    /// Upper bound for the pointwise constant of the broad/narrow split.
    pub c_check: f64,
}

impl Default for BroadSpec {
    fn default() -> Self {
        BroadSpec { a: 2, c_check: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RestrictionSpec {
    pub p: f64,
    /// `[A, K]`: measure the broad restriction ratio instead.
    pub broad: Option<[usize; 2]>,
}

impl Default for RestrictionSpec {
    fn default() -> Self {
        RestrictionSpec { p: 22.0 / 7.0, broad: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IncidenceSpec {
    /// Lines per family; absent picks a size from `δ`.
    pub count: Option<usize>,
    /// Shadings: `full`, `half`.
    pub shadings: Vec<String>,
    pub eps1: f64,
    pub eps2: f64,
    pub c_y: f64,
    pub c_min: f64,
}

impl Default for IncidenceSpec {
    fn default() -> Self {
        IncidenceSpec { count: None, shadings: vec!["full".into(), "half".into()], eps1: 0.5, eps2: 0.25, c_y: 1.0, c_min: 1e-2 }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn band(&self) -> Result<Band> {
        Band::new(self.band[0], self.band[1]).map_err(|e| config_err(e.to_string()))
    }

    /// Ensemble kinds for the decoupling and restriction scenarios.
    pub fn kinds(&self, default: &[EnsembleKind]) -> Result<Vec<EnsembleKind>> {
        if self.ensemble.kinds.is_empty() {
            return Ok(default.to_vec());
        }
        self.ensemble
            .kinds
            .iter()
            .map(|k| k.parse())
            .collect()
    }

    /// Names from `ensemble.kinds` restricted to `allowed`.
    pub fn names(&self, allowed: &[&str], default: &[&str]) -> Result<Vec<String>> {
        if self.ensemble.kinds.is_empty() {
            return Ok(default.iter().map(|s| s.to_string()).collect());
        }
        for k in &self.ensemble.kinds {
            ensure(allowed.contains(&k.as_str()), || config_err(format!("unknown kind {k:?}, expected one of {allowed:?}")))?;
        }
        Ok(self.ensemble.kinds.clone())
    }

    pub fn validate(&self) -> Result<()> {
        ensure(SCENARIOS.contains(&self.scenario.as_str()), || {
            config_err(format!("unknown scenario {:?}", self.scenario))
        })?;
        ensure(!self.scales.is_empty(), || config_err("no scales"))?;
        for r in &self.scales {
            ensure(r.is_power_of_two() && *r >= 4, || config_err(format!("scale {r} is not a power of two ≥ 4")))?;
        }
        ensure(self.scales.windows(2).all(|w| w[0] < w[1]), || config_err("scales must be strictly ascending"))?;
        ensure(self.eps > 0.0 && self.eps < 1.0, || config_err(format!("eps {} outside (0, 1)", self.eps)))?;
        ensure(self.trials >= 1, || config_err("trials must be at least 1"))?;
        self.band()?;
        ensure(self.grid.spacing > 0.0 && self.grid.oversample >= 1, || config_err("bad grid spec"))?;
        ensure(self.decouple.delta_power >= 0.0 && self.decouple.delta_power <= 0.5, || {
            config_err(format!("delta_power {} outside [0, 1/2]", self.decouple.delta_power))
        })?;
        ensure(["caps", "planes"].contains(&self.decouple.squarefn_mode.as_str()), || {
            config_err(format!("squarefn_mode {:?}", self.decouple.squarefn_mode))
        })?;
        ensure(self.broad.a >= 1, || config_err("broadness A must be at least 1"))?;
        ensure(self.restriction.p > 2.0 && self.restriction.p <= 6.0, || {
            config_err(format!("p = {} outside (2, 6]", self.restriction.p))
        })?;
        for s in &self.incidence.shadings {
            ensure(s == "full" || s == "half", || config_err(format!("unknown shading {s:?}")))?;
        }
        Ok(())
    }
}

/// Parse `LO:HI`.
pub fn parse_band(s: &str) -> Result<[f64; 2]> {
    let (a, b) = s.split_once(':').ok_or_else(|| config_err(format!("band {s:?} is not LO:HI")))?;
    let lo = a.trim().parse().map_err(|_| config_err(format!("band lower bound {a:?}")))?;
    let hi = b.trim().parse().map_err(|_| config_err(format!("band upper bound {b:?}")))?;
    Ok([lo, hi])
}

/// Parse a comma-separated list of scales.
pub fn parse_scales(s: &str) -> Result<Vec<u64>> {
    s.split(',').map(|x| x.trim().parse().map_err(|_| config_err(format!("scale {x:?}")))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "scenario = \"bilinear-l2\"\nscales = [64, 256]\nseed = 7\n[couplings]\nk1 = 5\n[restriction]\nbroad = [2, 8]\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.restriction.broad, Some([2, 8]));
        assert_eq!(cfg.couplings.get("K1", 256.0, cfg.eps), 5);
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn malformed_configs_rejected() {
        for text in ["scenario = 3", "scenari = \"x\"", "[grid]\nspacing = \"a\""] {
            assert!(matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
        let bad = |f: &dyn Fn(&mut ExperimentConfig)| {
            let mut c = ExperimentConfig { scenario: "refined".into(), ..Default::default() };
            f(&mut c);
            matches!(c.validate(), Err(Error::Config(_)))
        };
        assert!(bad(&|c| c.scenario = "nope".into()));
        assert!(bad(&|c| c.scales = vec![256, 64]));
        assert!(bad(&|c| c.scales = vec![100]));
        assert!(bad(&|c| c.scales.clear()));
        assert!(bad(&|c| c.band = [2.0, 1.0]));
        assert!(bad(&|c| c.restriction.p = 2.0));
        assert!(!bad(&|_| {}));
    }

    #[test]
    fn symbolic_couplings_clamp_at_desk_scale() {
        let c = Couplings::default().resolve(1024.0, 0.1);
        assert_eq!(c.iter().map(|c| c.effective).collect::<Vec<_>>(), vec![8, 4, 4, 2]);
        assert!((c[3].value - 1024f64.powf(0.01)).abs() < 1e-12);
        assert_eq!(Couplings::default().get("K3", 2f64.powi(40), 0.5), 2f64.powf(10.0) as usize);
    }

    #[test]
    fn flag_parsers() {
        assert_eq!(parse_band("0.5:2").unwrap(), [0.5, 2.0]);
        assert!(parse_band("0.5").is_err());
        assert_eq!(parse_scales("64, 256").unwrap(), vec![64, 256]);
        assert!(parse_scales("64,x").is_err());
    }
}
