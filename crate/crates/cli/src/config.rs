//! Experiment configuration: one TOML file per run, with every default
//! echoed back into the manifest.

use anyhow::{bail, Context, Result};
use lorentz_core::geometry::LatticeConfig;
use lorentz_core::sampling::Observable;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Corridors,
    Simulate,
    Clt,
    Lclt,
    Tails,
    Recurrence,
    RwOracle,
    Spectrum,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Corridors => "corridors",
            Scenario::Simulate => "simulate",
            Scenario::Clt => "clt",
            Scenario::Lclt => "lclt",
            Scenario::Tails => "tails",
            Scenario::Recurrence => "recurrence",
            Scenario::RwOracle => "rw-oracle",
            Scenario::Spectrum => "spectrum",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub lattice: Option<LatticeConfig>,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub tower: TowerSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
    /// recurrence source: "billiard", "ssrw2" or "ssrw3"
    #[serde(default = "default_source")]
    pub recurrence_source: String,
}

fn default_seed() -> u64 {
    1
}

fn default_source() -> String {
    "billiard".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub trajectories: u64,
    pub n_schedule: Vec<u64>,
    pub observable: Observable,
    pub merged_section: bool,
    pub merge_threshold: f64,
    /// extra exact point-mass targets beyond the origin
    pub point_targets: Vec<[i64; 2]>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            trajectories: 10_000,
            n_schedule: vec![256, 512, 1024],
            observable: Observable::Kappa,
            merged_section: false,
            merge_threshold: 1.0,
            point_targets: vec![],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// "ssrw" or "heavy-tail"
    pub walk: String,
    pub dimension: usize,
    pub n_schedule: Vec<u64>,
    pub k: Vec<i64>,
    /// Gnedenko parameters
    pub a: f64,
    pub eps: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            walk: "ssrw".into(),
            dimension: 1,
            n_schedule: vec![100, 1000, 10_000],
            k: vec![0],
            a: 5.0,
            eps: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TowerSection {
    pub map_breakpoints: Vec<f64>,
    pub base: [f64; 2],
    pub max_level: usize,
    pub resolution_log2: u32,
    /// level-weight decay; default: half the expansion rate
    pub eps: Option<f64>,
    /// separation-metric base; default √(1/min slope)
    pub beta: Option<f64>,
    pub doeblin_fortet_steps: usize,
}

impl Default for TowerSection {
    fn default() -> Self {
        TowerSection {
            map_breakpoints: vec![0.0, 0.5, 1.0],
            base: [0.0, 0.5],
            max_level: 46,
            resolution_log2: 12,
            eps: None,
            beta: None,
            doeblin_fortet_steps: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    pub clt_stability: f64,
    pub pointmass_stability: f64,
    pub tail_exponent_lo: f64,
    pub tail_exponent_hi: f64,
    pub trunc_var_r2: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        ToleranceSection {
            clt_stability: 0.10,
            pointmass_stability: 0.25,
            tail_exponent_lo: 1.7,
            tail_exponent_hi: 2.3,
            trunc_var_r2: 0.95,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let needs_lattice = matches!(
            self.scenario,
            Scenario::Corridors | Scenario::Simulate | Scenario::Clt | Scenario::Lclt | Scenario::Tails
        ) || (self.scenario == Scenario::Recurrence && self.recurrence_source == "billiard");
        if needs_lattice {
            let lat = self
                .lattice
                .as_ref()
                .with_context(|| format!("scenario '{}' requires a [lattice] section", self.scenario.name()))?;
            if lat.scatterers.is_empty() {
                bail!("lattice.scatterers must be nonempty");
            }
            for (i, s) in lat.scatterers.iter().enumerate() {
                if !(s[2] > 0.0) {
                    bail!("lattice.scatterers[{i}]: radius must be positive, got {}", s[2]);
                }
            }
        }
        if self.ensemble.n_schedule.is_empty() {
            bail!("ensemble.n_schedule must be nonempty");
        }
        if !matches!(self.recurrence_source.as_str(), "billiard" | "ssrw2" | "ssrw3") {
            bail!("recurrence_source must be billiard, ssrw2 or ssrw3");
        }
        Ok(())
    }
}
