//! Flat TOML run configuration.
//!
//! Each subcommand has its own defaults. A config file and the command-line
//! flags are laid over them, in that order. Unknown keys, and keys the
//! chosen subcommand does not read, are rejected.

use std::path::Path;

use qpwegner_core::lattice::Norm;
use qpwegner_core::randelette::CoefficientSchedule;
use qpwegner_core::torus::ShiftAction;
use qpwegner_core::wegner::{default_truncation, Energy, Mode, WegnerExperimentConfig};
use qpwegner_core::{InteractionSpec, RandeletteField, SitePair};
use serde::{Deserialize, Serialize};

use crate::{CliError, Command, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnergySetting {
    Value(f64),
    Named(NamedEnergy),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedEnergy {
    SpectralMedian,
}

impl From<EnergySetting> for Energy {
    fn from(e: EnergySetting) -> Self {
        match e {
            EnergySetting::Value(v) => Energy::Fixed(v),
            EnergySetting::Named(NamedEnergy::SpectralMedian) => Energy::SpectralMedian,
        }
    }
}

/// Every key any subcommand understands. Absent keys serialize to nothing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub radius: Option<u32>,
    /// `u = (u_1, u_2)`.
    pub center: Option<SitePair>,
    /// `u''` of the two-volume experiments.
    pub center_b: Option<SitePair>,
    pub r: Option<f64>,
    pub b: Option<f64>,
    pub energy: Option<EnergySetting>,
    pub epsilon_grid: Option<Vec<f64>>,
    pub omega_samples: Option<u64>,
    pub seed: Option<u64>,
    pub theta_seed: Option<u64>,
    pub nu: Option<usize>,
    /// `nu x d` frequency matrix, row-major.
    pub frequency: Option<Vec<f64>>,
    pub c_upper: Option<f64>,
    pub c_lower: Option<f64>,
    pub kappa: Option<f64>,
    pub m_exponent: Option<f64>,
    pub alternating: Option<bool>,
    pub truncation: Option<u32>,
    pub interaction_strength: Option<f64>,
    pub interaction_range: Option<u32>,
    pub norm: Option<Norm>,
    pub verify_eigen: Option<bool>,
    /// Radii `L` of the spacing table.
    pub radii: Option<Vec<u32>>,
    pub dimension: Option<usize>,
    pub shifts: Option<Vec<f64>>,
    pub instances: Option<u64>,
    pub site: Option<Vec<i64>>,
    pub energies: Option<Vec<f64>>,
}

/// Command-line overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub omega_samples: Option<u64>,
    pub verify_eigen: bool,
}

const MODEL_KEYS: &[&str] = &[
    "theta_seed", "nu", "frequency", "c_upper", "c_lower", "kappa", "m_exponent", "alternating", "truncation",
];

fn allowed_keys(cmd: Command) -> Vec<&'static str> {
    let wegner = [
        "radius", "center", "r", "b", "epsilon_grid", "omega_samples", "seed", "interaction_strength",
        "interaction_range", "norm", "verify_eigen",
    ];
    let mut keys: Vec<&str> = match cmd {
        Command::Spacing => vec!["nu", "frequency", "radii"],
        Command::WegnerClassical => vec!["radius", "center", "energy", "epsilon_grid", "omega_samples", "seed", "verify_eigen"],
        Command::WegnerIid2p => [&wegner[..], &["energy", "center_b"]].concat(),
        Command::WegnerQp1 => [&wegner[..], &["energy"], MODEL_KEYS].concat(),
        Command::WegnerQp2 => [&wegner[..], &["center_b"], MODEL_KEYS].concat(),
        Command::Stollmann => vec!["epsilon_grid", "omega_samples", "seed"],
        Command::DmCheck => vec!["radius", "dimension", "shifts", "instances", "seed", "interaction_strength", "interaction_range"],
        Command::Ids => [&["radius", "site", "energies", "omega_samples", "seed", "verify_eigen"][..], MODEL_KEYS].concat(),
    };
    keys.sort_unstable();
    keys
}

fn golden() -> Vec<f64> {
    ShiftAction::<f64>::golden().frequency().to_vec()
}

/// Built-in defaults of a subcommand; they reproduce the standard checks.
pub fn defaults(cmd: Command) -> RunConfig {
    let model = RunConfig {
        theta_seed: Some(1),
        nu: Some(1),
        frequency: Some(golden()),
        c_upper: Some(1.0),
        c_lower: Some(1.0),
        kappa: Some(2.0),
        m_exponent: Some(2.0),
        alternating: Some(false),
        ..RunConfig::default()
    };
    let origin: SitePair = (vec![0], vec![0]);
    let wegner = RunConfig {
        radius: Some(2),
        center: Some(origin.clone()),
        r: Some(2.0),
        b: Some(1.0),
        energy: Some(EnergySetting::Value(0.0)),
        epsilon_grid: Some(vec![1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1]),
        omega_samples: Some(10_000),
        seed: Some(1),
        interaction_strength: Some(1.0),
        interaction_range: Some(1),
        norm: Some(Norm::Max),
        verify_eigen: Some(false),
        ..model.clone()
    };
    match cmd {
        Command::Spacing => RunConfig {
            nu: Some(1),
            frequency: Some(golden()),
            radii: Some((1..=9).map(|k| 1u32 << k).collect()),
            ..RunConfig::default()
        },
        Command::WegnerClassical => RunConfig {
            radius: Some(2),
            center: Some(origin),
            energy: Some(EnergySetting::Value(0.0)),
            epsilon_grid: Some(vec![0.002, 0.005, 0.01, 0.02]),
            omega_samples: Some(100_000),
            seed: Some(1),
            verify_eigen: Some(false),
            ..RunConfig::default()
        },
        Command::WegnerIid2p => RunConfig {
            radius: Some(1),
            epsilon_grid: Some(vec![0.005, 0.01, 0.02, 0.05]),
            omega_samples: Some(100_000),
            theta_seed: None,
            nu: None,
            frequency: None,
            c_upper: None,
            c_lower: None,
            kappa: None,
            m_exponent: None,
            alternating: None,
            ..wegner
        },
        Command::WegnerQp1 => wegner,
        Command::WegnerQp2 => RunConfig {
            r: Some(5.0),
            energy: None,
            center_b: Some((vec![20], vec![20])),
            epsilon_grid: Some(vec![1e-5, 2e-5, 5e-5, 1e-4, 2e-4, 5e-4, 1e-3]),
            ..wegner
        },
        Command::Stollmann => RunConfig {
            epsilon_grid: Some(vec![0.05, 0.1, 0.2]),
            omega_samples: Some(100_000),
            seed: Some(1),
            ..RunConfig::default()
        },
        Command::DmCheck => RunConfig {
            radius: Some(1),
            dimension: Some(1),
            shifts: Some(vec![0.1, 1.0, 3.7]),
            instances: Some(100),
            seed: Some(1),
            interaction_strength: Some(1.0),
            interaction_range: Some(1),
            ..RunConfig::default()
        },
        Command::Ids => RunConfig {
            radius: Some(5),
            site: Some(vec![0]),
            energies: Some((-30..=50).map(|i| i as f64 / 10.0).collect()),
            omega_samples: Some(2_000),
            seed: Some(1),
            verify_eigen: Some(false),
            ..model
        },
    }
}

fn to_table(cfg: &RunConfig) -> Result<toml::Table> {
    Ok(toml::Table::try_from(cfg)?)
}

/// Parses a config file; unknown keys are an error.
pub fn parse_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_str(&text)
}

pub fn parse_str(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

/// Defaults, then `file`, then `overrides`.
pub fn resolve(cmd: Command, file: Option<&RunConfig>, overrides: &Overrides) -> Result<RunConfig> {
    let mut table = to_table(&defaults(cmd))?;
    if let Some(file) = file {
        let given = to_table(file)?;
        let allowed = allowed_keys(cmd);
        if let Some(key) = given.keys().find(|k| allowed.binary_search(&k.as_str()).is_err()) {
            return Err(CliError::Config(format!(
                "key `{key}` is not used by `{}` (accepted: {})",
                cmd.name(),
                allowed.join(", ")
            )));
        }
        table.extend(given);
    }
    let mut cfg: RunConfig = table.try_into()?;
    let reads = |key: &str| allowed_keys(cmd).contains(&key);
    if let (Some(seed), true) = (overrides.seed, reads("seed")) {
        cfg.seed = Some(seed);
    }
    if let (Some(n), true) = (overrides.omega_samples, reads("omega_samples")) {
        cfg.omega_samples = Some(n);
    }
    if overrides.verify_eigen && reads("verify_eigen") {
        cfg.verify_eigen = Some(true);
    }
    Ok(cfg)
}

/// Resolved configuration as TOML text; feeding it back reproduces the run.
pub fn to_toml(cfg: &RunConfig) -> Result<String> {
    Ok(toml::to_string(cfg)?)
}

fn need<T: Clone>(value: &Option<T>, key: &str) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| CliError::Config(format!("missing key `{key}`")))
}

impl RunConfig {
    pub fn has_custom_frequency(&self) -> bool {
        self.frequency.as_ref().is_some_and(|f| *f != golden())
    }

    pub fn action(&self) -> Result<ShiftAction<f64>> {
        let nu = need(&self.nu, "nu")?;
        let frequency = need(&self.frequency, "frequency")?;
        if nu == 0 || frequency.len() % nu != 0 {
            return Err(CliError::Config(format!(
                "frequency has {} entries, not a multiple of nu = {nu}",
                frequency.len()
            )));
        }
        Ok(ShiftAction::new(nu, frequency.len() / nu, frequency)?)
    }

    pub fn schedule(&self) -> Result<CoefficientSchedule<f64>> {
        let mut s = CoefficientSchedule::new(
            need(&self.c_upper, "c_upper")?,
            need(&self.c_lower, "c_lower")?,
            need(&self.kappa, "kappa")?,
            need(&self.m_exponent, "m_exponent")?,
        )?;
        s.alternating = need(&self.alternating, "alternating")?;
        Ok(s)
    }

    pub fn interaction(&self) -> Result<InteractionSpec> {
        Ok(InteractionSpec {
            strength: need(&self.interaction_strength, "interaction_strength")?,
            range: need(&self.interaction_range, "interaction_range")?,
        })
    }

    pub fn samples(&self) -> Result<u64> {
        need(&self.omega_samples, "omega_samples")
    }

    pub fn seed(&self) -> Result<u64> {
        need(&self.seed, "seed")
    }

    pub fn epsilon_grid(&self) -> Result<Vec<f64>> {
        need(&self.epsilon_grid, "epsilon_grid")
    }

    /// Grand-ensemble field at the configured `theta`.
    pub fn field(&self) -> Result<RandeletteField> {
        let action = self.action()?;
        let schedule = self.schedule()?;
        let truncation = match self.truncation {
            Some(t) => t,
            None => default_truncation(&schedule, action.nu(), 1),
        };
        let theta = qpwegner_core::ThetaSample::new(need(&self.theta_seed, "theta_seed")?);
        Ok(RandeletteField::new(schedule, theta, action.nu(), truncation)?)
    }

    /// Experiment configuration for a Wegner-type subcommand.
    pub fn experiment(&self, mode: Mode) -> Result<WegnerExperimentConfig> {
        let mut c = WegnerExperimentConfig::new(mode);
        c.radius = need(&self.radius, "radius")?;
        c.center = need(&self.center, "center")?;
        c.center_b = self.center_b.clone();
        c.epsilon_grid = self.epsilon_grid()?;
        c.samples = self.samples()?;
        c.seed = self.seed()?;
        c.verify_eigen = self.verify_eigen.unwrap_or(false);
        if let Some(e) = self.energy {
            c.energy = e.into();
        }
        if mode != Mode::Classical1p {
            c.r = need(&self.r, "r")?;
            c.b = need(&self.b, "b")?;
            c.interaction = self.interaction()?;
            c.norm = need(&self.norm, "norm")?;
        }
        if mode.is_quasi_periodic() {
            c.theta_seed = need(&self.theta_seed, "theta_seed")?;
            c.action = self.action()?;
            c.schedule = self.schedule()?;
            c.truncation = self.truncation;
        }
        Ok(c)
    }
}
