//! JSON run configuration. Every field is optional; an empty document runs
//! the synthetic reference neighbourhood with the reference battery.

use std::path::{Path, PathBuf};

use dsm_core::{BatteryParams, Category, ForecastErrorSpec, SolverOptions, TariffParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Single,
    SweepParticipation,
    SweepError,
    SweepConsumerMix,
    OracleCheck,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", deny_unknown_fields)]
pub enum DataSource {
    /// Generated traces seeded by the run seed.
    #[default]
    Synthetic,
    /// Demand CSV (`household_0..`) and PV CSV (`pv_kwh`), one row per interval.
    Csv { demand: PathBuf, pv: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseholdConfig {
    pub category: Category,
    #[serde(default = "yes")]
    pub participant: bool,
    /// Defaults to the category's PV scale.
    #[serde(default)]
    pub pv_scale: Option<f64>,
}

fn yes() -> bool {
    true
}

impl HouseholdConfig {
    pub fn new(category: Category) -> Self {
        Self {
            category,
            participant: true,
            pv_scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Households removed from each category per participation step.
    pub remove_per_category: usize,
    /// Increment of the error magnitude between 0 and 1.
    pub error_step: f64,
    /// Neighbourhoods compared by the consumer-mix sweep, besides the mixed one.
    pub mono_types: Vec<Category>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            remove_per_category: 1,
            error_step: 0.1,
            mono_types: Category::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub instances: usize,
    /// SOC grid spacing (kWh).
    pub resolution: f64,
    /// Largest admissible per-stage gap between oracle and closed form (kWh).
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            instances: 100,
            resolution: 0.01,
            tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub data: DataSource,
    pub intervals_per_day: usize,
    /// Interval length (hours).
    pub dt: f64,
    pub days: usize,
    /// Day of year of the first synthetic day.
    pub first_day: usize,
    pub households: Vec<HouseholdConfig>,
    pub battery: BatteryParams,
    pub tariff: TariffParams,
    pub errors: ForecastErrorSpec,
    pub solver: SolverOptions,
    pub initial_soc: f64,
    pub chain: bool,
    pub sweep: SweepConfig,
    pub oracle: OracleConfig,
    /// Write one schedule CSV per simulated day.
    pub write_schedules: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Single,
            seed: 1,
            data: DataSource::Synthetic,
            intervals_per_day: 24,
            dt: 1.0,
            days: 365,
            first_day: 0,
            households: dsm_core::reference_mix().into_iter().map(HouseholdConfig::new).collect(),
            battery: BatteryParams::reference(),
            tariff: TariffParams::default(),
            errors: ForecastErrorSpec {
                eps_d: 0.08,
                eps_w: 0.10,
                magnitude: 1.0,
            },
            solver: SolverOptions::default(),
            initial_soc: 0.0,
            chain: true,
            sweep: SweepConfig::default(),
            oracle: OracleConfig::default(),
            write_schedules: true,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(path, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let err = |path: &str, message: &str| CliError::config(path, message);
        if self.intervals_per_day < 2 {
            return Err(err("intervals_per_day", "need at least 2 intervals per day"));
        }
        if !(self.dt > 0.0) {
            return Err(err("dt", "must be positive"));
        }
        if self.days == 0 {
            return Err(err("days", "must simulate at least one day"));
        }
        if self.households.is_empty() {
            return Err(err("households", "at least one household required"));
        }
        for (m, h) in self.households.iter().enumerate() {
            if let Some(p) = h.pv_scale {
                if !(p >= 0.0 && p.is_finite()) {
                    return Err(err(&format!("households[{m}].pv_scale"), "must be finite and non-negative"));
                }
            }
        }
        self.battery.validate().map_err(|e| err("battery", &e.to_string()))?;
        self.tariff.validate().map_err(|e| err("tariff", &e.to_string()))?;
        let e = &self.errors;
        if !(e.eps_d >= 0.0 && e.eps_d < 1.0 && e.eps_w >= 0.0) {
            return Err(err("errors", "need 0 <= eps_d < 1 and eps_w >= 0"));
        }
        if !(0.0..=1.0).contains(&e.magnitude) {
            return Err(err("errors.magnitude", "must lie in [0, 1]"));
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(err("solver", "need tol > 0 and max_iter >= 1"));
        }
        if !(self.initial_soc >= self.battery.s_min && self.initial_soc <= self.battery.s_max) {
            return Err(err("initial_soc", "outside the battery's SOC range"));
        }
        if self.sweep.remove_per_category == 0 {
            return Err(err("sweep.remove_per_category", "must be at least 1"));
        }
        if !(self.sweep.error_step > 0.0 && self.sweep.error_step <= 1.0) {
            return Err(err("sweep.error_step", "must lie in (0, 1]"));
        }
        if !(self.oracle.resolution > 0.0 && self.oracle.tolerance > 0.0) {
            return Err(err("oracle", "resolution and tolerance must be positive"));
        }
        if let DataSource::Csv { demand, pv } = &self.data {
            for (key, p) in [("data.demand", demand), ("data.pv", pv)] {
                if !p.is_file() {
                    return Err(err(key, &format!("file not found: {}", p.display())));
                }
            }
        }
        Ok(())
    }
}
