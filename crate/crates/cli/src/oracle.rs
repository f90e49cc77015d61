//! Closed-form best response checked against backward induction on random
//! single-player instances whose optimal trajectory stays clear of the
//! battery bounds.

use dsm_core::game::{best_response_schedule, dp_best_response};
use dsm_core::{BatteryParams, GameSpec, Player, SocGrid, TariffParams, TransitionMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::OracleConfig;
use crate::error::CliError;

/// Battery roomy enough that the rate limits never matter.
fn oracle_battery() -> BatteryParams {
    BatteryParams {
        s_max: 10.0,
        s_star: 8.0,
        rho_plus: 20.0,
        rho_minus: -20.0,
        ..BatteryParams::reference()
    }
}

/// Instance `index` of the seeded family: one player facing a fixed
/// background, `T` in {2, 3, 4}, initial SOC on the grid.
pub fn instance(seed: u64, index: usize, resolution: f64) -> GameSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let battery = oracle_battery();
    let nodes = ((battery.s_max - battery.s_min) / resolution).round() as usize;
    loop {
        let horizon = 2 + index % 3;
        let net_demand: Vec<f64> = (0..horizon).map(|_| rng.gen_range(0.2..3.0)).collect();
        let background: Vec<f64> = (0..horizon).map(|_| rng.gen_range(0.0..5.0)).collect();
        let k = rng.gen_range(nodes / 10..=nodes * 9 / 10);
        let spec = GameSpec::new(
            1.0,
            vec![Player {
                net_demand,
                battery,
                initial_soc: battery.s_min + k as f64 * resolution,
            }],
            background,
            2,
            TariffParams::default(),
        )
        .expect("valid oracle instance");
        let others = spec.background_load.clone();
        let (_, soc) = best_response_schedule(&spec, 0, &others, TransitionMode::Idealized).expect("closed form");
        let margin = 2.0 * resolution;
        let interior = soc[..horizon]
            .iter()
            .all(|&s| s >= battery.s_min + margin && s <= battery.s_max - margin);
        if interior {
            return spec;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub instances: usize,
    pub resolution: f64,
    pub tolerance: f64,
    /// Largest per-stage gap over all instances (kWh).
    pub max_discrepancy: f64,
    pub failures: Vec<usize>,
    pub passed: bool,
}

pub fn run_oracle(seed: u64, config: &OracleConfig) -> Result<OracleOutcome, CliError> {
    use rayon::prelude::*;
    let gaps = (0..config.instances)
        .into_par_iter()
        .map(|i| {
            let spec = instance(seed, i, config.resolution);
            let others = spec.background_load.clone();
            let (closed, _) = best_response_schedule(&spec, 0, &others, TransitionMode::Idealized)?;
            let dp = dp_best_response(
                &spec,
                0,
                &others,
                SocGrid {
                    resolution: config.resolution,
                },
                TransitionMode::Idealized,
            )?;
            Ok(closed.iter().zip(&dp).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>, dsm_core::Error>>()?;
    let failures: Vec<usize> = gaps
        .iter()
        .enumerate()
        .filter(|(_, &g)| g > config.tolerance)
        .map(|(i, _)| i)
        .collect();
    Ok(OracleOutcome {
        instances: config.instances,
        resolution: config.resolution,
        tolerance: config.tolerance,
        max_discrepancy: gaps.iter().copied().fold(0.0, f64::max),
        passed: failures.is_empty(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_deterministic_and_cover_horizons() {
        let a: Vec<GameSpec> = (0..6).map(|i| instance(3, i, 0.01)).collect();
        let b: Vec<GameSpec> = (0..6).map(|i| instance(3, i, 0.01)).collect();
        assert_eq!(a, b);
        let horizons: Vec<usize> = a.iter().map(GameSpec::stages).collect();
        assert_eq!(horizons, vec![2, 3, 4, 2, 3, 4]);
    }

    #[test]
    fn small_oracle_run_passes() {
        let out = run_oracle(
            5,
            &OracleConfig {
                instances: 6,
                resolution: 0.02,
                tolerance: 0.04,
            },
        )
        .unwrap();
        assert!(out.passed, "{out:?}");
    }
}
