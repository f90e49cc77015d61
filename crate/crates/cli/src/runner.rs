use std::path::Path;

use dsm_core::execution::{chain_days, report};
use dsm_core::{
    load_csv_traces, synth_days, Category, DayResult, DayTraces, ForecastErrorSpec, Household, Scenario,
    SimulationReport, TraceConfig,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{self, SweepRow};
use crate::config::{DataSource, HouseholdConfig, Mode, RunConfig};
use crate::error::CliError;
use crate::oracle::{run_oracle, OracleOutcome};

pub fn scenario(config: &RunConfig, households: &[HouseholdConfig], errors: ForecastErrorSpec) -> Scenario {
    Scenario {
        households: households
            .iter()
            .enumerate()
            .map(|(m, h)| {
                if h.participant {
                    let pv = h.pv_scale.unwrap_or_else(|| h.category.default_pv_scale());
                    Household::participant(m, h.category, pv, config.battery)
                } else {
                    Household::non_participant(m, h.category)
                }
            })
            .collect(),
        dt: config.dt,
        tariff: config.tariff,
        errors,
        solver: config.solver.clone(),
        initial_soc: config.initial_soc,
        chain: config.chain,
    }
}

/// Day traces for the configured households, from CSV or generated.
pub fn traces(config: &RunConfig, categories: &[Category]) -> Result<Vec<DayTraces>, CliError> {
    match &config.data {
        DataSource::Synthetic => Ok(synth_days(
            config.seed,
            categories,
            config.intervals_per_day,
            config.first_day,
            config.days,
        )),
        DataSource::Csv { demand, pv } => {
            let days = load_csv_traces(
                demand,
                pv,
                &TraceConfig {
                    intervals_per_day: config.intervals_per_day,
                },
            )?;
            if days[0].households() != categories.len() {
                return Err(CliError::Data(dsm_core::Error::Shape(format!(
                    "{} has {} households, config lists {}",
                    demand.display(),
                    days[0].households(),
                    categories.len()
                ))));
            }
            if days.len() < config.days {
                return Err(CliError::Data(dsm_core::Error::Shape(format!(
                    "{} covers {} days, {} requested",
                    demand.display(),
                    days.len(),
                    config.days
                ))));
            }
            Ok(days.into_iter().take(config.days).collect())
        }
    }
}

/// Participation sets of a sweep: everyone first, then repeatedly drop
/// `per_category` households from each category (seeded choice), taking
/// the shortfall round-robin from categories that still have participants.
pub fn participation_steps(categories: &[Category], per_category: usize, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = per_category * Category::ALL.len();
    let mut current = vec![true; categories.len()];
    let mut points = vec![current.clone()];
    while current.iter().filter(|&&p| p).count() > step {
        let mut removed = 0;
        while removed < step {
            for cat in Category::ALL {
                for _ in 0..per_category {
                    if removed == step {
                        break;
                    }
                    let pool: Vec<usize> = (0..categories.len())
                        .filter(|&m| current[m] && categories[m] == cat)
                        .collect();
                    if let Some(&m) = pool.choose(&mut rng) {
                        current[m] = false;
                        removed += 1;
                    }
                }
            }
        }
        points.push(current.clone());
    }
    points
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub results: Vec<DayResult>,
    pub report: SimulationReport,
}

pub fn simulate(
    config: &RunConfig,
    households: &[HouseholdConfig],
    days: &[DayTraces],
    errors: ForecastErrorSpec,
) -> Result<RunOutcome, CliError> {
    let results = chain_days(&scenario(config, households, errors), days)?;
    let report = report(&results);
    Ok(RunOutcome { results, report })
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    mode: Mode,
    seed: u64,
    config: &'a RunConfig,
    files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Summary {
    Single(SimulationReport),
    Sweep(Vec<SweepRow>),
    Oracle(OracleOutcome),
}

struct Point {
    neighbourhood: String,
    households: Vec<HouseholdConfig>,
    errors: ForecastErrorSpec,
}

fn with_participation(base: &[HouseholdConfig], set: &[bool]) -> Vec<HouseholdConfig> {
    base.iter()
        .zip(set)
        .map(|(h, &p)| HouseholdConfig {
            participant: p,
            ..h.clone()
        })
        .collect()
}

fn participation_points(config: &RunConfig, name: &str, base: &[HouseholdConfig]) -> Vec<Point> {
    let categories: Vec<Category> = base.iter().map(|h| h.category).collect();
    participation_steps(&categories, config.sweep.remove_per_category, config.seed)
        .into_iter()
        .map(|set| Point {
            neighbourhood: name.into(),
            households: with_participation(base, &set),
            errors: config.errors,
        })
        .collect()
}

fn category_name(c: Category) -> &'static str {
    match c {
        Category::Low => "LOW",
        Category::Base => "BASE",
        Category::High => "HIGH",
    }
}

fn sweep_points(config: &RunConfig) -> Result<Vec<Point>, CliError> {
    match config.mode {
        Mode::SweepParticipation => Ok(participation_points(config, "MIXED", &config.households)),
        Mode::SweepError => {
            let steps = (1.0 / config.sweep.error_step).round() as usize;
            Ok((0..=steps)
                .map(|k| Point {
                    neighbourhood: "MIXED".into(),
                    households: config.households.clone(),
                    errors: ForecastErrorSpec {
                        magnitude: (k as f64 * config.sweep.error_step).min(1.0),
                        ..config.errors
                    },
                })
                .collect())
        }
        Mode::SweepConsumerMix => {
            if config.data != DataSource::Synthetic {
                return Err(CliError::config("mode", "the consumer-mix sweep needs synthetic data"));
            }
            let mut points = participation_points(config, "MIXED", &config.households);
            for &cat in &config.sweep.mono_types {
                let mono: Vec<HouseholdConfig> = config
                    .households
                    .iter()
                    .map(|h| HouseholdConfig {
                        category: cat,
                        ..h.clone()
                    })
                    .collect();
                points.extend(participation_points(config, category_name(cat), &mono));
            }
            Ok(points)
        }
        Mode::Single | Mode::OracleCheck => unreachable!("not a sweep"),
    }
}

fn run_sweep(config: &RunConfig, out: &Path) -> Result<(Vec<SweepRow>, Vec<String>), CliError> {
    let points = sweep_points(config)?;
    let outcomes = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let categories: Vec<Category> = p.households.iter().map(|h| h.category).collect();
            let days = traces(config, &categories)?;
            let outcome = simulate(config, &p.households, &days, p.errors)?;
            let dir = format!("point_{i:02}");
            let files = artifacts::write_run(&out.join(&dir), &outcome.results, &outcome.report, config.write_schedules)?;
            let participants = p.households.iter().filter(|h| h.participant).count();
            let r = &outcome.report;
            let row = SweepRow {
                neighbourhood: p.neighbourhood.clone(),
                participants,
                participation_rate: participants as f64 / p.households.len() as f64,
                error_magnitude: p.errors.magnitude,
                par_reduction_mean: r.par_reduction_mean,
                par_reduction_std: r.par_reduction_std,
                savings_mean: r.savings_mean,
                savings_std: r.savings_std,
            };
            Ok((row, files.into_iter().map(|f| format!("{dir}/{f}")).collect::<Vec<_>>()))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut files = Vec::new();
    for (row, f) in outcomes {
        rows.push(row);
        files.extend(f);
    }
    artifacts::write_rows(&out.join(artifacts::SWEEP_TABLE), &rows)?;
    files.push(artifacts::SWEEP_TABLE.into());
    Ok((rows, files))
}

/// Runs the configured mode and writes every artifact under `out`.
pub fn run(config: &RunConfig, out: &Path) -> Result<Summary, CliError> {
    config.validate()?;
    if config.mode != Mode::OracleCheck && !config.households.iter().any(|h| h.participant) {
        return Err(CliError::config("households", "at least one household must participate"));
    }
    artifacts::create_dir(out)?;
    let (summary, files) = match config.mode {
        Mode::Single => {
            let categories: Vec<Category> = config.households.iter().map(|h| h.category).collect();
            let days = traces(config, &categories)?;
            let outcome = simulate(config, &config.households, &days, config.errors)?;
            let files = artifacts::write_run(out, &outcome.results, &outcome.report, config.write_schedules)?;
            (Summary::Single(outcome.report), files)
        }
        Mode::OracleCheck => {
            let outcome = run_oracle(config.seed, &config.oracle)?;
            artifacts::write_json(&out.join(artifacts::ORACLE), &outcome)?;
            (Summary::Oracle(outcome), vec![artifacts::ORACLE.to_string()])
        }
        _ => {
            let (rows, files) = run_sweep(config, out)?;
            (Summary::Sweep(rows), files)
        }
    };
    let mut files = files;
    files.push(artifacts::MANIFEST.into());
    artifacts::write_json(
        &out.join(artifacts::MANIFEST),
        &Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            mode: config.mode,
            seed: config.seed,
            config,
            files,
        },
    )?;
    Ok(summary)
}
