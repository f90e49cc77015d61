//! Daily protocol: solve the game on forecasts, execute the equilibrium
//! schedules against actual demand and PV, bill, and carry battery state into
//! the next day.

use serde::{Deserialize, Serialize};

use crate::battery::Battery;
use crate::error::{Error, Result};
use crate::game::{solve_nash, GameSpec, Player, SolverOptions, StrategyProfile};
use crate::neighbourhood::{apply_worst_case_error, load, net_demand, DayTraces, ForecastErrorSpec, Household};
use crate::scalar::{max_of, Scalar};
use crate::tariff::{bill_nonparticipant, bill_participants, savings, TariffParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario<S> {
    pub households: Vec<Household<S>>,
    /// Interval length (hours).
    pub dt: S,
    pub tariff: TariffParams<S>,
    pub errors: ForecastErrorSpec<S>,
    pub solver: SolverOptions<S>,
    /// SOC of every battery at the start of the first day.
    pub initial_soc: S,
    /// Start each day from the previous day's final SOC.
    pub chain: bool,
}

impl<S: Scalar> Scenario<S> {
    pub fn participants(&self) -> Vec<usize> {
        self.households
            .iter()
            .enumerate()
            .filter(|(_, h)| h.participant)
            .map(|(m, _)| m)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for h in &self.households {
            h.validate()?;
        }
        self.tariff.validate()
    }
}

/// Game and equilibrium computed from one day's forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayPlan<S> {
    pub game: GameSpec<S>,
    pub profile: StrategyProfile<S>,
    /// Household index of each player.
    pub participants: Vec<usize>,
}

pub fn plan_day<S: Scalar>(scenario: &Scenario<S>, traces: &DayTraces<S>, initial_socs: &[S]) -> Result<DayPlan<S>> {
    check_shape(scenario, traces)?;
    let participants = scenario.participants();
    if initial_socs.len() != participants.len() {
        return Err(Error::Shape(format!(
            "{} initial SOCs for {} participants",
            initial_socs.len(),
            participants.len()
        )));
    }
    let horizon = traces.intervals();
    let mut background = vec![S::zero(); horizon];
    let mut players = Vec::with_capacity(participants.len());
    for (m, h) in scenario.households.iter().enumerate() {
        let demand = &traces.forecast_demand[m];
        match &h.battery {
            Some(battery) => {
                let net = (0..horizon)
                    .map(|t| net_demand(demand[t], h.pv_scale * traces.forecast_pv[t], battery.eta_inv).0)
                    .collect();
                players.push(Player {
                    net_demand: net,
                    battery: *battery,
                    initial_soc: initial_socs[players.len()],
                });
            }
            None => {
                for (b, &d) in background.iter_mut().zip(demand) {
                    *b += d;
                }
            }
        }
    }
    let game = GameSpec::new(scenario.dt, players, background, scenario.households.len(), scenario.tariff)?;
    let profile = solve_nash(&game, &scenario.solver)?;
    Ok(DayPlan {
        game,
        profile,
        participants,
    })
}

fn check_shape<S: Scalar>(scenario: &Scenario<S>, traces: &DayTraces<S>) -> Result<()> {
    if traces.households() != scenario.households.len() {
        return Err(Error::Shape(format!(
            "traces cover {} households, scenario has {}",
            traces.households(),
            scenario.households.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayResult<S> {
    /// `realized_loads[m][t]` for every household (kWh).
    pub realized_loads: Vec<Vec<S>>,
    /// Per participant, `T + 1` entries.
    pub realized_soc: Vec<Vec<S>>,
    pub realized_soc_end: Vec<S>,
    pub scheduled: Vec<Vec<S>>,
    pub executed: Vec<Vec<S>>,
    /// `|executed - scheduled|` per participant and interval.
    pub deviations: Vec<Vec<S>>,
    /// Predicted by the equilibrium on the forecasts.
    pub predicted_aggregate: Vec<S>,
    pub aggregate_load: Vec<S>,
    /// Aggregate with every battery idle (net demand only).
    pub reference_load: Vec<S>,
    /// Aggregate raw demand before PV.
    pub demand_load: Vec<S>,
    pub par: S,
    pub reference_par: S,
    pub par_reduction: S,
    /// Bill per household; participants share the quadratic cost.
    pub bills: Vec<S>,
    pub reference_bills: Vec<S>,
    /// Relative bill reduction per participant, `None` when its reference bill is zero.
    pub savings: Vec<Option<S>>,
    pub participants: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<S>,
}

/// Executes the equilibrium schedules against the actual traces.
///
/// Per interval and participant: PV surplus charges the battery first, the
/// scheduled decision is clamped to what the battery and the actual net
/// demand allow (so an over-promised discharge delivers as much as
/// possible), and the full lossy transition is applied. Non-participants
/// draw their demand.
pub fn execute_day<S: Scalar>(
    scenario: &Scenario<S>,
    plan: &DayPlan<S>,
    traces: &DayTraces<S>,
    initial_socs: &[S],
) -> Result<DayResult<S>> {
    check_shape(scenario, traces)?;
    let horizon = traces.intervals();
    let schedules = &plan.profile.schedules;
    if schedules.len() != plan.participants.len() || initial_socs.len() != plan.participants.len() {
        return Err(Error::Shape("schedule count does not match participants".into()));
    }

    let mut realized_loads = Vec::with_capacity(scenario.households.len());
    let mut reference_loads = Vec::with_capacity(scenario.households.len());
    let mut realized_soc = Vec::new();
    let mut executed = Vec::new();
    let mut deviations = Vec::new();
    let mut player = 0;
    for (m, h) in scenario.households.iter().enumerate() {
        let demand = &traces.actual_demand[m];
        let Some(params) = &h.battery else {
            realized_loads.push(demand.clone());
            reference_loads.push(demand.clone());
            continue;
        };
        let battery = Battery::new(*params, scenario.dt)?;
        let schedule = &schedules[player];
        let mut s = initial_socs[player];
        let mut socs = vec![s];
        let mut loads = Vec::with_capacity(horizon);
        let mut refs = Vec::with_capacity(horizon);
        let mut done = Vec::with_capacity(horizon);
        let mut dev = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let (net, surplus) = net_demand(demand[t], h.pv_scale * traces.actual_pv[t], params.eta_inv);
            let step = battery.step_with_surplus(s, schedule[t], net, surplus)?;
            s = step.soc;
            socs.push(s);
            loads.push(load(net, step.decision)?);
            refs.push(net);
            done.push(step.decision);
            dev.push((step.decision - schedule[t]).abs());
        }
        realized_loads.push(loads);
        reference_loads.push(refs);
        realized_soc.push(socs);
        executed.push(done);
        deviations.push(dev);
        player += 1;
    }

    let aggregate = |loads: &[Vec<S>]| -> Vec<S> { (0..horizon).map(|t| loads.iter().map(|l| l[t]).sum()).collect() };
    let aggregate_load = aggregate(&realized_loads);
    let reference_load = aggregate(&reference_loads);
    let demand_load = aggregate(&traces.actual_demand);

    let pick = |loads: &[Vec<S>]| -> Vec<Vec<S>> { plan.participants.iter().map(|&m| loads[m].clone()).collect() };
    let billed = bill_participants(&pick(&realized_loads), &aggregate_load, &scenario.tariff);
    let billed_ref = bill_participants(&pick(&reference_loads), &reference_load, &scenario.tariff);
    let mut bills = Vec::with_capacity(scenario.households.len());
    let mut reference_bills = Vec::with_capacity(scenario.households.len());
    let mut k = 0;
    for (m, h) in scenario.households.iter().enumerate() {
        if h.participant {
            bills.push(billed.bills[k]);
            reference_bills.push(billed_ref.bills[k]);
            k += 1;
        } else {
            let b = bill_nonparticipant(&realized_loads[m], &scenario.tariff);
            bills.push(b);
            reference_bills.push(b);
        }
    }
    let participant_savings = billed
        .bills
        .iter()
        .zip(&billed_ref.bills)
        .map(|(&b, &r)| savings(b, r).ok())
        .collect();

    let par_dsm = par(&aggregate_load)?;
    let par_ref = par(&reference_load)?;
    Ok(DayResult {
        realized_soc_end: realized_soc.iter().map(|s| s[horizon]).collect(),
        realized_loads,
        realized_soc,
        scheduled: schedules.clone(),
        executed,
        deviations,
        predicted_aggregate: plan.profile.aggregate_load(&plan.game),
        aggregate_load,
        reference_load,
        demand_load,
        par: par_dsm,
        reference_par: par_ref,
        par_reduction: par_reduction(par_dsm, par_ref),
        bills,
        reference_bills,
        savings: participant_savings,
        participants: plan.participants.clone(),
        iterations: plan.profile.iterations,
        converged: plan.profile.converged,
        residual_history: plan.profile.residual_history.clone(),
    })
}

/// Plans and executes one day after deriving forecasts from the scenario's
/// error specification.
pub fn run_day<S: Scalar>(scenario: &Scenario<S>, traces: &DayTraces<S>, initial_socs: &[S]) -> Result<DayResult<S>> {
    let traces = apply_worst_case_error(traces, &scenario.errors);
    let plan = plan_day(scenario, &traces, initial_socs)?;
    execute_day(scenario, &plan, &traces, initial_socs)
}

/// Runs consecutive days, handing each day's final SOCs to the next when
/// `scenario.chain` is set.
pub fn chain_days<S: Scalar>(scenario: &Scenario<S>, days: &[DayTraces<S>]) -> Result<Vec<DayResult<S>>> {
    scenario.validate()?;
    let mut socs = vec![scenario.initial_soc; scenario.participants().len()];
    let mut results = Vec::with_capacity(days.len());
    for day in days {
        let result = run_day(scenario, day, &socs)?;
        if scenario.chain {
            socs.clone_from(&result.realized_soc_end);
        }
        results.push(result);
    }
    Ok(results)
}

/// Peak-to-average ratio `T * max L / sum L`.
pub fn par<S: Scalar>(aggregate_load: &[S]) -> Result<S> {
    let total: S = aggregate_load.iter().copied().sum();
    if !(total > S::zero()) {
        return Err(Error::ZeroTotalLoad);
    }
    let peak = max_of(aggregate_load).expect("non-empty load curve");
    if aggregate_load.iter().all(|&l| l == peak) {
        return Ok(S::one());
    }
    Ok(S::from_usize_lossy(aggregate_load.len()) * peak / total)
}

/// Signed relative PAR change; negative means the peak was flattened.
pub fn par_reduction<S: Scalar>(par_dsm: S, par_reference: S) -> S {
    (par_dsm - par_reference) / par_reference
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayConvergence {
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdSavings {
    pub household: usize,
    /// Daily relative bill reduction averaged over days.
    pub mean: f64,
}

/// Summary statistics over a run of days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub days: usize,
    pub participants: usize,
    pub mean_par: f64,
    pub mean_reference_par: f64,
    pub par_reduction_mean: f64,
    pub par_reduction_std: f64,
    /// Mean over participants of each participant's mean daily savings.
    pub savings_mean: f64,
    /// Standard deviation of the per-participant means.
    pub savings_std: f64,
    pub household_savings: Vec<HouseholdSavings>,
    pub max_deviation: f64,
    pub all_converged: bool,
    pub convergence: Vec<DayConvergence>,
}

/// Population mean and standard deviation; `(NaN, NaN)` for no samples.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn report<S: Scalar>(results: &[DayResult<S>]) -> SimulationReport {
    let f = |x: S| x.to_f64_lossy();
    let par_red: Vec<f64> = results.iter().map(|r| f(r.par_reduction)).collect();
    let (par_reduction_mean, par_reduction_std) = mean_std(&par_red);
    let participants = results.first().map(|r| r.participants.clone()).unwrap_or_default();
    let household_savings: Vec<HouseholdSavings> = participants
        .iter()
        .enumerate()
        .filter_map(|(k, &m)| {
            let daily: Vec<f64> = results.iter().filter_map(|r| r.savings.get(k).copied().flatten()).map(f).collect();
            (!daily.is_empty()).then(|| HouseholdSavings {
                household: m,
                mean: mean_std(&daily).0,
            })
        })
        .collect();
    let means: Vec<f64> = household_savings.iter().map(|h| h.mean).collect();
    let (savings_mean, savings_std) = mean_std(&means);
    let max_deviation = results
        .iter()
        .flat_map(|r| r.deviations.iter().flatten())
        .map(|&d| f(d))
        .fold(0.0, f64::max);
    SimulationReport {
        days: results.len(),
        participants: participants.len(),
        mean_par: mean_std(&results.iter().map(|r| f(r.par)).collect::<Vec<_>>()).0,
        mean_reference_par: mean_std(&results.iter().map(|r| f(r.reference_par)).collect::<Vec<_>>()).0,
        par_reduction_mean,
        par_reduction_std,
        savings_mean,
        savings_std,
        household_savings,
        max_deviation,
        all_converged: results.iter().all(|r| r.converged),
        convergence: results
            .iter()
            .map(|r| DayConvergence {
                iterations: r.iterations,
                converged: r.converged,
                residuals: r.residual_history.iter().map(|&x| f(x)).collect(),
            })
            .collect(),
    }
}
