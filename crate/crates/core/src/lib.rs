//! Day-ahead battery scheduling as a dynamic game among households sharing a
//! quadratic energy tariff.
//!
//! Every numeric type is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

pub mod battery;
pub mod error;
pub mod execution;
pub mod game;
pub mod neighbourhood;
mod scalar;
pub mod tariff;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use battery::{clamp_decision, derive_cv_constants, phi_minus, phi_plus, transition};
pub use execution::{chain_days, execute_day, par, par_reduction, plan_day, report, run_day};
pub use execution::{DayConvergence, HouseholdSavings, SimulationReport};
pub use game::{
    best_response_schedule, dp_best_response, solve_nash, subgame_truncation_check, utility, verify_equilibrium,
    Init, TransitionMode,
};
pub use neighbourhood::{
    apply_worst_case_error, load_csv_traces, net_demand, reference_mix, synth_days, synth_traces, write_csv_traces,
    Category, TraceConfig,
};
pub use tariff::{bill_nonparticipant, bill_participants, proportional_factor, savings, stage_cost};

pub type Battery = battery::Battery<f64>;
pub type BatteryParams = battery::BatteryParams<f64>;
pub type CvConstants = battery::CvConstants<f64>;
pub type DayPlan = execution::DayPlan<f64>;
pub type DayResult = execution::DayResult<f64>;
pub type DayTraces = neighbourhood::DayTraces<f64>;
pub type ForecastErrorSpec = neighbourhood::ForecastErrorSpec<f64>;
pub type GameSpec = game::GameSpec<f64>;
pub type Household = neighbourhood::Household<f64>;
pub type Player = game::Player<f64>;
pub type Scenario = execution::Scenario<f64>;
pub type SocGrid = game::SocGrid<f64>;
pub type SolverOptions = game::SolverOptions<f64>;
pub type StrategyProfile = game::StrategyProfile<f64>;
pub type TariffParams = tariff::TariffParams<f64>;
