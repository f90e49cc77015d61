//! Households, daily demand/PV traces and load accounting.

use std::fs::File;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::battery::BatteryParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Consumption category of a household.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Category {
    Low,
    Base,
    High,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Low, Category::Base, Category::High];

    /// PV installation scale used for participants of this category.
    pub fn default_pv_scale(self) -> f64 {
        match self {
            Category::Low => 0.3,
            Category::Base => 0.5,
            Category::High => 0.7,
        }
    }

    fn demand_scale(self) -> f64 {
        match self {
            Category::Low => 0.6,
            Category::Base => 1.0,
            Category::High => 1.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Household<S> {
    pub id: usize,
    pub participant: bool,
    pub category: Category,
    /// Multiplier applied to the shared PV trace; zero for non-participants.
    pub pv_scale: S,
    /// Present iff the household participates.
    pub battery: Option<BatteryParams<S>>,
}

impl<S: Scalar> Household<S> {
    pub fn participant(id: usize, category: Category, pv_scale: S, battery: BatteryParams<S>) -> Self {
        Self {
            id,
            participant: true,
            category,
            pv_scale,
            battery: Some(battery),
        }
    }

    pub fn non_participant(id: usize, category: Category) -> Self {
        Self {
            id,
            participant: false,
            category,
            pv_scale: S::zero(),
            battery: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.participant != self.battery.is_some() {
            return Err(Error::InvalidGame(format!(
                "household {}: participant flag and battery presence disagree",
                self.id
            )));
        }
        if !self.participant && self.pv_scale != S::zero() {
            return Err(Error::InvalidGame(format!(
                "household {}: non-participant with PV",
                self.id
            )));
        }
        if self.pv_scale < S::zero() {
            return Err(Error::InvalidGame(format!(
                "household {}: negative pv_scale",
                self.id
            )));
        }
        match &self.battery {
            Some(b) => b.validate(),
            None => Ok(()),
        }
    }
}

/// One day of demand and PV data, actual and forecast.
///
/// `actual_demand[m][t]` is household `m`'s demand in interval `t` (kWh).
/// PV is stored unscaled (one shared trace); household `m` sees
/// `pv_scale * actual_pv[t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayTraces<S> {
    pub actual_demand: Vec<Vec<S>>,
    pub actual_pv: Vec<S>,
    pub forecast_demand: Vec<Vec<S>>,
    pub forecast_pv: Vec<S>,
}

impl<S: Scalar> DayTraces<S> {
    /// Builds traces with perfect forecasts.
    pub fn from_actuals(demand: Vec<Vec<S>>, pv: Vec<S>) -> Result<Self> {
        let t = pv.len();
        if demand.is_empty() {
            return Err(Error::Shape("no households".into()));
        }
        for (m, row) in demand.iter().enumerate() {
            if row.len() != t {
                return Err(Error::Shape(format!(
                    "household {m} has {} intervals, PV has {t}",
                    row.len()
                )));
            }
            if row.iter().any(|&x| !(x >= S::zero())) {
                return Err(Error::Shape(format!("household {m} has negative demand")));
            }
        }
        let pv: Vec<S> = pv.into_iter().map(sanitize_pv).collect();
        Ok(Self {
            forecast_demand: demand.clone(),
            forecast_pv: pv.clone(),
            actual_demand: demand,
            actual_pv: pv,
        })
    }

    pub fn households(&self) -> usize {
        self.actual_demand.len()
    }

    pub fn intervals(&self) -> usize {
        self.actual_pv.len()
    }
}

/// Corrupted PV readings (missing, negative, non-finite) count as zero output.
fn sanitize_pv<S: Scalar>(w: S) -> S {
    if w.is_finite() && w > S::zero() {
        w
    } else {
        S::zero()
    }
}

/// Worst-case forecast error: demand under-forecast, PV over-forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastErrorSpec<S> {
    pub eps_d: S,
    pub eps_w: S,
    /// Fraction of the worst case applied, in `[0, 1]`.
    pub magnitude: S,
}

impl<S: Scalar> ForecastErrorSpec<S> {
    pub fn none() -> Self {
        Self {
            eps_d: S::zero(),
            eps_w: S::zero(),
            magnitude: S::zero(),
        }
    }

    pub fn worst_case(eps_d: S, eps_w: S) -> Self {
        Self {
            eps_d,
            eps_w,
            magnitude: S::one(),
        }
    }
}

/// Splits demand and scaled PV into grid-side net demand and DC-side PV surplus.
///
/// At most one of the two outputs is positive.
pub fn net_demand<S: Scalar>(demand: S, pv: S, eta_inv: S) -> (S, S) {
    let net = (demand - eta_inv * pv).max(S::zero());
    let excess = if net > S::zero() {
        S::zero()
    } else {
        (pv - demand / eta_inv).max(S::zero())
    };
    (net, excess)
}

/// Replaces the forecasts with the correlated worst case derived from the actuals.
pub fn apply_worst_case_error<S: Scalar>(traces: &DayTraces<S>, spec: &ForecastErrorSpec<S>) -> DayTraces<S> {
    let demand_factor = S::one() - spec.magnitude * spec.eps_d;
    let pv_factor = S::one() + spec.magnitude * spec.eps_w;
    DayTraces {
        actual_demand: traces.actual_demand.clone(),
        actual_pv: traces.actual_pv.clone(),
        forecast_demand: traces
            .actual_demand
            .iter()
            .map(|row| row.iter().map(|&d| d * demand_factor).collect())
            .collect(),
        forecast_pv: traces.actual_pv.iter().map(|&w| w * pv_factor).collect(),
    }
}

/// Grid draw of a household: net demand plus battery decision.
pub fn load<S: Scalar>(net_demand: S, a: S) -> Result<S> {
    let l = net_demand + a;
    if l < -S::feasibility_tol() {
        return Err(Error::NegativeLoad {
            load: l.to_f64_lossy(),
            net_demand: net_demand.to_f64_lossy(),
            decision: a.to_f64_lossy(),
        });
    }
    Ok(l.max(S::zero()))
}

pub fn total_load<S: Scalar>(loads: &[S]) -> S {
    loads.iter().copied().sum()
}

/// Sum of every household's load except `n`.
pub fn others_load_sum<S: Scalar>(loads: &[S], n: usize) -> S {
    loads
        .iter()
        .enumerate()
        .filter(|&(m, _)| m != n)
        .map(|(_, &l)| l)
        .sum()
}

/// Mean load of the other households; reporting only.
pub fn others_load_mean<S: Scalar>(loads: &[S], n: usize) -> S {
    if loads.len() <= 1 {
        return S::zero();
    }
    others_load_sum(loads, n) / S::from_usize_lossy(loads.len() - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub intervals_per_day: usize,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        kind => Error::Parse {
            path: path.display().to_string(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Reads a demand CSV (`household_0..household_{M-1}`, one row per interval)
/// and a PV CSV (`pv_kwh`) and splits them into days.
///
/// Empty or unparseable PV cells become `0.0`. Demand cells must parse.
pub fn load_csv_traces<S: Scalar>(
    demand_path: &Path,
    pv_path: &Path,
    config: &TraceConfig,
) -> Result<Vec<DayTraces<S>>> {
    let t = config.intervals_per_day;
    if t == 0 {
        return Err(Error::Shape("intervals_per_day must be positive".into()));
    }
    let demand_rows = read_demand(demand_path)?;
    let pv = read_pv(pv_path)?;
    if demand_rows.len() != pv.len() {
        return Err(Error::Shape(format!(
            "demand has {} rows, PV has {}",
            demand_rows.len(),
            pv.len()
        )));
    }
    if demand_rows.is_empty() || demand_rows.len() % t != 0 {
        return Err(Error::Shape(format!(
            "{} rows is not a whole number of {t}-interval days",
            demand_rows.len()
        )));
    }
    let households = demand_rows[0].len();
    demand_rows
        .chunks(t)
        .zip(pv.chunks(t))
        .map(|(rows, pv_day)| {
            let demand = (0..households)
                .map(|m| rows.iter().map(|r| S::lit(r[m])).collect())
                .collect();
            DayTraces::from_actuals(demand, pv_day.iter().map(|&w| S::lit(w)).collect())
        })
        .collect()
}

fn read_demand(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    for (m, h) in headers.iter().enumerate() {
        if h.trim() != format!("household_{m}") {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                message: format!("expected header household_{m}, found {h:?}"),
            });
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = record
            .iter()
            .map(|cell| match cell.trim().parse::<f64>() {
                Ok(x) if x.is_finite() && x >= 0.0 => Ok(x),
                _ => Err(Error::Parse {
                    path: path.display().to_string(),
                    line,
                    message: format!("invalid demand value {cell:?}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn read_pv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(|h| h.trim().trim_matches('"')) != Some("pv_kwh") {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: "expected single header pv_kwh".into(),
        });
    }
    Ok(lines
        .map(|l| sanitize_pv(l.trim().trim_matches('"').parse::<f64>().unwrap_or(0.0)))
        .collect())
}

/// Writes the actual traces of consecutive days in the format read by
/// [`load_csv_traces`].
pub fn write_csv_traces<S: Scalar>(days: &[DayTraces<S>], demand_path: &Path, pv_path: &Path) -> Result<()> {
    let households = days.first().map_or(0, DayTraces::households);
    let mut demand = csv::Writer::from_path(demand_path).map_err(|e| csv_err(demand_path, e))?;
    demand
        .write_record((0..households).map(|m| format!("household_{m}")))
        .map_err(|e| csv_err(demand_path, e))?;
    let mut pv = csv::Writer::from_path(pv_path).map_err(|e| csv_err(pv_path, e))?;
    pv.write_record(["pv_kwh"]).map_err(|e| csv_err(pv_path, e))?;
    for day in days {
        if day.households() != households {
            return Err(Error::Shape("household count changes between days".into()));
        }
        for t in 0..day.intervals() {
            demand
                .write_record(day.actual_demand.iter().map(|row| row[t].to_f64_lossy().to_string()))
                .map_err(|e| csv_err(demand_path, e))?;
            pv.write_record([day.actual_pv[t].to_f64_lossy().to_string()])
                .map_err(|e| csv_err(pv_path, e))?;
        }
    }
    demand.flush().map_err(|e| io_err(demand_path, e))?;
    pv.flush().map_err(|e| io_err(pv_path, e))?;
    Ok(())
}

/// Deterministic synthetic day: double-peaked household demand scaled by
/// category and a bell-shaped midday PV trace. `day` shifts the season.
pub fn synth_traces<S: Scalar>(seed: u64, categories: &[Category], intervals: usize, day: usize) -> DayTraces<S> {
    assert!(!categories.is_empty() && intervals >= 2, "need M >= 1 and T >= 2");
    let dt = 24.0 / intervals as f64;
    let season = (2.0 * std::f64::consts::PI * (day as f64 - 172.0) / 365.0).cos(); // +1 midsummer
    let mut day_rng = ChaCha8Rng::seed_from_u64(seed ^ (day as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));

    let demand = categories
        .iter()
        .enumerate()
        .map(|(m, &cat)| {
            // household habits persist across days
            let mut habits = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1 + m as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
            let morning = 7.0 + habits.gen_range(-1.0..1.0);
            let evening = 19.0 + habits.gen_range(-1.5..1.5);
            let size = cat.demand_scale() * habits.gen_range(0.85..1.15) * (1.0 - 0.15 * season);
            (0..intervals)
                .map(|t| {
                    let h = (t as f64 + 0.5) * dt;
                    let kw = 0.35
                        + 0.7 * (-((h - morning) / 1.4).powi(2)).exp()
                        + 1.1 * (-((h - evening) / 2.0).powi(2)).exp()
                        + 0.15 * (-((h - 13.0) / 2.5).powi(2)).exp();
                    S::lit(kw * size * day_rng.gen_range(0.8..1.2) * dt)
                })
                .collect()
        })
        .collect();

    let daylight = 12.0 + 4.0 * season;
    let (sunrise, sunset) = (12.5 - daylight / 2.0, 12.5 + daylight / 2.0);
    let clearness = day_rng.gen_range(0.3..1.0);
    let pv = (0..intervals)
        .map(|t| {
            let h = (t as f64 + 0.5) * dt;
            let w = if h > sunrise && h < sunset {
                let x = (std::f64::consts::PI * (h - sunrise) / daylight).sin();
                3.7 * (0.75 + 0.25 * season) * clearness * x.powf(1.5) * day_rng.gen_range(0.9..1.1)
            } else {
                0.0
            };
            S::lit(w * dt)
        })
        .collect();

    DayTraces::from_actuals(demand, pv).expect("synthetic traces are well formed")
}

/// `days` consecutive synthetic days starting at day-of-year `first_day`.
pub fn synth_days<S: Scalar>(seed: u64, categories: &[Category], intervals: usize, first_day: usize, days: usize) -> Vec<DayTraces<S>> {
    (first_day..first_day + days)
        .map(|d| synth_traces(seed, categories, intervals, d % 365))
        .collect()
}

/// The reference neighbourhood mix: seven LOW, nine BASE and nine HIGH households.
pub fn reference_mix() -> Vec<Category> {
    let mut mix = vec![Category::Low; 7];
    mix.extend([Category::Base; 9]);
    mix.extend([Category::High; 9]);
    mix
}
