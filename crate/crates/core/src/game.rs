//! Open-loop dynamic battery scheduling game.
//!
//! Each participant `n` chooses a schedule `a_n` over `T` stages to maximise
//!
//! ```text
//! U_n = -s_n^T - sum_t g(L^t),    L^t = d_n^t + a_n^t + L_{-n}^t
//! ```
//!
//! where `L_{-n}` is the summed load of every other household (other players
//! plus non-participants) and `g` is the quadratic stage cost. Under the
//! idealized transition `s^{t+1} = s^t + a^t` the best response has a closed
//! form: at every stage the player brings the aggregate load to the mean of
//! what remains of the day net of its usable stored energy, which empties the
//! battery to `s_min` at the final stage. [`solve_nash`] iterates these best
//! responses player by player until the profile stops changing;
//! [`dp_best_response`] solves the same per-player problem by backward
//! induction over a discretised SOC grid and serves as an independent check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::battery::{Battery, BatteryParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tariff::{stage_cost, TariffParams};

/// How a schedule moves the SOC while the game is being solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionMode {
    /// `s + a`, no losses or limits.
    #[default]
    Idealized,
    /// Every decision is clamped to the battery limits and applied through
    /// the full lossy transition.
    Clamped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Player<S> {
    /// Forecast net demand per stage (kWh, non-negative).
    pub net_demand: Vec<S>,
    pub battery: BatteryParams<S>,
    pub initial_soc: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec<S> {
    /// Interval length (hours).
    pub dt: S,
    pub players: Vec<Player<S>>,
    /// Summed forecast load of non-participants per stage.
    pub background_load: Vec<S>,
    /// Households behind the aggregate load, players included.
    pub households: usize,
    pub tariff: TariffParams<S>,
}

impl<S: Scalar> GameSpec<S> {
    pub fn new(
        dt: S,
        players: Vec<Player<S>>,
        background_load: Vec<S>,
        households: usize,
        tariff: TariffParams<S>,
    ) -> Result<Self> {
        let spec = Self {
            dt,
            players,
            background_load,
            households,
            tariff,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.stages();
        if t == 0 {
            return Err(Error::InvalidGame("at least one stage required".into()));
        }
        if !(self.dt > S::zero()) {
            return Err(Error::InvalidGame("dt must be positive".into()));
        }
        self.tariff.validate()?;
        if self.households < self.players.len().max(1) {
            return Err(Error::InvalidGame(format!(
                "{} households cannot hold {} players",
                self.households,
                self.players.len()
            )));
        }
        for (n, p) in self.players.iter().enumerate() {
            if p.net_demand.len() != t {
                return Err(Error::InvalidGame(format!(
                    "player {n}: forecast has {} stages, expected {t}",
                    p.net_demand.len()
                )));
            }
            p.battery.validate()?;
            let b = &p.battery;
            if !(p.initial_soc >= b.s_min && p.initial_soc <= b.s_max) {
                return Err(Error::InvalidGame(format!(
                    "player {n}: initial SOC {} outside [{}, {}]",
                    p.initial_soc, b.s_min, b.s_max
                )));
            }
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.background_load.len()
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    /// The game restricted to stages `t..T`, starting from `socs`.
    ///
    /// `socs` may lie outside the battery range.
    pub fn subgame(&self, t: usize, socs: &[S]) -> Result<Self> {
        if t >= self.stages() || socs.len() != self.num_players() {
            return Err(Error::InvalidGame(format!("cannot truncate at stage {t}")));
        }
        let players = self
            .players
            .iter()
            .zip(socs)
            .map(|(p, &s)| Player {
                net_demand: p.net_demand[t..].to_vec(),
                battery: p.battery,
                initial_soc: s,
            })
            .collect();
        Ok(Self {
            dt: self.dt,
            players,
            background_load: self.background_load[t..].to_vec(),
            households: self.households,
            tariff: self.tariff,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile<S> {
    /// `schedules[n][t]`: decision of player `n` at stage `t` (kWh).
    pub schedules: Vec<Vec<S>>,
    /// `soc_trajectories[n][t]` for `t = 0..=T`.
    pub soc_trajectories: Vec<Vec<S>>,
    pub mode: TransitionMode,
    /// Completed sweeps.
    pub iterations: usize,
    pub converged: bool,
    /// Largest schedule change in the final sweep (kWh).
    pub residual: S,
    /// Largest schedule change of every sweep, in order.
    pub residual_history: Vec<S>,
}

impl<S: Scalar> StrategyProfile<S> {
    /// Wraps fixed schedules, computing the induced trajectories.
    pub fn from_schedules(spec: &GameSpec<S>, schedules: Vec<Vec<S>>, mode: TransitionMode) -> Result<Self> {
        let soc_trajectories = schedules
            .iter()
            .enumerate()
            .map(|(n, a)| trajectory(spec, n, a, mode))
            .collect::<Result<_>>()?;
        Ok(Self {
            schedules,
            soc_trajectories,
            mode,
            iterations: 0,
            converged: false,
            residual: S::zero(),
            residual_history: Vec::new(),
        })
    }

    /// Predicted aggregate load of the whole neighbourhood per stage.
    pub fn aggregate_load(&self, spec: &GameSpec<S>) -> Vec<S> {
        let mut total = spec.background_load.clone();
        for (p, a) in spec.players.iter().zip(&self.schedules) {
            for (t, l) in total.iter_mut().enumerate() {
                *l += p.net_demand[t] + a[t];
            }
        }
        total
    }
}

/// Uniform SOC discretisation for the dynamic-programming oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocGrid<S> {
    pub resolution: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Init {
    #[default]
    Zeros,
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions<S> {
    /// Stop once no decision moves by more than this in a sweep (kWh).
    pub tol: S,
    pub max_iter: usize,
    pub init: Init,
    pub mode: TransitionMode,
    /// Player update order within a sweep; index order when `None`.
    pub order: Option<Vec<usize>>,
}

impl<S: Scalar> Default for SolverOptions<S> {
    fn default() -> Self {
        Self {
            tol: S::lit(1e-9),
            max_iter: 1000,
            init: Init::Zeros,
            mode: TransitionMode::Idealized,
            order: None,
        }
    }
}

/// Average load per household over everyone except player `n`: background
/// plus the other players' net demand and decisions, divided by `M - 1`.
pub fn others_loads<S: Scalar>(spec: &GameSpec<S>, schedules: &[Vec<S>], n: usize) -> Vec<S> {
    let mut others = spec.background_load.clone();
    for (m, (p, a)) in spec.players.iter().zip(schedules).enumerate() {
        if m == n {
            continue;
        }
        for (t, l) in others.iter_mut().enumerate() {
            *l += p.net_demand[t] + a[t];
        }
    }
    let scale = S::from_usize_lossy(spec.households.saturating_sub(1).max(1));
    for l in &mut others {
        *l /= scale;
    }
    others
}

/// SOC trajectory (`T + 1` entries) of player `n` under `schedule`.
pub fn trajectory<S: Scalar>(spec: &GameSpec<S>, n: usize, schedule: &[S], mode: TransitionMode) -> Result<Vec<S>> {
    let player = &spec.players[n];
    let mut s = player.initial_soc;
    let mut out = Vec::with_capacity(schedule.len() + 1);
    out.push(s);
    match mode {
        TransitionMode::Idealized => {
            for &a in schedule {
                s += a;
                out.push(s);
            }
        }
        TransitionMode::Clamped => {
            let battery = Battery::new(player.battery, spec.dt)?;
            for &a in schedule {
                s = battery.transition(s, a)?;
                out.push(s);
            }
        }
    }
    Ok(out)
}

/// Utility of player `n` for a schedule, its trajectory and fixed `others` load.
pub fn utility_of<S: Scalar>(
    spec: &GameSpec<S>,
    n: usize,
    schedule: &[S],
    soc_trajectory: &[S],
    others: &[S],
) -> S {
    let d = &spec.players[n].net_demand;
    let cost: S = (0..schedule.len())
        .map(|t| stage_cost(d[t] + schedule[t] + others[t], &spec.tariff))
        .sum();
    let terminal = *soc_trajectory.last().expect("trajectory has T + 1 entries");
    -terminal - cost
}

/// `U_n` of the given profile (higher is better).
pub fn utility<S: Scalar>(spec: &GameSpec<S>, n: usize, profile: &StrategyProfile<S>) -> S {
    let others = others_loads(spec, &profile.schedules, n);
    utility_of(spec, n, &profile.schedules[n], &profile.soc_trajectories[n], &others)
}

/// Closed-form best decision at stage `t` given usable stored energy `s_t`.
///
/// Sets the aggregate load at `t` to the mean of the remaining day's
/// `d + L_{-n}` minus `s_t`, spread over the `T - t` remaining stages. At the
/// last stage this is `-s_t`.
pub fn best_response_stage<S: Scalar>(t: usize, s_t: S, d: &[S], others: &[S]) -> S {
    let horizon = d.len();
    debug_assert!(t < horizon && others.len() == horizon);
    let later: S = (t + 1..horizon).map(|tau| d[tau] + others[tau]).sum();
    let remaining = S::from_usize_lossy(horizon - t);
    (later - s_t - (remaining - S::one()) * (d[t] + others[t])) / remaining
}

/// Best-response schedule of player `n` against the fixed `others` load,
/// rolled forward from its initial SOC. Returns the schedule and trajectory.
///
/// Usable energy is measured above `s_min`, so the idealized trajectory ends
/// at `s_min`.
pub fn best_response_schedule<S: Scalar>(
    spec: &GameSpec<S>,
    n: usize,
    others: &[S],
    mode: TransitionMode,
) -> Result<(Vec<S>, Vec<S>)> {
    let player = &spec.players[n];
    let d = &player.net_demand;
    let horizon = d.len();
    let s_min = player.battery.s_min;

    // suffix[t] = sum_{tau >= t} (d + L_{-n})
    let mut suffix = vec![S::zero(); horizon + 1];
    for t in (0..horizon).rev() {
        suffix[t] = suffix[t + 1] + d[t] + others[t];
    }

    let battery = match mode {
        TransitionMode::Idealized => None,
        TransitionMode::Clamped => Some(Battery::new(player.battery, spec.dt)?),
    };

    let mut schedule = Vec::with_capacity(horizon);
    let mut soc = Vec::with_capacity(horizon + 1);
    let mut s = player.initial_soc;
    soc.push(s);
    for t in 0..horizon {
        let remaining = S::from_usize_lossy(horizon - t);
        let here = d[t] + others[t];
        let a_hat = (suffix[t + 1] - (s - s_min) - (remaining - S::one()) * here) / remaining;
        let a = match &battery {
            None => {
                s += a_hat;
                a_hat
            }
            Some(b) => {
                let a = b.clamp(s, a_hat, d[t]);
                s = b.transition(s, a)?;
                a
            }
        };
        schedule.push(a);
        soc.push(s);
    }
    Ok((schedule, soc))
}

/// Number of evenly spaced candidate decisions per state for the lossy model.
const DP_CANDIDATES: usize = 201;

/// Best response of player `n` by backward induction over a uniform SOC grid.
///
/// Cost-to-go starts from the terminal penalty `s^T` and is minimised stage
/// by stage. In idealized mode every candidate decision lands exactly on a
/// grid node, so no interpolation is involved and the only constraint is
/// `s_min <= s <= s_max`. In clamped mode the candidates are spread over the
/// feasible decision interval (plus idle) and the next-stage cost is
/// interpolated linearly. A forward pass from the actual initial SOC extracts
/// the schedule.
pub fn dp_best_response<S: Scalar>(
    spec: &GameSpec<S>,
    n: usize,
    others: &[S],
    grid: SocGrid<S>,
    mode: TransitionMode,
) -> Result<Vec<S>> {
    let player = &spec.players[n];
    let params = &player.battery;
    let range = params.s_max - params.s_min;
    if !(grid.resolution > S::zero()) || range < grid.resolution {
        return Err(Error::Resolution {
            resolution: grid.resolution.to_f64_lossy(),
            range: range.to_f64_lossy(),
        });
    }
    let steps = (range / grid.resolution + S::lit(1e-9))
        .floor()
        .to_usize()
        .expect("grid size fits in usize");
    let nodes: Vec<S> = (0..=steps)
        .map(|k| params.s_min + S::from_usize_lossy(k) * grid.resolution)
        .collect();
    let battery = Battery::new(*params, spec.dt)?;
    let d = &player.net_demand;
    let horizon = d.len();
    let tariff = &spec.tariff;

    let interpolate = |values: &[S], s: S| -> S {
        let x = ((s - params.s_min) / grid.resolution).max(S::zero());
        let k = x.floor().to_usize().unwrap_or(0).min(steps);
        if k >= steps {
            return values[steps];
        }
        let w = x - S::from_usize_lossy(k);
        values[k] * (S::one() - w) + values[k + 1] * w
    };

    // Minimal stage cost plus cost-to-go from state `s` at stage `t`.
    let choose = |t: usize, s: S, next: &[S]| -> Result<(S, S)> {
        let base = d[t] + others[t];
        let mut best = (S::zero(), S::infinity());
        match mode {
            TransitionMode::Idealized => {
                for (j, &target) in nodes.iter().enumerate() {
                    let a = target - s;
                    let cost = stage_cost(base + a, tariff) + next[j];
                    if cost < best.1 {
                        best = (a, cost);
                    }
                }
            }
            TransitionMode::Clamped => {
                let lo = (-d[t]).max(battery.phi_minus(s));
                let hi = battery.phi_plus(s);
                let span = S::from_usize_lossy(DP_CANDIDATES - 1);
                let candidates = (0..DP_CANDIDATES)
                    .map(|i| lo + (hi - lo) * S::from_usize_lossy(i) / span)
                    .chain(std::iter::once(S::zero()));
                for a in candidates {
                    let s_next = battery.transition(s, a)?;
                    let cost = stage_cost(base + a, tariff) + interpolate(next, s_next);
                    if cost < best.1 {
                        best = (a, cost);
                    }
                }
            }
        }
        Ok(best)
    };

    // cost_to_go[t][k]: optimal remaining cost from node k at stage t
    let mut cost_to_go = vec![Vec::new(); horizon + 1];
    cost_to_go[horizon] = nodes.clone();
    for t in (1..horizon).rev() {
        let row = nodes
            .iter()
            .map(|&s| choose(t, s, &cost_to_go[t + 1]).map(|(_, c)| c))
            .collect::<Result<Vec<_>>>()?;
        cost_to_go[t] = row;
    }

    let mut s = player.initial_soc;
    let mut schedule = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let (a, _) = choose(t, s, &cost_to_go[t + 1])?;
        s = match mode {
            TransitionMode::Idealized => s + a,
            TransitionMode::Clamped => battery.transition(s, a)?,
        };
        schedule.push(a);
    }
    Ok(schedule)
}

fn initial_schedules<S: Scalar>(spec: &GameSpec<S>, init: Init) -> Vec<Vec<S>> {
    let horizon = spec.stages();
    match init {
        Init::Zeros => vec![vec![S::zero(); horizon]; spec.num_players()],
        Init::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            spec.players
                .iter()
                .map(|p| {
                    let lo = (p.battery.rho_minus * spec.dt).to_f64_lossy();
                    let hi = (p.battery.rho_plus * spec.dt).to_f64_lossy();
                    (0..horizon).map(|_| S::lit(rng.gen_range(lo..hi))).collect()
                })
                .collect()
        }
    }
}

/// Iterated best responses until no decision changes by more than `tol`.
///
/// Players are updated one after another within a sweep, each against the
/// latest schedules of the others. Running out of sweeps is not an error:
/// the profile comes back with `converged == false`.
pub fn solve_nash<S: Scalar>(spec: &GameSpec<S>, options: &SolverOptions<S>) -> Result<StrategyProfile<S>> {
    spec.validate()?;
    if !(options.tol > S::zero()) || options.max_iter == 0 {
        return Err(Error::InvalidGame("solver needs tol > 0 and max_iter >= 1".into()));
    }
    let order: Vec<usize> = match &options.order {
        Some(order) => {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != (0..spec.num_players()).collect::<Vec<_>>() {
                return Err(Error::InvalidGame("update order must be a permutation of the players".into()));
            }
            order.clone()
        }
        None => (0..spec.num_players()).collect(),
    };

    let mut schedules = initial_schedules(spec, options.init);
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..options.max_iter {
        let mut residual = S::zero();
        for &n in &order {
            let others = others_loads(spec, &schedules, n);
            let (next, _) = best_response_schedule(spec, n, &others, options.mode)?;
            for (new, old) in next.iter().zip(&schedules[n]) {
                residual = residual.max((*new - *old).abs());
            }
            schedules[n] = next;
        }
        history.push(residual);
        if residual <= options.tol {
            converged = true;
            break;
        }
    }

    let mut profile = StrategyProfile::from_schedules(spec, schedules, options.mode)?;
    profile.iterations = history.len();
    profile.converged = converged;
    profile.residual = history.last().copied().unwrap_or_default();
    profile.residual_history = history;
    Ok(profile)
}

/// Largest utility gain any single player could obtain by switching to its
/// best response while everyone else keeps their schedule.
pub fn verify_equilibrium<S: Scalar>(spec: &GameSpec<S>, profile: &StrategyProfile<S>) -> Result<S> {
    let mut worst = S::neg_infinity();
    for n in 0..spec.num_players() {
        let others = others_loads(spec, &profile.schedules, n);
        let current = utility_of(spec, n, &profile.schedules[n], &profile.soc_trajectories[n], &others);
        let (schedule, soc) = best_response_schedule(spec, n, &others, profile.mode)?;
        let best = utility_of(spec, n, &schedule, &soc, &others);
        worst = worst.max(best - current);
    }
    Ok(if spec.num_players() == 0 { S::zero() } else { worst })
}

/// Equilibrium check of the profile truncated to stages `t..T`, played from
/// the SOC the profile reaches at stage `t`.
pub fn subgame_truncation_check<S: Scalar>(spec: &GameSpec<S>, profile: &StrategyProfile<S>, t: usize) -> Result<S> {
    let socs: Vec<S> = profile.soc_trajectories.iter().map(|traj| traj[t]).collect();
    let sub = spec.subgame(t, &socs)?;
    let truncated = StrategyProfile {
        schedules: profile.schedules.iter().map(|a| a[t..].to_vec()).collect(),
        soc_trajectories: profile.soc_trajectories.iter().map(|s| s[t..].to_vec()).collect(),
        ..profile.clone()
    };
    verify_equilibrium(&sub, &truncated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn tariff(c2: f64, c1: f64) -> TariffParams<f64> {
        TariffParams {
            c2,
            c1,
            c0: 0.0,
            fixed_price: 0.15,
        }
    }

    fn big_battery() -> BatteryParams<f64> {
        BatteryParams {
            s_max: 100.0,
            s_star: 80.0,
            rho_plus: 50.0,
            rho_minus: -50.0,
            ..BatteryParams::reference()
        }
    }

    fn single(d: Vec<f64>, s0: f64, background: Vec<f64>) -> GameSpec<f64> {
        GameSpec::new(
            1.0,
            vec![Player {
                net_demand: d,
                battery: big_battery(),
                initial_soc: s0,
            }],
            background,
            2,
            TariffParams::default(),
        )
        .unwrap()
    }

    fn demo_spec(n: usize, horizon: usize, seed: u64) -> GameSpec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let players = (0..n)
            .map(|_| Player {
                net_demand: (0..horizon).map(|_| rng.gen_range(0.2..3.0)).collect(),
                battery: big_battery(),
                initial_soc: rng.gen_range(10.0..40.0),
            })
            .collect();
        let background = (0..horizon).map(|_| rng.gen_range(0.0..5.0)).collect();
        GameSpec::new(1.0, players, background, n + 1, TariffParams::default()).unwrap()
    }

    #[test]
    fn stage_response_examples() {
        assert_eq!(best_response_stage(3, 3.2, &[1.0; 4], &[0.0; 4]), -3.2);
        assert_abs_diff_eq!(best_response_stage(0, 0.0, &[1.0, 3.0], &[0.0, 0.0]), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(best_response_stage(0, 0.0, &[2.0; 5], &[4.0; 5]), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn stage_response_matches_second_to_last_formula() {
        let (d, l) = ([0.7, 1.1, 2.9, 0.4], [3.0, 2.0, 5.5, 1.0]);
        let s = 1.3;
        let t = 2;
        let expect = 0.5 * (d[3] - d[2] - s + l[3] - l[2]);
        assert_abs_diff_eq!(best_response_stage(t, s, &d, &l), expect, epsilon = 1e-12);
    }

    #[test]
    fn schedule_agrees_with_stagewise_formula() {
        let spec = demo_spec(1, 7, 3);
        let others = vec![1.5; 7];
        let (a, s) = best_response_schedule(&spec, 0, &others, TransitionMode::Idealized).unwrap();
        for t in 0..7 {
            let expect = best_response_stage(t, s[t], &spec.players[0].net_demand, &others);
            assert_abs_diff_eq!(a[t], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn utility_examples() {
        let zero = GameSpec::new(
            1.0,
            vec![Player {
                net_demand: vec![0.0; 3],
                battery: big_battery(),
                initial_soc: 0.0,
            }],
            vec![0.0; 3],
            1,
            TariffParams::default(),
        )
        .unwrap();
        let p = StrategyProfile::from_schedules(&zero, vec![vec![0.0; 3]], TransitionMode::Idealized).unwrap();
        assert_eq!(utility(&zero, 0, &p), 0.0);

        let p = StrategyProfile::from_schedules(&zero, vec![vec![2.5, 0.0, 0.0]], TransitionMode::Idealized).unwrap();
        let free = GameSpec {
            tariff: TariffParams {
                c2: 1e-300,
                c1: 0.0,
                ..TariffParams::default()
            },
            ..zero.clone()
        };
        assert_abs_diff_eq!(utility(&free, 0, &p), -2.5, epsilon = 1e-12);

        let one = GameSpec::new(
            1.0,
            vec![Player {
                net_demand: vec![2.0],
                battery: big_battery(),
                initial_soc: 1.0,
            }],
            vec![0.0],
            1,
            tariff(1.0, 0.0),
        )
        .unwrap();
        let p = StrategyProfile::from_schedules(&one, vec![vec![-1.0]], TransitionMode::Idealized).unwrap();
        assert_eq!(utility(&one, 0, &p), -1.0);
    }

    #[test]
    fn idealized_schedule_properties() {
        let spec = single(vec![0.0; 5], 0.0, vec![0.0; 5]);
        let (a, _) = best_response_schedule(&spec, 0, &[0.0; 5], TransitionMode::Idealized).unwrap();
        assert!(a.iter().all(|&x| x.abs() < 1e-15));

        let spec = demo_spec(1, 9, 42);
        let (_, s) = best_response_schedule(&spec, 0, &[2.0; 9], TransitionMode::Idealized).unwrap();
        assert_abs_diff_eq!(s[9], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn clamped_schedule_respects_battery() {
        let mut spec = demo_spec(1, 12, 5);
        spec.players[0].battery = BatteryParams::reference();
        spec.players[0].initial_soc = 2.0;
        let others: Vec<f64> = (0..12).map(|t| if t < 6 { 1.0 } else { 30.0 }).collect();
        let (a, s) = best_response_schedule(&spec, 0, &others, TransitionMode::Clamped).unwrap();
        let b = Battery::new(BatteryParams::reference(), 1.0).unwrap();
        for t in 0..12 {
            assert!(a[t] >= -spec.players[0].net_demand[t] - 1e-12);
            assert!(a[t] >= b.phi_minus(s[t]) - 1e-12 && a[t] <= b.phi_plus(s[t]) + 1e-12);
            assert!((0.0..=13.5).contains(&s[t + 1]));
        }
    }

    #[test]
    fn dp_single_stage_empties_battery() {
        let spec = single(vec![2.0], 3.0, vec![5.0]);
        let a = dp_best_response(&spec, 0, &[5.0], SocGrid { resolution: 0.01 }, TransitionMode::Idealized).unwrap();
        assert_eq!(a, vec![-3.0]);
    }

    #[test]
    fn dp_rejects_coarse_grid() {
        let spec = single(vec![2.0], 3.0, vec![5.0]);
        let err = dp_best_response(&spec, 0, &[5.0], SocGrid { resolution: 1000.0 }, TransitionMode::Idealized);
        assert!(matches!(err, Err(Error::Resolution { .. })));
    }

    #[test]
    fn dp_matches_closed_form_small_instance() {
        let spec = single(vec![1.0, 4.0, 2.0], 9.0, vec![3.0, 6.0, 1.0]);
        let others = spec.background_load.clone();
        let (closed, _) = best_response_schedule(&spec, 0, &others, TransitionMode::Idealized).unwrap();
        let dp = dp_best_response(&spec, 0, &others, SocGrid { resolution: 0.01 }, TransitionMode::Idealized).unwrap();
        for (x, y) in closed.iter().zip(&dp) {
            assert!((x - y).abs() <= 0.02, "{closed:?} vs {dp:?}");
        }
    }

    #[test]
    fn dp_clamped_mode_is_feasible_and_no_worse_than_idle() {
        let mut spec = single(vec![1.0, 0.5, 4.0, 3.0], 2.0, vec![5.0, 2.0, 9.0, 8.0]);
        spec.players[0].battery = BatteryParams::reference();
        let others = spec.background_load.clone();
        let a = dp_best_response(&spec, 0, &others, SocGrid { resolution: 0.05 }, TransitionMode::Clamped).unwrap();
        let s = trajectory(&spec, 0, &a, TransitionMode::Clamped).unwrap();
        let idle = vec![0.0; 4];
        let s_idle = trajectory(&spec, 0, &idle, TransitionMode::Clamped).unwrap();
        let u = utility_of(&spec, 0, &a, &s, &others);
        let u_idle = utility_of(&spec, 0, &idle, &s_idle, &others);
        assert!(u >= u_idle - 1e-9, "{u} < {u_idle}");
    }

    #[test]
    fn single_player_converges_in_one_useful_sweep() {
        let spec = demo_spec(1, 24, 9);
        let p = solve_nash(&spec, &SolverOptions::default()).unwrap();
        assert!(p.converged);
        assert!(p.residual_history[1] <= 1e-9);
        assert!(verify_equilibrium(&spec, &p).unwrap() <= 1e-9);
    }

    #[test]
    fn aggregate_does_not_depend_on_update_order() {
        let spec = demo_spec(4, 12, 17);
        let forward = solve_nash(&spec, &SolverOptions::default()).unwrap();
        let reverse = solve_nash(
            &spec,
            &SolverOptions {
                order: Some(vec![3, 2, 1, 0]),
                ..SolverOptions::default()
            },
        )
        .unwrap();
        for (x, y) in forward.aggregate_load(&spec).iter().zip(reverse.aggregate_load(&spec)) {
            assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn three_player_convergence_fixture() {
        let spec = demo_spec(3, 6, 2024);
        let p = solve_nash(&spec, &SolverOptions::default()).unwrap();
        assert!(p.converged && p.iterations <= 50);
        let h = &p.residual_history;
        for w in h.windows(2).skip(1) {
            assert!(w[1] <= w[0]);
        }
        assert!(*h.last().unwrap() < 1e-9);
    }

    #[test]
    fn random_start_converges_too() {
        let spec = demo_spec(5, 24, 77);
        let opts = SolverOptions {
            init: Init::Random { seed: 4 },
            ..SolverOptions::default()
        };
        let p = solve_nash(&spec, &opts).unwrap();
        assert!(p.converged);
        assert!(verify_equilibrium(&spec, &p).unwrap() <= 1e-6);
    }

    #[test]
    fn custom_order_must_be_permutation() {
        let spec = demo_spec(3, 4, 1);
        let opts = SolverOptions {
            order: Some(vec![0, 0, 1]),
            ..SolverOptions::default()
        };
        assert!(solve_nash(&spec, &opts).is_err());
        let opts = SolverOptions {
            order: Some(vec![2, 0, 1]),
            ..SolverOptions::default()
        };
        assert!(solve_nash(&spec, &opts).unwrap().converged);
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let spec = demo_spec(4, 8, 3);
        let opts = SolverOptions {
            max_iter: 1,
            ..SolverOptions::default()
        };
        let p = solve_nash(&spec, &opts).unwrap();
        assert_eq!(p.iterations, 1);
        assert!(!p.converged);
    }

    #[test]
    fn perturbed_profile_is_not_an_equilibrium() {
        let spec = demo_spec(3, 8, 8);
        let p = solve_nash(&spec, &SolverOptions::default()).unwrap();
        let mut schedules = p.schedules.clone();
        schedules[1][3] += 1.0;
        let bad = StrategyProfile::from_schedules(&spec, schedules, TransitionMode::Idealized).unwrap();
        assert!(verify_equilibrium(&spec, &bad).unwrap() > 1e-6);
    }

    #[test]
    fn truncation_checks() {
        let spec = demo_spec(4, 10, 12);
        let p = solve_nash(&spec, &SolverOptions::default()).unwrap();
        assert_eq!(
            subgame_truncation_check(&spec, &p, 0).unwrap(),
            verify_equilibrium(&spec, &p).unwrap()
        );
        for n in 0..4 {
            assert_abs_diff_eq!(p.schedules[n][9], -p.soc_trajectories[n][9], epsilon = 1e-12);
        }
        for t in 0..10 {
            assert!(subgame_truncation_check(&spec, &p, t).unwrap() <= 1e-6);
        }
        assert!(subgame_truncation_check(&spec, &p, 10).is_err());
    }

    #[test]
    fn solve_is_bit_reproducible() {
        let spec = demo_spec(6, 24, 99);
        let a = solve_nash(&spec, &SolverOptions::default()).unwrap();
        let b = solve_nash(&spec, &SolverOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn works_in_f32() {
        let spec: GameSpec<f32> = GameSpec::new(
            1.0,
            vec![
                Player {
                    net_demand: vec![1.0, 3.0, 2.0],
                    battery: BatteryParams::reference(),
                    initial_soc: 2.0,
                };
                2
            ],
            vec![0.0; 3],
            2,
            TariffParams::default(),
        )
        .unwrap();
        let p = solve_nash(
            &spec,
            &SolverOptions {
                tol: 1e-5,
                ..SolverOptions::default()
            },
        )
        .unwrap();
        assert!(p.converged);
        let agg = p.aggregate_load(&spec);
        assert!((agg[0] - agg[2]).abs() < 1e-4 && (agg[1] - agg[2]).abs() < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn equilibrium_is_locally_optimal(seed in 0u64..10_000, n in 1usize..5, horizon in 2usize..10, delta_sign in prop::bool::ANY) {
            let spec = demo_spec(n, horizon, seed);
            let p = solve_nash(&spec, &SolverOptions::default()).unwrap();
            prop_assert!(p.converged);
            let delta = if delta_sign { 1e-3 } else { -1e-3 };
            for player in 0..n {
                let base = utility(&spec, player, &p);
                for t in 0..horizon - 1 {
                    let mut schedules = p.schedules.clone();
                    schedules[player][t] += delta;
                    schedules[player][horizon - 1] -= delta;
                    let q = StrategyProfile::from_schedules(&spec, schedules, TransitionMode::Idealized).unwrap();
                    prop_assert!(utility(&spec, player, &q) <= base + 1e-9);
                }
                prop_assert!(p.soc_trajectories[player][horizon].abs() <= 1e-9);
            }
        }
    }
}
