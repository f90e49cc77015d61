//! Lithium-ion storage model: two-stage CC/CV charging limit, efficiency-scaled
//! discharging limit, self-discharge while idle, and feasibility clamping of
//! scheduled decisions.
//!
//! Sign convention for a decision `a` (grid-side energy over one interval):
//! `a > 0` charges, `a < 0` discharges, `a == 0` leaves the battery idle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Physical and efficiency parameters of one storage unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams<S> {
    /// Charging efficiency.
    pub eta_plus: S,
    /// Discharging efficiency.
    pub eta_minus: S,
    /// Hybrid inverter efficiency.
    pub eta_inv: S,
    /// Maximum charging rate (kW, positive).
    pub rho_plus: S,
    /// Maximum discharging rate (kW, negative).
    pub rho_minus: S,
    /// Self-discharge rate per hour, in (-1, 0).
    pub rho_bar: S,
    /// Nominal capacity (kWh).
    pub s_max: S,
    /// Lowest admissible SOC (kWh).
    pub s_min: S,
    /// SOC at which charging switches from constant current to constant voltage (kWh).
    pub s_star: S,
}

impl<S: Scalar> BatteryParams<S> {
    /// 13.5 kWh home battery used throughout the reference simulations.
    pub fn reference() -> Self {
        Self {
            eta_plus: S::lit(0.958),
            eta_minus: S::lit(0.958),
            eta_inv: S::lit(0.960),
            rho_plus: S::lit(5.0),
            rho_minus: S::lit(-7.0),
            rho_bar: S::lit(-0.001),
            s_max: S::lit(13.5),
            s_min: S::zero(),
            s_star: S::lit(9.46),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: S| x > S::zero() && x <= S::one();
        let fail = |msg: &str| Err(Error::InvalidBattery(msg.to_owned()));
        if !unit(self.eta_plus) || !unit(self.eta_minus) || !unit(self.eta_inv) {
            return fail("efficiencies must lie in (0, 1]");
        }
        if !(self.rho_plus > S::zero()) {
            return fail("rho_plus must be positive");
        }
        if !(self.rho_minus < S::zero()) {
            return fail("rho_minus must be negative");
        }
        if !(self.rho_bar > -S::one() && self.rho_bar < S::zero()) {
            return fail("rho_bar must lie in (-1, 0)");
        }
        if !(S::zero() <= self.s_min && self.s_min <= self.s_star && self.s_star <= self.s_max) {
            return fail("require 0 <= s_min <= s_star <= s_max");
        }
        Ok(())
    }

    /// Combined inverter and charging efficiency.
    #[inline]
    pub fn charge_efficiency(&self) -> S {
        self.eta_inv * self.eta_plus
    }

    /// Combined inverter and discharging efficiency.
    #[inline]
    pub fn discharge_efficiency(&self) -> S {
        self.eta_inv * self.eta_minus
    }
}

/// Constants of the constant-voltage segment of the charging curve.
///
/// Along the curve the SOC grows as `rho_plus * t` until `t_star`, then as
/// `s_max * (1 - gamma1 * exp(-t / gamma2))`. Both pieces agree in value and
/// slope at `(t_star, s_star)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConstants<S> {
    pub t_star: S,
    pub gamma2: S,
    pub gamma1: S,
}

pub fn derive_cv_constants<S: Scalar>(params: &BatteryParams<S>) -> Result<CvConstants<S>> {
    if params.s_star >= params.s_max {
        return Err(Error::DegenerateBattery {
            s_star: params.s_star.to_f64_lossy(),
            s_max: params.s_max.to_f64_lossy(),
        });
    }
    let t_star = params.s_star / params.rho_plus;
    let gamma2 = (params.s_max - params.s_star) / params.rho_plus;
    let gamma1 = (params.s_max - params.s_star) * (t_star / gamma2).exp() / params.s_max;
    Ok(CvConstants {
        t_star,
        gamma2,
        gamma1,
    })
}

/// State of charge (kWh).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Soc<S>(pub S);

/// Energy decision for one interval (kWh).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Decision<S>(pub S);

/// Upper bound on a charging decision starting from `s`.
///
/// Below `s_star` the battery charges at `rho_plus`; if the interval is long
/// enough to reach `s_star`, the rest of it follows the exponential CV curve.
/// With `cv == None` (no CV region) the limit is the CC rate capped by the
/// remaining capacity.
pub fn phi_plus<S: Scalar>(
    s: Soc<S>,
    params: &BatteryParams<S>,
    cv: Option<&CvConstants<S>>,
    dt: S,
) -> S {
    let s = s.0;
    let headroom = (params.s_max - s).max(S::zero());
    let Some(cv) = cv else {
        return (params.rho_plus * dt).min(headroom);
    };
    if s < params.s_star {
        let to_star = params.s_star - s;
        let time_to_star = to_star / params.rho_plus;
        if dt <= time_to_star {
            params.rho_plus * dt
        } else {
            let remaining = dt - time_to_star;
            to_star + (params.s_max - params.s_star) * (S::one() - (-remaining / cv.gamma2).exp())
        }
    } else {
        headroom * (S::one() - (-dt / cv.gamma2).exp())
    }
}

/// Lower bound (most negative) on a discharging decision starting from `s`.
pub fn phi_minus<S: Scalar>(s: Soc<S>, params: &BatteryParams<S>, dt: S) -> S {
    let eff = params.discharge_efficiency();
    let rate_limited = params.rho_minus * dt * eff;
    let soc_limited = -(s.0 - params.s_min).max(S::zero()) * eff;
    rate_limited.max(soc_limited)
}

/// Next SOC after applying decision `a` for one interval of `dt` hours.
pub fn transition<S: Scalar>(
    s: Soc<S>,
    a: Decision<S>,
    params: &BatteryParams<S>,
    dt: S,
) -> Result<Soc<S>> {
    let (s0, a) = (s.0, a.0);
    let next = if a > S::zero() {
        s0 + params.charge_efficiency() * a
    } else if a < S::zero() {
        s0 + a / params.discharge_efficiency()
    } else {
        // idle: exponential self-discharge, floored at s_min
        (s0 * (S::one() + params.rho_bar).powf(dt)).max(params.s_min.min(s0))
    };
    settle(s0, a, next, params)
}

/// Snaps `next` into `[s_min, s_max]` when it is within tolerance, or reports
/// the decision as infeasible.
fn settle<S: Scalar>(s0: S, a: S, next: S, params: &BatteryParams<S>) -> Result<Soc<S>> {
    let tol = S::feasibility_tol();
    if next < params.s_min - tol || next > params.s_max + tol || !next.is_finite() {
        return Err(Error::InfeasibleDecision {
            soc: s0.to_f64_lossy(),
            decision: a.to_f64_lossy(),
            result: next.to_f64_lossy(),
            s_min: params.s_min.to_f64_lossy(),
            s_max: params.s_max.to_f64_lossy(),
        });
    }
    Ok(Soc(next.max(params.s_min).min(params.s_max)))
}

/// Projects a raw decision onto `[max(-net_demand, phi_minus(s)), phi_plus(s)]`.
pub fn clamp_decision<S: Scalar>(
    s: Soc<S>,
    a_raw: S,
    net_demand: S,
    params: &BatteryParams<S>,
    cv: Option<&CvConstants<S>>,
    dt: S,
) -> Decision<S> {
    let lower = (-net_demand).max(phi_minus(s, params, dt));
    let upper = phi_plus(s, params, cv, dt);
    Decision(a_raw.max(lower).min(upper))
}

/// A validated battery bound to an interval length, with its CV constants cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Battery<S> {
    pub params: BatteryParams<S>,
    pub cv: Option<CvConstants<S>>,
    pub dt: S,
}

impl<S: Scalar> Battery<S> {
    /// Falls back to pure constant-current charging when `s_star == s_max`.
    pub fn new(params: BatteryParams<S>, dt: S) -> Result<Self> {
        params.validate()?;
        if !(dt > S::zero()) {
            return Err(Error::InvalidBattery("interval length must be positive".into()));
        }
        let cv = match derive_cv_constants(&params) {
            Ok(cv) => Some(cv),
            Err(Error::DegenerateBattery { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Self { params, cv, dt })
    }

    pub fn phi_plus(&self, s: S) -> S {
        phi_plus(Soc(s), &self.params, self.cv.as_ref(), self.dt)
    }

    pub fn phi_minus(&self, s: S) -> S {
        phi_minus(Soc(s), &self.params, self.dt)
    }

    pub fn transition(&self, s: S, a: S) -> Result<S> {
        transition(Soc(s), Decision(a), &self.params, self.dt).map(|s| s.0)
    }

    pub fn clamp(&self, s: S, a_raw: S, net_demand: S) -> S {
        clamp_decision(Soc(s), a_raw, net_demand, &self.params, self.cv.as_ref(), self.dt).0
    }

    /// One interval of execution with DC-side PV surplus.
    ///
    /// The surplus charges the battery first (charging efficiency only, no
    /// inverter pass) within the `phi_plus` headroom; the rest is curtailed.
    /// The scheduled decision is then clamped to what remains. Returns the
    /// executed decision, the PV energy stored and the next SOC.
    pub fn step_with_surplus(
        &self,
        s: S,
        scheduled: S,
        net_demand: S,
        pv_surplus: S,
    ) -> Result<ExecutedStep<S>> {
        let p = &self.params;
        let headroom = self.phi_plus(s);
        let pv_stored = pv_surplus.max(S::zero()).min(p.eta_inv * headroom);
        let lower = (-net_demand).max(self.phi_minus(s));
        let upper = (headroom - pv_stored / p.eta_inv).max(S::zero());
        let executed = scheduled.max(lower).min(upper);

        if pv_stored > S::zero() {
            let mut next = s + p.eta_plus * pv_stored;
            if executed > S::zero() {
                next += p.charge_efficiency() * executed;
            } else if executed < S::zero() {
                next += executed / p.discharge_efficiency();
            }
            let next = settle(s, executed, next, p)?.0;
            return Ok(ExecutedStep {
                decision: executed,
                pv_stored,
                soc: next,
            });
        }
        Ok(ExecutedStep {
            decision: executed,
            pv_stored,
            soc: self.transition(s, executed)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecutedStep<S> {
    pub decision: S,
    pub pv_stored: S,
    pub soc: S,
}
