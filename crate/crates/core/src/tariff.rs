//! Quadratic per-interval cost with proportional billing for participants and
//! a flat per-kWh price for everyone else.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TariffParams<S> {
    pub c2: S,
    pub c1: S,
    pub c0: S,
    /// Flat price per kWh for non-participants. Never used by the game.
    pub fixed_price: S,
}

impl<S: Scalar> Default for TariffParams<S> {
    fn default() -> Self {
        Self {
            c2: S::lit(0.03125),
            c1: S::one(),
            c0: S::zero(),
            fixed_price: S::lit(0.15),
        }
    }
}

impl<S: Scalar> TariffParams<S> {
    pub fn validate(&self) -> Result<()> {
        if self.c2 > S::zero() && self.c1 >= S::zero() && self.c0 >= S::zero() && self.fixed_price > S::zero() {
            Ok(())
        } else {
            Err(Error::InvalidGame(
                "tariff requires c2 > 0, c1 >= 0, c0 >= 0, fixed_price > 0".into(),
            ))
        }
    }
}

/// `c2 y^2 + c1 y + c0` for aggregate load `y`.
#[inline]
pub fn stage_cost<S: Scalar>(aggregate_load: S, params: &TariffParams<S>) -> S {
    (params.c2 * aggregate_load + params.c1) * aggregate_load + params.c0
}

/// Cost summed over the intervals of an aggregate load curve.
pub fn total_cost<S: Scalar>(aggregate: &[S], params: &TariffParams<S>) -> S {
    aggregate.iter().map(|&y| stage_cost(y, params)).sum()
}

/// Each participant's share of the participants' total consumption.
///
/// When every participant load is zero the cost is split evenly.
pub fn proportional_factor<S: Scalar>(participant_loads: &[Vec<S>]) -> Vec<S> {
    let sums: Vec<S> = participant_loads.iter().map(|l| l.iter().copied().sum()).collect();
    let total: S = sums.iter().copied().sum();
    if total > S::zero() {
        sums.into_iter().map(|s| s / total).collect()
    } else {
        let n = S::from_usize_lossy(participant_loads.len().max(1));
        vec![S::one() / n; participant_loads.len()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillingResult<S> {
    /// Bill per participant, as a positive amount owed.
    pub bills: Vec<S>,
    pub omega: Vec<S>,
    /// Cost of the whole neighbourhood's aggregate load.
    pub total_cost: S,
}

/// Splits the cost of the neighbourhood aggregate among participants.
///
/// `total_loads` is the aggregate of all households, participants or not.
pub fn bill_participants<S: Scalar>(
    participant_loads: &[Vec<S>],
    total_loads: &[S],
    params: &TariffParams<S>,
) -> BillingResult<S> {
    let omega = proportional_factor(participant_loads);
    let total_cost = total_cost(total_loads, params);
    BillingResult {
        bills: omega.iter().map(|&w| w * total_cost).collect(),
        omega,
        total_cost,
    }
}

pub fn bill_nonparticipant<S: Scalar>(loads: &[S], params: &TariffParams<S>) -> S {
    params.fixed_price * loads.iter().copied().sum::<S>()
}

/// Relative bill reduction; negative when the scheme made the bill larger.
pub fn savings<S: Scalar>(bill_with_dsm: S, bill_reference: S) -> Result<S> {
    if bill_reference == S::zero() {
        return Err(Error::ZeroReference);
    }
    Ok((bill_reference - bill_with_dsm) / bill_reference)
}
