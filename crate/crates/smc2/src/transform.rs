//! Elementwise parameter transforms between the natural (constrained) space
//! and the unconstrained space used by all proposal distributions.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    /// Unbounded parameter, mapped by the identity.
    Identity,
    /// Positive parameter, mapped by ln.
    Log,
    /// Parameter in (0, 1), mapped by the log-odds.
    Logit,
}

impl Transform {
    /// Natural -> unconstrained.
    pub fn to_unconstrained(self, theta: f64) -> f64 {
        match self {
            Transform::Identity => theta,
            Transform::Log => theta.ln(),
            Transform::Logit => (theta / (1.0 - theta)).ln(),
        }
    }

    /// Unconstrained -> natural.
    pub fn from_unconstrained(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Log => u.exp(),
            Transform::Logit => 1.0 / (1.0 + (-u).exp()),
        }
    }

    /// log |dtheta/du| evaluated at the natural value.
    pub fn log_jacobian(self, theta: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Log => theta.ln(),
            Transform::Logit => theta.ln() + (1.0 - theta).ln(),
        }
    }

    /// d(log |dtheta/du|)/du evaluated at the natural value.
    pub fn dlog_jacobian_du(self, theta: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Log => 1.0,
            Transform::Logit => 1.0 - 2.0 * theta,
        }
    }

    /// dtheta/du evaluated at the natural value.
    pub fn dtheta_du(self, theta: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Log => theta,
            Transform::Logit => theta * (1.0 - theta),
        }
    }
}

/// Map a full parameter vector to unconstrained coordinates.
/// Boundary values (e.g. a logit parameter at exactly 0 or 1) map to +/-inf
/// and are rejected.
pub fn to_unconstrained(values: &[f64], transforms: &[Transform]) -> Result<Vec<f64>> {
    debug_assert_eq!(values.len(), transforms.len());
    let mut out = Vec::with_capacity(values.len());
    for (&v, &tr) in values.iter().zip(transforms) {
        let u = tr.to_unconstrained(v);
        if !u.is_finite() {
            return Err(Error::degenerate(format!(
                "parameter value {v} is outside the interior of its support"
            )));
        }
        out.push(u);
    }
    Ok(out)
}

/// Map unconstrained coordinates back to the natural space.
pub fn from_unconstrained(u: &[f64], transforms: &[Transform]) -> Vec<f64> {
    u.iter()
        .zip(transforms)
        .map(|(&ui, &tr)| tr.from_unconstrained(ui))
        .collect()
}

/// Sum of log |dtheta/du| over all coordinates, evaluated at natural values.
pub fn log_jacobian_sum(values: &[f64], transforms: &[Transform]) -> f64 {
    values
        .iter()
        .zip(transforms)
        .map(|(&v, &tr)| tr.log_jacobian(v))
        .sum()
}
