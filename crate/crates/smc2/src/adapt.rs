//! Squared-jumping-distance machinery for scoring mutation kernels and
//! adapting the number of kernel repeats.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Kernel applications used when testing a kernel's movement.
pub const K_TEST: usize = 5;
/// Cap on the adapted number of remaining repeats.
pub const R_MAX: usize = 1000;
/// Cap on the lag countdown between alternate-kernel tests.
pub const LAG_CAP: u64 = 50;
/// The alternate kernel is always tested in the first few mutation events.
pub const ALWAYS_TEST_EVENTS: u64 = 5;

/// When the alternate kernel is tested during the mutation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchPolicy {
    Never,
    Always,
    Lag,
}

impl std::str::FromStr for SwitchPolicy {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "never" => Ok(SwitchPolicy::Never),
            "always" => Ok(SwitchPolicy::Always),
            "lag" => Ok(SwitchPolicy::Lag),
            other => Err(crate::Error::invalid(format!(
                "unknown switch policy `{other}` (expected never|always|lag)"
            ))),
        }
    }
}

impl std::fmt::Display for SwitchPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SwitchPolicy::Never => "never",
            SwitchPolicy::Always => "always",
            SwitchPolicy::Lag => "lag",
        })
    }
}

/// Per-parameter average squared jump in whitened coordinates:
/// mean over particles of (Sigma^{-1/2} (theta_before - theta_after))^2,
/// elementwise. Inputs are unconstrained coordinates.
pub fn psjd(before: &[Vec<f64>], after: &[Vec<f64>], inv_sqrt: &DMatrix<f64>) -> Vec<f64> {
    assert_eq!(before.len(), after.len());
    let n = before.len();
    let dim = inv_sqrt.nrows();
    let mut acc = vec![0.0; dim];
    for (b, a) in before.iter().zip(after) {
        let d = DVector::from_fn(dim, |j, _| b[j] - a[j]);
        let v = inv_sqrt * d;
        for j in 0..dim {
            acc[j] += v[j] * v[j];
        }
    }
    for a in &mut acc {
        *a /= n as f64;
    }
    acc
}

/// Kernel score: minimum per-parameter SJD divided by the kernel's state
/// particle count.
pub fn kernel_score(psjd: &[f64], nx: usize) -> f64 {
    assert!(nx > 0);
    psjd.iter().copied().fold(f64::INFINITY, f64::min) / nx as f64
}

/// Mutation target: 4 times the weighted squared Mahalanobis distance of the
/// particles to their weighted mean.
pub fn sjd_target(
    points: &[Vec<f64>],
    weights: &[f64],
    mean: &DVector<f64>,
    inv: &DMatrix<f64>,
) -> f64 {
    let dim = mean.len();
    let mut total = 0.0;
    for (p, &w) in points.iter().zip(weights) {
        let d = DVector::from_fn(dim, |j, _| p[j] - mean[j]);
        total += w * (d.transpose() * inv * &d)[(0, 0)];
    }
    4.0 * total
}

/// Remaining kernel repeats after the testing phase:
/// ceil( (target - min(psjd_def + psjd_alt)) / (m_best / k) ),
/// floored at 0 and capped at [`R_MAX`]. A kernel with no movement
/// (m_best = 0) yields the cap.
pub fn remaining_repeats(
    sjd_target: f64,
    psjd_def: &[f64],
    psjd_alt: &[f64],
    m_best: f64,
    k: usize,
) -> usize {
    assert_eq!(psjd_def.len(), psjd_alt.len());
    if !(m_best > 0.0) || !m_best.is_finite() {
        return R_MAX;
    }
    let combined_min = psjd_def
        .iter()
        .zip(psjd_alt)
        .map(|(a, b)| a + b)
        .fold(f64::INFINITY, f64::min);
    let deficit = sjd_target - combined_min;
    if deficit <= 0.0 {
        return 0;
    }
    let r = (deficit / (m_best / k as f64)).ceil();
    if !r.is_finite() {
        return R_MAX;
    }
    (r as usize).min(R_MAX)
}

/// Lag countdown from the kernel scores: ceil(score_def / score_alt),
/// clamped to [1, LAG_CAP]. A motionless alternate yields the cap.
pub fn lag_from_scores(score_def: f64, score_alt: f64) -> u64 {
    if !(score_alt > 0.0) {
        return LAG_CAP;
    }
    let ratio = score_def / score_alt;
    if !ratio.is_finite() {
        return LAG_CAP;
    }
    (ratio.ceil() as u64).clamp(1, LAG_CAP)
}

/// Schedule state for lag-based testing of the alternate kernel.
#[derive(Debug, Clone, Copy, Default)]
pub struct LagState {
    pub events: u64,
    pub countdown: u64,
}

impl LagState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Called once per mutation event; returns whether the alternate kernel
    /// should be tested this time.
    pub fn begin_event(&mut self) -> bool {
        self.events += 1;
        if self.events <= ALWAYS_TEST_EVENTS {
            return true;
        }
        if self.countdown > 1 {
            self.countdown -= 1;
            false
        } else {
            true
        }
    }

    /// Record the scores of a completed test to set the next countdown.
    pub fn record_scores(&mut self, score_def: f64, score_alt: f64) {
        self.countdown = lag_from_scores(score_def, score_alt);
    }
}
