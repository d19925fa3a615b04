//! Scalar log-densities and samplers shared by the model implementations.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

pub const LN_2PI: f64 = 1.8378770664093453;

/// log N(x | mean, sd^2). A zero standard deviation is degenerate and yields
/// -inf unless x equals the mean exactly.
pub fn ln_normal(x: f64, mean: f64, sd: f64) -> f64 {
    if !(sd > 0.0) {
        return if x == mean { f64::INFINITY } else { f64::NEG_INFINITY };
    }
    let z = (x - mean) / sd;
    -0.5 * (LN_2PI + z * z) - sd.ln()
}

/// log of the half-normal density with scale `sd`, supported on x >= 0.
pub fn ln_half_normal(x: f64, sd: f64) -> f64 {
    if x < 0.0 || !(sd > 0.0) {
        return f64::NEG_INFINITY;
    }
    let z = x / sd;
    // f(x) = sqrt(2/pi)/sd * exp(-x^2 / (2 sd^2))
    std::f64::consts::LN_2 - 0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

/// log of the unit-rate exponential density.
pub fn ln_exponential(x: f64) -> f64 {
    if x < 0.0 {
        f64::NEG_INFINITY
    } else {
        -x
    }
}

/// log of the U(0, 1) density.
pub fn ln_uniform01(x: f64) -> f64 {
    if (0.0..=1.0).contains(&x) {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

pub fn sample_normal(mean: f64, sd: f64, rng: &mut dyn RngCore) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + sd * z
}

pub fn sample_half_normal(sd: f64, rng: &mut dyn RngCore) -> f64 {
    // interior draw: 0 would map to -inf under a log transform
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let x = (sd * z).abs();
        if x > 0.0 {
            return x;
        }
    }
}

pub fn sample_exponential(rng: &mut dyn RngCore) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return -u.ln();
        }
    }
}

pub fn sample_uniform01(rng: &mut dyn RngCore) -> f64 {
    // interior draw: 0 would map to -inf under a logit transform
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
