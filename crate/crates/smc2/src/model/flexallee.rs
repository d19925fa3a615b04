//! Flexible-allee logistic population model.
//!
//! The latent state is carried on the log scale l_t = ln(abundance):
//!   l_{t+1} = l_t + b0 + b1 exp(l_t) + b2 exp(2 l_t) + noise(gamma^2)
//! with observations y_t ~ N(l_t, sigma^2). The initial abundance x0 is a
//! parameter; l_1 is one transition step from ln(x0).

use super::{Model, ModelSpec, ParamVector, TimeSeries};
use crate::dist;
use crate::transform::Transform;
use rand::RngCore;

const X0: usize = 0;
const B0: usize = 1;
const B1: usize = 2;
const B2: usize = 3;
const GAMMA: usize = 4;
const SIGMA: usize = 5;

pub struct FlexAlleeModel {
    spec: ModelSpec,
}

impl FlexAlleeModel {
    pub fn new() -> Self {
        Self {
            spec: ModelSpec {
                param_names: ["x0", "b0", "b1", "b2", "gamma", "sigma"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                transforms: vec![
                    Transform::Log,
                    Transform::Identity,
                    Transform::Identity,
                    Transform::Identity,
                    Transform::Log,
                    Transform::Log,
                ],
                block1: vec![X0, B0, B1, B2, GAMMA],
                block2: vec![SIGMA],
                state_dim: 1,
            },
        }
    }

    /// Mean of l_t given the previous abundance (natural scale).
    fn step_mean(theta: &ParamVector, log_prev: f64, abundance_prev: f64) -> f64 {
        log_prev
            + theta[B0]
            + theta[B1] * abundance_prev
            + theta[B2] * abundance_prev * abundance_prev
    }
}

impl Default for FlexAlleeModel {
    fn default() -> Self {
        Self::new()
    }
}

impl Model for FlexAlleeModel {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn log_prior_components(&self, theta: &ParamVector) -> Vec<f64> {
        vec![
            dist::ln_half_normal(theta[X0], 1000.0),
            dist::ln_normal(theta[B0], 0.0, 0.2),
            dist::ln_normal(theta[B1], 0.0, 0.001),
            dist::ln_normal(theta[B2], 0.0, 0.001),
            dist::ln_exponential(theta[GAMMA]),
            dist::ln_exponential(theta[SIGMA]),
        ]
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> ParamVector {
        ParamVector::new(vec![
            dist::sample_half_normal(1000.0, rng),
            dist::sample_normal(0.0, 0.2, rng),
            dist::sample_normal(0.0, 0.001, rng),
            dist::sample_normal(0.0, 0.001, rng),
            dist::sample_exponential(rng),
            dist::sample_exponential(rng),
        ])
    }

    fn log_init(&self, theta: &ParamVector, x1: f64) -> f64 {
        let x0 = theta[X0];
        if !(x0 > 0.0) {
            return f64::NEG_INFINITY;
        }
        dist::ln_normal(x1, Self::step_mean(theta, x0.ln(), x0), theta[GAMMA])
    }

    fn sample_init(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> f64 {
        let x0 = theta[X0];
        dist::sample_normal(Self::step_mean(theta, x0.ln(), x0), theta[GAMMA], rng)
    }

    fn log_transition(&self, theta: &ParamVector, x_prev: f64, x: f64, _t: usize) -> f64 {
        dist::ln_normal(
            x,
            Self::step_mean(theta, x_prev, x_prev.exp()),
            theta[GAMMA],
        )
    }

    fn sample_transition(
        &self,
        theta: &ParamVector,
        x_prev: f64,
        _t: usize,
        rng: &mut dyn RngCore,
    ) -> f64 {
        dist::sample_normal(
            Self::step_mean(theta, x_prev, x_prev.exp()),
            theta[GAMMA],
            rng,
        )
    }

    fn log_observation(&self, theta: &ParamVector, x: f64, data: &TimeSeries, t: usize) -> f64 {
        // x is the log-abundance; a non-finite value corresponds to a
        // non-positive abundance and has zero likelihood
        if !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        dist::ln_normal(data.y[t - 1], x, theta[SIGMA])
    }

    fn sample_observation(
        &self,
        theta: &ParamVector,
        x: f64,
        _data: &TimeSeries,
        _t: usize,
        rng: &mut dyn RngCore,
    ) -> f64 {
        dist::sample_normal(x, theta[SIGMA], rng)
    }

    fn grad_constrained_target(
        &self,
        theta: &ParamVector,
        path: &[f64],
        data: &TimeSeries,
        temper: f64,
    ) -> Option<Vec<f64>> {
        let (x0, b1, b2) = (theta[X0], theta[B1], theta[B2]);
        let gamma = theta[GAMMA];
        let sigma = theta[SIGMA];
        let g2 = gamma * gamma;
        let mut g = vec![
            -x0 / 1e6,
            -theta[B0] / 0.04,
            -theta[B1] / 1e-6,
            -theta[B2] / 1e-6,
            -1.0,
            -1.0,
        ];
        let mut log_prev = x0.ln();
        let mut abundance_prev = x0;
        for (t, &l) in path.iter().enumerate() {
            let e = l - Self::step_mean(theta, log_prev, abundance_prev);
            if t == 0 {
                g[X0] += e / g2 * (1.0 / x0 + b1 + 2.0 * b2 * x0);
            }
            g[B0] += e / g2;
            g[B1] += e * abundance_prev / g2;
            g[B2] += e * abundance_prev * abundance_prev / g2;
            g[GAMMA] += -1.0 / gamma + e * e / (g2 * gamma);
            log_prev = l;
            abundance_prev = l.exp();
        }
        if temper != 0.0 {
            let s2 = sigma * sigma;
            for (t, &l) in path.iter().enumerate() {
                let e = data.y[t] - l;
                g[SIGMA] += temper * (-1.0 / sigma + e * e / (s2 * sigma));
            }
        }
        Some(g)
    }

    fn reference_params(&self) -> ParamVector {
        ParamVector::new(vec![100.0, 0.2, 0.001, -5e-6, 0.1, 0.1])
    }
}
