//! Stochastic volatility in mean model.
//!
//! Latent log-volatility h_t ~ N(phi h_{t-1}, sigma^2) with stationary
//! initialization, and returns
//!   y_t ~ N(a + b y_{t-1} + d s^2 exp(h_t), s^2 exp(h_t)).
//! The lagged observation at t = 1 is a configurable constant (default 0).

use super::{Model, ModelSpec, ParamVector, TimeSeries};
use crate::dist;
use crate::transform::Transform;
use rand::RngCore;

const A: usize = 0;
const B: usize = 1;
const D: usize = 2;
const S: usize = 3;
const PHI: usize = 4;
const SIGMA: usize = 5;

pub struct SvmModel {
    spec: ModelSpec,
    y0: f64,
}

impl SvmModel {
    pub fn new(y0: f64) -> Self {
        Self {
            spec: ModelSpec {
                param_names: ["a", "b", "d", "s", "phi", "sigma"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                transforms: vec![
                    Transform::Identity,
                    Transform::Logit,
                    Transform::Identity,
                    Transform::Log,
                    Transform::Logit,
                    Transform::Log,
                ],
                block1: vec![PHI, SIGMA],
                block2: vec![A, B, D, S],
                state_dim: 1,
            },
            y0,
        }
    }

    fn lagged(&self, data: &TimeSeries, t: usize) -> f64 {
        if t == 1 {
            self.y0
        } else {
            data.y[t - 2]
        }
    }

    fn obs_moments(&self, theta: &ParamVector, h: f64, y_prev: f64) -> (f64, f64) {
        let s2 = theta[S] * theta[S];
        let var = s2 * h.exp();
        let mean = theta[A] + theta[B] * y_prev + theta[D] * var;
        (mean, var)
    }
}

impl Model for SvmModel {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn log_prior_components(&self, theta: &ParamVector) -> Vec<f64> {
        vec![
            dist::ln_normal(theta[A], 0.0, 10.0),
            dist::ln_uniform01(theta[B]),
            dist::ln_normal(theta[D], 0.0, 10.0),
            dist::ln_half_normal(theta[S], 2.0),
            dist::ln_uniform01(theta[PHI]),
            dist::ln_half_normal(theta[SIGMA], 2.0),
        ]
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> ParamVector {
        ParamVector::new(vec![
            dist::sample_normal(0.0, 10.0, rng),
            dist::sample_uniform01(rng),
            dist::sample_normal(0.0, 10.0, rng),
            dist::sample_half_normal(2.0, rng),
            dist::sample_uniform01(rng),
            dist::sample_half_normal(2.0, rng),
        ])
    }

    fn log_init(&self, theta: &ParamVector, x1: f64) -> f64 {
        let phi = theta[PHI];
        let stationary_sd = theta[SIGMA] / (1.0 - phi * phi).sqrt();
        dist::ln_normal(x1, 0.0, stationary_sd)
    }

    fn sample_init(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> f64 {
        let phi = theta[PHI];
        dist::sample_normal(0.0, theta[SIGMA] / (1.0 - phi * phi).sqrt(), rng)
    }

    fn log_transition(&self, theta: &ParamVector, x_prev: f64, x: f64, _t: usize) -> f64 {
        dist::ln_normal(x, theta[PHI] * x_prev, theta[SIGMA])
    }

    fn sample_transition(
        &self,
        theta: &ParamVector,
        x_prev: f64,
        _t: usize,
        rng: &mut dyn RngCore,
    ) -> f64 {
        dist::sample_normal(theta[PHI] * x_prev, theta[SIGMA], rng)
    }

    fn log_observation(&self, theta: &ParamVector, x: f64, data: &TimeSeries, t: usize) -> f64 {
        let (mean, var) = self.obs_moments(theta, x, self.lagged(data, t));
        dist::ln_normal(data.y[t - 1], mean, var.sqrt())
    }

    fn sample_observation(
        &self,
        theta: &ParamVector,
        x: f64,
        data: &TimeSeries,
        t: usize,
        rng: &mut dyn RngCore,
    ) -> f64 {
        let (mean, var) = self.obs_moments(theta, x, self.lagged(data, t));
        dist::sample_normal(mean, var.sqrt(), rng)
    }

    fn grad_constrained_target(
        &self,
        theta: &ParamVector,
        path: &[f64],
        data: &TimeSeries,
        temper: f64,
    ) -> Option<Vec<f64>> {
        let (a, d, s, phi, sigma) = (theta[A], theta[D], theta[S], theta[PHI], theta[SIGMA]);
        let s2sig = sigma * sigma;
        let mut g = vec![
            -a / 100.0,
            0.0,
            -d / 100.0,
            -s / 4.0,
            0.0,
            -sigma / 4.0,
        ];
        if let Some(&h1) = path.first() {
            let omp2 = 1.0 - phi * phi;
            g[PHI] += -phi / omp2 + h1 * h1 * phi / s2sig;
            g[SIGMA] += -1.0 / sigma + h1 * h1 * omp2 / (s2sig * sigma);
        }
        for t in 2..=path.len() {
            let h_prev = path[t - 2];
            let r = path[t - 1] - phi * h_prev;
            g[PHI] += r * h_prev / s2sig;
            g[SIGMA] += -1.0 / sigma + r * r / (s2sig * sigma);
        }
        if temper != 0.0 {
            for t in 1..=path.len() {
                let h = path[t - 1];
                let y_prev = self.lagged(data, t);
                let (mean, var) = self.obs_moments(theta, h, y_prev);
                let e = data.y[t - 1] - mean;
                g[A] += temper * e / var;
                g[B] += temper * e * y_prev / var;
                g[D] += temper * e;
                g[S] += temper
                    * (-1.0 / s + 2.0 * d * e / s + e * e / (s * s * s * h.exp()));
            }
        }
        Some(g)
    }

    fn reference_params(&self) -> ParamVector {
        ParamVector::new(vec![0.1, 0.2, 0.05, 1.0, 0.9, 0.3])
    }
}
