//! Brownian motion benchmark model.
//!
//! Transition: x_t | x_{t-1} ~ N(x_{t-1} + beta - gamma^2/2, gamma^2), with
//! the initial level x0 treated as a parameter, and observations
//! y_t ~ N(x_t, sigma^2).

use super::{Model, ModelSpec, ParamVector, TimeSeries};
use crate::dist;
use crate::transform::Transform;
use rand::RngCore;

const X0: usize = 0;
const BETA: usize = 1;
const GAMMA: usize = 2;
const SIGMA: usize = 3;

pub struct BmModel {
    spec: ModelSpec,
}

impl BmModel {
    pub fn new() -> Self {
        Self {
            spec: ModelSpec {
                param_names: ["x0", "beta", "gamma", "sigma"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                transforms: vec![
                    Transform::Identity,
                    Transform::Identity,
                    Transform::Log,
                    Transform::Log,
                ],
                block1: vec![X0, BETA, GAMMA],
                block2: vec![SIGMA],
                state_dim: 1,
            },
        }
    }

    fn drift(theta: &ParamVector) -> f64 {
        theta[BETA] - 0.5 * theta[GAMMA] * theta[GAMMA]
    }
}

impl Default for BmModel {
    fn default() -> Self {
        Self::new()
    }
}

impl Model for BmModel {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn log_prior_components(&self, theta: &ParamVector) -> Vec<f64> {
        vec![
            dist::ln_normal(theta[X0], 3.0, 5.0),
            dist::ln_normal(theta[BETA], 2.0, 5.0),
            dist::ln_half_normal(theta[GAMMA], 2.0),
            dist::ln_half_normal(theta[SIGMA], 2.0),
        ]
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> ParamVector {
        ParamVector::new(vec![
            dist::sample_normal(3.0, 5.0, rng),
            dist::sample_normal(2.0, 5.0, rng),
            dist::sample_half_normal(2.0, rng),
            dist::sample_half_normal(2.0, rng),
        ])
    }

    fn log_init(&self, theta: &ParamVector, x1: f64) -> f64 {
        dist::ln_normal(x1, theta[X0] + Self::drift(theta), theta[GAMMA])
    }

    fn sample_init(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> f64 {
        dist::sample_normal(theta[X0] + Self::drift(theta), theta[GAMMA], rng)
    }

    fn log_transition(&self, theta: &ParamVector, x_prev: f64, x: f64, _t: usize) -> f64 {
        dist::ln_normal(x, x_prev + Self::drift(theta), theta[GAMMA])
    }

    fn sample_transition(
        &self,
        theta: &ParamVector,
        x_prev: f64,
        _t: usize,
        rng: &mut dyn RngCore,
    ) -> f64 {
        dist::sample_normal(x_prev + Self::drift(theta), theta[GAMMA], rng)
    }

    fn log_observation(&self, theta: &ParamVector, x: f64, data: &TimeSeries, t: usize) -> f64 {
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
        let (x0, beta, gamma, sigma) = (theta[X0], theta[BETA], theta[GAMMA], theta[SIGMA]);
        let c = Self::drift(theta);
        let g2 = gamma * gamma;
        let mut g = vec![
            -(x0 - 3.0) / 25.0,
            -(beta - 2.0) / 25.0,
            -gamma / 4.0,
            -sigma / 4.0,
        ];
        let mut prev = x0;
        for (t, &x) in path.iter().enumerate() {
            let e = x - (prev + c);
            if t == 0 {
                g[X0] += e / g2;
            }
            g[BETA] += e / g2;
            g[GAMMA] += -1.0 / gamma - e / gamma + e * e / (g2 * gamma);
            prev = x;
        }
        if temper != 0.0 {
            let s2 = sigma * sigma;
            for (t, &x) in path.iter().enumerate() {
                let e = data.y[t] - x;
                g[SIGMA] += temper * (-1.0 / sigma + e * e / (s2 * sigma));
            }
        }
        Some(g)
    }

    fn reference_params(&self) -> ParamVector {
        ParamVector::new(vec![1.0, 1.2, 1.5, 1.0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate_data;
    use crate::rng::substream;
    use crate::stats::mean_se;

    #[test]
    fn prior_log_density_fixture() {
        // hand evaluation of the four stated prior densities at (1, 1.2, 1.5, 1)
        let model = BmModel::new();
        let theta = ParamVector::new(vec![1.0, 1.2, 1.5, 1.0]);
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let n = |x: f64, m: f64, s: f64| -0.5 * ln2pi - s.ln() - (x - m).powi(2) / (2.0 * s * s);
        let hn = |x: f64, s: f64| {
            0.5 * (2.0 / std::f64::consts::PI).ln() - s.ln() - x * x / (2.0 * s * s)
        };
        let expect = n(1.0, 3.0, 5.0) + n(1.2, 2.0, 5.0) + hn(1.5, 2.0) + hn(1.0, 2.0);
        assert!((model.log_prior(&theta) - expect).abs() < 1e-12);
    }

    #[test]
    fn prior_rejects_negative_scales() {
        let model = BmModel::new();
        let theta = ParamVector::new(vec![1.0, 1.2, -0.1, 1.0]);
        assert_eq!(model.log_prior(&theta), f64::NEG_INFINITY);
    }

    #[test]
    fn transition_fixture() {
        // mean is x_prev + beta - gamma^2/2 = 1.2 - 1.125 = 0.075;
        // the log-density at the mean is -log(gamma sqrt(2 pi))
        let model = BmModel::new();
        let theta = ParamVector::new(vec![0.0, 1.2, 1.5, 1.0]);
        let v = model.log_transition(&theta, 0.0, 0.075, 2);
        let expect = -(1.5 * (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn observation_at_mean() {
        let model = BmModel::new();
        let theta = ParamVector::new(vec![0.0, 1.2, 1.5, 1.0]);
        let data = TimeSeries::from_observations(vec![0.7]);
        let v = model.log_observation(&theta, 0.7, &data, 1);
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn prior_sample_moments() {
        let model = BmModel::new();
        let mut rng = substream(42, &[1]);
        let n = 100_000;
        let betas: Vec<f64> = (0..n)
            .map(|_| {
                let th = model.sample_prior(&mut rng);
                assert!(th[GAMMA] >= 0.0 && th[SIGMA] >= 0.0);
                th[BETA]
            })
            .collect();
        let (mean, _) = mean_se(&betas);
        let se = 5.0 / (n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "beta mean {mean}");
    }

    #[test]
    fn noise_free_limit_is_linear() {
        // gamma -> 0, sigma -> 0: y_t = x0 + t * beta exactly
        let model = BmModel::new();
        let theta = ParamVector::new(vec![1.0, 1.2, 0.0, 0.0]);
        let (data, _) = simulate_data(&model, &theta, 10, &mut substream(1, &[2]));
        for (t, &y) in data.y.iter().enumerate() {
            let expect = 1.0 + (t as f64 + 1.0) * 1.2;
            assert!((y - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn block2_gradient_at_zero_temper_is_prior_only() {
        // sigma appears only in the observation density, so at g = 0 the
        // block-2 gradient reduces to the prior + Jacobian terms
        let model = BmModel::new();
        let theta = model.reference_params();
        let (data, path) = simulate_data(&model, &theta, 6, &mut substream(9, &[3]));
        let grad =
            crate::model::grad_block_log_target(&model, &theta, &path, &data, 0.0, 2).unwrap();
        let sigma = theta[SIGMA];
        // d/du [ln HN(sigma) + ln sigma] with sigma = e^u: -sigma^2/4 + 1
        let expect = -sigma * sigma / 4.0 + 1.0;
        assert!((grad[0] - expect).abs() < 1e-12);
    }
}
