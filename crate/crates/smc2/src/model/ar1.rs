//! Stationary AR(1) latent process with a log-variance observation link.
//!
//! x_t ~ N(mu + phi (x_{t-1} - mu), sigma^2), x_1 ~ N(mu, sigma^2/(1-phi^2)),
//! y_t ~ N(z_t' beta, exp(x_t)) with covariates z_t.

use super::{Model, ModelSpec, ParamVector, TimeSeries};
use crate::dist;
use crate::transform::Transform;
use rand::RngCore;

const PHI: usize = 0;
const SIGMA: usize = 1;
const MU: usize = 2;
const BETA0: usize = 3;

pub struct Ar1Model {
    spec: ModelSpec,
    d_beta: usize,
}

impl Ar1Model {
    pub fn new(d_beta: usize) -> Self {
        assert!(d_beta >= 1, "AR(1) model needs at least one covariate");
        let mut names = vec!["phi".to_string(), "sigma".to_string(), "mu".to_string()];
        let mut transforms = vec![Transform::Logit, Transform::Log, Transform::Identity];
        for k in 1..=d_beta {
            names.push(format!("beta{k}"));
            transforms.push(Transform::Identity);
        }
        Self {
            spec: ModelSpec {
                param_names: names,
                transforms,
                block1: vec![PHI, SIGMA, MU],
                block2: (BETA0..BETA0 + d_beta).collect(),
                state_dim: 1,
            },
            d_beta,
        }
    }

    pub fn d_beta(&self) -> usize {
        self.d_beta
    }

    fn linear_predictor(&self, theta: &ParamVector, data: &TimeSeries, t: usize) -> f64 {
        let z = data
            .covariate(t)
            .expect("AR(1) observation density requires covariates");
        assert_eq!(z.len(), self.d_beta, "covariate dimension mismatch");
        z.iter()
            .enumerate()
            .map(|(k, &zk)| zk * theta[BETA0 + k])
            .sum()
    }
}

impl Model for Ar1Model {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn log_prior_components(&self, theta: &ParamVector) -> Vec<f64> {
        let mut out = vec![
            dist::ln_uniform01(theta[PHI]),
            dist::ln_half_normal(theta[SIGMA], 10.0),
            dist::ln_normal(theta[MU], 0.0, 5.0),
        ];
        for k in 0..self.d_beta {
            out.push(dist::ln_normal(theta[BETA0 + k], 0.0, 1.0));
        }
        out
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> ParamVector {
        let mut values = vec![
            dist::sample_uniform01(rng),
            dist::sample_half_normal(10.0, rng),
            dist::sample_normal(0.0, 5.0, rng),
        ];
        for _ in 0..self.d_beta {
            values.push(dist::sample_normal(0.0, 1.0, rng));
        }
        ParamVector::new(values)
    }

    fn log_init(&self, theta: &ParamVector, x1: f64) -> f64 {
        let phi = theta[PHI];
        dist::ln_normal(x1, theta[MU], theta[SIGMA] / (1.0 - phi * phi).sqrt())
    }

    fn sample_init(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> f64 {
        let phi = theta[PHI];
        dist::sample_normal(theta[MU], theta[SIGMA] / (1.0 - phi * phi).sqrt(), rng)
    }

    fn log_transition(&self, theta: &ParamVector, x_prev: f64, x: f64, _t: usize) -> f64 {
        let mean = theta[MU] + theta[PHI] * (x_prev - theta[MU]);
        dist::ln_normal(x, mean, theta[SIGMA])
    }

    fn sample_transition(
        &self,
        theta: &ParamVector,
        x_prev: f64,
        _t: usize,
        rng: &mut dyn RngCore,
    ) -> f64 {
        let mean = theta[MU] + theta[PHI] * (x_prev - theta[MU]);
        dist::sample_normal(mean, theta[SIGMA], rng)
    }

    fn log_observation(&self, theta: &ParamVector, x: f64, data: &TimeSeries, t: usize) -> f64 {
        let mean = self.linear_predictor(theta, data, t);
        dist::ln_normal(data.y[t - 1], mean, (0.5 * x).exp())
    }

    fn sample_observation(
        &self,
        theta: &ParamVector,
        x: f64,
        data: &TimeSeries,
        t: usize,
        rng: &mut dyn RngCore,
    ) -> f64 {
        let mean = self.linear_predictor(theta, data, t);
        dist::sample_normal(mean, (0.5 * x).exp(), rng)
    }

    fn simulate_covariates(&self, t_max: usize, rng: &mut dyn RngCore) -> Option<Vec<Vec<f64>>> {
        Some(
            (0..t_max)
                .map(|_| {
                    (0..self.d_beta)
                        .map(|_| dist::sample_normal(0.0, 1.0, rng))
                        .collect()
                })
                .collect(),
        )
    }

    fn grad_constrained_target(
        &self,
        theta: &ParamVector,
        path: &[f64],
        data: &TimeSeries,
        temper: f64,
    ) -> Option<Vec<f64>> {
        let (phi, sigma, mu) = (theta[PHI], theta[SIGMA], theta[MU]);
        let s2 = sigma * sigma;
        let mut g = vec![0.0, -sigma / 100.0, -mu / 25.0];
        for k in 0..self.d_beta {
            g.push(-theta[BETA0 + k]);
        }
        if let Some(&x1) = path.first() {
            let e1 = x1 - mu;
            let omp2 = 1.0 - phi * phi;
            g[PHI] += -phi / omp2 + e1 * e1 * phi / s2;
            g[SIGMA] += -1.0 / sigma + e1 * e1 * omp2 / (s2 * sigma);
            g[MU] += e1 * omp2 / s2;
        }
        for t in 2..=path.len() {
            let prev = path[t - 2];
            let r = path[t - 1] - mu - phi * (prev - mu);
            g[PHI] += r * (prev - mu) / s2;
            g[SIGMA] += -1.0 / sigma + r * r / (s2 * sigma);
            g[MU] += r * (1.0 - phi) / s2;
        }
        if temper != 0.0 {
            for t in 1..=path.len() {
                let v = path[t - 1].exp();
                let e = data.y[t - 1] - self.linear_predictor(theta, data, t);
                let z = data.covariate(t).expect("covariates required");
                for k in 0..self.d_beta {
                    g[BETA0 + k] += temper * e * z[k] / v;
                }
            }
        }
        Some(g)
    }

    fn reference_params(&self) -> ParamVector {
        let mut values = vec![0.5, 1.0, 0.38];
        values.extend(std::iter::repeat_n(0.1, self.d_beta));
        ParamVector::new(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn prior_rejects_phi_outside_unit_interval() {
        let model = Ar1Model::new(2);
        let theta = ParamVector::new(vec![1.5, 1.0, 0.0, 0.1, 0.1]);
        assert_eq!(model.log_prior(&theta), f64::NEG_INFINITY);
    }

    #[test]
    fn prior_samples_satisfy_supports() {
        let model = Ar1Model::new(2);
        let mut rng = substream(17, &[5]);
        for _ in 0..1000 {
            let th = model.sample_prior(&mut rng);
            assert!(th[PHI] > 0.0 && th[PHI] < 1.0);
            assert!(th[SIGMA] >= 0.0);
        }
    }

    #[test]
    fn init_collapses_to_marginal_at_phi_zero() {
        let model = Ar1Model::new(1);
        let theta = ParamVector::new(vec![1e-300, 0.8, 0.4, 0.1]);
        let v = model.log_init(&theta, 1.0);
        assert!((v - dist::ln_normal(1.0, 0.4, 0.8)).abs() < 1e-10);
    }

    #[test]
    fn observation_fixture() {
        // z = (1,1), beta = (0.1, 0.1), x = 0, y = 0.2 -> log N(0.2 | 0.2, 1)
        let model = Ar1Model::new(2);
        let theta = ParamVector::new(vec![0.5, 1.0, 0.0, 0.1, 0.1]);
        let data = TimeSeries {
            y: vec![0.2],
            covariates: Some(vec![vec![1.0, 1.0]]),
        };
        let v = model.log_observation(&theta, 0.0, &data, 1);
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn simulated_covariates_have_unit_scale() {
        let model = Ar1Model::new(3);
        let mut rng = substream(2, &[8]);
        let z = model.simulate_covariates(500, &mut rng).unwrap();
        assert_eq!(z.len(), 500);
        assert_eq!(z[0].len(), 3);
        let flat: Vec<f64> = z.iter().flatten().copied().collect();
        let mean = flat.iter().sum::<f64>() / flat.len() as f64;
        let var = flat.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / flat.len() as f64;
        assert!(mean.abs() < 0.1 && (var - 1.0).abs() < 0.15);
    }
}
