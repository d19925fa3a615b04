//! Bootstrap and conditional particle filters with adaptive multinomial
//! resampling, backward sampling, incremental cloud extension and N_x tuning.
//!
//! Likelihood bookkeeping: unnormalized weights accumulate multiplicatively
//! between resamples; the log-likelihood estimate is the sum of per-step
//! increments log(sum u_t / sum u_{t-1}), which telescopes to the banked
//! log-mean weight at every resample time plus the final partial sum. This
//! keeps the estimator unbiased under adaptive resampling.

use crate::error::{Error, Result};
use crate::model::{Model, ParamVector, TimeSeries};
use crate::stats::{log_sum_exp, normalize_log_weights};
use rand::{Rng, RngCore};

/// Effective sample size 1/sum(W^2) of normalized weights.
pub fn ess(weights: &[f64]) -> Result<f64> {
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    if sq == 0.0 {
        return Err(Error::degenerate("total particle collapse: all weights zero"));
    }
    Ok(1.0 / sq)
}

/// Draw `count` i.i.d. categorical indices from normalized weights.
pub fn multinomial_resample(weights: &[f64], count: usize, rng: &mut dyn RngCore) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cdf.push(acc);
    }
    let total = acc;
    (0..count)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * total;
            match cdf.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
                Ok(i) | Err(i) => i.min(weights.len() - 1),
            }
        })
        .collect()
}

/// Full history of one particle filter run.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// Particle states per step, `states[t][n]`.
    pub states: Vec<Vec<f64>>,
    /// Normalized weights per step.
    pub weights: Vec<Vec<f64>>,
    /// Ancestor indices chosen at each step (identity when no resampling).
    pub ancestors: Vec<Vec<usize>>,
    /// Per-step log-likelihood increments; they sum to `log_likelihood`.
    pub step_log_increments: Vec<f64>,
    /// Estimate of the (tempered) log-likelihood.
    pub log_likelihood: f64,
    /// Epoch-relative unnormalized log-weights after the final step.
    pub final_log_u: Vec<f64>,
    /// N_x times the number of time steps processed.
    pub cost: u64,
    nx: usize,
}

impl FilterOutput {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// True when an all-zero weight step forced an early stop.
    pub fn failed(&self) -> bool {
        !self.log_likelihood.is_finite()
    }

    /// The live front of the filter, for step-by-step continuation.
    pub fn into_cloud(self) -> StateCloud {
        StateCloud {
            nx: self.nx,
            states: self.states.last().cloned().unwrap_or_default(),
            log_u: self.final_log_u,
        }
    }
}

/// A latent trajectory carried by a PG-typed particle, with cached densities.
#[derive(Debug, Clone)]
pub struct InvariantPath {
    pub states: Vec<f64>,
    pub indices: Vec<usize>,
    /// log mu(x_1) + sum log f(x_t | x_{t-1})
    pub log_path_density: f64,
    /// sum log g(y_t | x_t), untempered
    pub log_obs_density: f64,
}

impl InvariantPath {
    pub fn empty() -> Self {
        Self {
            states: Vec::new(),
            indices: Vec::new(),
            log_path_density: 0.0,
            log_obs_density: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Recompute both caches from scratch (used after theta changes).
    pub fn refresh_caches(&mut self, model: &dyn Model, theta: &ParamVector, data: &TimeSeries) {
        let mut lp = 0.0;
        let mut lo = 0.0;
        for t in 1..=self.states.len() {
            let x = self.states[t - 1];
            lp += if t == 1 {
                model.log_init(theta, x)
            } else {
                model.log_transition(theta, self.states[t - 2], x, t)
            };
            lo += model.log_observation(theta, x, data, t);
        }
        self.log_path_density = lp;
        self.log_obs_density = lo;
    }

    /// Extend the trajectory by one prior-dynamics draw and return the
    /// log observation density of the new point (the DA-PG incremental
    /// weight). Caches are updated.
    pub fn extend_one(
        &mut self,
        model: &dyn Model,
        theta: &ParamVector,
        data: &TimeSeries,
        rng: &mut dyn RngCore,
    ) -> f64 {
        let t_next = self.states.len() + 1;
        let x = if t_next == 1 {
            model.sample_init(theta, rng)
        } else {
            model.sample_transition(theta, self.states[t_next - 2], t_next, rng)
        };
        self.log_path_density += if t_next == 1 {
            model.log_init(theta, x)
        } else {
            model.log_transition(theta, self.states[t_next - 2], x, t_next)
        };
        let incr = model.log_observation(theta, x, data, t_next);
        self.log_obs_density += incr;
        self.states.push(x);
        self.indices.push(0);
        incr
    }
}

/// The live front of a particle filter: states and epoch-relative
/// unnormalized log-weights, advanced one observation at a time.
#[derive(Debug, Clone)]
pub struct StateCloud {
    pub nx: usize,
    pub states: Vec<f64>,
    pub log_u: Vec<f64>,
}

impl StateCloud {
    pub fn empty(nx: usize) -> Self {
        Self {
            nx,
            states: Vec::new(),
            log_u: vec![0.0; nx],
        }
    }
}

fn check_filter_args(nx: usize, temper: f64, n_obs: usize, data: &TimeSeries) -> Result<()> {
    if nx < 2 {
        return Err(Error::invalid(format!("N_x must be at least 2, got {nx}")));
    }
    if !(0.0..=1.0).contains(&temper) {
        return Err(Error::invalid(format!("temper must lie in [0, 1], got {temper}")));
    }
    if n_obs > data.len() {
        return Err(Error::invalid("n_obs exceeds series length"));
    }
    Ok(())
}

/// Bootstrap particle filter over y_{1:n_obs} targeting
/// p(x | theta) p(y | x, theta)^temper, with resampling when ESS < N_x/2.
pub fn bootstrap_pf(
    model: &dyn Model,
    theta: &ParamVector,
    data: &TimeSeries,
    n_obs: usize,
    nx: usize,
    temper: f64,
    rng: &mut dyn RngCore,
) -> Result<FilterOutput> {
    run_filter(model, theta, data, n_obs, nx, temper, None, rng)
}

/// Conditional particle filter: the reference trajectory is pinned at slot 0
/// and never removed by resampling. Weighting is identical to
/// [`bootstrap_pf`].
#[allow(clippy::too_many_arguments)]
pub fn conditional_pf(
    model: &dyn Model,
    theta: &ParamVector,
    data: &TimeSeries,
    n_obs: usize,
    nx: usize,
    reference: &InvariantPath,
    temper: f64,
    rng: &mut dyn RngCore,
) -> Result<FilterOutput> {
    if reference.len() != n_obs {
        return Err(Error::invalid(format!(
            "reference length {} does not match n_obs {n_obs}",
            reference.len()
        )));
    }
    run_filter(model, theta, data, n_obs, nx, temper, Some(&reference.states), rng)
}

#[allow(clippy::too_many_arguments)]
fn run_filter(
    model: &dyn Model,
    theta: &ParamVector,
    data: &TimeSeries,
    n_obs: usize,
    nx: usize,
    temper: f64,
    reference: Option<&[f64]>,
    rng: &mut dyn RngCore,
) -> Result<FilterOutput> {
    check_filter_args(nx, temper, n_obs, data)?;
    let mut out = FilterOutput {
        states: Vec::with_capacity(n_obs),
        weights: Vec::with_capacity(n_obs),
        ancestors: Vec::with_capacity(n_obs),
        step_log_increments: Vec::with_capacity(n_obs),
        log_likelihood: 0.0,
        final_log_u: vec![0.0; nx],
        cost: 0,
        nx,
    };
    let mut log_u = vec![0.0; nx];
    let mut states: Vec<f64> = Vec::new();

    for t in 1..=n_obs {
        let ancestors: Vec<usize>;
        if t == 1 {
            states = (0..nx).map(|_| model.sample_init(theta, rng)).collect();
            if let Some(r) = reference {
                states[0] = r[0];
            }
            ancestors = (0..nx).collect();
        } else {
            let w = normalize_log_weights(&log_u)?;
            if ess(&w)? < nx as f64 / 2.0 {
                let anc = if reference.is_some() {
                    let mut a = multinomial_resample(&w, nx - 1, rng);
                    a.insert(0, 0);
                    a
                } else {
                    multinomial_resample(&w, nx, rng)
                };
                states = anc.iter().map(|&a| states[a]).collect();
                log_u = vec![0.0; nx];
                ancestors = anc;
            } else {
                ancestors = (0..nx).collect();
            }
            let prev = states.clone();
            for (n, s) in states.iter_mut().enumerate() {
                match reference {
                    Some(r) if n == 0 => *s = r[t - 1],
                    _ => *s = model.sample_transition(theta, prev[n], t, rng),
                }
            }
        }
        out.cost += nx as u64;

        let old_lse = log_sum_exp(&log_u);
        if temper != 0.0 {
            for (n, lu) in log_u.iter_mut().enumerate() {
                *lu += temper * model.log_observation(theta, states[n], data, t);
            }
        }
        let new_lse = log_sum_exp(&log_u);
        if !new_lse.is_finite() {
            // impossible theta: every particle has zero incremental weight
            out.log_likelihood = f64::NEG_INFINITY;
            out.final_log_u = log_u;
            return Ok(out);
        }
        let incr = new_lse - old_lse;
        out.log_likelihood += incr;
        out.step_log_increments.push(incr);
        out.states.push(states.clone());
        out.weights.push(normalize_log_weights(&log_u)?);
        out.ancestors.push(ancestors);
    }
    out.final_log_u = log_u;
    Ok(out)
}

/// Advance a live cloud by one observation and return the incremental
/// log-likelihood log( sum_n W_{d}^n g(y_{d+1} | x_{d+1}^n)^temper ).
#[allow(clippy::too_many_arguments)]
pub fn extend_cloud_one_step(
    model: &dyn Model,
    theta: &ParamVector,
    cloud: &mut StateCloud,
    data: &TimeSeries,
    t_next: usize,
    temper: f64,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let nx = cloud.nx;
    check_filter_args(nx, temper, t_next, data)?;
    if cloud.log_u.iter().all(|lu| !lu.is_finite()) {
        return Ok(f64::NEG_INFINITY); // a previous step already failed
    }
    if t_next == 1 {
        cloud.states = (0..nx).map(|_| model.sample_init(theta, rng)).collect();
        cloud.log_u = vec![0.0; nx];
    } else {
        debug_assert_eq!(cloud.states.len(), nx, "cloud not initialized");
        let w = normalize_log_weights(&cloud.log_u)?;
        if ess(&w)? < nx as f64 / 2.0 {
            let anc = multinomial_resample(&w, nx, rng);
            cloud.states = anc.iter().map(|&a| cloud.states[a]).collect();
            cloud.log_u = vec![0.0; nx];
        }
        let prev = cloud.states.clone();
        for (n, s) in cloud.states.iter_mut().enumerate() {
            *s = model.sample_transition(theta, prev[n], t_next, rng);
        }
    }
    let old_lse = log_sum_exp(&cloud.log_u);
    if temper != 0.0 {
        for (n, lu) in cloud.log_u.iter_mut().enumerate() {
            *lu += temper * model.log_observation(theta, cloud.states[n], data, t_next);
        }
    }
    let new_lse = log_sum_exp(&cloud.log_u);
    if !new_lse.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(new_lse - old_lse)
}

/// Draw a single trajectory from a completed filter run by backward
/// simulation. Forward weights may be tempered; the backward weights use the
/// untempered transition density only.
pub fn backward_sample(
    output: &FilterOutput,
    model: &dyn Model,
    theta: &ParamVector,
    data: &TimeSeries,
    rng: &mut dyn RngCore,
) -> Result<InvariantPath> {
    let n = output.len();
    let mut path = InvariantPath::empty();
    if n == 0 {
        return Ok(path);
    }
    if output.failed() {
        return Err(Error::degenerate("cannot backward-sample a failed filter run"));
    }
    let mut indices = vec![0usize; n];
    let final_w = &output.weights[n - 1];
    indices[n - 1] = sample_categorical(final_w, rng)?;
    for d in (1..n).rev() {
        // 1-based time d, choosing k_d given k_{d+1}
        let x_next = output.states[d][indices[d]];
        let w_d = &output.weights[d - 1];
        let log_bw: Vec<f64> = (0..output.nx)
            .map(|i| {
                let lw = w_d[i].ln();
                lw + model.log_transition(theta, output.states[d - 1][i], x_next, d + 1)
            })
            .collect();
        let bw = normalize_log_weights(&log_bw).map_err(|_| {
            Error::degenerate("all backward weights zero: transition density incompatible")
        })?;
        indices[d - 1] = sample_categorical(&bw, rng)?;
    }
    path.states = (0..n).map(|d| output.states[d][indices[d]]).collect();
    path.indices = indices;
    path.refresh_caches(model, theta, data);
    Ok(path)
}

fn sample_categorical(weights: &[f64], rng: &mut dyn RngCore) -> Result<usize> {
    let idx = multinomial_resample(weights, 1, rng);
    Ok(idx[0])
}

/// Options for the state-particle tuning search.
#[derive(Debug, Clone)]
pub struct TuneOptions {
    pub min_nx: usize,
    pub max_nx: usize,
    pub replicates: usize,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            min_nx: 10,
            max_nx: 5120,
            replicates: 50,
        }
    }
}

/// Doubling search for the smallest N_x whose log-likelihood estimator
/// variance at `theta` is at most `target_var`. Returns the chosen N_x and
/// the (candidate, variance) trace.
pub fn tune_state_particles(
    model: &dyn Model,
    theta: &ParamVector,
    data: &TimeSeries,
    target_var: f64,
    opts: &TuneOptions,
    seed: u64,
) -> Result<(usize, Vec<(usize, f64)>)> {
    let mut trace = Vec::new();
    let mut any_finite = false;
    let mut nx = opts.min_nx.max(2);
    while nx <= opts.max_nx {
        let mut lls = Vec::with_capacity(opts.replicates);
        let mut finite = true;
        for rep in 0..opts.replicates {
            let mut rng =
                crate::rng::substream(seed, &[crate::rng::PHASE_TUNE, nx as u64, rep as u64]);
            let out = bootstrap_pf(model, theta, data, data.len(), nx, 1.0, &mut rng)?;
            if out.failed() {
                finite = false;
                break;
            }
            lls.push(out.log_likelihood);
        }
        let var = if finite {
            any_finite = true;
            let mean = lls.iter().sum::<f64>() / lls.len() as f64;
            lls.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (lls.len() - 1) as f64
        } else {
            f64::INFINITY
        };
        trace.push((nx, var));
        if var <= target_var {
            return Ok((nx, trace));
        }
        nx *= 2;
    }
    if !any_finite {
        Err(Error::degenerate(
            "likelihood estimates were non-finite at every candidate N_x",
        ))
    } else {
        Err(Error::degenerate(format!(
            "variance target {target_var} not reached by N_x = {}",
            opts.max_nx
        )))
    }
}
