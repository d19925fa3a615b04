//! Particle MCMC mutation kernels: a joint random-walk PMMH update and a
//! particle Gibbs update with two-block MALA, plus stepsize adaptation.
//!
//! All proposals operate in the unconstrained parameter space with the
//! transform Jacobian folded into the target.

use crate::error::{Error, Result};
use crate::filter::{backward_sample, conditional_pf, InvariantPath, StateCloud};
use crate::model::{log_path_target_unconstrained, Model, ModelSpec, ParamVector, TimeSeries};
use crate::transform;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const PMMH_TARGET_AR: f64 = 0.07;
pub const PG_TARGET_AR: f64 = 0.574;
pub const INIT_PMMH_STEPSIZE_SQ: f64 = 1.0;
pub const INIT_MALA_STEPSIZE_SQ: f64 = 0.1;
pub const DEFAULT_K_MALA: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Pmmh,
    Pg,
}

impl KernelKind {
    pub fn other(self) -> KernelKind {
        match self {
            KernelKind::Pmmh => KernelKind::Pg,
            KernelKind::Pg => KernelKind::Pmmh,
        }
    }
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KernelKind::Pmmh => "PMMH",
            KernelKind::Pg => "PG",
        })
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pmmh" => Ok(KernelKind::Pmmh),
            "pg" => Ok(KernelKind::Pg),
            other => Err(Error::invalid(format!(
                "unknown kernel `{other}` (expected pmmh|pg)"
            ))),
        }
    }
}

/// Stepsizes for one kernel.
#[derive(Debug, Clone, Copy)]
pub enum StepSizes {
    Pmmh(f64),
    Pg { eps1_sq: f64, eps2_sq: f64 },
}

/// Configuration of one mutation kernel.
#[derive(Debug, Clone)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub nx: usize,
    pub stepsizes: StepSizes,
    pub target_acceptance: f64,
    pub k_mala: usize,
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 {
            return Err(Error::invalid("kernel N_x must be at least 2"));
        }
        if self.k_mala < 1 && matches!(self.kind, KernelKind::Pg) {
            return Err(Error::invalid("K_MALA must be at least 1"));
        }
        match self.stepsizes {
            StepSizes::Pmmh(e) => {
                if !(e > 0.0 && e <= 1.0) {
                    return Err(Error::invalid("PMMH stepsize^2 must lie in (0, 1]"));
                }
            }
            StepSizes::Pg { eps1_sq, eps2_sq } => {
                if !(eps1_sq > 0.0 && eps2_sq > 0.0) {
                    return Err(Error::invalid("MALA stepsizes must be positive"));
                }
            }
        }
        if !(self.target_acceptance > 0.0) {
            return Err(Error::invalid("target acceptance rate must be positive"));
        }
        Ok(())
    }
}

/// Proposal/acceptance counters, merged associatively across particles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MutationStats {
    pub proposals: u64,
    pub accepts: u64,
}

impl MutationStats {
    pub fn record(&mut self, accepted: bool) {
        self.proposals += 1;
        self.accepts += u64::from(accepted);
    }

    pub fn merge(&mut self, other: MutationStats) {
        self.proposals += other.proposals;
        self.accepts += other.accepts;
    }

    pub fn rate(&self) -> Option<f64> {
        (self.proposals > 0).then(|| self.accepts as f64 / self.proposals as f64)
    }
}

/// Multiplicative stepsize update eps^2 <- eps^2 exp(2 (ar/ar_target - 1)).
pub fn adapt_stepsize(eps_sq: f64, ar: f64, ar_target: f64) -> f64 {
    eps_sq * (2.0 * (ar / ar_target - 1.0)).exp()
}

/// PMMH variant of the update: same rule with target 0.07, capped at 1.
pub fn adapt_stepsize_pmmh(eps_sq: f64, ar: f64) -> f64 {
    adapt_stepsize(eps_sq, ar, PMMH_TARGET_AR).min(1.0)
}

/// Cholesky factor, inverse and log-determinant of one block of the
/// (regularized) proposal covariance.
#[derive(Debug, Clone)]
pub struct BlockProposal {
    pub idx: Vec<usize>,
    pub sigma: DMatrix<f64>,
    pub chol_l: DMatrix<f64>,
    pub inv: DMatrix<f64>,
}

/// Per-iteration proposal matrices derived from the weighted covariance of
/// the particle population in unconstrained coordinates.
#[derive(Debug, Clone)]
pub struct ProposalPrecomp {
    pub full_chol_l: DMatrix<f64>,
    pub block1: Option<BlockProposal>,
    pub block2: Option<BlockProposal>,
}

fn regularize(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = cov.nrows();
    let jitter = 1e-8 * cov.trace() / dim as f64 + 1e-300;
    let mut reg = cov.clone();
    for j in 0..dim {
        reg[(j, j)] += jitter;
    }
    reg
}

fn block_proposal(cov: &DMatrix<f64>, idx: &[usize]) -> Result<Option<BlockProposal>> {
    if idx.is_empty() {
        return Ok(None);
    }
    let k = idx.len();
    let sub = DMatrix::from_fn(k, k, |r, c| cov[(idx[r], idx[c])]);
    let chol = nalgebra::Cholesky::new(sub.clone())
        .ok_or_else(|| Error::degenerate("block covariance is not positive definite"))?;
    Ok(Some(BlockProposal {
        idx: idx.to_vec(),
        sigma: sub,
        chol_l: chol.l(),
        inv: chol.inverse(),
    }))
}

/// Build proposal factors from the population covariance. A ridge of
/// 1e-8 tr(Sigma)/dim is added before factorization.
pub fn precompute_proposals(cov: &DMatrix<f64>, spec: &ModelSpec) -> Result<ProposalPrecomp> {
    let reg = regularize(cov);
    let full = nalgebra::Cholesky::new(reg.clone())
        .ok_or_else(|| Error::degenerate("proposal covariance is not positive definite"))?;
    Ok(ProposalPrecomp {
        full_chol_l: full.l(),
        block1: block_proposal(&reg, &spec.block1)?,
        block2: block_proposal(&reg, &spec.block2)?,
    })
}

/// PMMH auxiliary state: the stored likelihood estimate and, for data
/// annealing, the live state cloud used by the reweighting step.
#[derive(Debug, Clone)]
pub struct PmmhState {
    pub loglik: f64,
    pub cloud: Option<StateCloud>,
}

/// What the PMMH kernel targets at the current SMC iteration.
#[derive(Debug, Clone, Copy)]
pub struct PmmhCtx {
    /// Observations processed (d for data annealing, T for tempering).
    pub n_obs: usize,
    pub nx: usize,
    /// Exponent applied inside the filter (g_d for the tempered-filter
    /// targets; 1 for data annealing).
    pub filter_temper: f64,
    /// Exponent applied to the stored estimate in the acceptance ratio
    /// (g_d for the annealed-estimate baseline target; 1 otherwise).
    pub estimate_exponent: f64,
    /// Whether accepted moves must carry the final cloud forward.
    pub keep_cloud: bool,
}

/// One joint random-walk PMMH update. Returns whether the proposal was
/// accepted and the particle-filter cost incurred.
#[allow(clippy::too_many_arguments)]
pub fn pmmh_step(
    model: &dyn Model,
    data: &TimeSeries,
    ctx: &PmmhCtx,
    theta: &mut ParamVector,
    state: &mut PmmhState,
    proposal: &ProposalPrecomp,
    stepsize_sq: f64,
    rng: &mut dyn RngCore,
) -> Result<(bool, u64)> {
    let spec = model.spec();
    let dim = spec.dim();
    let u = transform::to_unconstrained(&theta.values, &spec.transforms)?;
    let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let step = &proposal.full_chol_l * z * stepsize_sq.sqrt();
    let u_star: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
    let theta_star = ParamVector::new(transform::from_unconstrained(&u_star, &spec.transforms));

    let prior_star = model.log_prior(&theta_star);
    if !prior_star.is_finite() {
        return Ok((false, 0)); // auto-reject without running a filter
    }
    let out = crate::filter::bootstrap_pf(
        model,
        &theta_star,
        data,
        ctx.n_obs,
        ctx.nx,
        ctx.filter_temper,
        rng,
    )?;
    let cost = out.cost;
    let accept_draw: f64 = rng.random();
    if out.failed() {
        return Ok((false, cost));
    }
    let jac = transform::log_jacobian_sum(&theta_star.values, &spec.transforms);
    let prior_cur = model.log_prior(theta);
    let jac_cur = transform::log_jacobian_sum(&theta.values, &spec.transforms);
    let log_ratio = prior_star + ctx.estimate_exponent * out.log_likelihood + jac
        - (prior_cur + ctx.estimate_exponent * state.loglik + jac_cur);
    let accepted = accept_draw.ln() < log_ratio;
    if accepted {
        *theta = theta_star;
        state.loglik = out.log_likelihood;
        state.cloud = ctx.keep_cloud.then(|| out.into_cloud());
    }
    Ok((accepted, cost))
}

/// What the PG kernel targets at the current SMC iteration.
#[derive(Debug, Clone, Copy)]
pub struct PgCtx {
    pub n_obs: usize,
    pub nx: usize,
    /// Likelihood exponent of the target (1 for data annealing).
    pub temper: f64,
    pub k_mala: usize,
}

/// Log of the MALA acceptance ratio for one block move, given target values
/// and forward/reverse proposal means. The stepsize-dependent normalizing
/// constants cancel.
#[allow(clippy::too_many_arguments)]
fn mala_accept_log_ratio(
    target_cur: f64,
    target_star: f64,
    u_cur: &DVector<f64>,
    u_star: &DVector<f64>,
    mean_fwd: &DVector<f64>,
    mean_rev: &DVector<f64>,
    block: &BlockProposal,
    eps_sq: f64,
) -> f64 {
    let q = |x: &DVector<f64>, mean: &DVector<f64>| {
        let d = x - mean;
        -0.5 * (d.transpose() * &block.inv * d)[(0, 0)] / eps_sq
    };
    target_star - target_cur + q(u_cur, mean_rev) - q(u_star, mean_fwd)
}

#[allow(clippy::too_many_arguments)]
fn mala_block_update(
    model: &dyn Model,
    data: &TimeSeries,
    ctx: &PgCtx,
    theta: &mut ParamVector,
    path: &InvariantPath,
    block_no: usize,
    block: &BlockProposal,
    eps_sq: f64,
    rng: &mut dyn RngCore,
) -> Result<bool> {
    let spec = model.spec();
    let k = block.idx.len();
    if eps_sq == 0.0 {
        return Ok(true); // proposal collapses to the current point
    }
    let u_full = transform::to_unconstrained(&theta.values, &spec.transforms)?;
    let grad = match crate::model::grad_block_log_target(
        model,
        theta,
        &path.states,
        data,
        ctx.temper,
        block_no,
    ) {
        Ok(g) if g.iter().all(|v| v.is_finite()) => DVector::from_vec(g),
        _ => return Ok(false), // non-finite gradient: auto-reject this sweep
    };
    let u_b = DVector::from_fn(k, |r, _| u_full[block.idx[r]]);
    let drift = 0.5 * eps_sq * &block.sigma * &grad;
    let mean_fwd = &u_b + drift;
    let z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let u_b_star = &mean_fwd + (&block.chol_l * z) * eps_sq.sqrt();

    let mut u_star_full = u_full.clone();
    for (r, &j) in block.idx.iter().enumerate() {
        u_star_full[j] = u_b_star[r];
    }
    let theta_star =
        ParamVector::new(transform::from_unconstrained(&u_star_full, &spec.transforms));
    let target_cur =
        log_path_target_unconstrained(model, &u_full, &path.states, data, ctx.temper);
    let target_star =
        log_path_target_unconstrained(model, &u_star_full, &path.states, data, ctx.temper);
    let accept_draw: f64 = rng.random();
    if !target_star.is_finite() {
        return Ok(false);
    }
    let grad_star = match crate::model::grad_block_log_target(
        model,
        &theta_star,
        &path.states,
        data,
        ctx.temper,
        block_no,
    ) {
        Ok(g) if g.iter().all(|v| v.is_finite()) => DVector::from_vec(g),
        _ => return Ok(false),
    };
    let drift_star = 0.5 * eps_sq * &block.sigma * &grad_star;
    let mean_rev = &u_b_star + drift_star;
    let log_alpha = mala_accept_log_ratio(
        target_cur,
        target_star,
        &u_b,
        &u_b_star,
        &mean_fwd,
        &mean_rev,
        block,
        eps_sq,
    );
    let accepted = accept_draw.ln() < log_alpha;
    if accepted {
        *theta = theta_star;
    }
    Ok(accepted)
}

/// One particle Gibbs mutation: refresh the invariant path via a conditional
/// particle filter with backward sampling, then run `k_mala` sweeps of
/// block-1 / block-2 MALA conditional on that path. Returns per-block
/// statistics and the filter cost.
#[allow(clippy::too_many_arguments)]
pub fn pg_step(
    model: &dyn Model,
    data: &TimeSeries,
    ctx: &PgCtx,
    theta: &mut ParamVector,
    path: &mut InvariantPath,
    block1: Option<&BlockProposal>,
    block2: Option<&BlockProposal>,
    eps_sq: (f64, f64),
    rng: &mut dyn RngCore,
) -> Result<([MutationStats; 2], u64)> {
    let mut cost = 0;
    if ctx.n_obs > 0 {
        let out = conditional_pf(model, theta, data, ctx.n_obs, ctx.nx, path, ctx.temper, rng)?;
        cost += out.cost;
        if out.failed() {
            return Err(Error::abort(
                "conditional particle filter failed at a retained particle",
            ));
        }
        *path = backward_sample(&out, model, theta, data, rng)?;
    }
    let mut stats = [MutationStats::default(), MutationStats::default()];
    for _ in 0..ctx.k_mala {
        if let Some(b1) = block1 {
            let acc = mala_block_update(model, data, ctx, theta, path, 1, b1, eps_sq.0, rng)?;
            stats[0].record(acc);
        }
        if let Some(b2) = block2 {
            let acc = mala_block_update(model, data, ctx, theta, path, 2, b2, eps_sq.1, rng)?;
            stats[1].record(acc);
        }
    }
    if ctx.k_mala > 0 {
        path.refresh_caches(model, theta, data);
    }
    Ok((stats, cost))
}
