//! Weight-preserving switches between kernel representations.
//!
//! Switching kernels replaces the auxiliary variables a particle carries
//! (likelihood estimate and state cloud for PMMH, invariant path for PG)
//! without touching its weight: with the backward kernel chosen as the
//! normalized current-target/forward-kernel product, every kernel ratio
//! reduces to a target ratio and the incremental weights are exactly 1.
//! These functions therefore never see the particle weight at all.

use crate::error::Result;
use crate::filter::{backward_sample, bootstrap_pf, conditional_pf, InvariantPath};
use crate::kernel::{KernelKind, PmmhState};
use crate::model::{Model, ParamVector, TimeSeries};
use rand::RngCore;

/// Kernel-specific auxiliary state of one parameter particle.
#[derive(Debug, Clone)]
pub enum Aux {
    Pmmh(PmmhState),
    Pg(InvariantPath),
}

impl Aux {
    pub fn kind(&self) -> KernelKind {
        match self {
            Aux::Pmmh(_) => KernelKind::Pmmh,
            Aux::Pg(_) => KernelKind::Pg,
        }
    }

    pub fn as_pg(&self) -> Option<&InvariantPath> {
        match self {
            Aux::Pg(p) => Some(p),
            Aux::Pmmh(_) => None,
        }
    }

    pub fn as_pmmh(&self) -> Option<&PmmhState> {
        match self {
            Aux::Pmmh(s) => Some(s),
            Aux::Pg(_) => None,
        }
    }
}

/// Result of one switch move.
#[derive(Debug, Clone, Copy, Default)]
pub struct SwitchOutcome {
    pub cost: u64,
    /// Set when the refresh filter failed; the particle is left unchanged.
    pub aborted: bool,
}

#[derive(Debug, Clone, Copy)]
struct SwitchCtx {
    n_obs: usize,
    temper: f64,
    keep_cloud: bool,
}

/// Switch a particle's representation under the data annealing targets over
/// y_{1:d}. The particle weight is not an input: the move cannot change it.
#[allow(clippy::too_many_arguments)]
pub fn switch_da(
    model: &dyn Model,
    data: &TimeSeries,
    d: usize,
    theta: &ParamVector,
    aux: &mut Aux,
    to_kind: KernelKind,
    to_nx: usize,
    rng: &mut dyn RngCore,
) -> Result<SwitchOutcome> {
    switch_impl(
        model,
        data,
        SwitchCtx {
            n_obs: d,
            temper: 1.0,
            keep_cloud: true,
        },
        theta,
        aux,
        to_kind,
        to_nx,
        rng,
    )
}

/// Switch a particle's representation under the density tempering targets at
/// exponent g over the full series.
#[allow(clippy::too_many_arguments)]
pub fn switch_dt(
    model: &dyn Model,
    data: &TimeSeries,
    g: f64,
    theta: &ParamVector,
    aux: &mut Aux,
    to_kind: KernelKind,
    to_nx: usize,
    rng: &mut dyn RngCore,
) -> Result<SwitchOutcome> {
    switch_impl(
        model,
        data,
        SwitchCtx {
            n_obs: data.len(),
            temper: g,
            keep_cloud: false,
        },
        theta,
        aux,
        to_kind,
        to_nx,
        rng,
    )
}

#[allow(clippy::too_many_arguments)]
fn switch_impl(
    model: &dyn Model,
    data: &TimeSeries,
    ctx: SwitchCtx,
    theta: &ParamVector,
    aux: &mut Aux,
    to_kind: KernelKind,
    to_nx: usize,
    rng: &mut dyn RngCore,
) -> Result<SwitchOutcome> {
    match (&*aux, to_kind) {
        // PG -> PG runs a conditional filter on the current path; everything
        // else runs a fresh bootstrap filter.
        (Aux::Pg(path), KernelKind::Pg) if ctx.n_obs > 0 => {
            let out = conditional_pf(model, theta, data, ctx.n_obs, to_nx, path, ctx.temper, rng)?;
            let cost = out.cost;
            if out.failed() {
                return Ok(SwitchOutcome { cost, aborted: true });
            }
            let new_path = backward_sample(&out, model, theta, data, rng)?;
            *aux = Aux::Pg(new_path);
            Ok(SwitchOutcome { cost, aborted: false })
        }
        _ => {
            let out = bootstrap_pf(model, theta, data, ctx.n_obs, to_nx, ctx.temper, rng)?;
            let cost = out.cost;
            if out.failed() {
                return Ok(SwitchOutcome { cost, aborted: true });
            }
            match to_kind {
                KernelKind::Pg => {
                    let path = backward_sample(&out, model, theta, data, rng)?;
                    *aux = Aux::Pg(path);
                }
                KernelKind::Pmmh => {
                    let loglik = out.log_likelihood;
                    let cloud = ctx.keep_cloud.then(|| out.into_cloud());
                    *aux = Aux::Pmmh(PmmhState { loglik, cloud });
                }
            }
            Ok(SwitchOutcome { cost, aborted: false })
        }
    }
}

/// Two-stage PMMH -> PG switch used when N_x^PG < N_x^PMMH: first draw the
/// invariant path from a filter with the larger particle count, then refresh
/// it down to N_x^PG with a PG -> PG move. This keeps path diversity when the
/// destination particle count is small.
#[allow(clippy::too_many_arguments)]
pub fn two_stage_pmmh_to_pg(
    model: &dyn Model,
    data: &TimeSeries,
    da_position: Option<usize>,
    g: f64,
    theta: &ParamVector,
    aux: &mut Aux,
    nx_pmmh: usize,
    nx_pg: usize,
    rng: &mut dyn RngCore,
) -> Result<SwitchOutcome> {
    assert!(nx_pg <= nx_pmmh, "two-stage switch requires N_x^PG <= N_x^PMMH");
    let do_switch = |aux: &mut Aux, to_nx: usize, rng: &mut dyn RngCore| match da_position {
        Some(d) => switch_da(model, data, d, theta, aux, KernelKind::Pg, to_nx, rng),
        None => switch_dt(model, data, g, theta, aux, KernelKind::Pg, to_nx, rng),
    };
    let first = do_switch(aux, nx_pmmh, rng)?;
    if first.aborted {
        return Ok(first);
    }
    let second = do_switch(aux, nx_pg, rng)?;
    Ok(SwitchOutcome {
        cost: first.cost + second.cost,
        aborted: second.aborted,
    })
}
