//! The SMC² orchestrator: target sequences (data annealing and density
//! tempering), reweighting, ESS-triggered resampling, tempering-schedule
//! adaptation, evidence accumulation, and the adaptive mutation step that
//! tests and switches between the PMMH and PG kernels.
//!
//! Reproducibility contract: every stochastic phase draws from a stream
//! keyed by (seed, phase, iteration, particle index), so results do not
//! depend on worker scheduling.

use crate::adapt::{
    self, kernel_score, psjd, remaining_repeats, sjd_target, LagState, SwitchPolicy,
};
use crate::config::{Mode, RunConfig};
use crate::error::{Error, Result};
use crate::filter::{backward_sample, bootstrap_pf, extend_cloud_one_step, InvariantPath, StateCloud};
use crate::kernel::{
    adapt_stepsize, adapt_stepsize_pmmh, KernelConfig, KernelKind, MutationStats, PgCtx, PmmhCtx,
    PmmhState, ProposalPrecomp, StepSizes, INIT_MALA_STEPSIZE_SQ, INIT_PMMH_STEPSIZE_SQ,
    PG_TARGET_AR, PMMH_TARGET_AR,
};
use crate::model::{Model, ParamVector, TimeSeries};
use crate::rng;
use crate::stats::{log_sum_exp, normalize_log_weights, weighted_mean_cov, PopulationStats};
use crate::switching::{switch_da, switch_dt, two_stage_pmmh_to_pg, Aux};
use crate::transform;
use rayon::prelude::*;
use serde::Serialize;

/// Where the sampler currently sits in its target sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Position {
    /// Data annealing: observations processed so far.
    Observations(usize),
    /// Density tempering: current likelihood exponent.
    Temper(f64),
}

impl Position {
    pub fn as_f64(&self) -> f64 {
        match *self {
            Position::Observations(d) => d as f64,
            Position::Temper(g) => g,
        }
    }
}

/// Which member of the target sequence is current and which kernel defines
/// the reweighting.
#[derive(Debug, Clone)]
pub struct TargetSpec {
    pub mode: Mode,
    pub position: Position,
    pub default_kernel: KernelKind,
    pub nx_pmmh: usize,
    pub nx_pg: usize,
}

impl TargetSpec {
    pub fn nx_of(&self, kind: KernelKind) -> usize {
        match kind {
            KernelKind::Pmmh => self.nx_pmmh,
            KernelKind::Pg => self.nx_pg,
        }
    }
}

/// One parameter particle.
#[derive(Debug, Clone)]
pub struct ThetaParticle {
    pub theta: ParamVector,
    pub log_weight: f64,
    pub aux: Aux,
}

/// Resolved engine settings.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub mode: Mode,
    pub default_kernel: KernelKind,
    pub n_theta: usize,
    pub nx_pmmh: usize,
    pub nx_pg: usize,
    pub policy: SwitchPolicy,
    pub seed: u64,
    pub k_test: usize,
    pub k_mala: usize,
    /// Diagnostic override: complete the mutation with this kernel instead
    /// of the score winner (used by invariance probes).
    pub forced_winner: Option<KernelKind>,
}

impl EngineConfig {
    pub fn from_run_config(cfg: &RunConfig) -> Self {
        Self {
            mode: cfg.mode,
            default_kernel: cfg.default_kernel,
            n_theta: cfg.n_theta,
            nx_pmmh: cfg.nx_pmmh,
            nx_pg: cfg.nx_pg(),
            policy: cfg.switch_policy,
            seed: cfg.seed,
            k_test: cfg.k_test.unwrap_or(adapt::K_TEST),
            k_mala: cfg.k_mala.unwrap_or(crate::kernel::DEFAULT_K_MALA),
            forced_winner: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_theta < 2 {
            return Err(Error::invalid("N_theta must be at least 2"));
        }
        if self.mode == Mode::Dt
            && self.default_kernel == KernelKind::Pmmh
            && self.policy != SwitchPolicy::Never
        {
            return Err(Error::invalid(
                "density tempering with a PMMH default does not support switching",
            ));
        }
        for kind in [KernelKind::Pmmh, KernelKind::Pg] {
            self.kernel_config(kind, (INIT_PMMH_STEPSIZE_SQ, INIT_MALA_STEPSIZE_SQ, INIT_MALA_STEPSIZE_SQ))
                .validate()?;
        }
        Ok(())
    }

    fn kernel_config(&self, kind: KernelKind, eps: (f64, f64, f64)) -> KernelConfig {
        match kind {
            KernelKind::Pmmh => KernelConfig {
                kind,
                nx: self.nx_pmmh,
                stepsizes: StepSizes::Pmmh(eps.0),
                target_acceptance: PMMH_TARGET_AR,
                k_mala: self.k_mala,
            },
            KernelKind::Pg => KernelConfig {
                kind,
                nx: self.nx_pg,
                stepsizes: StepSizes::Pg {
                    eps1_sq: eps.1,
                    eps2_sq: eps.2,
                },
                target_acceptance: PG_TARGET_AR,
                k_mala: self.k_mala,
            },
        }
    }
}

/// Per-iteration diagnostics, one row per SMC iteration.
#[derive(Debug, Clone, Serialize)]
pub struct IterationDiag {
    pub iteration: u64,
    pub position: f64,
    pub ess: f64,
    pub resampled: bool,
    pub tested_alternate: bool,
    pub chosen_kernel: Option<String>,
    pub score_def: Option<f64>,
    pub score_alt: Option<f64>,
    pub r_rem: Option<usize>,
    pub repeats_total: Option<usize>,
    pub switch_aborts: u64,
}

/// Per-run summary metrics.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetrics {
    /// Mean squared error of posterior means against a gold reference;
    /// filled in by the benchmark harness.
    pub mse: Option<f64>,
    /// Accumulated particle-filter cost: sum of N_x * steps over all runs.
    pub pfc: u64,
    /// Number of mutation events (resample-move for DA, tempering stages for DT).
    pub targets: u64,
    /// Mean kernel applications per mutation event.
    pub mean_repeats: f64,
    pub log_evidence: f64,
    pub wall_time_s: f64,
    pub seed: u64,
}

/// Weighted posterior sample plus run metadata.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub param_names: Vec<String>,
    /// (theta, normalized weight) pairs in the natural space.
    pub sample: Vec<(ParamVector, f64)>,
    pub metrics: RunMetrics,
    pub diagnostics: Vec<IterationDiag>,
}

impl RunResult {
    /// Weighted posterior mean of each parameter.
    pub fn posterior_mean(&self) -> Vec<f64> {
        let dim = self.param_names.len();
        let mut mean = vec![0.0; dim];
        for (theta, w) in &self.sample {
            for j in 0..dim {
                mean[j] += w * theta[j];
            }
        }
        mean
    }
}

/// Bisection for the tempering increment: the largest step up to `max_delta`
/// whose reweighted ESS reaches `target_ess` (within `tol`), or `max_delta`
/// when even the full step keeps the ESS above target.
pub fn solve_temper_increment(
    log_incr: &[f64],
    weights: &[f64],
    max_delta: f64,
    target_ess: f64,
    tol: f64,
) -> f64 {
    let ess_at = |delta: f64| -> f64 {
        let lw: Vec<f64> = weights
            .iter()
            .zip(log_incr)
            .map(|(&w, &l)| w.ln() + delta * l)
            .collect();
        match normalize_log_weights(&lw) {
            Ok(w) => crate::filter::ess(&w).unwrap_or(1.0),
            Err(_) => 1.0,
        }
    };
    if ess_at(max_delta) >= target_ess {
        return max_delta;
    }
    let (mut lo, mut hi) = (0.0f64, max_delta);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let e = ess_at(mid);
        if (e - target_ess).abs() < tol {
            return mid;
        }
        if e > target_ess {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, Default)]
struct PhaseStats {
    pmmh: MutationStats,
    pg: [MutationStats; 2],
    cost: u64,
    aborts: u64,
}

impl PhaseStats {
    fn merge(mut self, other: PhaseStats) -> PhaseStats {
        self.pmmh.merge(other.pmmh);
        self.pg[0].merge(other.pg[0]);
        self.pg[1].merge(other.pg[1]);
        self.cost += other.cost;
        self.aborts += other.aborts;
        self
    }
}

/// The SMC² engine state.
pub struct EngineState<'a> {
    model: &'a dyn Model,
    data: &'a TimeSeries,
    cfg: EngineConfig,
    pub particles: Vec<ThetaParticle>,
    pub target: TargetSpec,
    stats: Option<PopulationStats>,
    proposal: Option<ProposalPrecomp>,
    sjd_target: f64,
    eps_pmmh_sq: f64,
    eps_mala_sq: (f64, f64),
    pending: PhaseStats,
    lag: LagState,
    log_evidence: f64,
    cost: u64,
    targets: u64,
    total_repeats: u64,
    iteration: u64,
    diagnostics: Vec<IterationDiag>,
}

impl<'a> EngineState<'a> {
    /// Draw the initial population from the prior with uniform weights and
    /// kernel-appropriate auxiliary state.
    pub fn init(model: &'a dyn Model, data: &'a TimeSeries, cfg: EngineConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_theta;
        let log_w = -(n as f64).ln();
        let position = match cfg.mode {
            Mode::Da => Position::Observations(0),
            Mode::Dt => Position::Temper(0.0),
        };
        let target = TargetSpec {
            mode: cfg.mode,
            position,
            default_kernel: cfg.default_kernel,
            nx_pmmh: cfg.nx_pmmh,
            nx_pg: cfg.nx_pg,
        };
        let seed = cfg.seed;
        let mode = cfg.mode;
        let default_kernel = cfg.default_kernel;
        let nx_def = target.nx_of(default_kernel);
        let particles: Result<Vec<ThetaParticle>> = (0..n)
            .into_par_iter()
            .map(|i| -> Result<ThetaParticle> {
                let mut rng = rng::particle_stream(seed, rng::PHASE_INIT, 0, i as u64);
                let theta = model.sample_prior(&mut rng);
                let aux = match (mode, default_kernel) {
                    (Mode::Da, KernelKind::Pmmh) => Aux::Pmmh(PmmhState {
                        loglik: 0.0,
                        cloud: Some(StateCloud::empty(nx_def)),
                    }),
                    (Mode::Da, KernelKind::Pg) => Aux::Pg(InvariantPath::empty()),
                    (Mode::Dt, KernelKind::Pg) => {
                        // initial path from prior dynamics (temper 0)
                        let out =
                            bootstrap_pf(model, &theta, data, data.len(), nx_def, 0.0, &mut rng)?;
                        let path = backward_sample(&out, model, &theta, data, &mut rng)?;
                        Aux::Pg(path)
                    }
                    (Mode::Dt, KernelKind::Pmmh) => {
                        // annealed-estimate baseline: store the untempered estimate
                        let out =
                            bootstrap_pf(model, &theta, data, data.len(), nx_def, 1.0, &mut rng)?;
                        Aux::Pmmh(PmmhState {
                            loglik: out.log_likelihood,
                            cloud: None,
                        })
                    }
                };
                Ok(ThetaParticle {
                    theta,
                    log_weight: log_w,
                    aux,
                })
            })
            .collect();
        let particles = particles?;
        let init_cost = match (mode, default_kernel) {
            (Mode::Dt, _) => (n * nx_def * data.len()) as u64,
            _ => 0,
        };
        Ok(Self {
            model,
            data,
            cfg,
            particles,
            target,
            stats: None,
            proposal: None,
            sjd_target: 0.0,
            eps_pmmh_sq: INIT_PMMH_STEPSIZE_SQ,
            eps_mala_sq: (INIT_MALA_STEPSIZE_SQ, INIT_MALA_STEPSIZE_SQ),
            pending: PhaseStats::default(),
            lag: LagState::new(),
            log_evidence: 0.0,
            cost: init_cost,
            targets: 0,
            total_repeats: 0,
            iteration: 0,
            diagnostics: Vec::new(),
        })
    }

    pub fn cost(&self) -> u64 {
        self.cost
    }

    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    fn normalized_weights(&self) -> Result<Vec<f64>> {
        let lw: Vec<f64> = self.particles.iter().map(|p| p.log_weight).collect();
        normalize_log_weights(&lw)
            .map_err(|_| Error::abort("all particle weights are zero; run cannot continue"))
    }

    fn unconstrained_coords(&self) -> Result<Vec<Vec<f64>>> {
        let transforms = &self.model.spec().transforms;
        self.particles
            .iter()
            .map(|p| transform::to_unconstrained(&p.theta.values, transforms))
            .collect()
    }

    /// Data annealing reweighting: advance every particle from d to d+1.
    pub fn reweight_da(&mut self) -> Result<()> {
        let d = match self.target.position {
            Position::Observations(d) => d,
            Position::Temper(_) => return Err(Error::invalid("reweight_da needs DA mode")),
        };
        let t_next = d + 1;
        if t_next > self.data.len() {
            return Err(Error::invalid("no observation left to process"));
        }
        let old_lw: Vec<f64> = self.particles.iter().map(|p| p.log_weight).collect();
        let model = self.model;
        let data = self.data;
        let seed = self.cfg.seed;
        let iter = self.iteration;
        let nx_pmmh = self.target.nx_pmmh;
        let incr_cost: Result<Vec<(f64, u64)>> = self
            .particles
            .par_iter_mut()
            .enumerate()
            .map(|(i, p)| -> Result<(f64, u64)> {
                let mut rng = rng::particle_stream(seed, rng::PHASE_REWEIGHT, iter, i as u64);
                match &mut p.aux {
                    Aux::Pmmh(state) => {
                        let cloud = state
                            .cloud
                            .get_or_insert_with(|| StateCloud::empty(nx_pmmh));
                        let incr = extend_cloud_one_step(
                            model, &p.theta, cloud, data, t_next, 1.0, &mut rng,
                        )?;
                        state.loglik += incr;
                        p.log_weight += incr;
                        Ok((incr, cloud.nx as u64))
                    }
                    Aux::Pg(path) => {
                        let incr = path.extend_one(model, &p.theta, data, &mut rng);
                        p.log_weight += incr;
                        Ok((incr, 0))
                    }
                }
            })
            .collect();
        let incr_cost = incr_cost?;
        self.cost += incr_cost.iter().map(|(_, c)| c).sum::<u64>();
        let new_lw: Vec<f64> = self.particles.iter().map(|p| p.log_weight).collect();
        let (old, new) = (log_sum_exp(&old_lw), log_sum_exp(&new_lw));
        if !new.is_finite() {
            return Err(Error::abort(format!(
                "all particle weights vanished while processing observation {t_next}"
            )));
        }
        self.log_evidence += new - old;
        self.target.position = Position::Observations(t_next);
        Ok(())
    }

    /// Per-particle tempering increments: the cached log-likelihood terms the
    /// DT reweighting raises to delta-g.
    fn dt_log_increments(&self) -> Vec<f64> {
        self.particles
            .iter()
            .map(|p| match &p.aux {
                Aux::Pg(path) => path.log_obs_density,
                Aux::Pmmh(state) => state.loglik,
            })
            .collect()
    }

    /// Adapt the next tempering exponent to hit ESS = N_theta / 2.
    pub fn adapt_temperature(&self) -> Result<f64> {
        let g = match self.target.position {
            Position::Temper(g) => g,
            Position::Observations(_) => {
                return Err(Error::invalid("adapt_temperature needs DT mode"))
            }
        };
        let weights = self.normalized_weights()?;
        let lls = self.dt_log_increments();
        let delta = solve_temper_increment(
            &lls,
            &weights,
            1.0 - g,
            self.cfg.n_theta as f64 / 2.0,
            1.0,
        );
        if !(delta > 0.0) {
            return Err(Error::abort("tempering increment collapsed to zero"));
        }
        Ok(delta)
    }

    /// Density tempering reweighting by exponent increment `delta`.
    pub fn reweight_dt(&mut self, delta: f64) -> Result<()> {
        let g = match self.target.position {
            Position::Temper(g) => g,
            Position::Observations(_) => return Err(Error::invalid("reweight_dt needs DT mode")),
        };
        let old_lw: Vec<f64> = self.particles.iter().map(|p| p.log_weight).collect();
        let lls = self.dt_log_increments();
        for (p, ll) in self.particles.iter_mut().zip(&lls) {
            p.log_weight += delta * ll;
        }
        let new_lw: Vec<f64> = self.particles.iter().map(|p| p.log_weight).collect();
        let (old, new) = (log_sum_exp(&old_lw), log_sum_exp(&new_lw));
        if !new.is_finite() {
            return Err(Error::abort("all particle weights vanished during tempering"));
        }
        self.log_evidence += new - old;
        let g_new = if delta >= 1.0 - g { 1.0 } else { g + delta };
        self.target.position = Position::Temper(g_new);
        Ok(())
    }

    /// Weighted covariance, proposal factors, SJD target and stepsizes for
    /// the current iteration (computed just prior to the resampling step).
    fn refresh_iteration_stats(&mut self) -> Result<f64> {
        let weights = self.normalized_weights()?;
        let coords = self.unconstrained_coords()?;
        let stats = weighted_mean_cov(&coords, &weights)?;
        self.proposal = Some(crate::kernel::precompute_proposals(
            &stats.cov,
            self.model.spec(),
        )?);
        self.sjd_target = sjd_target(&coords, &weights, &stats.mean, &stats.inv);
        self.stats = Some(stats);

        // pooled acceptance rates from the previous mutation
        if let Some(ar) = self.pending.pmmh.rate() {
            self.eps_pmmh_sq = adapt_stepsize_pmmh(self.eps_pmmh_sq, ar);
        }
        if let Some(ar) = self.pending.pg[0].rate() {
            self.eps_mala_sq.0 = adapt_stepsize(self.eps_mala_sq.0, ar, PG_TARGET_AR);
        }
        if let Some(ar) = self.pending.pg[1].rate() {
            self.eps_mala_sq.1 = adapt_stepsize(self.eps_mala_sq.1, ar, PG_TARGET_AR);
        }
        self.pending = PhaseStats::default();

        crate::filter::ess(&weights)
    }

    /// Multinomial resampling of the theta-particles (auxiliary state is
    /// copied) followed by the adaptive mutation step.
    pub fn resample_and_mutate(&mut self) -> Result<MoveReport> {
        let weights = self.normalized_weights()?;
        let mut rng = rng::substream(self.cfg.seed, &[rng::PHASE_ENGINE, self.iteration]);
        let idx =
            crate::filter::multinomial_resample(&weights, self.cfg.n_theta, &mut rng);
        self.particles = idx
            .iter()
            .map(|&a| self.particles[a].clone())
            .collect();
        let log_w = -(self.cfg.n_theta as f64).ln();
        for p in &mut self.particles {
            p.log_weight = log_w;
        }
        self.adaptive_move()
    }

    fn temper(&self) -> f64 {
        match self.target.position {
            Position::Observations(_) => 1.0,
            Position::Temper(g) => g,
        }
    }

    fn n_obs_current(&self) -> usize {
        match self.target.position {
            Position::Observations(d) => d,
            Position::Temper(_) => self.data.len(),
        }
    }

    /// Apply `reps` applications of `kind` to every particle. Particles whose
    /// representation does not match (a switch was aborted) are skipped.
    fn apply_kernel(&mut self, kind: KernelKind, reps: usize, app_tag: u64) -> Result<PhaseStats> {
        if reps == 0 {
            return Ok(PhaseStats::default());
        }
        let model = self.model;
        let data = self.data;
        let seed = self.cfg.seed;
        let iter = self.iteration;
        let n_obs = self.n_obs_current();
        let temper = self.temper();
        let proposal = self
            .proposal
            .as_ref()
            .ok_or_else(|| Error::abort("mutation before iteration stats"))?;
        let eps_pmmh = self.eps_pmmh_sq;
        let eps_mala = self.eps_mala_sq;
        let k_mala = self.cfg.k_mala;
        let mode = self.cfg.mode;
        let is_default = kind == self.cfg.default_kernel;
        let nx = self.target.nx_of(kind);
        // DT with a PG default mutates PMMH against the tempered-filter
        // target; the DT-PMMH baseline anneals the untempered estimate.
        let (filter_temper, estimate_exponent) = match (mode, is_default) {
            (Mode::Da, _) => (1.0, 1.0),
            (Mode::Dt, true) if kind == KernelKind::Pmmh => (1.0, temper),
            (Mode::Dt, _) => (temper, 1.0),
        };
        let keep_cloud = mode == Mode::Da;

        let stats: Result<PhaseStats> = self
            .particles
            .par_iter_mut()
            .enumerate()
            .map(|(i, p)| -> Result<PhaseStats> {
                let mut rng = rng::substream(
                    seed,
                    &[rng::PHASE_MUTATE, iter, app_tag, i as u64],
                );
                let mut local = PhaseStats::default();
                for _ in 0..reps {
                    match (kind, &mut p.aux) {
                        (KernelKind::Pmmh, Aux::Pmmh(state)) => {
                            let ctx = PmmhCtx {
                                n_obs,
                                nx,
                                filter_temper,
                                estimate_exponent,
                                keep_cloud,
                            };
                            let (accepted, cost) = crate::kernel::pmmh_step(
                                model, data, &ctx, &mut p.theta, state, proposal, eps_pmmh,
                                &mut rng,
                            )?;
                            local.pmmh.record(accepted);
                            local.cost += cost;
                        }
                        (KernelKind::Pg, Aux::Pg(path)) => {
                            let ctx = PgCtx {
                                n_obs,
                                nx,
                                temper,
                                k_mala,
                            };
                            let (stats, cost) = crate::kernel::pg_step(
                                model,
                                data,
                                &ctx,
                                &mut p.theta,
                                path,
                                proposal.block1.as_ref(),
                                proposal.block2.as_ref(),
                                eps_mala,
                                &mut rng,
                            )?;
                            local.pg[0].merge(stats[0]);
                            local.pg[1].merge(stats[1]);
                            local.cost += cost;
                        }
                        _ => local.aborts += 1,
                    }
                }
                Ok(local)
            })
            .try_reduce(PhaseStats::default, |a, b| Ok(a.merge(b)));
        let stats = stats?;
        self.cost += stats.cost;
        self.pending.pmmh.merge(stats.pmmh);
        self.pending.pg[0].merge(stats.pg[0]);
        self.pending.pg[1].merge(stats.pg[1]);
        Ok(stats)
    }

    /// Switch every particle's representation to `to_kind`. PMMH -> PG drops
    /// through the two-stage route when N_x^PG < N_x^PMMH.
    fn switch_all(&mut self, to_kind: KernelKind, app_tag: u64) -> Result<u64> {
        let model = self.model;
        let data = self.data;
        let seed = self.cfg.seed;
        let iter = self.iteration;
        let target = self.target.clone();
        let temper = self.temper();
        let to_nx = target.nx_of(to_kind);
        let da_position = match target.position {
            Position::Observations(d) => Some(d),
            Position::Temper(_) => None,
        };
        let outcome: Result<(u64, u64)> = self
            .particles
            .par_iter_mut()
            .enumerate()
            .map(|(i, p)| -> Result<(u64, u64)> {
                let mut rng =
                    rng::substream(seed, &[rng::PHASE_MUTATE, iter, app_tag, i as u64]);
                let two_stage = to_kind == KernelKind::Pg
                    && p.aux.kind() == KernelKind::Pmmh
                    && target.nx_pg < target.nx_pmmh;
                let out = if two_stage {
                    two_stage_pmmh_to_pg(
                        model,
                        data,
                        da_position,
                        temper,
                        &p.theta,
                        &mut p.aux,
                        target.nx_pmmh,
                        target.nx_pg,
                        &mut rng,
                    )?
                } else {
                    match da_position {
                        Some(d) => switch_da(
                            model, data, d, &p.theta, &mut p.aux, to_kind, to_nx, &mut rng,
                        )?,
                        None => switch_dt(
                            model, data, temper, &p.theta, &mut p.aux, to_kind, to_nx, &mut rng,
                        )?,
                    }
                };
                Ok((out.cost, u64::from(out.aborted)))
            })
            .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)));
        let (cost, aborts) = outcome?;
        self.cost += cost;
        self.pending.aborts += aborts;
        Ok(aborts)
    }

    /// Apply `kind` K times to every particle and measure the per-parameter
    /// squared jump of the population in whitened coordinates.
    pub fn test_kernel(&mut self, kind: KernelKind, k: usize, app_tag: u64) -> Result<Vec<f64>> {
        let before = self.unconstrained_coords()?;
        self.apply_kernel(kind, k, app_tag)?;
        let after = self.unconstrained_coords()?;
        let inv_sqrt = &self
            .stats
            .as_ref()
            .ok_or_else(|| Error::abort("test_kernel before iteration stats"))?
            .inv_sqrt;
        Ok(psjd(&before, &after, inv_sqrt))
    }

    /// The adaptive move step: test the default kernel (and, per policy, the
    /// alternate), pick the better score, complete the remaining repeats and
    /// leave the population in the default representation.
    pub fn adaptive_move(&mut self) -> Result<MoveReport> {
        self.targets += 1;
        let k = self.cfg.k_test;
        let def = self.cfg.default_kernel;
        let alt = def.other();
        let mut report = MoveReport::default();

        let test_alt = match self.cfg.policy {
            SwitchPolicy::Never => false,
            SwitchPolicy::Always => true,
            SwitchPolicy::Lag => self.lag.begin_event(),
        };

        let psjd_def = self.test_kernel(def, k, 0)?;
        let m_def = psjd_def.iter().copied().fold(f64::INFINITY, f64::min);
        let score_def = kernel_score(&psjd_def, self.target.nx_of(def));
        report.score_def = Some(score_def);
        report.tested_alternate = test_alt;

        let (chosen, r_rem, total_reps);
        if test_alt {
            self.switch_all(alt, 1)?;
            let psjd_alt = self.test_kernel(alt, k, 2)?;
            let m_alt = psjd_alt.iter().copied().fold(f64::INFINITY, f64::min);
            let score_alt = kernel_score(&psjd_alt, self.target.nx_of(alt));
            report.score_alt = Some(score_alt);
            if self.cfg.policy == SwitchPolicy::Lag {
                self.lag.record_scores(score_def, score_alt);
            }
            let def_wins = match self.cfg.forced_winner {
                Some(k) => k == def,
                None => score_def >= score_alt,
            };
            if def_wins {
                chosen = def;
                r_rem = remaining_repeats(self.sjd_target, &psjd_def, &psjd_alt, m_def, k);
                self.switch_all(def, 3)?;
                self.apply_kernel(def, r_rem, 4)?;
            } else {
                chosen = alt;
                r_rem = remaining_repeats(self.sjd_target, &psjd_def, &psjd_alt, m_alt, k);
                self.apply_kernel(alt, r_rem, 4)?;
                self.switch_all(def, 5)?;
            }
            total_reps = 2 * k + r_rem;
        } else {
            // the alternate was never run: the combined movement term counts
            // the default's contribution twice
            chosen = def;
            r_rem = remaining_repeats(self.sjd_target, &psjd_def, &psjd_def, m_def, k);
            self.apply_kernel(def, r_rem, 4)?;
            total_reps = k + r_rem;
        }
        self.total_repeats += total_reps as u64;
        report.chosen = Some(chosen);
        report.r_rem = Some(r_rem);
        report.repeats_total = Some(total_reps);
        Ok(report)
    }

    fn push_diag(&mut self, ess: f64, resampled: bool, report: Option<MoveReport>) {
        let report = report.unwrap_or_default();
        self.diagnostics.push(IterationDiag {
            iteration: self.iteration,
            position: self.target.position.as_f64(),
            ess,
            resampled,
            tested_alternate: report.tested_alternate,
            chosen_kernel: report.chosen.map(|k| k.to_string()),
            score_def: report.score_def,
            score_alt: report.score_alt,
            r_rem: report.r_rem,
            repeats_total: report.repeats_total,
            switch_aborts: self.pending.aborts,
        });
    }

    fn finish(self, start: std::time::Instant) -> RunResult {
        let weights = self
            .normalized_weights()
            .unwrap_or_else(|_| vec![1.0 / self.cfg.n_theta as f64; self.cfg.n_theta]);
        let sample: Vec<(ParamVector, f64)> = self
            .particles
            .iter()
            .zip(&weights)
            .map(|(p, &w)| (p.theta.clone(), w))
            .collect();
        let mean_repeats = if self.targets > 0 {
            self.total_repeats as f64 / self.targets as f64
        } else {
            0.0
        };
        RunResult {
            param_names: self.model.spec().param_names.clone(),
            sample,
            metrics: RunMetrics {
                mse: None,
                pfc: self.cost,
                targets: self.targets,
                mean_repeats,
                log_evidence: self.log_evidence,
                wall_time_s: start.elapsed().as_secs_f64(),
                seed: self.cfg.seed,
            },
            diagnostics: self.diagnostics,
        }
    }
}

/// Outcome of one adaptive move step (for diagnostics).
#[derive(Debug, Clone, Copy, Default)]
pub struct MoveReport {
    pub tested_alternate: bool,
    pub chosen: Option<KernelKind>,
    pub score_def: Option<f64>,
    pub score_alt: Option<f64>,
    pub r_rem: Option<usize>,
    pub repeats_total: Option<usize>,
}

/// Run SMC² to completion: d = T for data annealing, g = 1 for density
/// tempering. Returns the weighted posterior sample and run metrics.
pub fn run(model: &dyn Model, data: &TimeSeries, cfg: EngineConfig) -> Result<RunResult> {
    let start = std::time::Instant::now();
    let mut state = EngineState::init(model, data, cfg)?;
    if data.is_empty() {
        return Ok(state.finish(start));
    }
    match state.cfg.mode {
        Mode::Da => {
            for _ in 0..data.len() {
                state.iteration += 1;
                state.reweight_da()?;
                let ess = state.refresh_iteration_stats()?;
                if ess < state.cfg.n_theta as f64 / 2.0 {
                    let report = state.resample_and_mutate()?;
                    state.push_diag(ess, true, Some(report));
                } else {
                    state.push_diag(ess, false, None);
                }
            }
        }
        Mode::Dt => {
            while state.target.position != Position::Temper(1.0) {
                state.iteration += 1;
                let delta = state.adapt_temperature()?;
                state.reweight_dt(delta)?;
                let ess = state.refresh_iteration_stats()?;
                let report = state.resample_and_mutate()?;
                state.push_diag(ess, true, Some(report));
            }
        }
    }
    Ok(state.finish(start))
}
