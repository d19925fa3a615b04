//! Benchmark harness: exact Kalman oracle for the linear-Gaussian model,
//! quadrature and gold-standard posterior references, MSE/PFC efficiency
//! scoring, and replicate orchestration with table emission.

use crate::config::{Mode, RunConfig};
use crate::engine::{self, EngineConfig, IterationDiag, RunMetrics, RunResult};
use crate::error::{Error, Result};
use crate::kernel::{
    pmmh_step, precompute_proposals, KernelKind, MutationStats, PmmhCtx, PmmhState,
};
use crate::model::{build_model, Model, ModelKind, ModelOptions, ParamVector, TimeSeries};
use crate::rng;
use crate::stats::weighted_mean_cov;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Kalman filter pass for the Brownian motion model. Returns the exact
/// log-likelihood and the per-step filtered/predicted moments.
pub struct KalmanTrace {
    pub log_likelihood: f64,
    pub filt_mean: Vec<f64>,
    pub filt_var: Vec<f64>,
    pub pred_mean: Vec<f64>,
    pub pred_var: Vec<f64>,
}

/// Exact p(y_{1:T} | theta) for the Brownian motion model via the standard
/// linear-Gaussian recursion. theta = (x0, beta, gamma, sigma).
pub fn kalman_filter_bm(theta: &ParamVector, y: &[f64]) -> KalmanTrace {
    let (x0, beta, gamma, sigma) = (theta[0], theta[1], theta[2], theta[3]);
    let c = beta - 0.5 * gamma * gamma;
    let q = gamma * gamma;
    let r = sigma * sigma;
    let t_max = y.len();
    let mut trace = KalmanTrace {
        log_likelihood: 0.0,
        filt_mean: Vec::with_capacity(t_max),
        filt_var: Vec::with_capacity(t_max),
        pred_mean: Vec::with_capacity(t_max),
        pred_var: Vec::with_capacity(t_max),
    };
    let mut m_pred = x0 + c;
    let mut p_pred = q;
    for &yt in y {
        let s = p_pred + r;
        trace.log_likelihood += crate::dist::ln_normal(yt, m_pred, s.sqrt());
        let gain = if s > 0.0 { p_pred / s } else { 0.0 };
        let m_filt = m_pred + gain * (yt - m_pred);
        let p_filt = (1.0 - gain) * p_pred;
        trace.pred_mean.push(m_pred);
        trace.pred_var.push(p_pred);
        trace.filt_mean.push(m_filt);
        trace.filt_var.push(p_filt);
        m_pred = m_filt + c;
        p_pred = p_filt + q;
    }
    trace
}

/// Kind-checked oracle entry point: only the Brownian motion model is
/// linear-Gaussian.
pub fn kalman_loglik(kind: ModelKind, theta: &ParamVector, y: &[f64]) -> Result<f64> {
    if kind != ModelKind::Bm {
        return Err(Error::invalid(
            "the Kalman oracle applies to the Brownian motion model only",
        ));
    }
    Ok(kalman_filter_bm(theta, y).log_likelihood)
}

/// Rauch-Tung-Striebel smoothed state means E[x_t | y_{1:T}, theta].
pub fn kalman_smoother_bm(theta: &ParamVector, y: &[f64]) -> Vec<f64> {
    let trace = kalman_filter_bm(theta, y);
    let t_max = y.len();
    if t_max == 0 {
        return Vec::new();
    }
    let mut smoothed = vec![0.0; t_max];
    smoothed[t_max - 1] = trace.filt_mean[t_max - 1];
    for t in (0..t_max - 1).rev() {
        let gain = if trace.pred_var[t + 1] > 0.0 {
            trace.filt_var[t] / trace.pred_var[t + 1]
        } else {
            0.0
        };
        smoothed[t] =
            trace.filt_mean[t] + gain * (smoothed[t + 1] - trace.pred_mean[t + 1]);
    }
    smoothed
}

/// Exact posterior summaries for a two-parameter restriction of the BM model,
/// computed by midpoint quadrature of prior x Kalman likelihood on a refined
/// grid.
pub struct QuadratureResult {
    pub free: (usize, usize),
    pub post_mean: (f64, f64),
    pub post_sd: (f64, f64),
    pub log_evidence: f64,
    pub smoothed_means: Vec<f64>,
    pub grid1: Vec<f64>,
    pub marginal1: Vec<f64>,
    pub grid2: Vec<f64>,
    pub marginal2: Vec<f64>,
}

fn bm_prior_range(param: usize) -> (f64, f64) {
    match param {
        0 => (3.0 - 30.0, 3.0 + 30.0),  // x0 ~ N(3, 5^2)
        1 => (2.0 - 30.0, 2.0 + 30.0),  // beta ~ N(2, 5^2)
        _ => (1e-6, 12.0),              // gamma, sigma ~ Half-Normal(2^2)
    }
}

/// Posterior quadrature over two free BM parameters with the others pinned
/// at `base`. Two passes: a wide prior-range grid locates the mass, a
/// refined grid computes the summaries.
pub fn bm_posterior_quadrature(
    y: &[f64],
    base: &ParamVector,
    free: (usize, usize),
    n_grid: usize,
) -> QuadratureResult {
    let model = crate::model::BmModel::new();
    let eval = |v1: f64, v2: f64| -> f64 {
        let mut theta = base.clone();
        theta.values[free.0] = v1;
        theta.values[free.1] = v2;
        let prior = model.log_prior_components(&theta);
        prior[free.0] + prior[free.1] + kalman_filter_bm(&theta, y).log_likelihood
    };
    let pass = |r1: (f64, f64), r2: (f64, f64), n: usize, with_smoother: bool| {
        let h1 = (r1.1 - r1.0) / n as f64;
        let h2 = (r2.1 - r2.0) / n as f64;
        let g1: Vec<f64> = (0..n).map(|i| r1.0 + (i as f64 + 0.5) * h1).collect();
        let g2: Vec<f64> = (0..n).map(|i| r2.0 + (i as f64 + 0.5) * h2).collect();
        let rows: Vec<Vec<f64>> = g1
            .par_iter()
            .map(|&v1| g2.iter().map(|&v2| eval(v1, v2)).collect())
            .collect();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let lse = crate::stats::log_sum_exp(&flat);
        let log_evidence = lse + h1.ln() + h2.ln();
        let mut post = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                post[i][j] = (rows[i][j] - lse).exp();
            }
        }
        let marginal1: Vec<f64> = (0..n).map(|i| post[i].iter().sum()).collect();
        let marginal2: Vec<f64> =
            (0..n).map(|j| (0..n).map(|i| post[i][j]).sum()).collect();
        let mean1: f64 = g1.iter().zip(&marginal1).map(|(g, p)| g * p).sum();
        let mean2: f64 = g2.iter().zip(&marginal2).map(|(g, p)| g * p).sum();
        let sd1 = g1
            .iter()
            .zip(&marginal1)
            .map(|(g, p)| p * (g - mean1).powi(2))
            .sum::<f64>()
            .sqrt();
        let sd2 = g2
            .iter()
            .zip(&marginal2)
            .map(|(g, p)| p * (g - mean2).powi(2))
            .sum::<f64>()
            .sqrt();
        let smoothed = if with_smoother {
            let mut acc = vec![0.0; y.len()];
            for (i, &v1) in g1.iter().enumerate() {
                for (j, &v2) in g2.iter().enumerate() {
                    if post[i][j] < 1e-12 {
                        continue;
                    }
                    let mut theta = base.clone();
                    theta.values[free.0] = v1;
                    theta.values[free.1] = v2;
                    let sm = kalman_smoother_bm(&theta, y);
                    for (a, s) in acc.iter_mut().zip(&sm) {
                        *a += post[i][j] * s;
                    }
                }
            }
            acc
        } else {
            Vec::new()
        };
        (
            (mean1, mean2),
            (sd1, sd2),
            log_evidence,
            smoothed,
            g1,
            marginal1,
            g2,
            marginal2,
        )
    };

    let wide1 = bm_prior_range(free.0);
    let wide2 = bm_prior_range(free.1);
    let (m, s, _, _, _, _, _, _) = pass(wide1, wide2, n_grid, false);
    let refine = |range: (f64, f64), mean: f64, sd: f64| -> (f64, f64) {
        let lo = (mean - 10.0 * sd).max(range.0);
        let hi = (mean + 10.0 * sd).min(range.1);
        (lo, hi)
    };
    let r1 = refine(wide1, m.0, s.0);
    let r2 = refine(wide2, m.1, s.1);
    let (post_mean, post_sd, log_evidence, smoothed_means, grid1, marginal1, grid2, marginal2) =
        pass(r1, r2, n_grid, true);
    QuadratureResult {
        free,
        post_mean,
        post_sd,
        log_evidence,
        smoothed_means,
        grid1,
        marginal1,
        grid2,
        marginal2,
    }
}

/// Kolmogorov-Smirnov distance between an empirical sample and a reference
/// distribution given by equally spaced cell centers and cell probabilities.
/// The CDFs are compared at cell right edges so the discretizations align.
pub fn ks_distance(samples: &[f64], grid: &[f64], probs: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let half_cell = if grid.len() > 1 {
        0.5 * (grid[1] - grid[0])
    } else {
        0.0
    };
    let mut cdf_ref = 0.0;
    let mut max_gap: f64 = 0.0;
    for (&g, &p) in grid.iter().zip(probs) {
        cdf_ref += p;
        let idx = sorted.partition_point(|&s| s <= g + half_cell);
        let cdf_emp = idx as f64 / n;
        max_gap = max_gap.max((cdf_emp - cdf_ref).abs());
    }
    max_gap
}

/// A gold-standard posterior reference from a long PMMH chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldReference {
    pub model: String,
    pub param_names: Vec<String>,
    pub posterior_mean: Vec<f64>,
    /// Batch-means Monte Carlo standard error per parameter.
    pub posterior_se: Vec<f64>,
    pub chain_length: usize,
    pub burn_in: usize,
    pub nx: usize,
    pub seed: u64,
}

impl GoldReference {
    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Long PMMH chain with a random-walk proposal whose covariance comes from a
/// pilot SMC² run. The first 20% of the chain is discarded.
pub fn run_gold(
    model: &dyn Model,
    model_name: &str,
    data: &TimeSeries,
    chain_length: usize,
    nx: usize,
    seed: u64,
) -> Result<GoldReference> {
    if chain_length < 1250 {
        return Err(Error::invalid(
            "gold chain must be at least 1250 iterations (burn-in + 1000)",
        ));
    }
    // pilot SMC² for the proposal covariance
    let pilot_cfg = EngineConfig {
        mode: Mode::Da,
        default_kernel: KernelKind::Pmmh,
        n_theta: 100,
        nx_pmmh: nx,
        nx_pg: nx,
        policy: crate::adapt::SwitchPolicy::Never,
        seed: seed ^ 0x9e37_79b9,
        k_test: 5,
        k_mala: 5,
        forced_winner: None,
    };
    let pilot = engine::run(model, data, pilot_cfg)?;
    let transforms = &model.spec().transforms;
    let coords: Result<Vec<Vec<f64>>> = pilot
        .sample
        .iter()
        .map(|(t, _)| crate::transform::to_unconstrained(&t.values, transforms))
        .collect();
    let weights: Vec<f64> = pilot.sample.iter().map(|(_, w)| *w).collect();
    let stats = weighted_mean_cov(&coords?, &weights)?;
    let proposal = precompute_proposals(&stats.cov, model.spec())?;

    let mut rng = rng::substream(seed, &[rng::PHASE_GOLD]);
    let mut theta = model.sample_prior(&mut rng);
    let out = crate::filter::bootstrap_pf(model, &theta, data, data.len(), nx, 1.0, &mut rng)?;
    let mut state = PmmhState {
        loglik: out.log_likelihood,
        cloud: None,
    };
    let ctx = PmmhCtx {
        n_obs: data.len(),
        nx,
        filter_temper: 1.0,
        estimate_exponent: 1.0,
        keep_cloud: false,
    };
    let burn_in = chain_length / 5;
    let dim = model.spec().dim();
    let mut chain: Vec<Vec<f64>> = Vec::with_capacity(chain_length - burn_in);
    let mut eps_sq = 1.0f64;
    let mut window = MutationStats::default();
    let mut total = MutationStats::default();
    for it in 0..chain_length {
        let (accepted, _) = pmmh_step(
            model, data, &ctx, &mut theta, &mut state, &proposal, eps_sq, &mut rng,
        )?;
        window.record(accepted);
        total.record(accepted);
        // stepsize adaptation during burn-in only, in 100-iteration batches
        if it < burn_in && window.proposals == 100 {
            if let Some(ar) = window.rate() {
                eps_sq = crate::kernel::adapt_stepsize_pmmh(eps_sq, ar);
            }
            window = MutationStats::default();
        }
        if it >= burn_in {
            chain.push(theta.values.clone());
        }
    }
    if total.accepts == 0 {
        return Err(Error::degenerate("gold chain never accepted a proposal"));
    }
    let n = chain.len() as f64;
    let mut posterior_mean = vec![0.0; dim];
    for sample in &chain {
        for j in 0..dim {
            posterior_mean[j] += sample[j] / n;
        }
    }
    let posterior_se: Vec<f64> = (0..dim)
        .map(|j| {
            let series: Vec<f64> = chain.iter().map(|s| s[j]).collect();
            crate::stats::batch_means_se(&series, 20)
        })
        .collect();
    Ok(GoldReference {
        model: model_name.to_string(),
        param_names: model.spec().param_names.clone(),
        posterior_mean,
        posterior_se,
        chain_length,
        burn_in,
        nx,
        seed,
    })
}

/// Mean over parameters of the squared posterior-mean error against the gold
/// reference, on the natural parameter scale.
pub fn mse_vs_gold(result: &RunResult, gold: &GoldReference) -> f64 {
    let mean = result.posterior_mean();
    let dim = mean.len();
    mean.iter()
        .zip(&gold.posterior_mean)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / dim as f64
}

/// Efficiency scores of a method against a base method.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EffScores {
    pub releff_mse: f64,
    pub releff_pfc: f64,
    pub releff: f64,
}

fn eff_components(runs: &[RunMetrics]) -> Result<(f64, f64, f64)> {
    if runs.is_empty() {
        return Err(Error::invalid("no runs to score"));
    }
    let n = runs.len() as f64;
    let mut eff = 0.0;
    let mut eff_mse = 0.0;
    let mut eff_pfc = 0.0;
    for r in runs {
        let mse = r
            .mse
            .ok_or_else(|| Error::invalid("run metrics carry no MSE; provide a gold reference"))?;
        eff += r.pfc as f64 * mse / n;
        eff_mse += mse / n;
        eff_pfc += r.pfc as f64 / n;
    }
    Ok((eff, eff_mse, eff_pfc))
}

/// The penalty ratios of a base method against a candidate method: values
/// above 1 mean the candidate outperforms the base.
pub fn score_runs(runs: &[RunMetrics], base: &[RunMetrics]) -> Result<EffScores> {
    let (eff_m, eff_mse_m, eff_pfc_m) = eff_components(runs)?;
    let (eff_b, eff_mse_b, eff_pfc_b) = eff_components(base)?;
    if eff_m == 0.0 || eff_mse_m == 0.0 || eff_pfc_m == 0.0 {
        return Err(Error::degenerate("method efficiency denominator is zero"));
    }
    Ok(EffScores {
        releff_mse: eff_mse_b / eff_mse_m,
        releff_pfc: eff_pfc_b / eff_pfc_m,
        releff: eff_b / eff_m,
    })
}

/// Outcome of one benchmark variant over independent replicates.
#[derive(Debug, Clone)]
pub struct VariantRuns {
    pub cfg: RunConfig,
    pub metrics: Vec<RunMetrics>,
    /// (seed, error) pairs for replicates that aborted; excluded from
    /// aggregates.
    pub failures: Vec<(u64, String)>,
}

impl VariantRuns {
    pub fn mean_targets(&self) -> f64 {
        let n = self.metrics.len().max(1) as f64;
        self.metrics.iter().map(|m| m.targets as f64).sum::<f64>() / n
    }

    pub fn mean_repeats(&self) -> f64 {
        let n = self.metrics.len().max(1) as f64;
        self.metrics.iter().map(|m| m.mean_repeats).sum::<f64>() / n
    }

    pub fn median_pfc(&self) -> f64 {
        let mut pfcs: Vec<u64> = self.metrics.iter().map(|m| m.pfc).collect();
        pfcs.sort_unstable();
        if pfcs.is_empty() {
            return f64::NAN;
        }
        let mid = pfcs.len() / 2;
        if pfcs.len() % 2 == 1 {
            pfcs[mid] as f64
        } else {
            (pfcs[mid - 1] + pfcs[mid]) as f64 / 2.0
        }
    }
}

/// Run `seeds.len()` independent replicates of one configuration, scoring
/// each against the gold reference when one is supplied.
pub fn run_replicates(
    model: &dyn Model,
    data: &TimeSeries,
    cfg: &RunConfig,
    seeds: &[u64],
    gold: Option<&GoldReference>,
) -> VariantRuns {
    let results: Vec<(u64, std::result::Result<RunMetrics, String>)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut ecfg = EngineConfig::from_run_config(cfg);
            ecfg.seed = seed;
            let run = engine::run(model, data, ecfg);
            let outcome = match run {
                Ok(result) => {
                    let mut metrics = result.metrics.clone();
                    metrics.mse = gold.map(|g| mse_vs_gold(&result, g));
                    Ok(metrics)
                }
                Err(e) => Err(e.to_string()),
            };
            (seed, outcome)
        })
        .collect();
    let mut metrics = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in results {
        match outcome {
            Ok(m) => metrics.push(m),
            Err(e) => failures.push((seed, e)),
        }
    }
    VariantRuns {
        cfg: cfg.clone(),
        metrics,
        failures,
    }
}

/// One row of the benchmark table (method, switching policy, default kernel,
/// r, mean targets, mean repeats and the three relative-efficiency scores).
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub test_kalt: String,
    pub kdef: String,
    pub r: f64,
    pub targets: f64,
    pub r_mean: f64,
    pub releff_mse: f64,
    pub releff_pfc: f64,
    pub releff: f64,
    pub failures: usize,
}

/// Aggregate each variant against the base variant (the first entry).
pub fn bench_table(variants: &[VariantRuns]) -> Result<Vec<BenchRow>> {
    let base = variants
        .first()
        .ok_or_else(|| Error::invalid("bench table needs at least one variant"))?;
    variants
        .iter()
        .map(|v| {
            let scores = score_runs(&v.metrics, &base.metrics)?;
            Ok(BenchRow {
                method: v.cfg.mode.to_string(),
                test_kalt: v.cfg.switch_policy.to_string(),
                kdef: v.cfg.default_kernel.to_string(),
                r: v.cfg.r,
                targets: v.mean_targets(),
                r_mean: v.mean_repeats(),
                releff_mse: scores.releff_mse,
                releff_pfc: scores.releff_pfc,
                releff: scores.releff,
                failures: v.failures.len(),
            })
        })
        .collect()
}

pub fn write_table_csv(path: &std::path::Path, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method",
        "test_kalt",
        "kdef",
        "r",
        "targets",
        "r_mean",
        "releff_mse",
        "releff_pfc",
        "releff",
        "failures",
    ])?;
    for row in rows {
        w.write_record([
            row.method.clone(),
            row.test_kalt.clone(),
            row.kdef.clone(),
            row.r.to_string(),
            row.targets.to_string(),
            row.r_mean.to_string(),
            row.releff_mse.to_string(),
            row.releff_pfc.to_string(),
            row.releff.to_string(),
            row.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Posterior sample as CSV: one theta column per parameter plus a weight
/// column.
pub fn write_posterior_csv(path: &std::path::Path, result: &RunResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = result.param_names.clone();
    header.push("weight".to_string());
    w.write_record(&header)?;
    for (theta, weight) in &result.sample {
        let mut row: Vec<String> = theta.values.iter().map(|v| v.to_string()).collect();
        row.push(weight.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Single-run metrics CSV row (Table-1 column semantics; wall time excluded
/// so seeded outputs are byte-reproducible).
pub fn write_metrics_csv(
    path: &std::path::Path,
    cfg: &RunConfig,
    metrics: &RunMetrics,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method",
        "test_kalt",
        "kdef",
        "r",
        "seed",
        "targets",
        "r_mean",
        "mse",
        "pfc",
        "log_evidence",
    ])?;
    w.write_record([
        cfg.mode.to_string(),
        cfg.switch_policy.to_string(),
        cfg.default_kernel.to_string(),
        cfg.r.to_string(),
        metrics.seed.to_string(),
        metrics.targets.to_string(),
        metrics.mean_repeats.to_string(),
        metrics.mse.map_or(String::new(), |m| m.to_string()),
        metrics.pfc.to_string(),
        metrics.log_evidence.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

/// Per-iteration diagnostics CSV (iteration, position, kernel chosen, scores,
/// remaining repeats, ESS).
pub fn write_diagnostics_csv(path: &std::path::Path, diags: &[IterationDiag]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "iteration",
        "position",
        "ess",
        "resampled",
        "tested_alternate",
        "kernel",
        "score_def",
        "score_alt",
        "r_rem",
        "repeats_total",
        "switch_aborts",
    ])?;
    for d in diags {
        w.write_record([
            d.iteration.to_string(),
            d.position.to_string(),
            d.ess.to_string(),
            d.resampled.to_string(),
            d.tested_alternate.to_string(),
            d.chosen_kernel.clone().unwrap_or_default(),
            d.score_def.map_or(String::new(), |v| v.to_string()),
            d.score_alt.map_or(String::new(), |v| v.to_string()),
            d.r_rem.map_or(String::new(), |v| v.to_string()),
            d.repeats_total.map_or(String::new(), |v| v.to_string()),
            d.switch_aborts.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Convenience constructor used by the CLI: build the model a run config
/// refers to, resolving data-dependent options.
pub fn model_from_config(cfg: &RunConfig, data: &TimeSeries) -> Result<Box<dyn Model>> {
    let kind: ModelKind = cfg.model.parse()?;
    let mut opts = ModelOptions::default();
    if let Some(y0) = cfg.y0 {
        opts.y0 = y0;
    }
    if let Some(z) = &data.covariates {
        opts.d_beta = z.first().map_or(opts.d_beta, Vec::len);
    } else if let Some(d_beta) = cfg.d_beta {
        opts.d_beta = d_beta;
    }
    if kind == ModelKind::Ar1 && data.covariates.is_none() && !data.is_empty() {
        return Err(Error::invalid(
            "the AR(1) model requires covariate columns z1..zk in the data file",
        ));
    }
    Ok(build_model(kind, &opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_data, BmModel};
    use crate::rng::substream;
    use crate::stats::mean_se;

    fn metrics(mse: f64, pfc: u64) -> RunMetrics {
        RunMetrics {
            mse: Some(mse),
            pfc,
            targets: 1,
            mean_repeats: 1.0,
            log_evidence: 0.0,
            wall_time_s: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn kalman_one_step_closed_form() {
        // T = 1: y_1 ~ N(x0 + beta - gamma^2/2, gamma^2 + sigma^2)
        let theta = ParamVector::new(vec![1.0, 1.2, 1.5, 1.0]);
        let y = [0.4];
        let trace = kalman_filter_bm(&theta, &y);
        let mean = 1.0 + 1.2 - 0.5 * 1.5 * 1.5;
        let var: f64 = 1.5 * 1.5 + 1.0;
        let expect = crate::dist::ln_normal(0.4, mean, var.sqrt());
        assert!((trace.log_likelihood - expect).abs() < 1e-12);
    }

    #[test]
    fn kalman_loglik_decreases_for_huge_observation_noise() {
        let model = BmModel::new();
        let theta = model.reference_params();
        let (data, _) = simulate_data(&model, &theta, 30, &mut substream(44, &[500]));
        let ll_at = |sigma: f64| {
            let th = ParamVector::new(vec![1.0, 1.2, 1.5, sigma]);
            kalman_filter_bm(&th, &data.y).log_likelihood
        };
        assert!(ll_at(1e4) < ll_at(1.0));
        assert!(ll_at(1e8) < ll_at(1e4));
    }

    #[test]
    fn non_bm_model_is_rejected() {
        let theta = ParamVector::new(vec![0.5, 1.0, 0.0, 0.1]);
        assert!(kalman_loglik(ModelKind::Svm, &theta, &[0.1]).is_err());
        assert!(kalman_loglik(ModelKind::Bm, &theta, &[0.1]).is_ok());
    }

    #[test]
    fn particle_filter_agrees_with_kalman_in_expectation() {
        let model = BmModel::new();
        let theta = model.reference_params();
        let (data, _) = simulate_data(&model, &theta, 5, &mut substream(45, &[501]));
        let exact = kalman_filter_bm(&theta, &data.y).log_likelihood;
        let reps = 400;
        let ratios: Vec<f64> = (0..reps)
            .map(|r| {
                let mut rng = substream(46, &[502, r]);
                let out =
                    crate::filter::bootstrap_pf(&model, &theta, &data, 5, 20, 1.0, &mut rng)
                        .unwrap();
                (out.log_likelihood - exact).exp()
            })
            .collect();
        let (mean, se) = mean_se(&ratios);
        assert!(
            (mean - 1.0).abs() < 3.0 * se,
            "normalized estimator mean {mean} +/- {se}"
        );
    }

    #[test]
    fn smoother_tracks_data_when_observation_noise_is_small() {
        let theta = ParamVector::new(vec![0.0, 0.5, 1.0, 0.01]);
        let y = [0.3, 0.9, 1.4, 2.2];
        let smoothed = kalman_smoother_bm(&theta, &y);
        for (s, yt) in smoothed.iter().zip(&y) {
            assert!((s - yt).abs() < 0.01, "{s} vs {yt}");
        }
    }

    #[test]
    fn score_runs_fixtures() {
        let base = vec![metrics(2.0, 100), metrics(4.0, 300)];
        // identical method scores 1 everywhere
        let s = score_runs(&base, &base).unwrap();
        assert_eq!((s.releff_mse, s.releff_pfc, s.releff), (1.0, 1.0, 1.0));

        // halved PFC at equal MSE: RelEff_PFC = 2 and RelEff = 2
        let method = vec![metrics(2.0, 50), metrics(4.0, 150)];
        let s = score_runs(&method, &base).unwrap();
        assert_eq!(s.releff_mse, 1.0);
        assert_eq!(s.releff_pfc, 2.0);
        assert_eq!(s.releff, 2.0);

        // hand-computed two-replicate fixture
        let a = vec![metrics(1.0, 10), metrics(3.0, 20)];
        let b = vec![metrics(2.0, 40), metrics(2.0, 10)];
        let s = score_runs(&a, &b).unwrap();
        // Eff_a = (10 + 60)/2 = 35, Eff_b = (80 + 20)/2 = 50
        assert!((s.releff - 50.0 / 35.0).abs() < 1e-12);
        assert!((s.releff_mse - 2.0 / 2.0).abs() < 1e-12);
        assert!((s.releff_pfc - 25.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_locates_the_posterior() {
        let model = BmModel::new();
        let truth = model.reference_params();
        let (data, _) = simulate_data(&model, &truth, 40, &mut substream(47, &[503]));
        let quad = bm_posterior_quadrature(&data.y, &truth, (1, 3), 100);
        assert!(quad.log_evidence.is_finite());
        // beta and sigma posterior means should land within a few posterior
        // sds of the truth on a 40-point series
        assert!((quad.post_mean.0 - 1.2).abs() < 5.0 * quad.post_sd.0);
        assert!((quad.post_mean.1 - 1.0).abs() < 5.0 * quad.post_sd.1);
        assert_eq!(quad.smoothed_means.len(), 40);
        let total: f64 = quad.marginal1.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mse_of_gold_against_itself_is_zero() {
        let gold = GoldReference {
            model: "bm".into(),
            param_names: vec!["a".into(), "b".into()],
            posterior_mean: vec![1.5, -0.5],
            posterior_se: vec![0.01, 0.01],
            chain_length: 10_000,
            burn_in: 2000,
            nx: 16,
            seed: 1,
        };
        let result = RunResult {
            param_names: gold.param_names.clone(),
            sample: vec![(ParamVector::new(vec![1.5, -0.5]), 1.0)],
            metrics: metrics(0.0, 0),
            diagnostics: vec![],
        };
        assert_eq!(mse_vs_gold(&result, &gold), 0.0);
    }

    #[test]
    fn ks_distance_of_matching_distributions_is_small() {
        // empirical sample drawn from the same discrete grid distribution
        let grid: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let probs = vec![0.02; 50];
        let mut rng = substream(48, &[504]);
        let samples: Vec<f64> = crate::filter::multinomial_resample(&probs, 20_000, &mut rng)
            .into_iter()
            .map(|i| grid[i])
            .collect();
        assert!(ks_distance(&samples, &grid, &probs) < 0.02);
    }
}
