//! Acceptance suite. Each test prints one PASS line on success and asserts
//! the stated tolerance; run with `--nocapture` to see the lines.
//!
//! Shared desk-scale setting: Brownian motion model, T = 20 observations
//! simulated at the true parameters (1, 1.2, 1.5, 1).

use rayon::prelude::*;
use smc2::adapt::{lag_from_scores, psjd, remaining_repeats, SwitchPolicy};
use smc2::bench::{
    self, bm_posterior_quadrature, kalman_filter_bm, ks_distance, run_replicates,
};
use smc2::config::{Mode, RunConfig};
use smc2::engine::{self, solve_temper_increment, EngineConfig};
use smc2::filter::{backward_sample, bootstrap_pf};
use smc2::kernel::{
    adapt_stepsize, adapt_stepsize_pmmh, pg_step, pmmh_step, precompute_proposals, KernelKind,
    MutationStats, PgCtx, PmmhCtx, PmmhState,
};
use smc2::model::{simulate_data, BmModel, Model, ParamVector, RestrictedModel, TimeSeries};
use smc2::rng::substream;
use smc2::stats::{batch_means_se, ips_se, mean_se};
use smc2::switching::{switch_da, switch_dt, two_stage_pmmh_to_pg, Aux};

const DESK_T: usize = 20;
const DATA_SEED: u64 = 2004;

fn bm_desk_data() -> (BmModel, ParamVector, TimeSeries) {
    let model = BmModel::new();
    let truth = model.reference_params();
    let (data, _) = simulate_data(&model, &truth, DESK_T, &mut substream(DATA_SEED, &[1]));
    (model, truth, data)
}

/// beta and sigma free, x0 and gamma pinned at the truth.
fn restricted_beta_sigma(truth: &ParamVector) -> RestrictedModel<BmModel> {
    RestrictedModel::new(
        BmModel::new(),
        vec![Some(truth[0]), None, Some(truth[2]), None],
    )
}

/// Instance for the N_x = 10 chain-correctness criteria: at these parameters
/// the log-likelihood estimator variance at N_x = 10 is ~1.7, inside the
/// 1-to-3 band the PMMH tuning guidance prescribes. (At the benchmark truth
/// gamma = 1.5, sigma = 1 the variance is 4-30 and a 2e4-iteration
/// pseudo-marginal chain is not usable.)
fn chain_test_data() -> (ParamVector, TimeSeries) {
    let model = BmModel::new();
    let truth = ParamVector::new(vec![1.0, 1.2, 0.8, 2.0]);
    let (data, _) = simulate_data(&model, &truth, DESK_T, &mut substream(3001, &[1]));
    (truth, data)
}

fn run_config(mode: Mode, kernel: KernelKind, policy: SwitchPolicy, r: f64) -> RunConfig {
    RunConfig {
        model: "bm".into(),
        mode,
        default_kernel: kernel,
        n_theta: 100,
        nx_pmmh: 16,
        r,
        switch_policy: policy,
        seed: 0,
        data_path: None,
        k_mala: None,
        k_test: None,
        y0: None,
        d_beta: None,
    }
}

#[test]
fn criterion_01_filter_unbiasedness_against_kalman() {
    let (model, truth, data) = bm_desk_data();
    let exact = kalman_filter_bm(&truth, &data.y).log_likelihood;
    for nx in [10usize, 100] {
        let reps = 500;
        let ratios: Vec<f64> = (0..reps as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = substream(3001, &[nx as u64, r]);
                let out = bootstrap_pf(&model, &truth, &data, DESK_T, nx, 1.0, &mut rng).unwrap();
                (out.log_likelihood - exact).exp()
            })
            .collect();
        let (mean, se) = mean_se(&ratios);
        assert!(
            (mean - 1.0).abs() < 3.0 * se,
            "N_x = {nx}: normalized likelihood mean {mean} is outside 1 +/- {}",
            3.0 * se
        );
        println!(
            "ACCEPTANCE 1 PASS (N_x = {nx}): mean p_hat/p = {mean:.4} within 3 SE = {:.4}",
            3.0 * se
        );
    }
}

struct ChainSummary {
    theta_mean: Vec<f64>,
    theta_se: Vec<f64>,
    state_mean: Vec<f64>,
    state_se: Vec<f64>,
    theta_chain: Vec<Vec<f64>>,
}

/// PG chain on the restricted (beta, sigma) model with block MALA; stepsizes
/// adapt during burn-in.
fn pg_chain(
    model: &RestrictedModel<BmModel>,
    data: &TimeSeries,
    sweeps: usize,
    nx: usize,
    proposal_sd: (f64, f64),
    seed: u64,
) -> ChainSummary {
    let spec = model.spec();
    let cov = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        proposal_sd.0 * proposal_sd.0,
        proposal_sd.1 * proposal_sd.1,
    ]));
    let proposal = precompute_proposals(&cov, spec).unwrap();
    let mut rng = substream(seed, &[11]);
    let mut theta = model.reference_params();
    let out = bootstrap_pf(model, &theta, data, data.len(), nx, 1.0, &mut rng).unwrap();
    let mut path = backward_sample(&out, model, &theta, data, &mut rng).unwrap();
    let ctx = PgCtx {
        n_obs: data.len(),
        nx,
        temper: 1.0,
        k_mala: 5,
    };
    let burn = sweeps / 5;
    let mut eps = (0.5f64, 0.5f64);
    let mut window = [MutationStats::default(); 2];
    let mut theta_chain = Vec::with_capacity(sweeps - burn);
    let mut state_chain: Vec<Vec<f64>> = Vec::with_capacity(sweeps - burn);
    for it in 0..sweeps {
        let (stats, _) = pg_step(
            model,
            data,
            &ctx,
            &mut theta,
            &mut path,
            proposal.block1.as_ref(),
            proposal.block2.as_ref(),
            eps,
            &mut rng,
        )
        .unwrap();
        window[0].merge(stats[0]);
        window[1].merge(stats[1]);
        if it < burn && window[0].proposals >= 500 {
            if let Some(ar) = window[0].rate() {
                eps.0 = adapt_stepsize(eps.0, ar, smc2::kernel::PG_TARGET_AR);
            }
            if let Some(ar) = window[1].rate() {
                eps.1 = adapt_stepsize(eps.1, ar, smc2::kernel::PG_TARGET_AR);
            }
            window = [MutationStats::default(); 2];
        }
        if it >= burn {
            theta_chain.push(theta.values.clone());
            state_chain.push(path.states.clone());
        }
    }
    summarize(theta_chain, state_chain, 20)
}

/// PMMH chain on the restricted model.
fn pmmh_chain(
    model: &RestrictedModel<BmModel>,
    data: &TimeSeries,
    iters: usize,
    nx: usize,
    proposal_sd: (f64, f64),
    start: Option<(f64, f64)>,
    seed: u64,
) -> ChainSummary {
    let spec = model.spec();
    let cov = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        proposal_sd.0 * proposal_sd.0,
        proposal_sd.1 * proposal_sd.1,
    ]));
    let proposal = precompute_proposals(&cov, spec).unwrap();
    let mut rng = substream(seed, &[13]);
    let mut theta = match start {
        Some((b, s)) => ParamVector::new(vec![b, s]),
        None => model.reference_params(),
    };
    let out = bootstrap_pf(model, &theta, data, data.len(), nx, 1.0, &mut rng).unwrap();
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
    let burn = iters / 5;
    let mut eps = 1.0f64;
    let mut window = MutationStats::default();
    let mut theta_chain = Vec::with_capacity(iters - burn);
    for it in 0..iters {
        let (accepted, _) = pmmh_step(
            model, data, &ctx, &mut theta, &mut state, &proposal, eps, &mut rng,
        )
        .unwrap();
        window.record(accepted);
        if it < burn && window.proposals >= 500 {
            if let Some(ar) = window.rate() {
                eps = adapt_stepsize_pmmh(eps, ar);
            }
            window = MutationStats::default();
        }
        if it >= burn {
            theta_chain.push(theta.values.clone());
        }
    }
    summarize(theta_chain, Vec::new(), 10)
}

fn summarize(
    theta_chain: Vec<Vec<f64>>,
    state_chain: Vec<Vec<f64>>,
    n_batches: usize,
) -> ChainSummary {
    let dim = theta_chain[0].len();
    let theta_mean: Vec<f64> = (0..dim)
        .map(|j| theta_chain.iter().map(|s| s[j]).sum::<f64>() / theta_chain.len() as f64)
        .collect();
    let _ = n_batches;
    let theta_se: Vec<f64> = (0..dim)
        .map(|j| {
            let series: Vec<f64> = theta_chain.iter().map(|s| s[j]).collect();
            ips_se(&series, 4000)
        })
        .collect();
    let (state_mean, state_se) = if state_chain.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let t_max = state_chain[0].len();
        let mean: Vec<f64> = (0..t_max)
            .map(|t| state_chain.iter().map(|s| s[t]).sum::<f64>() / state_chain.len() as f64)
            .collect();
        let se: Vec<f64> = (0..t_max)
            .map(|t| {
                let series: Vec<f64> = state_chain.iter().map(|s| s[t]).collect();
                batch_means_se(&series, 20)
            })
            .collect();
        (mean, se)
    };
    ChainSummary {
        theta_mean,
        theta_se,
        state_mean,
        state_se,
        theta_chain,
    }
}

#[test]
fn criterion_02_pg_chain_matches_kalman_quadrature() {
    let (truth, data) = chain_test_data();
    let restricted = restricted_beta_sigma(&truth);
    let quad = bm_posterior_quadrature(&data.y, &truth, (1, 3), 160);
    let sd_beta = quad.post_sd.0;
    let sd_logsigma = quad.post_sd.1 / quad.post_mean.1;
    let chain = pg_chain(&restricted, &data, 20_000, 10, (sd_beta, sd_logsigma), 4001);

    for (label, mean, se, expect) in [
        ("beta", chain.theta_mean[0], chain.theta_se[0], quad.post_mean.0),
        ("sigma", chain.theta_mean[1], chain.theta_se[1], quad.post_mean.1),
    ] {
        assert!(
            (mean - expect).abs() < 3.0 * se,
            "PG {label} mean {mean} vs quadrature {expect} (3 SE = {})",
            3.0 * se
        );
    }
    for t in 0..DESK_T {
        let (m, se, expect) = (chain.state_mean[t], chain.state_se[t], quad.smoothed_means[t]);
        assert!(
            (m - expect).abs() < 3.0 * se,
            "PG smoothed state {t}: {m} vs {expect} (3 SE = {})",
            3.0 * se
        );
    }
    println!(
        "ACCEPTANCE 2 PASS: PG chain means ({:.4}, {:.4}) match quadrature ({:.4}, {:.4}); all {} smoothed states within 3 SE",
        chain.theta_mean[0], chain.theta_mean[1], quad.post_mean.0, quad.post_mean.1, DESK_T
    );
}

#[test]
fn criterion_03_pmmh_chain_matches_kalman_quadrature() {
    let (truth, data) = chain_test_data();
    let restricted = restricted_beta_sigma(&truth);
    let quad = bm_posterior_quadrature(&data.y, &truth, (1, 3), 160);
    let sd_beta = quad.post_sd.0;
    let sd_logsigma = quad.post_sd.1 / quad.post_mean.1;
    let chain = pmmh_chain(
        &restricted,
        &data,
        20_000,
        10,
        (sd_beta, sd_logsigma),
        Some(quad.post_mean),
        4003,
    );
    for (label, mean, se, expect) in [
        ("beta", chain.theta_mean[0], chain.theta_se[0], quad.post_mean.0),
        ("sigma", chain.theta_mean[1], chain.theta_se[1], quad.post_mean.1),
    ] {
        assert!(
            (mean - expect).abs() < 3.0 * se,
            "PMMH {label} mean {mean} vs quadrature {expect} (3 SE = {})",
            3.0 * se
        );
    }

    // detailed-balance smoke test on a 2-observation series: the empirical
    // marginals from a long chain match the quadrature marginals
    let model = BmModel::new();
    let (data2, _) = simulate_data(&model, &truth, 2, &mut substream(DATA_SEED, &[2]));
    let quad2 = bm_posterior_quadrature(&data2.y, &truth, (1, 3), 160);
    let restricted2 = restricted_beta_sigma(&truth);
    let chain2 = pmmh_chain(
        &restricted2,
        &data2,
        100_000,
        20,
        (quad2.post_sd.0, quad2.post_sd.1 / quad2.post_mean.1),
        Some(quad2.post_mean),
        4007,
    );
    let betas: Vec<f64> = chain2.theta_chain.iter().map(|s| s[0]).collect();
    let sigmas: Vec<f64> = chain2.theta_chain.iter().map(|s| s[1]).collect();
    let ks_beta = ks_distance(&betas, &quad2.grid1, &quad2.marginal1);
    let ks_sigma = ks_distance(&sigmas, &quad2.grid2, &quad2.marginal2);
    assert!(ks_beta < 0.02, "KS(beta) = {ks_beta}");
    assert!(ks_sigma < 0.02, "KS(sigma) = {ks_sigma}");
    println!(
        "ACCEPTANCE 3 PASS: PMMH chain means ({:.4}, {:.4}) match quadrature; KS = ({ks_beta:.4}, {ks_sigma:.4}) < 0.02",
        chain.theta_mean[0], chain.theta_mean[1]
    );
}

#[test]
fn criterion_04_switch_moves_preserve_weights_bit_exactly() {
    let (model, truth, data) = bm_desk_data();
    let d = DESK_T;
    let log_weight = -1.234567890123456789f64; // arbitrary, checked bitwise

    let make_pg = |seed: u64| -> Aux {
        let mut rng = substream(seed, &[21]);
        let out = bootstrap_pf(&model, &truth, &data, d, 8, 1.0, &mut rng).unwrap();
        Aux::Pg(backward_sample(&out, &model, &truth, &data, &mut rng).unwrap())
    };
    let make_pmmh = || -> Aux {
        Aux::Pmmh(PmmhState {
            loglik: -33.25,
            cloud: None,
        })
    };

    let mut cases: Vec<(&str, Aux, KernelKind)> = vec![
        ("DA PMMH->PG", make_pmmh(), KernelKind::Pg),
        ("DA PG->PMMH", make_pg(1), KernelKind::Pmmh),
        ("DA PMMH->PMMH", make_pmmh(), KernelKind::Pmmh),
        ("DA PG->PG", make_pg(2), KernelKind::Pg),
    ];
    for (label, aux, to) in &mut cases {
        let mut particle = engine::ThetaParticle {
            theta: truth.clone(),
            log_weight,
            aux: aux.clone(),
        };
        switch_da(
            &model, &data, d, &particle.theta, &mut particle.aux, *to, 8,
            &mut substream(31, &[22]),
        )
        .unwrap();
        assert_eq!(
            particle.log_weight.to_bits(),
            log_weight.to_bits(),
            "{label} changed the weight"
        );
    }

    let mut cases_dt: Vec<(&str, Aux, KernelKind)> = vec![
        ("DT PMMH->PG", make_pmmh(), KernelKind::Pg),
        ("DT PG->PMMH", make_pg(3), KernelKind::Pmmh),
        ("DT PMMH->PMMH", make_pmmh(), KernelKind::Pmmh),
        ("DT PG->PG", make_pg(4), KernelKind::Pg),
    ];
    for (label, aux, to) in &mut cases_dt {
        let mut particle = engine::ThetaParticle {
            theta: truth.clone(),
            log_weight,
            aux: aux.clone(),
        };
        switch_dt(
            &model, &data, 0.66, &particle.theta, &mut particle.aux, *to, 8,
            &mut substream(32, &[23]),
        )
        .unwrap();
        assert_eq!(
            particle.log_weight.to_bits(),
            log_weight.to_bits(),
            "{label} changed the weight"
        );
    }

    // two-stage move in both modes
    for (label, da_pos, g) in [("DA two-stage", Some(d), 1.0), ("DT two-stage", None, 0.4)] {
        let mut particle = engine::ThetaParticle {
            theta: truth.clone(),
            log_weight,
            aux: make_pmmh(),
        };
        two_stage_pmmh_to_pg(
            &model, &data, da_pos, g, &particle.theta, &mut particle.aux, 16, 4,
            &mut substream(33, &[24]),
        )
        .unwrap();
        assert_eq!(
            particle.log_weight.to_bits(),
            log_weight.to_bits(),
            "{label} changed the weight"
        );
    }
    println!("ACCEPTANCE 4 PASS: all 8 switch moves and the two-stage move leave log-weights bit-identical");
}

fn replicate_posterior_means(
    model: &dyn Model,
    data: &TimeSeries,
    cfg: &RunConfig,
    seeds: &[u64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let results: Vec<(Vec<f64>, f64)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut ecfg = EngineConfig::from_run_config(cfg);
            ecfg.seed = seed;
            let run = engine::run(model, data, ecfg).expect("run failed");
            (run.posterior_mean(), run.metrics.log_evidence)
        })
        .collect();
    let means = results.iter().map(|(m, _)| m.clone()).collect();
    let evidences = results.iter().map(|(_, e)| *e).collect();
    (means, evidences)
}

fn per_param_stats(means: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let dim = means[0].len();
    (0..dim)
        .map(|j| {
            let series: Vec<f64> = means.iter().map(|m| m[j]).collect();
            mean_se(&series)
        })
        .collect()
}

#[test]
fn criterion_05_forced_switching_leaves_posterior_unchanged() {
    // Round-trip switch invariance: every mutation event is forced through
    // PMMH -> PG -> PMMH (the two-stage route, since r < 1) with the
    // mutation completed by the default kernel in both arms, so any
    // distributional gap is attributable to the switch moves themselves.
    let (model, _, data) = bm_desk_data();
    let seeds: Vec<u64> = (0..50).map(|i| 5000 + i).collect();
    let mut cfg_never = run_config(Mode::Da, KernelKind::Pmmh, SwitchPolicy::Never, 0.5);
    cfg_never.nx_pmmh = 32;
    let mut cfg_always = run_config(Mode::Da, KernelKind::Pmmh, SwitchPolicy::Always, 0.5);
    cfg_always.nx_pmmh = 32;
    let run_arm = |cfg: &RunConfig, force_default: bool| -> Vec<Vec<f64>> {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut ecfg = EngineConfig::from_run_config(cfg);
                ecfg.seed = seed;
                if force_default {
                    ecfg.forced_winner = Some(cfg.default_kernel);
                }
                engine::run(&model, &data, ecfg).unwrap().posterior_mean()
            })
            .collect()
    };
    let means_never = run_arm(&cfg_never, false);
    let means_always = run_arm(&cfg_always, true);
    let stats_never = per_param_stats(&means_never);
    let stats_always = per_param_stats(&means_always);
    let names = model.spec().param_names.clone();
    for j in 0..names.len() {
        let (ma, sa) = stats_always[j];
        let (mn, sn) = stats_never[j];
        let combined = (sa * sa + sn * sn).sqrt();
        assert!(
            (ma - mn).abs() < 3.0 * combined,
            "{}: always {ma} vs never {mn}, combined 3 SE {}",
            names[j],
            3.0 * combined
        );
    }
    println!("ACCEPTANCE 5 PASS: forced every-iteration switching matches never-switching on all 4 posterior means (50 replicates)");
}

#[test]
fn criterion_06_da_and_dt_agree() {
    let (model, _, data) = bm_desk_data();
    // both modes run the never-switch PMMH default (the annealed-estimate
    // baseline for DT); N_theta = 200 keeps the finite-population biases of
    // the two sequences well under the replicate noise
    let seeds: Vec<u64> = (0..50).map(|i| 6000 + i).collect();
    let mut cfg_da = run_config(Mode::Da, KernelKind::Pmmh, SwitchPolicy::Never, 1.0);
    cfg_da.n_theta = 200;
    let mut cfg_dt = run_config(Mode::Dt, KernelKind::Pmmh, SwitchPolicy::Never, 1.0);
    cfg_dt.n_theta = 200;
    let (means_da, ev_da) = replicate_posterior_means(&model, &data, &cfg_da, &seeds);
    let (means_dt, ev_dt) = replicate_posterior_means(&model, &data, &cfg_dt, &seeds);
    let stats_da = per_param_stats(&means_da);
    let stats_dt = per_param_stats(&means_dt);
    let names = model.spec().param_names.clone();
    for j in 0..names.len() {
        let (ma, sa) = stats_da[j];
        let (mb, sb) = stats_dt[j];
        let combined = (sa * sa + sb * sb).sqrt();
        assert!(
            (ma - mb).abs() < 3.0 * combined,
            "{}: DA {ma} vs DT {mb}, combined 3 SE {}",
            names[j],
            3.0 * combined
        );
    }
    // evidence agreement on the natural scale (both estimators are unbiased
    // for p(y)); a shared shift keeps the exponentials in range
    let shift = ev_da
        .iter()
        .chain(&ev_dt)
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let za: Vec<f64> = ev_da.iter().map(|e| (e - shift).exp()).collect();
    let zb: Vec<f64> = ev_dt.iter().map(|e| (e - shift).exp()).collect();
    let (mza, sza) = mean_se(&za);
    let (mzb, szb) = mean_se(&zb);
    let combined = (sza * sza + szb * szb).sqrt();
    assert!(
        (mza - mzb).abs() < 3.0 * combined,
        "evidence: DA {mza} vs DT {mzb} (shifted), combined 3 SE {}",
        3.0 * combined
    );
    println!("ACCEPTANCE 6 PASS: DA and DT posterior means and evidence agree within combined 3 SE (50 replicates)");
}

#[test]
fn criterion_07_adaptation_arithmetic_fixtures() {
    // Per-parameter / joint SJD sum identity to 1e-10 on a random instance
    let mut rng = substream(7007, &[41]);
    use rand::Rng;
    let dim = 4;
    let before: Vec<Vec<f64>> = (0..30)
        .map(|_| (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
        .collect();
    let after: Vec<Vec<f64>> = (0..30)
        .map(|_| (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
        .collect();
    let a = nalgebra::DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() - 0.5);
    let sigma = &a * a.transpose() + nalgebra::DMatrix::identity(dim, dim) * 0.3;
    let eig = sigma.clone().symmetric_eigen();
    let mut inv_sqrt: nalgebra::DMatrix<f64> = nalgebra::DMatrix::zeros(dim, dim);
    let mut inv: nalgebra::DMatrix<f64> = nalgebra::DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let lam: f64 = eig.eigenvalues[k];
        for i in 0..dim {
            for j in 0..dim {
                let outer = eig.eigenvectors[(i, k)] * eig.eigenvectors[(j, k)];
                inv_sqrt[(i, j)] += outer / lam.sqrt();
                inv[(i, j)] += outer / lam;
            }
        }
    }
    let v = psjd(&before, &after, &inv_sqrt);
    let sum: f64 = v.iter().sum();
    let joint: f64 = before
        .iter()
        .zip(&after)
        .map(|(b, a)| {
            let d = nalgebra::DVector::from_fn(dim, |j, _| b[j] - a[j]);
            (d.transpose() * &inv * &d)[(0, 0)]
        })
        .sum::<f64>()
        / 30.0;
    assert!((sum - joint).abs() < 1e-10 * joint.max(1.0), "{sum} vs {joint}");

    // remaining-repeats fixture: ceil(6 / 0.4) = 15
    assert_eq!(remaining_repeats(10.0, &[2.0, 6.0], &[2.0, 5.0], 2.0, 5), 15);

    // stepsize rule fixtures: exp(0), exp(-2), exp(2) with the PMMH cap
    let e = 0.3;
    assert_eq!(adapt_stepsize(e, 0.574, 0.574), e);
    assert!((adapt_stepsize(e, 0.0, 0.574) - e * (-2.0f64).exp()).abs() < 1e-15);
    assert!((adapt_stepsize(e, 2.0 * 0.574, 0.574) - e * 2.0f64.exp()).abs() < 1e-12);
    assert_eq!(adapt_stepsize_pmmh(0.9, 2.0 * 0.07), 1.0);

    // lag fixture: score_def = 2, score_alt in (1, 2) -> tested after 2
    assert_eq!(lag_from_scores(2.0, 1.2), 2);
    assert_eq!(lag_from_scores(2.0, 1.9999), 2);

    println!("ACCEPTANCE 7 PASS: SJD identity, remaining-repeats, stepsize and lag fixtures are exact");
}

#[test]
fn criterion_08_tempering_adaptation() {
    // interior solutions hit |ESS - N/2| < 1
    let mut rng = substream(8008, &[43]);
    use rand::Rng;
    for trial in 0..10u64 {
        let n = 64;
        let lls: Vec<f64> = (0..n).map(|_| -8.0 * rng.random::<f64>()).collect();
        let w = vec![1.0 / n as f64; n];
        let target = n as f64 / 2.0;
        let delta = solve_temper_increment(&lls, &w, 1.0, target, 1.0);
        if delta < 1.0 {
            let lw: Vec<f64> = w.iter().zip(&lls).map(|(&w, &l)| w.ln() + delta * l).collect();
            let wn = smc2::stats::normalize_log_weights(&lw).unwrap();
            let ess = smc2::filter::ess(&wn).unwrap();
            assert!(
                (ess - target).abs() < 1.0,
                "trial {trial}: ESS {ess} vs target {target}"
            );
        }
    }

    // two-particle closed form to 1e-6: log-likelihoods (0, -1), solve
    // ESS(delta) = 1.5 with x = exp(-delta)
    let s = 1.5f64;
    let x = (1.0 - (1.0 - (s - 1.0) * (s - 1.0)).sqrt()) / (s - 1.0);
    let exact = -x.ln();
    let delta = solve_temper_increment(&[0.0, -1.0], &[0.5, 0.5], 10.0, s, 1e-12);
    assert!((delta - exact).abs() < 1e-6, "{delta} vs {exact}");
    println!("ACCEPTANCE 8 PASS: tempering bisection hits ESS targets; two-particle case matches the closed form to 1e-6");
}

#[test]
fn criterion_09_directional_table_reproduction() {
    let (model, _, data) = bm_desk_data();
    let seeds: Vec<u64> = (0..20).map(|i| 9000 + i).collect();

    // a quick gold reference for the MSE column (not used by the assertions)
    let gold = bench::run_gold(&model, "bm", &data, 10_000, 32, 77).unwrap();

    // DA / always / PMMH-default across the r grid
    let mut medians = Vec::new();
    let mut pmmh_targets = Vec::new();
    for &r in &[1.0, 0.5, 0.2, 0.05] {
        let mut cfg = run_config(Mode::Da, KernelKind::Pmmh, SwitchPolicy::Always, r);
        cfg.nx_pmmh = 32;
        let runs = run_replicates(&model, &data, &cfg, &seeds, Some(&gold));
        assert!(runs.failures.is_empty(), "failures at r = {r}: {:?}", runs.failures);
        medians.push((r, runs.median_pfc()));
        pmmh_targets.push(runs.mean_targets());
    }
    for pair in medians.windows(2) {
        assert!(
            pair[1].1 < pair[0].1,
            "median PFC not strictly decreasing: {medians:?}"
        );
    }

    // number of targets: PMMH default below PG default
    let mut cfg_pg = run_config(Mode::Da, KernelKind::Pg, SwitchPolicy::Always, 0.2);
    cfg_pg.nx_pmmh = 32;
    let runs_pg = run_replicates(&model, &data, &cfg_pg, &seeds, Some(&gold));
    assert!(runs_pg.failures.is_empty());
    let pg_targets = runs_pg.mean_targets();
    let pmmh_mean_targets = pmmh_targets.iter().sum::<f64>() / pmmh_targets.len() as f64;
    assert!(
        pmmh_mean_targets < pg_targets,
        "targets: PMMH default {pmmh_mean_targets} not below PG default {pg_targets}"
    );
    println!(
        "ACCEPTANCE 9 PASS: median PFC decreases {:?}; targets PMMH {:.1} < PG {:.1}",
        medians, pmmh_mean_targets, pg_targets
    );
}
