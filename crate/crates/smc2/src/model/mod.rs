//! State space model interface and the four built-in benchmark models.
//!
//! A model supplies its prior, initial/transition/observation densities and
//! samplers, and the gradient of the blocked path target used by the MALA
//! updates inside particle Gibbs. All latent states are scalar.

use crate::error::{Error, Result};
use crate::transform::{self, Transform};
use rand::RngCore;
use serde::{Deserialize, Serialize};

mod ar1;
mod bm;
mod flexallee;
mod svm;

pub use ar1::Ar1Model;
pub use bm::BmModel;
pub use flexallee::FlexAlleeModel;
pub use svm::SvmModel;

/// A parameter vector in the natural (constrained) space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Static description of a model's parameter space.
///
/// Block 1 holds exactly the parameters entering the latent dynamics
/// (initial and transition densities); block 2 holds the rest, including
/// observation-only parameters.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub param_names: Vec<String>,
    pub transforms: Vec<Transform>,
    pub block1: Vec<usize>,
    pub block2: Vec<usize>,
    pub state_dim: usize,
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        self.param_names.len()
    }

    pub fn block(&self, which: usize) -> &[usize] {
        match which {
            1 => &self.block1,
            2 => &self.block2,
            _ => panic!("block index must be 1 or 2"),
        }
    }
}

/// Observations y_{1:T} plus optional per-step covariate vectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    pub y: Vec<f64>,
    pub covariates: Option<Vec<Vec<f64>>>,
}

impl TimeSeries {
    pub fn from_observations(y: Vec<f64>) -> Self {
        Self {
            y,
            covariates: None,
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Covariate row for 1-based time index t.
    pub fn covariate(&self, t: usize) -> Option<&[f64]> {
        self.covariates.as_ref().map(|z| z[t - 1].as_slice())
    }

    /// Read a CSV file with a header row. The observation column is named
    /// `y`; covariate columns are `z1..zk`. Other columns are ignored.
    pub fn read_csv(path: &std::path::Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let y_col = headers
            .iter()
            .position(|h| h == "y")
            .ok_or_else(|| Error::invalid("data file has no `y` column"))?;
        let mut z_cols: Vec<(usize, usize)> = headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| {
                h.strip_prefix('z')
                    .and_then(|s| s.parse::<usize>().ok())
                    .map(|k| (k, i))
            })
            .collect();
        z_cols.sort_unstable();
        let mut y = Vec::new();
        let mut covs: Vec<Vec<f64>> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let parse = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .ok_or_else(|| Error::invalid("short CSV record"))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("malformed CSV value: {e}")))
            };
            y.push(parse(y_col)?);
            if !z_cols.is_empty() {
                let row: Result<Vec<f64>> = z_cols.iter().map(|&(_, i)| parse(i)).collect();
                covs.push(row?);
            }
        }
        Ok(Self {
            y,
            covariates: if z_cols.is_empty() { None } else { Some(covs) },
        })
    }

    /// Write observations (and covariates, and optionally the latent truth)
    /// as CSV with a header row.
    pub fn write_csv(&self, path: &std::path::Path, latent: Option<&[f64]>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let n_cov = self.covariates.as_ref().map_or(0, |z| z.first().map_or(0, Vec::len));
        let mut header = vec!["y".to_string()];
        for k in 1..=n_cov {
            header.push(format!("z{k}"));
        }
        if latent.is_some() {
            header.push("x_true".to_string());
        }
        writer.write_record(&header)?;
        for t in 0..self.y.len() {
            let mut row = vec![self.y[t].to_string()];
            if let Some(z) = &self.covariates {
                for v in &z[t] {
                    row.push(v.to_string());
                }
            }
            if let Some(x) = latent {
                row.push(x[t].to_string());
            }
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// The state space model interface. All methods are pure functions of their
/// arguments and are safe to call concurrently.
pub trait Model: Send + Sync {
    fn spec(&self) -> &ModelSpec;

    /// Per-parameter log prior terms (priors are independent across
    /// parameters in all built-in models). -inf marks a violated constraint.
    fn log_prior_components(&self, theta: &ParamVector) -> Vec<f64>;

    fn log_prior(&self, theta: &ParamVector) -> f64 {
        self.log_prior_components(theta).iter().sum()
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> ParamVector;

    /// Density of the initial state x_1.
    fn log_init(&self, theta: &ParamVector, x1: f64) -> f64;
    fn sample_init(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> f64;

    /// Transition density f(x_t | x_{t-1}, theta), t >= 2.
    fn log_transition(&self, theta: &ParamVector, x_prev: f64, x: f64, t: usize) -> f64;
    fn sample_transition(
        &self,
        theta: &ParamVector,
        x_prev: f64,
        t: usize,
        rng: &mut dyn RngCore,
    ) -> f64;

    /// Observation density g(y_t | x_t, theta). Models that condition on the
    /// lagged observation or on covariates read them from `data` at index t.
    fn log_observation(&self, theta: &ParamVector, x: f64, data: &TimeSeries, t: usize) -> f64;
    fn sample_observation(
        &self,
        theta: &ParamVector,
        x: f64,
        data: &TimeSeries,
        t: usize,
        rng: &mut dyn RngCore,
    ) -> f64;

    /// Covariates drawn by `simulate_data` when the model requires them.
    fn simulate_covariates(&self, _t_max: usize, _rng: &mut dyn RngCore) -> Option<Vec<Vec<f64>>> {
        None
    }

    /// Natural-space gradient of
    /// log p(theta) + log p(x_{1:n} | theta) + temper * log p(y_{1:n} | x, theta)
    /// with respect to theta, for the stored path. Returns `None` when no
    /// closed form is available (a finite-difference fallback is used).
    fn grad_constrained_target(
        &self,
        theta: &ParamVector,
        path: &[f64],
        data: &TimeSeries,
        temper: f64,
    ) -> Option<Vec<f64>>;

    /// The true parameter values used to generate synthetic data.
    fn reference_params(&self) -> ParamVector;
}

/// log p(theta) + log p(x_{1:n}|theta) + temper * log p(y_{1:n}|x,theta),
/// evaluated in the natural space (no Jacobian terms).
pub fn log_path_target(
    model: &dyn Model,
    theta: &ParamVector,
    path: &[f64],
    data: &TimeSeries,
    temper: f64,
) -> f64 {
    let mut lp = model.log_prior(theta);
    if !lp.is_finite() {
        return f64::NEG_INFINITY;
    }
    if !path.is_empty() {
        lp += model.log_init(theta, path[0]);
        for t in 2..=path.len() {
            lp += model.log_transition(theta, path[t - 2], path[t - 1], t);
        }
        if temper != 0.0 {
            for t in 1..=path.len() {
                lp += temper * model.log_observation(theta, path[t - 1], data, t);
            }
        }
    }
    lp
}

/// Same target expressed in unconstrained coordinates, including the
/// log-Jacobian of the transform.
pub fn log_path_target_unconstrained(
    model: &dyn Model,
    u: &[f64],
    path: &[f64],
    data: &TimeSeries,
    temper: f64,
) -> f64 {
    let transforms = &model.spec().transforms;
    let theta = ParamVector::new(transform::from_unconstrained(u, transforms));
    let base = log_path_target(model, &theta, path, data, temper);
    if !base.is_finite() {
        return f64::NEG_INFINITY;
    }
    base + transform::log_jacobian_sum(&theta.values, transforms)
}

/// Gradient of the unconstrained path target restricted to one parameter
/// block. Uses the model's analytic gradient when available and central
/// finite differences otherwise.
pub fn grad_block_log_target(
    model: &dyn Model,
    theta: &ParamVector,
    path: &[f64],
    data: &TimeSeries,
    temper: f64,
    block: usize,
) -> Result<Vec<f64>> {
    let spec = model.spec();
    let value = log_path_target(model, theta, path, data, temper);
    if !value.is_finite() {
        return Err(Error::degenerate(
            "path target is not finite at theta; cannot differentiate",
        ));
    }
    let block_idx = spec.block(block);
    if let Some(grad_c) = model.grad_constrained_target(theta, path, data, temper) {
        let mut out = Vec::with_capacity(block_idx.len());
        for &j in block_idx {
            let tr = spec.transforms[j];
            let g = grad_c[j] * tr.dtheta_du(theta[j]) + tr.dlog_jacobian_du(theta[j]);
            out.push(g);
        }
        Ok(out)
    } else {
        let u = transform::to_unconstrained(&theta.values, &spec.transforms)?;
        Ok(fd_grad_unconstrained(model, &u, path, data, temper, block_idx))
    }
}

/// Central finite differences of the unconstrained target over the given
/// coordinates.
pub fn fd_grad_unconstrained(
    model: &dyn Model,
    u: &[f64],
    path: &[f64],
    data: &TimeSeries,
    temper: f64,
    coords: &[usize],
) -> Vec<f64> {
    let h = 1e-6;
    let mut out = Vec::with_capacity(coords.len());
    let mut work = u.to_vec();
    for &j in coords {
        let u0 = work[j];
        work[j] = u0 + h;
        let fp = log_path_target_unconstrained(model, &work, path, data, temper);
        work[j] = u0 - h;
        let fm = log_path_target_unconstrained(model, &work, path, data, temper);
        work[j] = u0;
        out.push((fp - fm) / (2.0 * h));
    }
    out
}

/// Ancestral sampling of a synthetic series of length `t_max`, returning the
/// observations (with covariates where the model uses them) and the latent
/// truth.
pub fn simulate_data(
    model: &dyn Model,
    theta: &ParamVector,
    t_max: usize,
    rng: &mut dyn RngCore,
) -> (TimeSeries, Vec<f64>) {
    let covariates = model.simulate_covariates(t_max, rng);
    let mut data = TimeSeries {
        y: Vec::with_capacity(t_max),
        covariates,
    };
    let mut latent = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let x = if t == 1 {
            model.sample_init(theta, rng)
        } else {
            model.sample_transition(theta, latent[t - 2], t, rng)
        };
        let y = model.sample_observation(theta, x, &data, t, rng);
        latent.push(x);
        data.y.push(y);
    }
    (data, latent)
}

/// A model with a subset of its parameters pinned to fixed values. The free
/// parameters keep their priors, transforms and block membership.
pub struct RestrictedModel<M: Model> {
    inner: M,
    fixed: Vec<Option<f64>>,
    free_idx: Vec<usize>,
    spec: ModelSpec,
}

impl<M: Model> RestrictedModel<M> {
    /// `fixed[j] = Some(v)` pins inner parameter j at v.
    pub fn new(inner: M, fixed: Vec<Option<f64>>) -> Self {
        let inner_spec = inner.spec();
        assert_eq!(fixed.len(), inner_spec.dim());
        let free_idx: Vec<usize> = (0..fixed.len()).filter(|&j| fixed[j].is_none()).collect();
        assert!(!free_idx.is_empty(), "restricted model needs a free parameter");
        let pos_of = |j: usize| free_idx.iter().position(|&k| k == j);
        let spec = ModelSpec {
            param_names: free_idx
                .iter()
                .map(|&j| inner_spec.param_names[j].clone())
                .collect(),
            transforms: free_idx.iter().map(|&j| inner_spec.transforms[j]).collect(),
            block1: inner_spec.block1.iter().filter_map(|&j| pos_of(j)).collect(),
            block2: inner_spec.block2.iter().filter_map(|&j| pos_of(j)).collect(),
            state_dim: inner_spec.state_dim,
        };
        Self {
            inner,
            fixed,
            free_idx,
            spec,
        }
    }

    pub fn expand(&self, theta: &ParamVector) -> ParamVector {
        let mut full = Vec::with_capacity(self.fixed.len());
        let mut it = theta.values.iter();
        for f in &self.fixed {
            match f {
                Some(v) => full.push(*v),
                None => full.push(*it.next().expect("free parameter count mismatch")),
            }
        }
        ParamVector::new(full)
    }

    fn select(&self, full: &[f64]) -> Vec<f64> {
        self.free_idx.iter().map(|&j| full[j]).collect()
    }
}

impl<M: Model> Model for RestrictedModel<M> {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn log_prior_components(&self, theta: &ParamVector) -> Vec<f64> {
        let full = self.expand(theta);
        self.select(&self.inner.log_prior_components(&full))
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> ParamVector {
        let full = self.inner.sample_prior(rng);
        ParamVector::new(self.select(&full.values))
    }

    fn log_init(&self, theta: &ParamVector, x1: f64) -> f64 {
        self.inner.log_init(&self.expand(theta), x1)
    }

    fn sample_init(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> f64 {
        self.inner.sample_init(&self.expand(theta), rng)
    }

    fn log_transition(&self, theta: &ParamVector, x_prev: f64, x: f64, t: usize) -> f64 {
        self.inner.log_transition(&self.expand(theta), x_prev, x, t)
    }

    fn sample_transition(
        &self,
        theta: &ParamVector,
        x_prev: f64,
        t: usize,
        rng: &mut dyn RngCore,
    ) -> f64 {
        self.inner
            .sample_transition(&self.expand(theta), x_prev, t, rng)
    }

    fn log_observation(&self, theta: &ParamVector, x: f64, data: &TimeSeries, t: usize) -> f64 {
        self.inner.log_observation(&self.expand(theta), x, data, t)
    }

    fn sample_observation(
        &self,
        theta: &ParamVector,
        x: f64,
        data: &TimeSeries,
        t: usize,
        rng: &mut dyn RngCore,
    ) -> f64 {
        self.inner
            .sample_observation(&self.expand(theta), x, data, t, rng)
    }

    fn simulate_covariates(&self, t_max: usize, rng: &mut dyn RngCore) -> Option<Vec<Vec<f64>>> {
        self.inner.simulate_covariates(t_max, rng)
    }

    fn grad_constrained_target(
        &self,
        theta: &ParamVector,
        path: &[f64],
        data: &TimeSeries,
        temper: f64,
    ) -> Option<Vec<f64>> {
        let full = self.expand(theta);
        self.inner
            .grad_constrained_target(&full, path, data, temper)
            .map(|g| self.select(&g))
    }

    fn reference_params(&self) -> ParamVector {
        let full = self.inner.reference_params();
        ParamVector::new(self.select(&full.values))
    }
}

/// Which built-in model to construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Bm,
    Allee,
    Svm,
    Ar1,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bm" => Ok(ModelKind::Bm),
            "allee" => Ok(ModelKind::Allee),
            "svm" => Ok(ModelKind::Svm),
            "ar1" => Ok(ModelKind::Ar1),
            other => Err(Error::invalid(format!(
                "unknown model `{other}` (expected bm|allee|svm|ar1)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::Bm => "bm",
            ModelKind::Allee => "allee",
            ModelKind::Svm => "svm",
            ModelKind::Ar1 => "ar1",
        };
        f.write_str(s)
    }
}

/// Model construction options not covered by the data itself.
#[derive(Debug, Clone)]
pub struct ModelOptions {
    /// Covariate dimension for the AR(1) model.
    pub d_beta: usize,
    /// Lagged observation used at t = 1 by the SV-in-mean model.
    pub y0: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self { d_beta: 20, y0: 0.0 }
    }
}

pub fn build_model(kind: ModelKind, opts: &ModelOptions) -> Box<dyn Model> {
    match kind {
        ModelKind::Bm => Box::new(BmModel::new()),
        ModelKind::Allee => Box::new(FlexAlleeModel::new()),
        ModelKind::Svm => Box::new(SvmModel::new(opts.y0)),
        ModelKind::Ar1 => Box::new(Ar1Model::new(opts.d_beta)),
    }
}
