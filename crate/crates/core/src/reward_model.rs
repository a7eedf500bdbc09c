//! Bayesian logistic reward model with a diagonal Laplace posterior.
//!
//! The model scores a context `v` with `σ(θᵀv)`. The posterior over `θ` is a
//! product of independent Gaussians `N(m_j, v_j)`. After each round the new
//! mean is the minimizer of
//!
//! ```text
//!   ½ Σ_j (θ_j − m_j)² / v_j  +  Σ_obs log(1 + exp(−r θᵀx))      r ∈ {−1, +1}
//! ```
//!
//! found by damped Newton iterations (full Hessian, Cholesky solve, Armijo
//! backtracking), and the precisions accumulate `x_j² p (1 − p)` evaluated at
//! the new mean. Only the diagonal of the precision is retained.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::features::ContextVector;

pub const VARIANCE_FLOOR: f64 = 1e-10;
pub const POSTERIOR_FORMAT_VERSION: u32 = 1;

/// `1 / (1 + exp(−z))` without overflow for any finite `z`.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(−z))`, stable for large `|z|`.
#[inline]
pub fn log1p_exp_neg(z: f64) -> f64 {
    (-z).max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn expected_reward(theta: &[f64], v: &[f64]) -> Result<f64> {
    check_len(theta.len(), v.len())?;
    Ok(sigmoid(dot(theta, v)))
}

/// One labelled context. `reward` is the observed binary feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub context: Vec<f64>,
    pub reward: bool,
}

impl Observation {
    pub fn new(context: &ContextVector, reward: bool) -> Self {
        Self {
            context: context.as_slice().to_vec(),
            reward,
        }
    }

    fn sign(&self) -> f64 {
        if self.reward {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeedbackBatch {
    pub observations: Vec<Observation>,
}

impl FeedbackBatch {
    pub fn new(observations: Vec<Observation>) -> Self {
        Self { observations }
    }

    pub fn push(&mut self, context: &ContextVector, reward: bool) {
        self.observations.push(Observation::new(context, reward));
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        self.observations
            .iter()
            .try_for_each(|o| check_len(d, o.context.len()))
    }
}

/// Independent Gaussian posterior over the coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    mean: Vec<f64>,
    variance: Vec<f64>,
}

impl GaussianPosterior {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        check_len(mean.len(), variance.len())?;
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidValue("posterior mean must be finite".into()));
        }
        if variance.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidValue(
                "posterior variances must be finite and > 0".into(),
            ));
        }
        Ok(Self { mean, variance })
    }

    /// Standard-normal prior: `m_j = 0`, `v_j = 1`.
    pub fn standard(d: usize) -> Self {
        Self::isotropic(d, 1.0)
    }

    pub fn isotropic(d: usize, variance: f64) -> Self {
        Self {
            mean: vec![0.0; d],
            variance: vec![variance; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn precision(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.recip()).collect()
    }

    /// Draws `θ̂_j ~ N(m_j, v_j)` coordinate by coordinate, in index order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.variance)
            .map(|(m, v)| {
                let z: f64 = rng.sample(StandardNormal);
                m + v.sqrt() * z
            })
            .collect()
    }

    pub fn to_document(&self) -> PosteriorDocument {
        PosteriorDocument {
            version: POSTERIOR_FORMAT_VERSION,
            d: self.dim(),
            m: self.mean.clone(),
            v: self.variance.clone(),
        }
    }

    pub fn from_document(doc: &PosteriorDocument) -> Result<Self> {
        if doc.version != POSTERIOR_FORMAT_VERSION {
            return Err(Error::InvalidValue(format!(
                "unsupported posterior version {}",
                doc.version
            )));
        }
        check_len(doc.d, doc.m.len())?;
        Self::new(doc.m.clone(), doc.v.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("posterior serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }
}

/// Versioned checkpoint form of a [`GaussianPosterior`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDocument {
    pub version: u32,
    pub d: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn sample_params<R: Rng + ?Sized>(post: &GaussianPosterior, rng: &mut R) -> Vec<f64> {
    post.sample(rng)
}

/// Value and gradient of the penalized negative log-likelihood at `theta`.
pub fn penalized_objective(
    theta: &[f64],
    prior: &GaussianPosterior,
    batch: &FeedbackBatch,
) -> Result<(f64, Vec<f64>)> {
    let d = prior.dim();
    check_len(d, theta.len())?;
    batch.check_dim(d)?;
    Ok(objective_unchecked(theta, prior, batch))
}

fn objective_unchecked(
    theta: &[f64],
    prior: &GaussianPosterior,
    batch: &FeedbackBatch,
) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut grad = vec![0.0; theta.len()];
    for j in 0..theta.len() {
        let diff = theta[j] - prior.mean[j];
        value += 0.5 * diff * diff / prior.variance[j];
        grad[j] = diff / prior.variance[j];
    }
    for obs in &batch.observations {
        let r = obs.sign();
        let margin = r * dot(theta, &obs.context);
        value += log1p_exp_neg(margin);
        let coef = -r * sigmoid(-margin);
        for (g, x) in grad.iter_mut().zip(&obs.context) {
            *g += coef * x;
        }
    }
    (value, grad)
}

fn objective_value(theta: &[f64], prior: &GaussianPosterior, batch: &FeedbackBatch) -> f64 {
    let mut value = 0.0;
    for j in 0..theta.len() {
        let diff = theta[j] - prior.mean[j];
        value += 0.5 * diff * diff / prior.variance[j];
    }
    for obs in &batch.observations {
        value += log1p_exp_neg(obs.sign() * dot(theta, &obs.context));
    }
    value
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Settings for the posterior-mean solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub grad_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iterations: 100,
        }
    }
}

/// Laplace update: posterior mean by Newton minimization, then diagonal
/// precision accumulation at the new mean. An empty batch returns the prior.
pub fn update_posterior(prior: &GaussianPosterior, batch: &FeedbackBatch) -> Result<GaussianPosterior> {
    update_posterior_with(prior, batch, prior.mean(), SolverConfig::default())
}

/// As [`update_posterior`], starting the Newton iterations from `start`.
pub fn update_posterior_with(
    prior: &GaussianPosterior,
    batch: &FeedbackBatch,
    start: &[f64],
    config: SolverConfig,
) -> Result<GaussianPosterior> {
    let d = prior.dim();
    check_len(d, start.len())?;
    batch.check_dim(d)?;
    if batch.is_empty() {
        return Ok(prior.clone());
    }
    let mean = minimize(prior, batch, start.to_vec(), config)?;

    let mut precision = prior.precision();
    for obs in &batch.observations {
        let p = sigmoid(dot(&mean, &obs.context));
        let w = p * (1.0 - p);
        for (prec, x) in precision.iter_mut().zip(&obs.context) {
            *prec += x * x * w;
        }
    }
    let variance = precision
        .iter()
        .zip(&prior.variance)
        .map(|(prec, old)| prec.recip().min(*old).max(VARIANCE_FLOOR))
        .collect();
    Ok(GaussianPosterior { mean, variance })
}

fn minimize(
    prior: &GaussianPosterior,
    batch: &FeedbackBatch,
    mut theta: Vec<f64>,
    config: SolverConfig,
) -> Result<Vec<f64>> {
    let d = theta.len();
    let (mut value, mut grad) = objective_unchecked(&theta, prior, batch);
    let mut hessian = vec![0.0; d * d];
    let mut candidate = vec![0.0; d];

    for _ in 0..config.max_iterations {
        if inf_norm(&grad) <= config.grad_tol {
            return Ok(theta);
        }

        hessian.iter_mut().for_each(|h| *h = 0.0);
        for j in 0..d {
            hessian[j * d + j] = prior.variance[j].recip();
        }
        for obs in &batch.observations {
            let p = sigmoid(dot(&theta, &obs.context));
            let w = p * (1.0 - p);
            if w == 0.0 {
                continue;
            }
            let x = &obs.context;
            for a in 0..d {
                let wa = w * x[a];
                if wa == 0.0 {
                    continue;
                }
                let row = &mut hessian[a * d..a * d + a + 1];
                for (b, h) in row.iter_mut().enumerate() {
                    *h += wa * x[b];
                }
            }
        }
        let mut step: Vec<f64> = grad.iter().map(|g| -g).collect();
        cholesky_solve_lower(&mut hessian, d, &mut step);

        let slope = dot(&grad, &step);
        // Below this predicted decrease the objective cannot resolve progress
        // and only the gradient is a reliable guide.
        let resolvable = -slope > 1e-12 * value.abs().max(1.0);
        let mut accepted = false;
        if resolvable {
            let mut t = 1.0;
            while t >= 1e-10 {
                for j in 0..d {
                    candidate[j] = theta[j] + t * step[j];
                }
                let trial = objective_value(&candidate, prior, batch);
                if trial <= value + 1e-4 * t * slope {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
        }
        if !accepted {
            for j in 0..d {
                candidate[j] = theta[j] + step[j];
            }
            let (_, trial_grad) = objective_unchecked(&candidate, prior, batch);
            if inf_norm(&trial_grad) >= inf_norm(&grad) {
                return Err(Error::SolverFailure {
                    iterations: config.max_iterations,
                    grad_norm: inf_norm(&grad),
                });
            }
        }
        std::mem::swap(&mut theta, &mut candidate);
        let (v, g) = objective_unchecked(&theta, prior, batch);
        value = v;
        grad = g;
    }

    let grad_norm = inf_norm(&grad);
    if grad_norm <= config.grad_tol {
        Ok(theta)
    } else {
        Err(Error::SolverFailure {
            iterations: config.max_iterations,
            grad_norm,
        })
    }
}

/// Solves `A x = b` in place for symmetric positive definite `A`, reading only
/// the lower triangle (row-major, `n × n`). `A` is overwritten by its
/// Cholesky factor.
fn cholesky_solve_lower(a: &mut [f64], n: usize, b: &mut [f64]) {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        let ljj = diag.max(f64::MIN_POSITIVE).sqrt();
        a[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
}
