//! Variational Bayes on the data-augmented posterior.
//!
//! The approximation is `q(theta) q(u)`: a factor Gaussian over the
//! transformed copula parameters and one of the [`latent`] families over the
//! latent uniforms of discrete cells. The lower bound `E_q[log h - log q]` is
//! maximized by stochastic gradient ascent with score-function gradients,
//! per-coordinate control variates and ADADELTA step sizes.

pub mod adadelta;
pub mod factor;
pub mod latent;
pub mod sga;

use crate::data::AugmentedData;
use crate::dvine::{n_pairs, Dvine, DvineSpec};
use crate::error::{Error, Result};
use crate::paircopula::{inverse_transform, log_prior_psi};
use crate::parallel::with_threads;
use crate::rng::{substream, Purpose};
use crate::special::logit;
use adadelta::{AdadeltaState, DEFAULT_EPSILON, DEFAULT_ZETA};
use factor::{vech_len, FactorGaussian};
use latent::{LatentVA, Variant};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sga::SampleEval;
use std::path::{Path, PathBuf};

/// Unnormalized augmented posterior `log h(theta, u)`.
pub trait Target: Sync {
    fn n_theta(&self) -> usize;
    /// Boxes of the latent cells.
    fn boxes(&self) -> &[(f64, f64)];
    /// May return a non-finite value; such samples are dropped.
    fn log_h(&self, theta: &[f64], latent: &[f64]) -> f64;
}

/// Starting value of every transformed copula parameter (near independence).
pub fn initial_psi() -> f64 {
    logit(0.01)
}

/// Starting value of `d`.
pub const INIT_D: f64 = 0.316_227_766_016_837_94;

/// Scale of the random starting values of `B`; at exactly zero its gradient vanishes.
pub const INIT_B_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbConfig {
    /// Monte Carlo samples per step.
    pub samples: usize,
    pub steps: usize,
    /// Number of factors `K`.
    pub factors: usize,
    pub variant: Variant,
    pub epsilon: f64,
    pub zeta: f64,
    pub seed: u64,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip, default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
}

fn default_checkpoint_every() -> usize {
    500
}

impl Default for VbConfig {
    fn default() -> Self {
        Self {
            samples: 500,
            steps: 5000,
            factors: 3,
            variant: Variant::Va3,
            epsilon: DEFAULT_EPSILON,
            zeta: DEFAULT_ZETA,
            seed: 0,
            threads: None,
            checkpoint: None,
            checkpoint_every: default_checkpoint_every(),
        }
    }
}

impl VbConfig {
    pub fn validate(&self, n_theta: usize) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::InvalidInput("need at least 2 samples per step".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidInput("need at least one step".into()));
        }
        if self.factors > 0 && self.factors >= n_theta {
            return Err(Error::InvalidInput(format!(
                "number of factors K={} must be below the parameter count {n_theta}",
                self.factors
            )));
        }
        if !(self.epsilon > 0.0 && self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::InvalidInput("ADADELTA needs epsilon > 0 and 0 < zeta < 1".into()));
        }
        Ok(())
    }
}

/// Current variational parameters.
#[derive(Debug, Clone)]
pub struct VbState {
    pub factor: FactorGaussian,
    pub latent: LatentVA,
}

impl VbState {
    /// `mu = mu0`, `d = sqrt(0.1)`, small random `B`, `eta = 0`, `omega = 1`, `L = I`.
    pub fn init(mu0: &[f64], n_latent: usize, factors: usize, variant: Variant, seed: u64) -> Result<Self> {
        let n = mu0.len();
        let mut rng = substream(seed, Purpose::Init, 0, 0);
        let mut b = DMatrix::zeros(n, factors);
        for j in 0..factors {
            for i in j..n {
                b[(i, j)] = INIT_B_SCALE * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(Self {
            factor: FactorGaussian::new(mu0.to_vec(), b, vec![INIT_D; n])?,
            latent: LatentVA::init(variant, n_latent),
        })
    }

    pub fn from_lambda(lambda: &[f64], n_theta: usize, factors: usize, variant: Variant, n_latent: usize) -> Result<Self> {
        let na = 2 * n_theta + vech_len(n_theta, factors);
        if lambda.len() < na {
            return Err(Error::InvalidInput("variational parameter vector too short".into()));
        }
        Ok(Self {
            factor: FactorGaussian::from_lambda(&lambda[..na], n_theta, factors)?,
            latent: LatentVA::from_lambda(variant, n_latent, &lambda[na..])?,
        })
    }

    pub fn to_lambda(&self) -> Vec<f64> {
        let mut out = self.factor.to_lambda();
        out.extend(self.latent.to_lambda());
        out
    }

    /// One sample of `(log h - log q, grad log q)`.
    pub fn draw<T: Target + ?Sized, R: Rng + ?Sized>(&self, target: &T, rng: &mut R) -> SampleEval {
        let theta = self.factor.sample(rng);
        let latent = self.latent.sample(target.boxes(), rng);
        let (lq_theta, mut score) = self.factor.log_density_and_score(&theta);
        let (lq_u, score_u) = self.latent.log_density_and_score(&latent, target.boxes(), true);
        score.extend(score_u);
        let f = target.log_h(&theta, &latent.u) - lq_theta - lq_u;
        SampleEval { f, score }
    }
}

/// Draws the `samples` evaluations of one step in index order.
pub fn evaluate_step<T: Target + ?Sized>(
    state: &VbState,
    target: &T,
    samples: usize,
    seed: u64,
    step: usize,
) -> Result<Vec<SampleEval>> {
    let all: Vec<SampleEval> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(seed, Purpose::VbStep, step as u64, s as u64);
            state.draw(target, &mut rng)
        })
        .collect();
    let kept: Vec<SampleEval> = all.into_iter().filter(SampleEval::is_finite).collect();
    let dropped = samples - kept.len();
    if dropped * 10 > samples || kept.len() < 2 {
        return Err(Error::StepAborted {
            step,
            dropped,
            total: samples,
        });
    }
    Ok(kept)
}

/// Output of a variational fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub n_theta: usize,
    pub n_latent: usize,
    pub lambda: Vec<f64>,
    pub lb_trace: Vec<f64>,
    /// Control variates after the last step.
    pub cv: Vec<f64>,
    /// Non-finite samples dropped over the run.
    pub dropped: usize,
    pub config: VbConfig,
}

impl FitResult {
    pub fn state(&self) -> Result<VbState> {
        VbState::from_lambda(
            &self.lambda,
            self.n_theta,
            self.config.factors,
            self.config.variant,
            self.n_latent,
        )
    }

    /// Mean of the last `window` lower-bound values.
    pub fn lb_tail_mean(&self, window: usize) -> f64 {
        let w = window.min(self.lb_trace.len()).max(1);
        let tail = &self.lb_trace[self.lb_trace.len() - w..];
        tail.iter().sum::<f64>() / w as f64
    }
}

/// Resumable snapshot of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub steps_done: usize,
    pub lambda: Vec<f64>,
    pub cv: Vec<f64>,
    pub adadelta: AdadeltaState,
    pub lb_trace: Vec<f64>,
    pub dropped: usize,
    pub config: VbConfig,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if c.version != crate::VERSION {
            return Err(Error::InvalidInput(format!(
                "checkpoint written by version {}, this is {}",
                c.version,
                crate::VERSION
            )));
        }
        Ok(c)
    }
}

/// Runs the full optimization from `mu0`.
pub fn fit<T: Target + ?Sized>(target: &T, mu0: &[f64], config: &VbConfig) -> Result<FitResult> {
    config.validate(target.n_theta())?;
    if mu0.len() != target.n_theta() {
        return Err(Error::InvalidInput("initial mean has the wrong length".into()));
    }
    let state = VbState::init(mu0, target.boxes().len(), config.factors, config.variant, config.seed)?;
    let n_lambda = state.to_lambda().len();
    with_threads(config.threads, || {
        let warm = evaluate_step(&state, target, config.samples, config.seed, 0)?;
        let start = Checkpoint {
            version: crate::VERSION.to_string(),
            steps_done: 0,
            lambda: state.to_lambda(),
            cv: sga::control_variates(&warm),
            adadelta: AdadeltaState::new(n_lambda, config.epsilon, config.zeta),
            lb_trace: Vec::with_capacity(config.steps),
            dropped: config.samples - warm.len(),
            config: config.clone(),
        };
        run(target, start, config)
    })?
}

/// Continues a run from a checkpoint; the result equals an uninterrupted run.
pub fn resume<T: Target + ?Sized>(target: &T, checkpoint: Checkpoint, config: &VbConfig) -> Result<FitResult> {
    config.validate(target.n_theta())?;
    if checkpoint.config.seed != config.seed
        || checkpoint.config.samples != config.samples
        || checkpoint.config.factors != config.factors
        || checkpoint.config.variant != config.variant
    {
        return Err(Error::InvalidInput("checkpoint was written with a different configuration".into()));
    }
    with_threads(config.threads, || run(target, checkpoint, config))?
}

fn run<T: Target + ?Sized>(target: &T, mut ck: Checkpoint, config: &VbConfig) -> Result<FitResult> {
    let (n_theta, n_latent) = (target.n_theta(), target.boxes().len());
    let rebuild = |lambda: &[f64]| VbState::from_lambda(lambda, n_theta, config.factors, config.variant, n_latent);
    let mut state = rebuild(&ck.lambda)?;
    for step in ck.steps_done + 1..=config.steps {
        let samples = match evaluate_step(&state, target, config.samples, config.seed, step) {
            Ok(s) => s,
            Err(e) => {
                if let Some(path) = &config.checkpoint {
                    ck.save(path)?;
                }
                return Err(e);
            }
        };
        ck.dropped += config.samples - samples.len();
        let g = sga::gradient(&samples, &ck.cv);
        ck.lb_trace.push(sga::lower_bound(&samples));
        ck.cv = sga::control_variates(&samples);
        let delta = ck.adadelta.step(&g);
        for (l, d) in ck.lambda.iter_mut().zip(&delta) {
            *l += d;
        }
        state = rebuild(&ck.lambda)?;
        ck.steps_done = step;
        if let Some(path) = &config.checkpoint {
            if step % config.checkpoint_every.max(1) == 0 || step == config.steps {
                ck.save(path)?;
            }
        }
    }
    Ok(FitResult {
        n_theta,
        n_latent,
        lambda: ck.lambda,
        lb_trace: ck.lb_trace,
        cv: ck.cv,
        dropped: ck.dropped,
        config: config.clone(),
    })
}

/// Which transformed parameters are estimated. Blocks with no free
/// coordinate keep the exact parameters of `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTemplate {
    pub base: DvineSpec,
    pub free: Vec<usize>,
}

impl ModelTemplate {
    /// Every parameter free, starting near independence.
    pub fn all_free(r: usize, p: usize) -> Self {
        let n = n_pairs(r, p);
        let start = inverse_transform(&[initial_psi(); 5]);
        Self {
            base: DvineSpec::new(r, p, vec![start; n]).expect("initial parameters are valid"),
            free: (0..5 * n).collect(),
        }
    }

    /// Parameters of `spec` held fixed except the listed transformed coordinates.
    pub fn with_fixed(spec: &DvineSpec, free: Vec<usize>) -> Result<Self> {
        let n = 5 * spec.params().len();
        if free.iter().any(|&i| i >= n) || free.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("free indices must be increasing and in range".into()));
        }
        Ok(Self {
            base: spec.clone(),
            free,
        })
    }

    pub fn r(&self) -> usize {
        self.base.r()
    }

    pub fn p(&self) -> usize {
        self.base.p()
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn base_psi(&self) -> Vec<f64> {
        self.base.to_psi()
    }

    pub fn initial_mu(&self) -> Vec<f64> {
        let psi = self.base_psi();
        self.free.iter().map(|&i| psi[i]).collect()
    }

    pub fn full_psi(&self, theta: &[f64]) -> Vec<f64> {
        let mut psi = self.base_psi();
        for (&i, &v) in self.free.iter().zip(theta) {
            psi[i] = v;
        }
        psi
    }

    pub fn spec(&self, theta: &[f64]) -> Result<DvineSpec> {
        if theta.len() != self.free.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} free parameters, got {}",
                self.free.len(),
                theta.len()
            )));
        }
        let psi = self.full_psi(theta);
        let mut params = self.base.params().to_vec();
        let mut touched = vec![false; params.len()];
        for &i in &self.free {
            touched[i / 5] = true;
        }
        for (b, param) in params.iter_mut().enumerate() {
            if touched[b] {
                *param = inverse_transform(&psi[5 * b..5 * b + 5]);
            }
        }
        DvineSpec::new(self.r(), self.p(), params)
    }

    pub fn vine(&self, theta: &[f64]) -> Result<Dvine> {
        Ok(Dvine::new(self.spec(theta)?))
    }
}

/// The D-vine augmented posterior with logistic priors on the free coordinates.
pub struct DvineTarget<'a> {
    template: &'a ModelTemplate,
    data: &'a AugmentedData,
}

impl<'a> DvineTarget<'a> {
    pub fn new(template: &'a ModelTemplate, data: &'a AugmentedData) -> Result<Self> {
        if template.r() != data.r() {
            return Err(Error::InvalidInput(format!(
                "model has r={} but data has {} series",
                template.r(),
                data.r()
            )));
        }
        Ok(Self { template, data })
    }
}

impl Target for DvineTarget<'_> {
    fn n_theta(&self) -> usize {
        self.template.n_free()
    }

    fn boxes(&self) -> &[(f64, f64)] {
        self.data.boxes()
    }

    fn log_h(&self, theta: &[f64], latent: &[f64]) -> f64 {
        let Ok(vine) = self.template.vine(theta) else {
            return f64::NAN;
        };
        match vine.log_density(&self.data.fill(latent)) {
            Ok(v) => v + log_prior_psi(theta),
            Err(_) => f64::NAN,
        }
    }
}

/// Fits a D-vine model to augmented data.
pub fn fit_dvine(data: &AugmentedData, template: &ModelTemplate, config: &VbConfig) -> Result<FitResult> {
    let target = DvineTarget::new(template, data)?;
    fit(&target, &template.initial_mu(), config)
}
