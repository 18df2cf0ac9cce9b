//! Data-augmentation MCMC: an independence-type MH move on all latent
//! uniforms at once, then adaptive random-walk MH on each pair-copula block.

use crate::data::{AugmentedData, Cell};
use crate::dvine::{DvineSpec, Dvine, Lattice};
use crate::error::{Error, Result};
use crate::paircopula::log_prior_psi;
use crate::rng::{substream, Purpose, StreamRng};
use crate::vbda::latent::inside;
use crate::vbda::ModelTemplate;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Sweeps per acceptance window for stuck-chain detection.
pub const STUCK_WINDOW: usize = 1000;
/// Latent acceptance rate below which a window counts as stuck.
pub const STUCK_RATE: f64 = 0.001;
/// Conditional intervals narrower than this make a proposal fail.
pub const MIN_INTERVAL: f64 = 1e-14;
pub const DEFAULT_SCALE: f64 = 0.3;
const TARGET_ACCEPT: f64 = 0.234;
const ADAPT_EXPONENT: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub burnin: usize,
    pub iterates: usize,
    /// Starting random-walk scale per block; empty means `DEFAULT_SCALE` everywhere.
    #[serde(default)]
    pub rw_scales: Vec<f64>,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            burnin: 10_000,
            iterates: 20_000,
            rw_scales: vec![],
            seed: 1,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self, n_blocks: usize) -> Result<()> {
        if self.burnin == 0 || self.iterates == 0 {
            return Err(Error::InvalidInput("burnin and iterates must be at least 1".into()));
        }
        if !self.rw_scales.is_empty() && self.rw_scales.len() != n_blocks {
            return Err(Error::InvalidInput(format!(
                "{} random-walk scales given for {n_blocks} blocks",
                self.rw_scales.len()
            )));
        }
        if self.rw_scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidInput("random-walk scales must be positive".into()));
        }
        Ok(())
    }
}

/// Log weight `sum log(F(b|past) - F(a|past))` over latent cells (plus the
/// conditional log densities of observed cells) and the copula log density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentPass {
    pub log_weight: f64,
    pub log_density: f64,
}

/// Evaluates the proposal weight of an existing latent vector.
pub fn latent_weight(vine: &Dvine, data: &AugmentedData, latent: &[f64]) -> Result<LatentPass> {
    let mut lat = Lattice::new(vine, 1);
    let mut next = latent.iter();
    let mut pass = LatentPass {
        log_weight: 0.0,
        log_density: 0.0,
    };
    for cell in data.cells() {
        match *cell {
            Cell::Latent { a, b } => {
                let d = lat.conditional_cdf(b) - lat.conditional_cdf(a);
                pass.log_weight += d.max(0.0).ln();
                let u = *next.next().ok_or_else(|| Error::InvalidInput("latent vector too short".into()))?;
                pass.log_density += lat.push(u)?;
            }
            Cell::Fixed(u) => {
                let ld = lat.push(u)?;
                pass.log_weight += ld;
                pass.log_density += ld;
            }
        }
    }
    Ok(pass)
}

/// Draws every latent cell in turn from its conditional law truncated to its
/// box. Returns `None` when some conditional interval is narrower than `MIN_INTERVAL`.
pub fn propose_u<R: Rng + ?Sized>(
    vine: &Dvine,
    data: &AugmentedData,
    rng: &mut R,
) -> Result<Option<(Vec<f64>, LatentPass)>> {
    let mut lat = Lattice::new(vine, 1);
    let mut latent = Vec::with_capacity(data.n_latent());
    let mut pass = LatentPass {
        log_weight: 0.0,
        log_density: 0.0,
    };
    for cell in data.cells() {
        match *cell {
            Cell::Latent { a, b } => {
                let fa = lat.conditional_cdf(a);
                let d = lat.conditional_cdf(b) - fa;
                if d.is_nan() || d < MIN_INTERVAL {
                    return Ok(None);
                }
                let w: f64 = rng.random();
                let u = inside(a, b, lat.conditional_cdf_inv(fa + d * w)?);
                pass.log_weight += d.ln();
                pass.log_density += lat.push(u)?;
                latent.push(u);
            }
            Cell::Fixed(u) => {
                let ld = lat.push(u)?;
                pass.log_weight += ld;
                pass.log_density += ld;
            }
        }
    }
    Ok(Some((latent, pass)))
}

/// Metropolis-Hastings accept step for a log acceptance ratio.
pub fn accept_u<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio.is_nan() {
        return false;
    }
    rng.random::<f64>() < log_ratio.exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    /// Free transformed parameters.
    pub theta: Vec<f64>,
    pub latent: Vec<f64>,
    pub acc_u: usize,
    pub prop_u: usize,
    pub failed_u: usize,
    pub acc_theta: Vec<usize>,
    pub prop_theta: Vec<usize>,
    /// Current random-walk scale per block.
    pub scales: Vec<f64>,
}

/// Groups free coordinates by pair copula, in layout order.
pub fn theta_blocks(template: &ModelTemplate) -> Vec<Vec<usize>> {
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut last = usize::MAX;
    for (pos, &i) in template.free.iter().enumerate() {
        if i / 5 != last {
            blocks.push(vec![]);
            last = i / 5;
        }
        blocks.last_mut().expect("block exists").push(pos);
    }
    blocks
}

/// A single sequential chain.
pub struct Chain<'a> {
    template: &'a ModelTemplate,
    data: &'a AugmentedData,
    blocks: Vec<Vec<usize>>,
    pub state: ChainState,
    vine: Dvine,
    log_post: f64,
    weight: Option<f64>,
    rng: StreamRng,
    sweeps: usize,
    burnin: usize,
}

impl<'a> Chain<'a> {
    pub fn new(template: &'a ModelTemplate, data: &'a AugmentedData, config: &McmcConfig, chain: u64) -> Result<Self> {
        if template.r() != data.r() {
            return Err(Error::InvalidInput(format!(
                "model has r={} but data has {} series",
                template.r(),
                data.r()
            )));
        }
        let blocks = theta_blocks(template);
        config.validate(blocks.len())?;
        let mut rng = substream(config.seed, Purpose::Mcmc, chain, 0);
        let theta = template.initial_mu();
        let vine = template.vine(&theta)?;
        let (latent, pass) = match propose_u(&vine, data, &mut rng)? {
            Some(p) => p,
            None => {
                let mid: Vec<f64> = data.boxes().iter().map(|&(a, b)| inside(a, b, 0.5 * (a + b))).collect();
                let pass = latent_weight(&vine, data, &mid)?;
                (mid, pass)
            }
        };
        let scales = if config.rw_scales.is_empty() {
            vec![DEFAULT_SCALE; blocks.len()]
        } else {
            config.rw_scales.clone()
        };
        let n_blocks = blocks.len();
        Ok(Self {
            template,
            data,
            blocks,
            log_post: pass.log_density + log_prior_psi(&theta),
            state: ChainState {
                theta,
                latent,
                acc_u: 0,
                prop_u: 0,
                failed_u: 0,
                acc_theta: vec![0; n_blocks],
                prop_theta: vec![0; n_blocks],
                scales,
            },
            vine,
            weight: Some(pass.log_weight),
            rng,
            sweeps: 0,
            burnin: config.burnin,
        })
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Log of copula density plus prior at the current state.
    pub fn log_posterior(&self) -> f64 {
        self.log_post
    }

    /// One latent move followed by one random-walk move per block.
    /// Returns whether the latent proposal was accepted.
    pub fn sweep(&mut self) -> Result<bool> {
        let accepted = self.update_latent()?;
        self.update_theta()?;
        self.sweeps += 1;
        Ok(accepted)
    }

    fn update_latent(&mut self) -> Result<bool> {
        let w_old = match self.weight {
            Some(w) => w,
            None => latent_weight(&self.vine, self.data, &self.state.latent)?.log_weight,
        };
        self.weight = Some(w_old);
        self.state.prop_u += 1;
        let mut proposal = propose_u(&self.vine, self.data, &mut self.rng)?;
        if proposal.is_none() {
            self.state.failed_u += 1;
            proposal = propose_u(&self.vine, self.data, &mut self.rng)?;
            if proposal.is_none() {
                self.state.failed_u += 1;
                return Ok(false);
            }
        }
        let (latent, pass) = proposal.expect("checked above");
        if !accept_u(pass.log_weight - w_old, &mut self.rng) {
            return Ok(false);
        }
        debug_assert!(latent.iter().zip(self.data.boxes()).all(|(&u, &(a, b))| u >= a && u < b.max(a.next_up())));
        self.state.latent = latent;
        self.state.acc_u += 1;
        self.weight = Some(pass.log_weight);
        self.log_post = pass.log_density + log_prior_psi(&self.state.theta);
        Ok(true)
    }

    fn log_target(&self, theta: &[f64]) -> (f64, Option<Dvine>) {
        let Ok(vine) = self.template.vine(theta) else {
            return (f64::NEG_INFINITY, None);
        };
        match vine.log_density(&self.data.fill(&self.state.latent)) {
            Ok(v) if v.is_finite() => (v + log_prior_psi(theta), Some(vine)),
            _ => (f64::NEG_INFINITY, None),
        }
    }

    fn update_theta(&mut self) -> Result<()> {
        for b in 0..self.blocks.len() {
            let mut prop = self.state.theta.clone();
            let scale = self.state.scales[b];
            for &j in &self.blocks[b] {
                let z: f64 = self.rng.sample(StandardNormal);
                prop[j] += scale * z;
            }
            let (lp, vine) = self.log_target(&prop);
            self.state.prop_theta[b] += 1;
            let accepted = vine.is_some() && accept_u(lp - self.log_post, &mut self.rng);
            if accepted {
                self.state.theta = prop;
                self.vine = vine.expect("checked above");
                self.log_post = lp;
                self.weight = None;
                self.state.acc_theta[b] += 1;
            }
            if self.sweeps < self.burnin {
                let step = ((self.sweeps + 1) as f64).powf(-ADAPT_EXPONENT);
                let acc = if accepted { 1.0 } else { 0.0 };
                self.state.scales[b] *= (step * (acc - TARGET_ACCEPT)).exp();
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcDiagnostics {
    pub sweeps: usize,
    pub burnin: usize,
    pub iterates: usize,
    pub u_acceptance: f64,
    pub theta_acceptance: Vec<f64>,
    pub final_scales: Vec<f64>,
    pub proposal_failures: usize,
    /// Latent acceptance rate of each complete `STUCK_WINDOW`-sweep window.
    pub window_u_acceptance: Vec<f64>,
    pub stuck: bool,
    /// Sweep count at the end of the first stuck window.
    pub stuck_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcResult {
    pub template: ModelTemplate,
    /// Post-burnin draws of the free transformed parameters, one row per sweep.
    pub draws: Vec<Vec<f64>>,
    pub diagnostics: McmcDiagnostics,
    pub config: McmcConfig,
}

impl McmcResult {
    /// Draws mapped to full parameter specs.
    pub fn specs(&self) -> Result<Vec<DvineSpec>> {
        self.draws.iter().map(|t| self.template.spec(t)).collect()
    }

    /// Draws as flattened constrained parameters, five per pair copula in layout order.
    pub fn constrained_draws(&self) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .specs()?
            .iter()
            .map(|s| s.params().iter().flat_map(|p| p.to_array()).collect())
            .collect())
    }
}

/// Runs one chain.
pub fn run_sampler(data: &AugmentedData, template: &ModelTemplate, config: &McmcConfig) -> Result<McmcResult> {
    run_chain(data, template, config, 0)
}

/// Independent chains in parallel, chain `c` on its own stream.
pub fn run_chains(
    data: &AugmentedData,
    template: &ModelTemplate,
    config: &McmcConfig,
    n_chains: usize,
) -> Result<Vec<McmcResult>> {
    (0..n_chains as u64)
        .into_par_iter()
        .map(|c| run_chain(data, template, config, c))
        .collect()
}

fn run_chain(data: &AugmentedData, template: &ModelTemplate, config: &McmcConfig, id: u64) -> Result<McmcResult> {
    let mut chain = Chain::new(template, data, config, id)?;
    let total = config.burnin + config.iterates;
    let mut draws = Vec::with_capacity(config.iterates);
    let mut windows = Vec::new();
    let mut window_acc = 0usize;
    let mut stuck_at = None;
    for sweep in 0..total {
        if chain.sweep()? {
            window_acc += 1;
        }
        if (sweep + 1) % STUCK_WINDOW == 0 {
            let rate = window_acc as f64 / STUCK_WINDOW as f64;
            if rate < STUCK_RATE && stuck_at.is_none() {
                stuck_at = Some(sweep + 1);
            }
            windows.push(rate);
            window_acc = 0;
        }
        if sweep >= config.burnin {
            draws.push(chain.state.theta.clone());
        }
    }
    let s = &chain.state;
    let diagnostics = McmcDiagnostics {
        sweeps: total,
        burnin: config.burnin,
        iterates: config.iterates,
        u_acceptance: s.acc_u as f64 / s.prop_u.max(1) as f64,
        theta_acceptance: s
            .acc_theta
            .iter()
            .zip(&s.prop_theta)
            .map(|(&a, &n)| a as f64 / n.max(1) as f64)
            .collect(),
        final_scales: s.scales.clone(),
        proposal_failures: s.failed_u,
        window_u_acceptance: windows,
        stuck: stuck_at.is_some(),
        stuck_at,
    };
    Ok(McmcResult {
        template: template.clone(),
        draws,
        diagnostics,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn accept_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| accept_u(0.0, &mut rng)));
        assert!((0..100).all(|_| !accept_u(f64::NEG_INFINITY, &mut rng)));
        assert!(!accept_u(f64::NAN, &mut rng));
    }

    #[test]
    fn independence_weight_is_box_volume() {
        let data = AugmentedData::from_boxes(&[(0.0, 0.5), (0.2, 0.6), (0.5, 1.0)]).unwrap();
        let vine = Dvine::new(DvineSpec::independence(1, 2).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (u, pass) = propose_u(&vine, &data, &mut rng).unwrap().unwrap();
        let vol: f64 = [0.5f64, 0.4, 0.5].iter().map(|x| x.ln()).sum();
        assert!((pass.log_weight - vol).abs() < 1e-12);
        assert_eq!(pass.log_density, 0.0);
        let again = latent_weight(&vine, &data, &u).unwrap();
        assert!((again.log_weight - pass.log_weight).abs() < 1e-12);
    }

    #[test]
    fn blocks_follow_pairs() {
        let t = ModelTemplate::with_fixed(&DvineSpec::independence(1, 3).unwrap(), vec![0, 3, 5, 12, 14]).unwrap();
        assert_eq!(theta_blocks(&t), vec![vec![0, 1], vec![2], vec![3, 4]]);
    }

    #[test]
    fn config_checks() {
        assert!(McmcConfig::default().validate(2).is_ok());
        let bad = McmcConfig {
            rw_scales: vec![0.0],
            ..McmcConfig::default()
        };
        assert!(bad.validate(1).is_err());
        let zero = McmcConfig {
            burnin: 0,
            ..McmcConfig::default()
        };
        assert!(zero.validate(0).is_err());
    }
}
