//! Posterior dependence summaries and predictive simulation.
//!
//! Spearman correlations are computed per posterior parameter draw from one
//! long simulated path, pooling the pairs `(u_{j,s}, u_{i,s+k})` over `s`.

use crate::data::AugmentedData;
use crate::dvine::{pair_layout, Dvine, DvineSpec, PairIndex};
use crate::error::{Error, Result};
use crate::margins::Margin;
use crate::mcmc::McmcResult;
use crate::paircopula::{MixtureParam, PairCopula};
use crate::quad::gauss_legendre_unit;
use crate::rng::{substream, Purpose};
use crate::special::{compensated_sum, quantile_sorted};
use crate::vbda::latent::inside;
use crate::vbda::{FitResult, ModelTemplate};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Discrete pairs with more support cells than this are coarsened.
pub const MAX_SUPPORT_CELLS: usize = 10_000;
/// Gauss-Legendre nodes for the mixed discrete/continuous integral.
pub const MIXED_NODES: usize = 256;

/// Parameter draws from a variational fit, one RNG stream per draw.
pub fn vb_spec_draws(fit: &FitResult, template: &ModelTemplate, n: usize, seed: u64) -> Result<Vec<DvineSpec>> {
    let state = fit.state()?;
    (0..n)
        .into_par_iter()
        .map(|d| {
            let mut rng = substream(seed, Purpose::Summary, d as u64, 0);
            template.spec(&state.factor.sample(&mut rng))
        })
        .collect()
}

/// `n` evenly spaced stored chain draws (all of them when `n` is larger).
pub fn chain_spec_draws(result: &McmcResult, n: usize) -> Result<Vec<DvineSpec>> {
    let m = result.draws.len();
    if m == 0 {
        return Err(Error::InvalidInput("chain has no stored draws".into()));
    }
    let n = n.min(m).max(1);
    (0..n)
        .map(|d| result.template.spec(&result.draws[d * m / n]))
        .collect()
}

/// Rank-based empirical copula of paired samples.
#[derive(Debug, Clone)]
pub struct EmpiricalCopula {
    /// Pseudo-observations `rank / n` in `(0, 1]`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn pseudo_obs(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; n];
    for (rank, &i) in idx.iter().enumerate() {
        out[i] = (rank + 1) as f64 / n as f64;
    }
    out
}

impl EmpiricalCopula {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::InvalidInput("need at least two equal-length samples".into()));
        }
        Ok(Self {
            x: pseudo_obs(x),
            y: pseudo_obs(y),
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `C(s, t)`, by a direct count.
    pub fn cdf(&self, s: f64, t: f64) -> f64 {
        let c = self.x.iter().zip(&self.y).filter(|(&a, &b)| a <= s && b <= t).count();
        c as f64 / self.len() as f64
    }

    /// Counts `H[i][j] = #{x <= gx[i], y <= gy[j]}` over increasing grids.
    fn grid_counts(&self, gx: &[f64], gy: &[f64]) -> Vec<Vec<f64>> {
        let (nx, ny) = (gx.len(), gy.len());
        let mut h = vec![vec![0.0; ny]; nx];
        for (&a, &b) in self.x.iter().zip(&self.y) {
            let i = gx.partition_point(|&c| c < a);
            let j = gy.partition_point(|&c| c < b);
            if i < nx && j < ny {
                h[i][j] += 1.0;
            }
        }
        for i in 0..nx {
            for j in 0..ny {
                let left = if j > 0 { h[i][j - 1] } else { 0.0 };
                let up = if i > 0 { h[i - 1][j] } else { 0.0 };
                let diag = if i > 0 && j > 0 { h[i - 1][j - 1] } else { 0.0 };
                h[i][j] += left + up - diag;
            }
        }
        h
    }
}

/// Spearman correlation between two ordinal variables with the given CDF
/// grids (upper box edges, last equal to 1).
pub fn spearman_discrete(cop: &EmpiricalCopula, cdf_x: &[f64], cdf_y: &[f64]) -> f64 {
    if cdf_x.len() <= 1 || cdf_y.len() <= 1 {
        return 0.0;
    }
    let n = cop.len() as f64;
    let h = cop.grid_counts(cdf_x, cdf_y);
    let at = |i: usize, j: usize| -> f64 {
        if i == 0 || j == 0 {
            0.0
        } else {
            h[i - 1][j - 1]
        }
    };
    let gx = box_masses(cdf_x);
    let gy = box_masses(cdf_y);
    let total = compensated_sum((0..cdf_x.len()).flat_map(|i| {
        let at = &at;
        let gy = &gy;
        let gi = gx[i];
        (0..cdf_y.len()).map(move |j| gi * gy[j] * (at(i + 1, j + 1) + at(i + 1, j) + at(i, j + 1) + at(i, j)))
    }));
    (3.0 * total / n - 3.0).clamp(-1.0, 1.0)
}

/// Spearman correlation between two continuous variables: the rank correlation.
pub fn spearman_continuous(cop: &EmpiricalCopula) -> f64 {
    let n = cop.len() as f64;
    let mx = compensated_sum(cop.x.iter().copied()) / n;
    let my = compensated_sum(cop.y.iter().copied()) / n;
    let sxy = compensated_sum(cop.x.iter().zip(&cop.y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(cop.x.iter().map(|a| (a - mx) * (a - mx)));
    let syy = compensated_sum(cop.y.iter().map(|b| (b - my) * (b - my)));
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// `12 * integral of C - 3` by the midpoint rule on an `m x m` grid.
pub fn spearman_grid(cop: &EmpiricalCopula, m: usize) -> f64 {
    let g: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect();
    let h = cop.grid_counts(&g, &g);
    let n = cop.len() as f64;
    let sum = compensated_sum(h.iter().flat_map(|row| row.iter().copied()));
    12.0 * sum / (n * (m * m) as f64) - 3.0
}

/// Spearman correlation between an ordinal variable (CDF grid `cdf_d`) and a
/// continuous one. `discrete_first` says which coordinate of `cop` is ordinal.
pub fn spearman_mixed(cop: &EmpiricalCopula, cdf_d: &[f64], discrete_first: bool) -> f64 {
    if cdf_d.len() <= 1 {
        return 0.0;
    }
    let (nodes, weights) = gauss_legendre_unit(MIXED_NODES);
    let h = if discrete_first {
        cop.grid_counts(cdf_d, &nodes)
    } else {
        let swapped = EmpiricalCopula {
            x: cop.y.clone(),
            y: cop.x.clone(),
        };
        swapped.grid_counts(cdf_d, &nodes)
    };
    let g = box_masses(cdf_d);
    let n = cop.len() as f64;
    let total = compensated_sum((0..cdf_d.len()).flat_map(|i| {
        let h = &h;
        let g = &g;
        let weights = &weights;
        (0..nodes.len()).map(move |q| {
            let lower = if i > 0 { h[i - 1][q] } else { 0.0 };
            g[i] * weights[q] * (h[i][q] + lower)
        })
    }));
    (6.0 * total / n - 3.0).clamp(-1.0, 1.0)
}

fn box_masses(cdf: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    cdf.iter()
        .map(|&c| {
            let d = c - prev;
            prev = c;
            d
        })
        .collect()
}

/// Keeps at most `max` cut points of a CDF grid, always including the last.
pub fn coarsen_cdf(cdf: &[f64], max: usize) -> Vec<f64> {
    if cdf.len() <= max {
        return cdf.to_vec();
    }
    let stride = cdf.len().div_ceil(max);
    let mut out: Vec<f64> = cdf.iter().skip(stride - 1).step_by(stride).copied().collect();
    if out.last() != cdf.last() {
        out.push(*cdf.last().expect("nonempty"));
    }
    out
}

/// How a pair of series is summarized.
#[derive(Debug, Clone)]
enum PairKind {
    Discrete(Vec<f64>, Vec<f64>),
    Continuous,
    /// Ordinal grid and whether the ordinal variable is the earlier one.
    Mixed(Vec<f64>, bool),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanEntry {
    /// Later series (1-based).
    pub i: usize,
    /// Earlier series (1-based).
    pub j: usize,
    pub k: usize,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanReport {
    pub entries: Vec<SpearmanEntry>,
    pub n_sim: usize,
    pub n_param_draws: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
}

/// Spearman correlation of every `(i, j, k)`, `k = 0..=p`, for one parameter
/// value, from one simulated path of length `n_sim + p`.
pub fn spearman_single(spec: &DvineSpec, margins: &[Margin], n_sim: usize, seed: u64) -> Result<Vec<SpearmanEntry>> {
    let (kinds, _) = pair_kinds(margins)?;
    spearman_with_kinds(spec, &kinds, n_sim, seed)
}

fn cdf_grid(m: &Margin) -> Option<Vec<f64>> {
    match m {
        Margin::Ordinal(o) => Some(o.cdf().to_vec()),
        Margin::Continuous(_) => None,
    }
}

/// Pair kinds indexed `[j][i]` (earlier, later), plus coarsening warnings.
fn pair_kinds(margins: &[Margin]) -> Result<(Vec<Vec<PairKind>>, Vec<String>)> {
    let r = margins.len();
    let mut warnings = Vec::new();
    let mut kinds = Vec::with_capacity(r);
    for j in 0..r {
        let mut row = Vec::with_capacity(r);
        for i in 0..r {
            let kind = match (cdf_grid(&margins[j]), cdf_grid(&margins[i])) {
                (Some(mut gx), Some(mut gy)) => {
                    if gx.len() * gy.len() > MAX_SUPPORT_CELLS {
                        gx = coarsen_cdf(&gx, 100);
                        gy = coarsen_cdf(&gy, 100);
                        warnings.push(format!(
                            "series {} and {}: support grid coarsened to {}x{} cells",
                            j + 1,
                            i + 1,
                            gx.len(),
                            gy.len()
                        ));
                    }
                    PairKind::Discrete(gx, gy)
                }
                (None, None) => PairKind::Continuous,
                (Some(g), None) => PairKind::Mixed(g, true),
                (None, Some(g)) => PairKind::Mixed(g, false),
            };
            row.push(kind);
        }
        kinds.push(row);
    }
    Ok((kinds, warnings))
}

fn spearman_with_kinds(spec: &DvineSpec, kinds: &[Vec<PairKind>], n_sim: usize, seed: u64) -> Result<Vec<SpearmanEntry>> {
    let (r, p) = (spec.r(), spec.p());
    if kinds.len() != r {
        return Err(Error::InvalidInput(format!("{} margins for {r} series", kinds.len())));
    }
    if n_sim < 2 {
        return Err(Error::InvalidInput("need at least two simulated pairs".into()));
    }
    let path = Dvine::new(spec.clone())
        .simulate(n_sim + p, 1, seed)?
        .pop()
        .ok_or_else(|| Error::Numerical("empty simulation".into()))?;
    let mut out = Vec::new();
    for k in 0..=p {
        for i in 1..=r {
            for j in 1..=r {
                if k == 0 && j >= i {
                    continue;
                }
                let xs: Vec<f64> = (0..n_sim).map(|s| path[s * r + j - 1]).collect();
                let ys: Vec<f64> = (0..n_sim).map(|s| path[(s + k) * r + i - 1]).collect();
                let cop = EmpiricalCopula::new(&xs, &ys)?;
                let rho = match &kinds[j - 1][i - 1] {
                    PairKind::Discrete(gx, gy) => spearman_discrete(&cop, gx, gy),
                    PairKind::Continuous => spearman_continuous(&cop),
                    PairKind::Mixed(g, first) => spearman_mixed(&cop, g, *first),
                };
                out.push(SpearmanEntry {
                    i,
                    j,
                    k,
                    mean: rho,
                    sd: 0.0,
                    q05: rho,
                    q95: rho,
                });
            }
        }
    }
    Ok(out)
}

/// Posterior summary of all Spearman correlations over parameter draws.
pub fn spearman_report(specs: &[DvineSpec], margins: &[Margin], n_sim: usize, seed: u64) -> Result<SpearmanReport> {
    if specs.is_empty() {
        return Err(Error::InvalidInput("no parameter draws".into()));
    }
    let (kinds, warnings) = pair_kinds(margins)?;
    let per_draw: Vec<Vec<SpearmanEntry>> = specs
        .par_iter()
        .enumerate()
        .map(|(d, spec)| {
            let sim_seed = substream(seed, Purpose::Spearman, d as u64, 0).random::<u64>();
            spearman_with_kinds(spec, &kinds, n_sim, sim_seed)
        })
        .collect::<Result<_>>()?;
    let entries = (0..per_draw[0].len())
        .map(|e| {
            let mut vals: Vec<f64> = per_draw.iter().map(|row| row[e].mean).collect();
            let (mean, sd) = mean_sd(&vals);
            vals.sort_by(f64::total_cmp);
            let first = &per_draw[0][e];
            SpearmanEntry {
                i: first.i,
                j: first.j,
                k: first.k,
                mean,
                sd,
                q05: quantile_sorted(&vals, 0.05),
                q95: quantile_sorted(&vals, 0.95),
            }
        })
        .collect();
    Ok(SpearmanReport {
        entries,
        n_sim,
        n_param_draws: specs.len(),
        seed,
        warnings,
    })
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = compensated_sum(v.iter().copied()) / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = compensated_sum(v.iter().map(|x| (x - m) * (x - m))) / (n - 1.0);
    (m, var.sqrt())
}

/// Where predictive parameter draws come from.
#[derive(Debug, Clone, Copy)]
pub enum Posterior<'a> {
    Vb(&'a FitResult),
    Mcmc(&'a McmcResult),
}

/// Predictive draws, `values[(h * r + l) * n_draws + d]` for step `h`, series `l`, draw `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub horizon: usize,
    pub r: usize,
    pub n_draws: usize,
    pub values: Vec<f64>,
}

impl Prediction {
    pub fn get(&self, h: usize, l: usize, d: usize) -> f64 {
        self.values[(h * self.r + l) * self.n_draws + d]
    }
}

/// Simulates `horizon` steps ahead of `data`. Each draw takes parameters from
/// the posterior and anchors the latent history: from the variational latent
/// approximation for a VB fit, uniformly within the boxes for a chain.
pub fn predict(
    posterior: Posterior<'_>,
    data: &AugmentedData,
    margins: &[Margin],
    template: &ModelTemplate,
    horizon: usize,
    n_draws: usize,
    seed: u64,
) -> Result<Prediction> {
    let r = data.r();
    if horizon == 0 || n_draws == 0 {
        return Err(Error::InvalidInput("horizon and draw count must be at least 1".into()));
    }
    if margins.len() != r || template.r() != r {
        return Err(Error::InvalidInput("margins, model and data disagree on the number of series".into()));
    }
    let vb_state = match posterior {
        Posterior::Vb(fit) => {
            if fit.n_latent != data.n_latent() || fit.n_theta != template.n_free() {
                return Err(Error::InvalidInput("fit does not match the data or model".into()));
            }
            Some(fit.state()?)
        }
        Posterior::Mcmc(res) => {
            if res.draws.is_empty() {
                return Err(Error::InvalidInput("chain has no stored draws".into()));
            }
            None
        }
    };
    let per_draw: Vec<Vec<f64>> = (0..n_draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = substream(seed, Purpose::Predict, d as u64, 0);
            let (theta, latent) = match (posterior, &vb_state) {
                (Posterior::Vb(_), Some(state)) => {
                    let theta = state.factor.sample(&mut rng);
                    let latent = state.latent.sample(data.boxes(), &mut rng).u;
                    (theta, latent)
                }
                (Posterior::Mcmc(res), _) => {
                    let m = res.draws.len();
                    let theta = res.draws[d * m / n_draws].clone();
                    let latent = data
                        .boxes()
                        .iter()
                        .map(|&(a, b)| inside(a, b, a + (b - a) * rng.random::<f64>()))
                        .collect();
                    (theta, latent)
                }
                _ => unreachable!("VB state prepared above"),
            };
            let vine = template.vine(&theta)?;
            let history = data.fill(&latent);
            let mut lat = vine.lattice_from_history(&history, 1)?;
            let mut out = Vec::with_capacity(horizon * r);
            for step in 0..horizon * r {
                let w: f64 = rng.random();
                let x = lat.conditional_cdf_inv(w)?;
                lat.push(x)?;
                out.push(margins[step % r].quantile(x));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut values = vec![0.0; horizon * r * n_draws];
    for (d, row) in per_draw.iter().enumerate() {
        for (hl, &v) in row.iter().enumerate() {
            values[hl * n_draws + d] = v;
        }
    }
    Ok(Prediction {
        horizon,
        r,
        n_draws,
        values,
    })
}

/// Posterior summary of one constrained parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub k: usize,
    pub l1: usize,
    pub l2: usize,
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

pub const PARAM_NAMES: [&str; 6] = ["tau_a", "delta_a", "tau_b", "delta_b", "w", "spearman"];

/// Spearman's rho of a pair copula, `12 * integral of C - 3`, by tensor Gauss-Legendre.
pub fn pair_spearman(param: &MixtureParam, nodes: usize) -> f64 {
    let c = PairCopula::new(*param);
    let (x, w) = gauss_legendre_unit(nodes);
    let total = compensated_sum(
        (0..nodes).flat_map(|a| (0..nodes).map(move |b| (a, b))).map(|(a, b)| w[a] * w[b] * c.cdf(x[a], x[b])),
    );
    12.0 * total - 3.0
}

/// Nodes per axis for pair-copula Spearman summaries.
pub const PAIR_SPEARMAN_NODES: usize = 32;
/// At most this many draws enter the pair-copula Spearman summary.
pub const PAIR_SPEARMAN_DRAWS: usize = 2000;

/// Mean, SD and quantiles of each pair copula's five parameters and its
/// Spearman's rho, in layout order.
pub fn summarize_specs(specs: &[DvineSpec]) -> Result<Vec<ParamSummary>> {
    let first = specs.first().ok_or_else(|| Error::InvalidInput("no parameter draws".into()))?;
    let layout: Vec<PairIndex> = pair_layout(first.r(), first.p());
    let stride = specs.len().div_ceil(PAIR_SPEARMAN_DRAWS).max(1);
    let mut out = Vec::with_capacity(layout.len() * 6);
    for (b, pair) in layout.iter().enumerate() {
        let arrays: Vec<[f64; 5]> = specs.iter().map(|s| s.params()[b].to_array()).collect();
        let rho: Vec<f64> = specs
            .par_iter()
            .step_by(stride)
            .map(|s| pair_spearman(&s.params()[b], PAIR_SPEARMAN_NODES))
            .collect();
        for (c, name) in PARAM_NAMES.iter().enumerate() {
            let mut vals: Vec<f64> = if c < 5 {
                arrays.iter().map(|a| a[c]).collect()
            } else {
                rho.clone()
            };
            let (mean, sd) = mean_sd(&vals);
            vals.sort_by(f64::total_cmp);
            out.push(ParamSummary {
                k: pair.k,
                l1: pair.l1,
                l2: pair.l2,
                name: name.to_string(),
                mean,
                sd,
                q05: quantile_sorted(&vals, 0.05),
                q50: quantile_sorted(&vals, 0.5),
                q95: quantile_sorted(&vals, 0.95),
            });
        }
    }
    Ok(out)
}

/// Summaries from `n` draws of the variational posterior.
pub fn vb_summaries(fit: &FitResult, template: &ModelTemplate, n: usize, seed: u64) -> Result<Vec<ParamSummary>> {
    summarize_specs(&vb_spec_draws(fit, template, n, seed)?)
}

/// Summaries from every stored chain draw.
pub fn chain_summaries(result: &McmcResult) -> Result<Vec<ParamSummary>> {
    summarize_specs(&result.specs()?)
}
