//! Markov-p D-vine copulas for one or several series.
//!
//! Observations are flattened series-within-time: variable `i = l1 + r(t-1)`
//! (1-based). The pair between variables `j < i` sits on tree `m = i - j`,
//! couples series `l2 = l1(j)` and `l1 = l1(i)` at lag `k = t(i) - t(j)`, and
//! uses the copula of block `(k, l2, l1)`. Pairs with `k > p` are
//! independence, so variable `i` only needs trees `1..=min(i-1, r*p + l1 - 1)`.
//!
//! The recursion keeps forward values `u_{i|i-m..i-1}` and backward values
//! `u_{j|j+1..j+m}`:
//!
//! ```text
//! log c(b_j[m-1], f_i[m-1])
//! f_i[m] = dC/du (b_j[m-1], f_i[m-1])
//! b_j[m] = dC/dv (b_j[m-1], f_i[m-1])
//! ```
//!
//! and the conditional CDF of variable `i` given its past is `f_i` at the last tree.

use crate::error::{Error, Result};
use crate::paircopula::{inverse_transform, transform, HDirection, MixtureParam, PairCopula};
use crate::rng::{substream, Purpose};
use crate::special::clamp_unit;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Location of a pair-copula block: lag `k`, conditioning series `l2`, target series `l1` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairIndex {
    pub k: usize,
    pub l1: usize,
    pub l2: usize,
}

/// Number of pair-copula blocks: `p r^2 + r(r-1)/2`.
pub fn n_pairs(r: usize, p: usize) -> usize {
    p * r * r + r * (r - 1) / 2
}

/// Block order used by parameter vectors: lag 0 (`l2 < l1`) first, then lags `1..=p`,
/// each ordered by `l1` then `l2`.
pub fn pair_layout(r: usize, p: usize) -> Vec<PairIndex> {
    let mut out = Vec::with_capacity(n_pairs(r, p));
    for l1 in 1..=r {
        for l2 in 1..l1 {
            out.push(PairIndex { k: 0, l1, l2 });
        }
    }
    for k in 1..=p {
        for l1 in 1..=r {
            for l2 in 1..=r {
                out.push(PairIndex { k, l1, l2 });
            }
        }
    }
    out
}

/// Position of block `(k, l1, l2)` in [`pair_layout`].
pub fn pair_position(r: usize, k: usize, l1: usize, l2: usize) -> usize {
    if k == 0 {
        (l1 - 1) * (l1 - 2) / 2 + (l2 - 1)
    } else {
        r * (r - 1) / 2 + (k - 1) * r * r + (l1 - 1) * r + (l2 - 1)
    }
}

/// Model structure and pair-copula parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DvineSpec {
    r: usize,
    p: usize,
    params: Vec<MixtureParam>,
}

impl DvineSpec {
    pub fn new(r: usize, p: usize, params: Vec<MixtureParam>) -> Result<Self> {
        if r == 0 || p == 0 {
            return Err(Error::InvalidInput(format!("need r >= 1 and p >= 1, got r={r}, p={p}")));
        }
        if params.len() != n_pairs(r, p) {
            return Err(Error::InvalidInput(format!(
                "expected {} pair-copulas for r={r}, p={p}, got {}",
                n_pairs(r, p),
                params.len()
            )));
        }
        Ok(Self { r, p, params })
    }

    pub fn independence(r: usize, p: usize) -> Result<Self> {
        Self::new(r, p, vec![MixtureParam::independence(); n_pairs(r, p)])
    }

    /// Builds a spec from `5 * n_pairs` unconstrained values.
    pub fn from_psi(r: usize, p: usize, psi: &[f64]) -> Result<Self> {
        if psi.len() != 5 * n_pairs(r, p) {
            return Err(Error::InvalidInput(format!(
                "expected {} transformed parameters, got {}",
                5 * n_pairs(r, p),
                psi.len()
            )));
        }
        Self::new(r, p, psi.chunks_exact(5).map(inverse_transform).collect())
    }

    pub fn to_psi(&self) -> Vec<f64> {
        self.params.iter().flat_map(transform).collect()
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn params(&self) -> &[MixtureParam] {
        &self.params
    }

    pub fn param(&self, k: usize, l1: usize, l2: usize) -> &MixtureParam {
        &self.params[pair_position(self.r, k, l1, l2)]
    }

    pub fn set_param(&mut self, k: usize, l1: usize, l2: usize, value: MixtureParam) {
        let pos = pair_position(self.r, k, l1, l2);
        self.params[pos] = value;
    }

    pub fn layout(&self) -> Vec<PairIndex> {
        pair_layout(self.r, self.p)
    }

    /// The same model with `p` raised to `new_p`, new lags set to independence.
    pub fn with_order(&self, new_p: usize) -> Result<Self> {
        let mut out = Self::independence(self.r, new_p)?;
        for (idx, param) in self.layout().into_iter().zip(&self.params) {
            if idx.k <= new_p {
                out.set_param(idx.k, idx.l1, idx.l2, *param);
            }
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct BlockRecord {
    k: usize,
    l1: usize,
    l2: usize,
    params: [f64; 5],
}

#[derive(Serialize, Deserialize)]
struct SpecRecord {
    r: usize,
    p: usize,
    blocks: Vec<BlockRecord>,
}

impl Serialize for DvineSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SpecRecord {
            r: self.r,
            p: self.p,
            blocks: self
                .layout()
                .into_iter()
                .zip(&self.params)
                .map(|(i, par)| BlockRecord {
                    k: i.k,
                    l1: i.l1,
                    l2: i.l2,
                    params: par.to_array(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DvineSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let rec = SpecRecord::deserialize(d)?;
        let mut spec = DvineSpec::independence(rec.r, rec.p).map_err(D::Error::custom)?;
        let mut seen = vec![false; n_pairs(rec.r, rec.p)];
        for b in rec.blocks {
            let valid = b.l1 >= 1
                && b.l1 <= rec.r
                && b.l2 >= 1
                && b.l2 <= rec.r
                && b.k <= rec.p
                && (b.k > 0 || b.l2 < b.l1);
            if !valid {
                return Err(D::Error::custom(format!("invalid block (k={}, l1={}, l2={})", b.k, b.l1, b.l2)));
            }
            let pos = pair_position(rec.r, b.k, b.l1, b.l2);
            if std::mem::replace(&mut seen[pos], true) {
                return Err(D::Error::custom(format!("duplicate block (k={}, l1={}, l2={})", b.k, b.l1, b.l2)));
            }
            spec.params[pos] = MixtureParam::from_array(b.params).map_err(D::Error::custom)?;
        }
        if let Some(pos) = seen.iter().position(|s| !s) {
            let i = spec.layout()[pos];
            return Err(D::Error::custom(format!("missing block (k={}, l1={}, l2={})", i.k, i.l1, i.l2)));
        }
        Ok(spec)
    }
}

/// A spec with its pair-copulas prepared for evaluation.
#[derive(Debug, Clone)]
pub struct Dvine {
    spec: DvineSpec,
    copulas: Vec<PairCopula>,
    /// `trees[l1 - 1][m - 1]` = block position of tree `m` for series `l1`.
    trees: Vec<Vec<usize>>,
    max_trees: usize,
}

impl Dvine {
    pub fn new(spec: DvineSpec) -> Self {
        let r = spec.r;
        let copulas = spec.params.iter().map(|p| PairCopula::new(*p)).collect();
        let trees = (1..=r)
            .map(|l1| {
                (1..=r * spec.p + l1 - 1)
                    .map(|m| {
                        let l2 = (l1 + r * m - 1 - m) % r + 1;
                        let k = (m + l2 - l1) / r;
                        pair_position(r, k, l1, l2)
                    })
                    .collect()
            })
            .collect();
        Self {
            max_trees: r * spec.p + r - 1,
            spec,
            copulas,
            trees,
        }
    }

    pub fn from_psi(r: usize, p: usize, psi: &[f64]) -> Result<Self> {
        Ok(Self::new(DvineSpec::from_psi(r, p, psi)?))
    }

    pub fn spec(&self) -> &DvineSpec {
        &self.spec
    }

    pub fn r(&self) -> usize {
        self.spec.r
    }

    /// Deepest tree any variable uses, `r p + r - 1`.
    pub fn max_trees(&self) -> usize {
        self.max_trees
    }

    /// Copula log-density of a flattened vector of length `r T`.
    pub fn log_density(&self, u: &[f64]) -> Result<f64> {
        if !u.len().is_multiple_of(self.spec.r) {
            return Err(Error::InvalidInput(format!(
                "length {} is not a multiple of r={}",
                u.len(),
                self.spec.r
            )));
        }
        if self.spec.r == 1 {
            return self.log_density_univariate(u);
        }
        let mut lat = Lattice::new(self, 1);
        let mut total = 0.0;
        for &x in u {
            total += lat.push(x)?;
        }
        Ok(total)
    }

    /// Single-series recursion with plain arrays; agrees bit-for-bit with the lattice.
    fn log_density_univariate(&self, u: &[f64]) -> Result<f64> {
        let p = self.spec.p;
        let depth = p + 1;
        // back[(j % depth) * depth + level]
        let mut back = vec![0.0; depth * depth];
        let mut fwd = vec![0.0; depth];
        let mut total = 0.0;
        for (i0, &x) in u.iter().enumerate() {
            let x = clamp_unit(x);
            let trees = i0.min(p);
            fwd[0] = x;
            let slot_i = (i0 % depth) * depth;
            back[slot_i] = x;
            let mut local = 0.0;
            for m in 1..=trees {
                let j0 = i0 - m;
                let slot_j = (j0 % depth) * depth;
                let c = &self.copulas[m - 1];
                // The deepest tree's h-values are never read.
                if m == p {
                    let lp = c.log_pdf(back[slot_j + m - 1], fwd[m - 1]);
                    if !lp.is_finite() {
                        return Err(lattice_error(i0 + 1, m, lp));
                    }
                    local += lp;
                    continue;
                }
                let e = c.eval(back[slot_j + m - 1], fwd[m - 1]);
                if !e.log_pdf.is_finite() {
                    return Err(lattice_error(i0 + 1, m, e.log_pdf));
                }
                local += e.log_pdf;
                fwd[m] = clamp_unit(e.h_first);
                back[slot_j + m] = clamp_unit(e.h_second);
            }
            total += local;
        }
        Ok(total)
    }

    /// Conditional CDF of a variable of series `l1` given the flattened values before it.
    pub fn conditional_cdf(&self, u: f64, history: &[f64], l1: usize) -> Result<f64> {
        Ok(self.lattice_from_history(history, l1)?.conditional_cdf(u))
    }

    /// Inverse of [`Dvine::conditional_cdf`] in its first argument.
    pub fn conditional_cdf_inv(&self, q: f64, history: &[f64], l1: usize) -> Result<f64> {
        self.lattice_from_history(history, l1)?.conditional_cdf_inv(q)
    }

    /// Lattice primed with the tail of `history` so that the next variable is of series `l1`.
    pub fn lattice_from_history(&self, history: &[f64], l1: usize) -> Result<Lattice<'_>> {
        let r = self.spec.r;
        if l1 == 0 || l1 > r {
            return Err(Error::InvalidInput(format!("series position {l1} outside 1..={r}")));
        }
        let keep = history.len().min(self.trees[l1 - 1].len());
        let start_l1 = (l1 - 1 + r * (keep + 1) - keep) % r + 1;
        let mut lat = Lattice::new(self, start_l1);
        for &x in &history[history.len() - keep..] {
            lat.push(x)?;
        }
        Ok(lat)
    }

    /// Draws `n_paths` flattened vectors of length `r T`, one RNG substream per path.
    pub fn simulate(&self, t_len: usize, n_paths: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if t_len == 0 {
            return Err(Error::InvalidInput("simulation length must be at least 1".into()));
        }
        (0..n_paths)
            .into_par_iter()
            .map(|path| {
                let mut rng = substream(seed, Purpose::Simulate, path as u64, 0);
                let mut lat = Lattice::new(self, 1);
                let mut out = Vec::with_capacity(t_len * self.spec.r);
                for _ in 0..t_len * self.spec.r {
                    let w: f64 = rng.random();
                    let x = lat.conditional_cdf_inv(w)?;
                    lat.push(x)?;
                    out.push(x);
                }
                Ok(out)
            })
            .collect()
    }
}

fn lattice_error(variable: usize, tree: usize, value: f64) -> Error {
    Error::Lattice {
        variable,
        tree,
        detail: format!("non-finite log-density {value}"),
    }
}

/// Incremental D-vine recursion: push variables in flattened order and query
/// the conditional distribution of the next one.
#[derive(Debug, Clone)]
pub struct Lattice<'a> {
    vine: &'a Dvine,
    /// Backward values, `back[(j % depth) * width + level]`.
    back: Vec<f64>,
    depth: usize,
    width: usize,
    count: usize,
    start_l1: usize,
}

impl<'a> Lattice<'a> {
    /// Empty lattice whose first variable belongs to series `start_l1`.
    pub fn new(vine: &'a Dvine, start_l1: usize) -> Self {
        let depth = vine.max_trees + 1;
        let width = vine.max_trees + 1;
        Self {
            vine,
            back: vec![0.0; depth * width],
            depth,
            width,
            count: 0,
            start_l1,
        }
    }

    /// Number of variables pushed so far.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Series of the next variable.
    pub fn next_l1(&self) -> usize {
        (self.start_l1 - 1 + self.count) % self.vine.spec.r + 1
    }

    fn next_trees(&self) -> &'a [usize] {
        let table = &self.vine.trees[self.next_l1() - 1];
        &table[..self.count.min(table.len())]
    }

    #[inline]
    fn back_at(&self, j: usize, level: usize) -> f64 {
        self.back[(j % self.depth) * self.width + level]
    }

    /// `F(u | past)` for the next variable.
    pub fn conditional_cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let mut f = clamp_unit(u);
        let i = self.count;
        for (m0, &pos) in self.next_trees().iter().enumerate() {
            let m = m0 + 1;
            let c = &self.vine.copulas[pos];
            if c.is_independence() {
                continue;
            }
            f = clamp_unit(c.hfunc(self.back_at(i - m, m0), f, HDirection::First));
        }
        f
    }

    /// Log conditional density of the next variable at `u`.
    pub fn log_conditional_density(&self, u: f64) -> f64 {
        let mut f = clamp_unit(u);
        let i = self.count;
        let mut total = 0.0;
        for (m0, &pos) in self.next_trees().iter().enumerate() {
            let m = m0 + 1;
            let c = &self.vine.copulas[pos];
            if c.is_independence() {
                continue;
            }
            let e = c.eval(self.back_at(i - m, m0), f);
            total += e.log_pdf;
            f = clamp_unit(e.h_first);
        }
        total
    }

    /// Solves `conditional_cdf(u) = q`.
    pub fn conditional_cdf_inv(&self, q: f64) -> Result<f64> {
        let mut f = clamp_unit(q);
        let i = self.count;
        let trees = self.next_trees();
        for (m0, &pos) in trees.iter().enumerate().rev() {
            let m = m0 + 1;
            let c = &self.vine.copulas[pos];
            if c.is_independence() {
                continue;
            }
            f = clamp_unit(c.hfunc_inv(f, self.back_at(i - m, m0), HDirection::First)?);
        }
        Ok(f)
    }

    /// Appends the next variable and returns its log conditional density.
    pub fn push(&mut self, u: f64) -> Result<f64> {
        let x = clamp_unit(u);
        let i = self.count;
        let trees = self.next_trees();
        let mut f = x;
        let mut total = 0.0;
        for (m0, &pos) in trees.iter().enumerate() {
            let m = m0 + 1;
            let j = i - m;
            let b = self.back_at(j, m0);
            let e = self.vine.copulas[pos].eval(b, f);
            if !e.log_pdf.is_finite() {
                return Err(lattice_error(i + 1, m, e.log_pdf));
            }
            total += e.log_pdf;
            f = clamp_unit(e.h_first);
            self.back[(j % self.depth) * self.width + m] = clamp_unit(e.h_second);
        }
        // Deeper backward levels of older variables stay unchanged past the truncation.
        for m in trees.len() + 1..=i.min(self.vine.max_trees) {
            let j = i - m;
            let prev = self.back_at(j, m - 1);
            self.back[(j % self.depth) * self.width + m] = prev;
        }
        self.back[(i % self.depth) * self.width] = x;
        self.count += 1;
        Ok(total)
    }
}

/// Monte Carlo estimate of the probability of a box under the copula:
/// `prod(b - a) * mean(c(U))` with `U` uniform on the box. Returns `(estimate, std_error)`.
pub fn discrete_loglik_oracle(vine: &Dvine, boxes: &[(f64, f64)], n_mc: usize, seed: u64) -> Result<(f64, f64)> {
    if boxes.len() > 12 {
        return Err(Error::InvalidInput(format!(
            "box oracle limited to 12 cells, got {}",
            boxes.len()
        )));
    }
    if n_mc < 2 {
        return Err(Error::InvalidInput("need at least 2 Monte Carlo draws".into()));
    }
    let volume: f64 = boxes.iter().map(|(a, b)| b - a).product();
    let vals: Vec<f64> = (0..n_mc)
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(seed, Purpose::Oracle, s as u64, 0);
            let u: Vec<f64> = boxes.iter().map(|&(a, b)| a + (b - a) * rng.random::<f64>()).collect();
            vine.log_density(&u).map(f64::exp)
        })
        .collect::<Result<_>>()?;
    let mean = crate::special::mean(&vals);
    let se = (crate::special::variance(&vals) / n_mc as f64).sqrt();
    Ok((volume * mean, volume * se))
}
