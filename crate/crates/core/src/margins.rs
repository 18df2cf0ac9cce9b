//! Marginal models for each series.
//!
//! Ordinal margins turn an observed value into the latent box `[a, b)` with
//! `a = G(v-)` and `b = G(v)`. Continuous margins turn an observation into a
//! fixed PIT value.

use crate::error::{Error, Result};
use crate::special::{clamp_unit, norm_cdf, norm_ppf};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Empirical (or smoothed) probability mass function on a finite ordered support.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalMargin {
    support: Vec<i64>,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl OrdinalMargin {
    /// Builds a margin from support values and cumulative counts.
    ///
    /// CDF values are snapped to multiples of 2^-52 so that every sum and
    /// difference of box endpoints below is exact in floating point.
    fn from_counts(support: Vec<i64>, counts: &[f64]) -> Self {
        const GRID: f64 = 4_503_599_627_370_496.0; // 2^52
        let total: f64 = counts.iter().sum();
        let mut running = 0.0;
        let mut prev = 0.0;
        let mut cdf = Vec::with_capacity(counts.len());
        for c in counts {
            running += c;
            let snapped = ((running / total * GRID).round() / GRID).max(prev + 1.0 / GRID);
            cdf.push(snapped);
            prev = snapped;
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        let pmf = differences(&cdf);
        Self { support, pmf, cdf }
    }

    /// Empirical margin: `pmf(v) = count(v) / T` over the observed values.
    pub fn fit_empirical(y: &[i64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidInput("cannot fit a margin to an empty series".into()));
        }
        let mut counts: BTreeMap<i64, f64> = BTreeMap::new();
        for &v in y {
            *counts.entry(v).or_default() += 1.0;
        }
        let support: Vec<i64> = counts.keys().copied().collect();
        let c: Vec<f64> = counts.values().copied().collect();
        Ok(Self::from_counts(support, &c))
    }

    /// Additive (Laplace) smoothing with one pseudo-count per declared support value.
    pub fn fit_smoothed(y: &[i64], full_support: &[i64]) -> Result<Self> {
        let mut support = full_support.to_vec();
        support.sort_unstable();
        support.dedup();
        if support.is_empty() {
            return Err(Error::InvalidInput("declared support is empty".into()));
        }
        let mut counts = vec![1.0; support.len()];
        for &v in y {
            match support.binary_search(&v) {
                Ok(i) => counts[i] += 1.0,
                Err(_) => return Err(Error::UnknownCategory { value: v }),
            }
        }
        Ok(Self::from_counts(support, &counts))
    }

    /// Margin from explicit support and pmf (e.g. loaded from JSON).
    pub fn from_pmf(support: Vec<i64>, pmf: &[f64]) -> Result<Self> {
        if support.is_empty() || support.len() != pmf.len() {
            return Err(Error::InvalidInput("support and pmf must be nonempty and of equal length".into()));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("support must be strictly increasing".into()));
        }
        if pmf.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidInput("pmf entries must be strictly positive".into()));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("pmf sums to {total}, expected 1")));
        }
        Ok(Self::from_counts(support, pmf))
    }

    pub fn support(&self) -> &[i64] {
        &self.support
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn pmf_of(&self, v: i64) -> Result<f64> {
        Ok(self.pmf[self.index_of(v)?])
    }

    fn index_of(&self, v: i64) -> Result<usize> {
        self.support
            .binary_search(&v)
            .map_err(|_| Error::UnknownCategory { value: v })
    }

    /// Latent box `(G(v-), G(v))` for an observed value.
    pub fn bounds(&self, v: i64) -> Result<(f64, f64)> {
        let i = self.index_of(v)?;
        Ok((self.left_limit(i), self.cdf[i]))
    }

    /// Box of the `i`-th support point.
    pub fn bounds_at(&self, i: usize) -> (f64, f64) {
        (self.left_limit(i), self.cdf[i])
    }

    fn left_limit(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.cdf[i - 1]
        }
    }

    /// Smallest support value with `G(v) > u`.
    pub fn quantile(&self, u: f64) -> i64 {
        let i = self.cdf.partition_point(|&c| c <= u);
        self.support[i.min(self.support.len() - 1)]
    }

    pub fn mean(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.pmf)
            .map(|(&v, p)| v as f64 * p)
            .sum()
    }
}

fn differences(cdf: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    cdf.iter()
        .map(|&c| {
            let d = c - prev;
            prev = c;
            d
        })
        .collect()
}

/// A continuous margin: empirical interpolated ECDF or a parametric CDF.
#[derive(Debug, Clone, PartialEq)]
pub enum ContinuousMargin {
    /// Linear interpolation through `(x_(k), k/(T+1))`.
    Empirical { xs: Vec<f64>, ps: Vec<f64> },
    Normal { mean: f64, sd: f64 },
}

impl ContinuousMargin {
    pub fn fit_empirical(x: &[f64]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidInput("cannot fit a margin to an empty series".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in continuous series".into()));
        }
        let mut xs = x.to_vec();
        xs.sort_by(|a, b| a.total_cmp(b));
        // Ties would make the interpolant flat; keep the last plotting position of each run.
        let n = xs.len() as f64;
        let mut knots_x: Vec<f64> = Vec::with_capacity(xs.len());
        let mut knots_p: Vec<f64> = Vec::with_capacity(xs.len());
        for (k, &v) in xs.iter().enumerate() {
            let p = (k + 1) as f64 / (n + 1.0);
            if knots_x.last() == Some(&v) {
                *knots_p.last_mut().unwrap() = p;
            } else {
                knots_x.push(v);
                knots_p.push(p);
            }
        }
        Ok(ContinuousMargin::Empirical { xs: knots_x, ps: knots_p })
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
            return Err(Error::InvalidInput("normal margin needs finite mean and positive sd".into()));
        }
        Ok(ContinuousMargin::Normal { mean, sd })
    }

    /// Unclamped CDF.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ContinuousMargin::Empirical { xs, ps } => interpolate(xs, ps, x),
            ContinuousMargin::Normal { mean, sd } => norm_cdf((x - mean) / sd),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            ContinuousMargin::Empirical { xs, ps } => interpolate(ps, xs, u),
            ContinuousMargin::Normal { mean, sd } => mean + sd * norm_ppf(u),
        }
    }

    /// PIT value clamped into `(EPS_U, 1 - EPS_U)`.
    pub fn pit(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite observation {x}")));
        }
        Ok(clamp_unit(self.cdf(x)))
    }

    pub fn mean(&self) -> f64 {
        match self {
            ContinuousMargin::Empirical { xs, .. } => xs.iter().sum::<f64>() / xs.len() as f64,
            ContinuousMargin::Normal { mean, .. } => *mean,
        }
    }
}

/// Piecewise-linear interpolation, clamped at the ends.
fn interpolate(from: &[f64], to: &[f64], x: f64) -> f64 {
    let n = from.len();
    if n == 1 || x <= from[0] {
        return to[0];
    }
    if x >= from[n - 1] {
        return to[n - 1];
    }
    let hi = from.partition_point(|&f| f <= x);
    let lo = hi - 1;
    let t = (x - from[lo]) / (from[hi] - from[lo]);
    to[lo] + t * (to[hi] - to[lo])
}

/// Discrete or continuous tag per series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Discrete,
    Continuous,
}

/// A margin of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Margin {
    Ordinal(OrdinalMargin),
    Continuous(ContinuousMargin),
}

impl Margin {
    pub fn kind(&self) -> SeriesKind {
        match self {
            Margin::Ordinal(_) => SeriesKind::Discrete,
            Margin::Continuous(_) => SeriesKind::Continuous,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Margin::Ordinal(m) => m.mean(),
            Margin::Continuous(m) => m.mean(),
        }
    }

    /// Observation value of a PIT `u` (ordinal values returned as floats).
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Margin::Ordinal(m) => m.quantile(u) as f64,
            Margin::Continuous(m) => m.quantile(u),
        }
    }
}

/// JSON form: `{kind, support[], pmf[]}` or `{kind, xs[], ps[]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MarginRecord {
    Ordinal { support: Vec<i64>, pmf: Vec<f64> },
    Continuous { xs: Vec<f64>, ps: Vec<f64> },
    Normal { mean: f64, sd: f64 },
}

impl From<&Margin> for MarginRecord {
    fn from(m: &Margin) -> Self {
        match m {
            Margin::Ordinal(o) => MarginRecord::Ordinal {
                support: o.support.clone(),
                pmf: o.pmf.clone(),
            },
            Margin::Continuous(ContinuousMargin::Empirical { xs, ps }) => MarginRecord::Continuous {
                xs: xs.clone(),
                ps: ps.clone(),
            },
            Margin::Continuous(ContinuousMargin::Normal { mean, sd }) => MarginRecord::Normal { mean: *mean, sd: *sd },
        }
    }
}

impl TryFrom<MarginRecord> for Margin {
    type Error = Error;

    fn try_from(r: MarginRecord) -> Result<Self> {
        match r {
            MarginRecord::Ordinal { support, pmf } => Ok(Margin::Ordinal(OrdinalMargin::from_pmf(support, &pmf)?)),
            MarginRecord::Continuous { xs, ps } => {
                if xs.is_empty() || xs.len() != ps.len() {
                    return Err(Error::InvalidInput("xs and ps must be nonempty and of equal length".into()));
                }
                if xs.windows(2).any(|w| w[0] >= w[1]) || ps.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidInput("continuous margin knots must be strictly increasing".into()));
                }
                if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::InvalidInput("continuous margin probabilities must lie in [0,1]".into()));
                }
                Ok(Margin::Continuous(ContinuousMargin::Empirical { xs, ps }))
            }
            MarginRecord::Normal { mean, sd } => Ok(Margin::Continuous(ContinuousMargin::normal(mean, sd)?)),
        }
    }
}

impl Serialize for Margin {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MarginRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Margin {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = MarginRecord::deserialize(d)?;
        Margin::try_from(rec).map_err(serde::de::Error::custom)
    }
}
