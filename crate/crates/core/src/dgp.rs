//! Synthetic series generators.

use crate::data::SeriesData;
use crate::dvine::Dvine;
use crate::error::{Error, Result};
use crate::margins::{Margin, OrdinalMargin};
use crate::rng::{substream, Purpose};
use crate::special::sigmoid;
use rand::Rng;
use statrs::distribution::{Discrete, Poisson};

/// Binary series with `Pr(Y_t = 1 | y_{t-1}) = sigmoid(intercept + slope * y_{t-1})`,
/// started from the stationary law of the two-state chain.
pub fn autologistic(t_len: usize, intercept: f64, slope: f64, seed: u64) -> Result<Vec<i64>> {
    if t_len == 0 {
        return Err(Error::InvalidInput("series length must be at least 1".into()));
    }
    let (p01, p11) = autologistic_transitions(intercept, slope);
    let mut rng = substream(seed, Purpose::Dgp, 0, 0);
    let mut y = i64::from(rng.random::<f64>() < stationary_one(p01, p11));
    let mut out = Vec::with_capacity(t_len);
    out.push(y);
    for _ in 1..t_len {
        let p = if y == 1 { p11 } else { p01 };
        y = i64::from(rng.random::<f64>() < p);
        out.push(y);
    }
    Ok(out)
}

/// `(Pr(1 | 0), Pr(1 | 1))`.
pub fn autologistic_transitions(intercept: f64, slope: f64) -> (f64, f64) {
    (sigmoid(intercept), sigmoid(intercept + slope))
}

/// Stationary `Pr(Y = 1)` of a two-state chain.
pub fn stationary_one(p01: f64, p11: f64) -> f64 {
    p01 / (p01 + 1.0 - p11)
}

/// Poisson pmf on `0..=max`, with the upper tail folded into `max`.
pub fn poisson_margin(rate: f64, tail: f64) -> Result<OrdinalMargin> {
    let dist = Poisson::new(rate).map_err(|e| Error::InvalidParameter(format!("Poisson rate {rate}: {e}")))?;
    let mut pmf = Vec::new();
    let mut total = 0.0;
    while 1.0 - total > tail || pmf.is_empty() {
        let p = dist.pmf(pmf.len() as u64);
        total += p;
        pmf.push(p);
    }
    *pmf.last_mut().expect("nonempty") += (1.0 - total).max(0.0);
    OrdinalMargin::from_pmf((0..pmf.len() as i64).collect(), &pmf)
}

/// One path of length `t_len` from `vine`, mapped through `margins`.
pub fn dvine_series(vine: &Dvine, margins: &[Margin], t_len: usize, seed: u64) -> Result<Vec<SeriesData>> {
    let r = vine.r();
    if margins.len() != r {
        return Err(Error::InvalidInput(format!("{} margins for {r} series", margins.len())));
    }
    let u = vine
        .simulate(t_len, 1, seed)?
        .pop()
        .ok_or_else(|| Error::Numerical("simulation returned no path".into()))?;
    Ok(margins
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let col = u.iter().skip(j).step_by(r);
            match m {
                Margin::Ordinal(o) => SeriesData::Discrete(col.map(|&x| o.quantile(x)).collect()),
                Margin::Continuous(c) => SeriesData::Continuous(col.map(|&x| c.quantile(x)).collect()),
            }
        })
        .collect())
}
