//! Score-function gradient of the lower bound with per-coordinate control variates.

use crate::special::compensated_sum;

/// One Monte Carlo sample: `f = log h - log q` and `grad_lambda log q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEval {
    pub f: f64,
    pub score: Vec<f64>,
}

impl SampleEval {
    pub fn is_finite(&self) -> bool {
        self.f.is_finite() && self.score.iter().all(|x| x.is_finite())
    }
}

/// Below this sample variance of a score coordinate its control variate is 0.
pub const CV_VARIANCE_FLOOR: f64 = 1e-12;

/// `cv_i = Cov(f s_i, s_i) / Var(s_i)` over the samples.
pub fn control_variates(samples: &[SampleEval]) -> Vec<f64> {
    let Some(first) = samples.first() else {
        return vec![];
    };
    let n = samples.len() as f64;
    (0..first.score.len())
        .map(|i| {
            let mean_s = compensated_sum(samples.iter().map(|s| s.score[i])) / n;
            let mean_fs = compensated_sum(samples.iter().map(|s| s.f * s.score[i])) / n;
            let mut cov = 0.0;
            let mut var = 0.0;
            for s in samples {
                let ds = s.score[i] - mean_s;
                cov += (s.f * s.score[i] - mean_fs) * ds;
                var += ds * ds;
            }
            let denom = n - 1.0;
            let var = var / denom;
            if var.is_nan() || var < CV_VARIANCE_FLOOR {
                0.0
            } else {
                (cov / denom) / var
            }
        })
        .collect()
}

/// `g_i = mean((f - cv_i) s_i)`.
pub fn gradient(samples: &[SampleEval], cv: &[f64]) -> Vec<f64> {
    let n = samples.len() as f64;
    cv.iter()
        .enumerate()
        .map(|(i, &c)| compensated_sum(samples.iter().map(|s| (s.f - c) * s.score[i])) / n)
        .collect()
}

/// Mean of `f`, the lower-bound estimate.
pub fn lower_bound(samples: &[SampleEval]) -> f64 {
    compensated_sum(samples.iter().map(|s| s.f)) / samples.len() as f64
}
