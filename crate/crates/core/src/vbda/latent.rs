//! Variational families for the latent uniforms on their boxes.
//!
//! * `VA1`: independent uniforms, no parameters.
//! * `VA2`: `u = a + (b - a) Phi(z)` with independent `z_t ~ N(eta_t, exp(2 c_t))`.
//! * `VA3`: as VA2 but `z ~ N(eta, (L L^T)^-1)` with `L` lower bidiagonal.
//!
//! Log-densities are of `u`, i.e. they include the Jacobian of `z -> u`.

use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_ppf};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "VA1")]
    Va1,
    #[serde(rename = "VA2")]
    Va2,
    #[serde(rename = "VA3")]
    Va3,
}

impl Variant {
    pub fn from_number(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Variant::Va1),
            2 => Ok(Variant::Va2),
            3 => Ok(Variant::Va3),
            _ => Err(Error::InvalidInput(format!("latent approximation must be 1, 2 or 3, got {v}"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Variant::Va1 => 1,
            Variant::Va2 => 2,
            Variant::Va3 => 3,
        }
    }
}

/// A draw of the latent block: `u` on the boxes and the normal scores `z` behind it.
#[derive(Debug, Clone)]
pub struct LatentDraw {
    pub u: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentVA {
    variant: Variant,
    eta: Vec<f64>,
    /// VA2: `log omega`.
    log_omega: Vec<f64>,
    /// VA3: diagonal of `L`.
    l_diag: Vec<f64>,
    /// VA3: `L[i+1, i]`.
    l_band: Vec<f64>,
}

impl LatentVA {
    pub fn n_lambda(variant: Variant, n_d: usize) -> usize {
        match variant {
            Variant::Va1 => 0,
            Variant::Va2 => 2 * n_d,
            Variant::Va3 => (3 * n_d).saturating_sub(1),
        }
    }

    /// `eta = 0`, `omega = 1`, `L = I`.
    pub fn init(variant: Variant, n_d: usize) -> Self {
        let (log_omega, l_diag, l_band) = match variant {
            Variant::Va1 => (vec![], vec![], vec![]),
            Variant::Va2 => (vec![0.0; n_d], vec![], vec![]),
            Variant::Va3 => (vec![], vec![1.0; n_d], vec![0.0; n_d.saturating_sub(1)]),
        };
        let eta = if variant == Variant::Va1 { vec![] } else { vec![0.0; n_d] };
        Self {
            variant,
            eta,
            log_omega,
            l_diag,
            l_band,
        }
    }

    pub fn va2(eta: Vec<f64>, log_omega: Vec<f64>) -> Result<Self> {
        if eta.len() != log_omega.len() {
            return Err(Error::InvalidInput("eta and log omega lengths differ".into()));
        }
        Ok(Self {
            variant: Variant::Va2,
            eta,
            log_omega,
            l_diag: vec![],
            l_band: vec![],
        })
    }

    pub fn va3(eta: Vec<f64>, l_diag: Vec<f64>, l_band: Vec<f64>) -> Result<Self> {
        if eta.len() != l_diag.len() || l_band.len() != eta.len().saturating_sub(1) {
            return Err(Error::InvalidInput("inconsistent band-1 Cholesky dimensions".into()));
        }
        if l_diag.contains(&0.0) {
            return Err(Error::Numerical("zero on the Cholesky diagonal".into()));
        }
        Ok(Self {
            variant: Variant::Va3,
            eta,
            log_omega: vec![],
            l_diag,
            l_band,
        })
    }

    pub fn from_lambda(variant: Variant, n_d: usize, lambda: &[f64]) -> Result<Self> {
        let need = Self::n_lambda(variant, n_d);
        if lambda.len() != need {
            return Err(Error::InvalidInput(format!("expected {need} latent parameters, got {}", lambda.len())));
        }
        match variant {
            Variant::Va1 => Ok(Self::init(Variant::Va1, n_d)),
            Variant::Va2 => Self::va2(lambda[..n_d].to_vec(), lambda[n_d..].to_vec()),
            Variant::Va3 => Self::va3(
                lambda[..n_d].to_vec(),
                lambda[n_d..2 * n_d].to_vec(),
                lambda[2 * n_d..].to_vec(),
            ),
        }
    }

    pub fn to_lambda(&self) -> Vec<f64> {
        let mut out = self.eta.clone();
        out.extend(&self.log_omega);
        out.extend(&self.l_diag);
        out.extend(&self.l_band);
        out
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn log_omega(&self) -> &[f64] {
        &self.log_omega
    }

    pub fn l_diag(&self) -> &[f64] {
        &self.l_diag
    }

    pub fn l_band(&self) -> &[f64] {
        &self.l_band
    }

    /// Draws `u` inside every box.
    pub fn sample<R: Rng + ?Sized>(&self, boxes: &[(f64, f64)], rng: &mut R) -> LatentDraw {
        let n = boxes.len();
        let z: Vec<f64> = match self.variant {
            Variant::Va1 => {
                let u = boxes
                    .iter()
                    .map(|&(a, b)| inside(a, b, a + (b - a) * rng.random::<f64>()))
                    .collect();
                return LatentDraw { u, z: vec![] };
            }
            Variant::Va2 => (0..n)
                .map(|i| self.eta[i] + self.log_omega[i].exp() * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            Variant::Va3 => {
                let eps: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                // Solve L^T y = eps, upper bidiagonal.
                let mut y = vec![0.0; n];
                for i in (0..n).rev() {
                    let carry = if i + 1 < n { self.l_band[i] * y[i + 1] } else { 0.0 };
                    y[i] = (eps[i] - carry) / self.l_diag[i];
                }
                (0..n).map(|i| self.eta[i] + y[i]).collect()
            }
        };
        let u = z
            .iter()
            .zip(boxes)
            .map(|(&zi, &(a, b))| inside(a, b, a + (b - a) * norm_cdf(zi)))
            .collect();
        LatentDraw { u, z }
    }

    /// Recovers the normal scores of `u` (not needed for VA1).
    pub fn scores_of(&self, u: &[f64], boxes: &[(f64, f64)]) -> Vec<f64> {
        if self.variant == Variant::Va1 {
            return vec![];
        }
        u.iter()
            .zip(boxes)
            .map(|(&x, &(a, b))| norm_ppf(((inside(a, b, x) - a) / (b - a)).clamp(1e-300, 1.0 - 1e-16)))
            .collect()
    }

    /// `log q(u)` from the normal scores of a draw.
    pub fn log_density(&self, draw: &LatentDraw, boxes: &[(f64, f64)]) -> f64 {
        self.log_density_and_score(draw, boxes, false).0
    }

    /// `log q(u)` and, when `want_score`, its gradient in `to_lambda` order.
    pub fn log_density_and_score(&self, draw: &LatentDraw, boxes: &[(f64, f64)], want_score: bool) -> (f64, Vec<f64>) {
        let log_width: f64 = boxes.iter().map(|(a, b)| (b - a).ln()).sum();
        let z = &draw.z;
        let n = boxes.len();
        match self.variant {
            Variant::Va1 => (-log_width, vec![]),
            Variant::Va2 => {
                let mut lq = -log_width;
                let mut score = if want_score { vec![0.0; 2 * n] } else { vec![] };
                for i in 0..n {
                    let x = z[i] - self.eta[i];
                    let c = self.log_omega[i];
                    let prec = (-2.0 * c).exp();
                    lq += 0.5 * z[i] * z[i] - c - 0.5 * x * x * prec;
                    if want_score {
                        score[i] = x * prec;
                        score[n + i] = x * x * prec - 1.0;
                    }
                }
                (lq, score)
            }
            Variant::Va3 => {
                let x: Vec<f64> = (0..n).map(|i| z[i] - self.eta[i]).collect();
                // w = L^T x
                let w: Vec<f64> = (0..n)
                    .map(|i| self.l_diag[i] * x[i] + if i + 1 < n { self.l_band[i] * x[i + 1] } else { 0.0 })
                    .collect();
                let mut lq = -log_width;
                for i in 0..n {
                    lq += self.l_diag[i].abs().ln() - 0.5 * w[i] * w[i] + 0.5 * z[i] * z[i];
                }
                if !want_score {
                    return (lq, vec![]);
                }
                let mut score = Vec::with_capacity(Self::n_lambda(Variant::Va3, n));
                // grad eta = L w
                for i in 0..n {
                    let below = if i > 0 { self.l_band[i - 1] * w[i - 1] } else { 0.0 };
                    score.push(self.l_diag[i] * w[i] + below);
                }
                for i in 0..n {
                    score.push(1.0 / self.l_diag[i] - x[i] * w[i]);
                }
                for i in 0..n.saturating_sub(1) {
                    score.push(-x[i + 1] * w[i]);
                }
                (lq, score)
            }
        }
    }
}

/// Keeps `x` strictly inside `[a, b)` without leaving `(0, 1)`.
pub(crate) fn inside(a: f64, b: f64, x: f64) -> f64 {
    let pad = (b - a) * 1e-12;
    let lo = (a + pad).max(a.next_up());
    let hi = (b - pad).min(b.next_down());
    x.clamp(lo, hi.max(lo))
}
