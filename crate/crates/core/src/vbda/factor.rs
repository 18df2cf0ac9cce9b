//! Gaussian with factor covariance `B B^T + D^2`, where `B` is `n x K` lower
//! trapezoidal and `D = diag(d)`. Inverses and determinants go through a thin
//! QR factorization of the `(n + K) x K` matrix `[D^-1 B; I]` (Woodbury with
//! `G = I + B^T D^-2 B = R^T R`).

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone)]
pub struct FactorGaussian {
    mu: DVector<f64>,
    b: DMatrix<f64>,
    d: DVector<f64>,
    dinv: DVector<f64>,
    /// Thin `Q` of the QR factorization of `[D^-1 B; I]`.
    q: DMatrix<f64>,
    /// `Sigma^-1 B`.
    sinv_b: DMatrix<f64>,
    /// `diag(Sigma^-1)`.
    sinv_diag: DVector<f64>,
    log_det: f64,
}

/// Length of the lower-trapezoidal `vech(B)`.
pub fn vech_len(n: usize, k: usize) -> usize {
    n * k - k * k.saturating_sub(1) / 2
}

impl FactorGaussian {
    pub fn new(mu: Vec<f64>, b: DMatrix<f64>, d: Vec<f64>) -> Result<Self> {
        let n = mu.len();
        let k = b.ncols();
        if b.nrows() != n || d.len() != n {
            return Err(Error::InvalidInput("factor Gaussian dimensions disagree".into()));
        }
        if k > 0 && k >= n {
            return Err(Error::InvalidInput(format!("need K < n, got K={k}, n={n}")));
        }
        if d.iter().any(|x| *x == 0.0 || !x.is_finite()) || mu.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Numerical("factor Gaussian has a zero or non-finite entry".into()));
        }
        let mut b = b;
        for j in 0..k {
            for i in 0..j.min(n) {
                b[(i, j)] = 0.0;
            }
        }
        let d = DVector::from_vec(d);
        let dinv = d.map(|x| 1.0 / x);
        // With M = D^-1 B, Sigma = D (I + M M^T) D and (I + M M^T)^-1 is the
        // top-left block of the projector off the columns of [M; I]. Working
        // with an orthonormal basis of that span never forms I + M^T M, whose
        // condition number squares that of M when some d_i is near zero.
        let mut stacked = DMatrix::zeros(n + k, k);
        for j in 0..k {
            for i in 0..n {
                stacked[(i, j)] = b[(i, j)] * dinv[i];
            }
            stacked[(n + j, j)] = 1.0;
        }
        let (q, ln_det_g) = if k == 0 {
            (DMatrix::zeros(n, 0), 0.0)
        } else {
            let qr = stacked.qr();
            let ln_det_g = 2.0 * qr.r().diagonal().iter().map(|x| x.abs().ln()).sum::<f64>();
            (qr.q(), ln_det_g)
        };
        if !ln_det_g.is_finite() {
            return Err(Error::Numerical("factor covariance is degenerate".into()));
        }
        // (I + M M^T)^-1 M is the top block of the projection of [M; 0],
        // which reduces to Q_top Q_bottom^T.
        let proj_m = if k == 0 {
            DMatrix::zeros(n, 0)
        } else {
            q.rows(0, n) * q.rows(n, k).transpose()
        };
        let sinv_b = DMatrix::from_fn(n, k, |i, j| dinv[i] * proj_m[(i, j)]);
        let sinv_diag = DVector::from_fn(n, |i, _| {
            let qi = if k == 0 { 0.0 } else { q.row(i).norm_squared() };
            dinv[i] * dinv[i] * (1.0 - qi)
        });
        let log_det = d.iter().map(|x| (x * x).ln()).sum::<f64>() + ln_det_g;
        Ok(Self {
            mu: DVector::from_vec(mu),
            b,
            d,
            dinv,
            q,
            sinv_b,
            sinv_diag,
            log_det,
        })
    }

    /// Unpacks `[mu (n), vech B, d (n)]`.
    pub fn from_lambda(lambda: &[f64], n: usize, k: usize) -> Result<Self> {
        let need = 2 * n + vech_len(n, k);
        if lambda.len() != need {
            return Err(Error::InvalidInput(format!("expected {need} values, got {}", lambda.len())));
        }
        let mu = lambda[..n].to_vec();
        let mut b = DMatrix::zeros(n, k);
        let mut pos = n;
        for j in 0..k {
            for i in j..n {
                b[(i, j)] = lambda[pos];
                pos += 1;
            }
        }
        let d = lambda[pos..pos + n].to_vec();
        Self::new(mu, b, d)
    }

    pub fn to_lambda(&self) -> Vec<f64> {
        let (n, k) = (self.n(), self.k());
        let mut out = Vec::with_capacity(2 * n + vech_len(n, k));
        out.extend(self.mu.iter());
        for j in 0..k {
            for i in j..n {
                out.push(self.b[(i, j)]);
            }
        }
        out.extend(self.d.iter());
        out
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn k(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_lambda(&self) -> usize {
        2 * self.n() + vech_len(self.n(), self.k())
    }

    pub fn mu(&self) -> &[f64] {
        self.mu.as_slice()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn d(&self) -> &[f64] {
        self.d.as_slice()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.b * self.b.transpose() + DMatrix::from_diagonal(&self.d.map(|x| x * x))
    }

    /// Marginal standard deviations.
    pub fn sd(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| (self.b.row(i).norm_squared() + self.d[i] * self.d[i]).sqrt())
            .collect()
    }

    /// `mu + B z + d * eps`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.k()).map(|_| rng.sample(StandardNormal)).collect();
        (0..self.n())
            .map(|i| {
                let eps: f64 = rng.sample(StandardNormal);
                let bz: f64 = (0..self.k().min(i + 1)).map(|j| self.b[(i, j)] * z[j]).sum();
                self.mu[i] + bz + self.d[i] * eps
            })
            .collect()
    }

    /// `Sigma^-1 (theta - mu)` and the quadratic form `r^T Sigma^-1 r`.
    ///
    /// Both come from the least-squares residual of `[D^-1 r; 0]` against the
    /// columns of `[D^-1 B; I]`: the form is its squared norm and the top block,
    /// scaled by `D^-1`, is `Sigma^-1 r`.
    fn precision_times(&self, theta: &[f64]) -> (DVector<f64>, f64) {
        let n = self.n();
        let mut w = DVector::zeros(n + self.k());
        for i in 0..n {
            w[i] = (theta[i] - self.mu[i]) * self.dinv[i];
        }
        let resid = if self.k() == 0 {
            w
        } else {
            let c = self.q.transpose() * &w;
            w - &self.q * c
        };
        let v = DVector::from_fn(n, |i, _| resid[i] * self.dinv[i]);
        (v, resid.norm_squared())
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let (_, quad) = self.precision_times(theta);
        -0.5 * (self.n() as f64 * LN_2PI + self.log_det + quad)
    }

    /// Log-density and its gradient in `[mu, vech B, d]` order.
    pub fn log_density_and_score(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (n, k) = (self.n(), self.k());
        let (v, quad) = self.precision_times(theta);
        let logq = -0.5 * (n as f64 * LN_2PI + self.log_det + quad);
        let mut score = Vec::with_capacity(self.n_lambda());
        score.extend(v.iter());
        let vtb = self.b.transpose() * &v;
        for j in 0..k {
            for i in j..n {
                score.push(-self.sinv_b[(i, j)] + v[i] * vtb[j]);
            }
        }
        for i in 0..n {
            score.push(self.d[i] * (v[i] * v[i] - self.sinv_diag[i]));
        }
        (logq, score)
    }
}
