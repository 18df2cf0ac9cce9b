//! Bivariate copula kernel.
//!
//! The building block is the Gumbel copula in its Kendall-tau
//! parameterization, `theta = 1 / (1 - tau)`. A convex Gumbel mixes it with
//! its survival (180 degree) rotation, and the five-parameter mixture puts a
//! convex Gumbel on `(u, v)` and a second one on `(1 - u, v)`, so that all four
//! 90 degree rotations appear:
//!
//! | component | weight            | copula                       |
//! |-----------|-------------------|------------------------------|
//! | R0        | `w * da`          | `G_a(u, v)`                  |
//! | R180      | `w * (1 - da)`    | `u + v - 1 + G_a(1-u, 1-v)`  |
//! | R90       | `(1 - w) * db`    | `v - G_b(1-u, v)`            |
//! | R270      | `(1 - w) * (1-db)`| `u - G_b(u, 1-v)`            |
//!
//! Densities are evaluated in log space and all arguments are clamped to
//! `(EPS_U, 1 - EPS_U)`.

use crate::error::{Error, Result};
use crate::special::{clamp_unit, log_add_exp, logistic_log_pdf, logit, sigmoid, EPS_U};
use serde::{Deserialize, Serialize};

/// Upper bound on Kendall's tau of any Gumbel component.
pub const TAU_MAX: f64 = 0.99;

const BOUNDARY_NUDGE: f64 = 1e-8;

/// Gumbel copula with Kendall's tau in `[0, TAU_MAX)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GumbelParam {
    pub tau: f64,
}

impl GumbelParam {
    pub fn new(tau: f64) -> Result<Self> {
        if !(0.0..TAU_MAX).contains(&tau) {
            return Err(Error::InvalidParameter(format!("tau {tau} outside [0, {TAU_MAX})")));
        }
        Ok(Self { tau })
    }

    pub fn theta(&self) -> f64 {
        1.0 / (1.0 - self.tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexGumbelParam {
    pub tau: f64,
    pub delta: f64,
}

/// The five-parameter mixture `(tau_a, delta_a, tau_b, delta_b, w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureParam {
    pub a: ConvexGumbelParam,
    pub b: ConvexGumbelParam,
    pub w: f64,
}

impl MixtureParam {
    pub fn new(tau_a: f64, delta_a: f64, tau_b: f64, delta_b: f64, w: f64) -> Result<Self> {
        Self::from_array([tau_a, delta_a, tau_b, delta_b, w])
    }

    /// Independence copula.
    pub fn independence() -> Self {
        Self {
            a: ConvexGumbelParam { tau: 0.0, delta: 1.0 },
            b: ConvexGumbelParam { tau: 0.0, delta: 1.0 },
            w: 1.0,
        }
    }

    /// A single Gumbel component with the given tau.
    pub fn gumbel(tau: f64) -> Result<Self> {
        Self::new(tau, 1.0, 0.0, 1.0, 1.0)
    }

    pub fn from_array(p: [f64; 5]) -> Result<Self> {
        let [tau_a, delta_a, tau_b, delta_b, w] = p;
        for (name, t) in [("tau_a", tau_a), ("tau_b", tau_b)] {
            if !(0.0..TAU_MAX).contains(&t) {
                return Err(Error::InvalidParameter(format!("{name}={t} outside [0, {TAU_MAX})")));
            }
        }
        for (name, x) in [("delta_a", delta_a), ("delta_b", delta_b), ("w", w)] {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidParameter(format!("{name}={x} outside [0, 1]")));
            }
        }
        Ok(Self {
            a: ConvexGumbelParam { tau: tau_a, delta: delta_a },
            b: ConvexGumbelParam { tau: tau_b, delta: delta_b },
            w,
        })
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.a.tau, self.a.delta, self.b.tau, self.b.delta, self.w]
    }

    pub fn is_independence(&self) -> bool {
        self.a.tau == 0.0 && self.b.tau == 0.0
    }
}

/// Which argument an h-function differentiates (and conditions on).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HDirection {
    /// `dC(u, v)/du`: conditional CDF of the second argument given the first.
    First,
    /// `dC(u, v)/dv`: conditional CDF of the first argument given the second.
    Second,
}

/// Per-argument logs shared by all Gumbel evaluations at one point.
#[derive(Clone, Copy)]
struct ArgLogs {
    ln_x: f64,
    ln_s: f64,
}

impl ArgLogs {
    #[inline]
    fn new(ln_x: f64) -> Self {
        Self {
            ln_x,
            ln_s: (-ln_x).ln(),
        }
    }
}

/// Gumbel quantities at one point: `(log C, log c, dC/dx, dC/dy)`.
#[derive(Clone, Copy, Debug)]
struct GumbelPoint {
    ln_cdf: f64,
    ln_pdf: f64,
    h_x: f64,
    h_y: f64,
}

#[inline]
fn gumbel_point(theta: f64, x: ArgLogs, y: ArgLogs) -> GumbelPoint {
    gumbel_point_opt::<true>(theta, x, y)
}

/// With `H = false` the h-functions are left at 0.
#[inline(always)]
fn gumbel_point_opt<const H: bool>(theta: f64, x: ArgLogs, y: ArgLogs) -> GumbelPoint {
    let ln_a = log_add_exp(theta * x.ln_s, theta * y.ln_s);
    let ln_a_root = ln_a / theta;
    let a_root = ln_a_root.exp();
    let ln_cdf = -a_root;
    let ln_pdf = ln_cdf - (x.ln_x + y.ln_x)
        + (theta - 1.0) * (x.ln_s + y.ln_s)
        + (2.0 / theta - 2.0) * ln_a
        + ((theta - 1.0) / a_root).ln_1p();
    let (h_x, h_y) = if H {
        let common = ln_cdf + (1.0 / theta - 1.0) * ln_a;
        (
            (common - x.ln_x + (theta - 1.0) * x.ln_s).exp(),
            (common - y.ln_x + (theta - 1.0) * y.ln_s).exp(),
        )
    } else {
        (0.0, 0.0)
    };
    GumbelPoint { ln_pdf, ln_cdf, h_x, h_y }
}

/// Gumbel CDF.
pub fn gumbel_cdf(u: f64, v: f64, p: GumbelParam) -> f64 {
    let (u, v) = (clamp_unit(u), clamp_unit(v));
    if p.tau == 0.0 {
        return u * v;
    }
    gumbel_point(p.theta(), ArgLogs::new(u.ln()), ArgLogs::new(v.ln())).ln_cdf.exp()
}

/// Gumbel log-density.
pub fn gumbel_logpdf(u: f64, v: f64, p: GumbelParam) -> f64 {
    if p.tau == 0.0 {
        return 0.0;
    }
    let (u, v) = (clamp_unit(u), clamp_unit(v));
    gumbel_point(p.theta(), ArgLogs::new(u.ln()), ArgLogs::new(v.ln())).ln_pdf
}

/// `dC(u, v)/du` of the Gumbel copula.
pub fn gumbel_hfunc(u: f64, v: f64, p: GumbelParam) -> f64 {
    let (u, v) = (clamp_unit(u), clamp_unit(v));
    if p.tau == 0.0 {
        return v;
    }
    gumbel_point(p.theta(), ArgLogs::new(u.ln()), ArgLogs::new(v.ln())).h_x
}

/// Log-density and both h-functions of a mixture at one point.
#[derive(Debug, Clone, Copy)]
pub struct CellEval {
    pub log_pdf: f64,
    /// `dC/du`
    pub h_first: f64,
    /// `dC/dv`
    pub h_second: f64,
}

#[derive(Clone, Copy, Debug)]
enum Rotation {
    R0,
    R180,
    R90,
    R270,
}

#[derive(Clone, Copy, Debug)]
struct Component {
    ln_weight: f64,
    weight: f64,
    theta: f64,
    rotation: Rotation,
}

/// Mixture pair-copula with precomputed weights, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct PairCopula {
    param: MixtureParam,
    components: Vec<Component>,
    independent: bool,
}

impl PairCopula {
    pub fn new(param: MixtureParam) -> Self {
        let MixtureParam { a, b, w } = param;
        let theta_a = 1.0 / (1.0 - a.tau);
        let theta_b = 1.0 / (1.0 - b.tau);
        let raw = [
            (w * a.delta, theta_a, Rotation::R0),
            (w * (1.0 - a.delta), theta_a, Rotation::R180),
            ((1.0 - w) * b.delta, theta_b, Rotation::R90),
            (
                (1.0 - w) * (1.0 - b.delta),
                theta_b,
                Rotation::R270,
            ),
        ];
        let components: Vec<Component> = raw
            .iter()
            .filter(|(wt, _, _)| *wt > 0.0)
            .map(|&(weight, theta, rotation)| Component {
                ln_weight: weight.ln(),
                weight,
                theta,
                rotation,
            })
            .collect();
        let independent = components.iter().all(|c| c.theta == 1.0);
        Self {
            param,
            components,
            independent,
        }
    }

    pub fn param(&self) -> &MixtureParam {
        &self.param
    }

    pub fn is_independence(&self) -> bool {
        self.independent
    }

    /// Log-density and both h-functions at `(u, v)`.
    pub fn eval(&self, u: f64, v: f64) -> CellEval {
        self.eval_opt::<true>(u, v)
    }

    /// Log-density alone; identical to `eval(u, v).log_pdf`.
    pub fn log_pdf(&self, u: f64, v: f64) -> f64 {
        self.eval_opt::<false>(u, v).log_pdf
    }

    #[inline(always)]
    fn eval_opt<const H: bool>(&self, u: f64, v: f64) -> CellEval {
        let (u, v) = (clamp_unit(u), clamp_unit(v));
        if self.independent {
            return CellEval {
                log_pdf: 0.0,
                h_first: v,
                h_second: u,
            };
        }
        let lu = ArgLogs::new(u.ln());
        let lu1 = ArgLogs::new((-u).ln_1p());
        let lv = ArgLogs::new(v.ln());
        let lv1 = ArgLogs::new((-v).ln_1p());
        let mut terms = [f64::NEG_INFINITY; 4];
        let mut h_first = 0.0;
        let mut h_second = 0.0;
        for (c, term) in self.components.iter().zip(terms.iter_mut()) {
            let (x, y) = match c.rotation {
                Rotation::R0 => (lu, lv),
                Rotation::R180 => (lu1, lv1),
                Rotation::R90 => (lu1, lv),
                Rotation::R270 => (lu, lv1),
            };
            let g = gumbel_point_opt::<H>(c.theta, x, y);
            *term = c.ln_weight + g.ln_pdf;
            if H {
                let (hx, hy) = match c.rotation {
                    Rotation::R0 => (g.h_x, g.h_y),
                    Rotation::R180 => (1.0 - g.h_x, 1.0 - g.h_y),
                    Rotation::R90 => (g.h_x, 1.0 - g.h_y),
                    Rotation::R270 => (1.0 - g.h_x, g.h_y),
                };
                h_first += c.weight * hx;
                h_second += c.weight * hy;
            }
        }
        let terms = &terms[..self.components.len()];
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_pdf = if top.is_infinite() {
            top
        } else {
            top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
        };
        CellEval {
            log_pdf,
            h_first: h_first.clamp(0.0, 1.0),
            h_second: h_second.clamp(0.0, 1.0),
        }
    }

    pub fn hfunc(&self, u: f64, v: f64, dir: HDirection) -> f64 {
        let e = self.eval(u, v);
        match dir {
            HDirection::First => e.h_first,
            HDirection::Second => e.h_second,
        }
    }

    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        let (u, v) = (clamp_unit(u), clamp_unit(v));
        if self.independent {
            return u * v;
        }
        let lu = ArgLogs::new(u.ln());
        let lu1 = ArgLogs::new((-u).ln_1p());
        let lv = ArgLogs::new(v.ln());
        let lv1 = ArgLogs::new((-v).ln_1p());
        let mut c = 0.0;
        for comp in &self.components {
            let val = match comp.rotation {
                Rotation::R0 => gumbel_point(comp.theta, lu, lv).ln_cdf.exp(),
                Rotation::R180 => u + v - 1.0 + gumbel_point(comp.theta, lu1, lv1).ln_cdf.exp(),
                Rotation::R90 => v - gumbel_point(comp.theta, lu1, lv).ln_cdf.exp(),
                Rotation::R270 => u - gumbel_point(comp.theta, lu, lv1).ln_cdf.exp(),
            };
            c += comp.weight * val;
        }
        c.clamp(0.0, u.min(v))
    }

    /// Solves `hfunc(., given, dir) = q` for the free argument.
    ///
    /// For `HDirection::Second` the free argument is `u` (conditioning on
    /// `v = given`); for `HDirection::First` it is `v` (conditioning on
    /// `u = given`).
    pub fn hfunc_inv(&self, q: f64, given: f64, dir: HDirection) -> Result<f64> {
        if self.independent {
            return Ok(clamp_unit(q));
        }
        let eval = |x: f64| -> (f64, f64) {
            let e = match dir {
                HDirection::Second => self.eval(x, given),
                HDirection::First => self.eval(given, x),
            };
            let h = match dir {
                HDirection::First => e.h_first,
                HDirection::Second => e.h_second,
            };
            (h, e.log_pdf.exp())
        };
        invert_monotone(q, eval).ok_or(Error::InversionFailed {
            q,
            given,
            params: self.param.to_array(),
        })
    }
}

const INVERSION_MAX_ITER: usize = 200;

/// Safeguarded Newton with bisection fallback on `(EPS_U, 1 - EPS_U)`.
fn invert_monotone(q: f64, f: impl Fn(f64) -> (f64, f64)) -> Option<f64> {
    let mut lo = EPS_U;
    let mut hi = 1.0 - EPS_U;
    let (h_lo, _) = f(lo);
    if q <= h_lo {
        return Some(lo);
    }
    let (h_hi, _) = f(hi);
    if q >= h_hi {
        return Some(hi);
    }
    let mut x = q.clamp(lo, hi);
    let mut dx_old = hi - lo;
    for _ in 0..INVERSION_MAX_ITER {
        let (h, dens) = f(x);
        let r = h - q;
        if r == 0.0 {
            return Some(x);
        }
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - r / dens;
        // Newton only while it at least halves the previous step, so
        // oscillation around an inflection falls back to bisection.
        let next = if dens > 0.0 && newton > lo && newton < hi && 2.0 * (newton - x).abs() <= dx_old {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - x).abs();
        dx_old = step;
        x = next;
        if (step <= 1e-15 && r.abs() <= 1e-10) || hi - lo <= 2e-16 * hi.max(1e-300) {
            return Some(x);
        }
    }
    None
}

/// Log-density of the mixture.
pub fn mix_logpdf(u: f64, v: f64, p: &MixtureParam) -> f64 {
    PairCopula::new(*p).log_pdf(u, v)
}

/// CDF of the mixture.
pub fn mix_cdf(u: f64, v: f64, p: &MixtureParam) -> f64 {
    PairCopula::new(*p).cdf(u, v)
}

/// h-function of the mixture; see [`HDirection`].
pub fn hfunc(u: f64, v: f64, p: &MixtureParam, dir: HDirection) -> f64 {
    PairCopula::new(*p).hfunc(u, v, dir)
}

/// Inverse h-function; see [`PairCopula::hfunc_inv`].
pub fn hfunc_inv(q: f64, given: f64, p: &MixtureParam, dir: HDirection) -> Result<f64> {
    PairCopula::new(*p).hfunc_inv(q, given, dir)
}

/// Logit image of a mixture parameter, tau components scaled by `TAU_MAX`.
pub fn transform(p: &MixtureParam) -> [f64; 5] {
    let nudge = |x: f64| x.clamp(BOUNDARY_NUDGE, 1.0 - BOUNDARY_NUDGE);
    [
        logit(nudge(p.a.tau / TAU_MAX)),
        logit(nudge(p.a.delta)),
        logit(nudge(p.b.tau / TAU_MAX)),
        logit(nudge(p.b.delta)),
        logit(nudge(p.w)),
    ]
}

/// Maps five unconstrained reals back into the parameter box.
pub fn inverse_transform(psi: &[f64]) -> MixtureParam {
    debug_assert_eq!(psi.len(), 5);
    MixtureParam {
        a: ConvexGumbelParam {
            tau: TAU_MAX * sigmoid(psi[0]),
            delta: sigmoid(psi[1]),
        },
        b: ConvexGumbelParam {
            tau: TAU_MAX * sigmoid(psi[2]),
            delta: sigmoid(psi[3]),
        },
        w: sigmoid(psi[4]),
    }
}

/// Log prior on the unconstrained scale: independent standard logistic densities.
pub fn log_prior_psi(psi: &[f64]) -> f64 {
    psi.iter().map(|&x| logistic_log_pdf(x)).sum()
}
