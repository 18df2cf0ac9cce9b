//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs every criterion by default; pass numbers to pick some, e.g.
//! `cargo test --release --test acceptance -- 1 4 10`. The process exits 0
//! after reporting unless `ACCEPTANCE_STRICT=1`, in which case any FAIL
//! makes it exit 1.

use dvine_vbda::analysis::{spearman_report, spearman_single, vb_spec_draws};
use dvine_vbda::data::{AugmentedData, SeriesData};
use dvine_vbda::dgp::{autologistic, dvine_series, poisson_margin};
use dvine_vbda::dvine::{discrete_loglik_oracle, n_pairs, Dvine, DvineSpec, Lattice};
use dvine_vbda::margins::{ContinuousMargin, Margin, OrdinalMargin};
use dvine_vbda::mcmc::{run_sampler, McmcConfig};
use dvine_vbda::paircopula::{hfunc, hfunc_inv, log_prior_psi, mix_cdf, HDirection, MixtureParam, PairCopula};
use dvine_vbda::quad::gauss_legendre_unit;
use dvine_vbda::rng::{substream, Purpose, StreamRng};
use dvine_vbda::vbda::adadelta::AdadeltaState;
use dvine_vbda::vbda::factor::{vech_len, FactorGaussian};
use dvine_vbda::vbda::latent::{LatentVA, Variant};
use dvine_vbda::vbda::{evaluate_step, fit_dvine, DvineTarget, FitResult, ModelTemplate, VbConfig, VbState};
use rand::Rng;
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> StreamRng {
    substream(seed, Purpose::Simulate, 0, 0)
}

fn random_params(n: usize, seed: u64, tau_max: f64) -> Vec<MixtureParam> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            MixtureParam::new(
                r.random_range(0.0..tau_max),
                r.random(),
                r.random_range(0.0..tau_max),
                r.random(),
                r.random(),
            )
            .unwrap()
        })
        .collect()
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

fn c1_kernel() -> Outcome {
    let mut indep_exact = true;
    let mut r = rng(1);
    for _ in 0..20 {
        let p = MixtureParam::new(0.0, r.random(), 0.0, r.random(), r.random()).unwrap();
        let pc = PairCopula::new(p);
        for _ in 0..100 {
            let (u, v): (f64, f64) = (r.random(), r.random());
            indep_exact &= pc.log_pdf(u, v) == 0.0;
        }
    }

    let (x, w) = gauss_legendre_unit(200);
    let mut mass_err: f64 = 0.0;
    for p in random_params(20, 2, 0.8) {
        let pc = PairCopula::new(p);
        let mut mass = 0.0;
        for (i, &u) in x.iter().enumerate() {
            for (j, &v) in x.iter().enumerate() {
                mass += w[i] * w[j] * pc.log_pdf(u, v).exp();
            }
        }
        mass_err = mass_err.max((mass - 1.0).abs());
    }

    let h = 1e-6;
    let mut fd_err: f64 = 0.0;
    for p in random_params(20, 3, 0.8) {
        for i in 1..=5 {
            for j in 1..=5 {
                let (u, v) = (i as f64 / 6.0, j as f64 / 6.0);
                let fd_u = (mix_cdf(u + h, v, &p) - mix_cdf(u - h, v, &p)) / (2.0 * h);
                let fd_v = (mix_cdf(u, v + h, &p) - mix_cdf(u, v - h, &p)) / (2.0 * h);
                fd_err = fd_err.max((hfunc(u, v, &p, HDirection::First) - fd_u).abs());
                fd_err = fd_err.max((hfunc(u, v, &p, HDirection::Second) - fd_v).abs());
            }
        }
    }

    let mut inv_err: f64 = 0.0;
    let mut r = rng(4);
    for p in random_params(200, 5, 0.95) {
        let (x, given) = (r.random_range(0.001..0.999), r.random_range(0.001..0.999));
        if PairCopula::new(p).log_pdf(x, given).exp() <= 1e-3 {
            continue;
        }
        for dir in [HDirection::First, HDirection::Second] {
            let q = match dir {
                HDirection::Second => hfunc(x, given, &p, dir),
                HDirection::First => hfunc(given, x, &p, dir),
            };
            let back = hfunc_inv(q, given, &p, dir).unwrap();
            inv_err = inv_err.max((back - x).abs());
        }
    }
    outcome(
        indep_exact && mass_err < 1e-3 && fd_err < 1e-5 && inv_err < 1e-8,
        format!(
            "independence exact {indep_exact}; max |mass-1| {mass_err:.1e} (tol 1e-3); \
             max |h-FD| {fd_err:.1e} (tol 1e-5); max round trip {inv_err:.1e} (tol 1e-8)"
        ),
    )
}

fn c2_normalization() -> Outcome {
    let spec = DvineSpec::new(1, 2, random_params(n_pairs(1, 2), 6, 0.6)).unwrap();
    let vine = Dvine::new(spec);
    let n = 1_000_000;
    let mut r = rng(7);
    let vals: Vec<f64> = (0..n)
        .map(|_| {
            let u: [f64; 4] = std::array::from_fn(|_| r.random());
            vine.log_density(&u).unwrap().exp()
        })
        .collect();
    let (m, sd) = mean_sd(&vals);
    let se = sd / (n as f64).sqrt();

    let mut identical = true;
    for seed in 0..5 {
        let vine = Dvine::new(DvineSpec::new(1, 3, random_params(n_pairs(1, 3), 10 + seed, 0.9)).unwrap());
        let mut r = rng(20 + seed);
        let u: Vec<f64> = (0..40).map(|_| r.random()).collect();
        let mut lat = Lattice::new(&vine, 1);
        let mut generic = 0.0;
        for &x in &u {
            generic += lat.push(x).unwrap();
        }
        identical &= vine.log_density(&u).unwrap().to_bits() == generic.to_bits();
    }
    outcome(
        (m - 1.0).abs() < 3.0 * se && identical,
        format!("MC mass {m:.5} (|m-1| = {:.2} SE, tol 3); univariate path bit-identical {identical}", (m - 1.0).abs() / se),
    )
}

fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / fd.abs().max(1e-3)
}

fn c3_gradients() -> Outcome {
    const H: f64 = 1e-5;
    let mut r = rng(8);
    let mut worst: f64 = 0.0;
    for (n, k) in [(1, 0), (4, 1), (7, 2), (10, 3)] {
        let mut lam: Vec<f64> = (0..2 * n + vech_len(n, k)).map(|_| r.random_range(-0.8..0.8)).collect();
        for d in lam.iter_mut().skip(n + vech_len(n, k)) {
            *d = r.random_range(0.3..1.5) * if r.random::<bool>() { 1.0 } else { -1.0 };
        }
        let q = FactorGaussian::from_lambda(&lam, n, k).unwrap();
        let theta: Vec<f64> = (0..n).map(|_| r.random_range(-1.5..1.5)).collect();
        let (_, score) = q.log_density_and_score(&theta);
        for i in 0..lam.len() {
            let (mut up, mut dn) = (lam.clone(), lam.clone());
            up[i] += H;
            dn[i] -= H;
            let fd = (FactorGaussian::from_lambda(&up, n, k).unwrap().log_density(&theta)
                - FactorGaussian::from_lambda(&dn, n, k).unwrap().log_density(&theta))
                / (2.0 * H);
            worst = worst.max(rel_err(score[i], fd));
        }
    }
    for n_d in [1, 4, 8] {
        let boxes: Vec<(f64, f64)> = (0..n_d)
            .map(|_| {
                let a = r.random_range(0.0..0.7);
                (a, a + r.random_range(0.05..0.3))
            })
            .collect();
        let va2: Vec<f64> = (0..2 * n_d).map(|_| r.random_range(-0.7..0.7)).collect();
        let mut va3: Vec<f64> = (0..n_d).map(|_| r.random_range(-0.7..0.7)).collect();
        va3.extend((0..n_d).map(|_| r.random_range(0.6..1.8)));
        va3.extend((1..n_d).map(|_| r.random_range(-0.6..0.6)));
        for (variant, lam) in [(Variant::Va2, va2), (Variant::Va3, va3)] {
            let va = LatentVA::from_lambda(variant, n_d, &lam).unwrap();
            let draw = va.sample(&boxes, &mut r);
            let (_, score) = va.log_density_and_score(&draw, &boxes, true);
            for i in 0..lam.len() {
                let (mut up, mut dn) = (lam.clone(), lam.clone());
                up[i] += H;
                dn[i] -= H;
                let f = |l: &[f64]| LatentVA::from_lambda(variant, n_d, l).unwrap().log_density(&draw, &boxes);
                worst = worst.max(rel_err(score[i], (f(&up) - f(&dn)) / (2.0 * H)));
            }
        }
    }

    let boxes = vec![(0.0, 0.3), (0.3, 1.0), (0.2, 0.5), (0.5, 0.9)];
    let mut max_z: f64 = 0.0;
    for variant in [Variant::Va1, Variant::Va2, Variant::Va3] {
        let mut lam = VbState::init(&[0.3, -0.2, 0.1, 0.5], boxes.len(), 2, variant, 9).unwrap().to_lambda();
        let na = 2 * 4 + vech_len(4, 2);
        for x in lam.iter_mut().skip(na) {
            *x += r.random_range(-0.3..0.3);
        }
        let state = VbState::from_lambda(&lam, 4, 2, variant, boxes.len()).unwrap();
        let n = 100_000;
        let mut sum = vec![0.0; lam.len()];
        let mut sum_sq = vec![0.0; lam.len()];
        for _ in 0..n {
            let theta = state.factor.sample(&mut r);
            let draw = state.latent.sample(&boxes, &mut r);
            let (_, mut s) = state.factor.log_density_and_score(&theta);
            s.extend(state.latent.log_density_and_score(&draw, &boxes, true).1);
            for i in 0..s.len() {
                sum[i] += s[i];
                sum_sq[i] += s[i] * s[i];
            }
        }
        for i in 0..lam.len() {
            let m = sum[i] / n as f64;
            let se = ((sum_sq[i] / n as f64 - m * m) / n as f64).sqrt();
            if se > 0.0 {
                max_z = max_z.max(m.abs() / se);
            }
        }
    }
    outcome(
        worst <= 1e-5 && max_z < 3.0,
        format!("max FD relative error {worst:.1e} (tol 1e-5); max |E score| {max_z:.2} SE (tol 3)"),
    )
}

fn c4_nesting() -> Outcome {
    let mut r = rng(10);
    let n_d = 8;
    let eta: Vec<f64> = (0..n_d).map(|_| r.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..n_d).map(|_| r.random_range(-1.0..1.0)).collect();
    let l: Vec<f64> = c.iter().map(|x| (-x).exp()).collect();
    let va2 = LatentVA::va2(eta.clone(), c).unwrap();
    let va3 = LatentVA::va3(eta, l.clone(), vec![0.0; n_d - 1]).unwrap();
    let boxes: Vec<(f64, f64)> = (0..n_d).map(|i| (i as f64 / 10.0, i as f64 / 10.0 + 0.1)).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let draw = va2.sample(&boxes, &mut r);
        let (l2, s2) = va2.log_density_and_score(&draw, &boxes, true);
        let (l3, s3) = va3.log_density_and_score(&draw, &boxes, true);
        worst = worst.max((l2 - l3).abs());
        for i in 0..n_d {
            worst = worst.max((s2[i] - s3[i]).abs());
            // c = -log l, so d/dc = -l d/dl
            worst = worst.max((s2[n_d + i] + l[i] * s3[n_d + i]).abs());
        }
    }
    outcome(worst < 1e-12, format!("max difference {worst:.1e} (tol 1e-12)"))
}

fn c5_oracle_posterior() -> Outcome {
    let y = [1, 1, 0, 1, 1];
    let boxes: Vec<(f64, f64)> = y.iter().map(|&v| if v == 0 { (0.0, 0.5) } else { (0.5, 1.0) }).collect();
    let data = AugmentedData::from_boxes(&boxes).unwrap();
    let base = DvineSpec::new(1, 1, vec![MixtureParam::gumbel(0.3).unwrap()]).unwrap();
    let template = ModelTemplate::with_fixed(&base, vec![0]).unwrap();
    let grid: Vec<f64> = (0..200).map(|i| -10.0 + (i as f64 + 0.5) * 0.1).collect();
    let logpost: Vec<f64> = grid
        .iter()
        .map(|&g| {
            let (p, _) = discrete_loglik_oracle(&template.vine(&[g]).unwrap(), &boxes, 1_000_000, 7).unwrap();
            p.ln() + log_prior_psi(&[g])
        })
        .collect();
    let top = logpost.iter().cloned().fold(f64::MIN, f64::max);
    let w: Vec<f64> = logpost.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    let post: Vec<f64> = w.iter().map(|x| x / z).collect();
    let grid_mean: f64 = grid.iter().zip(&post).map(|(g, p)| g * p).sum();

    let chain = run_sampler(&data, &template, &McmcConfig { burnin: 10_000, iterates: 200_000, rw_scales: vec![], seed: 1 })
        .unwrap();
    let mut hist = vec![0.0; 200];
    for d in &chain.draws {
        let i = ((d[0] + 10.0) / 0.1).floor().clamp(0.0, 199.0) as usize;
        hist[i] += 1.0 / chain.draws.len() as f64;
    }
    let tv = 0.5 * hist.iter().zip(&post).map(|(h, p)| (h - p).abs()).sum::<f64>();

    let cfg = VbConfig { samples: 200, steps: 5000, factors: 0, variant: Variant::Va2, seed: 1, ..VbConfig::default() };
    let vb_mean = fit_dvine(&data, &template, &cfg).unwrap().state().unwrap().factor.mu()[0];
    let diff = (vb_mean - grid_mean).abs();
    outcome(
        tv < 0.05 && diff < 0.05,
        format!("chain TV {tv:.4} (tol 0.05); VA2 mean {vb_mean:.3} vs grid {grid_mean:.3}, |diff| {diff:.3} (tol 0.05)"),
    )
}

fn count_series() -> (AugmentedData, Margin) {
    let spec = DvineSpec::new(1, 1, vec![MixtureParam::gumbel(0.5).unwrap()]).unwrap();
    let m = poisson_margin(3.0, 1e-12).unwrap();
    let cols = dvine_series(&Dvine::new(spec), &[Margin::Ordinal(m)], 100, 1).unwrap();
    let SeriesData::Discrete(y) = &cols[0] else {
        unreachable!("Poisson margin gives a discrete series")
    };
    let em = Margin::Ordinal(OrdinalMargin::fit_empirical(y).unwrap());
    (AugmentedData::new(&cols, std::slice::from_ref(&em)).unwrap(), em)
}

fn c6_vb_vs_mcmc() -> Outcome {
    let (data, _) = count_series();
    let template = ModelTemplate::all_free(1, 1);
    let fit = fit_dvine(&data, &template, &VbConfig { samples: 500, steps: 5000, seed: 1, ..VbConfig::default() }).unwrap();
    let q = fit.state().unwrap().factor;
    let chain = run_sampler(&data, &template, &McmcConfig { burnin: 10_000, iterates: 300_000, rw_scales: vec![], seed: 1 })
        .unwrap();
    let mut worst_mean: f64 = 0.0;
    let mut worst_sd: f64 = 0.0;
    let vb_sd = q.sd();
    for j in 0..template.n_free() {
        let col: Vec<f64> = chain.draws.iter().map(|d| d[j]).collect();
        let (m, sd) = mean_sd(&col);
        worst_mean = worst_mean.max((q.mu()[j] - m).abs());
        worst_sd = worst_sd.max((vb_sd[j] / sd - 1.0).abs());
    }
    outcome(
        worst_mean < 0.15 && worst_sd < 0.5,
        format!("max |mean diff| {worst_mean:.3} (tol 0.15); max |SD ratio - 1| {worst_sd:.2} (tol 0.5)"),
    )
}

fn autologistic_data() -> (AugmentedData, Margin) {
    let y = autologistic(200, -2.197, 4.394, 1).unwrap();
    let em = Margin::Ordinal(OrdinalMargin::fit_empirical(&y).unwrap());
    let data = AugmentedData::new(&[SeriesData::Discrete(y)], std::slice::from_ref(&em)).unwrap();
    (data, em)
}

/// Lower bound at the final variational parameters, with its standard error.
fn final_lb(fit: &FitResult, target: &DvineTarget) -> (f64, f64) {
    let evals = evaluate_step(&fit.state().unwrap(), target, 5000, 99, 1).unwrap();
    let f: Vec<f64> = evals.iter().map(|e| e.f).collect();
    let (m, sd) = mean_sd(&f);
    (m, sd / (f.len() as f64).sqrt())
}

fn c7_autologistic(va3_out: &mut Option<FitResult>) -> Outcome {
    let (data, margin) = autologistic_data();
    let template = ModelTemplate::all_free(1, 3);
    let target = DvineTarget::new(&template, &data).unwrap();
    let cfg = |variant| VbConfig { samples: 100, steps: 1000, factors: 3, variant, seed: 1, ..VbConfig::default() };
    let va3 = fit_dvine(&data, &template, &cfg(Variant::Va3)).unwrap();
    let va2 = fit_dvine(&data, &template, &cfg(Variant::Va2)).unwrap();
    let rising = |f: &FitResult| {
        let n = f.lb_trace.len();
        let lead = f.lb_trace[..500].iter().sum::<f64>() / 500.0;
        let trail = f.lb_trace[n - 500..].iter().sum::<f64>() / 500.0;
        (lead, trail)
    };
    let (l3, t3) = rising(&va3);
    let (l2, t2) = rising(&va2);
    let (lb3, se3) = final_lb(&va3, &target);
    let (lb2, se2) = final_lb(&va2, &target);
    let se = (se3 * se3 + se2 * se2).sqrt();
    let specs = vb_spec_draws(&va3, &template, 200, 5).unwrap();
    let report = spearman_report(&specs, std::slice::from_ref(&margin), 20_000, 6).unwrap();
    let rho1 = report.entries.iter().find(|e| e.k == 1).unwrap();
    let pass = t3 > l3 && t2 > l2 && rho1.q05 > 0.0 && rho1.mean > 0.3 && lb3 >= lb2 - 3.0 * se;
    *va3_out = Some(va3);
    outcome(
        pass,
        format!(
            "LB trail/lead VA3 {t3:.1}/{l3:.1}, VA2 {t2:.1}/{l2:.1}; rho_1 {:.3} [{:.3}, {:.3}] (mean must exceed 0.3, interval must \
             exclude 0); LB VA3 {lb3:.2} vs VA2 {lb2:.2} (3 SE = {:.2})",
            rho1.mean,
            rho1.q05,
            rho1.q95,
            3.0 * se
        ),
    )
}

fn c8_stuck(va3: Option<FitResult>) -> Outcome {
    let (data, _) = autologistic_data();
    let template = ModelTemplate::all_free(1, 3);
    let chain = run_sampler(&data, &template, &McmcConfig::default()).unwrap();
    let vb = match va3 {
        Some(f) => f,
        None => {
            let cfg = VbConfig { samples: 100, steps: 1000, seed: 1, ..VbConfig::default() };
            fit_dvine(&data, &template, &cfg).unwrap()
        }
    };
    let vb_done = vb.lb_trace.iter().all(|v| v.is_finite()) && vb.state().is_ok();
    let d = &chain.diagnostics;
    outcome(
        d.stuck && vb_done,
        format!(
            "chain stuck {} (first stuck window ends at sweep {:?}, overall u-acceptance {:.4}); VB completed {vb_done}",
            d.stuck, d.stuck_at, d.u_acceptance
        ),
    )
}

fn gumbel_pairs(tau: f64, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let alpha = 1.0 - tau;
    let mut r = rng(seed);
    let mut exp1 = || -(1.0 - r.random::<f64>()).ln();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let th = PI * (1.0 - exp1().exp().recip().min(1.0 - 1e-16)).max(1e-16);
        let w = exp1();
        let v = (alpha * th).sin() / th.sin().powf(1.0 / alpha) * (((1.0 - alpha) * th).sin() / w).powf((1.0 - alpha) / alpha);
        xs.push((-(exp1() / v).powf(alpha)).exp());
        ys.push((-(exp1() / v).powf(alpha)).exp());
    }
    (xs, ys)
}

fn rank_correlation(x: &[f64], y: &[f64]) -> f64 {
    let ranks = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut out = vec![0.0; v.len()];
        for (r, &i) in idx.iter().enumerate() {
            out[i] = (r + 1) as f64;
        }
        out
    };
    let (rx, ry) = (ranks(x), ranks(y));
    let m = (x.len() as f64 + 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - m) * (b - m)).sum();
    let var: f64 = rx.iter().map(|a| (a - m) * (a - m)).sum();
    cov / var
}

fn c9_spearman() -> Outcome {
    let ordinal = |pmf: &[f64]| {
        Margin::Ordinal(OrdinalMargin::from_pmf((0..pmf.len() as i64).collect(), pmf).unwrap())
    };
    let normal = || Margin::Continuous(ContinuousMargin::normal(0.0, 1.0).unwrap());
    let margins = [ordinal(&[0.2, 0.5, 0.3]), ordinal(&[0.5, 0.5]), normal()];
    let entries = spearman_single(&DvineSpec::independence(3, 1).unwrap(), &margins, 1_000_000, 4).unwrap();
    let indep = entries.iter().map(|e| e.mean.abs()).fold(0.0, f64::max);
    // series 3 is continuous, 1 and 2 ordinal
    let mixed = entries
        .iter()
        .filter(|e| (e.i == 3) != (e.j == 3))
        .map(|e| e.mean.abs())
        .fold(0.0, f64::max);

    let n = 1_000_000;
    let spec = DvineSpec::new(1, 1, vec![MixtureParam::gumbel(0.5).unwrap()]).unwrap();
    let est = spearman_single(&spec, &[normal()], n, 8).unwrap();
    let lag1 = est.iter().find(|e| e.k == 1).unwrap().mean;
    let (x, y) = gumbel_pairs(0.5, n, 9);
    let oracle = rank_correlation(&x, &y);
    let diff = (lag1 - oracle).abs();
    outcome(
        indep < 0.01 && diff < 0.01 && mixed < 0.01,
        format!(
            "independence max |rho| {indep:.4} (tol 0.01); Gumbel(0.5) {lag1:.4} vs pair oracle {oracle:.4} \
             |diff| {diff:.4} (tol 0.01); mixed-pair independence max {mixed:.4} (tol 0.01)"
        ),
    )
}

fn c10_adadelta() -> Outcome {
    let (eps, zeta): (f64, f64) = (1e-6, 0.95);
    let w = 1.0 - zeta;
    let mut s = AdadeltaState::new(1, eps, zeta);
    let d1 = s.step(&[1.0])[0];
    let eg1 = w;
    let exp1 = eps.sqrt() / (eg1 + eps).sqrt();
    let ed1 = w * exp1 * exp1;
    let e1 = (d1 - exp1).abs().max((s.eg2[0] - eg1).abs()).max((s.ed2[0] - ed1).abs());
    let d2 = s.step(&[-2.0])[0];
    let eg2 = zeta * eg1 + w * 4.0;
    let exp2 = -2.0 * (ed1 + eps).sqrt() / (eg2 + eps).sqrt();
    let ed2 = zeta * ed1 + w * exp2 * exp2;
    let e2 = (d2 - exp2).abs().max((s.eg2[0] - eg2).abs()).max((s.ed2[0] - ed2).abs());
    outcome(
        e1 < 1e-15 && e2 < 1e-15,
        format!("step 1 delta {d1:.6e} (err {e1:.1e}); step 2 delta {d2:.6e} (err {e2:.1e})"),
    )
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let cli = || {
        let mut c = Command::new(env!("CARGO_BIN_EXE_dvbda"));
        c.env_remove("DVBDA_THREADS");
        c
    };
    let data = p("al.csv");
    let ok = cli()
        .args(["simulate-dgp", "--kind", "autologistic", "--t", "60", "--seed", "3", "--output", &data])
        .output()
        .unwrap()
        .status
        .success();
    let mut traces = Vec::new();
    let mut draws = Vec::new();
    let mut all_ran = ok;
    for t in ["1", "2", "8"] {
        let trace = p(&format!("trace{t}.csv"));
        let fit = cli()
            .args(["--threads", t, "fit-uni", "--input", &data, "--p", "2", "--s", "50", "--steps", "100"])
            .args(["--output", &p(&format!("fit{t}.json")), "--lb-trace", &trace])
            .output()
            .unwrap()
            .status;
        let dr = p(&format!("draws{t}.csv"));
        let chain = cli()
            .args(["--threads", t, "mcmc-fit", "--input", &data, "--p", "2", "--burnin", "200", "--iterates", "500"])
            .args(["--output", &p(&format!("mc{t}.json")), "--draws", &dr])
            .output()
            .unwrap()
            .status;
        all_ran &= fit.success() && matches!(chain.code(), Some(0) | Some(4));
        traces.push(std::fs::read(Path::new(&trace)).unwrap_or_default());
        draws.push(std::fs::read(Path::new(&dr)).unwrap_or_default());
    }
    let same = |v: &[Vec<u8>]| !v[0].is_empty() && v.iter().all(|x| x == &v[0]);
    let (st, sd) = (same(&traces), same(&draws));
    outcome(
        all_ran && st && sd,
        format!("lb_trace identical across 1/2/8 workers {st}; chain draws identical {sd}"),
    )
}

fn c12_speed() -> Outcome {
    let (data, _) = count_series();
    let template = ModelTemplate::all_free(1, 1);
    let t = Instant::now();
    fit_dvine(&data, &template, &VbConfig { samples: 100, steps: 5000, seed: 1, ..VbConfig::default() }).unwrap();
    let vb = t.elapsed().as_secs_f64();
    let t = Instant::now();
    run_sampler(&data, &template, &McmcConfig { burnin: 10_000, iterates: 20_000, rw_scales: vec![], seed: 1 }).unwrap();
    let mcmc = t.elapsed().as_secs_f64();
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    outcome(
        vb < mcmc,
        format!("VB 5000 steps S=100 {vb:.1} s vs chain 30000 sweeps {mcmc:.1} s ({workers} worker(s))"),
    )
}

fn main() {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |i: usize| picked.is_empty() || picked.contains(&i);
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut va3 = None;
    let mut failed = Vec::new();
    let mut run = |id: usize, name: &str, budget_s: f64, f: &mut dyn FnMut() -> Outcome| {
        if !want(id) {
            return;
        }
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        let in_time = secs < budget_s;
        let pass = o.pass && in_time;
        if !pass {
            failed.push(id);
        }
        println!(
            "criterion {id:>2} | {} | {name} | {} | {secs:.1} s of {budget_s:.0} s",
            if pass { "PASS" } else { "FAIL" },
            o.detail
        );
    };
    run(1, "copula kernel", 60.0, &mut c1_kernel);
    run(2, "D-vine normalization", 300.0, &mut c2_normalization);
    run(3, "gradients", 120.0, &mut c3_gradients);
    run(4, "VA nesting", 1.0, &mut c4_nesting);
    run(5, "oracle posterior agreement", 900.0, &mut c5_oracle_posterior);
    run(6, "VB vs MCMC agreement", 1800.0, &mut c6_vb_vs_mcmc);
    run(7, "auto-logistic end to end", 1200.0, &mut || c7_autologistic(&mut va3));
    run(8, "stuck-chain detection", 600.0, &mut || c8_stuck(va3.take()));
    run(9, "Spearman", 600.0, &mut c9_spearman);
    run(10, "ADADELTA", 1.0, &mut c10_adadelta);
    run(11, "determinism", 300.0, &mut c11_determinism);
    run(12, "relative speed", 2400.0, &mut c12_speed);
    if failed.is_empty() {
        println!("acceptance: all selected criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        if strict {
            std::process::exit(1);
        }
    }
}
