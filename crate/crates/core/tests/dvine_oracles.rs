use dvine_vbda::dvine::{discrete_loglik_oracle, n_pairs, Dvine, DvineSpec, Lattice};
use dvine_vbda::margins::OrdinalMargin;
use dvine_vbda::paircopula::MixtureParam;
use dvine_vbda::quad::gauss_legendre_unit;
use dvine_vbda::rng::{substream, Purpose};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spec(r: usize, p: usize, seed: u64, tau_max: f64) -> DvineSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = (0..n_pairs(r, p))
        .map(|_| {
            MixtureParam::new(
                rng.random_range(0.0..tau_max),
                rng.random(),
                rng.random_range(0.0..tau_max),
                rng.random(),
                rng.random(),
            )
            .unwrap()
        })
        .collect();
    DvineSpec::new(r, p, params).unwrap()
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    for (rank, &i) in idx.iter().enumerate() {
        out[i] = rank as f64;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Kolmogorov-Smirnov statistic against the uniform distribution.
fn ks_uniform(mut x: Vec<f64>) -> f64 {
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn density_normalizes_by_monte_carlo() {
    let vine = Dvine::new(random_spec(1, 2, 3, 0.6));
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let u: [f64; 4] = std::array::from_fn(|_| rng.random());
        let c = vine.log_density(&u).unwrap().exp();
        sum += c;
        sum_sq += c * c;
    }
    let mean = sum / n as f64;
    let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");
}

#[test]
fn univariate_path_matches_general_lattice() {
    for seed in 0..5 {
        let vine = Dvine::new(random_spec(1, 3, seed, 0.9));
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let u: Vec<f64> = (0..40).map(|_| rng.random()).collect();
        let mut lat = Lattice::new(&vine, 1);
        let mut generic = 0.0;
        for &x in &u {
            generic += lat.push(x).unwrap();
        }
        assert_eq!(vine.log_density(&u).unwrap().to_bits(), generic.to_bits());
    }
}

#[test]
fn independence_lag_leaves_density_unchanged() {
    for (r, p) in [(1, 2), (2, 1), (3, 2)] {
        let spec = random_spec(r, p, 7, 0.8);
        let wider = spec.with_order(p + 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u: Vec<f64> = (0..r * 12).map(|_| rng.random()).collect();
        let a = Dvine::new(spec).log_density(&u).unwrap();
        let b = Dvine::new(wider).log_density(&u).unwrap();
        assert_eq!(a, b);
    }
}

/// Conditional CDF by integrating the joint density over the target
/// coordinate (and over any trailing coordinates that complete the last time step).
fn quadrature_conditional_cdf(vine: &Dvine, history: &[f64], x: f64) -> f64 {
    let (nodes, wts) = gauss_legendre_unit(200);
    let pad = (vine.r() - (history.len() + 1) % vine.r()) % vine.r();
    assert!(pad <= 1, "oracle integrates at most one trailing coordinate");
    let dens = |s: f64| {
        let mut u = history.to_vec();
        u.push(s);
        if pad == 0 {
            return vine.log_density(&u).unwrap().exp();
        }
        u.push(0.0);
        let last = u.len() - 1;
        nodes
            .iter()
            .zip(&wts)
            .map(|(&z, &w)| {
                u[last] = z;
                w * vine.log_density(&u).unwrap().exp()
            })
            .sum()
    };
    let mut below = 0.0;
    let mut total = 0.0;
    for (&s, &w) in nodes.iter().zip(&wts) {
        below += w * x * dens(s * x);
        total += w * dens(s);
    }
    below / total
}

#[test]
fn conditional_cdf_matches_quadrature_univariate() {
    let vine = Dvine::new(random_spec(1, 3, 21, 0.6));
    let history = [0.3, 0.8, 0.55, 0.1, 0.65];
    for x in [0.1, 0.45, 0.9] {
        let got = vine.conditional_cdf(x, &history, 1).unwrap();
        let oracle = quadrature_conditional_cdf(&vine, &history, x);
        assert!((got - oracle).abs() < 2e-3, "x={x}: {got} vs {oracle}");
    }
}

#[test]
fn conditional_cdf_matches_quadrature_bivariate() {
    let vine = Dvine::new(random_spec(2, 1, 22, 0.6));
    let full = [0.25, 0.6, 0.7, 0.35];
    for cut in 1..full.len() {
        let history = &full[..cut];
        let l1 = cut % 2 + 1;
        for x in [0.2, 0.75] {
            let got = vine.conditional_cdf(x, history, l1).unwrap();
            let oracle = quadrature_conditional_cdf(&vine, history, x);
            assert!((got - oracle).abs() < 2e-3, "cut={cut} x={x}: {got} vs {oracle}");
        }
    }
}

#[test]
fn independence_conditional_cdf_is_identity() {
    let vine = Dvine::new(DvineSpec::independence(2, 2).unwrap());
    assert_eq!(vine.conditional_cdf(0.37, &[0.1, 0.2, 0.9], 2).unwrap(), 0.37);
    assert_eq!(vine.conditional_cdf_inv(0.37, &[0.1, 0.2, 0.9], 2).unwrap(), 0.37);
}

#[test]
fn deep_inverse_converges_in_tails() {
    let vine = Dvine::new(random_spec(1, 3, 31, 0.9));
    let history = [0.05, 0.5, 0.97, 0.2];
    for q in [1e-4, 0.5, 1.0 - 1e-4] {
        let u = vine.conditional_cdf_inv(q, &history, 1).unwrap();
        assert!(u > 0.0 && u < 1.0);
        assert!((vine.conditional_cdf(u, &history, 1).unwrap() - q).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn conditional_cdf_inverse_round_trip(seed in 0u64..1000, q in 0.001..0.999f64, r in 1usize..=2, p in 1usize..=2) {
        let vine = Dvine::new(random_spec(r, p, seed, 0.8));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let len = rng.random_range(0..6);
        let history: Vec<f64> = (0..len).map(|_| rng.random_range(0.02..0.98)).collect();
        let l1 = rng.random_range(1..=r);
        let u = vine.conditional_cdf_inv(q, &history, l1).unwrap();
        let back = vine.conditional_cdf(u, &history, l1).unwrap();
        prop_assert!((back - q).abs() < 1e-8, "q={} back={}", q, back);
    }

    #[test]
    fn conditional_cdf_nondecreasing(seed in 0u64..1000) {
        let vine = Dvine::new(random_spec(2, 2, seed, 0.9));
        let history = [0.3, 0.9, 0.1, 0.6, 0.5];
        let mut prev = 0.0;
        for i in 1..200 {
            let f = vine.conditional_cdf(i as f64 / 200.0, &history, 2).unwrap();
            prop_assert!(f >= prev - 1e-12 && f > 0.0 && f < 1.0);
            prev = f;
        }
    }
}

#[test]
fn simulated_pits_are_uniform() {
    for (r, p) in [(1, 3), (2, 1)] {
        let vine = Dvine::new(random_spec(r, p, 41, 0.7));
        let paths = vine.simulate(6, 10_000, 6).unwrap();
        let last = r * 6 - 1;
        let pits: Vec<f64> = paths
            .iter()
            .map(|u| vine.conditional_cdf(u[last], &u[..last], r).unwrap())
            .collect();
        let d = ks_uniform(pits);
        assert!(d < 1.628 / 100.0, "KS statistic {d} for r={r}");
    }
}

#[test]
fn independence_simulation_returns_raw_uniforms() {
    let vine = Dvine::new(DvineSpec::independence(1, 2).unwrap());
    let paths = vine.simulate(5, 3, 17).unwrap();
    for (i, path) in paths.iter().enumerate() {
        let mut rng = substream(17, Purpose::Simulate, i as u64, 0);
        let raw: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        assert_eq!(path, &raw);
    }
}

#[test]
fn strong_dependence_shows_in_ranks() {
    let spec = DvineSpec::new(1, 1, vec![MixtureParam::new(0.9, 1.0, 0.0, 1.0, 1.0).unwrap()]).unwrap();
    let vine = Dvine::new(spec);
    let paths = vine.simulate(2, 100_000, 3).unwrap();
    let x: Vec<f64> = paths.iter().map(|p| p[0]).collect();
    let y: Vec<f64> = paths.iter().map(|p| p[1]).collect();
    let rho = pearson(&ranks(&x), &ranks(&y));
    assert!(rho > 0.7, "rank correlation {rho}");
}

#[test]
fn simulation_is_reproducible() {
    let vine = Dvine::new(random_spec(2, 2, 5, 0.8));
    let a = vine.simulate(4, 50, 123).unwrap();
    let b = vine.simulate(4, 50, 123).unwrap();
    assert_eq!(a, b);
    let c = vine.simulate(4, 50, 124).unwrap();
    assert_ne!(a, c);
}

#[test]
fn simulate_quantize_refit_recovers_margin() {
    let margin = OrdinalMargin::from_pmf(vec![0, 1, 2], &[0.2, 0.5, 0.3]).unwrap();
    let vine = Dvine::new(random_spec(1, 2, 9, 0.7));
    let paths = vine.simulate(10, 5_000, 1).unwrap();
    let y: Vec<i64> = paths.iter().flatten().map(|&u| margin.quantile(u)).collect();
    let refit = OrdinalMargin::fit_empirical(&y).unwrap();
    for (a, b) in refit.pmf().iter().zip(margin.pmf()) {
        // Serial dependence inflates variance; 5 binomial SE at n=50000 is about 0.011.
        assert!((a - b).abs() < 0.02, "{a} vs {b}");
    }
}

#[test]
fn box_oracle_independence_and_single_cell() {
    let vine = Dvine::new(DvineSpec::independence(1, 2).unwrap());
    let boxes = [(0.0, 0.4), (0.4, 1.0), (0.0, 0.4)];
    let (est, se) = discrete_loglik_oracle(&vine, &boxes, 100, 1).unwrap();
    assert!((est - 0.4 * 0.6 * 0.4).abs() < 1e-15);
    assert_eq!(se, 0.0);
    let dep = Dvine::new(random_spec(1, 2, 3, 0.8));
    let (one, se1) = discrete_loglik_oracle(&dep, &[(0.4, 1.0)], 100, 1).unwrap();
    assert!((one - 0.6).abs() < 1e-15 && se1 == 0.0);
}

#[test]
fn box_oracle_stable_across_seeds() {
    let vine = Dvine::new(random_spec(1, 2, 13, 0.6));
    let boxes = [(0.0, 0.5), (0.5, 1.0), (0.5, 1.0), (0.0, 0.5), (0.5, 1.0)];
    let (a, sa) = discrete_loglik_oracle(&vine, &boxes, 200_000, 1).unwrap();
    let (b, sb) = discrete_loglik_oracle(&vine, &boxes, 200_000, 2).unwrap();
    assert!((a - b).abs() < 3.0 * (sa * sa + sb * sb).sqrt(), "{a}±{sa} vs {b}±{sb}");
    assert!(discrete_loglik_oracle(&vine, &[(0.0, 1.0); 13], 10, 1).is_err());
}

