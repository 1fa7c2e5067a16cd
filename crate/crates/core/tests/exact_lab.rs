use proptest::prelude::*;

use zrp_lab::exact::{
    full_grid, h_minus_one_norm, ldp_limit, ldp_rate, moment_oracle, psi_conditional, spectral_gap,
    spectral_gap_with_cap, state_count, tail_bound_check, verify_gap_bound, SmallSystem,
};
use zrp_lab::quad::integrate;
use zrp_lab::Error;

/// `sup_theta (theta a - log M(theta))` for a geometric law of mean `rho`, by golden-section search.
fn legendre_rate(rho: f64, a: f64) -> f64 {
    let p = 1.0 / (1.0 + rho);
    let log_mgf = |t: f64| (p / (1.0 - (1.0 - p) * t.exp())).ln();
    let obj = |t: f64| t * a - log_mgf(t);
    let (mut lo, mut hi) = (-60.0, -(1.0 - p).ln() - 1e-14);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..400 {
        let x1 = hi - g * (hi - lo);
        let x2 = lo + g * (hi - lo);
        if obj(x1) < obj(x2) {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    obj(0.5 * (lo + hi))
}

#[test]
fn gap_anchors() {
    let g = spectral_gap(&SmallSystem::build(1, 2).unwrap()).unwrap().unwrap();
    assert!((g - 2.0).abs() < 1e-12);
    let g = spectral_gap(&SmallSystem::build(1, 3).unwrap()).unwrap().unwrap();
    assert!((g - 1.0).abs() < 1e-12);
}

#[test]
fn single_particle_gap_is_walk_gap() {
    // one particle on l sites is a reflected walk with gap 2 - 2 cos(pi / l)
    for l in 2..=12 {
        let g = spectral_gap(&SmallSystem::build(1, l).unwrap()).unwrap().unwrap();
        let expect = 2.0 - 2.0 * (std::f64::consts::PI / l as f64).cos();
        assert!((g - expect).abs() < 1e-10, "l={l}");
    }
}

#[test]
fn sector_split_matches_full_spectrum() {
    for (k, l) in [(3, 3), (4, 4), (5, 3), (2, 5)] {
        let sys = SmallSystem::build(k, l).unwrap();
        let dense = sys.dense_generator();
        let neg = faer::Mat::<f64>::from_fn(sys.len(), sys.len(), |i, j| -dense.read(i, j));
        let mut ev = neg.selfadjoint_eigenvalues(faer::Side::Lower);
        ev.sort_by(f64::total_cmp);
        let g = spectral_gap(&sys).unwrap().unwrap();
        assert!((g - ev[1]).abs() < 1e-10, "k={k} l={l}: {g} vs {}", ev[1]);
    }
}

#[test]
fn gap_grid_is_positive() {
    let table = verify_gap_bound(&full_grid(6, 4)).unwrap();
    assert!(table.rows.iter().all(|r| r.gap > 0.0));
    assert!(table.min_scaled_gap > 0.0);
    assert!((table.kappa0 * table.min_scaled_gap - 1.0).abs() < 1e-12);
}

#[test]
fn oversized_boxes_are_refused() {
    assert!(matches!(SmallSystem::build_with_cap(30, 8, 1000), Err(Error::Size { .. })));
    let sys = SmallSystem::build(6, 5).unwrap();
    assert!(matches!(spectral_gap_with_cap(&sys, 10), Err(Error::Size { .. })));
}

#[test]
fn psi_formula_matches_enumeration() {
    for k in 0..=20 {
        for l in 2..=6 {
            let v = psi_conditional(k, l).unwrap();
            assert!((v.formula - v.enumeration).abs() < 1e-12, "k={k} l={l}");
        }
    }
    assert!(psi_conditional(3, 1).is_err());
}

#[test]
fn rate_function_examples() {
    assert_eq!(ldp_rate(1.0, 1.0).unwrap(), 0.0);
    let i = ldp_rate(1.0, 2.0).unwrap();
    assert!((i - 0.169_899).abs() < 1e-6);
    assert!((i - legendre_rate(1.0, 2.0)).abs() < 1e-9);
    assert!((ldp_rate(3.0, 0.0).unwrap() - 4f64.ln()).abs() < 1e-15);
    assert!(ldp_rate(1.0, -0.5).is_err());
}

#[test]
fn ldp_limit_is_approached() {
    let r = ldp_limit(1.0, 2.0, &[100, 1000, 10_000]).unwrap();
    assert!(!r.flagged);
    let last = r.approximants.last().unwrap().1;
    assert!((last - r.limit).abs() < 1e-3);
    let errs: Vec<f64> = r.approximants.iter().map(|(_, v)| (v - r.limit).abs()).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]));
    assert!(ldp_limit(2.0, 1.0, &[100]).unwrap().flagged);
}

#[test]
fn tail_bound_instances() {
    for &(n, b, l, a) in &[(10, 1.0, 5, 2.0), (20, 1.0, 10, 1.5), (50, 2.0, 8, 3.0), (8, 1.0, 1, 4.0)] {
        let r = tail_bound_check(n, b, l, a).unwrap();
        assert!(!r.vacuous);
        assert!(r.holds, "{r:?}");
        assert!(r.probability > 0.0 && r.probability <= 1.0);
    }
    let r = tail_bound_check(10, 2.0, 4, 1.0).unwrap();
    assert!(r.vacuous);
}

#[test]
fn tail_probability_matches_negative_binomial() {
    // sum of l geometrics is negative binomial
    let (n, b, l, a) = (12u32, 1.0, 4u32, 2.0);
    let r = tail_bound_check(n, b, l, a).unwrap();
    let theta = b / n as f64;
    let m = (l as f64 * (n as f64 / a - 1.0)).floor() as u64;
    let mut p = 0.0;
    for s in 0..=m {
        let c = zrp_lab::exact::binomial(s + l as u64 - 1, l as u64 - 1) as f64;
        p += c * theta.powi(l as i32) * (1.0 - theta).powi(s as i32);
    }
    assert!((p - r.probability).abs() < 1e-13);
}

#[test]
fn moment_oracle_matches_summation() {
    let (n, b, l) = (6u32, 1.0, 2u32);
    let m = moment_oracle(n, b, l).unwrap();
    let theta = b / n as f64;
    // exact fourth central moment of the mean of two geometrics by double sum
    let mut fourth = 0.0;
    let mut var = 0.0;
    for i in 0..2000 {
        for j in 0..2000 {
            let p = theta * theta * (1.0 - theta).powi(i + j);
            if p < 1e-300 {
                break;
            }
            let d = (i + j) as f64 / 2.0 - m.rho;
            fourth += p * d.powi(4);
            var += p * d * d;
        }
    }
    assert!((var - m.variance).abs() < 1e-9 * m.variance);
    assert!((fourth - m.fourth).abs() < 1e-9 * m.fourth);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generator_is_symmetric(k in 0u32..7, l in 1u32..5) {
        let sys = SmallSystem::build(k, l).unwrap();
        prop_assert_eq!(sys.len() as u128, state_count(k, l));
        let g = sys.dense_generator();
        for i in 0..sys.len() {
            let mut row = 0.0;
            for j in 0..sys.len() {
                prop_assert_eq!(g.read(i, j), g.read(j, i));
                row += g.read(i, j);
            }
            prop_assert!(row.abs() < 1e-12);
        }
    }

    #[test]
    fn h_minus_one_duality(k in 1u32..6, l in 2u32..5, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let sys = SmallSystem::build(k, l).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut f: Vec<f64> = (0..sys.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        f.iter_mut().for_each(|v| *v -= mean);
        let r = h_minus_one_norm(&sys, &f).unwrap();
        prop_assert!(r.poisson >= 0.0);
        prop_assert!((r.poisson - r.variational).abs() < 1e-8 * r.poisson.max(1e-12));
        let gap = spectral_gap(&sys).unwrap().unwrap();
        // ||f||_{-1}^2 <= ||f||^2 / gap
        prop_assert!(r.poisson <= sys.inner(&f, &f) / gap * (1.0 + 1e-9));
    }

    #[test]
    fn rate_function_is_convex(rho in 0.1f64..50.0) {
        let grid: Vec<f64> = (0..=200).map(|i| 4.0 * rho * i as f64 / 200.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&a| ldp_rate(rho, a).unwrap()).collect();
        prop_assert!(vals.iter().all(|&v| v >= -1e-12));
        for w in vals.windows(3) {
            prop_assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-9);
        }
        prop_assert!(ldp_rate(rho, rho).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rate_matches_legendre_transform(rho in 0.2f64..20.0, frac in 0.05f64..3.0) {
        let a = rho * frac;
        prop_assert!((ldp_rate(rho, a).unwrap() - legendre_rate(rho, a)).abs() < 1e-8);
    }
}

#[test]
fn h_minus_one_rejects_nonzero_mean() {
    let sys = SmallSystem::build(2, 3).unwrap();
    let f = vec![1.0; sys.len()];
    assert!(matches!(h_minus_one_norm(&sys, &f), Err(Error::Projection(_))));
}

#[test]
fn quadrature_reference() {
    let v = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 8);
    assert!((v - 2.0).abs() < 1e-14);
}
