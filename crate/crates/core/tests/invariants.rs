use proptest::prelude::*;

use zrp_lab::engine::{run, RunOptions, SimState};
use zrp_lab::exclusion::{exclusion_to_zrp, tagged_displacement_check, zrp_to_exclusion};
use zrp_lab::fields::{continuity_terms, evaluate_field};
use zrp_lab::model::{
    check_continuity, check_continuity_span, replay, set_kernel, Configuration, Kernel, ProcessParams,
};
use zrp_lab::rng::replica_stream;
use zrp_lab::sampler::{make_bump, make_mollifier, sample_invariant};

fn small_params(n: u32, b: f64, len: usize) -> ProcessParams {
    ProcessParams::new(n, b, 1.0).unwrap().with_len(len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn continuity_holds_after_every_event(n in 4u32..12, len in 5usize..40, seed in any::<u64>()) {
        let p = small_params(n, 1.0, len);
        let mut rng = replica_stream(seed, 0);
        let c0 = sample_invariant(&p, &mut rng).unwrap();
        let mut s = SimState::new(p, c0.clone(), rng, vec![]).unwrap();
        for _ in 0..2000 {
            s.step().unwrap();
            prop_assert!(check_continuity(&c0, s.config(), s.ledger()).unwrap());
        }
        prop_assert!(s.index_consistent());
    }

    #[test]
    fn kernel_runs_satisfy_span_continuity(seed in any::<u64>(), w2 in 0.0f64..0.5) {
        let kernel = Kernel::symmetric(&[0.5 - w2, w2]).unwrap();
        let p = set_kernel(&small_params(8, 1.0, 30), kernel).unwrap();
        let mut rng = replica_stream(seed, 0);
        let c0 = sample_invariant(&p, &mut rng).unwrap();
        let mut s = SimState::new(p, c0.clone(), rng, vec![]).unwrap();
        for _ in 0..3000 {
            s.step().unwrap();
        }
        prop_assert!(check_continuity(&c0, s.config(), s.ledger()).unwrap());
        for span in 1..=5 {
            prop_assert!(check_continuity_span(&c0, s.config(), s.ledger(), span).unwrap());
        }
    }

    #[test]
    fn event_log_replays_exactly(seed in any::<u64>(), n in 4u32..10) {
        let p = ProcessParams::new(n, 1.0, 0.002).unwrap().with_len(25);
        let opts = RunOptions { event_log: true, ..Default::default() };
        let traj = run(&p, &[0.001, 0.002], &[], &mut replica_stream(seed, 1), &opts).unwrap();
        let (c, j) = replay(&traj.config0, traj.events.as_ref().unwrap()).unwrap();
        prop_assert_eq!(&c, &traj.final_config);
        prop_assert_eq!(&j, &traj.final_ledger);
    }

    #[test]
    fn exclusion_round_trip(counts in proptest::collection::vec(0u32..30, 0..60), base in -100i64..100) {
        let c = Configuration::from_counts(counts);
        let z = zrp_to_exclusion(&c, base);
        prop_assert!(z.windows(2).all(|w| w[0] < w[1]));
        let (back, b) = exclusion_to_zrp(&z).unwrap();
        prop_assert_eq!(back, c);
        prop_assert_eq!(b, base);
    }

    #[test]
    fn antiderivative_matches_at_second_order(center in 0.5f64..3.0, width in 0.5f64..2.0) {
        let f = make_bump(center, width).unwrap();
        let h = 1e-3 * width;
        let (lo, hi) = f.support();
        for k in 1..40 {
            let x = lo + (hi - lo) * k as f64 / 40.0;
            let fd = (f.big_f(x + h) - f.big_f(x - h)) / (2.0 * h);
            prop_assert!((fd - f.f(x)).abs() < 1e-5 * f.sup_norm().max(1.0) / width.min(1.0).powi(2));
        }
        prop_assert!(f.big_f(hi + 1.0).abs() < 1e-15);
        prop_assert!((f.big_f(0.0) + f.integral()).abs() < 1e-10);
    }

    #[test]
    fn field_splits_into_continuity_terms(seed in any::<u64>()) {
        let p = ProcessParams::new(8, 1.0, 0.01).unwrap().with_len(60);
        let f = make_bump(2.0, 2.0).unwrap();
        let opts = RunOptions { snapshots: true, ..Default::default() };
        let traj = run(&p, &[0.004, 0.01], std::slice::from_ref(&f), &mut replica_stream(seed, 2), &opts).unwrap();
        for (sample, (cfg, ledger)) in traj.samples.iter().zip(&traj.snapshots) {
            let x = evaluate_field(&traj.config0, ledger, &p, &f).unwrap();
            prop_assert!((x - sample.values[0]).abs() < 1e-9 * x.abs().max(1.0));
            let terms = continuity_terms(&traj.config0, cfg, ledger, &p, &f).unwrap();
            prop_assert!(terms.defect().abs() < 1e-9 * terms.scale().max(1.0));
        }
    }
}

#[test]
fn continuity_over_a_million_events() {
    let p = small_params(8, 1.0, 160);
    let mut rng = replica_stream(11, 0);
    let c0 = sample_invariant(&p, &mut rng).unwrap();
    let mut s = SimState::new(p, c0.clone(), rng, vec![]).unwrap();
    for _ in 0..1_000_000 {
        s.step().unwrap();
    }
    assert!(check_continuity(&c0, s.config(), s.ledger()).unwrap());
    assert!(s.index_consistent());
}

#[test]
fn displacement_equals_current_in_coupled_replay() {
    let p = ProcessParams::new(8, 1.0, 0.05).unwrap().with_len(60);
    let times: Vec<f64> = (1..=10).map(|k| 0.005 * k as f64).collect();
    for (snapshots, seed) in [(true, 3), (false, 4)] {
        let opts = RunOptions { event_log: true, snapshots, ..Default::default() };
        let traj = run(&p, &times, &[], &mut replica_stream(seed, 0), &opts).unwrap();
        let report = tagged_displacement_check(&traj, 50).unwrap();
        assert!(report.exact, "{:?}", report.first_mismatch);
        assert!(report.order_preserved);
        assert_eq!(report.tracked, 50);
        for ((t, d), s) in report.leftmost.iter().zip(&traj.samples) {
            assert_eq!(*t, s.t);
            assert_eq!(*d, s.j0);
        }
    }
}

#[test]
fn kernel_runs_translate_to_exclusion_moves() {
    let kernel = Kernel::symmetric(&[0.3, 0.15, 0.05]).unwrap();
    let p = set_kernel(&ProcessParams::new(8, 1.0, 0.02).unwrap().with_len(40), kernel).unwrap();
    let opts = RunOptions { event_log: true, snapshots: true, ..Default::default() };
    let traj = run(&p, &[0.01, 0.02], &[], &mut replica_stream(9, 0), &opts).unwrap();
    let report = tagged_displacement_check(&traj, 41).unwrap();
    assert!(report.exact);
    assert_eq!(report.tracked, 41);
}

#[test]
fn no_events_means_no_displacement() {
    let p = ProcessParams::new(8, 1.0, 0.0).unwrap().with_len(20);
    let opts = RunOptions { event_log: true, ..Default::default() };
    let traj = run(&p, &[0.0], &[], &mut replica_stream(1, 0), &opts).unwrap();
    let report = tagged_displacement_check(&traj, 10).unwrap();
    assert_eq!(report.leftmost, vec![(0.0, 0)]);
    assert!(report.exact);
}

#[test]
fn displacement_check_needs_event_log() {
    let p = ProcessParams::new(8, 1.0, 0.001).unwrap().with_len(20);
    let traj = run(&p, &[0.001], &[], &mut replica_stream(1, 0), &RunOptions::default()).unwrap();
    assert!(tagged_displacement_check(&traj, 10).is_err());
}

#[test]
fn mollifier_boundary_profile() {
    for eps in [0.01, 0.1, 1.0] {
        let m = make_mollifier(eps).unwrap();
        assert_eq!(m.h(0.0), 1.0);
        assert_eq!(m.h(eps), 0.0);
        let mass = zrp_lab::quad::integrate(|x| m.phi(x), 0.0, eps, 64);
        assert!((mass - 1.0).abs() < 1e-10);
        let mid = m.h(0.5 * eps);
        assert!((mid - 0.5).abs() < 1e-10);
    }
}
