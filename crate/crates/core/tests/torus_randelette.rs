use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use qpwegner_core::randelette::{decompose, evaluate_v, potential, ConstantTheta, TableTheta, ThetaSource};
use qpwegner_core::rng::{keyed_units, Domain};
use qpwegner_core::stats::ks_uniform;
use qpwegner_core::torus::{
    indicator, min_spacing, orbit_spacing, partition_index, separation_level, torus_distance,
    DyadicCubeIndex,
};
use qpwegner_core::{CoefficientSchedule, LatticeCube, RandeletteField, ShiftAction, ThetaSample, TorusPoint};

fn schedule() -> CoefficientSchedule {
    CoefficientSchedule::power_law(1.0, 2.0).unwrap()
}

fn action_2x2() -> ShiftAction {
    ShiftAction::new(2, 2, vec![0.6180339887498949, 0.4142135623730951, 0.7320508075688772, 0.2360679774997897]).unwrap()
}

fn point(coords: &[f64]) -> TorusPoint {
    TorusPoint::new(coords.to_vec())
}

proptest! {
    #[test]
    fn group_action_composes(w0 in 0.0..1.0f64, w1 in 0.0..1.0f64, x in prop::array::uniform2(-500i64..500), y in prop::array::uniform2(-500i64..500)) {
        let a = action_2x2();
        let omega = point(&[w0, w1]);
        let xy = [x[0] + y[0], x[1] + y[1]];
        let lhs = a.apply(&omega, &xy).unwrap();
        let rhs = a.apply(&a.apply(&omega, &y).unwrap(), &x).unwrap();
        prop_assert!(torus_distance(&lhs, &rhs).unwrap() <= 1e-12);
        let id = a.apply(&omega, &[0, 0]).unwrap();
        prop_assert!(torus_distance(&id, &omega).unwrap() <= 1e-12);
    }

    #[test]
    fn distance_is_a_metric(p in prop::array::uniform2(0.0..1.0f64), q in prop::array::uniform2(0.0..1.0f64), r in prop::array::uniform2(0.0..1.0f64)) {
        let (p, q, r) = (point(&p), point(&q), point(&r));
        let pq = torus_distance(&p, &q).unwrap();
        prop_assert_eq!(pq, torus_distance(&q, &p).unwrap());
        prop_assert!((0.0..=0.5).contains(&pq));
        prop_assert_eq!(torus_distance(&p, &p).unwrap(), 0.0);
        let pr = torus_distance(&p, &r).unwrap();
        let rq = torus_distance(&r, &q).unwrap();
        prop_assert!(pq <= pr + rq + 1e-12);
    }

    #[test]
    fn translation_preserves_distance(p in 0.0..1.0f64, q in 0.0..1.0f64, x in -1000i64..1000) {
        let a = ShiftAction::golden();
        let (p, q) = (point(&[p]), point(&[q]));
        let before = torus_distance(&p, &q).unwrap();
        let after = torus_distance(&a.apply(&p, &[x]).unwrap(), &a.apply(&q, &[x]).unwrap()).unwrap();
        prop_assert!((before - after).abs() <= 1e-12);
    }

    #[test]
    fn partition_cube_contains_point(w0 in 0.0..1.0f64, w1 in 0.0..1.0f64, n in 1u32..20) {
        let omega = point(&[w0, w1]);
        let idx = partition_index(n, &omega).unwrap();
        prop_assert!(indicator(n, idx.flat_index, &omega).unwrap());
        let back = DyadicCubeIndex::from_flat(2, n, idx.flat_index).unwrap();
        prop_assert_eq!(back.multi_index, idx.multi_index);
    }

    #[test]
    fn split_reassembles_value(w in 0.0..1.0f64, n0 in 1u32..30, seed in 0u64..1000) {
        let field = RandeletteField::new(schedule(), ThetaSample::new(seed), 1, 30).unwrap();
        let omega = point(&[w]);
        let (xi, eta) = field.split(&omega, n0).unwrap();
        prop_assert!((xi + eta - evaluate_v(&field, &omega).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn value_is_within_uniform_bound(w in 0.0..1.0f64, seed in 0u64..1000) {
        let field = RandeletteField::new(schedule(), ThetaSample::new(seed), 1, 40).unwrap();
        let v = field.evaluate(&point(&[w])).unwrap();
        prop_assert!(v >= 0.0 && v <= field.sup_bound());
    }
}

#[test]
fn partition_tiles_the_torus() {
    for n in 1..=4u32 {
        let count = DyadicCubeIndex::cube_count(2, n).unwrap();
        for i in 0..200u64 {
            let omega = TorusPoint::new(keyed_units(3, Domain::Omega, i, 2));
            let hits = (1..=count).filter(|&k| indicator(n, k, &omega).unwrap()).count();
            assert_eq!(hits, 1);
        }
    }
    // Half-open intervals: a dyadic endpoint belongs to the cube on its right.
    let idx = partition_index(2, &point(&[0.25, 0.75])).unwrap();
    assert_eq!(idx.multi_index, vec![2, 4]);
}

#[test]
fn orbit_spacing_is_translation_invariant() {
    let a = ShiftAction::golden();
    let cube = LatticeCube::new(vec![0], 10);
    let base = min_spacing(&a, &TorusPoint::origin(1), &cube).unwrap();
    for i in 0..20u64 {
        let omega = TorusPoint::new(keyed_units(8, Domain::Omega, i, 1));
        assert_abs_diff_eq!(min_spacing(&a, &omega, &cube).unwrap(), base, epsilon = 1e-12);
    }
    let shifted = LatticeCube::new(vec![37], 10);
    assert_abs_diff_eq!(min_spacing(&a, &TorusPoint::origin(1), &shifted).unwrap(), base, epsilon = 1e-12);
}

#[test]
fn brute_force_spacing_agrees_in_one_dimension() {
    let a = ShiftAction::golden();
    let sites = LatticeCube::new(vec![0], 30).sites();
    let omega = point(&[0.3]);
    let orbit: Vec<TorusPoint> = sites.iter().map(|x| a.apply(&omega, x).unwrap()).collect();
    let mut brute = f64::INFINITY;
    for i in 0..orbit.len() {
        for j in i + 1..orbit.len() {
            brute = brute.min(torus_distance(&orbit[i], &orbit[j]).unwrap());
        }
    }
    assert_abs_diff_eq!(orbit_spacing(&a, &omega, &sites).unwrap(), brute, epsilon = 1e-12);
}

#[test]
fn separation_level_resolves_the_orbit() {
    let a = ShiftAction::golden();
    for l in [1u32, 3, 10, 50] {
        let cube = LatticeCube::new(vec![0], l);
        let omega = TorusPoint::origin(1);
        let n0 = separation_level(min_spacing(&a, &omega, &cube).unwrap()).unwrap();
        let mut seen = std::collections::HashSet::new();
        for x in cube.sites() {
            let p = a.apply(&omega, &x).unwrap();
            assert!(seen.insert(partition_index(n0, &p).unwrap().flat_index), "L = {l}");
        }
    }
}

#[test]
fn evaluation_matches_sum_over_all_cubes() {
    for seed in [1u64, 7, 99] {
        for n in 1..=10u32 {
            let field = RandeletteField::new(schedule(), ThetaSample::new(seed), 1, n).unwrap();
            for i in 0..50u64 {
                let omega = TorusPoint::new(keyed_units(seed, Domain::Omega, i, 1));
                let mut oracle = 0.0;
                for level in (1..=n).rev() {
                    let a = schedule().coefficient(level);
                    for k in 1..=(1u64 << level) {
                        if indicator(level, k, &omega).unwrap() {
                            oracle += a * field_theta(seed, level, k);
                        }
                    }
                }
                assert_eq!(evaluate_v(&field, &omega).unwrap().to_bits(), oracle.to_bits());
            }
        }
    }
}

fn field_theta(seed: u64, n: u32, k: u64) -> f64 {
    ThetaSample::new(seed).theta(n, k)
}

#[test]
fn value_is_monotone_in_theta() {
    let field = RandeletteField::new(schedule(), ThetaSample::new(5), 1, 20).unwrap();
    for i in 0..50u64 {
        let omega = TorusPoint::new(keyed_units(5, Domain::Omega, i, 1));
        let base = field.evaluate(&omega).unwrap();
        for (n, k) in field.keys(&omega).unwrap() {
            let raised = field.with_theta(TableTheta::new(ThetaSample::new(5)).with(n, k, 1.0));
            assert!(raised.evaluate(&omega).unwrap() >= base);
        }
    }
    let zero = field.with_theta(ConstantTheta(0.0));
    let one = field.with_theta(ConstantTheta(1.0));
    let omega = point(&[0.41]);
    assert_eq!(zero.evaluate(&omega).unwrap(), 0.0);
    assert_abs_diff_eq!(one.evaluate(&omega).unwrap(), one.sup_bound(), epsilon = 1e-12);
}

#[test]
fn lattice_decomposition_matches_potential() {
    let field = RandeletteField::new(schedule(), ThetaSample::new(2), 1, 40).unwrap();
    let a = ShiftAction::golden();
    let omega = point(&[0.123]);
    for x in -20..=20i64 {
        let (xi, eta) = decompose(&field, &a, &omega, &[x], 6).unwrap();
        assert_abs_diff_eq!(xi + eta, potential(&field, &a, &omega, &[x]).unwrap(), epsilon = 1e-12);
    }
}

#[test]
fn separated_sites_read_disjoint_high_levels() {
    // Past the separation level the eta parts of distinct sites read
    // distinct theta entries, so they are independent given xi.
    let a = ShiftAction::golden();
    let cube = LatticeCube::new(vec![0], 8);
    let omega = point(&[0.77]);
    let n0 = separation_level(min_spacing(&a, &omega, &cube).unwrap()).unwrap();
    let field = RandeletteField::new(schedule(), ThetaSample::new(1), 1, 30).unwrap();
    let mut seen = std::collections::HashSet::new();
    for x in cube.sites() {
        for key in field.high_keys(&a.apply(&omega, &x).unwrap(), n0).unwrap() {
            assert!(seen.insert(key), "{key:?}");
        }
    }
}

#[test]
fn eta_at_separated_sites_is_uncorrelated_over_theta() {
    let a = ShiftAction::golden();
    let cube = LatticeCube::new(vec![0], 2);
    let omega = point(&[0.31]);
    let n0 = separation_level(min_spacing(&a, &omega, &cube).unwrap()).unwrap();
    let trials = 4000u64;
    let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for seed in 0..trials {
        let field = RandeletteField::new(schedule(), ThetaSample::new(seed), 1, 20).unwrap();
        let x = decompose(&field, &a, &omega, &[0], n0).unwrap().1;
        let y = decompose(&field, &a, &omega, &[1], n0).unwrap().1;
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    let n = trials as f64;
    let cov = sxy / n - sx * sy / (n * n);
    let corr = cov / ((sxx / n - (sx / n).powi(2)) * (syy / n - (sy / n).powi(2))).sqrt();
    // Sampling error of a null correlation is about 1/sqrt(n) = 0.016.
    assert!(corr.abs() < 0.07, "corr = {corr}");
}

#[test]
fn theta_entries_look_uniform() {
    let theta = ThetaSample::new(17);
    let sample: Vec<f64> = (1..=20_000u64).map(|k| theta.theta(20, k)).collect();
    let ks = ks_uniform(&sample);
    // 1% critical value 1.63 / sqrt(n).
    assert!(ks < 1.63 / (sample.len() as f64).sqrt(), "ks = {ks}");
}

#[test]
fn conditional_density_respects_bound() {
    // Fix the levels below n0 by fixing omega's n0-cube; the remaining
    // randomness is theta. The histogram of v must stay below 1 / a_n0.
    let n0 = 3u32;
    let s = schedule();
    let bound = s.conditional_density_bound(n0);
    let omega = point(&[0.4]);
    let trials = 40_000u64;
    let low = RandeletteField::new(s.clone(), ConstantTheta(0.5), 1, 30).unwrap();
    let xi = low.split(&omega, n0).unwrap().0;
    let values: Vec<f64> = (0..trials)
        .map(|seed| {
            let field = RandeletteField::new(s.clone(), ThetaSample::new(seed), 1, 30).unwrap();
            xi + field.split(&omega, n0).unwrap().1
        })
        .collect();
    let width = 0.02;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let bins = ((values.iter().copied().fold(0.0, f64::max) - lo) / width).ceil() as usize + 1;
    let mut counts = vec![0u64; bins];
    for v in &values {
        counts[((v - lo) / width) as usize] += 1;
    }
    let peak = *counts.iter().max().unwrap() as f64 / (trials as f64 * width);
    // Add four binomial standard errors of the peak bin.
    let slack = 4.0 * (peak / (trials as f64 * width)).sqrt();
    assert!(peak <= bound + slack, "peak density {peak} > {bound}");
}

#[test]
fn f32_field_agrees_with_f64() {
    let s32 = qpwegner_core::randelette::CoefficientSchedule::<f32>::power_law(1.0, 2.0).unwrap();
    let f32_field = qpwegner_core::randelette::RandeletteField::<f32, _>::new(s32, ThetaSample::new(3), 1, 20).unwrap();
    let f64_field = RandeletteField::new(schedule(), ThetaSample::new(3), 1, 20).unwrap();
    for w in [0.0, 0.125, 0.3, 0.7] {
        let a = f32_field.evaluate(&qpwegner_core::torus::TorusPoint::<f32>::new(vec![w as f32])).unwrap();
        let b = f64_field.evaluate(&point(&[w])).unwrap();
        assert!((a as f64 - b).abs() < 1e-5, "{a} vs {b}");
    }
}
