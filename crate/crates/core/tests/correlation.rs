use ccsgs::correlation::{
    ccs_entry, ccs_matrix, ccs_matrix_planned, shared_control_matrix, InformationTable, SharedControlInformation, StatIndex,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal_sum(rng: &mut ChaCha8Rng, count: f64) -> f64 {
    let e: f64 = StandardNormal.sample(rng);
    e * count.sqrt()
}

fn empirical_corr(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

// Patient-level construction: increments of the subgroup and of its
// complement accrue independently, the overall population pools both.
#[test]
fn nested_statistics_match_monte_carlo() {
    let n = vec![vec![30.0, 55.0, 80.0], vec![70.0, 120.0, 200.0]];
    let reps = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut z: Vec<Vec<Vec<f64>>> = (0..2).map(|_| (0..3).map(|_| Vec::with_capacity(reps)).collect()).collect();
    for _ in 0..reps {
        let (mut sub, mut comp) = (0.0, 0.0);
        for k in 0..3 {
            let prev_sub = if k == 0 { 0.0 } else { n[0][k - 1] };
            let prev_comp = if k == 0 { 0.0 } else { n[1][k - 1] - n[0][k - 1] };
            sub += normal_sum(&mut rng, n[0][k] - prev_sub);
            comp += normal_sum(&mut rng, n[1][k] - n[0][k] - prev_comp);
            z[0][k].push(sub / n[0][k].sqrt());
            z[1][k].push((sub + comp) / n[1][k].sqrt());
        }
    }
    let info = InformationTable::new(n.clone()).unwrap();
    let order = info.analysis_major_order();
    let corr = ccs_matrix(&info, &order).unwrap();
    for (r, a) in order.iter().enumerate() {
        for (c, b) in order.iter().enumerate().skip(r + 1) {
            let mc = empirical_corr(&z[a.population][a.analysis], &z[b.population][b.analysis]);
            assert!((mc - corr.get(r, c)).abs() < 0.003, "{a:?} {b:?}: mc {mc} vs {}", corr.get(r, c));
        }
    }
}

#[test]
fn shared_control_matches_monte_carlo() {
    let info = SharedControlInformation {
        control: vec![vec![50.0, 100.0]],
        arms: vec![vec![vec![50.0, 100.0]], vec![vec![50.0, 100.0]]],
    };
    let order = vec![
        StatIndex::with_arm(0, 0, 0),
        StatIndex::with_arm(1, 0, 0),
        StatIndex::with_arm(0, 0, 1),
        StatIndex::with_arm(1, 0, 1),
    ];
    let corr = shared_control_matrix(&info, &order).unwrap();
    // arm A at the interim against arm B at the final analysis: only the
    // interim control patients are shared, 0.5 * sqrt(1/2)
    assert!((corr.get(0, 3) - 0.5 * 0.5f64.sqrt()).abs() < 1e-12);
    assert!((corr.get(0, 3) - 0.3536).abs() < 1e-4);

    let reps = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut z: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(reps)).collect();
    for _ in 0..reps {
        let c1 = normal_sum(&mut rng, 50.0);
        let c2 = c1 + normal_sum(&mut rng, 50.0);
        let a1 = normal_sum(&mut rng, 50.0);
        let a2 = a1 + normal_sum(&mut rng, 50.0);
        let b1 = normal_sum(&mut rng, 50.0);
        let b2 = b1 + normal_sum(&mut rng, 50.0);
        let stat = |arm: f64, ctl: f64, n: f64| (arm / n - ctl / n) / (2.0 / n).sqrt();
        z[0].push(stat(a1, c1, 50.0));
        z[1].push(stat(b1, c1, 50.0));
        z[2].push(stat(a2, c2, 100.0));
        z[3].push(stat(b2, c2, 100.0));
    }
    for r in 0..4 {
        for c in r + 1..4 {
            let mc = empirical_corr(&z[r], &z[c]);
            assert!((mc - corr.get(r, c)).abs() < 0.003, "({r},{c}): mc {mc} vs {}", corr.get(r, c));
        }
    }
}

fn planned_closed_form(p: f64, t: &[f64], a: (usize, usize), b: (usize, usize)) -> f64 {
    let (ia, ka) = a;
    let (ib, kb) = b;
    let scale = if (ia == 0) != (ib == 0) { p.sqrt() } else { 1.0 };
    let (lo, hi) = (t[ka.min(kb)], t[ka.max(kb)]);
    scale * (lo / hi).sqrt()
}

#[test]
fn planned_matrix_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let p: f64 = rng.random_range(0.05..0.95);
        let t1: f64 = rng.random_range(0.1..0.6);
        let t2: f64 = rng.random_range(t1 + 0.05..0.95);
        let t = [t1, t2, 1.0];
        let m = ccs_matrix_planned(p, &t).unwrap();
        assert_eq!(m.dim(), 6);
        let pos = |r: usize| (r % 2, r / 2);
        for r in 0..6 {
            for c in 0..6 {
                let want = planned_closed_form(p, &t, pos(r), pos(c));
                assert!((m.get(r, c) - want).abs() < 1e-12, "p={p} t={t:?} ({r},{c})");
            }
        }
    }
}

#[test]
fn coincident_populations_are_perfectly_correlated() {
    let m = ccs_matrix_planned(1.0, &[0.5, 1.0]).unwrap();
    assert!((m.get(0, 1) - 1.0).abs() < 1e-15);
    assert!((m.get(2, 3) - 1.0).abs() < 1e-15);
}

#[test]
fn rejects_non_nested_information() {
    assert!(InformationTable::new(vec![vec![50.0, 100.0], vec![40.0, 200.0]]).is_err());
    assert!(InformationTable::new(vec![vec![50.0, 40.0], vec![100.0, 200.0]]).is_err());
}

proptest! {
    #[test]
    fn entries_lie_in_unit_interval_and_scale_free(
        p in 0.05f64..0.95,
        t1 in 0.1f64..0.9,
        scale in 1.0f64..1000.0,
    ) {
        let n = vec![vec![p * t1 * scale, p * scale], vec![t1 * scale, scale]];
        let order = [StatIndex::new(0, 0), StatIndex::new(1, 0), StatIndex::new(0, 1), StatIndex::new(1, 1)];
        let planned = ccs_matrix_planned(p, &[t1, 1.0]).unwrap();
        for (r, a) in order.iter().enumerate() {
            for (c, b) in order.iter().enumerate() {
                let v = ccs_entry(&n, *a, *b);
                prop_assert!(v > 0.0 && v <= 1.0 + 1e-15);
                prop_assert!((v - planned.get(r, c)).abs() < 1e-12);
            }
        }
    }
}
