use ccsgs::closed_test::{self, closed_test, rejected_from, AlgorithmRegistry, AnalysisData, ClosedTestDesign, IntersectionBoundsTable};
use ccsgs::correlation::InformationTable;
use ccsgs::crossing::default_backend;
use ccsgs::graph::MultiplicityGraph;
use ccsgs::gs_single::bounds_from_spending;
use ccsgs::sim::finalize_table;
use ccsgs::spending::{FamilySpec, SpendingSpec};
use proptest::prelude::*;

const ALPHA: f64 = 0.025;

fn full_transfer() -> MultiplicityGraph {
    MultiplicityGraph::new(vec![0.5, 0.5], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
}

fn design(p: f64, t: &[f64], graph: MultiplicityGraph) -> ClosedTestDesign {
    let info = InformationTable::planned(&[p, 1.0], t, 400.0).unwrap();
    let obf = FamilySpec::new("ld-obf", None).resolve().unwrap();
    ClosedTestDesign::new(info, graph, vec![obf.clone(), obf], ALPHA).unwrap()
}

fn plan(d: &ClosedTestDesign, alg: &str) -> IntersectionBoundsTable {
    let a = AlgorithmRegistry::default().create(alg).unwrap();
    closed_test::plan(d, a.as_ref()).unwrap()
}

fn check_levels(table: &IntersectionBoundsTable, exact: bool) {
    let checks = table.level_checks(default_backend().as_ref()).unwrap();
    for s in &table.subsets {
        let p = checks[&s.mask];
        assert!(p <= s.level + 1e-6, "mask {}: {p} > {}", s.mask, s.level);
        if exact {
            assert!((p - s.level).abs() < 1e-6, "mask {}: {p} vs {}", s.mask, s.level);
        }
    }
}

#[test]
fn every_algorithm_holds_the_level_at_plan() {
    let d = design(0.6, &[0.5, 1.0], full_transfer());
    for alg in ["1", "2", "3"] {
        let table = plan(&d, alg);
        assert_eq!(table.algorithm, alg);
        assert_eq!(table.subsets.len(), 3);
        check_levels(&table, alg != "3");
    }
}

#[test]
fn every_algorithm_holds_the_level_after_updates() {
    let t = [0.5, 1.0];
    let d = design(0.6, &t, full_transfer());
    let actual = vec![vec![0.6 * 400.0 * 0.58, 0.6 * 400.0 * 1.04], vec![400.0 * 0.55, 400.0 * 0.98]];
    for alg in ["1", "2", "3"] {
        let a = AlgorithmRegistry::default().create(alg).unwrap();
        let planned = closed_test::plan(&d, a.as_ref()).unwrap();
        let table = finalize_table(&d, a.as_ref(), &planned, &actual).unwrap();
        assert_eq!(table.finalized, 2);
        assert_eq!(table.information, actual);
        check_levels(&table, alg == "1");
    }
}

#[test]
fn correlated_bounds_are_below_bonferroni() {
    let t = [0.5, 0.75, 1.0];
    let d = design(0.6, &t, full_transfer());
    let table = plan(&d, "1");
    let bonf = bounds_from_spending(&t, &SpendingSpec::new("ld-obf", None, 0.0125).resolve().unwrap()).unwrap();
    let full = table.subset(3).unwrap();
    for i in 0..2 {
        for k in 0..3 {
            assert!(full.bounds[i][k] < bonf.bounds[k]);
        }
    }
    assert!(full.alpha_star[0] > ALPHA);
    // singletons carry the whole level under full transfer
    let single = bounds_from_spending(&t, &SpendingSpec::new("ld-obf", None, ALPHA).resolve().unwrap()).unwrap();
    for (a, b) in table.subset(1).unwrap().bounds[0].iter().zip(&single.bounds) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn inflation_grows_with_prevalence() {
    let t = [0.5, 1.0];
    let mut last = ALPHA;
    for p in [0.2, 0.4, 0.6, 0.8] {
        let table = plan(&design(p, &t, full_transfer()), "1");
        let a = table.subset(3).unwrap().alpha_star[0];
        assert!(a > last, "p={p}: {a} <= {last}");
        last = a;
    }
    assert!(last < 2.0 * ALPHA);
}

#[test]
fn largest_population_absorbs_the_inflation() {
    let t = [0.5, 1.0];
    let table = plan(&design(0.6, &t, full_transfer()), "3");
    let full = table.subset(3).unwrap();
    let share = bounds_from_spending(&t, &SpendingSpec::new("ld-obf", None, 0.0125).resolve().unwrap()).unwrap();
    for k in 0..2 {
        assert!((full.bounds[0][k] - share.bounds[k]).abs() < 1e-8);
        assert!(full.bounds[1][k] < share.bounds[k]);
    }
}

#[test]
fn current_only_update_keeps_future_bounds() {
    let t = [0.5, 0.75, 1.0];
    let d = design(0.6, &t, full_transfer());
    let alg = AlgorithmRegistry::default().create("2").unwrap();
    let planned = closed_test::plan(&d, alg.as_ref()).unwrap();
    let data = AnalysisData {
        analysis: 1,
        information: vec![0.6 * 400.0 * 0.55, 400.0 * 0.55],
        statistics: vec![],
        skipped: false,
    };
    let updated = closed_test::update(&d, alg.as_ref(), &planned, &data).unwrap();
    for (a, b) in updated.subsets.iter().zip(&planned.subsets) {
        for (ra, rb) in a.bounds.iter().zip(&b.bounds) {
            assert_ne!(ra[0], rb[0]);
            assert_eq!(&ra[1..], &rb[1..]);
        }
    }
}

#[test]
fn planned_information_update_is_idempotent() {
    let t = [0.5, 1.0];
    let d = design(0.6, &t, full_transfer());
    for alg in ["1", "2", "3"] {
        let a = AlgorithmRegistry::default().create(alg).unwrap();
        let planned = closed_test::plan(&d, a.as_ref()).unwrap();
        let table = finalize_table(&d, a.as_ref(), &planned, &planned.information).unwrap();
        assert_eq!(table.subsets, planned.subsets);
        assert_eq!(table.finalized, 2);
    }
}

#[test]
fn skipped_analysis_spends_nothing() {
    let t = [0.5, 1.0];
    let d = design(0.6, &t, full_transfer());
    let a = AlgorithmRegistry::default().create("1").unwrap();
    let planned = closed_test::plan(&d, a.as_ref()).unwrap();
    let skip = AnalysisData { analysis: 1, information: vec![], statistics: vec![], skipped: true };
    let t1 = closed_test::update(&d, a.as_ref(), &planned, &skip).unwrap();
    assert!(t1.subsets.iter().all(|s| s.bounds.iter().all(|r| r[0].is_infinite())));
    let fin = AnalysisData { analysis: 2, information: planned.information.iter().map(|r| r[1]).collect(), statistics: vec![], skipped: false };
    // equal to the table's information, so the planned final bounds stay
    let t2 = closed_test::update(&d, a.as_ref(), &t1, &fin).unwrap();
    let level = t2.level_checks(default_backend().as_ref()).unwrap()[&3];
    assert!(level < ALPHA);
}

#[test]
fn update_errors() {
    let t = [0.5, 1.0];
    let d = design(0.6, &t, full_transfer());
    let reg = AlgorithmRegistry::default();
    let a1 = reg.create("1").unwrap();
    let planned = closed_test::plan(&d, a1.as_ref()).unwrap();
    let data = |k: usize, info: Vec<f64>| AnalysisData { analysis: k, information: info, statistics: vec![], skipped: false };

    let wrong_alg = closed_test::update(&d, reg.create("2").unwrap().as_ref(), &planned, &data(1, vec![120.0, 200.0]));
    assert!(matches!(wrong_alg, Err(ccsgs::Error::Config(_))));
    let out_of_order = closed_test::update(&d, a1.as_ref(), &planned, &data(2, vec![240.0, 400.0]));
    assert!(matches!(out_of_order, Err(ccsgs::Error::Sequencing(_)) | Err(ccsgs::Error::Data(_))));
    let t1 = closed_test::update(&d, a1.as_ref(), &planned, &data(1, vec![120.0, 200.0])).unwrap();
    let shrink = closed_test::update(&d, a1.as_ref(), &t1, &data(2, vec![110.0, 300.0]));
    assert!(matches!(shrink, Err(ccsgs::Error::Data(_))));
    let wrong_len = closed_test::update(&d, a1.as_ref(), &planned, &data(1, vec![120.0]));
    assert!(matches!(wrong_len, Err(ccsgs::Error::Data(_))));
}

// without transfers the intersection test is sharper than the elementary
// tests, so an intersection can fall without any elementary rejection
#[test]
fn closed_test_is_not_consonant() {
    let t = [0.5, 1.0];
    let no_transfer = MultiplicityGraph::new(vec![0.5, 0.5], vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
    let d = design(0.6, &t, no_transfer.clone());
    let a = AlgorithmRegistry::default().create("1").unwrap();
    let planned = closed_test::plan(&d, a.as_ref()).unwrap();
    let table = finalize_table(&d, a.as_ref(), &planned, &planned.information).unwrap();
    let b_full = table.subset(3).unwrap().bounds[0][0];
    let b_single = table.subset(1).unwrap().bounds[0][0];
    assert!(b_full < b_single);
    let z = 0.5 * (b_full + b_single);
    let obs = [AnalysisData { analysis: 1, information: vec![], statistics: vec![z, 0.0], skipped: false }];
    let out = closed_test(&table, &obs, &no_transfer).unwrap();
    assert!(out.rejected.is_empty());
    let full = out.subsets.iter().find(|s| s.members == vec![0, 1]).unwrap();
    assert!(full.rejected);
    assert_eq!(full.crossings, vec![(0, 1)]);
}

#[test]
fn closed_test_validates_input() {
    let t = [0.5, 1.0];
    let g = full_transfer();
    let d = design(0.6, &t, g.clone());
    let planned = plan(&d, "1");
    let obs = |k: usize, z: Vec<f64>| AnalysisData { analysis: k, information: vec![], statistics: z, skipped: false };
    // nothing finalized yet
    assert!(matches!(closed_test(&planned, &[obs(1, vec![1.0, 1.0])], &g), Err(ccsgs::Error::Sequencing(_))));
    let a = AlgorithmRegistry::default().create("1").unwrap();
    let table = finalize_table(&d, a.as_ref(), &planned, &planned.information).unwrap();
    assert!(matches!(closed_test(&table, &[obs(2, vec![1.0, 1.0])], &g), Err(ccsgs::Error::Sequencing(_))));
    assert!(matches!(closed_test(&table, &[obs(1, vec![f64::NAN, 1.0])], &g), Err(ccsgs::Error::Data(_))));
    assert!(closed_test(&table, &[obs(1, vec![1.0, 1.0]), obs(2, vec![1.0, 1.0])], &g).is_ok());
}

#[test]
fn three_nested_populations_hold_the_level() {
    let info = InformationTable::planned(&[0.3, 0.6, 1.0], &[1.0], 500.0).unwrap();
    let obf = FamilySpec::new("ld-obf", None).resolve().unwrap();
    let d = ClosedTestDesign::new(info, MultiplicityGraph::equal(3).unwrap(), vec![obf; 3], ALPHA).unwrap();
    let table = plan(&d, "1");
    assert_eq!(table.subsets.len(), 7);
    check_levels(&table, true);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn larger_statistics_never_undo_rejections(
        z in prop::collection::vec(-1.0f64..4.0, 4),
        which in 0usize..4,
        bump in 0.0f64..2.0,
    ) {
        let table = finalized_table();
        let zz = vec![vec![z[0], z[1]], vec![z[2], z[3]]];
        let mut up = zz.clone();
        up[which / 2][which % 2] += bump;
        let before = rejected_from(table, &zz, 2);
        let after = rejected_from(table, &up, 2);
        for (b, a) in before.iter().zip(&after) {
            prop_assert!(!b || *a);
        }
    }
}

fn finalized_table() -> &'static IntersectionBoundsTable {
    static TABLE: std::sync::OnceLock<IntersectionBoundsTable> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let d = design(0.6, &[0.5, 1.0], full_transfer());
        let a = AlgorithmRegistry::default().create("1").unwrap();
        let planned = closed_test::plan(&d, a.as_ref()).unwrap();
        finalize_table(&d, a.as_ref(), &planned, &planned.information).unwrap()
    })
}
