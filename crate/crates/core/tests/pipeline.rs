use std::io::Write;

use rand::SeedableRng;

use credal::io::read_credal_sample;
use credal::synth::{build_scenario, sample_gaussian_extreme, Hypothesis, ScenarioSpec, TestKind};
use credal::{
    equality_test, inclusion_test, plausibility_test, specification_test, Bandwidth, CredalRng, CredalSample,
    CredalTestConfig, SplitMode,
};

fn cfg(seed: u64) -> CredalTestConfig {
    CredalTestConfig { permutations: 99, seed, ..Default::default() }
}

fn scenario(kind: TestKind, hypothesis: Hypothesis, n: usize) -> credal::Scenario {
    build_scenario(&ScenarioSpec { kind, hypothesis, d: 3, n, seed: 31, ..Default::default() }).unwrap()
}

#[test]
fn reports_are_pure_functions_of_data_and_config() {
    let s = scenario(TestKind::Equality, Hypothesis::Null, 120);
    let a = equality_test(&s.x, &s.y, &cfg(4)).unwrap();
    let b = equality_test(&s.x, &s.y, &cfg(4)).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let c = equality_test(&s.x, &s.y, &cfg(5)).unwrap();
    assert_ne!(a.metadata.get("seed"), c.metadata.get("seed"));
}

#[test]
fn equality_nests_two_inclusions() {
    let s = scenario(TestKind::Equality, Hypothesis::Null, 100);
    let rep = equality_test(&s.x, &s.y, &cfg(8)).unwrap();
    assert_eq!(rep.sub_reports.len(), 2);
    assert_eq!(rep.meta("sub_alpha"), Some("0.025"));
    assert_eq!(rep.sub_reports[0].sub_reports.len(), s.x.len());
    assert_eq!(rep.sub_reports[1].sub_reports.len(), s.y.len());
    let min = rep.sub_reports.iter().map(|r| r.p_value).fold(1.0, f64::min);
    assert_eq!(rep.p_value, (2.0 * min).min(1.0));
    let stat = rep.sub_reports.iter().map(|r| r.statistic).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(rep.statistic, stat);
}

#[test]
fn far_alternatives_are_rejected() {
    let mut rng = CredalRng::seed_from_u64(2);
    let mut side = |centres: &[[f64; 2]]| {
        let sets = centres.iter().map(|m| sample_gaussian_extreme(m, 200, &mut rng).unwrap()).collect();
        CredalSample::new(sets).unwrap()
    };
    let y = side(&[[0.0, 0.0], [1.0, 0.0]]);
    let x = side(&[[6.0, 6.0], [6.0, 7.0]]);
    let reports = [
        specification_test(x.extreme(0), &y, &cfg(1)).unwrap(),
        inclusion_test(&x, &y, &cfg(1)).unwrap(),
        equality_test(&x, &y, &cfg(1)).unwrap(),
        plausibility_test(&x, &y, &cfg(1)).unwrap(),
    ];
    for rep in reports {
        assert!(rep.decision.is_reject(), "{}: p = {}", rep.test, rep.p_value);
    }
}

#[test]
fn fixed_bandwidth_and_double_dip_are_reported() {
    let s = scenario(TestKind::Plausibility, Hypothesis::Null, 100);
    let mut c = cfg(3);
    c.bandwidth = Bandwidth::Fixed(1.5);
    c.split.mode = SplitMode::DoubleDip;
    let rep = plausibility_test(&s.x, &s.y, &c).unwrap();
    assert_eq!(rep.meta("bandwidth"), Some("1.5"));
    assert_eq!(rep.meta("mode"), Some("double-dip"));
    assert!(rep.meta("warning").is_some());
}

#[test]
fn grouped_files_match_separate_files() {
    let dir = tempfile::tempdir().unwrap();
    let rows_a: Vec<[f64; 2]> = (0..40).map(|i| [i as f64 * 0.1, (i as f64).sin()]).collect();
    let rows_b: Vec<[f64; 2]> = (0..30).map(|i| [2.0 + i as f64 * 0.05, (i as f64).cos()]).collect();

    let mut grouped = std::fs::File::create(dir.path().join("all.csv")).unwrap();
    writeln!(grouped, "# label,u,v").unwrap();
    for (label, rows) in [(7, &rows_a), (3, &rows_b)] {
        let path = dir.path().join(format!("{label}.csv"));
        let mut single = std::fs::File::create(&path).unwrap();
        for r in rows.iter() {
            writeln!(grouped, "{label},{},{}", r[0], r[1]).unwrap();
            writeln!(single, "{} {}", r[0], r[1]).unwrap();
        }
    }
    drop(grouped);

    let a = read_credal_sample(&[dir.path().join("all.csv")], Some(0)).unwrap();
    // labels are sorted, so group 3 comes first
    let b = read_credal_sample(&[dir.path().join("3.csv"), dir.path().join("7.csv")], None).unwrap();
    assert_eq!(a, b);

    let x = b.extreme(0).clone();
    let r1 = specification_test(&x, &a, &cfg(6)).unwrap();
    let r2 = specification_test(&x, &b, &cfg(6)).unwrap();
    assert_eq!(r1.to_json(), r2.to_json());
}
