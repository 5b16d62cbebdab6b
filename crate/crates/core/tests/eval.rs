use std::collections::BTreeMap;

use ddmp::eval::{ece, emit_report, EvalReport};
use ddmp::numkit::Matrix;
use proptest::prelude::*;

fn probs_strategy(n: usize) -> impl Strategy<Value = (Matrix, Vec<usize>)> {
    (prop::collection::vec(0.01..1.0f64, n * 3), prop::collection::vec(0usize..3, n)).prop_map(move |(raw, truth)| {
        let mut m = Matrix::from_vec(n, 3, raw).unwrap();
        for r in 0..n {
            let s: f64 = m.row(r).iter().sum();
            m.row_mut(r).iter_mut().for_each(|v| *v /= s);
        }
        (m, truth)
    })
}

proptest! {
    #[test]
    fn ece_is_permutation_invariant((m, truth) in probs_strategy(20), seed in 0u64..1000) {
        let mut order: Vec<usize> = (0..20).collect();
        // Deterministic shuffle driven by the seed.
        let mut s = seed;
        for i in (1..20).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let pm = m.select_rows(&order);
        let pt: Vec<usize> = order.iter().map(|&i| truth[i]).collect();
        let (a, bins_a) = ece(&m, &truth, 10).unwrap();
        let (b, bins_b) = ece(&pm, &pt, 10).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert_eq!(bins_a.iter().map(|b| b.count).collect::<Vec<_>>(), bins_b.iter().map(|b| b.count).collect::<Vec<_>>());
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn constant_confidence_error(conf in 0.34..1.0f64, truth in prop::collection::vec(0usize..3, 1..40), bins in 1usize..20) {
        let n = truth.len();
        let rest = (1.0 - conf) / 2.0;
        let m = Matrix::from_vec(n, 3, (0..n).flat_map(|_| [conf, rest, rest]).collect()).unwrap();
        let acc = truth.iter().filter(|&&t| t == 0).count() as f64 / n as f64;
        let (e, _) = ece(&m, &truth, bins).unwrap();
        prop_assert!((e - (conf - acc).abs()).abs() < 1e-12);
    }
}

fn sample_report() -> EvalReport {
    let probs = Matrix::from_rows(&[[0.9, 0.1], [0.6, 0.4], [0.2, 0.8], [0.55, 0.45], [1.0, 0.0]]).unwrap();
    let mut cfg = BTreeMap::new();
    cfg.insert("epochs".to_string(), "3".to_string());
    EvalReport::from_predictions(&probs, &[0, 1, 1, 0, 0], 10, cfg, 42).unwrap()
}

#[test]
fn report_round_trips_through_json() {
    let r = sample_report();
    assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
    assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), r.n_eval);
    assert_eq!(r.accuracy, 0.8);
}

#[test]
fn emitted_artifacts_are_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let r = sample_report();
    let files = emit_report(&r, dir.path()).unwrap();
    assert_eq!(files.len(), 3);
    let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert_eq!(EvalReport::from_json(&json).unwrap(), r);
    let csv = std::fs::read_to_string(dir.path().join("reliability.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 10);
    let svg = std::fs::read_to_string(dir.path().join("reliability.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    assert!(doc.descendants().any(|n| n.attribute("id") == Some("diagonal")));
    let bars = doc.descendants().find(|n| n.attribute("id") == Some("bars")).unwrap();
    let non_empty = r.bins.iter().filter(|b| b.count > 0).count();
    assert_eq!(bars.children().filter(|n| n.has_tag_name("rect")).count(), non_empty);
}

#[test]
fn unwritable_directory_reports_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = emit_report(&sample_report(), &blocker.join("sub")).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
}
