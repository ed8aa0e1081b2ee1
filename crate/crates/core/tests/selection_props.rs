use autogda::embed::EmbedError;
use autogda::selection::SelectionError;
use autogda::{
    contribution, distance, has_converged, select_top_k, EmbeddingVector, ObjectiveBreakdown, SampleId, TargetIndex,
};
use proptest::prelude::*;

fn breakdowns(contribs: &[f64]) -> Vec<ObjectiveBreakdown<f64>> {
    contribs
        .iter()
        .enumerate()
        .map(|(i, &c)| ObjectiveBreakdown {
            sample_id: SampleId::from(format!("s{:02}", (i * 7) % 13).as_str()),
            distance_sq: 0.0,
            ldiv_term: 0.0,
            utility: 0.0,
            contribution: c,
        })
        .collect()
}

/// Minimum-sum k-subset by enumeration; among equal sums the one whose
/// sorted id list is lexicographically smallest.
fn exhaustive(cands: &[ObjectiveBreakdown<f64>], k: usize) -> (Vec<SampleId>, f64) {
    let n = cands.len();
    let k = k.min(n);
    let mut best: Option<(f64, Vec<SampleId>)> = None;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let pick: Vec<&ObjectiveBreakdown<f64>> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| &cands[i]).collect();
        let sum: f64 = pick.iter().map(|c| c.contribution).sum();
        let mut ids: Vec<SampleId> = pick.iter().map(|c| c.sample_id.clone()).collect();
        ids.sort();
        let better = match &best {
            None => true,
            Some((s, b)) => sum < *s || (sum == *s && ids < *b),
        };
        if better {
            best = Some((sum, ids));
        }
    }
    let (sum, ids) = best.unwrap();
    (ids, sum)
}

/// Quarter-integer contributions: sums are exact and ties are frequent.
fn grid_contribs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-12i32..12).prop_map(|v| v as f64 / 4.0), 1..=12)
}

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, 3)
}

fn ev(v: &[f64]) -> EmbeddingVector<f64> {
    EmbeddingVector::new(v.to_vec()).unwrap()
}

#[test]
fn contribution_examples() {
    assert_eq!(contribution(0.0, 0.0, 0.0, 5.0, 7.0).unwrap(), 0.0);
    assert_eq!(contribution(4.0, 0.5, 1.0, 2.0, 3.0).unwrap(), 2.0);
    assert!(matches!(contribution(-1.0, 0.0, 0.0, 1.0, 1.0), Err(SelectionError::Negative { .. })));
    assert!(contribution(1.0, 0.0, f64::NAN, 1.0, 1.0).is_err());
}

#[test]
fn top_k_examples() {
    let c: Vec<ObjectiveBreakdown<f64>> = [("a", 1.0), ("b", 2.0), ("c", 3.0), ("d", 4.0)]
        .iter()
        .map(|&(id, v)| ObjectiveBreakdown {
            sample_id: id.into(),
            distance_sq: 0.0,
            ldiv_term: 0.0,
            utility: 0.0,
            contribution: v,
        })
        .collect();
    let r = select_top_k(&c, 2, 0).unwrap();
    assert_eq!(r.selected, [SampleId::from("a"), SampleId::from("b")]);
    assert_eq!(r.population_objective, 3.0);
    let r = select_top_k(&c, 9, 0).unwrap();
    assert!(r.shortfall);
    assert_eq!(r.selected.len(), 4);
    assert!(matches!(select_top_k(&c, 0, 0), Err(SelectionError::ZeroK)));
}

#[test]
fn convergence_examples() {
    assert!(has_converged(&[10.0, 10.0], 1e-3, 5));
    assert!(!has_converged(&[10.0, 5.0], 1e-3, 5));
    assert!(has_converged(&[10.0, 5.0], 1e-3, 2));
    assert!(!has_converged(&[10.0], 1e-3, 2));
}

#[test]
fn distance_examples() {
    assert_eq!(distance(&ev(&[1.0, 2.0, 2.0]), &ev(&[0.0, 0.0, 0.0])).unwrap(), 3.0);
    assert!(matches!(distance(&ev(&[1.0]), &ev(&[1.0, 2.0])), Err(EmbedError::Dimension { .. })));
    assert!(EmbeddingVector::new(vec![f64::NAN]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn greedy_equals_exhaustive(contribs in grid_contribs(), k in 1usize..=5) {
        let cands = breakdowns(&contribs);
        let got = select_top_k(&cands, k, 0).unwrap();
        let (ids, sum) = exhaustive(&cands, k);
        let mut sel = got.selected.clone();
        sel.sort();
        prop_assert_eq!(sel, ids);
        prop_assert_eq!(got.population_objective, sum);
        let c = |id: &SampleId| cands.iter().find(|b| &b.sample_id == id).unwrap().contribution;
        let ordered = got.selected.windows(2).all(|w| (c(&w[0]), &w[0]) < (c(&w[1]), &w[1]));
        prop_assert!(ordered);
    }

    #[test]
    fn greedy_equals_exhaustive_continuous(contribs in prop::collection::vec(-50.0f64..50.0, 1..=12), k in 1usize..=5) {
        let cands = breakdowns(&contribs);
        let mut sel = select_top_k(&cands, k, 0).unwrap().selected;
        sel.sort();
        prop_assert_eq!(sel, exhaustive(&cands, k).0);
    }

    #[test]
    fn scale_covariance(ints in prop::collection::vec(-500i32..500, 1..=12), k in 1usize..=8, c in 0.1f64..10.0) {
        let base: Vec<f64> = ints.iter().map(|&v| v as f64).collect();
        let scaled: Vec<f64> = base.iter().map(|v| v * c).collect();
        let a = select_top_k(&breakdowns(&base), k, 0).unwrap().selected;
        let b = select_top_k(&breakdowns(&scaled), k, 0).unwrap().selected;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn breakdown_recomputes(d in 0.0f64..50.0, l in 0.0f64..15.0, u in 0.0f64..30.0, ld in 0.0f64..100.0, lu in 0.0f64..100.0) {
        let w = autogda::Weights { lambda_d: ld, lambda_u: lu };
        let b = ObjectiveBreakdown::new("x".into(), d, l, u, w).unwrap();
        prop_assert!(b.utility <= 10.0);
        prop_assert_eq!(b.recompute(w).unwrap(), b.contribution);
        let w0 = autogda::Weights { lambda_d: ld, lambda_u: 0.0 };
        let b0 = ObjectiveBreakdown::new("x".into(), d, l, u, w0).unwrap();
        let b1 = ObjectiveBreakdown::new("x".into(), d, l, 0.0, w0).unwrap();
        prop_assert_eq!(b0.contribution, b1.contribution);
    }

    #[test]
    fn distance_is_a_metric(a in vec3(), b in vec3(), c in vec3()) {
        let (a, b, c) = (ev(&a), ev(&b), ev(&c));
        let ab = distance(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(distance(&a, &a).unwrap(), 0.0);
        prop_assert!((ab - distance(&b, &a).unwrap()).abs() <= 1e-9);
        prop_assert!(distance(&a, &c).unwrap() <= ab + distance(&b, &c).unwrap() + 1e-9);
    }

    #[test]
    fn distance_matches_hypot_fold(a in prop::collection::vec(-1e3f64..1e3, 8), b in prop::collection::vec(-1e3f64..1e3, 8)) {
        let oracle = a.iter().zip(&b).fold(0.0f64, |acc, (x, y)| acc.hypot(x - y));
        let got = distance(&ev(&a), &ev(&b)).unwrap();
        prop_assert!((got - oracle).abs() <= 1e-9 * oracle.max(1.0));
    }

    #[test]
    fn nearest_target_is_exhaustive_minimum(
        targets in prop::collection::vec(((0u8..4), prop::collection::vec(-3i32..3, 2)), 1..6),
        q in prop::collection::vec(-3i32..3, 2),
    ) {
        // Integer coordinates make distance ties common.
        let entries: Vec<(String, EmbeddingVector<f64>)> = targets
            .iter()
            .enumerate()
            .map(|(i, (tag, v))| (format!("t{tag}-{i}"), ev(&v.iter().map(|&x| x as f64).collect::<Vec<_>>())))
            .collect();
        let mut index = TargetIndex::new();
        index.insert("e", entries.clone()).unwrap();
        let qv = ev(&q.iter().map(|&x| x as f64).collect::<Vec<_>>());
        let got = index.nearest_target(&qv, "e").unwrap();
        let expected = entries
            .iter()
            .map(|(c, v)| (distance(&qv, v).unwrap(), c.as_str()))
            .min_by(|x, y| x.partial_cmp(y).unwrap())
            .unwrap();
        prop_assert_eq!((got.distance, got.claim), expected);
        for (_, v) in &entries {
            prop_assert!(got.distance <= distance(&qv, v).unwrap());
        }
        prop_assert!(matches!(index.nearest_target(&qv, "missing"), Err(EmbedError::UnknownEvidence(_))));
    }
}
