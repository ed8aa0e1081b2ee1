use std::collections::BTreeSet;
use std::sync::Arc;

use autogda::corpus::LabeledExample;
use autogda::gateway::{Endpoint, MemoryCache, Transport};
use autogda::rng::substream;
use autogda::simlab::{
    evaluate_dataset, make_world, parse_facts, render_claim, run_experiment, sign_test_p, sim_entail, sim_gateway,
    sim_generate, ExperimentParams, SimBackend, SimParams,
};
use autogda::{distance, HardLabel, Origin, SyntheticSample};
use proptest::prelude::*;
use serde_json::json;

fn labeled(world_ev: &str, text: &str, claim: &str, label: HardLabel) -> LabeledExample {
    SyntheticSample::root(world_ev, claim.to_string(), label, label.bit() as f64).to_labeled(text)
}

#[test]
fn worlds_are_reproducible_and_well_formed() {
    let a = make_world(4, 6, 5, SimParams::default()).unwrap();
    let b = make_world(4, 6, 5, SimParams::default()).unwrap();
    assert_eq!(a, b);
    for ev in &a.evidences {
        assert_eq!(ev.text.matches(". ").count() + 1, 5);
        assert_eq!(parse_facts(&ev.text), ev.facts);
        assert_eq!(a.targets[&ev.evidence_id].len(), 3);
    }
    assert!(make_world(0, 0, 5, SimParams::default()).is_err());
    let bad = SimParams { teacher_noise: 1.5, ..SimParams::default() };
    assert!(make_world(0, 1, 5, bad).is_err());
}

#[test]
fn distractors_never_belong_to_evidences() {
    for seed in 0..100 {
        let w = make_world(seed, 1 + (seed as usize % 7), 1 + (seed as usize % 5), SimParams::default()).unwrap();
        let mut seen = BTreeSet::new();
        for ev in &w.evidences {
            for f in &ev.facts {
                assert!(seen.insert(f.clone()), "fact {f} repeated");
            }
        }
        assert!(w.distractors.iter().all(|d| !seen.contains(d)));
    }
}

#[test]
fn perfect_generator_hits_requested_label() {
    let w = make_world(1, 3, 5, SimParams::default()).unwrap();
    let mut rng = substream(1, &["t"]);
    for ev in &w.evidences {
        for _ in 0..50 {
            let pos = sim_generate(&w, ev, HardLabel::Entailed, 1.0, &mut rng);
            assert_eq!(pos.true_label, HardLabel::Entailed);
            assert!(pos.facts.iter().all(|f| ev.facts.contains(f)));
            let neg = sim_generate(&w, ev, HardLabel::NotEntailed, 1.0, &mut rng);
            assert_eq!(neg.true_label, HardLabel::NotEntailed);
            assert!(neg.facts.iter().any(|f| w.distractors.contains(f)));
            assert_eq!(w.true_label(&ev.evidence_id, &neg.facts).unwrap(), HardLabel::NotEntailed);
        }
    }
}

#[test]
fn half_fidelity_hits_half_the_time() {
    let w = make_world(2, 4, 5, SimParams::default()).unwrap();
    let mut rng = substream(2, &["mc"]);
    let n = 10_000;
    let hits = (0..n)
        .filter(|i| {
            sim_generate(&w, &w.evidences[i % 4], HardLabel::Entailed, 0.5, &mut rng).true_label == HardLabel::Entailed
        })
        .count();
    let rate = hits as f64 / n as f64;
    assert!((rate - 0.5).abs() <= 0.02, "rate {rate}");
}

#[test]
fn teacher_extremes() {
    let p: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
    let mut rng = substream(3, &["t"]);
    assert_eq!(sim_entail(&p, &p[..2], 0.0, &mut rng), 1.0);
    assert_eq!(sim_entail(&p, &["z".to_string()], 0.0, &mut rng), 0.0);
    let n = 10_000;
    let mut sum = 0.0;
    for i in 0..n {
        let s = sim_entail(&p, &p[..1 + i % 3], 1.0, &mut rng);
        assert!((0.0..=1.0).contains(&s));
        sum += s;
    }
    assert!((sum / n as f64 - 0.5).abs() <= 0.02);
}

#[test]
fn teacher_is_reflexive_through_the_gateway() {
    let w = Arc::new(make_world(5, 2, 5, SimParams { teacher_noise: 1.0, ..SimParams::default() }).unwrap());
    let gw = sim_gateway(w.clone(), Some(Arc::new(MemoryCache::new())));
    let text = &w.evidences[0].text;
    assert!(gw.entail(text, text).unwrap() >= 0.99);
}

#[test]
fn services_are_pure_functions_of_the_request() {
    let w = Arc::new(make_world(6, 2, 5, SimParams::default()).unwrap());
    let b = SimBackend::new(w.clone());
    let body = json!({"premise": w.evidences[0].text, "hypothesis": render_claim(&w.evidences[1].facts)});
    let first = b.post(Endpoint::Entail, &body).unwrap();
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let (b, body) = (b.clone(), body.clone());
            std::thread::spawn(move || b.post(Endpoint::Entail, &body).unwrap())
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), first);
    }
}

#[test]
fn embedder_ranks_by_shared_facts() {
    let w = Arc::new(make_world(7, 2, 5, SimParams::default()).unwrap());
    let gw = sim_gateway(w.clone(), None);
    let f = &w.evidences[0].facts;
    let d = &w.distractors;
    let base = render_claim(&[f[0].clone(), f[1].clone(), f[2].clone()]);
    let share2 = render_claim(&[f[0].clone(), f[1].clone(), d[0].clone()]);
    let share1 = render_claim(&[f[0].clone(), d[1].clone(), d[2].clone()]);
    let share0 = render_claim(&[d[3].clone(), d[4].clone(), d[5].clone()]);
    let v = gw.embed(&[&base, &share2, &share1, &share0]).unwrap();
    let dist: Vec<f64> = v[1..].iter().map(|x| distance(&v[0], x).unwrap()).collect();
    assert!(dist[0] < dist[1] && dist[1] < dist[2], "{dist:?}");
}

#[test]
fn evaluation_counts() {
    let w = make_world(8, 1, 5, SimParams::default()).unwrap();
    let ev = &w.evidences[0];
    let good = render_claim(&ev.facts[..2]);
    let bad = render_claim(&[w.distractors[0].clone()]);
    let set = [
        labeled(&ev.evidence_id, &ev.text, &good, HardLabel::Entailed),
        labeled(&ev.evidence_id, &ev.text, &bad, HardLabel::NotEntailed),
        labeled(&ev.evidence_id, &ev.text, &render_claim(&ev.facts[1..3]), HardLabel::Entailed),
        labeled(&ev.evidence_id, &ev.text, &bad, HardLabel::Entailed),
    ];
    let e = evaluate_dataset(&w, &set).unwrap();
    assert_eq!(e.label_accuracy, 0.75);
    assert_eq!(e.n, 4);
    assert_eq!(e.origin_composition[&Origin::Fewshot], 4);
    assert_eq!(evaluate_dataset(&w, &set[..3]).unwrap().label_accuracy, 1.0);

    let flipped: Vec<LabeledExample> =
        set[..3].iter().map(|x| LabeledExample { label: 1 - x.label, ..x.clone() }).collect();
    assert_eq!(evaluate_dataset(&w, &flipped).unwrap().label_accuracy, 0.0);

    let junk = labeled(&ev.evidence_id, &ev.text, "no facts here", HardLabel::Entailed);
    assert!(evaluate_dataset(&w, &[junk]).is_err());
}

#[test]
fn perfect_services_tie_both_strategies() {
    let mut params = ExperimentParams { n_evidences: 5, ..ExperimentParams::default() };
    params.sim = SimParams { generator_fidelity: 1.0, teacher_noise: 0.0, link_teacher_noise: 0.0 };
    let s = run_experiment(&params, 0, 2).unwrap();
    for r in &s.runs {
        assert_eq!(r.objective.label_accuracy, 1.0);
        assert_eq!(r.random.as_ref().unwrap().label_accuracy, 1.0);
    }
    assert_eq!(s.ties, 2);
}

#[test]
fn sign_test_values() {
    // One-sided binomial(n, 1/2) upper tail P[X >= wins].
    assert_eq!(sign_test_p(0, 0), 1.0);
    assert!((sign_test_p(20, 0) - 1.0 / 1_048_576.0).abs() < 1e-15);
    assert!((sign_test_p(5, 0) - 1.0 / 32.0).abs() < 1e-15);
    // (C(6,3)+C(6,4)+C(6,5)+C(6,6)) / 2^6
    assert!((sign_test_p(3, 3) - 42.0 / 64.0).abs() < 1e-15);
    // (C(10,8)+C(10,9)+C(10,10)) / 2^10
    assert!((sign_test_p(8, 2) - 56.0 / 1024.0).abs() < 1e-15);
    assert!(sign_test_p(15, 5) < 0.05);
    assert!(sign_test_p(14, 6) > 0.05);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn claims_render_losslessly(seed in 0u64..1000, n in 1usize..5, label in prop_oneof![Just(HardLabel::Entailed), Just(HardLabel::NotEntailed)]) {
        let w = make_world(seed, n, 5, SimParams::default()).unwrap();
        let mut rng = substream(seed, &["claims"]);
        for ev in &w.evidences {
            let c = sim_generate(&w, ev, label, 0.7, &mut rng);
            prop_assert_eq!(parse_facts(&c.text()), c.facts.clone());
            prop_assert_eq!(w.true_label(&ev.evidence_id, &c.facts).unwrap(), c.true_label);
        }
    }
}
