mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng;
use tkg_core::data::Quadruple;
use tkg_core::graph::{
    build_dynamics, build_dynamics_simple, build_invariance, retrieve_dynamics, retrieve_recent, ViewKind,
};
use tkg_core::history::FactIndex;
use tkg_core::rules::{RuleIndex, TemporalRule};
use tkg_tensor::seeded;

use common::{dynamics_oracle, edge_tuple, invariance_oracle, random_facts};

fn random_rules<R: Rng>(rng: &mut R, relations: u32) -> Vec<TemporalRule> {
    let mut rules = Vec::new();
    for head in 0..relations {
        for body in 0..relations {
            if rng.random_bool(0.5) {
                let body_support = rng.random_range(1..6u64);
                let rule_support = rng.random_range(1..=body_support);
                rules.push(TemporalRule {
                    head,
                    body,
                    confidence: rule_support as f64 / body_support as f64,
                    rule_support,
                    body_support,
                });
            }
        }
    }
    rules
}

#[test]
fn views_match_brute_force_references() {
    let mut rng = seeded(77);
    for instance in 0..200 {
        let facts = random_facts(&mut rng, 6, 4, 10, 80);
        let history = FactIndex::new(&facts);
        let rules = random_rules(&mut rng, 4);
        let index = RuleIndex::from_rules(rules.clone());
        let t_q = rng.random_range(0..12);
        let cap = rng.random_range(1..6);
        let heads: Vec<(u32, u32)> = (0..rng.random_range(1..6))
            .map(|_| (rng.random_range(0..6), rng.random_range(0..4)))
            .collect();

        let inv = build_invariance(&heads, &history, t_q);
        assert_eq!(inv.kind, ViewKind::Invariance);
        let got: BTreeSet<_> = inv.edges().iter().map(|e| (e.subject, e.relation, e.object)).collect();
        assert_eq!(got.len(), inv.len(), "instance {instance}: duplicate invariance edges");
        assert_eq!(got, invariance_oracle(&facts, &heads, t_q), "instance {instance}");
        assert!(inv.edges().iter().all(|e| e.delta_t.is_none()));

        let mut expected = BTreeSet::new();
        for &h in &heads {
            let want = dynamics_oracle(&facts, &rules, h, t_q, cap);
            let per_query: Vec<_> = retrieve_dynamics(h.0, h.1, &history, &index, t_q, cap)
                .iter()
                .map(edge_tuple)
                .collect();
            assert_eq!(per_query, want, "instance {instance} head {h:?}");
            assert!(per_query.len() <= cap);
            expected.extend(want);
        }
        let dyn_view = build_dynamics(&heads, &history, &index, t_q, cap).unwrap();
        let got: BTreeSet<_> = dyn_view.edges().iter().map(edge_tuple).collect();
        assert_eq!(got, expected, "instance {instance}");
        assert!(dyn_view.edges().iter().all(|e| e.delta_t.is_some_and(|d| d >= 1)));
    }
}

#[test]
fn simple_dynamics_keeps_newest_facts_per_subject() {
    let mut rng = seeded(4);
    for _ in 0..100 {
        let facts = random_facts(&mut rng, 5, 3, 8, 60);
        let history = FactIndex::new(&facts);
        let t_q = rng.random_range(1..9);
        let s = rng.random_range(0..5);
        let mut want: Vec<(u32, u32, u32)> = facts
            .iter()
            .filter(|q| q.subject == s && q.time < t_q)
            .map(|q| (q.time, q.relation, q.object))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        want.sort_by(|a, b| b.0.cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        want.truncate(2);
        let got: Vec<_> = retrieve_recent(s, &history, t_q, 2)
            .iter()
            .map(|e| (t_q - e.delta_t.unwrap(), e.relation, e.object))
            .collect();
        assert_eq!(got, want);
    }
    let history = FactIndex::new(&[]);
    assert!(build_dynamics_simple(&[(0, 0)], &history, 3, 0).is_err());
}

#[test]
fn missing_rules_and_zero_cap() {
    let facts = vec![Quadruple::new(0, 0, 1, 0)];
    let history = FactIndex::new(&facts);
    let empty = RuleIndex::default();
    let view = build_dynamics(&[(0, 1)], &history, &empty, 2, 3).unwrap();
    assert!(view.is_empty());
    assert!(build_dynamics(&[(0, 1)], &history, &empty, 2, 0).is_err());
    // a fact at the query time itself is not history
    assert!(build_invariance(&[(0, 0)], &history, 0).is_empty());
    assert_eq!(build_invariance(&[(0, 0)], &history, 1).len(), 1);
}

fn arb_facts() -> impl Strategy<Value = Vec<Quadruple>> {
    prop::collection::vec((0u32..5, 0u32..3, 0u32..5, 0u32..10), 1..60)
        .prop_map(|v| v.into_iter().map(|(s, r, o, t)| Quadruple::new(s, r, o, t)).collect())
}

proptest! {
    #[test]
    fn invariance_ignores_timestamp_permutations(facts in arb_facts(), seed in 0u64..1000) {
        let heads = vec![(0, 0), (1, 1), (2, 2)];
        let t_q = 100;
        let mut times: Vec<u32> = facts.iter().map(|q| q.time).collect();
        let mut rng = seeded(seed);
        rand::seq::SliceRandom::shuffle(times.as_mut_slice(), &mut rng);
        let permuted: Vec<Quadruple> = facts
            .iter()
            .zip(times)
            .map(|(q, t)| Quadruple::new(q.subject, q.relation, q.object, t))
            .collect();
        let a = build_invariance(&heads, &FactIndex::new(&facts), t_q);
        let b = build_invariance(&heads, &FactIndex::new(&permuted), t_q);
        prop_assert_eq!(a.edges(), b.edges());
    }

    #[test]
    fn invariance_grows_with_query_time(facts in arb_facts(), t in 0u32..10) {
        let heads = vec![(0, 0), (1, 2), (3, 1), (4, 0)];
        let index = FactIndex::new(&facts);
        let earlier: BTreeSet<_> = build_invariance(&heads, &index, t).edges().to_vec().into_iter().collect();
        let later: BTreeSet<_> = build_invariance(&heads, &index, t + 1).edges().to_vec().into_iter().collect();
        prop_assert!(earlier.is_subset(&later));
    }
}
