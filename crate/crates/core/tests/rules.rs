mod common;

use proptest::prelude::*;
use tkg_core::data::Quadruple;
use tkg_core::rules::{mine_exhaustive, mine_rules, MinerConfig, RuleIndex, TemporalRule};
use tkg_tensor::seeded;

use common::{random_facts, rule_oracle};

#[test]
fn exhaustive_mining_matches_grounding_counts() {
    let mut rng = seeded(2024);
    for instance in 0..1000 {
        let facts = random_facts(&mut rng, 6, 4, 8, 200);
        let min_support = 1 + instance % 3;
        let index = mine_exhaustive(&facts, min_support as u64);
        let mut got: Vec<(u32, u32, u64, u64)> = index
            .iter()
            .map(|r| (r.head, r.body, r.rule_support, r.body_support))
            .collect();
        got.sort_unstable();
        assert_eq!(got, rule_oracle(&facts, min_support as u64), "instance {instance}");
        for r in index.iter() {
            assert_eq!(r.confidence, r.rule_support as f64 / r.body_support as f64);
            assert!((0.0..=1.0).contains(&r.confidence));
        }
    }
}

#[test]
fn three_of_four_followed() {
    let q = Quadruple::new;
    let facts = vec![
        q(0, 0, 1, 0),
        q(0, 1, 1, 1),
        q(2, 0, 3, 0),
        q(2, 1, 3, 2),
        q(4, 0, 5, 1),
        q(4, 1, 5, 3),
        q(6, 0, 7, 2),
        q(6, 1, 7, 2),
    ];
    let index = mine_exhaustive(&facts, 2);
    let rule = index.rules_for(1).iter().find(|r| r.body == 0).unwrap();
    assert_eq!(rule.confidence, 0.75);
    assert_eq!((rule.rule_support, rule.body_support), (3, 4));
    assert!(index.rules_for(7).is_empty());
}

#[test]
fn per_head_lists_follow_priority_order() {
    let mut rng = seeded(5);
    for _ in 0..100 {
        let index = mine_exhaustive(&random_facts(&mut rng, 5, 5, 6, 150), 1);
        for head in index.heads() {
            for w in index.rules_for(head).windows(2) {
                let (a, b) = (&w[0], &w[1]);
                let ordered = a.confidence > b.confidence
                    || (a.confidence == b.confidence && a.body_support > b.body_support)
                    || (a.confidence == b.confidence && a.body_support == b.body_support && a.body < b.body);
                assert!(ordered, "{a:?} before {b:?}");
            }
        }
    }
}

#[test]
fn sampled_mining_is_seed_deterministic_and_bounded() {
    let mut rng = seeded(8);
    let facts = random_facts(&mut rng, 30, 6, 40, 3000);
    let config = MinerConfig {
        exhaustive_threshold: 0,
        num_walks: 50,
        min_body_support: 2,
    };
    let a = mine_rules(&facts, &config, &mut seeded(1));
    let b = mine_rules(&facts, &config, &mut seeded(1));
    assert_eq!(a, b);
    assert!(!a.is_empty());
    for r in a.iter() {
        assert!((0.0..=1.0).contains(&r.confidence));
        assert!(r.body_support <= 50);
    }
}

#[test]
fn file_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rules.txt");
    let empty = RuleIndex::default();
    empty.save(&path).unwrap();
    assert_eq!(RuleIndex::load(&path).unwrap(), empty);

    let bad = "# header\n1\t0\t1.5\t3\t2\n";
    assert!(RuleIndex::parse(bad, &path).is_err());
    assert!(RuleIndex::parse("1\t0\t0.5\n", &path).is_err());
    assert!(RuleIndex::load(dir.path().join("missing.txt")).is_err());
}

fn arb_rules() -> impl Strategy<Value = Vec<TemporalRule>> {
    prop::collection::vec((0u32..20, 0u32..20, 1u64..1000, 0u64..1000), 0..100).prop_map(|raw| {
        raw.into_iter()
            .map(|(head, body, body_support, k)| {
                let rule_support = k % (body_support + 1);
                TemporalRule {
                    head,
                    body,
                    confidence: rule_support as f64 / body_support as f64,
                    rule_support,
                    body_support,
                }
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn rule_files_round_trip_exactly(rules in arb_rules()) {
        let index = RuleIndex::from_rules(rules);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.txt");
        index.save(&path).unwrap();
        prop_assert_eq!(RuleIndex::load(&path).unwrap(), index);
    }
}
