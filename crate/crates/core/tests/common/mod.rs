//! Brute-force oracles and small fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use tkg_core::config::RunConfig;
use tkg_core::data::{group_snapshots, Dataset, Quadruple, Vocabulary};
use tkg_core::graph::Edge;
use tkg_core::rules::{mine_exhaustive, RuleIndex, TemporalRule};
use tkg_core::synth::SyntheticSpec;
use tkg_core::model::{Architecture, Model, Settings};
use tkg_core::workspace::Workspace;
use tkg_tensor::{seeded, ParamStore, Tensor};

pub fn random_facts<R: Rng>(rng: &mut R, entities: u32, relations: u32, times: u32, max_facts: usize) -> Vec<Quadruple> {
    let n = rng.random_range(1..=max_facts);
    (0..n)
        .map(|_| {
            Quadruple::new(
                rng.random_range(0..entities),
                rng.random_range(0..relations),
                rng.random_range(0..entities),
                rng.random_range(0..times),
            )
        })
        .collect()
}

/// `(head, body, rule_support, body_support)` by direct grounding counts.
pub fn rule_oracle(facts: &[Quadruple], min_body_support: u64) -> Vec<(u32, u32, u64, u64)> {
    let distinct: BTreeSet<Quadruple> = facts.iter().copied().collect();
    let relations: BTreeSet<u32> = distinct.iter().map(|q| q.relation).collect();
    let mut out = Vec::new();
    for &head in &relations {
        for &body in &relations {
            let bodies: Vec<&Quadruple> = distinct.iter().filter(|q| q.relation == body).collect();
            let support = bodies
                .iter()
                .filter(|b| {
                    distinct
                        .iter()
                        .any(|h| h.relation == head && h.subject == b.subject && h.object == b.object && h.time > b.time)
                })
                .count() as u64;
            let bs = bodies.len() as u64;
            if support > 0 && bs >= min_body_support {
                out.push((head, body, support, bs));
            }
        }
    }
    out
}

/// Invariance edges as `(s, r, o)` by filtering every fact.
pub fn invariance_oracle(facts: &[Quadruple], heads: &[(u32, u32)], t_q: u32) -> BTreeSet<(u32, u32, u32)> {
    facts
        .iter()
        .filter(|q| q.time < t_q && heads.contains(&(q.subject, q.relation)))
        .map(|q| (q.subject, q.relation, q.object))
        .collect()
}

/// Rule-guided retrieval for one head, by sorting then truncating.
pub fn dynamics_oracle(
    facts: &[Quadruple],
    rules: &[TemporalRule],
    (s, r): (u32, u32),
    t_q: u32,
    cap: usize,
) -> Vec<(u32, u32, u32, u32)> {
    let mut ordered: Vec<&TemporalRule> = rules.iter().filter(|x| x.head == r).collect();
    ordered.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap()
            .then(b.body_support.cmp(&a.body_support))
            .then(a.body.cmp(&b.body))
    });
    let mut out = Vec::new();
    for rule in ordered {
        let matching: BTreeSet<(u32, u32)> = facts
            .iter()
            .filter(|q| q.subject == s && q.relation == rule.body && q.time < t_q)
            .map(|q| (q.time, q.object))
            .collect();
        let mut matching: Vec<(u32, u32)> = matching.into_iter().collect();
        matching.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        out.extend(matching.into_iter().map(|(t, o)| (s, rule.body, o, t_q - t)));
    }
    out.truncate(cap);
    out
}

pub fn edge_tuple(e: &Edge) -> (u32, u32, u32, u32) {
    (e.subject, e.relation, e.object, e.delta_t.unwrap_or(0))
}

/// Pessimistic filtered rank by sorting the surviving candidates.
pub fn rank_oracle(logits: &[f64], gold: usize, known: &[usize]) -> usize {
    let mut cands: Vec<(f64, bool)> = logits
        .iter()
        .enumerate()
        .filter(|(c, _)| *c == gold || !known.contains(c))
        .map(|(c, &v)| (v, c == gold))
        .collect();
    // gold after every equal score
    cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    cands.iter().position(|c| c.1).unwrap() + 1
}

/// A 5-entity, 3-relation, 6-timestamp graph: train 0..=3, valid 4, test 5.
pub fn toy_dataset() -> Dataset {
    let raw = [
        (0, 0, 1, 0),
        (1, 1, 2, 0),
        (2, 2, 3, 0),
        (0, 1, 1, 1),
        (3, 0, 4, 1),
        (1, 0, 2, 2),
        (0, 0, 1, 2),
        (4, 2, 0, 2),
        (0, 1, 1, 3),
        (1, 1, 2, 3),
        (3, 0, 4, 3),
        (0, 0, 1, 4),
        (2, 2, 3, 4),
        (0, 1, 1, 5),
        (3, 0, 4, 5),
    ];
    let facts: Vec<Quadruple> = raw.iter().map(|&(s, r, o, t)| Quadruple::new(s, r, o, t)).collect();
    let snapshots = group_snapshots(&facts);
    Dataset {
        vocab: Vocabulary::anonymous(5, 3),
        granularity: 1,
        train: snapshots[..4].to_vec(),
        valid: snapshots[4..5].to_vec(),
        test: snapshots[5..].to_vec(),
    }
}

pub fn toy_config() -> RunConfig {
    RunConfig {
        granularity: 1,
        dim: 4,
        channels: 2,
        gcn_layers: 1,
        inv_layers: 1,
        dyn_layers: 1,
        cap: 3,
        history_len: 2,
        dropout: 0.2,
        max_epochs: 3,
        patience: 3,
        lr: 0.01,
        seed: 3,
        ..RunConfig::default()
    }
}

pub fn workspace(dataset: Dataset, config: &RunConfig) -> Workspace {
    let train: Vec<Quadruple> = dataset.train.iter().flat_map(|s| s.facts.iter().copied()).collect();
    let augmented = tkg_core::data::add_inverse(&train, dataset.base_relations()).unwrap();
    let rules = mine_exhaustive(&augmented, 1);
    Workspace::new(dataset, rules, config).unwrap()
}

/// A small synthetic graph with one planted rule, for quick training runs.
pub fn small_synthetic() -> (Dataset, RuleIndex) {
    let spec = SyntheticSpec {
        entities: 8,
        relations: 3,
        timestamps: 16,
        rules: vec![tkg_core::synth::RecurrenceRule {
            body: 0,
            head: 1,
            period: 2,
            lag: 1,
        }],
        valid_fraction: 0.2,
        test_fraction: 0.2,
        ..SyntheticSpec::default()
    };
    let ds = spec.generate().unwrap();
    let train: Vec<Quadruple> = ds.train.iter().flat_map(|s| s.facts.iter().copied()).collect();
    let augmented = tkg_core::data::add_inverse(&train, ds.base_relations()).unwrap();
    let rules = mine_exhaustive(&augmented, 2);
    (ds, rules)
}

pub fn small_config() -> RunConfig {
    RunConfig {
        granularity: 1,
        dim: 8,
        channels: 2,
        inv_layers: 1,
        dyn_layers: 1,
        cap: 3,
        max_epochs: 3,
        patience: 3,
        lr: 0.01,
        dropout: 0.1,
        mu: 0.1,
        gamma: 0.2,
        seed: 11,
        ..RunConfig::default()
    }
}

/// Toy workspace and freshly initialized model for `variant`.
pub fn toy_model(variant: &str) -> (Workspace, Model, ParamStore, Settings) {
    let mut config = toy_config();
    config.variant = variant.parse().unwrap();
    let ws = workspace(toy_dataset(), &config);
    let arch = Architecture::new(&config, 5, 3);
    let mut store = ParamStore::new();
    let model = Model::new(arch, &mut store, &mut seeded(config.seed)).unwrap();
    // zero biases put ReLU inputs exactly on the kink; move to a generic point
    let mut rng = seeded(config.seed + 1);
    for (_, p) in store.iter_mut() {
        if p.name.ends_with("bias") || p.name.contains(".b_") {
            p.value = Tensor::uniform(p.value.shape().to_vec(), 0.1, &mut rng);
        }
    }
    (ws, model, store, Settings::from(&config))
}
