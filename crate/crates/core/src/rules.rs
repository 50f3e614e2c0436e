//! One-hop cyclic temporal rules `(A, r_h, B, t2) <- (A, r_b, B, t1), t1 < t2`.
//!
//! Confidence is the fraction of body groundings `(A, r_b, B, t1)` that are
//! followed by some head fact `(A, r_h, B, t2)` with `t2 > t1`. Small graphs
//! are mined by exhaustive enumeration; larger ones by sampled backward walks
//! and sampled body groundings.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, RngCore};
use tkg_tensor::{seeded, SeededRng};

use crate::data::{add_inverse, Dataset, EntityId, Quadruple, RelationId, Timestamp};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalRule {
    pub head: RelationId,
    pub body: RelationId,
    pub confidence: f64,
    pub rule_support: u64,
    pub body_support: u64,
}

impl TemporalRule {
    fn priority_cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .confidence
            .total_cmp(&self.confidence)
            .then(other.body_support.cmp(&self.body_support))
            .then(self.body.cmp(&other.body))
    }
}

/// Rules grouped by head relation, each list in retrieval priority order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleIndex {
    by_head: BTreeMap<RelationId, Vec<TemporalRule>>,
}

impl RuleIndex {
    pub fn from_rules(rules: impl IntoIterator<Item = TemporalRule>) -> Self {
        let mut by_head: BTreeMap<RelationId, Vec<TemporalRule>> = BTreeMap::new();
        for r in rules {
            by_head.entry(r.head).or_default().push(r);
        }
        for list in by_head.values_mut() {
            list.sort_by(TemporalRule::priority_cmp);
        }
        Self { by_head }
    }

    /// Rules for `head`, highest confidence first. Empty when none were mined.
    pub fn rules_for(&self, head: RelationId) -> &[TemporalRule] {
        self.by_head.get(&head).map_or(&[], Vec::as_slice)
    }

    pub fn heads(&self) -> impl Iterator<Item = RelationId> + '_ {
        self.by_head.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TemporalRule> {
        self.by_head.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.by_head.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# head\tbody\tconfidence\trule_support\tbody_support\n");
        for r in self.iter() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.head, r.body, r.confidence, r.rule_support, r.body_support
            );
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut rules = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |detail: String| CoreError::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                detail,
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(err(format!("expected 5 tab-separated fields, found {}", cols.len())));
            }
            let int = |s: &str| s.parse::<u64>().map_err(|e| err(format!("bad integer {s:?}: {e}")));
            let confidence: f64 = cols[2].parse().map_err(|e| err(format!("bad confidence: {e}")))?;
            if !(0.0..=1.0).contains(&confidence) {
                return Err(err(format!("confidence {confidence} outside [0, 1]")));
            }
            let head = int(cols[0])?;
            let body = int(cols[1])?;
            rules.push(TemporalRule {
                head: u32::try_from(head).map_err(|_| err("head id out of range".into()))?,
                body: u32::try_from(body).map_err(|_| err("body id out of range".into()))?,
                confidence,
                rule_support: int(cols[3])?,
                body_support: int(cols[4])?,
            });
        }
        Ok(Self::from_rules(rules))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| CoreError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Self::parse(&text, path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinerConfig {
    /// Sampled walks per head relation, and sampled body groundings per candidate rule.
    pub num_walks: usize,
    pub min_body_support: u64,
    /// Graphs with fewer facts than this are mined exhaustively.
    pub exhaustive_threshold: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        Self {
            num_walks: 200,
            min_body_support: 2,
            exhaustive_threshold: 10_000,
        }
    }
}

/// Latest timestamp of every relation linking each ordered entity pair.
struct PairIndex {
    latest: HashMap<(EntityId, EntityId), Vec<(RelationId, Timestamp)>>,
}

impl PairIndex {
    fn new(facts: &[Quadruple]) -> Self {
        let mut latest: HashMap<(EntityId, EntityId), BTreeMap<RelationId, Timestamp>> = HashMap::new();
        for q in facts {
            let slot = latest.entry((q.subject, q.object)).or_default().entry(q.relation).or_insert(q.time);
            *slot = (*slot).max(q.time);
        }
        Self {
            latest: latest
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect(),
        }
    }

    fn relations_after(&self, subject: EntityId, object: EntityId, t: Timestamp) -> impl Iterator<Item = RelationId> + '_ {
        self.latest
            .get(&(subject, object))
            .into_iter()
            .flatten()
            .filter(move |&&(_, latest)| latest > t)
            .map(|&(r, _)| r)
    }

    fn followed_by(&self, subject: EntityId, object: EntityId, t: Timestamp, head: RelationId) -> bool {
        self.latest.get(&(subject, object)).is_some_and(|v| {
            v.binary_search_by_key(&head, |&(r, _)| r)
                .is_ok_and(|i| v[i].1 > t)
        })
    }
}

fn dedup(facts: &[Quadruple]) -> Vec<Quadruple> {
    let set: BTreeSet<Quadruple> = facts.iter().copied().collect();
    set.into_iter().collect()
}

/// Exact confidences from every body grounding.
pub fn mine_exhaustive(facts: &[Quadruple], min_body_support: u64) -> RuleIndex {
    let facts = dedup(facts);
    let pairs = PairIndex::new(&facts);
    let mut body_support: BTreeMap<RelationId, u64> = BTreeMap::new();
    let mut rule_support: BTreeMap<(RelationId, RelationId), u64> = BTreeMap::new();
    for q in &facts {
        *body_support.entry(q.relation).or_default() += 1;
        for head in pairs.relations_after(q.subject, q.object, q.time) {
            *rule_support.entry((head, q.relation)).or_default() += 1;
        }
    }
    RuleIndex::from_rules(rule_support.into_iter().filter_map(|((head, body), support)| {
        let bs = body_support[&body];
        (bs >= min_body_support).then(|| TemporalRule {
            head,
            body,
            confidence: support as f64 / bs as f64,
            rule_support: support,
            body_support: bs,
        })
    }))
}

fn mine_sampled(facts: &[Quadruple], config: &MinerConfig, seed: u64) -> RuleIndex {
    let facts = dedup(facts);
    let pairs = PairIndex::new(&facts);
    let mut by_relation: BTreeMap<RelationId, Vec<Quadruple>> = BTreeMap::new();
    let mut by_pair: HashMap<(EntityId, EntityId), Vec<Quadruple>> = HashMap::new();
    for q in &facts {
        by_relation.entry(q.relation).or_default().push(*q);
        by_pair.entry((q.subject, q.object)).or_default().push(*q);
    }

    let mut rules = Vec::new();
    for (&head, head_facts) in &by_relation {
        let mut rng = seeded(seed ^ (head as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut candidates = BTreeSet::new();
        for _ in 0..config.num_walks {
            let start = head_facts[rng.random_range(0..head_facts.len())];
            // one step back in time to the head subject, via an edge between the same pair
            let earlier: Vec<&Quadruple> = by_pair[&(start.subject, start.object)]
                .iter()
                .filter(|q| q.time < start.time)
                .collect();
            if !earlier.is_empty() {
                candidates.insert(earlier[rng.random_range(0..earlier.len())].relation);
            }
        }
        for body in candidates {
            let groundings = &by_relation[&body];
            let picked: Vec<&Quadruple> = if groundings.len() <= config.num_walks {
                groundings.iter().collect()
            } else {
                sample(&mut rng, groundings.len(), config.num_walks)
                    .into_iter()
                    .map(|i| &groundings[i])
                    .collect()
            };
            let body_support = picked.len() as u64;
            let rule_support = picked
                .iter()
                .filter(|q| pairs.followed_by(q.subject, q.object, q.time, head))
                .count() as u64;
            if body_support >= config.min_body_support && rule_support > 0 {
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
    RuleIndex::from_rules(rules)
}

/// Mines rules from (inverse-augmented) training facts.
pub fn mine_rules(facts: &[Quadruple], config: &MinerConfig, rng: &mut SeededRng) -> RuleIndex {
    let seed = rng.next_u64();
    if facts.len() < config.exhaustive_threshold {
        mine_exhaustive(facts, config.min_body_support)
    } else {
        mine_sampled(facts, config, seed)
    }
}

/// Mines the inverse-augmented training split of `dataset`.
pub fn mine_training(dataset: &Dataset, config: &MinerConfig, seed: u64) -> Result<RuleIndex> {
    let train: Vec<Quadruple> = dataset.train.iter().flat_map(|s| s.facts.iter().copied()).collect();
    if train.is_empty() {
        return Err(CoreError::Data("training split is empty".into()));
    }
    let augmented = add_inverse(&train, dataset.base_relations())?;
    Ok(mine_rules(&augmented, config, &mut seeded(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: u32, r: u32, o: u32, t: u32) -> Quadruple {
        Quadruple::new(s, r, o, t)
    }

    #[test]
    fn deterministic_follow_gives_full_confidence() {
        let facts: Vec<_> = (0..5)
            .flat_map(|i| [q(i, 0, i + 10, 2 * i), q(i, 1, i + 10, 2 * i + 1)])
            .collect();
        let index = mine_exhaustive(&facts, 2);
        let rules = index.rules_for(1);
        assert_eq!(rules.len(), 1);
        assert_eq!((rules[0].body, rules[0].confidence), (0, 1.0));
        assert!(index.rules_for(3).is_empty());
    }

    #[test]
    fn three_of_four_groundings_followed() {
        let facts = vec![
            q(0, 0, 1, 0),
            q(0, 1, 1, 1),
            q(2, 0, 3, 0),
            q(2, 1, 3, 2),
            q(4, 0, 5, 1),
            q(4, 1, 5, 3),
            q(6, 0, 7, 2),
        ];
        let index = mine_exhaustive(&facts, 2);
        let r = &index.rules_for(1)[0];
        assert_eq!((r.rule_support, r.body_support, r.confidence), (3, 4, 0.75));
    }

    #[test]
    fn ties_break_by_support_then_relation() {
        let mk = |body, confidence, body_support| TemporalRule {
            head: 0,
            body,
            confidence,
            rule_support: 1,
            body_support,
        };
        let index = RuleIndex::from_rules([mk(5, 0.5, 2), mk(3, 0.5, 2), mk(4, 0.5, 9), mk(9, 0.9, 1)]);
        let order: Vec<_> = index.rules_for(0).iter().map(|r| r.body).collect();
        assert_eq!(order, vec![9, 4, 3, 5]);
    }

    #[test]
    fn malformed_rule_file_is_rejected() {
        let p = Path::new("rules.txt");
        assert!(RuleIndex::parse("1\t2\t0.5\t1\n", p).is_err());
        assert!(RuleIndex::parse("1\t2\t1.5\t1\t1\n", p).is_err());
        assert!(RuleIndex::parse("# only a comment\n", p).unwrap().is_empty());
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let facts: Vec<_> = (0..300u32)
            .map(|i| q(i % 7, i % 3, (i * 5) % 11, i / 10))
            .collect();
        let config = MinerConfig {
            num_walks: 20,
            exhaustive_threshold: 0,
            ..MinerConfig::default()
        };
        let a = mine_rules(&facts, &config, &mut seeded(1));
        let b = mine_rules(&facts, &config, &mut seeded(1));
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }
}
