//! Per-timestamp query subgraphs for the two encoder views.

use std::cmp::Reverse;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::data::{EntityId, RelationId, Timestamp};
use crate::error::{CoreError, Result};
use crate::history::FactIndex;
use crate::rules::RuleIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
    /// `t_q - t` for dynamics edges, `None` for timestamp-free invariance edges.
    pub delta_t: Option<u32>,
}

impl Edge {
    pub fn invariant(subject: EntityId, relation: RelationId, object: EntityId) -> Self {
        Self {
            subject,
            relation,
            object,
            delta_t: None,
        }
    }

    pub fn timed(subject: EntityId, relation: RelationId, object: EntityId, delta_t: u32) -> Self {
        Self {
            subject,
            relation,
            object,
            delta_t: Some(delta_t),
        }
    }

    fn key(&self) -> (EntityId, EntityId, RelationId, Option<u32>) {
        (self.object, self.subject, self.relation, self.delta_t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewKind {
    Invariance,
    Dynamics,
}

/// Deduplicated edge list, sorted by `(object, subject, relation, delta_t)`,
/// with each object's in-edges contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewSubgraph {
    pub time: Timestamp,
    pub kind: ViewKind,
    edges: Vec<Edge>,
    in_ranges: BTreeMap<EntityId, (usize, usize)>,
}

impl ViewSubgraph {
    pub fn new(time: Timestamp, kind: ViewKind, mut edges: Vec<Edge>) -> Self {
        edges.sort_unstable_by_key(Edge::key);
        edges.dedup();
        let mut in_ranges = BTreeMap::new();
        let mut start = 0;
        for i in 1..=edges.len() {
            if i == edges.len() || edges[i].object != edges[start].object {
                in_ranges.insert(edges[start].object, (start, i));
                start = i;
            }
        }
        Self {
            time,
            kind,
            edges,
            in_ranges,
        }
    }

    pub fn empty(time: Timestamp, kind: ViewKind) -> Self {
        Self::new(time, kind, Vec::new())
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Edges whose object is `node`.
    pub fn in_edges(&self, node: EntityId) -> &[Edge] {
        match self.in_ranges.get(&node) {
            Some(&(a, b)) => &self.edges[a..b],
            None => &[],
        }
    }

    /// Nodes with at least one incoming edge, ascending.
    pub fn targets(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.in_ranges.keys().copied()
    }

    /// One `s r o` (or `s r o dt`) line per edge.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = match e.delta_t {
                Some(dt) => writeln!(out, "{} {} {} {dt}", e.subject, e.relation, e.object),
                None => writeln!(out, "{} {} {}", e.subject, e.relation, e.object),
            };
        }
        out
    }
}

/// Every historical `(s, r, o)` matching a query head `(s, r)`, timestamps dropped.
pub fn build_invariance(heads: &[(EntityId, RelationId)], history: &FactIndex, t_q: Timestamp) -> ViewSubgraph {
    let edges = heads
        .iter()
        .flat_map(|&(s, r)| {
            history
                .objects_before(s, r, t_q)
                .iter()
                .map(move |&(_, o)| Edge::invariant(s, r, o))
        })
        .collect();
    ViewSubgraph::new(t_q, ViewKind::Invariance, edges)
}

fn check_cap(cap: usize) -> Result<()> {
    if cap == 0 {
        return Err(CoreError::Config("dynamics cap N must be at least 1".into()));
    }
    Ok(())
}

/// Rule-guided retrieval for one query: body relations in rule order, facts
/// newest first (ties by object id), at most `cap` edges.
pub fn retrieve_dynamics(
    subject: EntityId,
    relation: RelationId,
    history: &FactIndex,
    rules: &RuleIndex,
    t_q: Timestamp,
    cap: usize,
) -> Vec<Edge> {
    let mut out = Vec::new();
    for rule in rules.rules_for(relation) {
        if out.len() >= cap {
            break;
        }
        let mut facts = history.objects_before(subject, rule.body, t_q).to_vec();
        facts.sort_unstable_by_key(|&(t, o)| (Reverse(t), o));
        out.extend(
            facts
                .into_iter()
                .take(cap - out.len())
                .map(|(t, o)| Edge::timed(subject, rule.body, o, t_q - t)),
        );
    }
    out
}

pub fn build_dynamics(
    heads: &[(EntityId, RelationId)],
    history: &FactIndex,
    rules: &RuleIndex,
    t_q: Timestamp,
    cap: usize,
) -> Result<ViewSubgraph> {
    check_cap(cap)?;
    let edges = heads
        .iter()
        .flat_map(|&(s, r)| retrieve_dynamics(s, r, history, rules, t_q, cap))
        .collect();
    Ok(ViewSubgraph::new(t_q, ViewKind::Dynamics, edges))
}

/// The `cap` newest facts of `subject`, ties by `(relation, object)`.
pub fn retrieve_recent(subject: EntityId, history: &FactIndex, t_q: Timestamp, cap: usize) -> Vec<Edge> {
    let mut facts = history.subject_facts_before(subject, t_q).to_vec();
    facts.sort_unstable_by_key(|&(t, r, o)| (Reverse(t), r, o));
    facts
        .into_iter()
        .take(cap)
        .map(|(t, r, o)| Edge::timed(subject, r, o, t_q - t))
        .collect()
}

/// Rule-free dynamics view built from each query subject's most recent facts.
pub fn build_dynamics_simple(
    heads: &[(EntityId, RelationId)],
    history: &FactIndex,
    t_q: Timestamp,
    cap: usize,
) -> Result<ViewSubgraph> {
    check_cap(cap)?;
    let mut subjects: Vec<EntityId> = heads.iter().map(|&(s, _)| s).collect();
    subjects.sort_unstable();
    subjects.dedup();
    let edges = subjects
        .into_iter()
        .flat_map(|s| retrieve_recent(s, history, t_q, cap))
        .collect();
    Ok(ViewSubgraph::new(t_q, ViewKind::Dynamics, edges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Quadruple;
    use crate::rules::TemporalRule;

    fn q(s: u32, r: u32, o: u32, t: u32) -> Quadruple {
        Quadruple::new(s, r, o, t)
    }

    fn rule(head: u32, body: u32, confidence: f64) -> TemporalRule {
        TemporalRule {
            head,
            body,
            confidence,
            rule_support: 1,
            body_support: 2,
        }
    }

    #[test]
    fn invariance_drops_timestamps() {
        let history = FactIndex::new(&[q(0, 1, 1, 1), q(0, 1, 1, 3), q(0, 1, 2, 4), q(0, 2, 3, 1)]);
        let g = build_invariance(&[(0, 1)], &history, 5);
        assert_eq!(g.edges(), &[Edge::invariant(0, 1, 1), Edge::invariant(0, 1, 2)]);
        assert!(build_invariance(&[(7, 1)], &history, 5).is_empty());
    }

    #[test]
    fn dynamics_cap_keeps_most_recent() {
        let facts: Vec<_> = (0..12).map(|t| q(0, 0, 1 + t, t)).collect();
        let history = FactIndex::new(&facts);
        let rules = RuleIndex::from_rules([rule(1, 0, 0.5)]);
        let edges = retrieve_dynamics(0, 1, &history, &rules, 12, 8);
        assert_eq!(edges.len(), 8);
        let deltas: Vec<_> = edges.iter().map(|e| e.delta_t.unwrap()).collect();
        assert_eq!(deltas, (1..=8).collect::<Vec<_>>());
    }

    #[test]
    fn dynamics_follow_rule_priority() {
        let history = FactIndex::new(&[
            q(0, 5, 1, 1),
            q(0, 5, 2, 2),
            q(0, 5, 3, 3),
            q(0, 6, 4, 4),
        ]);
        let rules = RuleIndex::from_rules([rule(1, 6, 0.4), rule(1, 5, 0.9)]);
        let edges = retrieve_dynamics(0, 1, &history, &rules, 5, 3);
        assert!(edges.iter().all(|e| e.relation == 5));
        assert!(retrieve_dynamics(0, 2, &history, &rules, 5, 3).is_empty());
        assert!(build_dynamics(&[(0, 1)], &history, &rules, 5, 0).is_err());
    }

    #[test]
    fn simple_view_ties_by_relation_then_object() {
        let history = FactIndex::new(&[q(0, 2, 1, 3), q(0, 1, 9, 3), q(0, 1, 4, 3), q(0, 0, 0, 1)]);
        let edges = retrieve_recent(0, &history, 4, 2);
        assert_eq!(edges, vec![Edge::timed(0, 1, 4, 1), Edge::timed(0, 1, 9, 1)]);
        let two = FactIndex::new(&[q(3, 0, 1, 0), q(3, 1, 2, 1)]);
        assert_eq!(build_dynamics_simple(&[(3, 0)], &two, 5, 8).unwrap().len(), 2);
    }

    #[test]
    fn adjacency_matches_edge_list() {
        let history = FactIndex::new(&[q(0, 0, 2, 0), q(1, 0, 2, 0), q(1, 0, 3, 1)]);
        let g = build_invariance(&[(0, 0), (1, 0)], &history, 4);
        assert_eq!(g.in_edges(2).len(), 2);
        assert_eq!(g.in_edges(3).len(), 1);
        assert!(g.in_edges(0).is_empty());
        assert_eq!(g.targets().collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(g.to_text(), "0 0 2\n1 0 2\n1 0 3\n");
    }
}
