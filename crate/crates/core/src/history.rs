use std::collections::HashMap;

use crate::data::{EntityId, Quadruple, RelationId, Timestamp};

/// Time-sorted lookup tables over a set of (augmented) facts.
///
/// Every lookup takes a query time `t_q` and only exposes facts with
/// `t < t_q`, so one index over all splits serves every query timestamp.
#[derive(Debug, Clone, Default)]
pub struct FactIndex {
    by_head: HashMap<(EntityId, RelationId), Vec<(Timestamp, EntityId)>>,
    by_subject: HashMap<EntityId, Vec<(Timestamp, RelationId, EntityId)>>,
}

impl FactIndex {
    pub fn new<'a>(facts: impl IntoIterator<Item = &'a Quadruple>) -> Self {
        let mut index = Self::default();
        for q in facts {
            index
                .by_head
                .entry((q.subject, q.relation))
                .or_default()
                .push((q.time, q.object));
            index
                .by_subject
                .entry(q.subject)
                .or_default()
                .push((q.time, q.relation, q.object));
        }
        for v in index.by_head.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        for v in index.by_subject.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        index
    }

    /// `(t, object)` for facts `(subject, relation, object, t)` with `t < before`,
    /// sorted by `(t, object)` ascending.
    pub fn objects_before(&self, subject: EntityId, relation: RelationId, before: Timestamp) -> &[(Timestamp, EntityId)] {
        match self.by_head.get(&(subject, relation)) {
            Some(v) => &v[..v.partition_point(|&(t, _)| t < before)],
            None => &[],
        }
    }

    /// `(t, relation, object)` for facts of `subject` with `t < before`, ascending.
    pub fn subject_facts_before(&self, subject: EntityId, before: Timestamp) -> &[(Timestamp, RelationId, EntityId)] {
        match self.by_subject.get(&subject) {
            Some(v) => &v[..v.partition_point(|&(t, _, _)| t < before)],
            None => &[],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookups_respect_the_time_bound() {
        let facts = [
            Quadruple::new(0, 1, 2, 3),
            Quadruple::new(0, 1, 4, 1),
            Quadruple::new(0, 2, 5, 2),
            Quadruple::new(0, 1, 2, 3),
        ];
        let index = FactIndex::new(&facts);
        assert_eq!(index.objects_before(0, 1, 3), &[(1, 4)]);
        assert_eq!(index.objects_before(0, 1, 4), &[(1, 4), (3, 2)]);
        assert_eq!(index.subject_facts_before(0, 3).len(), 2);
        assert!(index.objects_before(9, 1, 10).is_empty());
    }
}
