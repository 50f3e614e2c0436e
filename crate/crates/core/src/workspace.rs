//! Per-timestamp inputs prepared once and reused across epochs.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use crate::config::RunConfig;
use crate::data::{add_inverse, Dataset, EntityId, QuerySet, RelationId, Split, Timestamp};
use crate::error::{CoreError, Result};
use crate::graph::{build_dynamics, build_dynamics_simple, build_invariance, ViewSubgraph};
use crate::history::FactIndex;
use crate::model::encoders::EdgeTensors;
use crate::model::init::SnapshotGraph;
use crate::model::Batch;
use crate::rules::RuleIndex;

/// Everything the model needs for the queries of one timestamp.
#[derive(Debug)]
pub struct Step {
    pub time: Timestamp,
    pub queries: QuerySet,
    pub heads: Vec<(EntityId, RelationId)>,
    pub invariance: ViewSubgraph,
    pub dynamics: ViewSubgraph,
    invariance_edges: EdgeTensors,
    dynamics_edges: EdgeTensors,
    /// `(τ, index into the workspace snapshot graphs)`, oldest first.
    history: Vec<(u32, usize)>,
}

#[derive(Debug)]
pub struct Workspace {
    pub dataset: Dataset,
    pub rules: RuleIndex,
    history: FactIndex,
    graphs: Vec<SnapshotGraph>,
    known: HashMap<(EntityId, RelationId, Timestamp), Vec<EntityId>>,
    history_len: usize,
    cap: usize,
    simple_dynamics: bool,
    steps: RefCell<BTreeMap<Timestamp, Rc<Step>>>,
}

impl Workspace {
    pub fn new(dataset: Dataset, rules: RuleIndex, config: &RunConfig) -> Result<Self> {
        let base = dataset.base_relations();
        let all: Vec<_> = dataset.all_facts().copied().collect();
        let augmented = add_inverse(&all, base)?;
        let history = FactIndex::new(&augmented);
        let mut known: HashMap<_, Vec<EntityId>> = HashMap::new();
        for q in &augmented {
            known.entry((q.subject, q.relation, q.time)).or_default().push(q.object);
        }
        for v in known.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        let graphs = dataset
            .all_snapshots()
            .map(|s| SnapshotGraph::new(s, base))
            .collect::<Result<Vec<_>>>()?;
        if graphs.windows(2).any(|w| w[0].time >= w[1].time) {
            return Err(CoreError::Data("snapshots are not strictly increasing in time".into()));
        }
        Ok(Self {
            dataset,
            rules,
            history,
            graphs,
            known,
            history_len: config.history_len,
            cap: config.cap,
            simple_dynamics: config.variant.simple_dynamics,
            steps: RefCell::new(BTreeMap::new()),
        })
    }

    pub fn times(&self, split: Split) -> Vec<Timestamp> {
        self.dataset.split(split).iter().map(|s| s.time).collect()
    }

    pub fn history_index(&self) -> &FactIndex {
        &self.history
    }

    /// Objects `o` with `(s, r, o, t)` in any split (inverse-augmented).
    pub fn known_objects(&self, subject: EntityId, relation: RelationId, time: Timestamp) -> &[EntityId] {
        self.known
            .get(&(subject, relation, time))
            .map_or(&[], Vec::as_slice)
    }

    pub fn step(&self, split: Split, time: Timestamp) -> Result<Rc<Step>> {
        if let Some(s) = self.steps.borrow().get(&time) {
            return Ok(Rc::clone(s));
        }
        let snapshots = self.dataset.split(split);
        let queries = crate::data::queries_at(time, snapshots, self.dataset.base_relations())?;
        let heads = queries.distinct_heads();
        let invariance = build_invariance(&heads, &self.history, time);
        let dynamics = if self.simple_dynamics {
            build_dynamics_simple(&heads, &self.history, time, self.cap)?
        } else {
            build_dynamics(&heads, &self.history, &self.rules, time, self.cap)?
        };
        let end = self.graphs.partition_point(|g| g.time < time);
        let start = end.saturating_sub(self.history_len);
        let history = (start..end).map(|i| (time - self.graphs[i].time, i)).collect();
        let step = Rc::new(Step {
            time,
            invariance_edges: EdgeTensors::from_view(&invariance)?,
            dynamics_edges: EdgeTensors::from_view(&dynamics)?,
            queries,
            heads,
            invariance,
            dynamics,
            history,
        });
        self.steps.borrow_mut().insert(time, Rc::clone(&step));
        Ok(step)
    }

    pub fn history_graphs<'a>(&'a self, step: &Step) -> Vec<(u32, &'a SnapshotGraph)> {
        step.history.iter().map(|&(tau, i)| (tau, &self.graphs[i])).collect()
    }

    /// Assembles a model batch; `history` must come from [`Self::history_graphs`].
    pub fn batch<'a>(
        step: &'a Step,
        history: &'a [(u32, &'a SnapshotGraph)],
        with_relations: bool,
    ) -> Batch<'a> {
        Batch {
            time: step.time,
            history,
            invariance: &step.invariance_edges,
            dynamics: &step.dynamics_edges,
            entity_queries: &step.queries.entity_queries,
            relation_queries: if with_relations {
                &step.queries.relation_queries
            } else {
                &[]
            },
            heads: if with_relations { &step.heads } else { &[] },
        }
    }
}
