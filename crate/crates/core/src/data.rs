//! Quadruple datasets: vocabularies, chronological splits and snapshots.
//!
//! On disk a dataset is a directory in the RE-GCN layout:
//! `entity2id.txt` and `relation2id.txt` (`name<TAB>id`) plus `train.txt`,
//! `valid.txt` and `test.txt` with `subject<TAB>relation<TAB>object<TAB>time`
//! lines. Extra trailing columns are ignored. Raw times are divided by the
//! granularity to obtain dense snapshot indices.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CoreError, Result};

pub type EntityId = u32;
pub type RelationId = u32;
pub type Timestamp = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quadruple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
    pub time: Timestamp,
}

impl Quadruple {
    pub fn new(subject: EntityId, relation: RelationId, object: EntityId, time: Timestamp) -> Self {
        Self {
            subject,
            relation,
            object,
            time,
        }
    }

    /// The reversed fact under inverse-relation augmentation. Applying it
    /// twice returns the original fact.
    pub fn inverse(&self, base_relations: u32) -> Self {
        let relation = if self.relation < base_relations {
            self.relation + base_relations
        } else {
            self.relation - base_relations
        };
        Self {
            subject: self.object,
            relation,
            object: self.subject,
            time: self.time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub time: Timestamp,
    pub facts: Vec<Quadruple>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    pub entities: Vec<String>,
    pub relations: Vec<String>,
}

impl Vocabulary {
    /// Vocabulary with generated names `e{i}` / `r{i}`.
    pub fn anonymous(entities: usize, relations: usize) -> Self {
        Self {
            entities: (0..entities).map(|i| format!("e{i}")).collect(),
            relations: (0..relations).map(|i| format!("r{i}")).collect(),
        }
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    /// Number of relations before inverse augmentation, |R|.
    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    /// Number of relations after inverse augmentation, 2|R|.
    pub fn augmented_relation_count(&self) -> usize {
        2 * self.relations.len()
    }

    pub fn inverse_relation(&self, r: RelationId) -> RelationId {
        let base = self.relation_count() as u32;
        if r < base {
            r + base
        } else {
            r - base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.txt",
            Split::Valid => "valid.txt",
            Split::Test => "test.txt",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub granularity: u32,
    pub train: Vec<Snapshot>,
    pub valid: Vec<Snapshot>,
    pub test: Vec<Snapshot>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Snapshot] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn fact_count(&self, split: Split) -> usize {
        self.split(split).iter().map(|s| s.facts.len()).sum()
    }

    /// All facts of all splits in chronological order, without inverses.
    pub fn all_facts(&self) -> impl Iterator<Item = &Quadruple> {
        self.train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .flat_map(|s| s.facts.iter())
    }

    pub fn base_relations(&self) -> u32 {
        self.vocab.relation_count() as u32
    }

    /// Snapshots of every split, time-ordered.
    pub fn all_snapshots(&self) -> impl Iterator<Item = &Snapshot> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CoreError::io(path, e))
}

fn parse_id_map(path: &Path) -> Result<Vec<String>> {
    let text = read(path)?;
    let mut entries: Vec<(usize, String)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (name, id) = line.rsplit_once('\t').ok_or_else(|| CoreError::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            detail: "expected `name<TAB>id`".into(),
        })?;
        let id = id.trim().parse::<usize>().map_err(|e| CoreError::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            detail: format!("bad id: {e}"),
        })?;
        entries.push((id, name.to_string()));
    }
    entries.sort_by_key(|(id, _)| *id);
    for (expect, (id, _)) in entries.iter().enumerate() {
        if *id != expect {
            return Err(CoreError::Data(format!(
                "{}: ids are not dense (expected {expect}, found {id})",
                path.display()
            )));
        }
    }
    Ok(entries.into_iter().map(|(_, name)| name).collect())
}

/// Parses quadruple lines, validating ids against `vocab`.
pub fn parse_facts(text: &str, path: &Path, vocab: &Vocabulary, granularity: u32) -> Result<Vec<Quadruple>> {
    if granularity == 0 {
        return Err(CoreError::Config("granularity must be positive".into()));
    }
    let (ne, nr) = (vocab.entity_count() as u64, vocab.relation_count() as u64);
    let mut facts = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |detail: String| CoreError::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            detail,
        };
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() < 4 {
            return Err(parse_err(format!("expected 4 columns, found {}", cols.len())));
        }
        let mut nums = [0u64; 4];
        for (slot, col) in nums.iter_mut().zip(&cols) {
            *slot = col.parse().map_err(|e| parse_err(format!("bad integer {col:?}: {e}")))?;
        }
        let [s, r, o, raw] = nums;
        if s >= ne || o >= ne {
            return Err(parse_err(format!("unknown entity id in ({s}, {o}); vocabulary has {ne}")));
        }
        if r >= nr {
            return Err(parse_err(format!("unknown relation id {r}; vocabulary has {nr}")));
        }
        let time = u32::try_from(raw / granularity as u64)
            .map_err(|_| parse_err(format!("timestamp {raw} out of range")))?;
        facts.push(Quadruple::new(s as u32, r as u32, o as u32, time));
    }
    Ok(facts)
}

/// Groups facts into strictly increasing snapshots.
///
/// Facts keep their file order within a snapshot; exact duplicates are dropped.
pub fn group_snapshots(facts: &[Quadruple]) -> Vec<Snapshot> {
    let mut sorted: Vec<Quadruple> = facts.to_vec();
    sorted.sort_by_key(|q| q.time);
    let mut snapshots: Vec<Snapshot> = Vec::new();
    let mut seen: HashSet<Quadruple> = HashSet::new();
    for q in sorted {
        if snapshots.last().is_none_or(|s| s.time != q.time) {
            snapshots.push(Snapshot {
                time: q.time,
                facts: Vec::new(),
            });
            seen.clear();
        }
        if seen.insert(q) {
            snapshots.last_mut().unwrap().facts.push(q);
        }
    }
    snapshots
}

fn check_chronology(dataset: &Dataset) -> Result<()> {
    let bounds = |s: &[Snapshot]| Some((s.first()?.time, s.last()?.time));
    let splits = [
        (Split::Train, bounds(&dataset.train)),
        (Split::Valid, bounds(&dataset.valid)),
        (Split::Test, bounds(&dataset.test)),
    ];
    let present: Vec<_> = splits.iter().filter_map(|(n, b)| b.map(|b| (*n, b))).collect();
    for pair in present.windows(2) {
        let ((a, (_, a_max)), (b, (b_min, _))) = (pair[0], pair[1]);
        if a_max >= b_min {
            return Err(CoreError::Data(format!(
                "non-monotone split boundary: {} ends at {a_max} but {} starts at {b_min}",
                a.name(),
                b.name()
            )));
        }
    }
    Ok(())
}

/// Loads a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>, granularity: u32) -> Result<Dataset> {
    let dir = dir.as_ref();
    let vocab = Vocabulary {
        entities: parse_id_map(&dir.join("entity2id.txt"))?,
        relations: parse_id_map(&dir.join("relation2id.txt"))?,
    };
    let load = |split: Split| -> Result<Vec<Snapshot>> {
        let path = dir.join(split.file_name());
        let facts = parse_facts(&read(&path)?, &path, &vocab, granularity)?;
        Ok(group_snapshots(&facts))
    };
    let (train, valid, test) = (load(Split::Train)?, load(Split::Valid)?, load(Split::Test)?);
    let dataset = Dataset {
        vocab,
        granularity,
        train,
        valid,
        test,
    };
    check_chronology(&dataset)?;
    Ok(dataset)
}

/// Writes a dataset in the layout read by [`load_dataset`].
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    let write = |name: &str, text: String| -> Result<()> {
        let path: PathBuf = dir.join(name);
        fs::write(&path, text).map_err(|e| CoreError::io(path, e))
    };
    let id_map = |names: &[String]| {
        names.iter().enumerate().fold(String::new(), |mut out, (i, n)| {
            let _ = writeln!(out, "{n}\t{i}");
            out
        })
    };
    write("entity2id.txt", id_map(&dataset.vocab.entities))?;
    write("relation2id.txt", id_map(&dataset.vocab.relations))?;
    for split in [Split::Train, Split::Valid, Split::Test] {
        let mut text = String::new();
        for q in dataset.split(split).iter().flat_map(|s| &s.facts) {
            let raw = q.time as u64 * dataset.granularity as u64;
            let _ = writeln!(text, "{}\t{}\t{}\t{raw}", q.subject, q.relation, q.object);
        }
        write(split.file_name(), text)?;
    }
    Ok(())
}

/// Appends the inverse of every fact: output is the input followed by
/// `(o, r + |R|, s, t)` for each `(s, r, o, t)`.
pub fn add_inverse(facts: &[Quadruple], base_relations: u32) -> Result<Vec<Quadruple>> {
    if let Some(q) = facts.iter().find(|q| q.relation >= base_relations) {
        return Err(CoreError::Data(format!(
            "relation {} already augmented (|R| = {base_relations})",
            q.relation
        )));
    }
    let mut out = Vec::with_capacity(facts.len() * 2);
    out.extend_from_slice(facts);
    out.extend(facts.iter().map(|q| q.inverse(base_relations)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityQuery {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationQuery {
    pub subject: EntityId,
    pub object: EntityId,
    pub relation: RelationId,
}

/// Queries derived from the facts of one snapshot, including inverse directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySet {
    pub time: Timestamp,
    pub entity_queries: Vec<EntityQuery>,
    pub relation_queries: Vec<RelationQuery>,
}

impl QuerySet {
    pub fn from_snapshot(snapshot: &Snapshot, base_relations: u32) -> Result<Self> {
        let augmented = add_inverse(&snapshot.facts, base_relations)?;
        Ok(Self {
            time: snapshot.time,
            entity_queries: augmented
                .iter()
                .map(|q| EntityQuery {
                    subject: q.subject,
                    relation: q.relation,
                    object: q.object,
                })
                .collect(),
            relation_queries: augmented
                .iter()
                .map(|q| RelationQuery {
                    subject: q.subject,
                    object: q.object,
                    relation: q.relation,
                })
                .collect(),
        })
    }

    /// Distinct `(subject, relation)` pairs in first-seen order.
    pub fn distinct_heads(&self) -> Vec<(EntityId, RelationId)> {
        let mut seen = HashSet::new();
        self.entity_queries
            .iter()
            .map(|q| (q.subject, q.relation))
            .filter(|k| seen.insert(*k))
            .collect()
    }
}

/// Query set for snapshot `time` of `split`.
pub fn queries_at(time: Timestamp, split: &[Snapshot], base_relations: u32) -> Result<QuerySet> {
    let snapshot = split
        .binary_search_by_key(&time, |s| s.time)
        .map(|i| &split[i])
        .map_err(|_| CoreError::Data(format!("timestamp {time} not present in split")))?;
    QuerySet::from_snapshot(snapshot, base_relations)
}
