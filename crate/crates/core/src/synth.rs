//! Deterministic synthetic temporal graphs with planted recurrence rules.
//!
//! For every rule, each entity `A` has a partner `B`; partners form a random
//! derangement that is redrawn every `episode` steps. `A` emits a body fact
//! `(A, body, B, t)` every `period` steps (phase `A mod period`), and the head
//! fact `(A, head, B, t + lag)` follows with probability `1 - noise`.
//! Relations not used by any rule carry background facts `(A, r, Q_r(A), t)`
//! towards a fixed partner (also a derangement), each emitted with
//! probability `background`.

use rand::seq::SliceRandom;
use rand::Rng;
use tkg_tensor::seeded;

use crate::data::{group_snapshots, Dataset, Quadruple, Snapshot, Vocabulary};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceRule {
    pub body: u32,
    pub head: u32,
    pub period: u32,
    pub lag: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub entities: usize,
    pub relations: usize,
    pub timestamps: usize,
    pub rules: Vec<RecurrenceRule>,
    pub noise: f64,
    pub episode: u32,
    pub background: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            entities: 20,
            relations: 5,
            timestamps: 60,
            rules: vec![RecurrenceRule {
                body: 3,
                head: 4,
                period: 2,
                lag: 2,
            }],
            noise: 0.1,
            episode: 20,
            background: 0.1,
            valid_fraction: 0.1,
            test_fraction: 0.1,
            seed: 7,
        }
    }
}

/// Uniform random permutation of `0..n` without fixed points.
fn derangement<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<u32> {
    let mut p: Vec<u32> = (0..n as u32).collect();
    loop {
        p.shuffle(rng);
        if p.iter().enumerate().all(|(i, &v)| i as u32 != v) {
            return p;
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CoreError::Config(m));
        if self.entities < 2 || self.relations == 0 || self.timestamps < 3 {
            return fail("need at least 2 entities, 1 relation and 3 timestamps".into());
        }
        for r in &self.rules {
            if r.body as usize >= self.relations || r.head as usize >= self.relations {
                return fail(format!("rule {}->{} uses an unknown relation", r.body, r.head));
            }
            if r.period == 0 || r.lag == 0 {
                return fail("rule period and lag must be positive".into());
            }
        }
        if self.episode == 0 {
            return fail("episode length must be positive".into());
        }
        for (name, p) in [("noise", self.noise), ("background", self.background)] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} {p} outside [0, 1]"));
            }
        }
        let held = self.valid_fraction + self.test_fraction;
        if self.valid_fraction <= 0.0 || self.test_fraction <= 0.0 || held >= 1.0 {
            return fail("valid and test fractions must be positive and leave training data".into());
        }
        Ok(())
    }

    /// Raw facts in generation order, before splitting.
    pub fn facts(&self) -> Result<Vec<Quadruple>> {
        self.validate()?;
        let mut rng = seeded(self.seed);
        let n = self.entities;
        let t_max = self.timestamps as u32;
        let ruled: Vec<u32> = self.rules.iter().flat_map(|r| [r.body, r.head]).collect();
        let free: Vec<u32> = (0..self.relations as u32).filter(|r| !ruled.contains(r)).collect();
        let fixed: Vec<Vec<u32>> = free.iter().map(|_| derangement(n, &mut rng)).collect();
        let mut partners: Vec<Vec<u32>> = self.rules.iter().map(|_| derangement(n, &mut rng)).collect();

        let mut facts = Vec::new();
        let mut pending: Vec<Quadruple> = Vec::new();
        for t in 0..t_max {
            facts.extend(pending.iter().filter(|q| q.time == t));
            pending.retain(|q| q.time != t);
            if t > 0 && t % self.episode == 0 {
                for p in &mut partners {
                    *p = derangement(n, &mut rng);
                }
            }
            for (k, rule) in self.rules.iter().enumerate() {
                for a in 0..n as u32 {
                    if (t + a) % rule.period != 0 {
                        continue;
                    }
                    let b = partners[k][a as usize];
                    facts.push(Quadruple::new(a, rule.body, b, t));
                    let follows = rng.random::<f64>() >= self.noise;
                    if follows && t + rule.lag < t_max {
                        pending.push(Quadruple::new(a, rule.head, b, t + rule.lag));
                    }
                }
            }
            for (i, &r) in free.iter().enumerate() {
                for (a, &b) in fixed[i].iter().enumerate().take(n) {
                    if rng.random::<f64>() < self.background {
                        facts.push(Quadruple::new(a as u32, r, b, t));
                    }
                }
            }
        }
        Ok(facts)
    }

    pub fn generate(&self) -> Result<Dataset> {
        let snapshots = group_snapshots(&self.facts()?);
        let t = self.timestamps as f64;
        let test_start = (t * (1.0 - self.test_fraction)).round() as u32;
        let valid_start = (t * (1.0 - self.test_fraction - self.valid_fraction)).round() as u32;
        let pick = |lo: u32, hi: u32| -> Vec<Snapshot> {
            snapshots
                .iter()
                .filter(|s| s.time >= lo && s.time < hi)
                .cloned()
                .collect()
        };
        Ok(Dataset {
            vocab: Vocabulary::anonymous(self.entities, self.relations),
            granularity: 1,
            train: pick(0, valid_start),
            valid: pick(valid_start, test_start),
            test: pick(test_start, u32::MAX),
        })
    }
}
