//! Evolution of entity and relation tables over the snapshots preceding a query time.

use std::rc::Rc;

use rand::Rng;
use tkg_tensor::{ParamId, ParamStore, Tape, Tensor, Var};

use super::nn::{constant, index, matrix, Gru};
use crate::data::{add_inverse, Snapshot, Timestamp};
use crate::error::{CoreError, Result};

/// Index arrays for one snapshot's augmented facts, sorted by `(object, subject, relation)`.
#[derive(Debug, Clone)]
pub struct SnapshotGraph {
    pub time: Timestamp,
    pub src: Rc<[usize]>,
    pub rel: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    /// `1 / c_o` for each edge, `c_o` the in-degree of its object.
    pub norm: Tensor,
    pool_entities: Rc<[usize]>,
    pool_relations: Rc<[usize]>,
    pool_weights: Tensor,
}

impl SnapshotGraph {
    pub fn new(snapshot: &Snapshot, base_relations: u32) -> Result<Self> {
        let mut triples: Vec<(usize, usize, usize)> = add_inverse(&snapshot.facts, base_relations)?
            .iter()
            .map(|q| (q.object as usize, q.subject as usize, q.relation as usize))
            .collect();
        triples.sort_unstable();
        triples.dedup();
        let mut degree = std::collections::BTreeMap::new();
        for &(o, _, _) in &triples {
            *degree.entry(o).or_insert(0usize) += 1;
        }
        let norm = Tensor::vector(triples.iter().map(|(o, _, _)| 1.0 / degree[o] as f64).collect());

        // distinct (relation, entity) incidences for mean pooling
        let mut pairs: Vec<(usize, usize)> = triples
            .iter()
            .flat_map(|&(o, s, r)| [(r, s), (r, o)])
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        let mut count = std::collections::BTreeMap::new();
        for &(r, _) in &pairs {
            *count.entry(r).or_insert(0usize) += 1;
        }
        Ok(Self {
            time: snapshot.time,
            src: index(triples.iter().map(|t| t.1)),
            rel: index(triples.iter().map(|t| t.2)),
            dst: index(triples.iter().map(|t| t.0)),
            norm,
            pool_entities: index(pairs.iter().map(|p| p.1)),
            pool_relations: index(pairs.iter().map(|p| p.0)),
            pool_weights: Tensor::vector(pairs.iter().map(|(r, _)| 1.0 / count[r] as f64).collect()),
        })
    }

    pub fn edge_count(&self) -> usize {
        self.src.len()
    }

    /// Mean of the rows of `entities` incident to each relation; zero for absent relations.
    pub fn pool<'t>(&self, entities: &Var<'t>, relations: usize) -> Result<Var<'t>> {
        let d = entities.shape()[1];
        if self.pool_entities.is_empty() {
            return Ok(entities.tape().constant(Tensor::zeros(vec![relations, d])));
        }
        let weights = entities.tape().constant(self.pool_weights.clone());
        Ok(entities
            .index_select(Rc::clone(&self.pool_entities))?
            .scale_rows(&weights)?
            .index_add(Rc::clone(&self.pool_relations), relations)?)
    }
}

/// Composition `κ(e_s, r)`: two width-`k` kernels over the stacked pair, projected to `d`.
#[derive(Debug, Clone)]
pub struct Compose {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub proj: ParamId,
    width: usize,
}

#[derive(Debug, Clone)]
pub struct GcnLayer {
    pub compose: Compose,
    pub w_msg: ParamId,
    pub w_self: ParamId,
    /// Relation co-update; absent on the last layer, whose relation output is unused.
    pub w_rel: Option<ParamId>,
}

#[derive(Debug, Clone)]
pub struct InitParams {
    pub w_tau: ParamId,
    pub b_tau: ParamId,
    pub w0: ParamId,
    pub layers: Vec<GcnLayer>,
    pub entity_gru: Gru,
    pub relation_gru: Gru,
    pub rel_pool: ParamId,
}

impl InitParams {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        d: usize,
        gcn_layers: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w_tau = constant(store, "init.w_tau".into(), Tensor::uniform(vec![1], 1.0, rng))?;
        let b_tau = constant(store, "init.b_tau".into(), Tensor::zeros(vec![1]))?;
        let w0 = matrix(store, "init.w0".into(), 2 * d, d, rng)?;
        let mut layers = Vec::with_capacity(gcn_layers);
        for l in 0..gcn_layers {
            let bound = (6.0 / (4 * kernel) as f64).sqrt();
            let compose = Compose {
                kernel: constant(store, format!("init.gcn{l}.kernel"), Tensor::uniform(vec![2, 2, kernel], bound, rng))?,
                bias: constant(store, format!("init.gcn{l}.kernel_bias"), Tensor::zeros(vec![2]))?,
                proj: matrix(store, format!("init.gcn{l}.proj"), 2 * d, d, rng)?,
                width: kernel,
            };
            layers.push(GcnLayer {
                compose,
                w_msg: matrix(store, format!("init.gcn{l}.w_msg"), d, d, rng)?,
                w_self: matrix(store, format!("init.gcn{l}.w_self"), d, d, rng)?,
                w_rel: if l + 1 < gcn_layers {
                    Some(matrix(store, format!("init.gcn{l}.w_rel"), d, d, rng)?)
                } else {
                    None
                },
            });
        }
        Ok(Self {
            w_tau,
            b_tau,
            w0,
            layers,
            entity_gru: Gru::register(store, "init.entity_gru", d, rng)?,
            relation_gru: Gru::register(store, "init.relation_gru", d, rng)?,
            rel_pool: matrix(store, "init.rel_pool".into(), 2 * d, d, rng)?,
        })
    }
}

/// `cos(w_τ·τ + b_τ)` for each entry of `tau` (`[n×1]`), as an `[n×1]` column.
pub fn scalar_time<'t>(tape: &'t Tape, store: &ParamStore, p: &InitParams, tau: Tensor) -> Result<Var<'t>> {
    let w = tape.param(store, p.w_tau).reshape(vec![1, 1])?;
    Ok(tape.constant(tau).matmul(&w)?.add(&tape.param(store, p.b_tau))?.cos()?)
}

/// `[e ∥ φ(τ)·1_d] · W_0`, with the scalar tag tiled across `d` columns.
pub fn temporal_tag<'t>(tape: &'t Tape, store: &ParamStore, p: &InitParams, e: &Var<'t>, tau: u32) -> Result<Var<'t>> {
    let phi = scalar_time(tape, store, p, Tensor::scalar(f64::from(tau)).reshape(vec![1, 1])?)?;
    let block = tape.constant(Tensor::ones(e.shape())).mul(&phi)?;
    Ok(Var::concat_cols(&[*e, block])?.matmul(&tape.param(store, p.w0))?)
}

fn compose<'t>(tape: &'t Tape, store: &ParamStore, c: &Compose, hs: &Var<'t>, rs: &Var<'t>) -> Result<Var<'t>> {
    let (n, d) = (hs.shape()[0], hs.shape()[1]);
    let stacked = Var::concat_cols(&[*hs, *rs])?.reshape(vec![n, 2, d])?;
    let mixed = stacked.conv1d(
        &tape.param(store, c.kernel),
        Some(&tape.param(store, c.bias)),
        (c.width - 1) / 2,
    )?;
    Ok(mixed.reshape(vec![n, 2 * d])?.matmul(&tape.param(store, c.proj))?)
}

/// Relational message passing within one snapshot; returns the updated entity table.
pub fn snapshot_gcn<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    layers: &[GcnLayer],
    graph: &SnapshotGraph,
    entities: &Var<'t>,
    relations: &Var<'t>,
) -> Result<Var<'t>> {
    let rows = entities.shape()[0];
    let (mut h, mut r) = (*entities, *relations);
    for layer in layers {
        let self_term = h.matmul(&tape.param(store, layer.w_self))?;
        let pre = if graph.edge_count() == 0 {
            self_term
        } else {
            let hs = h.index_select(Rc::clone(&graph.src))?;
            let rs = r.index_select(Rc::clone(&graph.rel))?;
            let norm = tape.constant(graph.norm.clone());
            compose(tape, store, &layer.compose, &hs, &rs)?
                .matmul(&tape.param(store, layer.w_msg))?
                .scale_rows(&norm)?
                .index_add(Rc::clone(&graph.dst), rows)?
                .add(&self_term)?
        };
        h = pre.rrelu()?;
        if let Some(w_rel) = layer.w_rel {
            r = r.matmul(&tape.param(store, w_rel))?.rrelu()?;
        }
    }
    Ok(h)
}

/// Runs the relation and entity GRUs over `history` (oldest first), each
/// snapshot paired with its distance `τ = t_q - t_i` from the query time.
pub fn evolve<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    p: &InitParams,
    base_entities: &Var<'t>,
    base_relations: &Var<'t>,
    history: &[(u32, &SnapshotGraph)],
) -> Result<(Var<'t>, Var<'t>)> {
    let n_rel = base_relations.shape()[0];
    let (mut e, mut r) = (*base_entities, *base_relations);
    for &(tau, graph) in history {
        if tau == 0 {
            return Err(CoreError::Data(format!(
                "snapshot {} is not strictly before the query time",
                graph.time
            )));
        }
        let pooled = graph.pool(&e, n_rel)?;
        let r_in = Var::concat_cols(&[pooled, *base_relations])?.matmul(&tape.param(store, p.rel_pool))?;
        r = p.relation_gru.step(tape, store, &r, &r_in)?;
        let tagged = temporal_tag(tape, store, p, &e, tau)?;
        let g = snapshot_gcn(tape, store, &p.layers, graph, &tagged, &r)?;
        e = p.entity_gru.step(tape, store, &e, &g)?;
    }
    Ok((e, r))
}
