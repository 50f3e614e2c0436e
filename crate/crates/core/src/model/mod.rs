//! The two-view extrapolation model: temporal initialization, view encoders,
//! decoders and the training objective.

pub mod decode;
pub mod encoders;
pub mod init;
pub mod nn;

use std::rc::Rc;

use rand::Rng;
use tkg_tensor::{ParamId, ParamStore, Tape, Tensor, Var};

use crate::config::{RunConfig, TimeEncoding, Variant};
use crate::data::{EntityId, EntityQuery, RelationId, RelationQuery, Timestamp};
use crate::error::{CoreError, Result};
use decode::{contrastive_loss, fuse_scores, joint_loss, LossTerms};
use encoders::{attention_layer, decompose, tgat_encode, AttentionLayer, EdgeTensors, HarmonicTime};
use init::{evolve, scalar_time, InitParams, SnapshotGraph};
use nn::{index, ConvTransE, Modulator};

/// Shape-determining settings, fixed when parameters are created.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub num_entities: usize,
    /// Relation count including inverses.
    pub num_relations: usize,
    pub dim: usize,
    pub gcn_layers: usize,
    pub inv_layers: usize,
    pub dyn_layers: usize,
    pub channels: usize,
    pub kernel: usize,
}

impl Architecture {
    pub fn new(config: &RunConfig, num_entities: usize, base_relations: usize) -> Self {
        Self {
            num_entities,
            num_relations: 2 * base_relations,
            dim: config.dim,
            gcn_layers: config.gcn_layers,
            inv_layers: config.inv_layers,
            dyn_layers: config.dyn_layers,
            channels: config.channels,
            kernel: config.kernel,
        }
    }
}

/// Per-view parameters.
#[derive(Debug, Clone)]
pub struct ViewParams {
    pub relation_gate: Modulator,
    pub entity_gate: Modulator,
    pub layers: Vec<AttentionLayer>,
    pub query: Modulator,
    pub decoder: ConvTransE,
}

impl ViewParams {
    fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        arch: &Architecture,
        layers: usize,
        parts: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let d = arch.dim;
        Ok(Self {
            relation_gate: Modulator::register(store, &format!("{name}.relation_gate"), d, d, rng)?,
            entity_gate: Modulator::register(store, &format!("{name}.entity_gate"), d, d, rng)?,
            layers: (0..layers)
                .map(|l| AttentionLayer::register(store, &format!("{name}.attn{l}"), d, parts, rng))
                .collect::<Result<_>>()?,
            query: Modulator::register(store, &format!("{name}.query"), 2 * d, d, rng)?,
            decoder: ConvTransE::register(store, &format!("{name}.decoder"), d, arch.channels, arch.kernel, rng)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub arch: Architecture,
    pub entity_emb: ParamId,
    pub relation_emb: ParamId,
    pub init: InitParams,
    pub invariance: ViewParams,
    pub dynamics: ViewParams,
    pub time: HarmonicTime,
    pub relation_decoder: ConvTransE,
}

/// Hyperparameters read on every forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub variant: Variant,
    pub dropout: f64,
    pub alpha: f64,
    pub mu: f64,
    pub gamma: f64,
}

impl From<&RunConfig> for Settings {
    fn from(c: &RunConfig) -> Self {
        Self {
            variant: c.variant.clone(),
            dropout: c.dropout,
            alpha: c.alpha,
            mu: c.mu,
            gamma: c.gamma,
        }
    }
}

/// Inputs for one query timestamp.
#[derive(Clone, Copy)]
pub struct Batch<'a> {
    pub time: Timestamp,
    /// Snapshots before `time`, oldest first, each with `τ = time - t_i`.
    pub history: &'a [(u32, &'a SnapshotGraph)],
    pub invariance: &'a EdgeTensors,
    pub dynamics: &'a EdgeTensors,
    pub entity_queries: &'a [EntityQuery],
    /// May be empty, in which case no relation scores are computed.
    pub relation_queries: &'a [RelationQuery],
    /// Distinct query heads used as the contrastive batch; may be empty.
    pub heads: &'a [(EntityId, RelationId)],
}

pub struct ViewOutput<'t> {
    pub entities: Var<'t>,
    pub relations: Var<'t>,
    pub attention: Vec<Option<Var<'t>>>,
    pub scores: Var<'t>,
}

pub struct Output<'t> {
    pub evolved_entities: Var<'t>,
    pub evolved_relations: Var<'t>,
    pub invariance: Option<ViewOutput<'t>>,
    pub dynamics: Option<ViewOutput<'t>>,
    pub entity_logits: Var<'t>,
    pub relation_logits: Option<Var<'t>>,
    pub alignment: Option<Var<'t>>,
}

fn mean_of<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let mut acc = parts[0];
    for p in &parts[1..] {
        acc = acc.add(p)?;
    }
    if parts.len() == 1 {
        Ok(acc)
    } else {
        Ok(acc.scale(1.0 / parts.len() as f64)?)
    }
}

impl Model {
    /// Registers every parameter, whatever the variant, so checkpoints share one layout.
    pub fn new<R: Rng + ?Sized>(arch: Architecture, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        let d = arch.dim;
        let entity_emb = store.register("emb.entity", Tensor::xavier(arch.num_entities, d, rng))?;
        let relation_emb = store.register("emb.relation", Tensor::xavier(arch.num_relations, d, rng))?;
        let init = InitParams::register(store, d, arch.gcn_layers, arch.kernel, rng)?;
        let invariance = ViewParams::register(store, "inv", &arch, arch.inv_layers, 3, rng)?;
        let dynamics = ViewParams::register(store, "dyn", &arch, arch.dyn_layers, 4, rng)?;
        let time = HarmonicTime::register(store, "dyn.time", d)?;
        let relation_decoder = ConvTransE::register(store, "rel.decoder", d, arch.channels, arch.kernel, rng)?;
        Ok(Self {
            arch,
            entity_emb,
            relation_emb,
            init,
            invariance,
            dynamics,
            time,
            relation_decoder,
        })
    }

    /// Rebuilds the parameter handles for `store`, checking every shape.
    pub fn attach(arch: Architecture, store: &ParamStore) -> Result<Self> {
        let mut fresh = ParamStore::new();
        let model = Self::new(arch, &mut fresh, &mut tkg_tensor::seeded(0))?;
        if fresh.len() != store.len() {
            return Err(CoreError::Incompatible(format!(
                "expected {} parameters, checkpoint has {}",
                fresh.len(),
                store.len()
            )));
        }
        for ((_, want), (_, have)) in fresh.iter().zip(store.iter()) {
            if want.name != have.name || want.value.shape() != have.value.shape() {
                return Err(CoreError::Incompatible(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    have.name,
                    have.value.shape(),
                    want.name,
                    want.value.shape()
                )));
            }
        }
        Ok(model)
    }

    fn time_features<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        mode: TimeEncoding,
        edges: &EdgeTensors,
    ) -> Result<Option<Var<'t>>> {
        if edges.is_empty() {
            return Ok(None);
        }
        let d = self.arch.dim;
        let delta = edges
            .delta
            .as_ref()
            .ok_or_else(|| CoreError::Data("dynamics edges without intervals".into()))?;
        Ok(Some(match mode {
            TimeEncoding::Harmonic => tgat_encode(tape, store, &self.time, delta)?,
            TimeEncoding::Scalar => scalar_time(tape, store, &self.init, delta.clone())?
                .matmul(&tape.constant(Tensor::ones(vec![1, d])))?,
            TimeEncoding::Off => tape.constant(Tensor::zeros(vec![edges.len(), d])),
        }))
    }

    #[allow(clippy::too_many_arguments)]
    fn encode_view<'t, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        view: &ViewParams,
        settings: &Settings,
        entities: &Var<'t>,
        relations: &Var<'t>,
        edges: &EdgeTensors,
        time: Option<Var<'t>>,
        training: bool,
        rng: &mut R,
    ) -> Result<(Var<'t>, Var<'t>, Vec<Option<Var<'t>>>)> {
        let v = &settings.variant;
        let rel = if v.decompose_relations {
            decompose(tape, store, &view.relation_gate, relations, settings.dropout, training, rng)?
        } else {
            *relations
        };
        let mut ent = if v.decompose_entities {
            decompose(tape, store, &view.entity_gate, entities, settings.dropout, training, rng)?
        } else {
            *entities
        };
        let mut attention = Vec::with_capacity(view.layers.len());
        for layer in &view.layers {
            let out = attention_layer(tape, store, layer, &ent, &rel, edges, time.as_ref())?;
            ent = out.entities;
            attention.push(out.attention);
        }
        Ok((ent, rel, attention))
    }

    pub fn forward<'t, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        settings: &Settings,
        batch: &Batch<'_>,
        training: bool,
        rng: &mut R,
    ) -> Result<Output<'t>> {
        if batch.entity_queries.is_empty() {
            return Err(CoreError::Data(format!("no queries at t={}", batch.time)));
        }
        let v = &settings.variant;
        let base_e = tape.param(store, self.entity_emb);
        let base_r = tape.param(store, self.relation_emb);
        let (evolved_e, evolved_r) = evolve(tape, store, &self.init, &base_e, &base_r, batch.history)?;

        let subjects = index(batch.entity_queries.iter().map(|q| q.subject as usize));
        let relations = index(batch.entity_queries.iter().map(|q| q.relation as usize));

        let mut outputs: [Option<ViewOutput<'t>>; 2] = [None, None];
        for (slot, active) in [v.use_invariance, v.use_dynamics].into_iter().enumerate() {
            if !active {
                continue;
            }
            let (params, edges, time) = if slot == 0 {
                (&self.invariance, batch.invariance, None)
            } else {
                let time = self.time_features(tape, store, v.time_encoding, batch.dynamics)?;
                (&self.dynamics, batch.dynamics, time)
            };
            let (ent, rel, attention) = self.encode_view(
                tape, store, params, settings, &evolved_e, &evolved_r, edges, time, training, rng,
            )?;
            let scores = params.decoder.score(
                tape,
                store,
                &ent.index_select(Rc::clone(&subjects))?,
                &rel.index_select(Rc::clone(&relations))?,
                &ent,
                settings.dropout,
                training,
                rng,
            )?;
            outputs[slot] = Some(ViewOutput {
                entities: ent,
                relations: rel,
                attention,
                scores,
            });
        }
        let [inv, dyn_] = outputs;
        let active: Vec<&ViewOutput<'t>> = [inv.as_ref(), dyn_.as_ref()].into_iter().flatten().collect();

        let entity_logits = match (&inv, &dyn_) {
            (Some(i), Some(d)) => fuse_scores(&d.scores, &i.scores)?,
            (Some(only), None) | (None, Some(only)) => only.scores,
            (None, None) => unreachable!("variant parsing rejects disabling both views"),
        };

        let relation_logits = if batch.relation_queries.is_empty() {
            None
        } else {
            let ent = mean_of(&active.iter().map(|o| o.entities).collect::<Vec<_>>())?;
            let rel = mean_of(&active.iter().map(|o| o.relations).collect::<Vec<_>>())?;
            let s = index(batch.relation_queries.iter().map(|q| q.subject as usize));
            let o = index(batch.relation_queries.iter().map(|q| q.object as usize));
            Some(self.relation_decoder.score(
                tape,
                store,
                &ent.index_select(s)?,
                &ent.index_select(o)?,
                &rel,
                settings.dropout,
                training,
                rng,
            )?)
        };

        let alignment = match (&inv, &dyn_) {
            (Some(i), Some(d)) if v.aligns_views() && settings.mu > 0.0 && !batch.heads.is_empty() => {
                let hs = index(batch.heads.iter().map(|h| h.0 as usize));
                let hr = index(batch.heads.iter().map(|h| h.1 as usize));
                let mut z = Vec::with_capacity(2);
                for (params, out) in [(&self.dynamics, d), (&self.invariance, i)] {
                    let x = Var::concat_cols(&[
                        out.entities.index_select(Rc::clone(&hs))?,
                        out.relations.index_select(Rc::clone(&hr))?,
                    ])?;
                    z.push(
                        params
                            .query
                            .forward(tape, store, &x, settings.dropout, training, rng)?
                            .l2_normalize_rows(1e-12)?,
                    );
                }
                Some(contrastive_loss(&z[0], &z[1], settings.gamma)?)
            }
            _ => None,
        };

        Ok(Output {
            evolved_entities: evolved_e,
            evolved_relations: evolved_r,
            invariance: inv,
            dynamics: dyn_,
            entity_logits,
            relation_logits,
            alignment,
        })
    }

    pub fn loss<'t>(&self, settings: &Settings, out: &Output<'t>, batch: &Batch<'_>) -> Result<LossTerms<'t>> {
        let relation_logits = out
            .relation_logits
            .ok_or_else(|| CoreError::Data("batch has no relation queries".into()))?;
        let entity_targets: Vec<usize> = batch.entity_queries.iter().map(|q| q.object as usize).collect();
        let relation_targets: Vec<usize> = batch.relation_queries.iter().map(|q| q.relation as usize).collect();
        joint_loss(
            &out.entity_logits,
            &entity_targets,
            &relation_logits,
            &relation_targets,
            out.alignment,
            settings.alpha,
            settings.mu,
        )
    }
}
