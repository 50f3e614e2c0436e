//! Relation decomposition and the attention encoders of the two graph views.

use std::rc::Rc;

use rand::Rng;
use tkg_tensor::{ParamId, ParamStore, Tape, Tensor, Var};

use super::nn::{constant, index, matrix, Modulator};
use crate::error::{CoreError, Result};
use crate::graph::ViewSubgraph;

/// Attention logits are clamped to this magnitude before normalization.
pub const LOGIT_BOUND: f64 = 50.0;

/// `(1 + g(x)) ⊙ x`, row-wise.
pub fn decompose<'t, R: Rng + ?Sized>(
    tape: &'t Tape,
    store: &ParamStore,
    g: &Modulator,
    x: &Var<'t>,
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var<'t>> {
    let gate = g.forward(tape, store, x, dropout, training, rng)?;
    Ok(x.add(&x.mul(&gate)?)?)
}

/// Index arrays of a view subgraph, ready for gathering.
#[derive(Debug, Clone)]
pub struct EdgeTensors {
    pub src: Rc<[usize]>,
    pub rel: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    /// `[n×1]` intervals; present only for dynamics views.
    pub delta: Option<Tensor>,
}

impl EdgeTensors {
    pub fn from_view(view: &ViewSubgraph) -> Result<Self> {
        let edges = view.edges();
        let delta = if edges.iter().all(|e| e.delta_t.is_some()) && !edges.is_empty() {
            let dt: Vec<f64> = edges.iter().map(|e| f64::from(e.delta_t.unwrap_or(0))).collect();
            if dt.iter().any(|&x| x < 1.0) {
                return Err(CoreError::Data(format!("non-positive interval in view at t={}", view.time)));
            }
            Some(Tensor::new(vec![dt.len(), 1], dt)?)
        } else {
            None
        };
        Ok(Self {
            src: index(edges.iter().map(|e| e.subject as usize)),
            rel: index(edges.iter().map(|e| e.relation as usize)),
            dst: index(edges.iter().map(|e| e.object as usize)),
            delta,
        })
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Learned frequencies and phases of the interval encoding.
#[derive(Debug, Clone)]
pub struct HarmonicTime {
    pub freq: ParamId,
    pub phase: ParamId,
}

impl HarmonicTime {
    pub fn register(store: &mut ParamStore, prefix: &str, d: usize) -> Result<Self> {
        let freq: Vec<f64> = (0..d)
            .map(|i| {
                let exponent = if d > 1 { 9.0 * i as f64 / (d - 1) as f64 } else { 0.0 };
                10f64.powf(-exponent)
            })
            .collect();
        Ok(Self {
            freq: constant(store, format!("{prefix}.freq"), Tensor::new(vec![1, d], freq)?)?,
            phase: constant(store, format!("{prefix}.phase"), Tensor::zeros(vec![d]))?,
        })
    }
}

/// `sqrt(1/d) · cos(w·Δt + p)` for each row of `delta` (`[n×1]`).
pub fn tgat_encode<'t>(tape: &'t Tape, store: &ParamStore, t: &HarmonicTime, delta: &Tensor) -> Result<Var<'t>> {
    if let Some(bad) = delta.data().iter().find(|&&x| x <= 0.0) {
        return Err(CoreError::Data(format!("interval {bad} must be positive")));
    }
    let freq = tape.param(store, t.freq);
    let d = freq.shape()[1];
    Ok(tape
        .constant(delta.clone())
        .matmul(&freq)?
        .add(&tape.param(store, t.phase))?
        .cos()?
        .scale((1.0 / d as f64).sqrt())?)
}

#[derive(Debug, Clone)]
pub struct AttentionLayer {
    pub w_hidden: ParamId,
    pub w_logit: ParamId,
    pub w_msg: ParamId,
    pub w_self: ParamId,
}

impl AttentionLayer {
    /// `parts` is the number of `d`-blocks concatenated into the attention input.
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        parts: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            w_hidden: matrix(store, format!("{prefix}.w_hidden"), parts * d, d, rng)?,
            w_logit: matrix(store, format!("{prefix}.w_logit"), d, 1, rng)?,
            w_msg: matrix(store, format!("{prefix}.w_msg"), d, d, rng)?,
            w_self: matrix(store, format!("{prefix}.w_self"), d, d, rng)?,
        })
    }
}

pub struct LayerOutput<'t> {
    pub entities: Var<'t>,
    /// Per-edge attention weights; `None` for an empty subgraph.
    pub attention: Option<Var<'t>>,
}

/// One attention layer over `edges`. `time` (`[n×d]`), when given, is appended
/// to the attention input `[e_s ∥ r ∥ e_o]`.
pub fn attention_layer<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    layer: &AttentionLayer,
    entities: &Var<'t>,
    relations: &Var<'t>,
    edges: &EdgeTensors,
    time: Option<&Var<'t>>,
) -> Result<LayerOutput<'t>> {
    let rows = entities.shape()[0];
    let self_term = entities.matmul(&tape.param(store, layer.w_self))?;
    if edges.is_empty() {
        return Ok(LayerOutput {
            entities: self_term.rrelu()?,
            attention: None,
        });
    }
    let es = entities.index_select(Rc::clone(&edges.src))?;
    let rs = relations.index_select(Rc::clone(&edges.rel))?;
    let eo = entities.index_select(Rc::clone(&edges.dst))?;
    let mut parts = vec![es, rs, eo];
    parts.extend(time.copied());
    let logits = Var::concat_cols(&parts)?
        .matmul(&tape.param(store, layer.w_hidden))?
        .rrelu()?
        .matmul(&tape.param(store, layer.w_logit))?
        .reshape(vec![edges.len()])?
        .clamp(-LOGIT_BOUND, LOGIT_BOUND)?;
    let theta = logits.segment_softmax(Rc::clone(&edges.dst), rows)?;
    let aggregated = es
        .add(&rs)?
        .tanh()?
        .matmul(&tape.param(store, layer.w_msg))?
        .scale_rows(&theta)?
        .index_add(Rc::clone(&edges.dst), rows)?;
    Ok(LayerOutput {
        entities: aggregated.add(&self_term)?.rrelu()?,
        attention: Some(theta),
    })
}
