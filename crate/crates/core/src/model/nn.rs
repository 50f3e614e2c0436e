//! Small reusable layers built from tape ops.

use std::rc::Rc;

use rand::Rng;
use tkg_tensor::{ParamId, ParamStore, Tape, Tensor, Var};

use crate::error::Result;

pub(crate) fn matrix<R: Rng + ?Sized>(
    store: &mut ParamStore,
    name: String,
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<ParamId> {
    Ok(store.register(name, Tensor::xavier(rows, cols, rng))?)
}

pub(crate) fn constant(store: &mut ParamStore, name: String, value: Tensor) -> Result<ParamId> {
    Ok(store.register(name, value)?)
}

pub(crate) fn index(values: impl IntoIterator<Item = usize>) -> Rc<[usize]> {
    values.into_iter().collect()
}

/// Row-wise gated recurrent unit with hidden size `d`.
#[derive(Debug, Clone)]
pub struct Gru {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
}

impl Gru {
    pub fn register<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, d: usize, rng: &mut R) -> Result<Self> {
        let mut m = |n: &str| matrix(store, format!("{prefix}.{n}"), d, d, rng);
        let (w_z, w_r, w_h) = (m("w_z")?, m("w_r")?, m("w_h")?);
        let (u_z, u_r, u_h) = (m("u_z")?, m("u_r")?, m("u_h")?);
        let mut b = |n: &str| constant(store, format!("{prefix}.{n}"), Tensor::zeros(vec![d]));
        Ok(Self {
            w_z,
            w_r,
            w_h,
            u_z,
            u_r,
            u_h,
            b_z: b("b_z")?,
            b_r: b("b_r")?,
            b_h: b("b_h")?,
        })
    }

    /// One step: `h' = (1 - z) * h + z * tanh(x W_h + (r * h) U_h + b_h)`.
    pub fn step<'t>(&self, tape: &'t Tape, store: &ParamStore, h: &Var<'t>, x: &Var<'t>) -> Result<Var<'t>> {
        let p = |id| tape.param(store, id);
        let gate = |w, u, b| -> Result<Var<'t>> {
            Ok(x.matmul(&p(w))?.add(&h.matmul(&p(u))?)?.add(&p(b))?.sigmoid()?)
        };
        let z = gate(self.w_z, self.u_z, self.b_z)?;
        let r = gate(self.w_r, self.u_r, self.b_r)?;
        let cand = x
            .matmul(&p(self.w_h))?
            .add(&r.mul(h)?.matmul(&p(self.u_h))?)?
            .add(&p(self.b_h))?
            .tanh()?;
        let keep = z.scale(-1.0)?.add_scalar(1.0)?;
        Ok(keep.mul(h)?.add(&z.mul(&cand)?)?)
    }
}

/// `W_3 · Drop(GEGLU(LN(x)))`, mapping width `input` to `output`.
#[derive(Debug, Clone)]
pub struct Modulator {
    pub ln_gain: ParamId,
    pub ln_bias: ParamId,
    pub w_a: ParamId,
    pub w_b: ParamId,
    pub w_out: ParamId,
}

impl Modulator {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            ln_gain: constant(store, format!("{prefix}.ln_gain"), Tensor::ones(vec![input]))?,
            ln_bias: constant(store, format!("{prefix}.ln_bias"), Tensor::zeros(vec![input]))?,
            w_a: matrix(store, format!("{prefix}.w_a"), input, output, rng)?,
            w_b: matrix(store, format!("{prefix}.w_b"), input, output, rng)?,
            w_out: matrix(store, format!("{prefix}.w_out"), output, output, rng)?,
        })
    }

    pub fn forward<'t, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        x: &Var<'t>,
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var<'t>> {
        let p = |id| tape.param(store, id);
        let h = x
            .layer_norm(&p(self.ln_gain), &p(self.ln_bias), 1e-5)?
            .geglu(&p(self.w_a), &p(self.w_b))?
            .dropout(dropout, training, rng)?;
        Ok(h.matmul(&p(self.w_out))?)
    }
}

/// Convolutional decoder over the stacked pair `[a; b]`, producing a `d`-vector per row.
#[derive(Debug, Clone)]
pub struct ConvTransE {
    pub kernel: ParamId,
    pub kernel_bias: ParamId,
    pub proj: ParamId,
    pub proj_bias: ParamId,
    channels: usize,
    width: usize,
}

impl ConvTransE {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        channels: usize,
        width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let fan = (2 * width + channels * width) as f64;
        let kernel = Tensor::uniform(vec![channels, 2, width], (6.0 / fan).sqrt(), rng);
        Ok(Self {
            kernel: constant(store, format!("{prefix}.kernel"), kernel)?,
            kernel_bias: constant(store, format!("{prefix}.kernel_bias"), Tensor::zeros(vec![channels]))?,
            proj: matrix(store, format!("{prefix}.proj"), channels * d, d, rng)?,
            proj_bias: constant(store, format!("{prefix}.proj_bias"), Tensor::zeros(vec![d]))?,
            channels,
            width,
        })
    }

    /// `a`, `b`: `[B×d]`. Returns `[B×d]`.
    #[allow(clippy::too_many_arguments)]
    pub fn encode<'t, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        a: &Var<'t>,
        b: &Var<'t>,
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var<'t>> {
        let p = |id| tape.param(store, id);
        let (batch, d) = (a.shape()[0], a.shape()[1]);
        let stacked = Var::concat_cols(&[*a, *b])?.reshape(vec![batch, 2, d])?;
        let features = stacked
            .conv1d(&p(self.kernel), Some(&p(self.kernel_bias)), (self.width - 1) / 2)?
            .relu()?
            .dropout(dropout, training, rng)?
            .reshape(vec![batch, self.channels * d])?;
        Ok(features.matmul(&p(self.proj))?.add(&p(self.proj_bias))?.relu()?)
    }

    /// Dot products of the decoded rows against every row of `table`.
    #[allow(clippy::too_many_arguments)]
    pub fn score<'t, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        a: &Var<'t>,
        b: &Var<'t>,
        table: &Var<'t>,
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var<'t>> {
        let q = self.encode(tape, store, a, b, dropout, training, rng)?;
        Ok(q.matmul(&table.t()?)?)
    }
}
