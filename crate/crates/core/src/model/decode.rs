//! Score fusion, contrastive alignment and the joint objective.

use tkg_tensor::Var;

use crate::error::{CoreError, Result};

/// Symmetric InfoNCE between matched rows of `z_d` and `z_i` (`[B×d]`), with
/// the other rows of the batch as negatives.
pub fn contrastive_loss<'t>(z_d: &Var<'t>, z_i: &Var<'t>, gamma: f64) -> Result<Var<'t>> {
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(CoreError::Config(format!("temperature {gamma} must be positive")));
    }
    if z_d.shape() != z_i.shape() {
        return Err(CoreError::Config(format!(
            "view representations differ in shape: {:?} vs {:?}",
            z_d.shape(),
            z_i.shape()
        )));
    }
    let batch = z_d.shape()[0];
    let diag: Vec<usize> = (0..batch).collect();
    let sim = z_d.matmul(&z_i.t()?)?.scale(1.0 / gamma)?;
    let d_to_i = sim.cross_entropy(&diag)?;
    let i_to_d = sim.t()?.cross_entropy(&diag)?;
    Ok(d_to_i.add(&i_to_d)?)
}

pub fn fuse_scores<'t>(f_d: &Var<'t>, f_i: &Var<'t>) -> Result<Var<'t>> {
    if f_d.shape() != f_i.shape() {
        return Err(CoreError::Config(format!(
            "score shapes differ: {:?} vs {:?}",
            f_d.shape(),
            f_i.shape()
        )));
    }
    Ok(f_d.add(f_i)?)
}

pub struct LossTerms<'t> {
    pub entity: Var<'t>,
    pub relation: Var<'t>,
    pub tkg: Var<'t>,
    pub alignment: Option<Var<'t>>,
    pub total: Var<'t>,
}

/// `α·CE(entity) + (1-α)·CE(relation) + μ·L_align`. The alignment term is
/// left out entirely when `alignment` is `None`.
pub fn joint_loss<'t>(
    entity_logits: &Var<'t>,
    entity_targets: &[usize],
    relation_logits: &Var<'t>,
    relation_targets: &[usize],
    alignment: Option<Var<'t>>,
    alpha: f64,
    mu: f64,
) -> Result<LossTerms<'t>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CoreError::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    if mu.is_nan() || mu < 0.0 {
        return Err(CoreError::Config(format!("mu {mu} must be non-negative")));
    }
    let entity = entity_logits.cross_entropy(entity_targets)?;
    let relation = relation_logits.cross_entropy(relation_targets)?;
    let tkg = entity.scale(alpha)?.add(&relation.scale(1.0 - alpha)?)?;
    let total = match &alignment {
        Some(a) => tkg.add(&a.scale(mu)?)?,
        None => tkg,
    };
    Ok(LossTerms {
        entity,
        relation,
        tkg,
        alignment,
        total,
    })
}
