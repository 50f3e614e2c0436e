//! Chronological training with validation-based early stopping, and checkpoints.

use std::path::Path;

use tkg_tensor::{split, Adam, Checkpoint, ParamStore, SeededRng, Tape};

use crate::config::{RunConfig, Variant};
use crate::data::{Dataset, Split};
use crate::error::{CoreError, Result};
use crate::eval::{evaluate, MetricReport};
use crate::model::{Architecture, Model, Settings};
use crate::rules::RuleIndex;
use crate::workspace::Workspace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub entity_loss: f64,
    pub relation_loss: f64,
    pub alignment_loss: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub stats: EpochStats,
    pub valid: MetricReport,
}

pub struct Trainer<'w> {
    ws: &'w Workspace,
    pub settings: Settings,
    pub model: Model,
    pub store: ParamStore,
    pub optimizer: Adam,
    grad_clip: f64,
    rng: SeededRng,
}

impl<'w> Trainer<'w> {
    pub fn new(ws: &'w Workspace, config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let arch = Architecture::new(
            config,
            ws.dataset.vocab.entity_count(),
            ws.dataset.vocab.relation_count(),
        );
        let mut root = tkg_tensor::seeded(config.seed);
        let mut init_rng = split(&mut root);
        let mut store = ParamStore::new();
        let model = Model::new(arch, &mut store, &mut init_rng)?;
        let optimizer = Adam::new(&store, config.lr, config.weight_decay);
        Ok(Self {
            ws,
            settings: Settings::from(config),
            model,
            store,
            optimizer,
            grad_clip: config.grad_clip,
            rng: split(&mut root),
        })
    }

    /// One pass over the training timestamps in chronological order.
    pub fn train_epoch(&mut self) -> Result<EpochStats> {
        let mut stats = EpochStats {
            loss: 0.0,
            entity_loss: 0.0,
            relation_loss: 0.0,
            alignment_loss: 0.0,
            steps: 0,
        };
        for time in self.ws.times(Split::Train) {
            let step = self.ws.step(Split::Train, time)?;
            let history = self.ws.history_graphs(&step);
            let batch = Workspace::batch(&step, &history, true);
            let tape = Tape::new();
            let out = self
                .model
                .forward(&tape, &self.store, &self.settings, &batch, true, &mut self.rng)?;
            let terms = self.model.loss(&self.settings, &out, &batch)?;
            let loss = terms.total.item();
            if !loss.is_finite() {
                return Err(CoreError::Tensor(tkg_tensor::TensorError::Numeric {
                    op: "loss",
                    detail: format!("non-finite training loss at t={time}"),
                }));
            }
            stats.loss += loss;
            stats.entity_loss += terms.entity.item();
            stats.relation_loss += terms.relation.item();
            stats.alignment_loss += terms.alignment.map_or(0.0, |a| a.item());
            stats.steps += 1;
            let grads = tape.backward(terms.total)?;
            grads.accumulate_into(&mut self.store);
            if self.grad_clip > 0.0 {
                self.store.clip_grad_norm(self.grad_clip);
            }
            self.optimizer.step(&mut self.store)?;
        }
        if stats.steps > 0 {
            let n = stats.steps as f64;
            stats.loss /= n;
            stats.entity_loss /= n;
            stats.relation_loss /= n;
            stats.alignment_loss /= n;
        }
        Ok(stats)
    }

    pub fn evaluate(&self, split: Split) -> Result<MetricReport> {
        Ok(evaluate(self.ws, &self.model, &self.store, &self.settings, split)?.report)
    }
}

pub struct Trained {
    pub model: Model,
    pub settings: Settings,
    /// Parameters of the epoch with the best validation MRR.
    pub best: ParamStore,
    pub best_epoch: usize,
    pub optimizer: Adam,
    pub log: Vec<EpochLog>,
}

impl Trained {
    pub fn best_valid(&self) -> MetricReport {
        self.log[self.best_epoch].valid
    }
}

/// Trains until `max_epochs` or until `patience` epochs pass without a new
/// best validation MRR (`patience = 0` runs exactly one epoch).
pub fn fit(ws: &Workspace, config: &RunConfig, mut on_epoch: impl FnMut(&EpochLog)) -> Result<Trained> {
    if ws.dataset.valid.is_empty() {
        return Err(CoreError::Data("early stopping needs a non-empty validation split".into()));
    }
    let mut trainer = Trainer::new(ws, config)?;
    let mut log: Vec<EpochLog> = Vec::new();
    let mut best: Option<(usize, f64, ParamStore)> = None;
    for epoch in 0..config.max_epochs {
        let stats = trainer.train_epoch()?;
        let valid = trainer.evaluate(Split::Valid)?;
        let entry = EpochLog { epoch, stats, valid };
        on_epoch(&entry);
        log.push(entry);
        if best.as_ref().is_none_or(|b| valid.mrr > b.1) {
            best = Some((epoch, valid.mrr, trainer.store.clone()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.0);
        if epoch - best_epoch >= config.patience {
            break;
        }
    }
    let (best_epoch, _, best) = best.ok_or_else(|| CoreError::Config("no epochs were run".into()))?;
    Ok(Trained {
        model: trainer.model,
        settings: trainer.settings,
        best,
        best_epoch,
        optimizer: trainer.optimizer,
        log,
    })
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: Variant,
    pub best_epoch: usize,
    pub epochs: usize,
    pub valid: MetricReport,
    pub test: MetricReport,
}

/// Trains and tests each variant from the same seed; only the variant differs.
pub fn ablate(
    dataset: &Dataset,
    rules: &RuleIndex,
    config: &RunConfig,
    variants: &[Variant],
    mut on_epoch: impl FnMut(&Variant, &EpochLog),
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(variants.len());
    for variant in variants {
        let config = RunConfig {
            variant: variant.clone(),
            ..config.clone()
        };
        let ws = Workspace::new(dataset.clone(), rules.clone(), &config)?;
        let trained = fit(&ws, &config, |log| on_epoch(variant, log))?;
        let test = evaluate(&ws, &trained.model, &trained.best, &trained.settings, Split::Test)?.report;
        rows.push(AblationRow {
            variant: variant.clone(),
            best_epoch: trained.best_epoch,
            epochs: trained.log.len(),
            valid: trained.best_valid(),
            test,
        });
    }
    Ok(rows)
}

fn metadata(config: &RunConfig, arch: &Architecture) -> String {
    format!(
        "{}num_entities = {}\nnum_relations = {}\n",
        config.to_text(),
        arch.num_entities,
        arch.num_relations
    )
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    config: &RunConfig,
    model: &Model,
    store: &ParamStore,
    optimizer: Option<&Adam>,
) -> Result<()> {
    let ckpt = Checkpoint {
        metadata: metadata(config, &model.arch),
        params: store.clone(),
        optimizer: optimizer.cloned(),
    };
    Ok(ckpt.save(path)?)
}

pub struct LoadedModel {
    pub config: RunConfig,
    pub model: Model,
    pub store: ParamStore,
    pub optimizer: Option<Adam>,
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<LoadedModel> {
    let ckpt = Checkpoint::load(path)?;
    let mut config = RunConfig::default();
    let mut counts = [None, None];
    let mut rest = String::new();
    for line in ckpt.metadata.lines() {
        match line.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
            Some(("num_entities", v)) => counts[0] = v.parse::<usize>().ok(),
            Some(("num_relations", v)) => counts[1] = v.parse::<usize>().ok(),
            _ => {
                rest.push_str(line);
                rest.push('\n');
            }
        }
    }
    config.merge_text(&rest)?;
    let [Some(num_entities), Some(num_relations)] = counts else {
        return Err(CoreError::Incompatible("checkpoint metadata lacks vocabulary sizes".into()));
    };
    let mut arch = Architecture::new(&config, num_entities, num_relations / 2);
    arch.num_relations = num_relations;
    let model = Model::attach(arch, &ckpt.params)?;
    Ok(LoadedModel {
        config,
        model,
        store: ckpt.params,
        optimizer: ckpt.optimizer,
    })
}
