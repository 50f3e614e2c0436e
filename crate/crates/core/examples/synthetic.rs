//! Trains variants on the synthetic periodic benchmark and prints test metrics.
//!
//! Usage: `cargo run --release -p tkg-core --example synthetic -- [variant ...] [key=value ...]`

use std::time::Instant;

use tkg_core::config::{RunConfig, Variant};
use tkg_core::rules::mine_training;
use tkg_core::synth::SyntheticSpec;
use tkg_core::train::ablate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut variants: Vec<Variant> = Vec::new();
    let mut config = RunConfig::synthetic();
    let mut spec = SyntheticSpec::default();
    for arg in std::env::args().skip(1) {
        match arg.split_once('=') {
            Some(("noise", v)) => spec.noise = v.parse()?,
            Some(("episode", v)) => spec.episode = v.parse()?,
            Some(("background", v)) => spec.background = v.parse()?,
            Some(("period", v)) => spec.rules[0].period = v.parse()?,
            Some(("lag", v)) => spec.rules[0].lag = v.parse()?,
            Some((k, v)) => config.set(k, v)?,
            None => variants.push(arg.parse()?),
        }
    }
    if variants.is_empty() {
        variants.push(Variant::full());
    }
    let dataset = spec.generate()?;
    let rules = mine_training(&dataset, &config.miner(), config.seed)?;
    for r in rules.iter() {
        println!("rule {} <- {} conf {:.3} ({}/{})", r.head, r.body, r.confidence, r.rule_support, r.body_support);
    }
    for v in variants {
        let start = Instant::now();
        let rows = ablate(&dataset, &rules, &config, std::slice::from_ref(&v), |v, e| {
            println!(
                "  {v} epoch {:2} loss {:.4} ent {:.4} valid mrr {:.2}",
                e.epoch, e.stats.loss, e.stats.entity_loss, e.valid.mrr
            )
        })?;
        let row = &rows[0];
        println!(
            "{v}: best epoch {} valid {:.2} test mrr {:.2} h1 {:.2} h10 {:.2} ({} queries) in {:.1}s",
            row.best_epoch,
            row.valid.mrr,
            row.test.mrr,
            row.test.hits1,
            row.test.hits10,
            row.test.queries,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
