use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use tkg_core::config::{preset, RunConfig, Variant};
use tkg_core::data::{load_dataset, write_dataset, Dataset, Split};
use tkg_core::eval::{evaluate, ranks_to_text, robustness_sweep, MetricReport, CSV_HEADER};
use tkg_core::model::Settings;
use tkg_core::rules::{mine_training, RuleIndex};
use tkg_core::synth::{RecurrenceRule, SyntheticSpec};
use tkg_core::train::{ablate, fit, load_checkpoint, save_checkpoint, EpochLog};
use tkg_core::workspace::Workspace;
use tkg_core::CoreError;
use tkg_tensor::seeded;

use crate::args::{Cli, Command, Common, SynthArgs};
use crate::manifest::{checksum, dataset_checksum, Manifest};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => synth(&args),
        Command::MineRules { out } => {
            let config = resolve(&cli.common, None)?;
            mine(&config, &out)
        }
        Command::BuildGraphs { out, rules, split } => {
            let config = resolve(&cli.common, None)?;
            build_graphs(&config, rules.as_deref(), split.into(), &out)
        }
        Command::Train { out, rules } => {
            let config = resolve(&cli.common, None)?;
            train(&config, rules.as_deref(), &out)
        }
        Command::Eval {
            checkpoint,
            rules,
            split,
            out,
        } => eval(&cli.common, &checkpoint, rules.as_deref(), split.into(), out.as_deref()),
        Command::Ablate { out, rules, variants } => {
            let config = resolve(&cli.common, None)?;
            let variants = variants
                .iter()
                .map(|v| v.parse::<Variant>())
                .collect::<Result<Vec<_>, _>>()?;
            run_ablation(&config, rules.as_deref(), &variants, &out)
        }
        Command::Robustness {
            checkpoint,
            rules,
            levels,
            split,
            out,
        } => robustness(&cli.common, &checkpoint, rules.as_deref(), &levels, split.into(), &out),
    }
}

/// Preset, then config file, then `--set` pairs, then explicit flags.
/// `base` replaces the defaults (used for checkpoint configs).
fn resolve(common: &Common, base: Option<RunConfig>) -> Result<RunConfig> {
    let mut config = base.unwrap_or_default();
    if let Some(name) = &common.dataset_preset {
        if name.eq_ignore_ascii_case("synthetic") {
            config = RunConfig {
                data_dir: config.data_dir,
                ..RunConfig::synthetic()
            };
        } else {
            config.apply_preset(&preset(name)?);
        }
    }
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config.merge_text(&text)?;
    }
    for pair in &common.overrides {
        let Some((k, v)) = pair.split_once('=') else {
            return Err(CoreError::Config(format!("--set expects KEY=VALUE, got {pair:?}")).into());
        };
        config.set(k, v)?;
    }
    if let Some(dir) = &common.data_dir {
        config.data_dir = Some(dir.clone());
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(v) = &common.variant {
        config.variant = v.parse()?;
    }
    config.validate()?;
    Ok(config)
}

fn data_dir(config: &RunConfig) -> Result<&Path> {
    match &config.data_dir {
        Some(d) => Ok(d),
        None => Err(CoreError::Config("no data directory: pass --data-dir or set TKGX_DATA_DIR".into()).into()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: PathBuf, text: &str, manifest: &mut Manifest) -> Result<()> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    if let Some(name) = path.file_name() {
        manifest.outputs.push(name.to_string_lossy().into_owned());
    }
    Ok(())
}

struct Inputs {
    dataset: Dataset,
    rules: RuleIndex,
    dataset_sha256: String,
    rules_sha256: String,
}

fn load_inputs(config: &RunConfig, rules: Option<&Path>) -> Result<Inputs> {
    let dir = data_dir(config)?;
    let dataset = load_dataset(dir, config.granularity)?;
    let rules = match rules {
        Some(path) => RuleIndex::load(path)?,
        None => mine_training(&dataset, &config.miner(), config.seed)?,
    };
    Ok(Inputs {
        dataset_sha256: dataset_checksum(dir)?,
        rules_sha256: checksum(rules.to_text().as_bytes()),
        dataset,
        rules,
    })
}

fn manifest_for(command: &str, config: &RunConfig, inputs: &Inputs) -> Manifest {
    let mut m = Manifest::new(command, config);
    m.dataset_sha256 = Some(inputs.dataset_sha256.clone());
    m.rules_sha256 = Some(inputs.rules_sha256.clone());
    m
}

fn parse_rule(text: &str) -> Result<RecurrenceRule> {
    let parts: Vec<u32> = text
        .split(',')
        .map(|p| p.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|e| CoreError::Config(format!("rule {text:?}: {e}")))?;
    let [body, head, period, lag] = parts[..] else {
        return Err(CoreError::Config(format!("rule {text:?}: expected BODY,HEAD,PERIOD,LAG")).into());
    };
    Ok(RecurrenceRule {
        body,
        head,
        period,
        lag,
    })
}

fn synth(args: &SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        entities: args.entities,
        relations: args.relations,
        timestamps: args.timestamps,
        rules: args.rules.iter().map(|r| parse_rule(r)).collect::<Result<_>>()?,
        noise: args.noise,
        episode: args.episode,
        background: args.background,
        valid_fraction: args.valid_fraction,
        test_fraction: args.test_fraction,
        seed: args.data_seed,
    };
    let dataset = spec.generate()?;
    write_dataset(&dataset, &args.out)?;
    let mut manifest = Manifest::new("synth", &RunConfig {
        data_dir: Some(args.out.clone()),
        seed: args.data_seed,
        ..RunConfig::synthetic()
    });
    manifest.dataset_sha256 = Some(dataset_checksum(&args.out)?);
    manifest.config = format!("{spec:?}\n");
    manifest.outputs = crate::manifest::DATASET_FILES.iter().map(|s| s.to_string()).collect();
    manifest.write(&args.out)?;
    eprintln!(
        "wrote {} train / {} valid / {} test facts to {}",
        dataset.fact_count(Split::Train),
        dataset.fact_count(Split::Valid),
        dataset.fact_count(Split::Test),
        args.out.display()
    );
    Ok(())
}

fn mine(config: &RunConfig, out: &Path) -> Result<()> {
    let inputs = load_inputs(config, None)?;
    inputs.rules.save(out)?;
    let mut manifest = manifest_for("mine-rules", config, &inputs);
    manifest.outputs.push(out.display().to_string());
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    manifest.write_to(Path::new(&name))?;
    eprintln!(
        "mined {} rules for {} head relations",
        inputs.rules.len(),
        inputs.rules.heads().count()
    );
    Ok(())
}

fn build_graphs(config: &RunConfig, rules: Option<&Path>, split: Split, out: &Path) -> Result<()> {
    let inputs = load_inputs(config, rules)?;
    let mut manifest = manifest_for("build-graphs", config, &inputs);
    let ws = Workspace::new(inputs.dataset, inputs.rules, config)?;
    create_dir(out)?;
    let mut summary = String::from("time,queries,invariance_edges,dynamics_edges\n");
    for time in ws.times(split) {
        let step = ws.step(split, time)?;
        write(out.join(format!("t{time}.inv.txt")), &step.invariance.to_text(), &mut manifest)?;
        write(out.join(format!("t{time}.dyn.txt")), &step.dynamics.to_text(), &mut manifest)?;
        let _ = writeln!(
            summary,
            "{time},{},{},{}",
            step.queries.entity_queries.len(),
            step.invariance.len(),
            step.dynamics.len()
        );
    }
    write(out.join("graphs.csv"), &summary, &mut manifest)?;
    manifest.write(out)
}

fn log_epoch(prefix: &str, e: &EpochLog) {
    eprintln!(
        "{prefix}epoch {:3}  loss {:.4}  entity {:.4}  relation {:.4}  align {:.4}  valid mrr {:.2}",
        e.epoch, e.stats.loss, e.stats.entity_loss, e.stats.relation_loss, e.stats.alignment_loss, e.valid.mrr
    );
}

#[derive(Serialize)]
struct ReportJson<'a> {
    variant: &'a str,
    split: &'a str,
    queries: usize,
    mrr: f64,
    h1: f64,
    h3: f64,
    h10: f64,
}

fn report_json<'a>(variant: &'a str, split: Split, r: &MetricReport) -> ReportJson<'a> {
    ReportJson {
        variant,
        split: split.name(),
        queries: r.queries,
        mrr: r.mrr,
        h1: r.hits1,
        h3: r.hits3,
        h10: r.hits10,
    }
}

fn train(config: &RunConfig, rules: Option<&Path>, out: &Path) -> Result<()> {
    let inputs = load_inputs(config, rules)?;
    let mut manifest = manifest_for("train", config, &inputs);
    create_dir(out)?;
    write(out.join("rules.txt"), &inputs.rules.to_text(), &mut manifest)?;
    write(out.join("config.txt"), &config.to_text(), &mut manifest)?;
    let ws = Workspace::new(inputs.dataset, inputs.rules, config)?;
    let trained = fit(&ws, config, |e| log_epoch("", e))?;
    save_checkpoint(out.join("model.ckpt"), config, &trained.model, &trained.best, Some(&trained.optimizer))?;
    manifest.outputs.push("model.ckpt".into());

    let mut log = String::from("epoch,loss,entity_loss,relation_loss,alignment_loss,valid_mrr,valid_h1,valid_h3,valid_h10\n");
    for e in &trained.log {
        let _ = writeln!(
            log,
            "{},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4},{:.4}",
            e.epoch,
            e.stats.loss,
            e.stats.entity_loss,
            e.stats.relation_loss,
            e.stats.alignment_loss,
            e.valid.mrr,
            e.valid.hits1,
            e.valid.hits3,
            e.valid.hits10
        );
    }
    write(out.join("train_log.csv"), &log, &mut manifest)?;

    let test = evaluate(&ws, &trained.model, &trained.best, &trained.settings, Split::Test)?.report;
    let variant = config.variant.to_string();
    let valid = trained.best_valid();
    let csv = format!(
        "{CSV_HEADER}\n{}\n{}\n",
        valid.csv_row(&variant, "valid"),
        test.csv_row(&variant, "test")
    );
    write(out.join("report.csv"), &csv, &mut manifest)?;
    eprintln!(
        "best epoch {}  valid mrr {:.2}  test mrr {:.2}  h1 {:.2}  h3 {:.2}  h10 {:.2}",
        trained.best_epoch, valid.mrr, test.mrr, test.hits1, test.hits3, test.hits10
    );
    manifest.write(out)
}

/// Checkpoint config with command-line overrides, plus its inputs.
fn checkpoint_inputs(
    common: &Common,
    checkpoint: &Path,
    rules: Option<&Path>,
) -> Result<(RunConfig, tkg_core::train::LoadedModel, Inputs)> {
    let loaded = load_checkpoint(checkpoint)?;
    let config = resolve(common, Some(loaded.config.clone()))?;
    let sibling = checkpoint.with_file_name("rules.txt");
    let rules = rules.or_else(|| sibling.exists().then_some(sibling.as_path()));
    let inputs = load_inputs(&config, rules)?;
    let (n_ent, n_rel) = (inputs.dataset.vocab.entity_count(), inputs.dataset.vocab.relation_count());
    if loaded.model.arch.num_entities != n_ent || loaded.model.arch.num_relations != 2 * n_rel {
        return Err(CoreError::Incompatible(format!(
            "checkpoint expects {} entities and {} relations, dataset has {n_ent} and {}",
            loaded.model.arch.num_entities,
            loaded.model.arch.num_relations,
            2 * n_rel
        ))
        .into());
    }
    Ok((config, loaded, inputs))
}

fn eval(common: &Common, checkpoint: &Path, rules: Option<&Path>, split: Split, out: Option<&Path>) -> Result<()> {
    let (config, loaded, inputs) = checkpoint_inputs(common, checkpoint, rules)?;
    let mut manifest = manifest_for("eval", &config, &inputs);
    let ws = Workspace::new(inputs.dataset, inputs.rules, &config)?;
    let settings = Settings::from(&config);
    let result = evaluate(&ws, &loaded.model, &loaded.store, &settings, split)?;
    let variant = config.variant.to_string();
    let row = result.report.csv_row(&variant, split.name());
    println!("{CSV_HEADER}\n{row}");
    if let Some(dir) = out {
        create_dir(dir)?;
        write(dir.join("report.csv"), &format!("{CSV_HEADER}\n{row}\n"), &mut manifest)?;
        let json = serde_json::to_string_pretty(&report_json(&variant, split, &result.report))?;
        write(dir.join("report.json"), &(json + "\n"), &mut manifest)?;
        write(dir.join("ranks.tsv"), &ranks_to_text(&result.ranks), &mut manifest)?;
        manifest.write(dir)?;
    }
    Ok(())
}

fn run_ablation(config: &RunConfig, rules: Option<&Path>, variants: &[Variant], out: &Path) -> Result<()> {
    if variants.is_empty() {
        bail!(CoreError::Config("no variants given".into()));
    }
    let inputs = load_inputs(config, rules)?;
    let mut manifest = manifest_for("ablate", config, &inputs);
    create_dir(out)?;
    let rows = ablate(&inputs.dataset, &inputs.rules, config, variants, |v, e| {
        log_epoch(&format!("[{v}] "), e)
    })?;
    let mut csv = format!("{CSV_HEADER}\n");
    let mut json = Vec::new();
    for row in &rows {
        let tag = row.variant.to_string();
        let _ = writeln!(csv, "{}", row.test.csv_row(&tag, "test"));
        eprintln!("{tag}: test mrr {:.2} (best epoch {})", row.test.mrr, row.best_epoch);
        json.push(serde_json::to_value(report_json(&tag, Split::Test, &row.test))?);
    }
    write(out.join("ablation.csv"), &csv, &mut manifest)?;
    write(out.join("ablation.json"), &(serde_json::to_string_pretty(&json)? + "\n"), &mut manifest)?;
    print!("{csv}");
    manifest.write(out)
}

fn robustness(
    common: &Common,
    checkpoint: &Path,
    rules: Option<&Path>,
    levels: &[f64],
    split: Split,
    out: &Path,
) -> Result<()> {
    let (config, loaded, inputs) = checkpoint_inputs(common, checkpoint, rules)?;
    let mut manifest = manifest_for("robustness", &config, &inputs);
    let ws = Workspace::new(inputs.dataset, inputs.rules, &config)?;
    let settings = Settings::from(&config);
    let points = robustness_sweep(
        &ws,
        &loaded.model,
        &loaded.store,
        &settings,
        split,
        levels,
        &mut seeded(config.seed),
    )?;
    create_dir(out)?;
    let mut csv = String::from("sigma,mrr,h1,h3,h10,degradation\n");
    for p in &points {
        let _ = writeln!(
            csv,
            "{},{:.4},{:.4},{:.4},{:.4},{:.4}",
            p.sigma, p.report.mrr, p.report.hits1, p.report.hits3, p.report.hits10, p.degradation
        );
    }
    write(out.join("robustness.csv"), &csv, &mut manifest)?;
    print!("{csv}");
    manifest.write(out)
}
