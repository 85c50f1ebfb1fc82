//! Subcommand bodies. Stages talk to each other only through files in the
//! run directory.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use emogaze::events::PupilBaseline;
use emogaze::io::{
    Dataset, LabelDim, LoadOptions, ENV_FILE, GAZE_FILE, LABELS_FILE, LANDMARKS_FILE, PARTICIPANTS_FILE,
};
use emogaze::model::grid::{grid_search, Grid};
use emogaze::model::network::Network;
use emogaze::model::split::{participant_split, stratified_split, Split, SplitTable, SPLIT_FILE};
use emogaze::model::svm::{svm_baseline, SvmVariant};
use emogaze::model::train::{evaluate_network, train, TrainingLog};
use emogaze::model::{
    build_examples, prepare_splits, Example, ExampleScaler, InputVariant, ModelConfig, PreparedSplits, METRICS_FILE,
    MODEL_CONFIG_FILE,
};
use emogaze::pipeline::{participant_baselines, run_pipeline, trial_events, TrialEvents};
use emogaze::stats::report::{build_report, StatsReport, STATS_REPORT_FILE};
use emogaze::stats::{agreement_table, AgreementResult};
use emogaze::synth::{describe_cohort, generate_cohort, EFFECTS_FILE};
use emogaze::table::{read_features, read_sequences, write_features, write_sequences, FeatureRow, SequenceRow};
use emogaze::table::{FEATURES_FILE, SEQUENCES_FILE};
use serde::{Deserialize, Serialize};

use crate::config::{stage_seed, RunConfig};
use crate::manifest::Run;
use crate::render::{render_agreement, render_metrics, render_stats, MetricsFile, MetricsRow};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const BASELINES_FILE: &str = "baselines.csv";
pub const COHORT_FILE: &str = "cohort.toml";
pub const BASELINE_METRICS_FILE: &str = "baseline-metrics.json";
pub const AGREEMENT_FILE: &str = "agreement.json";
pub const LEADERBOARD_FILE: &str = "leaderboard.csv";
pub const REPORT_FILE: &str = "report.txt";

const DATASET_FILES: [&str; 5] = [PARTICIPANTS_FILE, LABELS_FILE, ENV_FILE, GAZE_FILE, LANDMARKS_FILE];

/// Settings shared by every subcommand.
pub struct Ctx {
    pub config: RunConfig,
    pub seed: Option<u64>,
    pub overwrite: bool,
}

impl Ctx {
    fn finish(&self, run: Run) -> Result<()> {
        let path = run.finish(&self.config.hash(), self.seed)?;
        log::info!("wrote {}", path.display());
        Ok(())
    }

    fn base_seed(&self) -> u64 {
        self.seed.unwrap_or(self.config.model.seed)
    }
}

/// Trained network description stored next to its checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelCard {
    pub label: LabelDim,
    pub variant: InputVariant,
    pub checkpoint: String,
    pub config: ModelConfig,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    pub scaler: ExampleScaler,
}

fn model_stem(variant: InputVariant, label: LabelDim) -> String {
    format!("model-{}-{}", variant.name(), label.name())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("{}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{}: malformed JSON", path.display()))
}

fn load_dataset(run: &mut Run, dir: &Path) -> Result<Dataset> {
    for f in DATASET_FILES {
        run.input(dir.join(f))?;
    }
    Ok(Dataset::load(dir, LoadOptions::default())?)
}

fn load_features(run: &mut Run, dir: &Path) -> Result<Vec<FeatureRow>> {
    let p = run.input(dir.join(FEATURES_FILE))?;
    Ok(read_features(&p)?)
}

fn load_tables(ctx: &Ctx, run: &mut Run, dir: &Path) -> Result<(Vec<FeatureRow>, Vec<SequenceRow>)> {
    let features = load_features(run, dir)?;
    let p = run.input(dir.join(SEQUENCES_FILE))?;
    let sequences = read_sequences(&p, &ctx.config.sequence)?;
    Ok((features, sequences))
}

fn load_split(run: &mut Run, dir: &Path) -> Result<SplitTable> {
    let p = run.input(dir.join(SPLIT_FILE))?;
    Ok(SplitTable::read(&p)?)
}

fn assignment(table: &SplitTable, dim: LabelDim, examples: &[Example]) -> Result<Vec<Split>> {
    let lookup = table.lookup(dim).ok_or_else(|| anyhow!("split table has no column for {dim}"))?;
    examples
        .iter()
        .map(|e| {
            lookup
                .get(e.trial_id.as_str())
                .copied()
                .ok_or_else(|| anyhow!("trial {} is missing from {SPLIT_FILE}", e.trial_id))
        })
        .collect()
}

fn prepared(
    ctx: &Ctx,
    features: &[FeatureRow],
    sequences: &[SequenceRow],
    table: &SplitTable,
    dim: LabelDim,
) -> Result<PreparedSplits> {
    let examples = build_examples(features, sequences, dim)?;
    let a = assignment(table, dim, &examples)?;
    Ok(prepare_splits(examples, &a, &ctx.config.sequence)?)
}

fn labels_or_all(labels: &[LabelDim]) -> Vec<LabelDim> {
    if labels.is_empty() {
        LabelDim::ALL.to_vec()
    } else {
        labels.to_vec()
    }
}

pub fn synth(ctx: &Ctx, out: &Path) -> Result<()> {
    let mut run = Run::new("synth", out, ctx.overwrite)?;
    let mut spec = ctx.config.cohort.clone();
    if let Some(s) = ctx.seed {
        spec.seed = s;
    }
    let paths: Vec<PathBuf> = DATASET_FILES
        .iter()
        .chain([EFFECTS_FILE, COHORT_FILE].iter())
        .map(|f| run.output(f))
        .collect::<Result<_>>()?;
    let ds = generate_cohort(&spec, &ctx.config.effects)?;
    ds.write(out)?;
    fs::write(&paths[5], ctx.config.effects.to_toml()?).with_context(|| format!("{}", paths[5].display()))?;
    let cohort = toml::to_string(&spec)?;
    fs::write(&paths[6], cohort).with_context(|| format!("{}", paths[6].display()))?;
    let summary = describe_cohort(&ds);
    log::info!(
        "generated {} trials for {} participants",
        summary.n_trials,
        summary.n_participants
    );
    ctx.finish(run)
}

pub fn events(ctx: &Ctx, input: &Path, out: &Path) -> Result<()> {
    let mut run = Run::new("events", out, ctx.overwrite)?;
    let ds = load_dataset(&mut run, input)?;
    let events_path = run.output(EVENTS_FILE)?;
    let baselines_path = run.output(BASELINES_FILE)?;
    let baselines = participant_baselines(&ds)?;
    let index: HashMap<&str, &PupilBaseline<f64>> =
        baselines.iter().map(|b| (b.participant_id.as_str(), b)).collect();
    let mut lines = String::new();
    for t in &ds.trials {
        let b = index
            .get(t.participant_id.as_str())
            .ok_or_else(|| anyhow!("participant {} has no neutral trials", t.participant_id))?;
        let timeline = trial_events(t, b.baseline, &ctx.config.detector)
            .with_context(|| format!("trial {}", t.trial_id))?;
        let e = TrialEvents {
            trial_id: t.trial_id.clone(),
            timeline,
        };
        lines.push_str(&serde_json::to_string(&e)?);
        lines.push('\n');
    }
    fs::write(&events_path, lines).with_context(|| format!("{}", events_path.display()))?;
    let mut csv = String::from("participant_id,baseline\n");
    for b in &baselines {
        csv.push_str(&format!("{},{}\n", b.participant_id, emogaze::io::fmt_f64(b.baseline)));
    }
    fs::write(&baselines_path, csv).with_context(|| format!("{}", baselines_path.display()))?;
    ctx.finish(run)
}

pub fn features(ctx: &Ctx, input: &Path, out: &Path) -> Result<()> {
    let mut run = Run::new("features", out, ctx.overwrite)?;
    let ds = load_dataset(&mut run, input)?;
    let fpath = run.output(FEATURES_FILE)?;
    let spath = run.output(SEQUENCES_FILE)?;
    let result = run_pipeline(&ds, &ctx.config.pipeline())?;
    write_features(&result.features, &fpath)?;
    write_sequences(&result.sequences, &ctx.config.sequence, &spath)?;
    log::info!("{} trials featurised", result.features.len());
    ctx.finish(run)
}

pub fn stats(ctx: &Ctx, input: &Path, out: &Path) -> Result<()> {
    let mut run = Run::new("stats", out, ctx.overwrite)?;
    let rows = load_features(&mut run, input)?;
    let path = run.output(STATS_REPORT_FILE)?;
    let report = build_report(&rows);
    write_json(&report, &path)?;
    ctx.finish(run)
}

pub fn split(ctx: &Ctx, input: &Path, out: &Path, by_participant: bool) -> Result<()> {
    let mut run = Run::new("split", out, ctx.overwrite)?;
    let rows = load_features(&mut run, input)?;
    let path = run.output(SPLIT_FILE)?;
    let fractions = ctx.config.split.fractions;
    let base = ctx.base_seed();
    let trial_ids: Vec<String> = rows.iter().map(|r| r.trial_id.clone()).collect();
    let by_label = if by_participant {
        let ids: Vec<&str> = rows.iter().map(|r| r.participant_id.as_str()).collect();
        let s = participant_split(&ids, fractions, stage_seed(base, "split/participants"))?;
        LabelDim::ALL.iter().map(|&d| (d, s.clone())).collect()
    } else {
        LabelDim::ALL
            .iter()
            .map(|&d| {
                let labels: Vec<usize> = rows
                    .iter()
                    .map(|r| emogaze::features::bin_label(r.rating(d) as i64).map(|c| c.index()))
                    .collect::<emogaze::Result<_>>()?;
                let s = stratified_split(&labels, fractions, stage_seed(base, &format!("split/{}", d.name())))
                    .with_context(|| format!("stratifying {d}"))?;
                Ok((d, s))
            })
            .collect::<Result<_>>()?
    };
    SplitTable { trial_ids, by_label }.write(&path)?;
    ctx.finish(run)
}

fn write_model(
    run: &mut Run,
    config: &ModelConfig,
    label: LabelDim,
    net: &Network<f64>,
    log: &TrainingLog,
    scaler: &ExampleScaler,
) -> Result<()> {
    let stem = model_stem(config.variant, label);
    let ckpt = run.output(&format!("{stem}.txt"))?;
    let card_path = run.output(&format!("{stem}.json"))?;
    let log_path = run.output(&format!("training-log-{}-{}.csv", config.variant.name(), label.name()))?;
    net.save(&ckpt)?;
    log.write_csv(&log_path)?;
    let card = ModelCard {
        label,
        variant: config.variant,
        checkpoint: format!("{stem}.txt"),
        config: config.clone(),
        best_epoch: log.best_epoch,
        best_val_macro_f1: log.best_val_macro_f1,
        scaler: scaler.clone(),
    };
    write_json(&card, &card_path)
}

fn label_config(ctx: &Ctx, label: LabelDim) -> ModelConfig {
    let mut c = ctx.config.model.clone();
    c.seed = stage_seed(ctx.base_seed(), &format!("train/{}/{}", c.variant.name(), label.name()));
    c
}

pub fn train_cmd(ctx: &Ctx, input: &Path, out: &Path, labels: &[LabelDim]) -> Result<()> {
    let mut run = Run::new("train", out, ctx.overwrite)?;
    let (features, sequences) = load_tables(ctx, &mut run, input)?;
    let table = load_split(&mut run, input)?;
    let cfg_path = run.output(MODEL_CONFIG_FILE)?;
    fs::write(&cfg_path, ctx.config.model.to_toml()?).with_context(|| format!("{}", cfg_path.display()))?;
    for label in labels_or_all(labels) {
        let p = prepared(ctx, &features, &sequences, &table, label)?;
        let config = label_config(ctx, label);
        let (net, log) = train(&config, &p.train, &p.validation).with_context(|| format!("training {label}"))?;
        log::info!(
            "{label}: best validation macro F1 {:.3} at epoch {}",
            log.best_val_macro_f1,
            log.best_epoch
        );
        write_model(&mut run, &config, label, &net, &log, &p.scaler)?;
    }
    ctx.finish(run)
}

pub fn grid_cmd(ctx: &Ctx, input: &Path, out: &Path, grid: &Grid, labels: &[LabelDim]) -> Result<()> {
    let mut run = Run::new("grid", out, ctx.overwrite)?;
    let (features, sequences) = load_tables(ctx, &mut run, input)?;
    let table = load_split(&mut run, input)?;
    let board_path = run.output(LEADERBOARD_FILE)?;
    let mut board = String::from("label,variant,learning_rate,dropout_rate,val_macro_f1,best_epoch,epochs_run\n");
    for label in labels_or_all(labels) {
        let p = prepared(ctx, &features, &sequences, &table, label)?;
        let base = label_config(ctx, label);
        let result = grid_search(&base, grid, &p.train, &p.validation).with_context(|| format!("grid for {label}"))?;
        for e in &result.leaderboard {
            board.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                label.name(),
                base.variant.name(),
                emogaze::io::fmt_f64(e.learning_rate),
                emogaze::io::fmt_f64(e.dropout_rate),
                emogaze::io::fmt_f64(e.val_macro_f1),
                e.best_epoch,
                e.epochs_run
            ));
        }
        log::info!(
            "{label}: lr {} dropout {} wins with validation macro F1 {:.3}",
            result.best.learning_rate,
            result.best.dropout_rate,
            result.log.best_val_macro_f1
        );
        write_model(&mut run, &result.best, label, &result.network, &result.log, &p.scaler)?;
    }
    fs::write(&board_path, board).with_context(|| format!("{}", board_path.display()))?;
    ctx.finish(run)
}

pub fn baseline(ctx: &Ctx, input: &Path, out: &Path, labels: &[LabelDim]) -> Result<()> {
    let mut run = Run::new("baseline", out, ctx.overwrite)?;
    let (features, sequences) = load_tables(ctx, &mut run, input)?;
    let table = load_split(&mut run, input)?;
    let path = run.output(BASELINE_METRICS_FILE)?;
    let mut file = MetricsFile {
        split: Split::Test.to_string(),
        rows: Vec::new(),
    };
    for variant in SvmVariant::ALL {
        for label in labels_or_all(labels) {
            let p = prepared(ctx, &features, &sequences, &table, label)?;
            let mut config = ctx.config.model.clone();
            config.seed = stage_seed(ctx.base_seed(), &format!("svm/{}/{}", variant.name(), label.name()));
            let (_, report) = svm_baseline(&config, variant, &p.train, &p.test)?;
            file.rows.push(MetricsRow {
                model: "svm".into(),
                variant: variant.name().into(),
                title: variant.title().into(),
                label,
                learning_rate: None,
                dropout_rate: None,
                report,
            });
        }
    }
    write_json(&file, &path)?;
    ctx.finish(run)
}

pub fn eval(ctx: &Ctx, input: &Path, out: &Path) -> Result<()> {
    let mut run = Run::new("eval", out, ctx.overwrite)?;
    let (features, sequences) = load_tables(ctx, &mut run, input)?;
    let table = load_split(&mut run, input)?;
    let mut cards: Vec<PathBuf> = fs::read_dir(input)
        .with_context(|| format!("{}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("model-") && n.ends_with(".json"))
        })
        .collect();
    cards.sort();
    if cards.is_empty() {
        bail!("no trained models (model-*.json) in {}", input.display());
    }
    let path = run.output(METRICS_FILE)?;
    let mut rows = Vec::new();
    for card_path in cards {
        let card: ModelCard = read_json(&run.input(card_path)?)?;
        let net = Network::<f64>::load(&run.input(input.join(&card.checkpoint))?)?;
        let examples = build_examples(&features, &sequences, card.label)?;
        let a = assignment(&table, card.label, &examples)?;
        let mut test: Vec<Example> = examples
            .into_iter()
            .zip(&a)
            .filter(|(_, s)| **s == Split::Test)
            .map(|(e, _)| e)
            .collect();
        card.scaler.apply(&mut test);
        let report = evaluate_network(&net, &test).with_context(|| format!("evaluating {}", card.checkpoint))?;
        rows.push(MetricsRow {
            model: "network".into(),
            variant: card.variant.name().into(),
            title: card.variant.title().into(),
            label: card.label,
            learning_rate: Some(card.config.learning_rate),
            dropout_rate: Some(card.config.dropout_rate),
            report,
        });
    }
    let order = |r: &MetricsRow| {
        (
            InputVariant::ALL.iter().position(|v| v.name() == r.variant),
            LabelDim::ALL.iter().position(|d| *d == r.label),
        )
    };
    rows.sort_by_key(order);
    write_json(
        &MetricsFile {
            split: Split::Test.to_string(),
            rows,
        },
        &path,
    )?;
    ctx.finish(run)
}

pub fn agreement(ctx: &Ctx, input: &Path, out: &Path) -> Result<()> {
    let mut run = Run::new("agreement", out, ctx.overwrite)?;
    let rows = load_features(&mut run, input)?;
    let path = run.output(AGREEMENT_FILE)?;
    let result = agreement_table(&rows)?;
    write_json(&result, &path)?;
    ctx.finish(run)
}

/// Renders whichever result files exist; at least one is required.
pub fn report(ctx: &Ctx, input: &Path) -> Result<String> {
    let mut run = Run::new("report", input, true)?;
    let mut text = String::new();
    let mut found = false;
    let stats_path = input.join(STATS_REPORT_FILE);
    if stats_path.is_file() {
        let r: StatsReport = read_json(&run.input(stats_path)?)?;
        text.push_str(&render_stats(&r));
        found = true;
    }
    for (file, title) in [
        (METRICS_FILE, "Network performance (F1)"),
        (BASELINE_METRICS_FILE, "SVM baselines (F1)"),
    ] {
        let p = input.join(file);
        if p.is_file() {
            let m: MetricsFile = read_json(&run.input(p)?)?;
            text.push_str(&render_metrics(title, &m));
            found = true;
        }
    }
    let agreement_path = input.join(AGREEMENT_FILE);
    if agreement_path.is_file() {
        let a: AgreementResult = read_json(&run.input(agreement_path)?)?;
        text.push_str(&render_agreement(&a));
        found = true;
    }
    if !found {
        bail!(
            "missing input: none of {STATS_REPORT_FILE}, {METRICS_FILE}, {BASELINE_METRICS_FILE}, {AGREEMENT_FILE} in {}",
            input.display()
        );
    }
    let path = run.output(REPORT_FILE)?;
    fs::write(&path, &text).with_context(|| format!("{}", path.display()))?;
    ctx.finish(run)?;
    Ok(text)
}
