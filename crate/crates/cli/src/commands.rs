//! One function per subcommand. Each writes its files under a [`Layout`]
//! and returns the text to print.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use orthodepth_core::codec::Task;
use orthodepth_core::corpus::{
    build_dataset, materialize, read_jsonl, to_jsonl, CorpusConfig, IngestReport, LexiconEntry,
    Source,
};
use orthodepth_core::evaluator::{
    aggregate, dry_run_episode, episode_configs, episode_data, predict, run_episode_full,
    score_pair, AggregateReport, EpisodeReport, GreedyDecoder, MAX_LEN,
};
use orthodepth_core::model::{load_checkpoint, save_checkpoint};
use orthodepth_core::trainer::{train_with, LossTrace, Precision, TrainError};
use orthodepth_core::verify;
use orthodepth_core::{Model, Scalar};
use serde::Serialize;

use crate::{CliError, ExperimentConfig, Layout, Manifest};

/// Inventory and length statistics of one orthography's entries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub orthography: String,
    pub samples: usize,
    pub phonemes: usize,
    pub graphemes: usize,
    pub mean_phonemes: f64,
    pub mean_graphemes: f64,
    pub ingest: Option<IngestReport>,
}

pub fn summarize(code: &str, entries: &[LexiconEntry], ingest: Option<IngestReport>) -> DatasetSummary {
    let n = entries.len().max(1) as f64;
    let phonemes: BTreeSet<char> = entries.iter().flat_map(|e| e.pron.chars()).collect();
    let graphemes: BTreeSet<char> = entries.iter().flat_map(|e| e.spelled.chars()).collect();
    DatasetSummary {
        orthography: code.to_string(),
        samples: entries.len(),
        phonemes: phonemes.len(),
        graphemes: graphemes.len(),
        mean_phonemes: entries.iter().map(|e| e.pron.chars().count()).sum::<usize>() as f64 / n,
        mean_graphemes: entries.iter().map(|e| e.spelled.chars().count()).sum::<usize>() as f64 / n,
        ingest,
    }
}

fn summary_csv(rows: &[DatasetSummary]) -> String {
    let mut out = String::from("orthography,samples,phonemes,graphemes,mean_phonemes,mean_graphemes,dropped\n");
    for r in rows {
        let dropped = r.ingest.as_ref().map_or(0, IngestReport::dropped_total);
        let _ = writeln!(
            out,
            "{},{},{},{},{:.2},{:.2},{}",
            r.orthography, r.samples, r.phonemes, r.graphemes, r.mean_phonemes, r.mean_graphemes, dropped
        );
    }
    out
}

/// Writes `bundles/{train,test}.jsonl` for the master seed and the
/// per-orthography summary.
pub fn build_data(config: &ExperimentConfig, layout: &Layout) -> Result<String, CliError> {
    let (lexicons, reports) = materialize(&config.corpus, config.seed)?;
    let bundle = build_dataset(&lexicons, config.corpus.n_train, config.corpus.n_test, config.seed)?;
    let mut by_code: BTreeMap<String, IngestReport> =
        reports.into_iter().map(|r| (r.code.clone(), r)).collect();
    let summaries: Vec<DatasetSummary> = lexicons
        .iter()
        .map(|(code, entries)| summarize(code, entries, by_code.remove(code)))
        .collect();

    layout.write(&layout.bundles().join("train.jsonl"), to_jsonl(&bundle.train))?;
    layout.write(&layout.bundles().join("test.jsonl"), to_jsonl(&bundle.test))?;
    layout.write(
        &layout.reports().join("datasets.json"),
        serde_json::to_string_pretty(&summaries).expect("summary serializes") + "\n",
    )?;
    let csv = summary_csv(&summaries);
    layout.write(&layout.reports().join("datasets.csv"), &csv)?;
    layout.write_manifest(&Manifest::new("build-data", config))?;
    Ok(format!(
        "{csv}train samples: {}\ntest samples: {}\n",
        bundle.train.len(),
        bundle.test.len()
    ))
}

fn train_typed<T: Scalar>(
    config: &ExperimentConfig,
    layout: &Layout,
) -> Result<(Model<f32>, LossTrace), CliError> {
    let (bundle, vocab) = episode_data(&config.corpus, config.seed)?;
    layout.write(&layout.bundles().join("train.jsonl"), to_jsonl(&bundle.train))?;
    layout.write(&layout.bundles().join("test.jsonl"), to_jsonl(&bundle.test))?;
    let (model_cfg, train_cfg) = episode_configs(&config.model, &config.train, &vocab, config.seed);
    let mut model: Model<T> = Model::init(model_cfg)?;
    let ckpt = layout.checkpoints().join("model.ckpt");
    let trace = train_with(&mut model, &bundle.train, &vocab, &train_cfg, |_, m| {
        layout
            .write(&ckpt, save_checkpoint(&m.cast::<f32>(), &vocab))
            .map_err(|e| TrainError::Hook(e.to_string()))
    })?;
    Ok((model.cast(), trace))
}

/// Trains one model on the master-seed bundle and saves
/// `checkpoints/model.ckpt` (refreshed at every evaluation interval).
pub fn train(config: &ExperimentConfig, layout: &Layout) -> Result<String, CliError> {
    let (model, trace) = match config.train.precision {
        Precision::F32 => train_typed::<f32>(config, layout)?,
        Precision::F64 => train_typed::<f64>(config, layout)?,
    };
    layout.write(&layout.reports().join("loss.csv"), trace.to_csv())?;
    layout.write_manifest(&Manifest::new("train", config))?;
    Ok(format!(
        "trained {} parameters for {} steps, final loss {:.4}\n",
        model.num_params(),
        trace.points.len(),
        trace.smoothed(100).last().copied().unwrap_or(f64::NAN)
    ))
}

/// Scores a checkpoint on a JSON-lines test file.
pub fn evaluate(checkpoint: &Path, data: &Path, seed: u64, layout: &Layout) -> Result<String, CliError> {
    let bytes = std::fs::read(checkpoint)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", checkpoint.display())))?;
    let (model, vocab) = load_checkpoint(&bytes)?;
    let text = std::fs::read_to_string(data)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", data.display())))?;
    let samples = read_jsonl(&text)?;
    let mut pairs: BTreeMap<(String, Task), Vec<_>> = BTreeMap::new();
    for s in samples {
        pairs.entry((s.orthography.clone(), s.task)).or_default().push(s);
    }
    let decoder = GreedyDecoder::new(&model, &vocab);
    let scores = pairs
        .values()
        .map(|s| score_pair(&decoder, s))
        .collect::<Result<Vec<_>, _>>()?;
    let report = EpisodeReport {
        seed,
        scores,
        final_loss: None,
    };
    layout.write(&layout.reports().join("evaluation.json"), report.to_json())?;
    layout.write(&layout.reports().join("evaluation.csv"), report.to_csv())?;
    Ok(AggregateReport::from_single(&report).to_table())
}

/// Replaces lexicon sources whose file is missing with synthetic stand-ins
/// of the same size requirement. Returns one note per replacement.
pub fn stand_in_missing(corpus: &mut CorpusConfig) -> Vec<String> {
    let size = corpus.n_train + corpus.n_test;
    let mut notes = Vec::new();
    for plan in &mut corpus.orthographies {
        if let Source::Lexicon { path, .. } = &plan.source {
            if !path.exists() {
                notes.push(format!(
                    "{}: lexicon {} missing, synthetic stand-in used",
                    plan.code,
                    path.display()
                ));
                plan.source = Source::Synthetic {
                    k: 2,
                    min_len: 3,
                    max_len: 10,
                    size,
                };
            }
        }
    }
    notes
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Build datasets and score them with the input echoed back, without
    /// training.
    pub dry_run: bool,
    /// With `dry_run`, substitute synthetic data for missing lexicons.
    pub stand_in_missing: bool,
}

fn combine(reports: &[EpisodeReport]) -> Result<AggregateReport, CliError> {
    Ok(match reports {
        [single] => AggregateReport::from_single(single),
        _ => aggregate(reports)?,
    })
}

/// All episodes, per-episode and aggregate reports, table and scatter data.
pub fn run(config: &ExperimentConfig, layout: &Layout, options: RunOptions) -> Result<String, CliError> {
    let mut config = config.clone();
    let mut manifest_notes = Vec::new();
    if options.stand_in_missing {
        if !options.dry_run {
            return Err(CliError::Usage("stand-ins are only allowed with a dry run".into()));
        }
        manifest_notes = stand_in_missing(&mut config.corpus);
    }
    if options.dry_run {
        manifest_notes.push("dry run: no training, predictions echo the input".into());
    }
    let mut manifest = Manifest::new(if options.dry_run { "run --dry-run" } else { "run" }, &config);
    manifest.notes = manifest_notes;
    layout.write_manifest(&manifest)?;

    let reports_dir = layout.reports();
    let mut reports = Vec::with_capacity(config.episodes);
    for (i, &seed) in config.episode_seeds().iter().enumerate() {
        let report = if options.dry_run {
            dry_run_episode(&config.corpus, seed)?
        } else {
            let episode = run_episode_full(&config.corpus, &config.model, &config.train, seed)?;
            layout.write(
                &layout.checkpoints().join(format!("episode_{i:02}.ckpt")),
                save_checkpoint(&episode.model, &episode.vocab),
            )?;
            layout.write(&reports_dir.join(format!("loss_{i:02}.csv")), episode.trace.to_csv())?;
            layout.write(
                &layout.bundles().join(format!("episode_{i:02}_test.jsonl")),
                to_jsonl(&episode.bundle.test),
            )?;
            episode.report
        };
        layout.write(&reports_dir.join(format!("episode_{i:02}.json")), report.to_json())?;
        layout.write(&reports_dir.join(format!("episode_{i:02}.csv")), report.to_csv())?;
        reports.push(report);
    }
    let agg = combine(&reports)?;
    layout.write(&reports_dir.join("aggregate.json"), agg.to_json())?;
    layout.write(&reports_dir.join("aggregate.csv"), agg.to_csv())?;
    layout.write(&reports_dir.join("scatter.csv"), agg.scatter_csv())?;
    let table = agg.to_table();
    layout.write(&reports_dir.join("table.txt"), &table)?;
    Ok(table)
}

/// Score against training-set size: the episode protocol repeated per size.
pub fn learning_curve(
    config: &ExperimentConfig,
    sizes: &[usize],
    layout: &Layout,
    dry_run: bool,
) -> Result<String, CliError> {
    if sizes.is_empty() {
        return Err(CliError::Usage("no training-set sizes given".into()));
    }
    let (lexicons, _) = materialize(&config.corpus, config.seed)?;
    let largest = *sizes.iter().max().expect("non-empty");
    for (code, entries) in &lexicons {
        if largest + config.corpus.n_test > entries.len() {
            return Err(CliError::Data(format!(
                "size {largest} exceeds lexicon {code}: {} entries, {} held out",
                entries.len(),
                config.corpus.n_test
            )));
        }
    }
    let mut csv = String::from("size,orthography,task,mean,std,n\n");
    let mut table = String::new();
    let mut all = Vec::new();
    for &size in sizes {
        let corpus = CorpusConfig {
            n_train: size,
            ..config.corpus.clone()
        };
        let reports = config
            .episode_seeds()
            .iter()
            .map(|&seed| {
                if dry_run {
                    Ok(dry_run_episode(&corpus, seed)?)
                } else {
                    Ok(run_episode_full(&corpus, &config.model, &config.train, seed)?.report)
                }
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let agg = combine(&reports)?;
        for r in &agg.rows {
            let _ = writeln!(csv, "{size},{},{},{:.4},{:.4},{}", r.orthography, r.task, r.mean, r.std, r.n);
        }
        let _ = write!(table, "size {size}\n{}", agg.to_table());
        all.push((size, agg));
    }
    #[derive(Serialize)]
    struct Point<'a> {
        size: usize,
        report: &'a AggregateReport,
    }
    let points: Vec<Point> = all.iter().map(|(size, report)| Point { size: *size, report }).collect();
    layout.write(&layout.reports().join("learning_curve.csv"), &csv)?;
    layout.write(
        &layout.reports().join("learning_curve.json"),
        serde_json::to_string_pretty(&points).expect("curve serializes") + "\n",
    )?;
    layout.write_manifest(&Manifest::new("learning-curve", config))?;
    Ok(table)
}

/// Prediction for one word; with `expect`, a mismatch is a failed check.
pub fn predict_word(
    checkpoint: &Path,
    orthography: &str,
    task: Task,
    word: &str,
    expect: Option<&str>,
) -> Result<String, CliError> {
    let bytes = std::fs::read(checkpoint)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", checkpoint.display())))?;
    let (model, vocab) = load_checkpoint(&bytes)?;
    let prediction = predict(&model, &vocab, orthography, task, word, MAX_LEN)?;
    match expect {
        None => Ok(format!("{prediction}\n")),
        Some(target) if target == prediction => Ok(format!("{prediction}\nmatch\n")),
        Some(target) => Err(CliError::CheckFailed(format!(
            "predicted {prediction:?}, expected {target:?}"
        ))),
    }
}

/// Gradient, parameter-count and causality self-checks.
pub fn verify(cases_per_op: usize, seed: u64) -> Result<String, CliError> {
    let report = verify::run_all(cases_per_op, 50, 1_000, seed)
        .map_err(|e| CliError::CheckFailed(e.to_string()))?;
    let text = format!("{report}\n");
    if report.passed() {
        Ok(text)
    } else {
        Err(CliError::CheckFailed(text))
    }
}
