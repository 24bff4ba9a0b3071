//! Subcommand implementations. Every command prints a one-line summary with
//! its service-call count so warm-cache runs are verifiable from the outside.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};

use gerkit::corpus::{self, EvalSet, HypothesisSet, RareWordList};
use gerkit::databuild::{self, BuildClients, CheckpointStore};
use gerkit::ger::{self, GerCondition, GerContext, GerMode, GerOutput, LookupCorrectorFactory};
use gerkit::metrics::NormPolicy;
use gerkit::report::{self, EmitFormat, SweepAxis, SweepContext};
use gerkit::services::TtsJob;
use gerkit::util::sha256_hex;

use crate::app::App;
use crate::fail::{classify, CmdFail};

pub fn extract_words(
    app: &App,
    corpus_path: &Path,
    target_coverage: f64,
    out: Option<PathBuf>,
) -> Result<(), CmdFail> {
    app.ensure_out_dir().map_err(CmdFail::usage)?;
    let corpus_text = crate::app::read_text(corpus_path).map_err(CmdFail::usage)?;
    let chat = app.chat_client().map_err(CmdFail::usage)?;
    let list = corpus::extract_rare_words(
        &corpus_text,
        app.language,
        &chat,
        &app.catalog,
        target_coverage,
    )
    .map_err(classify)?;
    let out_path = out.unwrap_or_else(|| app.out_dir.join("words.txt"));
    list.save(&out_path).map_err(classify)?;
    println!(
        "wrote {} rare words to {} (service calls: {})",
        list.entries.len(),
        out_path.display(),
        chat.stats().calls()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct BuildManifest<'a> {
    fingerprint: String,
    config: &'a gerkit::databuild::BuildConfig,
    report: &'a gerkit::databuild::BuildReport,
    train: Option<gerkit::databuild::ExportManifest>,
    val: Option<gerkit::databuild::ExportManifest>,
}

pub fn build(
    app: &App,
    words_path: &Path,
    transcripts: Option<u32>,
    speakers: Option<u32>,
    nbest: Option<u32>,
    scheme: Option<&str>,
) -> Result<(), CmdFail> {
    app.ensure_out_dir().map_err(CmdFail::usage)?;
    let words = RareWordList::load(words_path, app.language).map_err(CmdFail::usage_from)?;
    let cfg = app
        .build_config(transcripts, speakers, nbest, scheme)
        .map_err(CmdFail::usage)?;
    cfg.validate().map_err(CmdFail::usage_from)?;
    let clients = app.build_clients().map_err(CmdFail::usage)?;
    let fingerprint = cfg.fingerprint(&words);
    let ckpt = CheckpointStore::new(&app.out_dir.join("checkpoints"), fingerprint.clone());

    let (examples, report) =
        databuild::generate_pairs(&words, &cfg, &clients, Some(&ckpt)).map_err(classify)?;
    let data_dir = app.out_dir.join("data");
    let (train_manifest, val_manifest) = if examples.is_empty() {
        log::warn!("no candidates survived the error filter; dataset is empty");
        (None, None)
    } else {
        let (train, val) = databuild::split(examples, cfg.split_train, cfg.split_val, cfg.seed);
        let train_manifest = Some(
            databuild::export_finetune(&train, &app.catalog, cfg.language, &data_dir, "train")
                .map_err(classify)?,
        );
        let val_manifest = if val.is_empty() {
            None
        } else {
            Some(
                databuild::export_finetune(&val, &app.catalog, cfg.language, &data_dir, "val")
                    .map_err(classify)?,
            )
        };
        (train_manifest, val_manifest)
    };

    let manifest = BuildManifest {
        fingerprint,
        config: &cfg,
        report: &report,
        train: train_manifest,
        val: val_manifest,
    };
    let mut manifest_text =
        serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    manifest_text.push('\n');
    gerkit::util::atomic_write(&app.out_dir.join("manifest.json"), manifest_text.as_bytes())
        .map_err(|e| CmdFail::usage(anyhow!(e)))?;

    println!(
        "candidates: {} kept: {} dropped: {} retries: {} skipped: {} (service calls: {})",
        report.n_candidates,
        report.n_kept,
        report.n_dropped_no_error,
        report.n_retries,
        report.skipped_words.len(),
        clients.service_calls()
    );
    Ok(())
}

pub fn correct(
    app: &App,
    eval_path: &Path,
    hyps_path: Option<&Path>,
    mode: &str,
    scheme: Option<&str>,
    model: Option<&str>,
    out: Option<PathBuf>,
) -> Result<(), CmdFail> {
    app.ensure_out_dir().map_err(CmdFail::usage)?;
    let mode: GerMode = mode.parse().map_err(|e: String| CmdFail::usage(anyhow!(e)))?;
    let scheme = match scheme {
        Some(tag) => Some(tag.parse().map_err(|e| CmdFail::usage(anyhow!("{e}")))?),
        None => None,
    };
    let eval = EvalSet::load(eval_path).map_err(CmdFail::usage_from)?;
    let nbest_limit = app.cfg.build.nbest.unwrap_or(5) as usize;
    let mut tts_asr_calls = 0;
    let hyps = match hyps_path {
        Some(path) => corpus::load_hypotheses(path).map_err(CmdFail::usage_from)?,
        None => {
            // No hypothesis file: run the references through the (simulated)
            // TTS -> ASR channel and keep the result for later scoring runs.
            let clients = app.build_clients().map_err(CmdFail::usage)?;
            let hyps = eval_hypotheses(app, &clients, &eval, None, nbest_limit)?;
            let listed: Vec<&HypothesisSet> = hyps.values().collect();
            gerkit::util::write_jsonl(&app.out_dir.join("hyps.generated.jsonl"), &listed)
                .map_err(|e| CmdFail::usage(anyhow!(e)))?;
            tts_asr_calls = clients.service_calls();
            hyps
        }
    };
    let chat = app.chat_client().map_err(CmdFail::usage)?;
    let condition = GerCondition::new(
        mode,
        scheme,
        model.map(str::to_string).unwrap_or_default(),
    )
    .map_err(CmdFail::usage_from)?;

    let ctx = GerContext {
        chat: chat.clone(),
        phoneticizer: app.phoneticizer(Some(chat.clone())).map_err(CmdFail::usage)?,
        catalog: app.catalog.clone(),
        nbest_limit,
        concurrency: app.cfg.services.concurrency,
    };
    // Checkpoint keyed by condition + inputs so unrelated runs never collide.
    let ckpt_key = {
        let eval_bytes = std::fs::read(eval_path).map_err(|e| CmdFail::usage(anyhow!(e)))?;
        let hyps_json = serde_json::to_string(&hyps).expect("hypotheses serialize");
        let condition_json = serde_json::to_string(&condition).expect("condition serializes");
        sha256_hex(
            [condition_json.as_bytes(), &eval_bytes, hyps_json.as_bytes()]
                .concat()
                .as_slice(),
        )
    };
    let ckpt_path = app
        .out_dir
        .join(format!("correct-{}.ckpt.jsonl", &ckpt_key[..12]));
    let outputs = ger::run_eval(&ctx, &eval, &hyps, &condition, app.language, Some(&ckpt_path))
        .map_err(classify)?;

    let out_path = out.unwrap_or_else(|| app.out_dir.join("outputs.jsonl"));
    gerkit::util::write_jsonl(&out_path, &outputs).map_err(|e| CmdFail::usage(anyhow!(e)))?;
    let fallbacks = outputs.iter().filter(|o| o.fallback).count();
    println!(
        "corrected {} utterances to {} (fallbacks: {}, service calls: {})",
        outputs.len(),
        out_path.display(),
        fallbacks,
        chat.stats().calls() + tts_asr_calls
    );
    Ok(())
}

pub fn score(
    app: &App,
    outputs_path: &Path,
    eval_path: &Path,
    words_path: &Path,
    dataset: Option<&str>,
    condition: Option<&str>,
) -> Result<(), CmdFail> {
    app.ensure_out_dir().map_err(CmdFail::usage)?;
    let outputs: Vec<GerOutput> =
        gerkit::util::read_jsonl(outputs_path).map_err(|e| CmdFail::usage(anyhow!(e)))?;
    let eval = EvalSet::load(eval_path).map_err(CmdFail::usage_from)?;
    let words = RareWordList::load(words_path, app.language).map_err(CmdFail::usage_from)?;
    let policy = NormPolicy::for_language(app.language);
    let dataset = dataset.unwrap_or("eval");
    let condition = condition
        .map(str::to_string)
        .or_else(|| outputs.first().map(|o| o.condition.clone()))
        .unwrap_or_else(|| "unknown".into());
    let report =
        report::summarize(&outputs, &eval, &words, &policy, dataset, condition).map_err(classify)?;

    let md = report::render_report(&report, EmitFormat::Markdown);
    report::emit(&md, &app.out_dir.join("report.md")).map_err(classify)?;
    report::emit(
        &report::render_report(&report, EmitFormat::Csv),
        &app.out_dir.join("report.csv"),
    )
    .map_err(classify)?;
    report::emit(
        &report::render_report(&report, EmitFormat::Json),
        &app.out_dir.join("report.json"),
    )
    .map_err(classify)?;
    print!("{md}");
    println!(
        "wrote report.md, report.csv, report.json to {}",
        app.out_dir.display()
    );
    Ok(())
}

fn parse_values(values: &str) -> Result<Vec<u32>> {
    let parsed: Result<Vec<u32>, _> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::parse)
        .collect();
    let parsed = parsed.with_context(|| format!("invalid --values `{values}`"))?;
    if parsed.is_empty() {
        anyhow::bail!("--values must list at least one integer");
    }
    Ok(parsed)
}

/// Hypotheses for the sweep eval set: either a provided file, or generated
/// through the (simulated) TTS->ASR path from the references.
fn eval_hypotheses(
    app: &App,
    clients: &BuildClients,
    eval: &EvalSet,
    hyps: Option<&Path>,
    nbest: usize,
) -> Result<BTreeMap<String, HypothesisSet>, CmdFail> {
    match hyps {
        Some(path) => corpus::load_hypotheses(path).map_err(CmdFail::usage_from),
        None => {
            app.require_simulated("sweep without --hyps").map_err(CmdFail::usage)?;
            let mut map = BTreeMap::new();
            for utterance in &eval.utterances {
                let job = TtsJob {
                    text: utterance.reference.clone(),
                    speaker_id: 1,
                    voice_id: "eval".into(),
                    language: utterance.language,
                };
                let audio = clients.tts.synthesize(&job).map_err(classify)?;
                let result = clients
                    .asr
                    .transcribe(&audio, &utterance.id, nbest)
                    .map_err(classify)?;
                map.insert(
                    utterance.id.clone(),
                    HypothesisSet {
                        utterance_id: utterance.id.clone(),
                        hypotheses: result.nbest,
                    },
                );
            }
            Ok(map)
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn sweep(
    app: &App,
    words_path: &Path,
    eval_path: &Path,
    axis: &str,
    values: &str,
    fixed: Option<u32>,
    hyps: Option<&Path>,
    out: Option<PathBuf>,
) -> Result<(), CmdFail> {
    app.ensure_out_dir().map_err(CmdFail::usage)?;
    let axis: SweepAxis = axis.parse().map_err(|e: String| CmdFail::usage(anyhow!(e)))?;
    let values = parse_values(values).map_err(CmdFail::usage)?;
    let words = RareWordList::load(words_path, app.language).map_err(CmdFail::usage_from)?;
    let eval = EvalSet::load(eval_path).map_err(CmdFail::usage_from)?;
    let base_cfg = app.build_config(None, None, None, None).map_err(CmdFail::usage)?;
    let clients = app.build_clients().map_err(CmdFail::usage)?;
    let eval_hyps = eval_hypotheses(app, &clients, &eval, hyps, base_cfg.nbest as usize)?;
    let fixed = fixed.unwrap_or(match axis {
        SweepAxis::Transcripts => base_cfg.speakers_per_transcript,
        SweepAxis::Speakers => base_cfg.transcripts_per_word,
    });

    let policy = NormPolicy::for_language(app.language);
    let factory = LookupCorrectorFactory { policy };
    let ckpt_root = app.out_dir.join("checkpoints");
    let ctx = SweepContext {
        words: &words,
        base_cfg: &base_cfg,
        clients: &clients,
        eval_set: &eval,
        eval_hyps: &eval_hyps,
        rare_list: &words,
        policy: &policy,
        factory: &factory,
        checkpoint_root: Some(&ckpt_root),
    };
    let grid = report::run_sweep(&ctx, axis, &values, fixed).map_err(classify)?;

    let out_path = out.unwrap_or_else(|| app.out_dir.join("sweep.csv"));
    report::emit(&report::render_grid(&grid, EmitFormat::Csv), &out_path).map_err(classify)?;
    print!("{}", report::render_grid(&grid, EmitFormat::Markdown));
    println!(
        "wrote {} ({} points, service calls: {})",
        out_path.display(),
        grid.points.len(),
        clients.service_calls()
    );
    Ok(())
}
