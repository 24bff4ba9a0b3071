//! Aggregate correction outputs into result rows ("WER / recall /
//! precision" cells) and transcript/speaker sweep grids.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{EvalSet, HypothesisSet, RareWordList};
use crate::databuild::{self, BuildClients, BuildConfig, BuildError, CheckpointStore};
use crate::ger::{CorrectorFactory, GerError, GerOutput};
use crate::metrics::{self, NormPolicy, Unit};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("outputs do not align with the eval set: {0}")]
    Alignment(String),
    #[error("sweep values must be non-empty and strictly increasing")]
    BadSweepValues,
    #[error(transparent)]
    Ger(#[from] GerError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Which error rate a report row carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ErrorUnit {
    Wer,
    Cer,
}

impl ErrorUnit {
    pub fn for_policy(policy: &NormPolicy) -> Self {
        match policy.unit {
            Unit::Word => ErrorUnit::Wer,
            Unit::Char => ErrorUnit::Cer,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorUnit::Wer => "WER",
            ErrorUnit::Cer => "CER",
        }
    }
}

/// One result row. Rates are stored as fractions at full precision and
/// formatted to one decimal percent for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_name: String,
    pub condition: String,
    pub unit: ErrorUnit,
    pub error_rate: f64,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub n_utts: usize,
}

fn pct(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

fn pct_opt(v: Option<f64>) -> String {
    v.map(pct).unwrap_or_else(|| "-".into())
}

impl EvalReport {
    /// The "error / recall / precision" table cell, e.g. "2.5 / 94.2 / 96.4".
    pub fn cell(&self) -> String {
        format!(
            "{} / {} / {}",
            pct(self.error_rate),
            pct_opt(self.recall),
            pct_opt(self.precision)
        )
    }
}

/// Score a finished run: pooled corpus error rate (total edit distance over
/// total reference length, not a mean of per-utterance rates) plus
/// rare-word recall/precision/F1.
pub fn summarize(
    outputs: &[GerOutput],
    eval_set: &EvalSet,
    rare_list: &RareWordList,
    policy: &NormPolicy,
    dataset_name: impl Into<String>,
    condition: impl Into<String>,
) -> Result<EvalReport, ReportError> {
    let by_id: BTreeMap<&str, &GerOutput> =
        outputs.iter().map(|o| (o.utterance_id.as_str(), o)).collect();
    if by_id.len() != outputs.len() {
        return Err(ReportError::Alignment("duplicate utterance ids in outputs".into()));
    }
    if outputs.len() != eval_set.len() {
        return Err(ReportError::Alignment(format!(
            "{} outputs for {} utterances",
            outputs.len(),
            eval_set.len()
        )));
    }

    let mut total_distance = 0usize;
    let mut total_ref_len = 0usize;
    let mut pairs = Vec::with_capacity(eval_set.len());
    for utterance in &eval_set.utterances {
        let output = by_id.get(utterance.id.as_str()).ok_or_else(|| {
            ReportError::Alignment(format!("no output for utterance `{}`", utterance.id))
        })?;
        let r = metrics::normalize(&utterance.reference, policy);
        let h = metrics::normalize(&output.corrected, policy);
        total_distance += metrics::align(&r, &h).distance;
        total_ref_len += r.len();
        pairs.push((utterance.reference.clone(), output.corrected.clone()));
    }
    let error_rate = total_distance as f64 / total_ref_len.max(1) as f64;
    let scores = metrics::rare_word_scores(&pairs, rare_list, policy);

    Ok(EvalReport {
        dataset_name: dataset_name.into(),
        condition: condition.into(),
        unit: ErrorUnit::for_policy(policy),
        error_rate,
        recall: scores.recall,
        precision: scores.precision,
        f1: scores.f1,
        n_utts: eval_set.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Transcripts,
    Speakers,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "transcripts" | "t" => Ok(SweepAxis::Transcripts),
            "speakers" | "s" => Ok(SweepAxis::Speakers),
            other => Err(format!("unknown sweep axis `{other}` (expected transcripts or speakers)")),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::Transcripts => "transcripts",
            SweepAxis::Speakers => "speakers",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: u32,
    pub f1: f64,
}

/// F1 over one swept axis, values strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

/// Everything a sweep point needs: training words, base build config,
/// clients, a fixed eval task, and a corrector factory to train per point.
pub struct SweepContext<'a> {
    pub words: &'a RareWordList,
    pub base_cfg: &'a BuildConfig,
    pub clients: &'a BuildClients,
    pub eval_set: &'a EvalSet,
    pub eval_hyps: &'a BTreeMap<String, HypothesisSet>,
    pub rare_list: &'a RareWordList,
    pub policy: &'a NormPolicy,
    pub factory: &'a dyn CorrectorFactory,
    pub checkpoint_root: Option<&'a Path>,
}

/// For each axis value: build synthetic pairs, train the pluggable
/// corrector, correct the fixed eval task, and record rare-word F1.
pub fn run_sweep(
    ctx: &SweepContext<'_>,
    axis: SweepAxis,
    values: &[u32],
    fixed_other: u32,
) -> Result<SweepGrid, ReportError> {
    if values.is_empty() || values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ReportError::BadSweepValues);
    }
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = ctx.base_cfg.clone();
        match axis {
            SweepAxis::Transcripts => {
                cfg.transcripts_per_word = value;
                cfg.speakers_per_transcript = fixed_other;
            }
            SweepAxis::Speakers => {
                cfg.speakers_per_transcript = value;
                cfg.transcripts_per_word = fixed_other;
            }
        }
        let ckpt = ctx
            .checkpoint_root
            .map(|root| CheckpointStore::new(root, cfg.fingerprint(ctx.words)));
        let (examples, _report) =
            databuild::generate_pairs(ctx.words, &cfg, ctx.clients, ckpt.as_ref())?;
        let corrector = ctx.factory.build(&examples)?;
        let outputs = crate::ger::run_eval_with(
            corrector.as_ref(),
            ctx.eval_set,
            ctx.eval_hyps,
            ctx.clients.concurrency,
            None,
        )?;
        let report = summarize(
            &outputs,
            ctx.eval_set,
            ctx.rare_list,
            ctx.policy,
            "sweep",
            corrector.name(),
        )?;
        points.push(SweepPoint {
            value,
            f1: report.f1.unwrap_or(0.0),
        });
    }
    Ok(SweepGrid { axis, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Markdown,
    Csv,
    Json,
}

impl std::str::FromStr for EmitFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(EmitFormat::Markdown),
            "csv" => Ok(EmitFormat::Csv),
            "json" => Ok(EmitFormat::Json),
            other => Err(format!("unknown format `{other}` (expected markdown, csv, or json)")),
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Render a report row. Byte-stable for a given report.
pub fn render_report(report: &EvalReport, format: EmitFormat) -> String {
    match format {
        EmitFormat::Markdown => {
            let header = format!("{} / recall / precision", report.unit.name());
            format!(
                "| dataset | method | # utts. | {header} | F1 |\n|---|---|---|---|---|\n| {} | {} | {} | {} | {} |\n",
                report.dataset_name,
                report.condition,
                report.n_utts,
                report.cell(),
                pct_opt(report.f1),
            )
        }
        EmitFormat::Csv => {
            format!(
                "dataset,condition,unit,n_utts,error_rate,recall,precision,f1\n{},{},{},{},{},{},{},{}\n",
                report.dataset_name,
                report.condition,
                report.unit.name(),
                report.n_utts,
                report.error_rate,
                fmt_opt(report.recall),
                fmt_opt(report.precision),
                fmt_opt(report.f1),
            )
        }
        EmitFormat::Json => {
            let mut text = serde_json::to_string_pretty(report).expect("report serializes");
            text.push('\n');
            text
        }
    }
}

/// Render a sweep grid. CSV uses the `value,f1` header.
pub fn render_grid(grid: &SweepGrid, format: EmitFormat) -> String {
    match format {
        EmitFormat::Markdown => {
            let mut out = format!("| {} | F1 |\n|---|---|\n", grid.axis);
            for p in &grid.points {
                out.push_str(&format!("| {} | {} |\n", p.value, pct(p.f1)));
            }
            out
        }
        EmitFormat::Csv => {
            let mut out = String::from("value,f1\n");
            for p in &grid.points {
                out.push_str(&format!("{},{}\n", p.value, p.f1));
            }
            out
        }
        EmitFormat::Json => {
            let mut text = serde_json::to_string_pretty(grid).expect("grid serializes");
            text.push('\n');
            text
        }
    }
}

/// Write a rendered report or grid to a file.
pub fn emit(content: &str, path: &Path) -> Result<(), ReportError> {
    crate::util::atomic_write(path, content.as_bytes()).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EvalUtterance, Hypothesis};
    use crate::ger::{Corrector, IdentityCorrector};
    use crate::lang::Language;

    fn eval_set(rows: &[(&str, &str)]) -> EvalSet {
        EvalSet::new(
            rows.iter()
                .map(|(id, reference)| EvalUtterance {
                    id: id.to_string(),
                    reference: reference.to_string(),
                    language: Language::En,
                    audio_ref: None,
                })
                .collect(),
        )
        .unwrap()
    }

    fn outputs_for(rows: &[(&str, &str)]) -> Vec<GerOutput> {
        rows.iter()
            .map(|(id, text)| GerOutput {
                utterance_id: id.to_string(),
                corrected: text.to_string(),
                condition: "test".into(),
                raw_response: text.to_string(),
                latency_ms: 0.0,
                fallback: false,
            })
            .collect()
    }

    fn rare(words: &[&str]) -> RareWordList {
        RareWordList::parse(&words.join("\n"), Language::En, "t").unwrap()
    }

    #[test]
    fn oracle_outputs_score_perfectly() {
        let eval = eval_set(&[("a", "the anemia persists"), ("b", "ferritin was stable")]);
        let outputs = outputs_for(&[("a", "the anemia persists"), ("b", "ferritin was stable")]);
        let policy = NormPolicy::en_wer();
        let report = summarize(&outputs, &eval, &rare(&["anemia", "ferritin"]), &policy, "toy", "oracle").unwrap();
        assert_eq!(report.error_rate, 0.0);
        assert_eq!(report.recall, Some(1.0));
        assert_eq!(report.precision, Some(1.0));
        assert_eq!(report.cell(), "0.0 / 100.0 / 100.0");
    }

    #[test]
    fn pooled_rate_differs_from_mean_of_rates() {
        // utt1: 1 error / 1 token (rate 1.0); utt2: 0 errors / 9 tokens.
        // Pooled: 1/10 = 0.1. Mean of rates would be 0.5.
        let eval = eval_set(&[("a", "one"), ("b", "w1 w2 w3 w4 w5 w6 w7 w8 w9")]);
        let outputs = outputs_for(&[("a", "two"), ("b", "w1 w2 w3 w4 w5 w6 w7 w8 w9")]);
        let policy = NormPolicy::en_wer();
        let report = summarize(&outputs, &eval, &rare(&["zzz"]), &policy, "toy", "x").unwrap();
        assert_eq!(report.error_rate, 0.1);
        assert_eq!(report.recall, None);
    }

    #[test]
    fn hand_computed_fixture_row() {
        // 3 utterances, 12 reference tokens total, 2 errors -> 2/12.
        // anemia: 2 ref occurrences, 1 correct; 1 hyp occurrence.
        let eval = eval_set(&[
            ("a", "the anemia persists today"),
            ("b", "severe anemia was found"),
            ("c", "all clear this time"),
        ]);
        let outputs = outputs_for(&[
            ("a", "the anemia persists today"),
            ("b", "severe enemia was found"),
            ("c", "all clear this day"),
        ]);
        let policy = NormPolicy::en_wer();
        let report = summarize(&outputs, &eval, &rare(&["anemia"]), &policy, "toy", "x").unwrap();
        assert!((report.error_rate - 2.0 / 12.0).abs() < 1e-12);
        assert_eq!(report.recall, Some(0.5));
        assert_eq!(report.precision, Some(1.0));
        let f1 = report.f1.unwrap();
        assert!((f1 - (2.0 * 0.5 * 1.0 / 1.5)).abs() < 1e-12);
        assert_eq!(report.cell(), "16.7 / 50.0 / 100.0");
    }

    #[test]
    fn id_mismatch_is_an_alignment_error() {
        let eval = eval_set(&[("a", "x"), ("b", "y")]);
        let outputs = outputs_for(&[("a", "x"), ("zzz", "y")]);
        let policy = NormPolicy::en_wer();
        assert!(matches!(
            summarize(&outputs, &eval, &rare(&["w"]), &policy, "t", "c"),
            Err(ReportError::Alignment(_))
        ));
    }

    #[test]
    fn identity_outputs_reproduce_baseline_scores() {
        let eval = eval_set(&[("a", "the anemia persists"), ("b", "it was fine")]);
        let mut hyps = BTreeMap::new();
        hyps.insert(
            "a".to_string(),
            HypothesisSet::new(
                "a",
                vec![Hypothesis { text: "the enemia persists".into(), score: None }],
            )
            .unwrap(),
        );
        hyps.insert(
            "b".to_string(),
            HypothesisSet::new("b", vec![Hypothesis { text: "it was fine".into(), score: None }])
                .unwrap(),
        );
        let outputs =
            crate::ger::run_eval_with(&IdentityCorrector, &eval, &hyps, 2, None).unwrap();
        let policy = NormPolicy::en_wer();
        let via_corrector =
            summarize(&outputs, &eval, &rare(&["anemia"]), &policy, "t", "identity").unwrap();

        // Direct scoring of the raw 1-bests.
        let direct = outputs_for(&[("a", "the enemia persists"), ("b", "it was fine")]);
        let direct_report =
            summarize(&direct, &eval, &rare(&["anemia"]), &policy, "t", "direct").unwrap();
        assert_eq!(via_corrector.error_rate, direct_report.error_rate);
        assert_eq!(via_corrector.recall, direct_report.recall);
        let _ = IdentityCorrector.name();
    }

    #[test]
    fn render_formats_are_stable_and_round_trip() {
        let report = EvalReport {
            dataset_name: "LibriSpeech".into(),
            condition: "nbest+lsp".into(),
            unit: ErrorUnit::Wer,
            error_rate: 0.025,
            recall: Some(0.942),
            precision: Some(0.964),
            f1: Some(0.9528690338),
            n_utts: 2620,
        };
        // Full-precision fractions must survive emit -> parse exactly.
        let nasty = EvalReport {
            error_rate: 24.0 / 156.0,
            recall: Some(11.0 / 17.0),
            precision: Some(11.0 / 12.0),
            f1: Some(2.0 * (11.0 / 17.0) * (11.0 / 12.0) / (11.0 / 17.0 + 11.0 / 12.0)),
            ..report.clone()
        };
        let back: EvalReport =
            serde_json::from_str(&render_report(&nasty, EmitFormat::Json)).unwrap();
        assert_eq!(back, nasty);
        assert_eq!(report.cell(), "2.5 / 94.2 / 96.4");
        let md = render_report(&report, EmitFormat::Markdown);
        assert!(md.contains("| 2.5 / 94.2 / 96.4 |"), "markdown was: {md}");
        assert_eq!(md, render_report(&report, EmitFormat::Markdown));

        let json = render_report(&report, EmitFormat::Json);
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);

        let csv = render_report(&report, EmitFormat::Csv);
        let line = csv.lines().nth(1).unwrap();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[4].parse::<f64>().unwrap(), 0.025);
        assert_eq!(fields[7].parse::<f64>().unwrap(), 0.9528690338);
    }

    #[test]
    fn grid_csv_shape() {
        let grid = SweepGrid {
            axis: SweepAxis::Transcripts,
            points: vec![
                SweepPoint { value: 1, f1: 0.5 },
                SweepPoint { value: 2, f1: 0.75 },
                SweepPoint { value: 4, f1: 0.75 },
            ],
        };
        let csv = render_grid(&grid, EmitFormat::Csv);
        assert_eq!(csv, "value,f1\n1,0.5\n2,0.75\n4,0.75\n");
        let json = render_grid(&grid, EmitFormat::Json);
        let back: SweepGrid = serde_json::from_str(&json).unwrap();
        assert_eq!(back, grid);
    }
}
