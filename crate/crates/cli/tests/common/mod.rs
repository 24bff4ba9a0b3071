//! Shared toy fixtures for CLI and acceptance tests.
#![allow(dead_code)] // each test target uses a different subset

use std::path::{Path, PathBuf};
use std::process::Output;

use gerkit::corpus::{EvalSet, EvalUtterance, Hypothesis, HypothesisSet};
use gerkit::lang::Language;
use gerkit::services::{Confusable, ConfusionModel};

pub const RARE_WORDS: &[&str] = &["anemia", "ferritin", "thorax", "ataxia", "sepsis", "edema"];

pub const VARIANTS: &[(&str, [&str; 3])] = &[
    ("anemia", ["anemea", "enemia", "anima"]),
    ("ferritin", ["feritin", "ferretin", "varitin"]),
    ("thorax", ["thorex", "torax", "thorix"]),
    ("ataxia", ["ataxya", "attaxia", "ateksia"]),
    ("sepsis", ["sepsys", "cepsis", "sepsiss"]),
    ("edema", ["edima", "idema", "adema"]),
];

/// Channel that rewrites every rare-word occurrence into one of its three
/// variants.
pub fn toy_model(seed: u64) -> ConfusionModel {
    let mut model = ConfusionModel {
        p_sub: 1.0,
        seed,
        ..ConfusionModel::default()
    };
    for (word, variants) in VARIANTS {
        model.sub_table.insert(
            word.to_string(),
            variants
                .iter()
                .map(|v| Confusable { token: v.to_string(), weight: 1.0 })
                .collect(),
        );
    }
    model
}

/// 24 eval utterances (4 frames x 6 rare words), distinct from the simulated
/// chat's transcript templates.
pub fn toy_eval_set() -> EvalSet {
    let frames = [
        "the scan confirmed {w} near the margin",
        "records show {w} was treated in march",
        "{w} appeared twice in the summary",
        "her chart lists {w} as resolved",
    ];
    let mut utterances = Vec::new();
    let mut i = 0;
    for word in RARE_WORDS {
        for frame in &frames {
            utterances.push(EvalUtterance {
                id: format!("e{i:02}"),
                reference: frame.replace("{w}", word),
                language: Language::En,
                audio_ref: None,
            });
            i += 1;
        }
    }
    EvalSet::new(utterances).unwrap()
}

/// Hypotheses corrupted by the toy channel (1 hypothesis per utterance).
pub fn toy_hypotheses(eval: &EvalSet, model: &ConfusionModel) -> Vec<HypothesisSet> {
    eval.utterances
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let tokens: Vec<String> =
                u.reference.split_whitespace().map(str::to_string).collect();
            let corrupted = model.corrupt_tokens(&tokens, 0x00EE_0000 + i as u64);
            HypothesisSet {
                utterance_id: u.id.clone(),
                hypotheses: vec![Hypothesis { text: corrupted.join(" "), score: None }],
            }
        })
        .collect()
}

pub fn write_words_file(dir: &Path) -> PathBuf {
    let path = dir.join("words.txt");
    std::fs::write(&path, format!("{}\n", RARE_WORDS.join("\n"))).unwrap();
    path
}

pub fn write_eval_file(dir: &Path, eval: &EvalSet) -> PathBuf {
    let path = dir.join("eval.jsonl");
    eval.save(&path).unwrap();
    path
}

pub fn write_hyps_file(dir: &Path, hyps: &[HypothesisSet]) -> PathBuf {
    let path = dir.join("hyps.jsonl");
    gerkit::util::write_jsonl(&path, hyps).unwrap();
    path
}

/// Config with the toy confusion channel (p_sub = 1 on the six rare words).
pub fn write_toy_config(dir: &Path, seed: u64) -> PathBuf {
    let mut text = format!(
        "[run]\nbackend = \"simulated\"\nseed = {seed}\naudit = false\n\n[sim]\np_sub = 1.0\n"
    );
    for (word, variants) in VARIANTS {
        let list = variants
            .iter()
            .map(|v| format!("\"{v}\""))
            .collect::<Vec<_>>()
            .join(", ");
        text.push_str(&format!("\n[[sim.confusion]]\ntoken = \"{word}\"\nvariants = [{list}]\n"));
    }
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

/// Run the gerkit binary with the given args; panics only on spawn failure.
pub fn gerkit(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_gerkit"))
        .args(args)
        .output()
        .expect("gerkit binary runs")
}

pub fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

pub fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

pub fn assert_success(output: &Output, what: &str) {
    assert!(
        output.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        stdout_of(output),
        stderr_of(output)
    );
}

/// Extract "(service calls: N)" from a command summary line.
pub fn service_calls(stdout: &str) -> usize {
    let marker = "service calls: ";
    let start = stdout.rfind(marker).expect("summary line present") + marker.len();
    stdout[start..]
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect::<String>()
        .parse()
        .expect("service call count")
}
