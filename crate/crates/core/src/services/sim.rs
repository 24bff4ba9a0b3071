//! Deterministic simulated backends: a templated chat LLM, a pseudo-audio
//! TTS, and a noisy-channel ASR driven by a phonetic confusion model.
//!
//! These stand in for the remote services so the whole pipeline runs offline.
//! Outputs are pure functions of (request content, configured seed); nothing
//! depends on wall clock or scheduling. The simulated chat backend recognizes
//! the prompt families of the bundled prompt catalog.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AsrBackend, ChatBackend, ChatExchange, ServiceError, TtsBackend, TtsJob};
use crate::corpus::Hypothesis;
use crate::lang::Language;
use crate::metrics;
use crate::phonetics::G2pLexicon;
use crate::textnorm;
use crate::util::{fnv1a, mix64};

fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 / (1u64 << 53) as f64
}

/// One substitution candidate for a token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusable {
    pub token: String,
    pub weight: f64,
}

/// Token-level noisy channel: per-position substitution into phonetically
/// confusable tokens, plus optional deletions and insertions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionModel {
    pub sub_table: BTreeMap<String, Vec<Confusable>>,
    pub p_sub: f64,
    pub p_del: f64,
    pub p_ins: f64,
    pub seed: u64,
}

impl Default for ConfusionModel {
    fn default() -> Self {
        ConfusionModel {
            sub_table: BTreeMap::new(),
            p_sub: 0.0,
            p_del: 0.0,
            p_ins: 0.0,
            seed: 0,
        }
    }
}

impl ConfusionModel {
    pub fn validate(&self) -> Result<(), ServiceError> {
        for (token, confusables) in &self.sub_table {
            if confusables.iter().any(|c| c.weight <= 0.0) {
                return Err(ServiceError::InvalidModel(format!(
                    "non-positive confusable weight for {token:?}"
                )));
            }
        }
        let total = self.p_sub + self.p_del + self.p_ins;
        if !(0.0..=1.0).contains(&self.p_sub)
            || !(0.0..=1.0).contains(&self.p_del)
            || !(0.0..=1.0).contains(&self.p_ins)
            || total > 1.0
        {
            return Err(ServiceError::InvalidModel(format!(
                "error probabilities must be in [0,1] and sum to <= 1 (got {total})"
            )));
        }
        Ok(())
    }

    fn vocabulary(&self) -> Vec<&str> {
        let mut vocab: Vec<&str> = self.sub_table.keys().map(String::as_str).collect();
        for confusables in self.sub_table.values() {
            vocab.extend(confusables.iter().map(|c| c.token.as_str()));
        }
        vocab.sort_unstable();
        vocab.dedup();
        vocab
    }

    fn lookup(&self, core: &str) -> Option<&[Confusable]> {
        self.sub_table.get(core).map(Vec::as_slice)
    }

    /// Corrupt a token sequence. Pure in (self, tokens, draw): randomness is
    /// derived from content hashes, never from global state.
    pub fn corrupt_tokens(&self, tokens: &[String], draw: u64) -> Vec<String> {
        let vocab = self.vocabulary();
        let mut out = Vec::with_capacity(tokens.len());
        for (pos, token) in tokens.iter().enumerate() {
            let (prefix, core, suffix) = split_token(token);
            let key = textnorm::casefold(core);
            let h = mix64(&[self.seed, draw, pos as u64, fnv1a(key.as_bytes())]);
            let r = unit_f64(h);
            if r < self.p_sub {
                if let Some(confusables) = self.lookup(&key) {
                    let pick = weighted_pick(confusables, unit_f64(mix64(&[h, 0xC0FF_EE00])));
                    out.push(format!("{prefix}{}{suffix}", pick.token));
                    continue;
                }
                out.push(token.clone());
            } else if r < self.p_sub + self.p_del {
                // dropped token
            } else if r < self.p_sub + self.p_del + self.p_ins {
                out.push(token.clone());
                let extra = if vocab.is_empty() {
                    core.to_string()
                } else {
                    vocab[(mix64(&[h, 0x1A5E_0001]) % vocab.len() as u64) as usize].to_string()
                };
                if !extra.is_empty() {
                    out.push(extra);
                }
            } else {
                out.push(token.clone());
            }
        }
        out
    }
}

fn split_token(token: &str) -> (&str, &str, &str) {
    let core_start = token
        .char_indices()
        .find(|(_, c)| !textnorm::is_punct(*c))
        .map(|(i, _)| i)
        .unwrap_or(token.len());
    let core_end = token
        .char_indices()
        .rev()
        .find(|(_, c)| !textnorm::is_punct(*c))
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(core_start);
    (
        &token[..core_start],
        &token[core_start..core_end],
        &token[core_end..],
    )
}

fn weighted_pick(confusables: &[Confusable], r: f64) -> &Confusable {
    let total: f64 = confusables.iter().map(|c| c.weight).sum();
    let mut remaining = r * total;
    for c in confusables {
        remaining -= c.weight;
        if remaining <= 0.0 {
            return c;
        }
    }
    confusables.last().expect("non-empty confusable list")
}

/// Build a confusion model from a pronunciation lexicon: word pairs whose
/// phoneme sequences are within `phonetic_distance_threshold` edits become
/// mutual confusables with weight 1/(1+distance). Error probabilities start
/// at zero; set them on the returned model.
pub fn build_confusion_model(lexicon: &G2pLexicon, phonetic_distance_threshold: usize) -> ConfusionModel {
    let words: Vec<(&str, Vec<String>)> = lexicon
        .entries()
        .map(|(w, phones)| (w, phones.split_whitespace().map(str::to_string).collect()))
        .collect();
    let mut sub_table: BTreeMap<String, Vec<Confusable>> = BTreeMap::new();
    for i in 0..words.len() {
        for j in (i + 1)..words.len() {
            let d = metrics::align(&words[i].1, &words[j].1).distance;
            if d <= phonetic_distance_threshold {
                let weight = 1.0 / (1.0 + d as f64);
                sub_table.entry(words[i].0.to_string()).or_default().push(Confusable {
                    token: words[j].0.to_string(),
                    weight,
                });
                sub_table.entry(words[j].0.to_string()).or_default().push(Confusable {
                    token: words[i].0.to_string(),
                    weight,
                });
            }
        }
    }
    ConfusionModel {
        sub_table,
        ..ConfusionModel::default()
    }
}

/// Pseudo-audio payload written by the simulated TTS and decoded by the
/// simulated ASR.
#[derive(Debug, Serialize, Deserialize)]
struct PseudoAudio {
    kind: String,
    text: String,
    speaker_id: u32,
    voice_id: String,
    language: Language,
}

const PSEUDO_AUDIO_KIND: &str = "gerkit-sim-audio";

/// Simulated TTS: emits a deterministic pseudo-audio blob embedding the
/// request, so identical jobs hash to identical locators.
pub struct SimTtsBackend;

impl TtsBackend for SimTtsBackend {
    fn synthesize(&self, job: &TtsJob) -> Result<Vec<u8>, ServiceError> {
        let payload = PseudoAudio {
            kind: PSEUDO_AUDIO_KIND.to_string(),
            text: job.text.clone(),
            speaker_id: job.speaker_id,
            voice_id: job.voice_id.clone(),
            language: job.language,
        };
        Ok(serde_json::to_vec(&payload).expect("pseudo audio serializes"))
    }

    fn name(&self) -> &str {
        "sim-tts"
    }
}

/// Simulated ASR: decodes pseudo-audio and pushes the text through the
/// confusion model `n` times with distinct seeds. Hypotheses are ordered by
/// edit distance to the canonical (first) draw, ties by draw index.
pub struct SimAsrBackend {
    model: ConfusionModel,
}

impl SimAsrBackend {
    pub fn new(model: ConfusionModel) -> Result<Self, ServiceError> {
        model.validate()?;
        Ok(SimAsrBackend { model })
    }

    pub fn model(&self) -> &ConfusionModel {
        &self.model
    }
}

fn sim_tokens(text: &str, language: Language) -> Vec<String> {
    match language {
        Language::En => text.split_whitespace().map(str::to_string).collect(),
        Language::Ja => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| c.to_string())
            .collect(),
    }
}

fn sim_join(tokens: &[String], language: Language) -> String {
    match language {
        Language::En => tokens.join(" "),
        Language::Ja => tokens.concat(),
    }
}

impl AsrBackend for SimAsrBackend {
    fn transcribe(&self, audio: &[u8], n: usize) -> Result<Vec<Hypothesis>, ServiceError> {
        let payload: PseudoAudio = serde_json::from_slice(audio).map_err(|_| {
            ServiceError::Protocol("simulated ASR requires simulated audio blobs".into())
        })?;
        if payload.kind != PSEUDO_AUDIO_KIND {
            return Err(ServiceError::Protocol(
                "simulated ASR requires simulated audio blobs".into(),
            ));
        }
        let tokens = sim_tokens(&payload.text, payload.language);
        let base = mix64(&[
            self.model.seed,
            fnv1a(payload.text.as_bytes()),
            payload.speaker_id as u64,
        ]);
        let draws: Vec<Vec<String>> = (0..n)
            .map(|k| self.model.corrupt_tokens(&tokens, mix64(&[base, k as u64])))
            .collect();
        let canonical = &draws[0];
        let mut ranked: Vec<(usize, usize)> = draws
            .iter()
            .enumerate()
            .map(|(k, d)| (metrics::align(canonical, d).distance, k))
            .collect();
        ranked.sort();
        Ok(ranked
            .into_iter()
            .map(|(_, k)| Hypothesis {
                text: sim_join(&draws[k], payload.language),
                score: None,
            })
            .collect())
    }

    fn name(&self) -> &str {
        "sim-asr"
    }
}

const EN_SENTENCE_POOL: &[&str] = &[
    "The report on {w} was reviewed this morning.",
    "She asked whether {w} could explain the findings.",
    "Our team discussed {w} during the weekly meeting.",
    "A short note about {w} appeared in the records.",
    "He mentioned {w} while summarizing the case.",
    "The committee flagged {w} for further review.",
    "New guidance on {w} was published last week.",
    "They compared {w} with the earlier results.",
    "An example involving {w} was added to the handbook.",
    "Nobody expected {w} to come up again so soon.",
];

const JA_SENTENCE_POOL: &[&str] = &[
    "{w}について担当者が説明した。",
    "会議では{w}の扱いが議論になった。",
    "記録には{w}に関する記述が残っている。",
    "{w}の結果は先週共有された。",
    "彼は{w}を例に挙げて説明した。",
    "資料の末尾に{w}の注記がある。",
    "今回の調査で{w}が再び確認された。",
    "{w}をめぐる判断は保留された。",
];

/// Simulated chat LLM. Understands the prompt families of the bundled
/// catalog (transcript generation, simplified-pronunciation and IPA
/// conversion, rare-word extraction, correction) and answers each one
/// deterministically.
pub struct SimChatBackend {
    seed: u64,
}

impl SimChatBackend {
    pub fn new(seed: u64) -> Self {
        SimChatBackend { seed }
    }

    fn transcripts(&self, word: &str, count: usize, language: Language) -> String {
        let pool = match language {
            Language::En => EN_SENTENCE_POOL,
            Language::Ja => JA_SENTENCE_POOL,
        };
        let start = (mix64(&[self.seed, fnv1a(word.as_bytes())]) % pool.len() as u64) as usize;
        let mut lines = Vec::with_capacity(count);
        for i in 0..count {
            let mut sentence = pool[(start + i) % pool.len()].replace("{w}", word);
            let round = i / pool.len();
            if round > 0 {
                // keep cycled sentences distinct
                match language {
                    Language::En => sentence.push_str(&format!(" Follow-up {round}.")),
                    Language::Ja => sentence.push_str(&format!("補足{round}。")),
                }
            }
            lines.push(format!("{}. {sentence}", i + 1));
        }
        lines.join("\n")
    }
}

/// Heuristic "simplified pronunciation" used by the simulated LSP route.
fn sim_simplify_en(text: &str) -> String {
    text.split_whitespace()
        .map(|token| {
            let core = textnorm::casefold(textnorm::strip_outer_punct(token));
            match core.as_str() {
                "the" => "thuh".to_string(),
                "a" => "uh".to_string(),
                "to" => "tuh".to_string(),
                "is" => "iz".to_string(),
                "of" => "uhv".to_string(),
                "and" => "und".to_string(),
                _ => core
                    .replace("tion", "shun")
                    .replace("ough", "oh")
                    .replace("igh", "eye")
                    .replace("ph", "f"),
            }
        })
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn extract_complex_words(corpus: &str) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for token in corpus.split_whitespace() {
        let core = textnorm::casefold(textnorm::strip_outer_punct(token));
        let is_complex_en = core.chars().all(|c| c.is_ascii_alphanumeric()) && core.len() >= 8;
        let is_complex_ja = !core.is_ascii() && core.chars().count() >= 4;
        if (is_complex_en || is_complex_ja) && seen.insert(core.clone()) {
            out.push(core);
            if out.len() >= 64 {
                break;
            }
        }
    }
    out
}

fn first_numbered_item(text: &str) -> Option<&str> {
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("1.") {
            return Some(rest.trim());
        }
    }
    text.lines().map(str::trim).find(|l| !l.is_empty())
}

fn text_after_blank_line(prompt: &str) -> &str {
    match prompt.split_once("\n\n") {
        Some((_, rest)) => rest.trim(),
        None => prompt.trim(),
    }
}

impl ChatBackend for SimChatBackend {
    fn complete(&self, exchange: &ChatExchange) -> Result<String, ServiceError> {
        let user = exchange
            .last_user_content()
            .ok_or_else(|| ServiceError::InvalidJob("exchange has no user message".into()))?;

        // Transcript generation (EN).
        if user.starts_with("Provide ") && user.contains("the term ") {
            let count = if user.starts_with("Provide one ") {
                1
            } else {
                user.trim_start_matches("Provide ")
                    .split_whitespace()
                    .next()
                    .and_then(|n| n.parse::<usize>().ok())
                    .unwrap_or(1)
            };
            let after = user.split("the term ").nth(1).unwrap_or_default();
            let word = after
                .split(", which")
                .next()
                .unwrap_or_default()
                .split('.')
                .next()
                .unwrap_or_default()
                .trim();
            return Ok(self.transcripts(word, count, Language::En));
        }
        // Transcript generation (JA).
        if user.contains("という語を含む") {
            let word = user
                .split('「')
                .nth(1)
                .and_then(|rest| rest.split('」').next())
                .unwrap_or_default();
            let count = if user.contains("1つ作成") {
                1
            } else {
                user.split("日本語の文を")
                    .nth(1)
                    .and_then(|rest| rest.split('個').next())
                    .and_then(|n| n.trim().parse::<usize>().ok())
                    .unwrap_or(1)
            };
            return Ok(self.transcripts(word, count, Language::Ja));
        }
        // Simplified pronunciation.
        if user.starts_with("Convert the English text to simplified pronunciation.") {
            return Ok(sim_simplify_en(text_after_blank_line(user)));
        }
        if user.starts_with("Convert the Japanese text to simplified Kana-like pronunciation.") {
            return Ok(text_after_blank_line(user).to_string());
        }
        // LLM-backed Japanese IPA.
        if user.starts_with("Convert the Japanese text to IPA") {
            return Ok(format!("/{}/", text_after_blank_line(user)));
        }
        // Rare-word extraction.
        if user.starts_with("Extract highly complex words")
            || user.starts_with("認識が難しい複雑な語")
        {
            return Ok(extract_complex_words(text_after_blank_line(user)).join("\n"));
        }
        // Correction: echo the best candidate.
        let is_correction = exchange.messages.iter().any(|m| {
            m.role == super::Role::System
                && (m.content.starts_with("You are a strict transcription corrector")
                    || m.content.starts_with("あなたは厳密な書き起こし校正者です"))
        });
        if is_correction {
            return Ok(first_numbered_item(user).unwrap_or_default().to_string());
        }
        // Unknown prompt family: deterministic echo.
        Ok(first_numbered_item(user).unwrap_or_default().to_string())
    }

    fn name(&self) -> &str {
        "sim-chat"
    }
}
