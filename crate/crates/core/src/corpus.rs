//! Data model and I/O for rare-word lists, evaluation sets, N-best
//! hypotheses, and error-pair dataset records, plus LLM-assisted rare-word
//! list construction.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lang::Language;
use crate::metrics::{self, NormPolicy};
use crate::phonetics::PhoneticText;
use crate::prompts::{self, PromptCatalog};
use crate::services::{ChatClient, ServiceError};
use crate::util::{self, JsonlError};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("rare-word list is empty")]
    EmptyList,
    #[error("file {path} is not valid UTF-8")]
    Decode { path: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("duplicate utterance id `{0}`")]
    DuplicateId(String),
    #[error("utterance `{0}` has an empty reference")]
    EmptyReference(String),
    #[error("hypothesis set for `{0}` is empty")]
    EmptyHypotheses(String),
    #[error("target coverage must be in (0, 100], got {0}")]
    InvalidTarget(f64),
    #[error("corpus text is empty")]
    EmptyCorpus,
    #[error("could not parse any rare words from the LLM response: {raw:?}")]
    LlmParse { raw: String },
    #[error(
        "coverage cannot be brought below {target}% (best achievable with one entry: {best:.3}%)"
    )]
    CoverageInfeasible { target: f64, best: f64 },
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Prompt(#[from] prompts::PromptError),
}

/// One biasing-word entry. The surface is stored in its normalized form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RareWordEntry {
    pub surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_hint: Option<String>,
}

/// An ordered, normalized, de-duplicated list of biasing words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RareWordList {
    pub language: Language,
    pub entries: Vec<RareWordEntry>,
    pub source: String,
}

/// Normalize a rare-word surface for storage and matching: compatibility
/// folding for both languages, plus casefold and outer-punctuation stripping
/// for English. Multi-token surfaces collapse inner whitespace to one space.
pub fn normalize_surface(language: Language, raw: &str) -> String {
    let policy = NormPolicy::for_language(language);
    match language {
        Language::En => metrics::join_tokens(&metrics::normalize(raw, &policy), &policy),
        Language::Ja => {
            let folded = crate::textnorm::compat_fold(raw.trim());
            folded.split_whitespace().collect::<Vec<_>>().concat()
        }
    }
}

impl RareWordList {
    /// Build from raw (surface, hint) pairs: normalizes, drops empties,
    /// de-duplicates keeping first-seen order. Duplicates are logged, not
    /// errors.
    pub fn from_raw_entries<I>(
        language: Language,
        raw: I,
        source: impl Into<String>,
    ) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (String, Option<String>)>,
    {
        let mut seen = BTreeSet::new();
        let mut entries = Vec::new();
        for (surface, domain_hint) in raw {
            let normalized = normalize_surface(language, &surface);
            if normalized.is_empty() {
                continue;
            }
            if !seen.insert(normalized.clone()) {
                log::warn!("duplicate rare word after normalization: {normalized:?}");
                continue;
            }
            entries.push(RareWordEntry {
                surface: normalized,
                domain_hint: domain_hint.filter(|h| !h.trim().is_empty()),
            });
        }
        if entries.is_empty() {
            return Err(CorpusError::EmptyList);
        }
        Ok(RareWordList {
            language,
            entries,
            source: source.into(),
        })
    }

    /// Parse the plain-text list format: one entry per line, optional
    /// tab-separated domain hint.
    pub fn parse(text: &str, language: Language, source: impl Into<String>) -> Result<Self, CorpusError> {
        let raw = text.lines().filter(|l| !l.trim().is_empty()).map(|line| {
            match line.split_once('\t') {
                Some((surface, hint)) => (surface.to_string(), Some(hint.trim().to_string())),
                None => (line.to_string(), None),
            }
        });
        Self::from_raw_entries(language, raw, source)
    }

    pub fn load(path: &Path, language: Language) -> Result<Self, CorpusError> {
        let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let text = String::from_utf8(bytes).map_err(|_| CorpusError::Decode {
            path: path.display().to_string(),
        })?;
        Self::parse(&text, language, path.display().to_string())
    }

    /// Serialize to the plain-text list format (byte-stable).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.surface);
            if let Some(hint) = &e.domain_hint {
                out.push('\t');
                out.push_str(hint);
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        util::atomic_write(path, self.to_text().as_bytes()).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.surface.as_str())
    }
}

/// Load a rare-word list file: UTF-8 text, one entry per line, optional
/// tab-separated domain hint.
pub fn load_rare_words(path: &Path, language: Language) -> Result<RareWordList, CorpusError> {
    RareWordList::load(path, language)
}

/// One evaluation utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalUtterance {
    pub id: String,
    pub reference: String,
    pub language: Language,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_ref: Option<String>,
}

/// An evaluation set with unique utterance ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSet {
    pub utterances: Vec<EvalUtterance>,
}

impl EvalSet {
    pub fn new(utterances: Vec<EvalUtterance>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for u in &utterances {
            if u.reference.trim().is_empty() {
                return Err(CorpusError::EmptyReference(u.id.clone()));
            }
            if !seen.insert(u.id.clone()) {
                return Err(CorpusError::DuplicateId(u.id.clone()));
            }
        }
        Ok(EvalSet { utterances })
    }

    /// Load from JSON-lines with fields {id, reference, language, audio_ref}.
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::new(util::read_jsonl(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        util::write_jsonl(path, &self.utterances)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}

/// One ranked ASR hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Rank-ordered N-best hypotheses for one utterance; rank 1 is the ASR 1-best.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub utterance_id: String,
    pub hypotheses: Vec<Hypothesis>,
}

impl HypothesisSet {
    pub fn new(utterance_id: impl Into<String>, hypotheses: Vec<Hypothesis>) -> Result<Self, CorpusError> {
        let utterance_id = utterance_id.into();
        if hypotheses.is_empty() {
            return Err(CorpusError::EmptyHypotheses(utterance_id));
        }
        Ok(HypothesisSet {
            utterance_id,
            hypotheses,
        })
    }

    pub fn one_best(&self) -> &str {
        &self.hypotheses[0].text
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.hypotheses.iter().map(|h| h.text.as_str())
    }

    /// Copy with at most `n` hypotheses.
    pub fn truncated(&self, n: usize) -> HypothesisSet {
        HypothesisSet {
            utterance_id: self.utterance_id.clone(),
            hypotheses: self.hypotheses.iter().take(n.max(1)).cloned().collect(),
        }
    }
}

/// Load hypothesis sets from JSON-lines keyed by utterance id.
pub fn load_hypotheses(
    path: &Path,
) -> Result<std::collections::BTreeMap<String, HypothesisSet>, CorpusError> {
    let sets: Vec<HypothesisSet> = util::read_jsonl(path)?;
    let mut map = std::collections::BTreeMap::new();
    for set in sets {
        if set.hypotheses.is_empty() {
            return Err(CorpusError::EmptyHypotheses(set.utterance_id));
        }
        if map.insert(set.utterance_id.clone(), set).is_some() {
            return Err(CorpusError::DuplicateId("duplicate hypothesis set".into()));
        }
    }
    Ok(map)
}

/// One fine-tuning unit: a reference transcript paired with erroneous N-best
/// hypotheses and optional phonetic context, plus generation provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPairExample {
    pub reference: String,
    pub nbest: HypothesisSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phonetic: Option<PhoneticText>,
    pub rare_word: String,
    pub transcript_idx: u32,
    pub speaker_id: u32,
}

/// Extract rare words from a corpus with LLM assistance, then trim the list
/// (most frequent first) until coverage over the corpus drops below
/// `target_coverage_pct`.
pub fn extract_rare_words(
    corpus_text: &str,
    language: Language,
    chat: &ChatClient,
    catalog: &PromptCatalog,
    target_coverage_pct: f64,
) -> Result<RareWordList, CorpusError> {
    if corpus_text.trim().is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    if !(target_coverage_pct > 0.0 && target_coverage_pct <= 100.0) {
        return Err(CorpusError::InvalidTarget(target_coverage_pct));
    }

    let prompt = catalog.render_extract_words(language, corpus_text)?;
    let response = chat.chat_user(&prompt, 0.0)?;
    if response.trim().is_empty() {
        return Err(CorpusError::EmptyList);
    }
    let words: Vec<(String, Option<String>)> = response
        .lines()
        .map(prompts::strip_list_marker)
        .filter(|w| !w.is_empty())
        .map(|w| (w.to_string(), None))
        .collect();
    if words.is_empty() {
        return Err(CorpusError::LlmParse { raw: response });
    }
    let mut list = match RareWordList::from_raw_entries(language, words, "llm-extraction") {
        Err(CorpusError::EmptyList) => return Err(CorpusError::LlmParse { raw: response }),
        other => other?,
    };

    let policy = NormPolicy::for_language(language);
    let references: Vec<String> = corpus_text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect();

    loop {
        let coverage = metrics::rare_word_coverage(&references, &list, &policy);
        if coverage < target_coverage_pct {
            return Ok(list);
        }
        if list.entries.len() == 1 {
            return Err(CorpusError::CoverageInfeasible {
                target: target_coverage_pct,
                best: coverage,
            });
        }
        // Drop the most frequent entry; break ties toward earlier entries.
        let norm_refs: Vec<Vec<String>> =
            references.iter().map(|r| metrics::normalize(r, &policy)).collect();
        let mut drop_idx = 0;
        let mut drop_count = 0usize;
        for (idx, entry) in list.entries.iter().enumerate() {
            let term = metrics::normalize(&entry.surface, &policy);
            let count: usize = norm_refs
                .iter()
                .map(|seq| metrics::find_term_occurrences(seq, &term).len())
                .sum();
            if count > drop_count {
                drop_count = count;
                drop_idx = idx;
            }
        }
        let dropped = list.entries.remove(drop_idx);
        log::info!(
            "coverage {coverage:.2}% >= {target_coverage_pct}%: dropped {:?} ({} occurrences)",
            dropped.surface,
            drop_count
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_entries() {
        let list = RareWordList::parse("anemia\nHbA1c\n", Language::En, "t").unwrap();
        assert_eq!(list.entries.len(), 2);
        assert_eq!(list.entries[0].surface, "anemia");
        assert_eq!(list.entries[1].surface, "hba1c");
    }

    #[test]
    fn casefold_dedup_keeps_first() {
        let list = RareWordList::parse("Sun\nsun\n", Language::En, "t").unwrap();
        assert_eq!(list.entries.len(), 1);
        assert_eq!(list.entries[0].surface, "sun");
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(
            RareWordList::parse("", Language::En, "t"),
            Err(CorpusError::EmptyList)
        ));
        assert!(matches!(
            RareWordList::parse("  \n\n", Language::En, "t"),
            Err(CorpusError::EmptyList)
        ));
    }

    #[test]
    fn domain_hint_round_trips() {
        let list = RareWordList::parse("anemia\tmedical term\nsola\n", Language::En, "t").unwrap();
        assert_eq!(list.entries[0].domain_hint.as_deref(), Some("medical term"));
        assert_eq!(list.entries[1].domain_hint, None);
        let text = list.to_text();
        assert_eq!(text, "anemia\tmedical term\nsola\n");
        let again = RareWordList::parse(&text, Language::En, "t").unwrap();
        assert_eq!(again.entries, list.entries);
    }

    #[test]
    fn load_save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("words.txt");
        let p2 = dir.path().join("words2.txt");
        std::fs::write(&p1, "Anemia\tmedical term\nHbA1c\nanemia\n").unwrap();
        let first = load_rare_words(&p1, Language::En).unwrap();
        first.save(&p2).unwrap();
        let second = load_rare_words(&p2, Language::En).unwrap();
        assert_eq!(first.entries, second.entries);
        // Saving again is byte-stable.
        assert_eq!(std::fs::read(&p2).unwrap(), second.to_text().as_bytes());
    }

    #[test]
    fn ja_normalization_folds_only() {
        let list = RareWordList::parse("ﾍﾓｸﾞﾛﾋﾞﾝ\n貧血\n", Language::Ja, "t").unwrap();
        assert_eq!(list.entries[0].surface, "ヘモグロビン");
        assert_eq!(list.entries[1].surface, "貧血");
    }

    #[test]
    fn surface_normalization_is_idempotent() {
        for lang in [Language::En, Language::Ja] {
            for raw in ["The Sun,", "ＨｂＡ１ｃ", "貧血 気味", "(anemia)"] {
                let once = normalize_surface(lang, raw);
                assert_eq!(normalize_surface(lang, &once), once);
            }
        }
    }

    #[test]
    fn eval_set_rejects_duplicate_ids() {
        let utt = |id: &str| EvalUtterance {
            id: id.into(),
            reference: "text".into(),
            language: Language::En,
            audio_ref: None,
        };
        assert!(EvalSet::new(vec![utt("a"), utt("b")]).is_ok());
        assert!(matches!(
            EvalSet::new(vec![utt("a"), utt("a")]),
            Err(CorpusError::DuplicateId(_))
        ));
    }

    #[test]
    fn hypothesis_set_must_be_non_empty() {
        assert!(HypothesisSet::new("u1", vec![]).is_err());
        let set = HypothesisSet::new(
            "u1",
            vec![Hypothesis {
                text: "the son is rising".into(),
                score: Some(-1.2),
            }],
        )
        .unwrap();
        assert_eq!(set.one_best(), "the son is rising");
    }

    mod extraction {
        use super::*;
        use crate::services::mock::MockChatBackend;
        use crate::services::{ChatClient, ClientConfig};

        fn chat_returning(response: &str) -> ChatClient {
            ChatClient::new(
                Box::new(MockChatBackend::fixed(response)),
                "mock-model",
                &ClientConfig::default(),
            )
        }

        #[test]
        fn keeps_words_under_target_coverage() {
            let corpus = "the stent was placed near the aorta\nno sign of sepsis today\nroutine follow up visit went well\nnothing else was found this week";
            let chat = chat_returning("stent\naorta\nsepsis");
            let catalog = PromptCatalog::bundled();
            let list =
                extract_rare_words(corpus, Language::En, &chat, &catalog, 15.0).unwrap();
            assert!(list.entries.len() <= 3);
            // Recount coverage with a direct token count.
            let tokens: Vec<&str> = corpus.split_whitespace().collect();
            let covered = tokens
                .iter()
                .filter(|t| list.surfaces().any(|s| s == **t))
                .count();
            let coverage = 100.0 * covered as f64 / tokens.len() as f64;
            assert!(coverage < 15.0, "recounted coverage {coverage}");
        }

        #[test]
        fn empty_response_is_empty_list() {
            let chat = chat_returning("");
            let catalog = PromptCatalog::bundled();
            assert!(matches!(
                extract_rare_words("some corpus text", Language::En, &chat, &catalog, 10.0),
                Err(CorpusError::EmptyList)
            ));
        }

        #[test]
        fn unparsable_response_keeps_the_raw_text() {
            let chat = chat_returning("---\n***\n,,,");
            let catalog = PromptCatalog::bundled();
            match extract_rare_words("some corpus text", Language::En, &chat, &catalog, 10.0) {
                Err(CorpusError::LlmParse { raw }) => assert!(raw.contains("---")),
                other => panic!("expected LlmParse, got {other:?}"),
            }
        }

        #[test]
        fn most_frequent_word_is_dropped_first() {
            // "drug" is 12 of 24 tokens (50%); stent and aorta appear once
            // each. Trimming to <10% must drop "drug" and keep the rest.
            let mut tokens = vec!["drug"; 12];
            tokens.push("stent");
            tokens.push("aorta");
            tokens.extend(std::iter::repeat_n("filler", 10));
            let corpus = tokens.join(" ");
            let chat = chat_returning("drug\nstent\naorta");
            let catalog = PromptCatalog::bundled();
            let list = extract_rare_words(&corpus, Language::En, &chat, &catalog, 10.0).unwrap();
            let kept: Vec<&str> = list.surfaces().collect();
            assert_eq!(kept, vec!["stent", "aorta"]);
            // Token-count oracle: 2 of 24 tokens covered -> 8.33% < 10%.
            let covered = corpus
                .split_whitespace()
                .filter(|t| kept.contains(t))
                .count();
            assert!((100.0 * covered as f64 / 24.0) < 10.0);
        }

        #[test]
        fn infeasible_coverage_is_reported() {
            // A single word covering half the corpus can never fit under 10%.
            let corpus = "drug drug drug drug drug other other other other other";
            let chat = chat_returning("drug");
            let catalog = PromptCatalog::bundled();
            assert!(matches!(
                extract_rare_words(corpus, Language::En, &chat, &catalog, 10.0),
                Err(CorpusError::CoverageInfeasible { .. })
            ));
        }

        #[test]
        fn invalid_target_rejected() {
            let chat = chat_returning("word");
            let catalog = PromptCatalog::bundled();
            for target in [0.0, -1.0, 150.0] {
                assert!(matches!(
                    extract_rare_words("text", Language::En, &chat, &catalog, target),
                    Err(CorpusError::InvalidTarget(_))
                ));
            }
        }
    }
}
