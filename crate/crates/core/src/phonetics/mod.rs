//! Phonetic representations of transcripts in three schemes: IPA,
//! TTS-phoneme (ARPAbet for English, romanized kana for Japanese), and LSP —
//! a simplified pronunciation produced by prompting an LLM.
//!
//! English IPA/ARPAbet are lexicon lookups; Japanese IPA and all LSP go
//! through the chat client at temperature 0 and are cached by content, so
//! conversions are deterministic and replayable offline.

pub mod kana;
mod cache;

pub use cache::ConversionCache;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::lang::Language;
use crate::prompts::{self, PromptCatalog, PromptError};
use crate::services::{ChatClient, ServiceError};
use crate::textnorm;

#[derive(Debug, thiserror::Error)]
pub enum PhoneticsError {
    #[error("{scheme} for {language} needs a chat backend, and none is configured")]
    MissingChatBackend {
        scheme: PhoneticScheme,
        language: Language,
    },
    #[error("conversion of {input:?} produced an empty result")]
    EmptyConversion { input: String },
    #[error("cannot convert empty text")]
    EmptyInput,
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The three phonetic schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhoneticScheme {
    Ipa,
    TtsPhoneme,
    Lsp,
}

impl fmt::Display for PhoneticScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhoneticScheme::Ipa => "ipa",
            PhoneticScheme::TtsPhoneme => "tts-phoneme",
            PhoneticScheme::Lsp => "lsp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown phonetic scheme `{0}` (expected ipa, tts-phoneme, or lsp)")]
pub struct UnknownScheme(pub String);

impl FromStr for PhoneticScheme {
    type Err = UnknownScheme;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ipa" => Ok(PhoneticScheme::Ipa),
            "tts-phoneme" | "tts_phoneme" | "arpabet" | "kana" => Ok(PhoneticScheme::TtsPhoneme),
            "lsp" => Ok(PhoneticScheme::Lsp),
            other => Err(UnknownScheme(other.to_string())),
        }
    }
}

/// A transcript rendered in one phonetic scheme.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhoneticText {
    pub scheme: PhoneticScheme,
    pub language: Language,
    pub text: String,
    pub source_text: String,
}

/// What to do with out-of-vocabulary words during lexicon lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OovPolicy {
    /// Keep the word verbatim.
    PassThrough,
    /// Emit it letter by letter, looking single letters up in the lexicon.
    SpellOut,
}

/// Word-to-phonemes dictionary. Keys are casefolded; values keep the
/// lexicon's own phone notation (space-separated for ARPAbet).
#[derive(Debug, Clone)]
pub struct G2pLexicon {
    entries: BTreeMap<String, String>,
    pub oov_policy: OovPolicy,
}

impl G2pLexicon {
    pub fn new(oov_policy: OovPolicy) -> Self {
        G2pLexicon {
            entries: BTreeMap::new(),
            oov_policy,
        }
    }

    /// Parse the `<word><TAB><phonemes>` format; malformed lines are skipped
    /// with a warning.
    pub fn parse(text: &str, oov_policy: OovPolicy) -> Self {
        let mut lexicon = G2pLexicon::new(oov_policy);
        for line in text.lines() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('\t') {
                Some((word, phones)) if !phones.trim().is_empty() => {
                    lexicon.insert(word, phones.trim());
                }
                _ => log::warn!("skipping malformed lexicon line: {line:?}"),
            }
        }
        lexicon
    }

    pub fn load(path: &Path, oov_policy: OovPolicy) -> Result<Self, PhoneticsError> {
        let text = std::fs::read_to_string(path).map_err(|source| PhoneticsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::parse(&text, oov_policy))
    }

    pub fn insert(&mut self, word: &str, phones: &str) {
        self.entries.insert(
            textnorm::casefold(&textnorm::compat_fold(word.trim())),
            phones.to_string(),
        );
    }

    pub fn lookup(&self, word: &str) -> Option<&str> {
        self.entries
            .get(&textnorm::casefold(&textnorm::compat_fold(word)))
            .map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Mini IPA lexicon bundled for tests and demos.
    pub fn bundled_en_ipa() -> Self {
        Self::parse(include_str!("../../assets/lexicon_en_ipa.tsv"), OovPolicy::PassThrough)
    }

    /// Mini ARPAbet lexicon bundled for tests and demos.
    pub fn bundled_en_arpabet() -> Self {
        Self::parse(include_str!("../../assets/lexicon_en_arpabet.tsv"), OovPolicy::PassThrough)
    }

    /// Mini Japanese readings lexicon (word -> romaji).
    pub fn bundled_ja_readings() -> Self {
        Self::parse(include_str!("../../assets/lexicon_ja_readings.tsv"), OovPolicy::PassThrough)
    }
}

fn lookup_units(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| textnorm::strip_outer_punct(t).to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

fn oov_render(word: &str, lexicon: &G2pLexicon) -> String {
    match lexicon.oov_policy {
        OovPolicy::PassThrough => word.to_string(),
        OovPolicy::SpellOut => word
            .chars()
            .map(|c| {
                let letter = c.to_string();
                lexicon.lookup(&letter).map(str::to_string).unwrap_or(letter)
            })
            .collect::<Vec<_>>()
            .join(" "),
    }
}

/// Word-by-word IPA lookup, space-joined. OOV words follow the lexicon's
/// policy.
pub fn ipa_from_lexicon(text: &str, lexicon: &G2pLexicon) -> String {
    lookup_units(text)
        .iter()
        .map(|w| match lexicon.lookup(w) {
            Some(phones) => phones.to_string(),
            None => oov_render(w, lexicon),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Per-word ARPAbet with stress digits: phones of one word concatenated,
/// words joined by spaces ("the sun" -> "DHAH0 SAH1N").
pub fn arpabet_from_lexicon(text: &str, lexicon: &G2pLexicon) -> String {
    lookup_units(text)
        .iter()
        .map(|w| match lexicon.lookup(w) {
            Some(phones) => phones.split_whitespace().collect::<String>(),
            None => oov_render(w, lexicon),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Japanese reading: whole-string lexicon lookup first, then rule-based kana
/// romanization.
pub fn ja_reading(text: &str, lexicon: &G2pLexicon) -> String {
    let folded = textnorm::compat_fold(text.trim());
    if let Some(reading) = lexicon.lookup(&folded) {
        return reading.to_string();
    }
    kana::to_romaji(&folded)
}

/// Converter facade over lexicons, the conversion cache, and an optional
/// chat client for the LLM-backed routes.
pub struct Phoneticizer {
    en_ipa: G2pLexicon,
    en_arpabet: G2pLexicon,
    ja_readings: G2pLexicon,
    cache: ConversionCache,
    chat: Option<Arc<ChatClient>>,
    catalog: Arc<PromptCatalog>,
}

impl Phoneticizer {
    /// Bundled lexicons, in-memory cache preloaded with the golden LSP
    /// fixtures, no chat backend.
    pub fn bundled(catalog: Arc<PromptCatalog>) -> Self {
        let cache = ConversionCache::in_memory();
        cache.load_lines(include_str!("../../assets/lsp_cache_golden.jsonl"));
        Phoneticizer {
            en_ipa: G2pLexicon::bundled_en_ipa(),
            en_arpabet: G2pLexicon::bundled_en_arpabet(),
            ja_readings: G2pLexicon::bundled_ja_readings(),
            cache,
            chat: None,
            catalog,
        }
    }

    pub fn with_chat(mut self, chat: Arc<ChatClient>) -> Self {
        self.chat = Some(chat);
        self
    }

    pub fn with_cache(mut self, cache: ConversionCache) -> Self {
        cache.load_lines(include_str!("../../assets/lsp_cache_golden.jsonl"));
        self.cache = cache;
        self
    }

    pub fn with_en_lexicons(mut self, ipa: G2pLexicon, arpabet: G2pLexicon) -> Self {
        self.en_ipa = ipa;
        self.en_arpabet = arpabet;
        self
    }

    pub fn with_ja_lexicon(mut self, readings: G2pLexicon) -> Self {
        self.ja_readings = readings;
        self
    }

    pub fn cache(&self) -> &ConversionCache {
        &self.cache
    }

    pub fn convert(
        &self,
        scheme: PhoneticScheme,
        text: &str,
        language: Language,
    ) -> Result<PhoneticText, PhoneticsError> {
        match scheme {
            PhoneticScheme::Ipa => self.to_ipa(text, language),
            PhoneticScheme::TtsPhoneme => self.to_tts_phoneme(text, language),
            PhoneticScheme::Lsp => self.to_lsp(text, language),
        }
    }

    /// IPA rendering. English is a lexicon lookup; Japanese goes through the
    /// LLM (cached).
    pub fn to_ipa(&self, text: &str, language: Language) -> Result<PhoneticText, PhoneticsError> {
        let rendered = match language {
            Language::En => ipa_from_lexicon(text, &self.en_ipa),
            Language::Ja => self.llm_convert(PhoneticScheme::Ipa, text, language)?,
        };
        Ok(PhoneticText {
            scheme: PhoneticScheme::Ipa,
            language,
            text: rendered,
            source_text: text.to_string(),
        })
    }

    /// TTS-phoneme rendering: ARPAbet for English, romanized kana for
    /// Japanese.
    pub fn to_tts_phoneme(
        &self,
        text: &str,
        language: Language,
    ) -> Result<PhoneticText, PhoneticsError> {
        let rendered = match language {
            Language::En => arpabet_from_lexicon(text, &self.en_arpabet),
            Language::Ja => ja_reading(text, &self.ja_readings),
        };
        Ok(PhoneticText {
            scheme: PhoneticScheme::TtsPhoneme,
            language,
            text: rendered,
            source_text: text.to_string(),
        })
    }

    /// LLM-based Simplified Phoneme. One chat call per distinct text, cached
    /// by (scheme, language, text).
    pub fn to_lsp(&self, text: &str, language: Language) -> Result<PhoneticText, PhoneticsError> {
        if text.trim().is_empty() {
            return Err(PhoneticsError::EmptyInput);
        }
        let rendered = self.llm_convert(PhoneticScheme::Lsp, text, language)?;
        Ok(PhoneticText {
            scheme: PhoneticScheme::Lsp,
            language,
            text: rendered,
            source_text: text.to_string(),
        })
    }

    fn llm_convert(
        &self,
        scheme: PhoneticScheme,
        text: &str,
        language: Language,
    ) -> Result<String, PhoneticsError> {
        if let Some(hit) = self.cache.get(scheme, language, text) {
            return Ok(hit);
        }
        let chat = self.chat.as_ref().ok_or(PhoneticsError::MissingChatBackend {
            scheme,
            language,
        })?;
        let prompt = match scheme {
            PhoneticScheme::Lsp => self.catalog.render_lsp(language, text)?,
            PhoneticScheme::Ipa => self.catalog.render_ipa_ja(text)?,
            PhoneticScheme::TtsPhoneme => {
                unreachable!("tts-phoneme is lexicon/rule based")
            }
        };
        let raw = chat.chat_user(&prompt, 0.0)?;
        let cleaned = prompts::clean_llm_line(&raw);
        if cleaned.is_empty() {
            return Err(PhoneticsError::EmptyConversion {
                input: text.to_string(),
            });
        }
        self.cache
            .insert(scheme, language, text, &cleaned)
            .map_err(|source| PhoneticsError::Io {
                path: "conversion cache".into(),
                source,
            })?;
        Ok(cleaned)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::services::mock::MockChatBackend;
    use crate::services::ClientConfig;
    use proptest::prelude::*;

    fn catalog() -> Arc<PromptCatalog> {
        Arc::new(PromptCatalog::bundled())
    }

    #[test]
    fn table_fixture_ipa() {
        let p = Phoneticizer::bundled(catalog());
        let out = p.to_ipa("the sun is rising", Language::En).unwrap();
        assert_eq!(out.text, "ðə sən ɪz ˈraɪzɪŋ");
    }

    #[test]
    fn table_fixture_arpabet() {
        let p = Phoneticizer::bundled(catalog());
        let out = p.to_tts_phoneme("the sun is rising", Language::En).unwrap();
        assert_eq!(out.text, "DHAH0 SAH1N IH1Z RAY1ZIH0NG");
    }

    #[test]
    fn table_fixture_lsp_from_golden_cache() {
        // No chat backend configured: the golden cache must answer.
        let p = Phoneticizer::bundled(catalog());
        let out = p.to_lsp("the sun is rising", Language::En).unwrap();
        assert_eq!(out.text, "thuh sun iz rahy-zing");
    }

    #[test]
    fn empty_input_conversions() {
        let p = Phoneticizer::bundled(catalog());
        assert_eq!(p.to_ipa("", Language::En).unwrap().text, "");
        assert_eq!(p.to_tts_phoneme("", Language::En).unwrap().text, "");
        assert!(matches!(p.to_lsp("", Language::En), Err(PhoneticsError::EmptyInput)));
    }

    #[test]
    fn oov_pass_through() {
        let p = Phoneticizer::bundled(catalog());
        let out = p.to_ipa("zzxy", Language::En).unwrap();
        assert_eq!(out.text, "zzxy");
    }

    #[test]
    fn ja_reading_uses_lexicon_then_rules() {
        let p = Phoneticizer::bundled(catalog());
        // Lexicalized greeting reads "konnichiwa" (the kana table alone
        // would give "konnichiha").
        let out = p.to_tts_phoneme("こんにちは", Language::Ja).unwrap();
        assert_eq!(out.text, "konnichiwa");
        let out = p.to_tts_phoneme("さくら", Language::Ja).unwrap();
        assert_eq!(out.text, "sakura");
    }

    #[test]
    fn lsp_cache_avoids_second_call() {
        let backend = MockChatBackend::fixed("thuh sun iz rahy-zing");
        let chat = Arc::new(ChatClient::new(
            Box::new(backend),
            "mock-model",
            &ClientConfig::default(),
        ));
        let p = Phoneticizer::bundled(catalog()).with_chat(chat.clone());
        let a = p.to_lsp("the moon is setting", Language::En).unwrap();
        let calls_after_first = chat.stats().calls();
        let b = p.to_lsp("the moon is setting", Language::En).unwrap();
        assert_eq!(a, b);
        assert_eq!(chat.stats().calls(), calls_after_first);
        assert_eq!(calls_after_first, 1);
    }

    #[test]
    fn lsp_trims_markup() {
        let backend = MockChatBackend::fixed("`X`");
        let chat = Arc::new(ChatClient::new(
            Box::new(backend),
            "mock-model",
            &ClientConfig::default(),
        ));
        let p = Phoneticizer::bundled(catalog()).with_chat(chat);
        let out = p.to_lsp("anything else", Language::En).unwrap();
        assert_eq!(out.text, "X");
    }

    #[test]
    fn persisted_cache_reproduces_identical_phonetic_text() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("conversions.jsonl");
        let first = {
            let backend = MockChatBackend::fixed("wun off kaynd");
            let chat = Arc::new(ChatClient::new(
                Box::new(backend),
                "mock-model",
                &ClientConfig::default(),
            ));
            let p = Phoneticizer::bundled(catalog())
                .with_cache(ConversionCache::open(&path).unwrap())
                .with_chat(chat);
            p.to_lsp("one of a kind", Language::En).unwrap()
        };
        // Fresh converter, no chat backend: the reloaded cache must answer
        // with byte-identical output.
        let p = Phoneticizer::bundled(catalog()).with_cache(ConversionCache::open(&path).unwrap());
        let second = p.to_lsp("one of a kind", Language::En).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn lsp_without_backend_or_cache_fails() {
        let p = Phoneticizer::bundled(catalog());
        assert!(matches!(
            p.to_lsp("uncached text", Language::En),
            Err(PhoneticsError::MissingChatBackend { .. })
        ));
    }

    #[test]
    fn ja_ipa_goes_through_llm_route() {
        let backend = MockChatBackend::fixed("/sajoːnaɾa/");
        let chat = Arc::new(ChatClient::new(
            Box::new(backend),
            "mock-model",
            &ClientConfig::default(),
        ));
        let p = Phoneticizer::bundled(catalog()).with_chat(chat.clone());
        let out = p.to_ipa("さようなら", Language::Ja).unwrap();
        assert_eq!(out.text, "/sajoːnaɾa/");
        assert_eq!(chat.stats().calls(), 1);

        // The golden cache answers without a service call.
        let cached = p.to_ipa("こんにちは", Language::Ja).unwrap();
        assert_eq!(cached.text, "koɲɲit͡ɕiwa");
        assert_eq!(chat.stats().calls(), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        // Lexicon conversion is token-local: converting a concatenation
        // equals concatenating conversions.
        #[test]
        fn en_conversion_is_token_local(
            idx in proptest::collection::vec(0usize..6, 1..6),
        ) {
            let words = ["the", "sun", "is", "rising", "report", "case"];
            let text: Vec<&str> = idx.iter().map(|&i| words[i]).collect();
            let p = Phoneticizer::bundled(catalog());
            let whole = p.to_tts_phoneme(&text.join(" "), Language::En).unwrap().text;
            let parts: Vec<String> = text
                .iter()
                .map(|w| p.to_tts_phoneme(w, Language::En).unwrap().text)
                .collect();
            prop_assert_eq!(whole, parts.join(" "));

            let whole_ipa = p.to_ipa(&text.join(" "), Language::En).unwrap().text;
            let parts_ipa: Vec<String> = text
                .iter()
                .map(|w| p.to_ipa(w, Language::En).unwrap().text)
                .collect();
            prop_assert_eq!(whole_ipa, parts_ipa.join(" "));
        }
    }
}
