//! Prompt construction and response parsing for every LLM call the toolkit
//! makes: transcript generation, simplified-pronunciation and IPA
//! conversion, rare-word extraction, and the correction prompt itself.
//!
//! All wording lives in a versioned catalog (TOML, human-editable); builders
//! here only bind placeholders and lay out message lists, so a given request
//! always renders to identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;

use crate::lang::Language;
use crate::metrics::{self, NormPolicy};
use crate::phonetics::PhoneticText;
use crate::services::ChatMessage;

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}` has unresolved placeholder `{placeholder}`")]
    Unresolved { template: String, placeholder: String },
    #[error("prompt catalog is invalid: {0}")]
    BadCatalog(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("generation yielded {found} usable transcripts, expected {expected}")]
    ShortGeneration { found: usize, expected: usize },
    #[error("correction response was empty after stripping markup")]
    EmptyCorrection,
    #[error("GER request needs at least one hypothesis")]
    EmptyRequest,
}

/// A prompt template with named `{placeholder}` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub language: Option<Language>,
    pub body: String,
    pub required: BTreeSet<String>,
}

fn placeholders_of(body: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut rest = body;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) => {
                out.insert(after[..end].to_string());
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    out
}

impl PromptTemplate {
    /// Substitute every placeholder. Fails if any placeholder in the body is
    /// unbound, so rendered text never contains `{...}` residue.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        let mut out = self.body.clone();
        for name in placeholders_of(&self.body) {
            match bindings.get(name.as_str()) {
                Some(value) => out = out.replace(&format!("{{{name}}}"), value),
                None => {
                    return Err(PromptError::Unresolved {
                        template: self.id.clone(),
                        placeholder: name,
                    })
                }
            }
        }
        Ok(out)
    }
}

#[derive(Deserialize)]
struct CatalogFile {
    version: u32,
    templates: BTreeMap<String, TemplateEntry>,
}

#[derive(Deserialize)]
struct TemplateEntry {
    language: Option<String>,
    body: String,
    #[serde(default)]
    required: Vec<String>,
}

/// The versioned template catalog.
#[derive(Debug, Clone)]
pub struct PromptCatalog {
    pub version: u32,
    templates: BTreeMap<String, PromptTemplate>,
}

impl PromptCatalog {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let file: CatalogFile =
            toml::from_str(text).map_err(|e| PromptError::BadCatalog(e.to_string()))?;
        let mut templates = BTreeMap::new();
        for (id, entry) in file.templates {
            let language = match entry.language {
                Some(tag) => Some(
                    tag.parse::<Language>()
                        .map_err(|e| PromptError::BadCatalog(format!("template {id}: {e}")))?,
                ),
                None => None,
            };
            let slots = placeholders_of(&entry.body);
            for req in &entry.required {
                if !slots.contains(req) {
                    return Err(PromptError::BadCatalog(format!(
                        "template {id}: required placeholder `{req}` not in body"
                    )));
                }
            }
            templates.insert(
                id.clone(),
                PromptTemplate {
                    id,
                    language,
                    body: entry.body,
                    required: entry.required.into_iter().collect(),
                },
            );
        }
        Ok(PromptCatalog {
            version: file.version,
            templates,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The catalog shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(include_str!("../assets/prompt_catalog.toml"))
            .expect("bundled catalog is valid")
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .get(id)
            .ok_or_else(|| PromptError::UnknownTemplate(id.to_string()))
    }

    /// Transcript-generation instruction for one rare word.
    pub fn render_transcript_gen(
        &self,
        language: Language,
        word: &str,
        count: u32,
        domain_hint: Option<&str>,
    ) -> Result<String, PromptError> {
        let domain_clause = match (language, domain_hint) {
            (_, None) => String::new(),
            (Language::En, Some(hint)) => format!(", which is a {hint}"),
            (Language::Ja, Some(hint)) => format!("（{hint}）"),
        };
        let id = match (language, count) {
            (Language::En, 1) => "transcript_gen_en_single",
            (Language::En, _) => "transcript_gen_en",
            (Language::Ja, 1) => "transcript_gen_ja_single",
            (Language::Ja, _) => "transcript_gen_ja",
        };
        let mut bindings: BTreeMap<&str, String> = BTreeMap::new();
        bindings.insert("word", word.to_string());
        bindings.insert("domain_clause", domain_clause);
        if count != 1 {
            bindings.insert("count", count.to_string());
        }
        self.get(id)?.render(&bindings)
    }

    pub fn render_extract_words(
        &self,
        language: Language,
        corpus: &str,
    ) -> Result<String, PromptError> {
        let id = match language {
            Language::En => "extract_words_en",
            Language::Ja => "extract_words_ja",
        };
        let mut bindings = BTreeMap::new();
        bindings.insert("corpus", corpus.to_string());
        self.get(id)?.render(&bindings)
    }

    pub fn render_lsp(&self, language: Language, text: &str) -> Result<String, PromptError> {
        let id = match language {
            Language::En => "lsp_en",
            Language::Ja => "lsp_ja",
        };
        let mut bindings = BTreeMap::new();
        bindings.insert("text", text.to_string());
        self.get(id)?.render(&bindings)
    }

    pub fn render_ipa_ja(&self, text: &str) -> Result<String, PromptError> {
        let mut bindings = BTreeMap::new();
        bindings.insert("text", text.to_string());
        self.get("ipa_ja")?.render(&bindings)
    }

    pub fn ger_system(&self, language: Language) -> Result<&str, PromptError> {
        let id = match language {
            Language::En => "ger_system_en",
            Language::Ja => "ger_system_ja",
        };
        Ok(self.get(id)?.body.as_str())
    }
}

/// Input to the correction prompt builder.
#[derive(Debug, Clone, PartialEq)]
pub struct GerRequest {
    pub nbest: Vec<String>,
    pub phonetic: Option<PhoneticText>,
    pub language: Language,
}

impl GerRequest {
    pub fn new(
        nbest: Vec<String>,
        phonetic: Option<PhoneticText>,
        language: Language,
    ) -> Result<Self, PromptError> {
        if nbest.is_empty() {
            return Err(PromptError::EmptyRequest);
        }
        Ok(GerRequest { nbest, phonetic, language })
    }
}

/// Build the correction messages: a system instruction plus a user message
/// listing hypotheses rank-ordered, then a labeled pronunciation line when
/// phonetic context is present. Byte-stable for a given request; with no
/// phonetics the user message is identical to the no-phonetics baseline.
pub fn build_ger_messages(
    request: &GerRequest,
    catalog: &PromptCatalog,
) -> Result<Vec<ChatMessage>, PromptError> {
    if request.nbest.is_empty() {
        return Err(PromptError::EmptyRequest);
    }
    let hypotheses = request
        .nbest
        .iter()
        .enumerate()
        .map(|(i, h)| format!("{}. {h}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    let phonetic_block = match &request.phonetic {
        None => String::new(),
        Some(p) => {
            let id = match request.language {
                Language::En => "ger_phonetic_block_en",
                Language::Ja => "ger_phonetic_block_ja",
            };
            let mut bindings = BTreeMap::new();
            bindings.insert("phonetic", p.text.clone());
            catalog.get(id)?.render(&bindings)?
        }
    };
    let mut bindings = BTreeMap::new();
    bindings.insert("hypotheses", hypotheses);
    bindings.insert("phonetic_block", phonetic_block);
    let user = catalog.get("ger_user")?.render(&bindings)?;
    Ok(vec![
        ChatMessage::system(catalog.ger_system(request.language)?),
        ChatMessage::user(user),
    ])
}

/// Strip list numbering/bullets and one layer of surrounding quotes from a
/// line.
pub fn strip_list_marker(line: &str) -> &str {
    let mut s = line.trim();
    // "12." / "12)" / "12、" enumeration
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(stripped) = rest
            .strip_prefix('.')
            .or_else(|| rest.strip_prefix(')'))
            .or_else(|| rest.strip_prefix('、'))
            .or_else(|| rest.strip_prefix('．'))
        {
            s = stripped.trim_start();
        }
    } else if let Some(stripped) = s
        .strip_prefix("- ")
        .or_else(|| s.strip_prefix("* "))
        .or_else(|| s.strip_prefix("• "))
    {
        s = stripped.trim_start();
    }
    s = s.trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('“', '”'), ('「', '」'), ('`', '`')] {
        if s.len() >= open.len_utf8() + close.len_utf8()
            && s.starts_with(open)
            && s.ends_with(close)
        {
            s = s[open.len_utf8()..s.len() - close.len_utf8()].trim();
        }
    }
    s
}

/// Salvage a single-line answer from an LLM response: drop code fences,
/// label prefixes, and surrounding quotes.
pub fn clean_llm_line(response: &str) -> String {
    let mut text = response.trim();
    if text.starts_with("```") {
        text = text.trim_start_matches("```");
        // drop a language tag on the fence line
        if let Some(nl) = text.find('\n') {
            let first = &text[..nl];
            if !first.contains(' ') && first.len() < 16 {
                text = &text[nl + 1..];
            }
        }
        text = text.trim_end_matches("```").trim();
    }
    let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let mut line = line.trim();
    for label in [
        "Corrected:", "corrected:", "Correction:", "Transcript:", "Output:", "Answer:",
        "Pronunciation:", "修正:", "修正：", "訂正:", "訂正：",
    ] {
        if let Some(rest) = line.strip_prefix(label) {
            line = rest.trim_start();
            break;
        }
    }
    let mut s = line.trim().to_string();
    loop {
        let stripped = strip_list_marker(&s).to_string();
        if stripped == s {
            break;
        }
        s = stripped;
    }
    s
}

/// Parse a corrected transcript out of an LLM response.
pub fn parse_ger_response(response: &str) -> Result<String, PromptError> {
    let cleaned = clean_llm_line(response);
    if cleaned.is_empty() {
        return Err(PromptError::EmptyCorrection);
    }
    Ok(cleaned)
}

/// Parse generated transcripts from a numbered/bulleted LLM response,
/// keeping only items that contain `word` under the normalization policy.
/// Returns at most `expected_count` items, or `ShortGeneration` when fewer
/// usable items were found.
pub fn parse_generated_transcripts(
    response: &str,
    expected_count: u32,
    word: &str,
    policy: &NormPolicy,
) -> Result<Vec<String>, PromptError> {
    let expected = expected_count as usize;
    let mut items: Vec<String> = Vec::new();
    for line in response.lines() {
        let item = strip_list_marker(line);
        if item.is_empty() {
            continue;
        }
        if metrics::contains_term(item, word, policy) {
            items.push(item.to_string());
        }
        if items.len() == expected {
            break;
        }
    }
    if items.len() < expected {
        return Err(PromptError::ShortGeneration {
            found: items.len(),
            expected,
        });
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phonetics::PhoneticScheme;
    use proptest::prelude::*;

    fn catalog() -> PromptCatalog {
        PromptCatalog::bundled()
    }

    #[test]
    fn renders_paper_instruction_shape() {
        let prompt = catalog()
            .render_transcript_gen(Language::En, "anemia", 5, Some("medical term"))
            .unwrap();
        assert!(prompt.contains(
            "Provide 5 different English sentences in various contexts that include the term anemia, which is a medical term."
        ), "prompt was: {prompt}");
    }

    #[test]
    fn singular_count_uses_singular_template() {
        let prompt = catalog()
            .render_transcript_gen(Language::En, "stent", 1, None)
            .unwrap();
        assert!(prompt.contains("one English sentence"), "prompt was: {prompt}");
        assert!(!prompt.contains("which is a"));
        assert!(!prompt.contains('{') && !prompt.contains('}'));
    }

    #[test]
    fn ja_template_resolves_placeholders() {
        let prompt = catalog()
            .render_transcript_gen(Language::Ja, "貧血", 4, None)
            .unwrap();
        assert!(prompt.contains("貧血"));
        assert!(prompt.contains('4'));
        assert!(!prompt.contains('{') && !prompt.contains('}'));
    }

    #[test]
    fn unresolved_placeholder_is_an_error() {
        let template = PromptTemplate {
            id: "t".into(),
            language: None,
            body: "hello {name} from {place}".into(),
            required: ["name".to_string()].into_iter().collect(),
        };
        let mut bindings = BTreeMap::new();
        bindings.insert("name", "x".to_string());
        assert!(matches!(
            template.render(&bindings),
            Err(PromptError::Unresolved { placeholder, .. }) if placeholder == "place"
        ));
    }

    #[test]
    fn parse_transcripts_strips_numbering() {
        let p = NormPolicy::en_wer();
        let out = parse_generated_transcripts(
            "1. The anemia worsened.\n2. anemia is common.",
            2,
            "anemia",
            &p,
        )
        .unwrap();
        assert_eq!(out, vec!["The anemia worsened.", "anemia is common."]);
    }

    #[test]
    fn parse_transcripts_filters_missing_word() {
        let p = NormPolicy::en_wer();
        let err = parse_generated_transcripts(
            "1. The anemia worsened.\n2. Something unrelated.",
            2,
            "anemia",
            &p,
        )
        .unwrap_err();
        assert!(matches!(err, PromptError::ShortGeneration { found: 1, expected: 2 }));
    }

    #[test]
    fn parse_transcripts_ignores_blank_lines() {
        let p = NormPolicy::en_wer();
        let out = parse_generated_transcripts(
            "1. anemia one.\n\n2. anemia two.\n\n\n",
            2,
            "anemia",
            &p,
        )
        .unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn ger_messages_list_hypotheses_and_pronunciation() {
        let request = GerRequest::new(
            vec![
                "the son is rising".into(),
                "the sun is rising".into(),
                "the sons rising".into(),
                "that sun is rising".into(),
                "the son is risen".into(),
            ],
            Some(PhoneticText {
                scheme: PhoneticScheme::Lsp,
                language: Language::En,
                text: "thuh sun iz rahy-zing".into(),
                source_text: "the son is rising".into(),
            }),
            Language::En,
        )
        .unwrap();
        let messages = build_ger_messages(&request, &catalog()).unwrap();
        assert_eq!(messages.len(), 2);
        let user = &messages[1].content;
        assert!(user.contains("1. the son is rising"));
        assert!(user.contains("5. the son is risen"));
        assert!(user.contains("Pronunciation: thuh sun iz rahy-zing"));
    }

    #[test]
    fn no_phonetics_matches_baseline_bytes() {
        let with_none = GerRequest::new(vec!["only hypothesis".into()], None, Language::En).unwrap();
        let messages = build_ger_messages(&with_none, &catalog()).unwrap();
        assert_eq!(messages[1].content, "1. only hypothesis");
    }

    #[test]
    fn identical_requests_render_identical_bytes() {
        let request = GerRequest::new(
            vec!["a".into(), "b".into()],
            None,
            Language::En,
        )
        .unwrap();
        let c = catalog();
        let one = build_ger_messages(&request, &c).unwrap();
        let two = build_ger_messages(&request, &c).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn ger_response_stripping() {
        assert_eq!(parse_ger_response("\"the sun is rising\"").unwrap(), "the sun is rising");
        assert_eq!(
            parse_ger_response("Corrected: the sun is rising").unwrap(),
            "the sun is rising"
        );
        assert_eq!(parse_ger_response("```\nthe sun is rising\n```").unwrap(), "the sun is rising");
        assert!(matches!(parse_ger_response(""), Err(PromptError::EmptyCorrection)));
        assert!(matches!(parse_ger_response("  \n \"\" "), Err(PromptError::EmptyCorrection)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // Different hypothesis lists never render to the same user message.
        #[test]
        fn ger_rendering_is_injective(
            a in proptest::collection::vec("[a-z]{1,6}( [a-z]{1,6}){0,3}", 1..4),
            b in proptest::collection::vec("[a-z]{1,6}( [a-z]{1,6}){0,3}", 1..4),
        ) {
            prop_assume!(a != b);
            let c = catalog();
            let ra = GerRequest::new(a, None, Language::En).unwrap();
            let rb = GerRequest::new(b, None, Language::En).unwrap();
            let ma = build_ger_messages(&ra, &c).unwrap();
            let mb = build_ger_messages(&rb, &c).unwrap();
            prop_assert_ne!(&ma[1].content, &mb[1].content);
        }
    }
}
