//! Correction inference: run an LLM corrector (or any pluggable corrector)
//! over an evaluation set under a configurable condition: 1-best prompt
//! only, N-best, or N-best plus phonetic context.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{ErrorPairExample, EvalSet, HypothesisSet};
use crate::lang::Language;
use crate::metrics::{self, NormPolicy};
use crate::phonetics::{Phoneticizer, PhoneticScheme, PhoneticsError};
use crate::prompts::{self, GerRequest, PromptCatalog, PromptError};
use crate::services::{bounded_map, ChatClient, ChatExchange, ServiceError};

#[derive(Debug, thiserror::Error)]
pub enum GerError {
    #[error("phonetic scheme must be set exactly when mode is nbest-phonetic")]
    SchemeMismatch,
    #[error("missing hypothesis sets for utterances: {}", ids.join(", "))]
    MissingHypotheses { ids: Vec<String> },
    #[error("service failure on utterance `{utterance_id}`: {source}")]
    Service {
        utterance_id: String,
        #[source]
        source: ServiceError,
    },
    #[error("phonetics failure on utterance `{utterance_id}`: {source}")]
    Phonetics {
        utterance_id: String,
        #[source]
        source: PhoneticsError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("checkpoint i/o failed: {0}")]
    Checkpoint(#[from] std::io::Error),
}

/// Correction input shape, mirroring the experimental conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GerMode {
    PromptOnly,
    Nbest,
    NbestPhonetic,
}

impl std::str::FromStr for GerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "prompt-only" | "prompt_only" | "1best" => Ok(GerMode::PromptOnly),
            "nbest" | "n-best" => Ok(GerMode::Nbest),
            "nbest-phonetic" | "nbest_phonetic" | "n-best-phonetic" => Ok(GerMode::NbestPhonetic),
            other => Err(format!(
                "unknown mode `{other}` (expected prompt-only, nbest, or nbest-phonetic)"
            )),
        }
    }
}

/// One experimental condition. `scheme` is present iff mode is
/// `NbestPhonetic`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GerCondition {
    pub mode: GerMode,
    pub scheme: Option<PhoneticScheme>,
    pub model_id: String,
}

impl GerCondition {
    pub fn new(
        mode: GerMode,
        scheme: Option<PhoneticScheme>,
        model_id: impl Into<String>,
    ) -> Result<Self, GerError> {
        if (mode == GerMode::NbestPhonetic) != scheme.is_some() {
            return Err(GerError::SchemeMismatch);
        }
        Ok(GerCondition {
            mode,
            scheme,
            model_id: model_id.into(),
        })
    }

    pub fn label(&self) -> String {
        match (self.mode, self.scheme) {
            (GerMode::PromptOnly, _) => "prompt-only".into(),
            (GerMode::Nbest, _) => "nbest".into(),
            (GerMode::NbestPhonetic, Some(scheme)) => format!("nbest+{scheme}"),
            (GerMode::NbestPhonetic, None) => "nbest+?".into(),
        }
    }
}

/// One corrected utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GerOutput {
    pub utterance_id: String,
    pub corrected: String,
    pub condition: String,
    pub raw_response: String,
    pub latency_ms: f64,
    pub fallback: bool,
}

/// Shared state for LLM-backed correction.
#[derive(Clone)]
pub struct GerContext {
    pub chat: Arc<ChatClient>,
    pub phoneticizer: Arc<Phoneticizer>,
    pub catalog: Arc<PromptCatalog>,
    pub nbest_limit: usize,
    pub concurrency: usize,
}

/// Correct a single utterance under the given condition. Unparseable or
/// empty responses fall back to the 1-best hypothesis, flagged as such.
pub fn correct_one(
    ctx: &GerContext,
    nbest: &HypothesisSet,
    condition: &GerCondition,
    language: Language,
) -> Result<GerOutput, GerError> {
    let id = nbest.utterance_id.clone();
    let take = match condition.mode {
        GerMode::PromptOnly => 1,
        _ => ctx.nbest_limit.max(1),
    };
    let texts: Vec<String> = nbest.texts().take(take).map(str::to_string).collect();
    let phonetic = match condition.mode {
        GerMode::NbestPhonetic => {
            let scheme = condition.scheme.ok_or(GerError::SchemeMismatch)?;
            Some(
                ctx.phoneticizer
                    .convert(scheme, nbest.one_best(), language)
                    .map_err(|source| GerError::Phonetics {
                        utterance_id: id.clone(),
                        source,
                    })?,
            )
        }
        _ => None,
    };
    let request = GerRequest::new(texts, phonetic, language)?;
    let messages = prompts::build_ger_messages(&request, &ctx.catalog)?;
    let model_id = if condition.model_id.is_empty() {
        ctx.chat.model_id().to_string()
    } else {
        condition.model_id.clone()
    };
    let started = Instant::now();
    let raw = ctx
        .chat
        .chat(&ChatExchange::new(model_id, 0.0, messages))
        .map_err(|source| GerError::Service {
            utterance_id: id.clone(),
            source,
        })?;
    let latency_ms = started.elapsed().as_secs_f64() * 1000.0;
    let (corrected, fallback) = match prompts::parse_ger_response(&raw) {
        Ok(text) => (text, false),
        Err(PromptError::EmptyCorrection) => (nbest.one_best().to_string(), true),
        Err(e) => return Err(e.into()),
    };
    Ok(GerOutput {
        utterance_id: id,
        corrected,
        condition: condition.label(),
        raw_response: raw,
        latency_ms,
        fallback,
    })
}

/// Anything that can correct one utterance given its N-best hypotheses.
pub trait Corrector: Send + Sync {
    fn correct(&self, nbest: &HypothesisSet) -> Result<GerOutput, GerError>;
    fn name(&self) -> &str;
}

/// The production corrector: an LLM called through `correct_one`.
pub struct LlmCorrector {
    pub ctx: GerContext,
    pub condition: GerCondition,
    pub language: Language,
}

impl Corrector for LlmCorrector {
    fn correct(&self, nbest: &HypothesisSet) -> Result<GerOutput, GerError> {
        correct_one(&self.ctx, nbest, &self.condition, self.language)
    }

    fn name(&self) -> &str {
        "llm"
    }
}

/// Passes the 1-best through unchanged (the raw-ASR baseline).
pub struct IdentityCorrector;

impl Corrector for IdentityCorrector {
    fn correct(&self, nbest: &HypothesisSet) -> Result<GerOutput, GerError> {
        Ok(GerOutput {
            utterance_id: nbest.utterance_id.clone(),
            corrected: nbest.one_best().to_string(),
            condition: "identity".into(),
            raw_response: nbest.one_best().to_string(),
            latency_ms: 0.0,
            fallback: false,
        })
    }

    fn name(&self) -> &str {
        "identity"
    }
}

/// Token-substitution corrector trained from error-pair examples: every SUB
/// op seen between a reference and its 1-best votes for a hyp-token ->
/// ref-token rewrite; correction applies the majority rewrite per token.
pub struct LookupCorrector {
    subs: BTreeMap<String, String>,
    policy: NormPolicy,
}

impl LookupCorrector {
    pub fn train(examples: &[ErrorPairExample], policy: NormPolicy) -> Self {
        let mut votes: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for example in examples {
            let r = metrics::normalize(&example.reference, &policy);
            let h = metrics::normalize(example.nbest.one_best(), &policy);
            for op in metrics::align(&r, &h).ops {
                if op.kind == metrics::OpKind::Sub {
                    let hyp = op.hyp_token.expect("sub has hyp token");
                    let reference = op.ref_token.expect("sub has ref token");
                    *votes.entry(hyp).or_default().entry(reference).or_default() += 1;
                }
            }
        }
        let subs = votes
            .into_iter()
            .map(|(hyp, candidates)| {
                let best = candidates
                    .into_iter()
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .expect("non-empty candidates")
                    .0;
                (hyp, best)
            })
            .collect();
        LookupCorrector { subs, policy }
    }

    pub fn rewrite_count(&self) -> usize {
        self.subs.len()
    }
}

impl Corrector for LookupCorrector {
    fn correct(&self, nbest: &HypothesisSet) -> Result<GerOutput, GerError> {
        let tokens = metrics::normalize(nbest.one_best(), &self.policy);
        let corrected: Vec<String> = tokens
            .into_iter()
            .map(|t| self.subs.get(&t).cloned().unwrap_or(t))
            .collect();
        let corrected = metrics::join_tokens(&corrected, &self.policy);
        Ok(GerOutput {
            utterance_id: nbest.utterance_id.clone(),
            corrected: corrected.clone(),
            condition: "lookup".into(),
            raw_response: corrected,
            latency_ms: 0.0,
            fallback: false,
        })
    }

    fn name(&self) -> &str {
        "lookup"
    }
}

/// Builds a corrector from training examples (used by parameter sweeps).
pub trait CorrectorFactory: Sync {
    fn build(&self, training: &[ErrorPairExample]) -> Result<Box<dyn Corrector>, GerError>;
}

/// Factory for `LookupCorrector`.
pub struct LookupCorrectorFactory {
    pub policy: NormPolicy,
}

impl CorrectorFactory for LookupCorrectorFactory {
    fn build(&self, training: &[ErrorPairExample]) -> Result<Box<dyn Corrector>, GerError> {
        Ok(Box::new(LookupCorrector::train(training, self.policy)))
    }
}

fn load_checkpoint(path: &Path) -> BTreeMap<String, GerOutput> {
    let mut done = BTreeMap::new();
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(_) => return done,
    };
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<GerOutput>(line) {
            Ok(output) => {
                done.insert(output.utterance_id.clone(), output);
            }
            // A torn final line from an interrupted run is expected; anything
            // unparseable is simply redone.
            Err(e) => log::warn!("skipping unparseable checkpoint line: {e}"),
        }
    }
    done
}

/// Run a corrector over an evaluation set. Outputs come back in eval-set
/// order regardless of completion order. With a checkpoint path, finished
/// utterances are appended as they complete and skipped on resume.
pub fn run_eval_with(
    corrector: &dyn Corrector,
    eval_set: &EvalSet,
    hypotheses: &BTreeMap<String, HypothesisSet>,
    concurrency: usize,
    checkpoint: Option<&Path>,
) -> Result<Vec<GerOutput>, GerError> {
    let missing: Vec<String> = eval_set
        .utterances
        .iter()
        .filter(|u| !hypotheses.contains_key(&u.id))
        .map(|u| u.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(GerError::MissingHypotheses { ids: missing });
    }

    let mut done = match checkpoint {
        Some(path) => load_checkpoint(path),
        None => BTreeMap::new(),
    };
    let ckpt_file = match checkpoint {
        Some(path) => {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            Some(Mutex::new(
                std::fs::OpenOptions::new().create(true).append(true).open(path)?,
            ))
        }
        None => None,
    };

    let pending: Vec<&HypothesisSet> = eval_set
        .utterances
        .iter()
        .filter(|u| !done.contains_key(&u.id))
        .map(|u| &hypotheses[&u.id])
        .collect();

    let fresh = bounded_map(pending, concurrency.max(1), |_, set| {
        let output = corrector.correct(set)?;
        if let Some(file) = &ckpt_file {
            let line = serde_json::to_string(&output).expect("output serializes");
            let mut f = file.lock().expect("checkpoint poisoned");
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        Ok::<GerOutput, GerError>(output)
    });
    for result in fresh {
        let output = result?;
        done.insert(output.utterance_id.clone(), output);
    }

    Ok(eval_set
        .utterances
        .iter()
        .map(|u| done.remove(&u.id).expect("output present"))
        .collect())
}

/// LLM-backed evaluation run under one experimental condition.
pub fn run_eval(
    ctx: &GerContext,
    eval_set: &EvalSet,
    hypotheses: &BTreeMap<String, HypothesisSet>,
    condition: &GerCondition,
    language: Language,
    checkpoint: Option<&Path>,
) -> Result<Vec<GerOutput>, GerError> {
    let corrector = LlmCorrector {
        ctx: ctx.clone(),
        condition: condition.clone(),
        language,
    };
    run_eval_with(&corrector, eval_set, hypotheses, ctx.concurrency, checkpoint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EvalUtterance, Hypothesis};
    use crate::services::mock::MockChatBackend;
    use crate::services::ClientConfig;

    fn context(backend: MockChatBackend) -> GerContext {
        let catalog = Arc::new(PromptCatalog::bundled());
        let chat = Arc::new(ChatClient::new(Box::new(backend), "mock-model", &ClientConfig::default()));
        GerContext {
            chat,
            phoneticizer: Arc::new(Phoneticizer::bundled(catalog.clone())),
            catalog,
            nbest_limit: 5,
            concurrency: 2,
        }
    }

    fn hyp_set(id: &str, texts: &[&str]) -> HypothesisSet {
        HypothesisSet::new(
            id,
            texts
                .iter()
                .map(|t| Hypothesis { text: t.to_string(), score: None })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn condition_scheme_pairing_enforced() {
        assert!(GerCondition::new(GerMode::Nbest, Some(PhoneticScheme::Lsp), "m").is_err());
        assert!(GerCondition::new(GerMode::NbestPhonetic, None, "m").is_err());
        assert!(GerCondition::new(GerMode::NbestPhonetic, Some(PhoneticScheme::Ipa), "m").is_ok());
        assert_eq!(
            GerCondition::new(GerMode::NbestPhonetic, Some(PhoneticScheme::Lsp), "m")
                .unwrap()
                .label(),
            "nbest+lsp"
        );
    }

    #[test]
    fn echo_mock_returns_one_best() {
        let ctx = context(MockChatBackend::echo_first_numbered());
        let condition = GerCondition::new(GerMode::Nbest, None, "m").unwrap();
        let out = correct_one(
            &ctx,
            &hyp_set("u1", &["the son is rising", "the sun is rising"]),
            &condition,
            Language::En,
        )
        .unwrap();
        assert_eq!(out.corrected, "the son is rising");
        assert!(!out.fallback);
    }

    #[test]
    fn empty_response_falls_back_to_one_best() {
        let ctx = context(MockChatBackend::fixed(""));
        let condition = GerCondition::new(GerMode::Nbest, None, "m").unwrap();
        let out = correct_one(
            &ctx,
            &hyp_set("u1", &["the son is rising"]),
            &condition,
            Language::En,
        )
        .unwrap();
        assert_eq!(out.corrected, "the son is rising");
        assert!(out.fallback);
    }

    #[test]
    fn phonetic_condition_embeds_pronunciation() {
        let ctx = context(MockChatBackend::echo_first_numbered());
        let condition =
            GerCondition::new(GerMode::NbestPhonetic, Some(PhoneticScheme::Lsp), "m").unwrap();
        // 1-best "the sun is rising" hits the golden LSP cache.
        let out = correct_one(
            &ctx,
            &hyp_set("u1", &["the sun is rising", "the son is rising"]),
            &condition,
            Language::En,
        )
        .unwrap();
        assert!(!out.fallback);
        assert_eq!(ctx.chat.stats().calls(), 1);
    }

    fn observed_context(backend: Arc<MockChatBackend>) -> GerContext {
        let catalog = Arc::new(PromptCatalog::bundled());
        let chat = Arc::new(ChatClient::new(Box::new(backend), "mock-model", &ClientConfig::default()));
        GerContext {
            chat,
            phoneticizer: Arc::new(Phoneticizer::bundled(catalog.clone())),
            catalog,
            nbest_limit: 5,
            concurrency: 1,
        }
    }

    #[test]
    fn phonetic_prompt_carries_the_lsp_line() {
        let backend = Arc::new(MockChatBackend::echo_first_numbered());
        let ctx = observed_context(backend.clone());
        let condition =
            GerCondition::new(GerMode::NbestPhonetic, Some(PhoneticScheme::Lsp), "m").unwrap();
        correct_one(
            &ctx,
            &hyp_set("u1", &["the sun is rising", "the son is rising"]),
            &condition,
            Language::En,
        )
        .unwrap();
        let exchange = backend.last_exchange().unwrap();
        let user = exchange.last_user_content().unwrap();
        assert!(user.contains("1. the sun is rising"));
        assert!(user.contains("2. the son is rising"));
        assert!(
            user.contains("Pronunciation: thuh sun iz rahy-zing"),
            "prompt was: {user}"
        );
    }

    #[test]
    fn prompt_only_equals_nbest_with_one_hypothesis() {
        // Both conditions must send byte-identical exchanges when only one
        // hypothesis exists.
        let set = hyp_set("u1", &["only one"]);
        let mut sent = Vec::new();
        for mode in [GerMode::PromptOnly, GerMode::Nbest] {
            let backend = Arc::new(MockChatBackend::echo_first_numbered());
            let ctx = observed_context(backend.clone());
            let condition = GerCondition::new(mode, None, "m").unwrap();
            correct_one(&ctx, &set, &condition, Language::En).unwrap();
            sent.push(backend.last_exchange().unwrap());
        }
        assert_eq!(sent[0], sent[1]);
        assert_eq!(sent[0].last_user_content().unwrap(), "1. only one");
    }

    fn toy_eval(n: usize) -> (EvalSet, BTreeMap<String, HypothesisSet>) {
        let utterances: Vec<EvalUtterance> = (0..n)
            .map(|i| EvalUtterance {
                id: format!("u{i}"),
                reference: format!("sentence number {i}"),
                language: Language::En,
                audio_ref: None,
            })
            .collect();
        let hyps = utterances
            .iter()
            .map(|u| (u.id.clone(), hyp_set(&u.id, &[u.reference.as_str()])))
            .collect();
        (EvalSet::new(utterances).unwrap(), hyps)
    }

    #[test]
    fn run_eval_preserves_order() {
        let ctx = context(MockChatBackend::echo_first_numbered());
        let condition = GerCondition::new(GerMode::Nbest, None, "m").unwrap();
        let (eval, hyps) = toy_eval(10);
        let outputs = run_eval(&ctx, &eval, &hyps, &condition, Language::En, None).unwrap();
        assert_eq!(outputs.len(), 10);
        for (u, o) in eval.utterances.iter().zip(&outputs) {
            assert_eq!(u.id, o.utterance_id);
            assert_eq!(o.corrected, u.reference);
        }
    }

    #[test]
    fn empty_eval_set_gives_empty_output() {
        let ctx = context(MockChatBackend::echo_first_numbered());
        let condition = GerCondition::new(GerMode::Nbest, None, "m").unwrap();
        let (eval, hyps) = toy_eval(0);
        let outputs = run_eval(&ctx, &eval, &hyps, &condition, Language::En, None).unwrap();
        assert!(outputs.is_empty());
    }

    #[test]
    fn missing_hypotheses_reported_with_ids() {
        let ctx = context(MockChatBackend::echo_first_numbered());
        let condition = GerCondition::new(GerMode::Nbest, None, "m").unwrap();
        let (eval, mut hyps) = toy_eval(3);
        hyps.remove("u1");
        let err = run_eval(&ctx, &eval, &hyps, &condition, Language::En, None).unwrap_err();
        match err {
            GerError::MissingHypotheses { ids } => assert_eq!(ids, vec!["u1".to_string()]),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn resume_skips_checkpointed_utterances() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("outputs.ckpt.jsonl");
        let condition = GerCondition::new(GerMode::Nbest, None, "m").unwrap();
        let (eval, hyps) = toy_eval(10);

        // First run: complete everything, keep only the first 6 checkpoint
        // lines to simulate an interruption after 6 utterances.
        let ctx = context(MockChatBackend::echo_first_numbered());
        run_eval(&ctx, &eval, &hyps, &condition, Language::En, Some(&ckpt)).unwrap();
        let lines: Vec<String> = std::fs::read_to_string(&ckpt)
            .unwrap()
            .lines()
            .map(str::to_string)
            .collect();
        assert_eq!(lines.len(), 10);
        std::fs::write(&ckpt, format!("{}\n", lines[..6].join("\n"))).unwrap();

        // Resume with a fresh client: exactly 4 new service calls.
        let ctx2 = context(MockChatBackend::echo_first_numbered());
        let outputs = run_eval(&ctx2, &eval, &hyps, &condition, Language::En, Some(&ckpt)).unwrap();
        assert_eq!(outputs.len(), 10);
        assert_eq!(ctx2.chat.stats().calls(), 4);
    }

    #[test]
    fn lookup_corrector_learns_substitutions() {
        let policy = NormPolicy::en_wer();
        let examples = vec![ErrorPairExample {
            reference: "the anemia persists".into(),
            nbest: hyp_set("t", &["the enemia persists"]),
            phonetic: None,
            rare_word: "anemia".into(),
            transcript_idx: 1,
            speaker_id: 1,
        }];
        let corrector = LookupCorrector::train(&examples, policy);
        assert_eq!(corrector.rewrite_count(), 1);
        let out = corrector.correct(&hyp_set("u", &["severe enemia today"])).unwrap();
        assert_eq!(out.corrected, "severe anemia today");
    }
}
