//! Synthetic error-pair construction: for each rare word, generate T
//! transcripts, synthesize S utterances per transcript, transcribe each into
//! an N-best list, drop candidates whose 1-best already matches the
//! reference, and export the survivors as fine-tuning data.
//!
//! Stage outputs are checkpointed per (config, word, transcript, speaker), so
//! interrupted runs resume without re-paying service calls and warm re-runs
//! make no service calls at all.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{ErrorPairExample, Hypothesis, HypothesisSet, RareWordList};
use crate::lang::Language;
use crate::metrics::{self, NormPolicy};
use crate::phonetics::{Phoneticizer, PhoneticScheme, PhoneticsError};
use crate::prompts::{self, PromptCatalog, PromptError};
use crate::services::{
    bounded_map, AsrClient, ChatClient, ClientConfig, ConfusionModel, JsonCache, ServiceError,
    SimAsrBackend, SimChatBackend, SimTtsBackend, TtsClient, TtsJob,
};
use crate::util::{sha256_hex, JsonlError, SplitMix64};

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("invalid build config: {0}")]
    InvalidConfig(String),
    #[error("cannot export an empty example list")]
    EmptyExamples,
    #[error("{stage} failed for word `{word}`: {source}")]
    Service {
        stage: &'static str,
        word: String,
        #[source]
        source: ServiceError,
    },
    #[error("phonetic context failed for word `{word}`: {source}")]
    Phonetics {
        word: String,
        #[source]
        source: PhoneticsError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Dataset construction parameters. Defaults follow the experimental setup:
/// T=4 transcripts per word, S=7 speakers per transcript, N=5 hypotheses,
/// and a 4:1 train/validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub language: Language,
    pub transcripts_per_word: u32,
    pub speakers_per_transcript: u32,
    pub nbest: u32,
    pub split_train: u32,
    pub split_val: u32,
    pub seed: u64,
    pub phonetic_scheme: Option<PhoneticScheme>,
    pub gen_temperature: f64,
    pub max_gen_retries: u32,
    pub voice_id: String,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            language: Language::En,
            transcripts_per_word: 4,
            speakers_per_transcript: 7,
            nbest: 5,
            split_train: 4,
            split_val: 1,
            seed: 0,
            phonetic_scheme: None,
            gen_temperature: 0.8,
            max_gen_retries: 2,
            voice_id: "default".into(),
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<(), BuildError> {
        if self.transcripts_per_word == 0
            || self.speakers_per_transcript == 0
            || self.nbest == 0
        {
            return Err(BuildError::InvalidConfig(
                "transcripts, speakers, and nbest must all be >= 1".into(),
            ));
        }
        if self.split_train == 0 || self.split_val == 0 {
            return Err(BuildError::InvalidConfig("split ratio parts must be positive".into()));
        }
        Ok(())
    }

    /// Stable fingerprint of everything that shapes generated data; used to
    /// key checkpoints.
    pub fn fingerprint(&self, words: &RareWordList) -> String {
        let cfg = serde_json::to_string(self).expect("config serializes");
        sha256_hex(format!("{cfg}\u{0}{}", words.to_text()).as_bytes())
    }
}

/// Keyed store for stage outputs under one config fingerprint.
pub struct CheckpointStore {
    cache: JsonCache,
    fingerprint: String,
}

impl CheckpointStore {
    pub fn new(root: &Path, fingerprint: String) -> Self {
        CheckpointStore {
            cache: JsonCache::new(root),
            fingerprint,
        }
    }

    fn key(&self, stage: &str, item: &str) -> String {
        format!("{}\u{0}{stage}\u{0}{item}", self.fingerprint)
    }

    fn get<T: serde::de::DeserializeOwned>(&self, stage: &str, item: &str) -> Option<T> {
        self.cache.get(&self.key(stage, item)).ok().flatten()
    }

    fn put<T: Serialize>(&self, stage: &str, item: &str, value: &T) -> Result<(), ServiceError> {
        self.cache.put(&self.key(stage, item), value)
    }
}

/// Service clients a build runs against.
pub struct BuildClients {
    pub chat: Arc<ChatClient>,
    pub tts: Arc<TtsClient>,
    pub asr: Arc<AsrClient>,
    pub phoneticizer: Arc<Phoneticizer>,
    pub catalog: Arc<PromptCatalog>,
    pub concurrency: usize,
}

impl BuildClients {
    /// Fully simulated clients sharing one blob store: templated chat,
    /// pseudo-audio TTS, and a confusion-model ASR.
    pub fn simulated(
        store_root: &Path,
        model: ConfusionModel,
        sim_seed: u64,
        max_speakers: u32,
        client_cfg: &ClientConfig,
        catalog: Arc<PromptCatalog>,
    ) -> Result<Self, ServiceError> {
        let store = Arc::new(crate::services::BlobStore::open(store_root)?);
        let chat = Arc::new(ChatClient::new(
            Box::new(SimChatBackend::new(sim_seed)),
            "sim-chat-model",
            client_cfg,
        ));
        let tts = Arc::new(TtsClient::new(
            Box::new(SimTtsBackend),
            store.clone(),
            max_speakers,
            client_cfg,
        ));
        let asr = Arc::new(AsrClient::new(
            Box::new(SimAsrBackend::new(model)?),
            store,
            client_cfg,
        ));
        let phoneticizer = Arc::new(Phoneticizer::bundled(catalog.clone()).with_chat(chat.clone()));
        Ok(BuildClients {
            chat,
            tts,
            asr,
            phoneticizer,
            catalog,
            concurrency: client_cfg.concurrency,
        })
    }

    pub fn service_calls(&self) -> usize {
        self.chat.stats().calls() + self.tts.stats().calls() + self.asr.stats().calls()
    }
}

/// Per-word candidate counts for the build report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordBuildCount {
    pub word: String,
    pub candidates: usize,
    pub kept: usize,
}

/// What happened during a build: candidate arithmetic, filtering, retries,
/// and skipped words.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BuildReport {
    pub n_candidates: usize,
    pub n_dropped_no_error: usize,
    pub n_kept: usize,
    pub n_retries: usize,
    pub skipped_words: Vec<String>,
    pub per_word: Vec<WordBuildCount>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AsrStage {
    tts_locator: String,
    nbest: Vec<Hypothesis>,
}

struct RawCandidate {
    word: String,
    word_idx: usize,
    reference: String,
    transcript_idx: u32,
    speaker_id: u32,
    nbest: Vec<Hypothesis>,
}

enum WordOutcome {
    Skipped { retries: usize },
    Produced { retries: usize, candidates: Vec<RawCandidate> },
}

fn generate_word(
    word_idx: usize,
    word: &str,
    domain_hint: Option<&str>,
    cfg: &BuildConfig,
    clients: &BuildClients,
    ckpt: Option<&CheckpointStore>,
    policy: &NormPolicy,
) -> Result<WordOutcome, BuildError> {
    let t = cfg.transcripts_per_word;
    // Stage 1: T transcripts from the LLM, retrying short generations.
    let mut retries = 0usize;
    let transcripts: Option<Vec<String>> =
        match ckpt.and_then(|c| c.get::<Vec<String>>("transcripts", word)) {
            Some(cached) => Some(cached),
            None => {
                let prompt = clients
                    .catalog
                    .render_transcript_gen(cfg.language, word, t, domain_hint)?;
                let mut found = None;
                for attempt in 0..=cfg.max_gen_retries {
                    if attempt > 0 {
                        retries += 1;
                    }
                    let response = clients
                        .chat
                        .chat_user(&prompt, cfg.gen_temperature)
                        .map_err(|source| BuildError::Service {
                            stage: "transcript generation",
                            word: word.to_string(),
                            source,
                        })?;
                    match prompts::parse_generated_transcripts(&response, t, word, policy) {
                        Ok(items) => {
                            found = Some(items);
                            break;
                        }
                        Err(PromptError::ShortGeneration { found: got, expected }) => {
                            log::warn!(
                                "word {word:?}: attempt {attempt} yielded {got}/{expected} transcripts"
                            );
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                if let (Some(items), Some(c)) = (&found, ckpt) {
                    c.put("transcripts", word, items).map_err(|source| BuildError::Service {
                        stage: "checkpoint",
                        word: word.to_string(),
                        source,
                    })?;
                }
                found
            }
        };
    let transcripts = match transcripts {
        Some(t) => t,
        None => return Ok(WordOutcome::Skipped { retries }),
    };

    // Stage 2+3: synthesize S speakers per transcript, transcribe each.
    let mut candidates = Vec::with_capacity((t * cfg.speakers_per_transcript) as usize);
    for (t_pos, reference) in transcripts.iter().enumerate() {
        let transcript_idx = t_pos as u32 + 1;
        for speaker_id in 1..=cfg.speakers_per_transcript {
            let item = format!("{word}|{transcript_idx}|{speaker_id}");
            let utterance_id = format!("w{word_idx:04}-t{transcript_idx}-s{speaker_id}");
            let stage = match ckpt.and_then(|c| c.get::<AsrStage>("asr", &item)) {
                Some(cached) => cached,
                None => {
                    let job = TtsJob {
                        text: reference.clone(),
                        speaker_id,
                        voice_id: cfg.voice_id.clone(),
                        language: cfg.language,
                    };
                    let locator = clients.tts.synthesize(&job).map_err(|source| {
                        BuildError::Service { stage: "tts", word: word.to_string(), source }
                    })?;
                    let asr = clients
                        .asr
                        .transcribe(&locator, &utterance_id, cfg.nbest as usize)
                        .map_err(|source| BuildError::Service {
                            stage: "asr",
                            word: word.to_string(),
                            source,
                        })?;
                    let stage = AsrStage { tts_locator: locator.0, nbest: asr.nbest };
                    if let Some(c) = ckpt {
                        c.put("asr", &item, &stage).map_err(|source| BuildError::Service {
                            stage: "checkpoint",
                            word: word.to_string(),
                            source,
                        })?;
                    }
                    stage
                }
            };
            candidates.push(RawCandidate {
                word: word.to_string(),
                word_idx,
                reference: reference.clone(),
                transcript_idx,
                speaker_id,
                nbest: stage.nbest,
            });
        }
    }
    Ok(WordOutcome::Produced { retries, candidates })
}

/// Run the full generation pipeline over a rare-word list.
///
/// Candidates whose 1-best equals the reference under the language's
/// normalization policy are dropped; candidates with errors (including
/// errors only in non-rare words) are kept. Output order is deterministic:
/// (word order, transcript index, speaker id).
pub fn generate_pairs(
    words: &RareWordList,
    cfg: &BuildConfig,
    clients: &BuildClients,
    ckpt: Option<&CheckpointStore>,
) -> Result<(Vec<ErrorPairExample>, BuildReport), BuildError> {
    cfg.validate()?;
    let policy = NormPolicy::for_language(cfg.language);

    let jobs: Vec<(usize, String, Option<String>)> = words
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (i, e.surface.clone(), e.domain_hint.clone()))
        .collect();
    let outcomes = bounded_map(jobs, clients.concurrency, |_, (idx, word, hint)| {
        generate_word(idx, &word, hint.as_deref(), cfg, clients, ckpt, &policy)
            .map(|outcome| (word, outcome))
    });

    let mut report = BuildReport::default();
    let mut kept_raw: Vec<RawCandidate> = Vec::new();
    for outcome in outcomes {
        let (word, outcome) = outcome?;
        match outcome {
            WordOutcome::Skipped { retries } => {
                report.n_retries += retries;
                report.skipped_words.push(word);
            }
            WordOutcome::Produced { retries, candidates } => {
                report.n_retries += retries;
                report.n_candidates += candidates.len();
                let mut kept_here = 0usize;
                let total_here = candidates.len();
                for candidate in candidates {
                    let ref_norm = metrics::normalize(&candidate.reference, &policy);
                    let hyp_norm = metrics::normalize(&candidate.nbest[0].text, &policy);
                    if ref_norm == hyp_norm {
                        report.n_dropped_no_error += 1;
                    } else {
                        kept_here += 1;
                        kept_raw.push(candidate);
                    }
                }
                report.per_word.push(WordBuildCount {
                    word,
                    candidates: total_here,
                    kept: kept_here,
                });
            }
        }
    }
    report.n_kept = kept_raw.len();

    // Attach phonetic context (from the 1-best hypothesis) when configured.
    let examples = bounded_map(kept_raw, clients.concurrency, |_, raw| {
        let phonetic = match cfg.phonetic_scheme {
            Some(scheme) => Some(
                clients
                    .phoneticizer
                    .convert(scheme, &raw.nbest[0].text, cfg.language)
                    .map_err(|source| BuildError::Phonetics {
                        word: raw.word.clone(),
                        source,
                    })?,
            ),
            None => None,
        };
        let utterance_id =
            format!("w{:04}-t{}-s{}", raw.word_idx, raw.transcript_idx, raw.speaker_id);
        Ok::<ErrorPairExample, BuildError>(ErrorPairExample {
            reference: raw.reference,
            nbest: HypothesisSet { utterance_id, hypotheses: raw.nbest },
            phonetic,
            rare_word: raw.word,
            transcript_idx: raw.transcript_idx,
            speaker_id: raw.speaker_id,
        })
    });
    let examples: Vec<ErrorPairExample> = examples.into_iter().collect::<Result<_, _>>()?;
    Ok((examples, report))
}

/// Deterministic shuffled split into train/validation at `train:val`. With
/// fewer examples than ratio parts, everything goes to train (degenerate
/// split, logged).
pub fn split(
    examples: Vec<ErrorPairExample>,
    train_parts: u32,
    val_parts: u32,
    seed: u64,
) -> (Vec<ErrorPairExample>, Vec<ErrorPairExample>) {
    let parts = (train_parts + val_parts) as usize;
    let n = examples.len();
    if n < parts.max(2) {
        log::warn!("degenerate split: {n} examples for a {train_parts}:{val_parts} ratio; all to train");
        return (examples, Vec::new());
    }
    let mut indices: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut indices);
    let n_val = ((n as f64 * val_parts as f64 / parts as f64).round() as usize).clamp(1, n - 1);
    let mut in_val = vec![false; n];
    for &idx in &indices[..n_val] {
        in_val[idx] = true;
    }
    let mut train = Vec::with_capacity(n - n_val);
    let mut val = Vec::with_capacity(n_val);
    for (idx, example) in examples.into_iter().enumerate() {
        if in_val[idx] {
            val.push(example);
        } else {
            train.push(example);
        }
    }
    (train, val)
}

/// Hashes and counts for one exported dataset file pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub n_records: usize,
    pub messages_sha256: String,
    pub examples_sha256: String,
}

#[derive(Serialize, Deserialize)]
struct FinetuneRecord {
    messages: Vec<crate::services::ChatMessage>,
}

/// Export chat-format fine-tuning data plus a sidecar of full examples.
///
/// `<stem>.jsonl` holds `{"messages": [system, user, assistant]}` records
/// (assistant = reference); `<stem>.examples.jsonl` holds the full
/// `ErrorPairExample` records for lossless round-trips.
pub fn export_finetune(
    examples: &[ErrorPairExample],
    catalog: &PromptCatalog,
    language: Language,
    out_dir: &Path,
    stem: &str,
) -> Result<ExportManifest, BuildError> {
    if examples.is_empty() {
        return Err(BuildError::EmptyExamples);
    }
    let mut messages_buf = String::new();
    for example in examples {
        let request = prompts::GerRequest::new(
            example.nbest.texts().map(str::to_string).collect(),
            example.phonetic.clone(),
            language,
        )?;
        let mut messages = prompts::build_ger_messages(&request, catalog)?;
        messages.push(crate::services::ChatMessage::assistant(example.reference.clone()));
        let record = FinetuneRecord { messages };
        messages_buf.push_str(&serde_json::to_string(&record).expect("record serializes"));
        messages_buf.push('\n');
    }
    let messages_path = out_dir.join(format!("{stem}.jsonl"));
    crate::util::atomic_write(&messages_path, messages_buf.as_bytes()).map_err(|source| {
        BuildError::Io { path: messages_path.display().to_string(), source }
    })?;

    let examples_path = out_dir.join(format!("{stem}.examples.jsonl"));
    crate::util::write_jsonl(&examples_path, examples)?;
    let examples_bytes = std::fs::read(&examples_path).map_err(|source| BuildError::Io {
        path: examples_path.display().to_string(),
        source,
    })?;

    Ok(ExportManifest {
        n_records: examples.len(),
        messages_sha256: sha256_hex(messages_buf.as_bytes()),
        examples_sha256: sha256_hex(&examples_bytes),
    })
}

/// Read back a `.examples.jsonl` sidecar.
pub fn read_examples(path: &Path) -> Result<Vec<ErrorPairExample>, BuildError> {
    Ok(crate::util::read_jsonl(path)?)
}
