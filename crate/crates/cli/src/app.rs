//! Resolved run settings and service client assembly for both backends.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};

use gerkit::databuild::{BuildClients, BuildConfig};
use gerkit::lang::Language;
use gerkit::phonetics::{ConversionCache, G2pLexicon, OovPolicy, Phoneticizer};
use gerkit::prompts::PromptCatalog;
use gerkit::services::{
    AsrClient, AuditLog, BlobStore, ChatClient, ClientConfig, HttpAsrBackend, HttpChatBackend,
    HttpTtsBackend, RetryPolicy, SimAsrBackend, SimChatBackend, SimTtsBackend, TtsClient,
};

use crate::config::{BackendKind, RunConfig};

pub const CHAT_KEY_VAR: &str = "GERKIT_CHAT_API_KEY";
pub const TTS_KEY_VAR: &str = "GERKIT_TTS_API_KEY";
pub const ASR_KEY_VAR: &str = "GERKIT_ASR_API_KEY";

/// Generous speaker-id bound for clients; per-run S comes from the build
/// config and is always far below this.
const MAX_SPEAKERS: u32 = 64;

pub struct App {
    pub cfg: RunConfig,
    pub backend: BackendKind,
    pub seed: u64,
    pub language: Language,
    pub out_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub catalog: Arc<PromptCatalog>,
}

impl App {
    pub fn new(
        cfg: RunConfig,
        backend_flag: Option<BackendKind>,
        seed_flag: Option<u64>,
        out_dir_flag: Option<PathBuf>,
        language_flag: Option<&str>,
    ) -> Result<Self> {
        let backend = match backend_flag {
            Some(b) => b,
            None => match cfg.run.backend.as_deref() {
                Some(tag) => tag.parse()?,
                None => BackendKind::Simulated,
            },
        };
        let seed = seed_flag.or(cfg.run.seed).unwrap_or(0);
        let language = match language_flag.or(cfg.run.language.as_deref()) {
            Some(tag) => tag.parse::<Language>().map_err(|e| anyhow!(e))?,
            None => Language::En,
        };
        let out_dir = out_dir_flag
            .or_else(|| cfg.run.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("gerkit-out"));
        let cache_dir = cfg
            .run
            .cache_dir
            .clone()
            .unwrap_or_else(|| out_dir.join("cache"));
        let catalog = match &cfg.paths.prompt_catalog {
            Some(path) => Arc::new(PromptCatalog::load(path).context("loading prompt catalog")?),
            None => Arc::new(PromptCatalog::bundled()),
        };
        Ok(App {
            cfg,
            backend,
            seed,
            language,
            out_dir,
            cache_dir,
            catalog,
        })
    }

    fn client_config(&self) -> ClientConfig {
        ClientConfig {
            retry: RetryPolicy {
                max_retries: self.cfg.services.retry_limit,
                backoff_ms: self.cfg.services.backoff_ms,
            },
            concurrency: self.cfg.services.concurrency,
            cache_dir: Some(self.cache_dir.clone()),
        }
    }

    fn audit(&self) -> Result<Option<Arc<AuditLog>>> {
        if !self.cfg.run.audit {
            return Ok(None);
        }
        Ok(Some(AuditLog::open(&self.out_dir.join("audit.jsonl"))?))
    }

    pub fn chat_client(&self) -> Result<Arc<ChatClient>> {
        let cfg = self.client_config();
        let model = self
            .cfg
            .services
            .chat_model
            .clone()
            .unwrap_or_else(|| "gpt-4o-mini".to_string());
        let client = match self.backend {
            BackendKind::Simulated => {
                ChatClient::new(Box::new(SimChatBackend::new(self.seed)), model, &cfg)
            }
            BackendKind::Real => {
                let endpoint = self
                    .cfg
                    .services
                    .chat_endpoint
                    .clone()
                    .ok_or_else(|| anyhow!("[services].chat_endpoint is required with --backend real"))?;
                let key = std::env::var(CHAT_KEY_VAR).ok();
                ChatClient::new(
                    Box::new(HttpChatBackend::new(endpoint, key, self.cfg.services.timeout_secs)?),
                    model,
                    &cfg,
                )
            }
        };
        let client = match self.audit()? {
            Some(audit) => client.with_audit(audit),
            None => client,
        };
        Ok(Arc::new(client))
    }

    pub fn phoneticizer(&self, chat: Option<Arc<ChatClient>>) -> Result<Arc<Phoneticizer>> {
        let mut p = Phoneticizer::bundled(self.catalog.clone());
        if let Some(path) = &self.cfg.paths.ipa_lexicon {
            let arpabet = match &self.cfg.paths.arpabet_lexicon {
                Some(a) => G2pLexicon::load(a, OovPolicy::PassThrough)?,
                None => G2pLexicon::bundled_en_arpabet(),
            };
            p = p.with_en_lexicons(G2pLexicon::load(path, OovPolicy::PassThrough)?, arpabet);
        } else if let Some(a) = &self.cfg.paths.arpabet_lexicon {
            p = p.with_en_lexicons(
                G2pLexicon::bundled_en_ipa(),
                G2pLexicon::load(a, OovPolicy::PassThrough)?,
            );
        }
        if let Some(path) = &self.cfg.paths.ja_lexicon {
            p = p.with_ja_lexicon(G2pLexicon::load(path, OovPolicy::PassThrough)?);
        }
        let cache_path = self
            .cfg
            .paths
            .lsp_cache
            .clone()
            .unwrap_or_else(|| self.cache_dir.join("conversions.jsonl"));
        p = p.with_cache(ConversionCache::open(&cache_path)?);
        if let Some(chat) = chat {
            p = p.with_chat(chat);
        }
        Ok(Arc::new(p))
    }

    /// Chat + TTS + ASR + phonetics, sharing one blob store and audit log.
    pub fn build_clients(&self) -> Result<BuildClients> {
        let cfg = self.client_config();
        let chat = self.chat_client()?;
        let store = Arc::new(BlobStore::open(self.cache_dir.join("store"))?);
        let audit = self.audit()?;
        let (tts, asr) = match self.backend {
            BackendKind::Simulated => {
                let model = self.cfg.confusion_model(self.seed)?;
                let tts = TtsClient::new(Box::new(SimTtsBackend), store.clone(), MAX_SPEAKERS, &cfg);
                let asr = AsrClient::new(Box::new(SimAsrBackend::new(model)?), store, &cfg);
                (tts, asr)
            }
            BackendKind::Real => {
                let tts_endpoint = self
                    .cfg
                    .services
                    .tts_endpoint
                    .clone()
                    .ok_or_else(|| anyhow!("[services].tts_endpoint is required with --backend real"))?;
                let asr_endpoint = self
                    .cfg
                    .services
                    .asr_endpoint
                    .clone()
                    .ok_or_else(|| anyhow!("[services].asr_endpoint is required with --backend real"))?;
                let tts = TtsClient::new(
                    Box::new(HttpTtsBackend::new(
                        tts_endpoint,
                        std::env::var(TTS_KEY_VAR).ok(),
                        self.cfg.services.timeout_secs,
                    )?),
                    store.clone(),
                    MAX_SPEAKERS,
                    &cfg,
                );
                let asr = AsrClient::new(
                    Box::new(HttpAsrBackend::new(
                        asr_endpoint,
                        std::env::var(ASR_KEY_VAR).ok(),
                        self.cfg.services.timeout_secs,
                    )?),
                    store,
                    &cfg,
                );
                (tts, asr)
            }
        };
        let (tts, asr) = match audit {
            Some(audit) => (
                tts.with_audit(audit.clone()),
                asr.with_audit(audit),
            ),
            None => (tts, asr),
        };
        let tts = Arc::new(tts);
        let asr = Arc::new(asr);
        let phoneticizer = self.phoneticizer(Some(chat.clone()))?;
        Ok(BuildClients {
            chat,
            tts,
            asr,
            phoneticizer,
            catalog: self.catalog.clone(),
            concurrency: self.cfg.services.concurrency,
        })
    }

    /// Build config assembled from the file with flag overrides.
    pub fn build_config(
        &self,
        transcripts: Option<u32>,
        speakers: Option<u32>,
        nbest: Option<u32>,
        scheme: Option<&str>,
    ) -> Result<BuildConfig> {
        let defaults = BuildConfig::default();
        let scheme_tag = match scheme {
            Some(s) => Some(s.to_string()),
            None => self.cfg.build.phonetic_scheme.clone(),
        };
        let phonetic_scheme = match scheme_tag {
            Some(tag) => Some(tag.parse().map_err(|e| anyhow!("{e}"))?),
            None => None,
        };
        Ok(BuildConfig {
            language: self.language,
            transcripts_per_word: transcripts
                .or(self.cfg.build.transcripts_per_word)
                .unwrap_or(defaults.transcripts_per_word),
            speakers_per_transcript: speakers
                .or(self.cfg.build.speakers_per_transcript)
                .unwrap_or(defaults.speakers_per_transcript),
            nbest: nbest.or(self.cfg.build.nbest).unwrap_or(defaults.nbest),
            split_train: self.cfg.build.split_train.unwrap_or(defaults.split_train),
            split_val: self.cfg.build.split_val.unwrap_or(defaults.split_val),
            seed: self.seed,
            phonetic_scheme,
            gen_temperature: self
                .cfg
                .build
                .gen_temperature
                .unwrap_or(defaults.gen_temperature),
            max_gen_retries: self
                .cfg
                .build
                .max_gen_retries
                .unwrap_or(defaults.max_gen_retries),
            voice_id: self
                .cfg
                .build
                .voice_id
                .clone()
                .unwrap_or(defaults.voice_id),
        })
    }

    pub fn require_simulated(&self, what: &str) -> Result<()> {
        if self.backend != BackendKind::Simulated {
            bail!("{what} requires --backend simulated (or pass the needed inputs explicitly)");
        }
        Ok(())
    }

    pub fn ensure_out_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("cannot create output dir {}", self.out_dir.display()))?;
        Ok(())
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}
