//! Run configuration: one TOML file, every section optional, with
//! per-command flag overrides applied on top.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use gerkit::services::{Confusable, ConfusionModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Simulated,
    Real,
}

impl std::str::FromStr for BackendKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "simulated" | "sim" => Ok(BackendKind::Simulated),
            "real" => Ok(BackendKind::Real),
            other => bail!("unknown backend `{other}` (expected simulated or real)"),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub build: BuildSection,
    #[serde(default)]
    pub services: ServicesSection,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub sim: SimSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub backend: Option<String>,
    pub seed: Option<u64>,
    pub language: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub audit: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            backend: None,
            seed: None,
            language: None,
            out_dir: None,
            cache_dir: None,
            audit: true,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildSection {
    pub transcripts_per_word: Option<u32>,
    pub speakers_per_transcript: Option<u32>,
    pub nbest: Option<u32>,
    pub split_train: Option<u32>,
    pub split_val: Option<u32>,
    pub phonetic_scheme: Option<String>,
    pub gen_temperature: Option<f64>,
    pub max_gen_retries: Option<u32>,
    pub voice_id: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServicesSection {
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_retries")]
    pub retry_limit: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    pub chat_endpoint: Option<String>,
    pub chat_model: Option<String>,
    pub tts_endpoint: Option<String>,
    pub asr_endpoint: Option<String>,
}

impl Default for ServicesSection {
    fn default() -> Self {
        ServicesSection {
            concurrency: default_concurrency(),
            retry_limit: default_retries(),
            backoff_ms: default_backoff(),
            timeout_secs: default_timeout(),
            chat_endpoint: None,
            chat_model: None,
            tts_endpoint: None,
            asr_endpoint: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub prompt_catalog: Option<PathBuf>,
    pub ipa_lexicon: Option<PathBuf>,
    pub arpabet_lexicon: Option<PathBuf>,
    pub ja_lexicon: Option<PathBuf>,
    pub lsp_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub seed: Option<u64>,
    #[serde(default)]
    pub p_sub: f64,
    #[serde(default)]
    pub p_del: f64,
    #[serde(default)]
    pub p_ins: f64,
    /// Build confusables from this pronunciation lexicon.
    pub confusion_lexicon: Option<PathBuf>,
    #[serde(default = "default_threshold")]
    pub confusion_threshold: usize,
    /// Explicit confusion entries; merged over the lexicon-derived ones.
    #[serde(default)]
    pub confusion: Vec<ConfusionEntry>,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            seed: None,
            p_sub: 0.0,
            p_del: 0.0,
            p_ins: 0.0,
            confusion_lexicon: None,
            confusion_threshold: default_threshold(),
            confusion: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfusionEntry {
    pub token: String,
    pub variants: Vec<String>,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_true() -> bool {
    true
}
fn default_concurrency() -> usize {
    4
}
fn default_retries() -> u32 {
    2
}
fn default_backoff() -> u64 {
    250
}
fn default_timeout() -> u64 {
    60
}
fn default_threshold() -> usize {
    1
}
fn default_weight() -> f64 {
    1.0
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }

    /// Assemble the simulated ASR confusion model: lexicon-derived pairs
    /// first, explicit entries merged on top.
    pub fn confusion_model(&self, seed: u64) -> Result<ConfusionModel> {
        let mut model = match &self.sim.confusion_lexicon {
            Some(path) => {
                let lexicon = gerkit::phonetics::G2pLexicon::load(
                    path,
                    gerkit::phonetics::OovPolicy::PassThrough,
                )
                .with_context(|| format!("cannot load confusion lexicon {}", path.display()))?;
                gerkit::services::build_confusion_model(&lexicon, self.sim.confusion_threshold)
            }
            None => ConfusionModel::default(),
        };
        for entry in &self.sim.confusion {
            let confusables = entry
                .variants
                .iter()
                .map(|v| Confusable {
                    token: v.clone(),
                    weight: entry.weight,
                })
                .collect();
            model.sub_table.insert(entry.token.clone(), confusables);
        }
        model.p_sub = self.sim.p_sub;
        model.p_del = self.sim.p_del;
        model.p_ins = self.sim.p_ins;
        model.seed = self.sim.seed.unwrap_or(seed);
        model.validate().context("invalid [sim] error probabilities")?;
        Ok(model)
    }
}
