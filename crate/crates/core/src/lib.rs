//! Rare-word generative error correction toolkit.
//!
//! The pipeline, end to end: build a rare-word list (`corpus`), generate
//! synthetic error-pair data by prompting an LLM for transcripts,
//! synthesizing speech, and transcribing it back (`databuild` over
//! `services`), render phonetic context in IPA / ARPAbet-or-kana / LSP
//! (`phonetics`), run a corrector over N-best hypotheses (`ger` with
//! `prompts`), and score WER/CER plus rare-word recall, precision, and F1
//! (`metrics`, `report`).
//!
//! Every remote capability (chat LLM, TTS, ASR) has a deterministic
//! simulated backend, so the whole workflow runs offline.

pub mod corpus;
pub mod databuild;
pub mod ger;
pub mod lang;
pub mod metrics;
pub mod phonetics;
pub mod prompts;
pub mod report;
pub mod services;
pub mod textnorm;
pub mod util;

pub use lang::Language;
pub use metrics::NormPolicy;
pub use phonetics::PhoneticScheme;
