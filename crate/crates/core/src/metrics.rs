//! Token/character alignment and evaluation metrics: WER, CER, rare-word
//! recall/precision/F1, and rare-word coverage.
//!
//! English is scored over words, Japanese over characters with whitespace
//! removed. All metrics are pure functions of their (normalized) inputs.

use serde::{Deserialize, Serialize};

use crate::corpus::RareWordList;
use crate::lang::Language;
use crate::textnorm;

/// Scoring unit: whitespace-delimited words or individual characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Word,
    Char,
}

/// Normalization applied to both sides before alignment.
///
/// `collapse_whitespace` removes whitespace entirely for the `Char` unit
/// (word tokenization collapses runs regardless).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormPolicy {
    pub unit: Unit,
    pub casefold: bool,
    pub strip_punct: bool,
    pub collapse_whitespace: bool,
}

impl NormPolicy {
    /// Word-level policy for English evaluation.
    pub fn en_wer() -> Self {
        NormPolicy {
            unit: Unit::Word,
            casefold: true,
            strip_punct: true,
            collapse_whitespace: true,
        }
    }

    /// Character-level policy for Japanese evaluation.
    pub fn ja_cer() -> Self {
        NormPolicy {
            unit: Unit::Char,
            casefold: false,
            strip_punct: true,
            collapse_whitespace: true,
        }
    }

    pub fn for_language(language: Language) -> Self {
        match language {
            Language::En => Self::en_wer(),
            Language::Ja => Self::ja_cer(),
        }
    }
}

/// Normalize text into the policy's token sequence.
pub fn normalize(text: &str, policy: &NormPolicy) -> Vec<String> {
    let folded = textnorm::compat_fold(text);
    let folded = if policy.casefold {
        textnorm::casefold(&folded)
    } else {
        folded
    };
    match policy.unit {
        Unit::Word => folded
            .split_whitespace()
            .map(|t| {
                if policy.strip_punct {
                    textnorm::strip_outer_punct(t)
                } else {
                    t
                }
            })
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect(),
        Unit::Char => folded
            .chars()
            .filter(|c| {
                !(policy.collapse_whitespace && c.is_whitespace())
                    && !(policy.strip_punct && textnorm::is_punct(*c))
            })
            .map(|c| c.to_string())
            .collect(),
    }
}

/// Render a normalized token sequence back to comparable text.
pub fn join_tokens(tokens: &[String], policy: &NormPolicy) -> String {
    match policy.unit {
        Unit::Word => tokens.join(" "),
        Unit::Char => tokens.concat(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Match,
    Sub,
    Ins,
    Del,
}

/// One edit step. `ref_token` is set for MATCH/SUB/DEL, `hyp_token` for
/// MATCH/SUB/INS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignOp {
    pub kind: OpKind,
    pub ref_token: Option<String>,
    pub hyp_token: Option<String>,
}

/// Minimum-edit-distance alignment between two token sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub ops: Vec<AlignOp>,
    pub distance: usize,
}

/// Align two token sequences under unit-cost SUB/INS/DEL.
///
/// The backtrace is deterministic: on cost ties it prefers SUB (or MATCH)
/// over DEL over INS, so rare-word span matching sees stable alignments.
pub fn align(ref_tokens: &[String], hyp_tokens: &[String]) -> Alignment {
    let m = ref_tokens.len();
    let n = hyp_tokens.len();
    let width = n + 1;
    let mut dp = vec![0usize; (m + 1) * width];
    for i in 0..=m {
        dp[i * width] = i;
    }
    for (j, cell) in dp.iter_mut().enumerate().take(width) {
        *cell = j;
    }
    for i in 1..=m {
        for j in 1..=n {
            let cost = usize::from(ref_tokens[i - 1] != hyp_tokens[j - 1]);
            let diag = dp[(i - 1) * width + (j - 1)] + cost;
            let del = dp[(i - 1) * width + j] + 1;
            let ins = dp[i * width + (j - 1)] + 1;
            dp[i * width + j] = diag.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(m.max(n));
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let here = dp[i * width + j];
        if i > 0 && j > 0 {
            let equal = ref_tokens[i - 1] == hyp_tokens[j - 1];
            let cost = usize::from(!equal);
            if here == dp[(i - 1) * width + (j - 1)] + cost {
                ops.push(AlignOp {
                    kind: if equal { OpKind::Match } else { OpKind::Sub },
                    ref_token: Some(ref_tokens[i - 1].clone()),
                    hyp_token: Some(hyp_tokens[j - 1].clone()),
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == dp[(i - 1) * width + j] + 1 {
            ops.push(AlignOp {
                kind: OpKind::Del,
                ref_token: Some(ref_tokens[i - 1].clone()),
                hyp_token: None,
            });
            i -= 1;
            continue;
        }
        ops.push(AlignOp {
            kind: OpKind::Ins,
            ref_token: None,
            hyp_token: Some(hyp_tokens[j - 1].clone()),
        });
        j -= 1;
    }
    ops.reverse();
    Alignment {
        distance: dp[m * width + n],
        ops,
    }
}

/// Edit distance over normalized tokens divided by max(1, reference length).
pub fn error_rate(reference: &str, hypothesis: &str, policy: &NormPolicy) -> f64 {
    let r = normalize(reference, policy);
    let h = normalize(hypothesis, policy);
    let d = align(&r, &h).distance;
    d as f64 / r.len().max(1) as f64
}

/// Word error rate. The policy must use the `Word` unit.
pub fn wer(reference: &str, hypothesis: &str, policy: &NormPolicy) -> f64 {
    assert_eq!(policy.unit, Unit::Word, "wer requires a word-unit policy");
    error_rate(reference, hypothesis, policy)
}

/// Character error rate. The policy must use the `Char` unit.
pub fn cer(reference: &str, hypothesis: &str, policy: &NormPolicy) -> f64 {
    assert_eq!(policy.unit, Unit::Char, "cer requires a char-unit policy");
    error_rate(reference, hypothesis, policy)
}

/// Rare-word recognition counts and derived rates.
///
/// `recall`/`precision` are absent (not 0) when their denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RareWordScore {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub n_ref_occurrences: usize,
    pub n_hyp_occurrences: usize,
    pub n_correct: usize,
}

impl RareWordScore {
    fn from_counts(n_ref: usize, n_hyp: usize, n_correct: usize) -> Self {
        let recall = (n_ref > 0).then(|| n_correct as f64 / n_ref as f64);
        let precision = (n_hyp > 0).then(|| n_correct as f64 / n_hyp as f64);
        let f1 = match (recall, precision) {
            (Some(r), Some(p)) if r + p > 0.0 => Some(2.0 * r * p / (r + p)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        RareWordScore {
            recall,
            precision,
            f1,
            n_ref_occurrences: n_ref,
            n_hyp_occurrences: n_hyp,
            n_correct,
        }
    }
}

/// Non-overlapping left-to-right occurrences of `term` in `seq`.
/// Returns (start, len) pairs. Empty terms never match.
pub fn find_term_occurrences(seq: &[String], term: &[String]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if term.is_empty() || seq.len() < term.len() {
        return out;
    }
    let mut i = 0;
    while i + term.len() <= seq.len() {
        if seq[i..i + term.len()] == *term {
            out.push((i, term.len()));
            i += term.len();
        } else {
            i += 1;
        }
    }
    out
}

/// True when `text` contains `term_surface` under the policy (contiguous
/// token span for word policies, substring for char policies).
pub fn contains_term(text: &str, term_surface: &str, policy: &NormPolicy) -> bool {
    let seq = normalize(text, policy);
    let term = normalize(term_surface, policy);
    !find_term_occurrences(&seq, &term).is_empty()
}

/// Score rare-word recognition over (reference, hypothesis) pairs.
///
/// A reference occurrence counts as correct when every alignment op spanning
/// it is a MATCH, i.e. the aligned hypothesis span reproduces it exactly.
/// Occurrences are counted per instance, not per type.
pub fn rare_word_scores(
    pairs: &[(String, String)],
    list: &RareWordList,
    policy: &NormPolicy,
) -> RareWordScore {
    let terms: Vec<Vec<String>> = list
        .entries
        .iter()
        .map(|e| normalize(&e.surface, policy))
        .filter(|t| !t.is_empty())
        .collect();

    let mut n_ref = 0usize;
    let mut n_hyp = 0usize;
    let mut n_correct = 0usize;

    for (reference, hypothesis) in pairs {
        let r = normalize(reference, policy);
        let h = normalize(hypothesis, policy);

        let mut ref_spans: Vec<(usize, usize)> = Vec::new();
        for term in &terms {
            ref_spans.extend(find_term_occurrences(&r, term));
            n_hyp += find_term_occurrences(&h, term).len();
        }
        n_ref += ref_spans.len();
        if ref_spans.is_empty() {
            continue;
        }

        let alignment = align(&r, &h);
        // Map each reference position to its op index.
        let mut ref_pos_to_op = Vec::with_capacity(r.len());
        for (idx, op) in alignment.ops.iter().enumerate() {
            if op.ref_token.is_some() {
                ref_pos_to_op.push(idx);
            }
        }
        for (start, len) in ref_spans {
            let lo = ref_pos_to_op[start];
            let hi = ref_pos_to_op[start + len - 1];
            let exact = alignment.ops[lo..=hi]
                .iter()
                .all(|op| op.kind == OpKind::Match);
            if exact {
                n_correct += 1;
            }
        }
    }

    RareWordScore::from_counts(n_ref, n_hyp, n_correct)
}

/// Percentage of reference tokens/chars covered by rare-word matches.
/// Overlapping matches from different entries are counted once.
pub fn rare_word_coverage(references: &[String], list: &RareWordList, policy: &NormPolicy) -> f64 {
    let terms: Vec<Vec<String>> = list
        .entries
        .iter()
        .map(|e| normalize(&e.surface, policy))
        .filter(|t| !t.is_empty())
        .collect();

    let mut covered = 0usize;
    let mut total = 0usize;
    for reference in references {
        let seq = normalize(reference, policy);
        let mut mask = vec![false; seq.len()];
        for term in &terms {
            for (start, len) in find_term_occurrences(&seq, term) {
                for flag in &mut mask[start..start + len] {
                    *flag = true;
                }
            }
        }
        covered += mask.iter().filter(|&&b| b).count();
        total += seq.len();
    }
    if total == 0 {
        return 0.0;
    }
    100.0 * covered as f64 / total as f64
}
