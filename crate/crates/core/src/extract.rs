//! Open-domain event extraction over dependency-annotated headlines.
//!
//! The pipeline runs in three stages:
//!
//! 1. **Indicators.** Tokens tagged `ADP` or `VERB`, or attached by one of
//!    `acl`, `advcl`, `ccomp`, `rcmod`, `xcomp` (subtypes stripped). In
//!    [`ExtractionMode::VerbOnly`] only `VERB` tokens qualify.
//! 2. **Phrases.** Every indicator is mapped to an *anchor*: an adposition
//!    anchors on the word it marks, anything else anchors on itself. The
//!    anchors of the full indicator set segment the tree:
//!    * an adposition's phrase is its anchor's whole subtree minus the
//!      adposition itself (`after [tremor in Lancashire site]`);
//!    * any other indicator's phrase is its anchor plus the dependents that
//!      are neither subjects nor other indicators or anchors, recursively.
//!
//!    Phrases are projected to contiguous spans with edge punctuation
//!    trimmed. Spans nested in (or equal to) a longer span are dropped. A
//!    sentence with no indicators at all becomes one whole-sentence phrase
//!    in full-pipeline mode.
//! 3. **Gate.** A phrase is an event when one of its tokens carries a
//!    supersense from [`GATE_SENSES`].
//!
//! Segmentation does not depend on the mode, so every verb-only candidate is
//! also a full-pipeline candidate.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::{Sentence, Span};
use crate::wordnet::{supersense_of, SenseIndex, Supersense};

pub const INDICATOR_UPOS: [&str; 2] = ["ADP", "VERB"];
pub const INDICATOR_DEPRELS: [&str; 5] = ["acl", "advcl", "ccomp", "rcmod", "xcomp"];
pub const GATE_SENSES: [&str; 6] = [
    "noun.phenomenon",
    "noun.act",
    "noun.event",
    "adj.all",
    "adv.all",
    "noun.attribute",
];

const SUBJECT_DEPRELS: [&str; 2] = ["nsubj", "csubj"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractionMode {
    #[value(name = "full")]
    #[serde(rename = "full")]
    FullPipeline,
    VerbOnly,
}

impl ExtractionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtractionMode::FullPipeline => "full",
            ExtractionMode::VerbOnly => "verb-only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "token")]
pub enum Trigger {
    Indicator(usize),
    WholeSentence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub span: Span,
    pub trigger: Trigger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateEvidence {
    pub token: usize,
    pub sense: Supersense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventSpan {
    pub span: Span,
    pub trigger: Trigger,
    pub evidence: GateEvidence,
}

pub fn is_gate_sense(sense: Supersense) -> bool {
    GATE_SENSES.contains(&sense.name())
}

pub fn find_indicators(sentence: &Sentence, mode: ExtractionMode) -> Vec<usize> {
    sentence
        .tokens
        .iter()
        .filter(|t| match mode {
            ExtractionMode::VerbOnly => t.upos == "VERB",
            ExtractionMode::FullPipeline => {
                INDICATOR_UPOS.contains(&t.upos.as_str())
                    || INDICATOR_DEPRELS.contains(&t.base_deprel())
            }
        })
        .map(|t| t.index)
        .collect()
}

fn is_marker(sentence: &Sentence, index: usize) -> bool {
    let t = sentence.token(index);
    t.upos == "ADP" && t.head != 0
}

fn anchor_of(sentence: &Sentence, indicator: usize) -> usize {
    if is_marker(sentence, indicator) {
        sentence.token(indicator).head
    } else {
        indicator
    }
}

/// Tokens of the phrase introduced by `indicator`. `boundaries` holds every
/// full-pipeline indicator and anchor.
fn phrase_tokens(sentence: &Sentence, indicator: usize, boundaries: &BTreeSet<usize>) -> Vec<usize> {
    let anchor = anchor_of(sentence, indicator);
    if anchor != indicator {
        let marker: BTreeSet<usize> = sentence.subtree(indicator).into_iter().collect();
        return sentence
            .subtree(anchor)
            .into_iter()
            .filter(|i| !marker.contains(i))
            .collect();
    }
    let mut out = vec![anchor];
    let mut stack: Vec<usize> = sentence
        .children(anchor)
        .filter(|c| !SUBJECT_DEPRELS.contains(&c.base_deprel()))
        .map(|c| c.index)
        .collect();
    while let Some(n) = stack.pop() {
        if boundaries.contains(&n) {
            continue;
        }
        out.push(n);
        stack.extend(sentence.children(n).map(|c| c.index));
    }
    out.sort_unstable();
    out
}

/// Contiguous projection with punctuation trimmed from both edges.
fn project(sentence: &Sentence, tokens: &[usize]) -> Option<Span> {
    let kept: Vec<usize> = tokens
        .iter()
        .copied()
        .filter(|&i| sentence.token(i).upos != "PUNCT")
        .collect();
    Some(Span::new(*kept.iter().min()?, *kept.iter().max()?))
}

/// Drops candidates whose span lies inside a longer one, or duplicates an
/// earlier identical span. Output is ordered by span start.
pub fn dedup_nested(mut candidates: Vec<Candidate>) -> Vec<Candidate> {
    candidates.sort_by(|a, b| {
        b.span
            .len()
            .cmp(&a.span.len())
            .then(a.span.start.cmp(&b.span.start))
    });
    let mut kept: Vec<Candidate> = Vec::new();
    for c in candidates {
        if !kept.iter().any(|k| k.span.covers(&c.span)) {
            kept.push(c);
        }
    }
    kept.sort_by_key(|c| (c.span.start, c.span.end));
    kept
}

pub fn candidate_phrases(
    sentence: &Sentence,
    indicators: &[usize],
    mode: ExtractionMode,
) -> Vec<Candidate> {
    if sentence.is_empty() {
        return Vec::new();
    }
    let full = find_indicators(sentence, ExtractionMode::FullPipeline);
    if full.is_empty() {
        return match mode {
            ExtractionMode::FullPipeline => vec![Candidate {
                span: Span::new(1, sentence.len()),
                trigger: Trigger::WholeSentence,
            }],
            ExtractionMode::VerbOnly => Vec::new(),
        };
    }
    let boundaries: BTreeSet<usize> = full
        .iter()
        .flat_map(|&i| [i, anchor_of(sentence, i)])
        .collect();
    let raw = indicators
        .iter()
        .filter_map(|&i| {
            let tokens = phrase_tokens(sentence, i, &boundaries);
            project(sentence, &tokens).map(|span| Candidate {
                span,
                trigger: Trigger::Indicator(i),
            })
        })
        .collect();
    dedup_nested(raw)
}

/// The phrase is an event when one of its tokens has a gate supersense; the
/// first such token in surface order is the evidence.
pub fn gate_by_sense(
    candidate: Candidate,
    sentence: &Sentence,
    index: &SenseIndex,
) -> Option<EventSpan> {
    (candidate.span.start..=candidate.span.end).find_map(|i| {
        supersense_of(index, sentence.token(i))
            .filter(|s| is_gate_sense(*s))
            .map(|sense| EventSpan {
                span: candidate.span,
                trigger: candidate.trigger,
                evidence: GateEvidence { token: i, sense },
            })
    })
}

pub fn extract_events(
    sentence: &Sentence,
    mode: ExtractionMode,
    index: &SenseIndex,
) -> Vec<EventSpan> {
    let indicators = find_indicators(sentence, mode);
    candidate_phrases(sentence, &indicators, mode)
        .into_iter()
        .filter_map(|c| gate_by_sense(c, sentence, index))
        .collect()
}

/// Line-delimited export format for extracted events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub headline_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
    pub span_text: String,
    pub start: usize,
    pub end: usize,
    pub trigger: Trigger,
    pub gate_supersense: String,
}

/// Headline key for a sentence: its `headline_id`, else its ordinal.
pub fn headline_key(sentence: &Sentence, ordinal: usize) -> String {
    sentence
        .headline_id
        .clone()
        .unwrap_or_else(|| format!("#{ordinal}"))
}

/// Runs extraction over every sentence; events of multi-sentence headlines
/// are concatenated in sentence order.
pub fn extract_records(
    sentences: &[Sentence],
    mode: ExtractionMode,
    index: &SenseIndex,
) -> Vec<EventRecord> {
    let mut out = Vec::new();
    for (n, s) in sentences.iter().enumerate() {
        for ev in extract_events(s, mode, index) {
            out.push(EventRecord {
                headline_id: headline_key(s, n + 1),
                date: s.date,
                span_text: s.span_text(ev.span),
                start: ev.span.start,
                end: ev.span.end,
                trigger: ev.trigger,
                gate_supersense: ev.evidence.sense.name().to_string(),
            });
        }
    }
    out
}

#[derive(Debug, Error)]
#[error("coverage is undefined for an empty corpus")]
pub struct EmptyCorpus;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coverage {
    pub mode: ExtractionMode,
    pub headlines_total: usize,
    pub headlines_with_events: usize,
    pub fraction: f64,
}

/// Share of headlines with at least one event. Sentences are grouped into
/// headlines by `headline_id`.
pub fn coverage_stats(
    sentences: &[Sentence],
    mode: ExtractionMode,
    index: &SenseIndex,
) -> Result<Coverage, EmptyCorpus> {
    let mut all = BTreeSet::new();
    let mut hit = BTreeSet::new();
    for (n, s) in sentences.iter().enumerate() {
        let key = headline_key(s, n + 1);
        if !extract_events(s, mode, index).is_empty() {
            hit.insert(key.clone());
        }
        all.insert(key);
    }
    if all.is_empty() {
        return Err(EmptyCorpus);
    }
    Ok(Coverage {
        mode,
        headlines_total: all.len(),
        headlines_with_events: hit.len(),
        fraction: hit.len() as f64 / all.len() as f64,
    })
}
