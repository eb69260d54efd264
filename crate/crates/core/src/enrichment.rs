//! Word-timestamped transcripts and pause-token enrichment.
//!
//! A [`TimedTranscript`] holds the VAD segments of one recording, each with
//! word-level start/end times. Pauses are the gaps between consecutive words,
//! including the silence between segments. A [`PauseScheme`] maps each pause
//! duration to a special token (or to nothing when the pause is shorter than
//! the scheme minimum), and [`enrich`] interleaves those tokens with the words.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Literal emitted after a word the recogniser flagged as a potential disfluency.
pub const DISFLUENCY_TOKEN: &str = "[*]";

/// Negative gaps down to this magnitude are treated as alignment jitter and clamped.
pub const MAX_JITTER_S: f64 = 0.05;

/// Pause durations are quantised to this many steps per second before binning,
/// so that `1.6 - 1.0` lands on the same side of a boundary as `0.6`.
const DURATION_STEPS_PER_S: f64 = 1e6;

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("malformed transcript document: {0}")]
    MalformedDocument(String),
    #[error("invalid timing: {0}")]
    InvalidTiming(String),
    #[error("transcript contains no words")]
    EmptyTranscript,
}

/// Which cognitive test the recording comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "VFT")]
    Vft,
    #[serde(rename = "PDT")]
    Pdt,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::Vft => "VFT",
            TestKind::Pdt => "PDT",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordToken {
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
    pub disfluent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub words: Vec<WordToken>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedTranscript {
    pub subject_id: String,
    pub test: TestKind,
    pub segments: Vec<Segment>,
}

impl TimedTranscript {
    /// All words in time order, across segment boundaries.
    pub fn words(&self) -> impl Iterator<Item = &WordToken> {
        self.segments.iter().flat_map(|s| s.words.iter())
    }

    pub fn word_count(&self) -> usize {
        self.segments.iter().map(|s| s.words.len()).sum()
    }

    /// Serialise back to the ingestion document format.
    pub fn to_document(&self) -> TranscriptDocument {
        TranscriptDocument {
            subject_id: self.subject_id.clone(),
            test: self.test,
            segments: self
                .segments
                .iter()
                .map(|s| SegmentDocument {
                    words: s
                        .words
                        .iter()
                        .map(|w| WordDocument {
                            text: w.text.clone(),
                            start: w.start_s,
                            end: w.end_s,
                            disfluent: w.disfluent,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// On-disk transcript document (JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptDocument {
    pub subject_id: String,
    pub test: TestKind,
    pub segments: Vec<SegmentDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentDocument {
    pub words: Vec<WordDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordDocument {
    pub text: String,
    pub start: f64,
    pub end: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub disfluent: bool,
}

/// Parse and validate a transcript document.
///
/// Segments without words are dropped. A word that starts up to
/// [`MAX_JITTER_S`] before its predecessor ends has its start moved to the
/// predecessor's end (with a warning); larger overlaps are rejected.
pub fn parse_timed_transcript(document: &[u8]) -> Result<TimedTranscript, TranscriptError> {
    let doc: TranscriptDocument = serde_json::from_slice(document)
        .map_err(|e| TranscriptError::MalformedDocument(e.to_string()))?;
    validate_document(doc)
}

pub fn validate_document(doc: TranscriptDocument) -> Result<TimedTranscript, TranscriptError> {
    let mut segments = Vec::with_capacity(doc.segments.len());
    let mut prev_end: Option<f64> = None;
    let mut ordinal = 0usize;

    for seg in doc.segments {
        let mut words = Vec::with_capacity(seg.words.len());
        for w in seg.words {
            validate_word_text(&w.text)?;
            if !w.start.is_finite() || !w.end.is_finite() {
                return Err(TranscriptError::InvalidTiming(format!(
                    "word {ordinal} ({:?}) has non-finite time",
                    w.text
                )));
            }
            if w.start < 0.0 {
                return Err(TranscriptError::InvalidTiming(format!(
                    "word {ordinal} ({:?}) starts before zero",
                    w.text
                )));
            }
            if w.end < w.start {
                return Err(TranscriptError::InvalidTiming(format!(
                    "word {ordinal} ({:?}) ends at {} before it starts at {}",
                    w.text, w.end, w.start
                )));
            }
            let mut start = w.start;
            if let Some(prev) = prev_end {
                let gap = start - prev;
                if gap < -MAX_JITTER_S {
                    return Err(TranscriptError::InvalidTiming(format!(
                        "word {ordinal} ({:?}) overlaps its predecessor by {:.3} s",
                        w.text, -gap
                    )));
                }
                if gap < 0.0 {
                    if w.end < prev {
                        return Err(TranscriptError::InvalidTiming(format!(
                            "word {ordinal} ({:?}) lies inside its predecessor",
                            w.text
                        )));
                    }
                    warn!(
                        "{}: clamping {:.3} s overlap before word {ordinal} ({:?})",
                        doc.subject_id, -gap, w.text
                    );
                    start = prev;
                }
            }
            prev_end = Some(w.end);
            ordinal += 1;
            words.push(WordToken {
                text: w.text,
                start_s: start,
                end_s: w.end,
                disfluent: w.disfluent,
            });
        }
        if !words.is_empty() {
            segments.push(Segment { words });
        }
    }

    if segments.is_empty() {
        return Err(TranscriptError::EmptyTranscript);
    }
    Ok(TimedTranscript {
        subject_id: doc.subject_id,
        test: doc.test,
        segments,
    })
}

fn validate_word_text(text: &str) -> Result<(), TranscriptError> {
    if text.is_empty() {
        return Err(TranscriptError::MalformedDocument("empty word text".into()));
    }
    if text.chars().any(char::is_whitespace) {
        return Err(TranscriptError::MalformedDocument(format!(
            "word {text:?} contains whitespace"
        )));
    }
    if is_reserved_token(text) {
        return Err(TranscriptError::MalformedDocument(format!(
            "word {text:?} collides with a special token"
        )));
    }
    Ok(())
}

/// True for every pause-token literal of every scheme and the disfluency token.
pub fn is_reserved_token(text: &str) -> bool {
    text == DISFLUENCY_TOKEN
        || SchemeId::ALL
            .iter()
            .any(|id| id.scheme().bins.iter().any(|b| b.token == text))
}

/// The full special-token vocabulary, in scheme order, without duplicates.
pub fn special_tokens() -> Vec<&'static str> {
    let mut out: Vec<&'static str> = Vec::new();
    for id in SchemeId::ALL {
        for b in id.scheme().bins {
            if !out.contains(&b.token) {
                out.push(b.token);
            }
        }
    }
    out.push(DISFLUENCY_TOKEN);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeId {
    #[serde(rename = "p1")]
    P1,
    #[serde(rename = "p2")]
    P2,
    #[serde(rename = "p3")]
    P3,
    #[serde(rename = "p4")]
    P4,
    #[serde(rename = "p3-disfl")]
    P3Disfl,
}

impl SchemeId {
    pub const ALL: [SchemeId; 5] = [
        SchemeId::P1,
        SchemeId::P2,
        SchemeId::P3,
        SchemeId::P4,
        SchemeId::P3Disfl,
    ];

    pub fn scheme(self) -> PauseScheme {
        let bins: &'static [PauseBin] = match self {
            SchemeId::P1 => &P1_BINS,
            SchemeId::P2 => &P2_BINS,
            SchemeId::P3 | SchemeId::P3Disfl => &P3_BINS,
            SchemeId::P4 => &P4_BINS,
        };
        PauseScheme { id: self, bins }
    }

    /// Whether the scheme itself calls for disfluency tokens.
    pub fn implies_disfluencies(self) -> bool {
        self == SchemeId::P3Disfl
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::P1 => "p1",
            SchemeId::P2 => "p2",
            SchemeId::P3 => "p3",
            SchemeId::P4 => "p4",
            SchemeId::P3Disfl => "p3-disfl",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown pause scheme {s:?} (expected p1, p2, p3, p4 or p3-disfl)"))
    }
}

/// One duration interval of a pause scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauseBin {
    pub lower: f64,
    pub lower_inclusive: bool,
    pub upper: f64,
    pub upper_inclusive: bool,
    pub token: &'static str,
}

impl PauseBin {
    const fn new(lower: f64, lower_inclusive: bool, upper: f64, upper_inclusive: bool, token: &'static str) -> Self {
        PauseBin { lower, lower_inclusive, upper, upper_inclusive, token }
    }

    pub fn contains(&self, d: f64) -> bool {
        let above = if self.lower_inclusive { d >= self.lower } else { d > self.lower };
        let below = if self.upper_inclusive { d <= self.upper } else { d < self.upper };
        above && below
    }
}

const INF: f64 = f64::INFINITY;

static P1_BINS: [PauseBin; 3] = [
    PauseBin::new(0.05, true, 0.5, false, "[P1.1]"),
    PauseBin::new(0.5, true, 2.0, true, "[P1.2]"),
    PauseBin::new(2.0, false, INF, false, "[P1.3]"),
];

static P2_BINS: [PauseBin; 6] = [
    PauseBin::new(0.05, true, 0.1, true, "[P2.1]"),
    PauseBin::new(0.1, false, 0.3, true, "[P2.2]"),
    PauseBin::new(0.3, false, 0.6, true, "[P2.3]"),
    PauseBin::new(0.6, false, 1.0, true, "[P2.4]"),
    PauseBin::new(1.0, false, 2.0, true, "[P2.5]"),
    PauseBin::new(2.0, false, INF, false, "[P2.6]"),
];

static P3_BINS: [PauseBin; 3] = [
    PauseBin::new(0.2, true, 0.6, true, "[P3.1]"),
    PauseBin::new(0.6, false, 1.5, false, "[P3.2]"),
    PauseBin::new(1.5, true, INF, false, "[P3.3]"),
];

static P4_BINS: [PauseBin; 1] = [PauseBin::new(0.2, true, INF, false, "[P]")];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauseScheme {
    pub id: SchemeId,
    pub bins: &'static [PauseBin],
}

impl PauseScheme {
    /// Shortest duration that receives a token.
    pub fn minimum(&self) -> f64 {
        self.bins[0].lower
    }

    /// Index of the bin holding `duration_s`, if any.
    pub fn bin_index(&self, duration_s: f64) -> Option<usize> {
        self.bins.iter().position(|b| b.contains(duration_s))
    }
}

/// Token for a pause of `duration_s` seconds, or `None` below the scheme minimum.
pub fn bin_pause(scheme: &PauseScheme, duration_s: f64) -> Option<&'static str> {
    scheme.bin_index(duration_s).map(|i| scheme.bins[i].token)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauseEvent {
    pub after_word_index: usize,
    pub duration_s: f64,
}

fn quantise_duration(gap: f64) -> f64 {
    let q = (gap * DURATION_STEPS_PER_S).round() / DURATION_STEPS_PER_S;
    // -0.0 and jitter that survived validation
    q.max(0.0)
}

/// One event per consecutive word pair, within and across segments.
pub fn extract_pauses(t: &TimedTranscript) -> Vec<PauseEvent> {
    let mut events = Vec::with_capacity(t.word_count().saturating_sub(1));
    let mut words = t.words().enumerate().peekable();
    while let Some((i, w)) = words.next() {
        if let Some((_, next)) = words.peek() {
            events.push(PauseEvent {
                after_word_index: i,
                duration_s: quantise_duration(next.start_s - w.end_s),
            });
        }
    }
    events
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "text")]
pub enum EnrichedItem {
    Word(String),
    Pause(String),
    Disfl,
}

impl EnrichedItem {
    pub fn as_str(&self) -> &str {
        match self {
            EnrichedItem::Word(w) => w,
            EnrichedItem::Pause(p) => p,
            EnrichedItem::Disfl => DISFLUENCY_TOKEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedTranscript {
    pub subject_id: String,
    pub test: TestKind,
    pub scheme: SchemeId,
    pub items: Vec<EnrichedItem>,
}

impl EnrichedTranscript {
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.items.iter().filter_map(|i| match i {
            EnrichedItem::Word(w) => Some(w.as_str()),
            _ => None,
        })
    }

    /// Item positions (indices into `items`) that hold pause tokens, expressed
    /// as the ordinal of the word the pause follows.
    pub fn pause_positions(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut word_ordinal = 0usize;
        for item in &self.items {
            match item {
                EnrichedItem::Word(_) => word_ordinal += 1,
                EnrichedItem::Pause(_) => out.push(word_ordinal - 1),
                EnrichedItem::Disfl => {}
            }
        }
        out
    }
}

/// Interleave words with pause tokens (and optionally disfluency tokens).
///
/// Disfluency tokens go directly after the flagged word and before any pause
/// token that follows it. `include_disfluencies` is forced on by
/// [`SchemeId::P3Disfl`].
pub fn enrich(t: &TimedTranscript, scheme: &PauseScheme, include_disfluencies: bool) -> EnrichedTranscript {
    let with_disfl = include_disfluencies || scheme.id.implies_disfluencies();
    let pauses = extract_pauses(t);
    let mut items = Vec::with_capacity(t.word_count() * 2);
    for (i, w) in t.words().enumerate() {
        items.push(EnrichedItem::Word(w.text.clone()));
        if with_disfl && w.disfluent {
            items.push(EnrichedItem::Disfl);
        }
        if let Some(p) = pauses.get(i) {
            debug_assert_eq!(p.after_word_index, i);
            if let Some(token) = bin_pause(scheme, p.duration_s) {
                items.push(EnrichedItem::Pause(token.to_owned()));
            }
        }
    }
    EnrichedTranscript {
        subject_id: t.subject_id.clone(),
        test: t.test,
        scheme: scheme.id,
        items,
    }
}

pub fn render(e: &EnrichedTranscript) -> String {
    let mut out = String::new();
    for (i, item) in e.items.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(item.as_str());
    }
    out
}

/// On-disk form of an enriched transcript: the item list plus its rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedDocument {
    #[serde(flatten)]
    pub transcript: EnrichedTranscript,
    pub include_disfluencies: bool,
    pub text: String,
}

impl EnrichedDocument {
    pub fn new(e: &EnrichedTranscript, include_disfluencies: bool) -> Self {
        EnrichedDocument {
            transcript: e.clone(),
            include_disfluencies: include_disfluencies || e.scheme.implies_disfluencies(),
            text: render(e),
        }
    }
}

/// Per-token counts of the pause and disfluency items in `e`, in first-seen order.
pub fn token_counts(e: &EnrichedTranscript) -> Vec<(String, usize)> {
    let mut counts: Vec<(String, usize)> = Vec::new();
    for item in &e.items {
        if matches!(item, EnrichedItem::Word(_)) {
            continue;
        }
        let key = item.as_str();
        match counts.iter_mut().find(|(k, _)| k == key) {
            Some((_, n)) => *n += 1,
            None => counts.push((key.to_owned(), 1)),
        }
    }
    counts
}
