#![allow(dead_code)]

use pausebench::enrichment::{Segment, TestKind, TimedTranscript, WordToken};
use rand::Rng;

/// Interesting gap lengths: every bin edge and points just around them.
pub const EDGES: [f64; 8] = [0.05, 0.1, 0.2, 0.3, 0.5, 0.6, 1.0, 1.5];

/// A random transcript with 1–`max_words` words on a 1 ms grid. Gaps are
/// drawn to hit bin edges often.
pub fn random_transcript<R: Rng>(rng: &mut R, max_words: usize) -> TimedTranscript {
    let n = rng.random_range(1..=max_words);
    let mut t_ms: i64 = rng.random_range(0..500);
    let mut segments = vec![Segment { words: Vec::new() }];
    for i in 0..n {
        if i > 0 {
            let gap_ms: i64 = match rng.random_range(0..4) {
                0 => (EDGES[rng.random_range(0..EDGES.len())] * 1000.0).round() as i64 + rng.random_range(-1..=1),
                1 => rng.random_range(0..150),
                2 => rng.random_range(0..3000),
                _ => 2000 + rng.random_range(-1..=1),
            };
            t_ms += gap_ms.max(0);
            if rng.random_bool(0.15) {
                segments.push(Segment { words: Vec::new() });
            }
        }
        let dur: i64 = rng.random_range(10..800);
        segments.last_mut().unwrap().words.push(WordToken {
            text: format!("w{i}"),
            start_s: t_ms as f64 / 1000.0,
            end_s: (t_ms + dur) as f64 / 1000.0,
            disfluent: rng.random_bool(0.2),
        });
        t_ms += dur;
    }
    segments.retain(|s| !s.words.is_empty());
    TimedTranscript { subject_id: "rand".into(), test: TestKind::Pdt, segments }
}

/// Mann–Whitney pair statistic: P(score_pos > score_neg) + ½ P(tie).
pub fn brute_force_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / pairs
}
