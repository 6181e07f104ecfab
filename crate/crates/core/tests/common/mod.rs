#![allow(dead_code)]

use commscore::duplicate::DuplicateConfig;
use commscore::embedding::{EmbeddingProvider, EmbeddingVector};
use commscore::transcript::{Transcript, Utterance};
use rand::seq::SliceRandom;
use rand::Rng;

pub const APPENDIX_A: &str = include_str!("../fixtures/appendix_a.log");
pub const APPENDIX_C: &str = include_str!("../fixtures/appendix_c.log");

const SENTENCES: &[&str] = &[
    "Push base, push base.",
    "Okay.",
    "Yes.",
    "I think we can't, boys.",
    "We can't.",
    "Zyra is doing golem.",
    "Maybe we should go.",
    "I don't know.",
    "Can we fight?",
    "He was leaving.",
    "My mid is going pretty good.",
    "Bot is going pretty good.",
    "No waves.",
    "I'll stop him.",
    "Hmm...",
];

/// Random transcript: up to `max_utts` utterances, up to `max_speakers`
/// speakers, start times on a coarse grid so exact window-boundary ties occur.
pub fn random_transcript<R: Rng>(rng: &mut R, max_utts: usize, max_speakers: usize) -> Transcript {
    let n = rng.gen_range(0..=max_utts);
    let speakers = rng.gen_range(1..=max_speakers);
    let mut t = 0.0f64;
    let mut utterances = Vec::with_capacity(n);
    for i in 0..n {
        // Quarter-second grid; zero steps give simultaneous starts.
        t += rng.gen_range(0..=24) as f64 * 0.25;
        let speaker = format!("SPEAKER_{:02}", rng.gen_range(0..speakers));
        let text = if rng.gen_bool(0.15) {
            // random word soup to hit unrelated vectors
            (0..rng.gen_range(1..5))
                .map(|_| *["go", "now", "top", "mid", "wait", "hmm"].choose(rng).unwrap())
                .collect::<Vec<_>>()
                .join(" ")
        } else {
            SENTENCES.choose(rng).unwrap().to_string()
        };
        let dur = rng.gen_range(0..8) as f64 * 0.25;
        utterances.push(Utterance::new(i as u64, t, t + dur, speaker, text).unwrap());
    }
    Transcript::from_utterances(utterances).unwrap()
}

/// Straight-line absolute cosine, kept apart from the library's version.
pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleScore {
    pub utterance_index: u64,
    pub score: f64,
    pub best_match_index: Option<u64>,
    pub flagged: bool,
}

/// Brute force double loop: every utterance against every earlier utterance of
/// the same speaker, filtered by start time, max taken with earliest tie-break.
pub fn brute_force_duplicates<P: EmbeddingProvider>(
    t: &Transcript,
    cfg: &DuplicateConfig,
    p: &P,
) -> Vec<OracleScore> {
    let us = t.utterances();
    let embed = |u: &Utterance| -> EmbeddingVector { p.embed(&u.text).unwrap() };
    us.iter()
        .enumerate()
        .map(|(i, u)| {
            let e_u = embed(u);
            let mut score = 0.0;
            let mut best = None;
            for s in &us[..i] {
                if s.speaker != u.speaker {
                    continue;
                }
                let dt = u.start_s - s.start_s;
                if !(s.start_s >= u.start_s - cfg.window_s && dt > 0.0) {
                    continue;
                }
                let sim = oracle_cosine(e_u.values(), embed(s).values());
                if best.is_none() || sim > score {
                    score = sim;
                    best = Some(s.index);
                }
            }
            OracleScore {
                utterance_index: u.index,
                score,
                best_match_index: best,
                flagged: score >= cfg.threshold,
            }
        })
        .collect()
}

/// 64-bit FNV-1a written out from its published constants.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hand-rolled recomputation of the mock embedding.
pub fn oracle_mock_embedding(text: &str, dim: usize) -> Vec<f64> {
    let mut tokens: Vec<String> = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
        } else if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    if tokens.is_empty() {
        tokens.push(text.trim().to_lowercase());
    }
    let mut v = vec![0.0; dim];
    for t in &tokens {
        v[(fnv1a64(t.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}
