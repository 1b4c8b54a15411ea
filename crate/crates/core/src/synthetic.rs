//! Synthetic corpora with a planted news-to-price signal.
//!
//! Each trading day carries a latent signal `s ∈ {-1, 0, 1}`. Days with
//! `s = ±1` get an event containing a cue word whose embedding is `±1` in
//! the first dimension. The scaled price follows
//! `z[t+1] = ar * z[t] + signal * s[t] + noise`, so forecasts that read the
//! cue beat forecasts that only see prices.

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::predictor::next_weekday;
use crate::tensor::DayInput;
use crate::vocab::{build_vocab, EmbeddingTable, Vocabulary};

pub const RISE_CUE: &str = "boom";
pub const FALL_CUE: &str = "slump";
/// Filler words; all are fixed points of the stemmer.
pub const NEUTRAL: [&str; 10] = [
    "market", "report", "deal", "plan", "talk", "ship", "field", "pipe", "fund", "firm",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub days: usize,
    pub k: usize,
    pub ar: f64,
    pub signal: f64,
    pub noise: f64,
    /// Price = base + spread * z.
    pub base: f64,
    pub spread: f64,
    pub start: NaiveDate,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            days: 250,
            k: 4,
            ar: 0.6,
            signal: 0.3,
            noise: 0.05,
            base: 20.0,
            spread: 2.0,
            start: NaiveDate::from_ymd_opt(2015, 1, 5).unwrap(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub days: Vec<DayInput>,
    pub signals: Vec<i8>,
    pub vocab: Vocabulary,
    pub table: EmbeddingTable,
}

fn vector_for(word: &str, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| rng.gen_range(-0.1..0.1)).collect();
    match word {
        RISE_CUE => v[0] = 1.0,
        FALL_CUE => v[0] = -1.0,
        _ => v[0] = 0.0,
    }
    v
}

pub fn generate(config: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut days = Vec::with_capacity(config.days);
    let mut signals = Vec::with_capacity(config.days);
    let mut date = config.start;
    let mut z = 0.0;
    for _ in 0..config.days {
        let s: i8 = rng.gen_range(-1..=1);
        let n_events = rng.gen_range(0..=3usize).max(usize::from(s != 0));
        let cue_at = rng.gen_range(0..n_events.max(1));
        let events: Vec<Vec<String>> = (0..n_events)
            .map(|e| {
                let len = rng.gen_range(2..=6);
                let mut words: Vec<String> = (0..len)
                    .map(|_| NEUTRAL.choose(&mut rng).unwrap().to_string())
                    .collect();
                if s != 0 && e == cue_at {
                    let pos = rng.gen_range(0..words.len());
                    words[pos] = if s > 0 { RISE_CUE } else { FALL_CUE }.to_string();
                }
                words
            })
            .collect();
        days.push(DayInput {
            date,
            price: config.base + config.spread * z,
            events,
        });
        signals.push(s);
        z = config.ar * z + config.signal * f64::from(s) + rng.gen_range(-1.0..1.0) * config.noise;
        date = next_weekday(date);
    }
    let docs: Vec<Vec<String>> = days.iter().map(|d| d.events.concat()).collect();
    let vocab = build_vocab(&docs).expect("synthetic corpus has enough days");
    let mut table = EmbeddingTable::new(config.k).expect("k > 0");
    let mut words: Vec<&str> = NEUTRAL.to_vec();
    words.extend([RISE_CUE, FALL_CUE]);
    for w in words {
        table
            .insert(w.to_string(), vector_for(w, config.k, &mut rng))
            .expect("dimension matches");
    }
    SyntheticCorpus {
        days,
        signals,
        vocab,
        table,
    }
}

#[derive(Serialize)]
struct HeadlineLine<'a> {
    id: String,
    date: NaiveDate,
    source: &'a str,
    title: String,
}

#[derive(Serialize)]
struct EventLine<'a> {
    headline_id: &'a str,
    date: NaiveDate,
    span_text: String,
    start: usize,
    end: usize,
    trigger: crate::extract::Trigger,
    gate_supersense: &'a str,
}

/// Writes `prices.csv`, `headlines.jsonl`, `events.jsonl` and
/// `embeddings.txt` for the corpus. Every event becomes its own headline
/// mentioning gas.
pub fn write_files(corpus: &SyntheticCorpus, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut prices = std::fs::File::create(dir.join("prices.csv"))?;
    writeln!(prices, "date,price")?;
    for d in &corpus.days {
        writeln!(prices, "{},{:.6}", d.date, d.price)?;
    }
    let mut heads = std::fs::File::create(dir.join("headlines.jsonl"))?;
    let mut events = std::fs::File::create(dir.join("events.jsonl"))?;
    for (i, d) in corpus.days.iter().enumerate() {
        for (e, words) in d.events.iter().enumerate() {
            let id = format!("d{i}e{e}");
            let text = words.join(" ");
            let title = format!("gas {text}");
            serde_json::to_writer(
                &mut heads,
                &HeadlineLine { id: id.clone(), date: d.date, source: "OTHER", title },
            )?;
            writeln!(heads)?;
            serde_json::to_writer(
                &mut events,
                &EventLine {
                    headline_id: &id,
                    date: d.date,
                    span_text: text,
                    start: 2,
                    end: words.len() + 1,
                    trigger: crate::extract::Trigger::WholeSentence,
                    gate_supersense: "noun.act",
                },
            )?;
            writeln!(events)?;
        }
    }
    let mut emb = std::fs::File::create(dir.join("embeddings.txt"))?;
    let mut words: Vec<&str> = NEUTRAL.to_vec();
    words.extend([RISE_CUE, FALL_CUE]);
    writeln!(emb, "{} {}", words.len(), corpus.table.dim())?;
    for w in words {
        let v = corpus.table.get(w).expect("all synthetic words are embedded");
        let vals: Vec<String> = v.iter().map(|x| format!("{x:.17e}")).collect();
        writeln!(emb, "{w} {}", vals.join(" "))?;
    }
    Ok(())
}
