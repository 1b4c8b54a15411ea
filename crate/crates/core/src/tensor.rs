//! Per-day word/event/price tensors and sliding training windows.
//!
//! A day is a `WORDS x EVENTS x (k + 1)` block laid out row-major as
//! `[word][event][channel]`. Channels `0..k` hold the word embedding and
//! channel `k` the scaled price, repeated in every cell.

use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::{known_vector, EmbeddingTable, Vocabulary};

pub const WORDS: usize = 15;
pub const EVENTS: usize = 5;
pub const CELLS: usize = WORDS * EVENTS;

const WINDOWS_MAGIC: &[u8; 8] = b"GFWIN\0\0\x01";

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("scaler needs at least two distinct prices")]
    DegenerateScaler,
    #[error("need at least {needed} consecutive days for m={m}, h={h}; have {have}")]
    TooFewDays {
        needed: usize,
        have: usize,
        m: usize,
        h: usize,
    },
    #[error("window length m and horizon h must be positive")]
    ZeroExtent,
    #[error("day tensors disagree on embedding dimension ({0} vs {1})")]
    MixedDimension(usize, usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a window file")]
    BadMagic,
    #[error("window file is truncated or inconsistent")]
    Truncated,
}

/// Standard scaler fit on training prices (population deviation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceScaler {
    pub mean: f64,
    pub std: f64,
}

impl PriceScaler {
    pub fn fit(prices: &[f64]) -> Result<Self, TensorError> {
        let n = prices.len() as f64;
        if prices.len() < 2 {
            return Err(TensorError::DegenerateScaler);
        }
        let mean = prices.iter().sum::<f64>() / n;
        let var = prices.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !std.is_finite() || std <= 0.0 {
            return Err(TensorError::DegenerateScaler);
        }
        Ok(PriceScaler { mean, std })
    }

    pub fn scale(&self, p: f64) -> f64 {
        (p - self.mean) / self.std
    }

    pub fn inverse_scale(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayTensor {
    pub date: NaiveDate,
    pub k: usize,
    pub data: Vec<f64>,
    /// `[word][event]` cells holding a real word vector.
    pub filled: Vec<bool>,
}

impl DayTensor {
    pub fn channels(&self) -> usize {
        self.k + 1
    }

    pub fn offset(&self, word: usize, event: usize) -> usize {
        (word * EVENTS + event) * self.channels()
    }

    pub fn cell(&self, word: usize, event: usize) -> &[f64] {
        let o = self.offset(word, event);
        &self.data[o..o + self.channels()]
    }

    pub fn filled_count(&self) -> usize {
        self.filled.iter().filter(|&&f| f).count()
    }

    pub fn price(&self) -> f64 {
        self.data[self.k]
    }
}

/// Per-day generator seed, a mix of the global seed and the date.
pub fn day_seed(seed: u64, date: NaiveDate) -> u64 {
    let days = date.signed_duration_since(NaiveDate::MIN).num_days() as u64;
    splitmix64(seed ^ splitmix64(days))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Event columns for a day. The first `EVENTS` events are kept in order;
/// with fewer, the empty columns take random positions drawn from `rng`.
pub fn event_columns<R: Rng>(n_events: usize, rng: &mut R) -> [Option<usize>; EVENTS] {
    let kept = n_events.min(EVENTS);
    let mut cols = [None; EVENTS];
    let mut empty = [false; EVENTS];
    if kept < EVENTS {
        for i in sample(rng, EVENTS, EVENTS - kept) {
            empty[i] = true;
        }
    }
    let mut next = 0;
    for (c, slot) in cols.iter_mut().enumerate() {
        if !empty[c] {
            *slot = Some(next);
            next += 1;
        }
    }
    cols
}

/// Builds one day from its normalized events (word lists in extraction
/// order).
pub fn build_day<R: Rng>(
    date: NaiveDate,
    events: &[Vec<String>],
    scaled_price: f64,
    table: &EmbeddingTable,
    vocab: &Vocabulary,
    rng: &mut R,
) -> DayTensor {
    let k = table.dim();
    let ch = k + 1;
    let mut data = vec![0.0; CELLS * ch];
    let mut filled = vec![false; CELLS];
    let cols = event_columns(events.len(), rng);
    for (col, ev) in cols.iter().enumerate() {
        let Some(ev) = ev else { continue };
        for (w, word) in events[*ev].iter().take(WORDS).enumerate() {
            let Some(v) = known_vector(table, vocab, word) else {
                continue;
            };
            let o = (w * EVENTS + col) * ch;
            data[o..o + k].copy_from_slice(v);
            filled[w * EVENTS + col] = true;
        }
    }
    for cell in 0..CELLS {
        data[cell * ch + k] = scaled_price;
    }
    DayTensor {
        date,
        k,
        data,
        filled,
    }
}

/// Day input for tensor construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DayInput {
    pub date: NaiveDate,
    pub price: f64,
    pub events: Vec<Vec<String>>,
}

pub fn build_days(
    days: &[DayInput],
    scaler: &PriceScaler,
    table: &EmbeddingTable,
    vocab: &Vocabulary,
    seed: u64,
) -> Vec<DayTensor> {
    days.iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(day_seed(seed, d.date));
            build_day(d.date, &d.events, scaler.scale(d.price), table, vocab, &mut rng)
        })
        .collect()
}

/// `m` stacked days `[day][word][event][channel]` and `h` scaled targets.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// Date of the last input day.
    pub anchor: NaiveDate,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowShape {
    pub m: usize,
    pub h: usize,
    pub k: usize,
}

impl WindowShape {
    pub fn day_len(&self) -> usize {
        CELLS * (self.k + 1)
    }

    pub fn input_len(&self) -> usize {
        self.m * self.day_len()
    }
}

/// Number of stride-1 windows over `n` consecutive days.
pub fn window_count(n: usize, m: usize, h: usize) -> usize {
    (n + 1).saturating_sub(m + h)
}

/// Stride-1 windows over consecutive days. Targets are the price channels
/// of the `h` days after each window, so windows never reach past `days`;
/// pass the train and test partitions separately to keep them apart.
pub fn build_windows(
    days: &[DayTensor],
    m: usize,
    h: usize,
) -> Result<Vec<WindowSample>, TensorError> {
    if m == 0 || h == 0 {
        return Err(TensorError::ZeroExtent);
    }
    if days.len() < m + h {
        return Err(TensorError::TooFewDays {
            needed: m + h,
            have: days.len(),
            m,
            h,
        });
    }
    let k = days[0].k;
    if let Some(d) = days.iter().find(|d| d.k != k) {
        return Err(TensorError::MixedDimension(k, d.k));
    }
    Ok((0..window_count(days.len(), m, h))
        .map(|t| {
            let mut input = Vec::with_capacity(m * days[0].data.len());
            for d in &days[t..t + m] {
                input.extend_from_slice(&d.data);
            }
            WindowSample {
                anchor: days[t + m - 1].date,
                input,
                target: days[t + m..t + m + h].iter().map(DayTensor::price).collect(),
            }
        })
        .collect())
}

/// Flat binary dump: magic, `m h k count` as u64, then per window the
/// anchor (days since the common era) as i64, inputs and targets as f64,
/// all little-endian.
pub fn write_windows<W: Write>(
    mut out: W,
    shape: WindowShape,
    windows: &[WindowSample],
) -> Result<(), TensorError> {
    out.write_all(WINDOWS_MAGIC)?;
    for v in [shape.m, shape.h, shape.k, windows.len()] {
        out.write_all(&(v as u64).to_le_bytes())?;
    }
    for w in windows {
        if w.input.len() != shape.input_len() || w.target.len() != shape.h {
            return Err(TensorError::Truncated);
        }
        out.write_all(&(w.anchor.num_days_from_ce() as i64).to_le_bytes())?;
        for x in w.input.iter().chain(&w.target) {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_windows<R: Read>(mut input: R) -> Result<(WindowShape, Vec<WindowSample>), TensorError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| TensorError::BadMagic)?;
    if &magic != WINDOWS_MAGIC {
        return Err(TensorError::BadMagic);
    }
    let mut word = [0u8; 8];
    let mut next_u64 = |r: &mut R| -> Result<u64, TensorError> {
        r.read_exact(&mut word).map_err(|_| TensorError::Truncated)?;
        Ok(u64::from_le_bytes(word))
    };
    let m = next_u64(&mut input)? as usize;
    let h = next_u64(&mut input)? as usize;
    let k = next_u64(&mut input)? as usize;
    let count = next_u64(&mut input)? as usize;
    let shape = WindowShape { m, h, k };
    let mut windows = Vec::with_capacity(count.min(1 << 16));
    let read_f64s = |r: &mut R, n: usize| -> Result<Vec<f64>, TensorError> {
        let mut buf = vec![0u8; n * 8];
        r.read_exact(&mut buf).map_err(|_| TensorError::Truncated)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    for _ in 0..count {
        let mut d = [0u8; 8];
        input.read_exact(&mut d).map_err(|_| TensorError::Truncated)?;
        let anchor = i32::try_from(i64::from_le_bytes(d))
            .ok()
            .and_then(NaiveDate::from_num_days_from_ce_opt)
            .ok_or(TensorError::Truncated)?;
        let input_v = read_f64s(&mut input, shape.input_len())?;
        let target = read_f64s(&mut input, h)?;
        windows.push(WindowSample {
            anchor,
            input: input_v,
            target,
        });
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(TensorError::Truncated);
    }
    Ok((shape, windows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::{build_vocab, load_embeddings};
    use approx::assert_abs_diff_eq;

    fn date(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2018, 1, d).unwrap()
    }

    fn lexicon() -> (EmbeddingTable, Vocabulary) {
        let words = ["ga", "price", "tremor", "site"];
        let docs: Vec<Vec<String>> = (0..10)
            .map(|i| {
                words
                    .iter()
                    .filter(|_| i < 8)
                    .map(|w| w.to_string())
                    .collect()
            })
            .collect();
        let vocab = build_vocab(&docs).unwrap();
        let table = load_embeddings(
            "gas 1 2\nprice 3 4\ntremor 5 6\nsite 7 8\n".as_bytes(),
            2,
            Some(&vocab),
        )
        .unwrap();
        (table, vocab)
    }

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn scaler_examples() {
        let s = PriceScaler::fit(&[10.0, 20.0]).unwrap();
        assert_eq!((s.mean, s.std), (15.0, 5.0));
        assert_eq!(s.scale(20.0), 1.0);
        assert_eq!(s.scale(15.0), 0.0);
        assert!(PriceScaler::fit(&[5.0, 5.0, 5.0]).is_err());
        assert!(PriceScaler::fit(&[5.0]).is_err());
    }

    #[test]
    fn scaler_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<f64> = (0..100).map(|_| rng.gen_range(5.0..40.0)).collect();
        let s = PriceScaler::fit(&p).unwrap();
        let mean = p.iter().sum::<f64>() / 100.0;
        let sq = p.iter().map(|x| x * x).sum::<f64>() / 100.0;
        assert_abs_diff_eq!(s.mean, mean, epsilon = 1e-12);
        assert_abs_diff_eq!(s.std, (sq - mean * mean).sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn empty_day() {
        let (t, v) = lexicon();
        let d = build_day(date(1), &[], 0.5, &t, &v, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(d.data.len(), CELLS * 3);
        assert_eq!(d.filled_count(), 0);
        for w in 0..WORDS {
            for e in 0..EVENTS {
                assert_eq!(d.cell(w, e), [0.0, 0.0, 0.5]);
            }
        }
    }

    #[test]
    fn long_event_truncated() {
        let (t, v) = lexicon();
        let ev: Vec<String> = (0..20).map(|i| ["ga", "price"][i % 2].to_string()).collect();
        let d = build_day(date(1), &[ev], 0.0, &t, &v, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(d.filled_count(), WORDS);
    }

    #[test]
    fn padding_columns_replay_generator() {
        let (t, v) = lexicon();
        let events = vec![words(&["ga"]), words(&["price"]), words(&["tremor"])];
        let d = build_day(date(1), &events, 0.0, &t, &v, &mut ChaCha8Rng::seed_from_u64(42));
        let mut replay = ChaCha8Rng::seed_from_u64(42);
        let mut empty: Vec<usize> = sample(&mut replay, EVENTS, 2).into_vec();
        empty.sort_unstable();
        let occupied: Vec<usize> = (0..EVENTS).filter(|c| !empty.contains(c)).collect();
        for (i, &c) in occupied.iter().enumerate() {
            assert_eq!(d.cell(0, c)[0], [1.0, 3.0, 5.0][i]);
        }
        for &c in &empty {
            assert!(!d.filled[c]);
        }
    }

    #[test]
    fn sixth_event_dropped() {
        let (t, v) = lexicon();
        let mut events = vec![words(&["ga"]); 5];
        events.push(words(&["site", "site"]));
        let d = build_day(date(1), &events, 0.0, &t, &v, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(d.filled_count(), 5);
        assert!((0..EVENTS).all(|e| d.cell(0, e)[0] == 1.0));
    }

    fn days(n: usize) -> Vec<DayTensor> {
        let (t, v) = lexicon();
        let inputs: Vec<DayInput> = (0..n)
            .map(|i| DayInput {
                date: date(1 + i as u32),
                price: 10.0 + i as f64,
                events: vec![words(&["ga", "tremor"])],
            })
            .collect();
        let s = PriceScaler::fit(&[10.0, 20.0]).unwrap();
        build_days(&inputs, &s, &t, &v, 7)
    }

    #[test]
    fn window_counts() {
        assert_eq!(build_windows(&days(15), 10, 5).unwrap().len(), 1);
        assert_eq!(build_windows(&days(16), 10, 5).unwrap().len(), 2);
        assert!(matches!(
            build_windows(&days(14), 10, 5),
            Err(TensorError::TooFewDays { needed: 15, have: 14, .. })
        ));
    }

    #[test]
    fn windows_do_not_leak() {
        let d = days(20);
        let w = build_windows(&d, 4, 3).unwrap();
        for (t, s) in w.iter().enumerate() {
            assert_eq!(s.anchor, d[t + 3].date);
            let target_dates: Vec<_> = (t + 4..t + 7).map(|i| d[i].date).collect();
            assert!(target_dates.iter().all(|&x| x > s.anchor));
            assert_eq!(s.target, (t + 4..t + 7).map(|i| d[i].price()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn split_partitions_produce_no_straddling_windows() {
        let d = days(30);
        let (train, test) = d.split_at(18);
        let tw = build_windows(train, 5, 2).unwrap();
        let sw = build_windows(test, 5, 2).unwrap();
        assert_eq!(tw.len() + sw.len(), window_count(18, 5, 2) + window_count(12, 5, 2));
        assert!(tw.iter().all(|w| w.anchor < d[18].date));
        assert!(sw.iter().all(|w| w.anchor >= d[18].date));
    }

    #[test]
    fn same_seed_same_days() {
        assert_eq!(days(12), days(12));
        assert_ne!(day_seed(1, date(1)), day_seed(1, date(2)));
        assert_ne!(day_seed(1, date(1)), day_seed(2, date(1)));
    }

    #[test]
    fn binary_round_trip() {
        let w = build_windows(&days(16), 10, 5).unwrap();
        let shape = WindowShape { m: 10, h: 5, k: 2 };
        let mut buf = Vec::new();
        write_windows(&mut buf, shape, &w).unwrap();
        assert_eq!(buf.len(), 8 + 32 + 2 * (8 + 8 * (shape.input_len() + 5)));
        let (s2, w2) = read_windows(buf.as_slice()).unwrap();
        assert_eq!((s2, w2), (shape, w));
        assert!(matches!(
            read_windows(&buf[..buf.len() - 1]),
            Err(TensorError::Truncated)
        ));
        assert!(matches!(read_windows(&b"nope"[..]), Err(TensorError::BadMagic)));
    }
}
