//! TF-IDF word rankings over day documents.
//!
//! `tf` is the raw count in a document, `idf = ln(N / df)`, and a word's
//! score is its largest `tf * idf` over all documents.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::NaiveDate;
use serde::Serialize;

pub const VARIANT: &str = "tf=raw count; idf=ln(N/df); score=max over documents";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum View {
    Raw,
    Events,
    PrePurchase,
}

impl View {
    pub fn as_str(self) -> &'static str {
        match self {
            View::Raw => "raw",
            View::Events => "events",
            View::PrePurchase => "pre-purchase",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TfidfRanking {
    pub view: View,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub documents: usize,
    pub entries: Vec<(String, f64)>,
}

/// Top `top_n` words by score, ties alphabetical.
pub fn rank_tfidf<D: AsRef<[String]>>(documents: &[D], top_n: usize) -> Vec<(String, f64)> {
    let n = documents.len() as f64;
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    let mut counts: Vec<BTreeMap<&str, usize>> = Vec::with_capacity(documents.len());
    for doc in documents {
        let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
        for w in doc.as_ref() {
            *tf.entry(w.as_str()).or_default() += 1;
        }
        for w in tf.keys() {
            *df.entry(w).or_default() += 1;
        }
        counts.push(tf);
    }
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for tf in &counts {
        for (w, &c) in tf {
            let score = c as f64 * (n / df[w] as f64).ln();
            let e = best.entry(w).or_insert(0.0);
            if score > *e {
                *e = score;
            }
        }
    }
    let mut ranked: Vec<(String, f64)> = best.into_iter().map(|(w, s)| (w.to_string(), s)).collect();
    // Stable sort over alphabetical input keeps ties alphabetical.
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked.truncate(top_n);
    ranked
}

/// Day indices within `window` trading days before any purchase day, each
/// counted once, ascending.
pub fn pre_purchase_days(purchase_days: &[usize], window: usize) -> Vec<usize> {
    if purchase_days.is_empty() {
        log::warn!("no purchases; pre-purchase view is empty");
    }
    let set: BTreeSet<usize> = purchase_days
        .iter()
        .flat_map(|&p| p.saturating_sub(window)..p)
        .collect();
    set.into_iter().collect()
}

/// Documents of the pre-purchase view: the event documents of the days
/// selected by [`pre_purchase_days`].
pub fn pre_purchase_view(
    day_events: &[Vec<String>],
    purchase_days: &[usize],
    window: usize,
) -> Vec<Vec<String>> {
    pre_purchase_days(purchase_days, window)
        .into_iter()
        .filter_map(|d| day_events.get(d).cloned())
        .collect()
}

impl TfidfRanking {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let range = match (self.first_date, self.last_date) {
            (Some(a), Some(b)) => format!("{a}..{b}"),
            _ => "none".into(),
        };
        writeln!(
            out,
            "# view={} documents={} dates={range} {VARIANT}",
            self.view.as_str(),
            self.documents
        )?;
        writeln!(out, "rank,stem,score")?;
        for (i, (w, s)) in self.entries.iter().enumerate() {
            writeln!(out, "{},{w},{s:.6}", i + 1)?;
        }
        Ok(())
    }
}
