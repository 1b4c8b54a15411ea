//! Document-frequency filtered vocabulary and text-format word vectors.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::text;

/// Words in fewer documents than this are dropped.
pub const MIN_DOC_FREQ: usize = 3;
/// Words in more than this share of documents are dropped, as a ratio of
/// integers so the boundary is exact.
pub const MAX_DOC_SHARE: (usize, usize) = (9, 10);

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("vocabulary needs at least {MIN_DOC_FREQ} documents, got {0}")]
    TooFewDocuments(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("vocabulary line {line}: {message}")]
    BadLine { line: usize, message: String },
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("embedding line {line}: expected {expected} values, found {found}")]
    Arity {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("embedding line {line}: bad number {token:?}")]
    BadNumber { line: usize, token: String },
    #[error("embedding file declares dimension {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("embedding dimension must be positive")]
    ZeroDimension,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    ids: HashMap<String, usize>,
    /// Index `id - 1` holds `(word, df)`.
    entries: Vec<(String, usize)>,
    documents: usize,
}

/// True when a word with this document frequency survives the thresholds.
pub fn within_thresholds(df: usize, documents: usize) -> bool {
    df >= MIN_DOC_FREQ && df * MAX_DOC_SHARE.1 <= MAX_DOC_SHARE.0 * documents
}

/// Builds the vocabulary from normalized documents. Ids start at 1 (0 is
/// the OOV symbol) and follow descending document frequency, ties
/// alphabetical.
pub fn build_vocab<D: AsRef<[String]>>(documents: &[D]) -> Result<Vocabulary, VocabError> {
    let n = documents.len();
    if n < MIN_DOC_FREQ {
        return Err(VocabError::TooFewDocuments(n));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in documents {
        let unique: BTreeSet<&str> = doc.as_ref().iter().map(String::as_str).collect();
        for w in unique {
            *df.entry(w).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = df
        .into_iter()
        .filter(|&(_, d)| within_thresholds(d, n))
        .map(|(w, d)| (w.to_string(), d))
        .collect();
    // BTreeMap order is alphabetical, so a stable sort keeps ties that way.
    kept.sort_by_key(|e| std::cmp::Reverse(e.1));
    Ok(Vocabulary::from_entries(kept, n))
}

impl Vocabulary {
    fn from_entries(entries: Vec<(String, usize)>, documents: usize) -> Self {
        let ids = entries
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i + 1))
            .collect();
        Vocabulary {
            ids,
            entries,
            documents,
        }
    }

    /// Number of words, not counting OOV.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.ids.get(word).copied()
    }

    pub fn doc_freq(&self, word: &str) -> Option<usize> {
        self.id(word).map(|id| self.entries[id - 1].1)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.ids.contains_key(word)
    }

    /// `(word, id, df)` in id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, usize, usize)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (w, d))| (w.as_str(), i + 1, *d))
    }

    /// `word<TAB>id<TAB>df` lines after a `# documents N` header.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# documents {}", self.documents)?;
        for (w, id, df) in self.iter() {
            writeln!(out, "{w}\t{id}\t{df}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self, VocabError> {
        let mut documents = None;
        let mut entries = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = n + 1;
            let bad = |message: &str| VocabError::BadLine {
                line: lineno,
                message: message.to_string(),
            };
            if let Some(rest) = line.strip_prefix("# documents ") {
                documents = Some(rest.trim().parse().map_err(|_| bad("bad document count"))?);
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(bad("expected word, id and df"));
            }
            let id: usize = cols[1].parse().map_err(|_| bad("bad id"))?;
            if id != entries.len() + 1 {
                return Err(bad("ids must be dense and ascending from 1"));
            }
            let df: usize = cols[2].parse().map_err(|_| bad("bad df"))?;
            entries.push((cols[0].to_string(), df));
        }
        let documents = documents.ok_or(VocabError::BadLine {
            line: 1,
            message: "missing `# documents` header".into(),
        })?;
        Ok(Vocabulary::from_entries(entries, documents))
    }
}

/// Word vectors keyed by stem, plus the all-zero OOV vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    k: usize,
    vectors: HashMap<String, Vec<f64>>,
    oov: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(k: usize) -> Result<Self, EmbeddingError> {
        if k == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        Ok(EmbeddingTable {
            k,
            vectors: HashMap::new(),
            oov: vec![0.0; k],
        })
    }

    /// Inserts a vector unless the key is already present. Returns whether
    /// it was inserted.
    pub fn insert(&mut self, key: String, vector: Vec<f64>) -> Result<bool, EmbeddingError> {
        if vector.len() != self.k {
            return Err(EmbeddingError::Dimension {
                expected: self.k,
                found: vector.len(),
            });
        }
        if self.vectors.contains_key(&key) {
            return Ok(false);
        }
        self.vectors.insert(key, vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.vectors.get(key).map(Vec::as_slice)
    }

    pub fn oov(&self) -> &[f64] {
        &self.oov
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut it = line.split_whitespace();
    let v = it.next()?.parse().ok()?;
    let k = it.next()?.parse().ok()?;
    it.next().is_none().then_some((v, k))
}

/// Reads `word v1 .. vk` lines, with an optional `V k` header line. Words
/// are keyed by their normalized stem (first occurrence wins) and, when a
/// vocabulary is given, only vocabulary stems are kept.
pub fn load_embeddings<R: BufRead>(
    reader: R,
    expected_k: usize,
    vocab: Option<&Vocabulary>,
) -> Result<EmbeddingTable, EmbeddingError> {
    let mut table = EmbeddingTable::new(expected_k)?;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        if lineno == 1 {
            if let Some((_, k)) = parse_header(&line) {
                if k != expected_k {
                    return Err(EmbeddingError::Dimension {
                        expected: expected_k,
                        found: k,
                    });
                }
                continue;
            }
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().unwrap_or_default();
        let values: Vec<&str> = fields.collect();
        if values.len() != expected_k {
            return Err(EmbeddingError::Arity {
                line: lineno,
                expected: expected_k,
                found: values.len(),
            });
        }
        let vector = values
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| EmbeddingError::BadNumber {
                        line: lineno,
                        token: t.to_string(),
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let key = text::stem(&word.to_lowercase());
        if vocab.is_some_and(|v| !v.contains(&key)) {
            continue;
        }
        table.insert(key, vector)?;
    }
    Ok(table)
}

/// Vector for a normalized word: its own when it is in the vocabulary and
/// the table, the OOV vector otherwise.
pub fn embed_word<'a>(table: &'a EmbeddingTable, vocab: &Vocabulary, word: &str) -> &'a [f64] {
    known_vector(table, vocab, word).unwrap_or(table.oov())
}

/// The word's own vector, or `None` where [`embed_word`] falls back to OOV.
pub fn known_vector<'a>(
    table: &'a EmbeddingTable,
    vocab: &Vocabulary,
    word: &str,
) -> Option<&'a [f64]> {
    vocab.contains(word).then(|| table.get(word)).flatten()
}
