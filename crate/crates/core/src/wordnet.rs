//! WordNet supersense lookup built from `index.sense` and `lexnames`.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::conllu::Token;

/// The 45 WordNet lexicographer files, indexed by file number.
pub const LEXNAMES: [&str; 45] = [
    "adj.all",
    "adj.pert",
    "adv.all",
    "noun.Tops",
    "noun.act",
    "noun.animal",
    "noun.artifact",
    "noun.attribute",
    "noun.body",
    "noun.cognition",
    "noun.communication",
    "noun.event",
    "noun.feeling",
    "noun.food",
    "noun.group",
    "noun.location",
    "noun.motive",
    "noun.object",
    "noun.person",
    "noun.phenomenon",
    "noun.plant",
    "noun.possession",
    "noun.process",
    "noun.quantity",
    "noun.relation",
    "noun.shape",
    "noun.state",
    "noun.substance",
    "noun.time",
    "verb.body",
    "verb.change",
    "verb.cognition",
    "verb.communication",
    "verb.competition",
    "verb.consumption",
    "verb.contact",
    "verb.creation",
    "verb.emotion",
    "verb.motion",
    "verb.perception",
    "verb.possession",
    "verb.social",
    "verb.stative",
    "verb.weather",
    "adj.ppl",
];

#[derive(Debug, Error)]
pub enum WordNetError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("lexnames line {line}: {message}")]
    Lexnames { line: usize, message: String },
    #[error("sense index contains no usable entries ({skipped} malformed lines skipped)")]
    EmptyIndex { skipped: usize },
}

/// A lexicographer-file supersense such as `noun.phenomenon`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Supersense(u8);

impl Supersense {
    pub fn from_file_number(n: usize) -> Option<Self> {
        (n < LEXNAMES.len()).then_some(Supersense(n as u8))
    }

    pub fn from_name(name: &str) -> Option<Self> {
        LEXNAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| Supersense(i as u8))
    }

    pub fn file_number(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        LEXNAMES[self.0 as usize]
    }
}

impl fmt::Display for Supersense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PosClass {
    Noun,
    Verb,
    Adj,
    Adv,
}

impl PosClass {
    /// Lookup class for a universal POS tag; `None` means no lookup.
    pub fn from_upos(upos: &str) -> Option<Self> {
        match upos {
            "NOUN" | "PROPN" => Some(PosClass::Noun),
            "VERB" => Some(PosClass::Verb),
            "ADJ" => Some(PosClass::Adj),
            "ADV" => Some(PosClass::Adv),
            _ => None,
        }
    }

    /// Synset type digit of a sense key (satellites count as adjectives).
    fn from_ss_type(t: u8) -> Option<Self> {
        match t {
            1 => Some(PosClass::Noun),
            2 => Some(PosClass::Verb),
            3 | 5 => Some(PosClass::Adj),
            4 => Some(PosClass::Adv),
            _ => None,
        }
    }
}

/// Lemma + POS class to supersenses, most frequent sense first.
#[derive(Debug, Clone, Default)]
pub struct SenseIndex {
    entries: HashMap<(String, PosClass), Vec<Supersense>>,
    skipped: usize,
}

struct SenseLine {
    lemma: String,
    class: PosClass,
    file: usize,
    sense_number: u32,
}

/// `lemma%ss_type:lex_filenum:lex_id:head_word:head_id offset sense_number tag_cnt`
fn parse_sense_line(line: &str) -> Option<SenseLine> {
    let mut fields = line.split_whitespace();
    let key = fields.next()?;
    let _offset = fields.next()?;
    let sense_number: u32 = fields.next()?.parse().ok()?;
    let (lemma, rest) = key.split_once('%')?;
    let mut parts = rest.split(':');
    let ss_type: u8 = parts.next()?.parse().ok()?;
    let file: usize = parts.next()?.parse().ok()?;
    if lemma.is_empty() || parts.next().is_none() {
        return None;
    }
    Some(SenseLine {
        lemma: lemma.to_lowercase(),
        class: PosClass::from_ss_type(ss_type)?,
        file,
        sense_number,
    })
}

/// Parses `lexnames`: `NN<TAB>name<TAB>syntactic_category` per line. Every
/// entry must agree with the bundled table.
pub fn parse_lexnames<R: BufRead>(reader: R) -> Result<Vec<Supersense>, WordNetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(num), Some(name)) = (fields.next(), fields.next()) else {
            return Err(WordNetError::Lexnames {
                line: line_no,
                message: "expected number and name".into(),
            });
        };
        let num: usize = num.parse().map_err(|_| WordNetError::Lexnames {
            line: line_no,
            message: format!("bad file number {num:?}"),
        })?;
        match Supersense::from_file_number(num) {
            Some(s) if s.name() == name => out.push(s),
            _ => {
                return Err(WordNetError::Lexnames {
                    line: line_no,
                    message: format!("{num} {name} does not match the WordNet 3 lexnames table"),
                })
            }
        }
    }
    Ok(out)
}

impl SenseIndex {
    pub fn load<R1: BufRead, R2: BufRead>(
        index_sense: R1,
        lexnames: R2,
    ) -> Result<Self, WordNetError> {
        let files = parse_lexnames(lexnames)?;
        let known = |n: usize| files.iter().find(|s| s.file_number() == n).copied();
        let mut raw: HashMap<(String, PosClass), Vec<(u32, Supersense)>> = HashMap::new();
        let mut skipped = 0;
        for line in index_sense.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match parse_sense_line(&line).and_then(|s| known(s.file).map(|ss| (s, ss))) {
                Some((s, ss)) => raw
                    .entry((s.lemma, s.class))
                    .or_default()
                    .push((s.sense_number, ss)),
                None => skipped += 1,
            }
        }
        if raw.is_empty() {
            return Err(WordNetError::EmptyIndex { skipped });
        }
        if skipped > 0 {
            log::warn!("skipped {skipped} malformed sense-index lines");
        }
        let entries = raw
            .into_iter()
            .map(|(k, mut v)| {
                v.sort_by_key(|&(n, _)| n);
                (k, v.into_iter().map(|(_, s)| s).collect())
            })
            .collect();
        Ok(SenseIndex { entries, skipped })
    }

    /// Loads `index.sense` and `lexnames` from a WordNet `dict` directory.
    pub fn load_dir(dir: &Path) -> Result<Self, WordNetError> {
        let open = |name: &str| {
            let path = dir.join(name);
            std::fs::File::open(&path)
                .map(std::io::BufReader::new)
                .map_err(|source| WordNetError::File {
                    path: path.display().to_string(),
                    source,
                })
        };
        Self::load(open("index.sense")?, open("lexnames")?)
    }

    /// Malformed lines skipped while loading.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Supersenses for a lemma in sense-number order; empty when unknown.
    pub fn senses(&self, lemma: &str, class: PosClass) -> &[Supersense] {
        self.entries
            .get(&(lemma.to_lowercase(), class))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn most_frequent(&self, lemma: &str, class: PosClass) -> Option<Supersense> {
        self.senses(lemma, class).first().copied()
    }
}

/// A valid `Sense=` annotation wins; otherwise the most frequent sense of the
/// token's lemma for its POS class.
pub fn supersense_of(index: &SenseIndex, token: &Token) -> Option<Supersense> {
    if let Some(s) = token.sense.as_deref().and_then(Supersense::from_name) {
        return Some(s);
    }
    let class = PosClass::from_upos(&token.upos)?;
    index.most_frequent(&token.lemma, class)
}
