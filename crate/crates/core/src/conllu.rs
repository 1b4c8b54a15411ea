//! CoNLL-U reader and writer working at the syntactic-word level.
//!
//! Multiword-token ranges (`1-2`) and empty nodes (`1.1`) are skipped. Each
//! sentence must form a single tree rooted at exactly one `HEAD = 0` token.
//! A `Sense=<lexname>` entry in the MISC column is surfaced as
//! [`Token::sense`].

use std::fmt::Write as _;
use std::io::BufRead;

use chrono::NaiveDate;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConlluError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: invalid {column} value {value:?}")]
    BadField {
        line: usize,
        column: &'static str,
        value: String,
    },
    #[error("sentence {sentence} (ending line {line}): token ids must run 1..n, found {found} at position {expected}")]
    NonSequentialId {
        sentence: usize,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("sentence {sentence}: token {token} has head {head} outside 0..={len}")]
    HeadOutOfRange {
        sentence: usize,
        token: usize,
        head: usize,
        len: usize,
    },
    #[error("sentence {sentence}: expected exactly one root, found {roots}")]
    RootCount { sentence: usize, roots: usize },
    #[error("sentence {sentence}{}: cyclic head chain through token {token}", headline_suffix(.headline_id))]
    Cycle {
        sentence: usize,
        headline_id: Option<String>,
        token: usize,
    },
}

fn headline_suffix(id: &Option<String>) -> String {
    id.as_ref()
        .map(|id| format!(" (headline {id})"))
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: Option<String>,
    pub feats: Option<String>,
    /// Governor index; 0 for the root.
    pub head: usize,
    pub deprel: String,
    pub deps: Option<String>,
    pub misc: Option<String>,
    /// Supersense from `Sense=` in MISC, when present.
    pub sense: Option<String>,
}

impl Token {
    /// Dependency label without its subtype (`acl:relcl` -> `acl`).
    pub fn base_deprel(&self) -> &str {
        self.deprel.split(':').next().unwrap_or("")
    }
}

/// Inclusive 1-based token range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index <= self.end
    }

    pub fn covers(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    /// From `# headline_id = ...`.
    pub headline_id: Option<String>,
    /// From `# date = ...`.
    pub date: Option<NaiveDate>,
    /// All comment lines other than the two above, without the leading `#`.
    pub comments: Vec<String>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token by 1-based index.
    pub fn token(&self, index: usize) -> &Token {
        &self.tokens[index - 1]
    }

    pub fn root(&self) -> Option<usize> {
        self.tokens.iter().find(|t| t.head == 0).map(|t| t.index)
    }

    /// Dependents of `index` in surface order.
    pub fn children(&self, index: usize) -> impl Iterator<Item = &Token> + '_ {
        self.tokens.iter().filter(move |t| t.head == index)
    }

    /// Indices of `index` and all its descendants, ascending.
    pub fn subtree(&self, index: usize) -> Vec<usize> {
        let mut out = vec![index];
        let mut stack = vec![index];
        while let Some(n) = stack.pop() {
            for c in self.children(n) {
                out.push(c.index);
                stack.push(c.index);
            }
        }
        out.sort_unstable();
        out
    }

    /// Surface text of a span, tokens joined by single spaces.
    pub fn span_text(&self, span: Span) -> String {
        (span.start..=span.end)
            .map(|i| self.token(i).form.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn text(&self) -> String {
        if self.tokens.is_empty() {
            return String::new();
        }
        self.span_text(Span::new(1, self.tokens.len()))
    }
}

/// `[min, max]` over `index` and all of its dependency descendants.
pub fn subtree_span(sentence: &Sentence, index: usize) -> Span {
    let nodes = sentence.subtree(index);
    Span::new(nodes[0], nodes[nodes.len() - 1])
}

fn opt(field: &str) -> Option<String> {
    (field != "_").then(|| field.to_string())
}

fn sense_from_misc(misc: &str) -> Option<String> {
    misc.split('|')
        .find_map(|kv| kv.strip_prefix("Sense="))
        .map(str::to_string)
}

struct Pending {
    sentence: Sentence,
    ids: Vec<(usize, usize)>,
}

impl Pending {
    fn new() -> Self {
        Pending {
            sentence: Sentence::default(),
            ids: Vec::new(),
        }
    }

    fn is_blank(&self) -> bool {
        self.sentence.tokens.is_empty()
            && self.sentence.comments.is_empty()
            && self.sentence.headline_id.is_none()
            && self.sentence.date.is_none()
    }
}

pub fn parse_conllu<R: BufRead>(reader: R) -> Result<Vec<Sentence>, ConlluError> {
    let mut out = Vec::new();
    let mut cur = Pending::new();
    let mut last_line = 0;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            if !cur.is_blank() {
                let done = std::mem::replace(&mut cur, Pending::new());
                out.push(finish(done, out.len() + 1, line_no)?);
            }
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("headline_id =") {
                cur.sentence.headline_id = Some(v.trim().to_string());
            } else if let Some(v) = comment.strip_prefix("date =") {
                let v = v.trim();
                cur.sentence.date = Some(NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(
                    |_| ConlluError::BadField {
                        line: line_no,
                        column: "date comment",
                        value: v.to_string(),
                    },
                )?);
            } else {
                cur.sentence.comments.push(comment.to_string());
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(ConlluError::ColumnCount {
                line: line_no,
                found: cols.len(),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let bad = |column, value: &str| ConlluError::BadField {
            line: line_no,
            column,
            value: value.to_string(),
        };
        let index: usize = id.parse().map_err(|_| bad("ID", id))?;
        let head: usize = cols[6].parse().map_err(|_| bad("HEAD", cols[6]))?;
        if cols[3].is_empty() || cols[3] == "_" {
            return Err(bad("UPOS", cols[3]));
        }
        let misc = opt(cols[9]);
        cur.ids.push((index, line_no));
        cur.sentence.tokens.push(Token {
            index,
            form: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: cols[3].to_string(),
            xpos: opt(cols[4]),
            feats: opt(cols[5]),
            head,
            deprel: cols[7].to_string(),
            deps: opt(cols[8]),
            sense: misc.as_deref().and_then(sense_from_misc),
            misc,
        });
    }
    if !cur.is_blank() {
        out.push(finish(cur, out.len() + 1, last_line)?);
    }
    Ok(out)
}

fn finish(p: Pending, ordinal: usize, end_line: usize) -> Result<Sentence, ConlluError> {
    let s = p.sentence;
    for (pos, &(id, _)) in p.ids.iter().enumerate() {
        if id != pos + 1 {
            return Err(ConlluError::NonSequentialId {
                sentence: ordinal,
                line: end_line,
                expected: pos + 1,
                found: id,
            });
        }
    }
    let n = s.tokens.len();
    if n == 0 {
        return Ok(s);
    }
    for t in &s.tokens {
        if t.head > n {
            return Err(ConlluError::HeadOutOfRange {
                sentence: ordinal,
                token: t.index,
                head: t.head,
                len: n,
            });
        }
    }
    // Walk each head chain; any chain longer than n revisits a node.
    for t in &s.tokens {
        let mut cur = t.index;
        let mut steps = 0;
        while cur != 0 {
            cur = s.tokens[cur - 1].head;
            steps += 1;
            if steps > n {
                return Err(ConlluError::Cycle {
                    sentence: ordinal,
                    headline_id: s.headline_id.clone(),
                    token: t.index,
                });
            }
        }
    }
    let roots = s.tokens.iter().filter(|t| t.head == 0).count();
    if roots != 1 {
        return Err(ConlluError::RootCount {
            sentence: ordinal,
            roots,
        });
    }
    Ok(s)
}

pub fn write_conllu(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    let field = |v: &Option<String>| v.clone().unwrap_or_else(|| "_".to_string());
    for s in sentences {
        if let Some(id) = &s.headline_id {
            let _ = writeln!(out, "# headline_id = {id}");
        }
        if let Some(date) = &s.date {
            let _ = writeln!(out, "# date = {date}");
        }
        for c in &s.comments {
            let _ = writeln!(out, "# {c}");
        }
        for t in &s.tokens {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                t.index,
                t.form,
                t.lemma,
                t.upos,
                field(&t.xpos),
                field(&t.feats),
                t.head,
                t.deprel,
                field(&t.deps),
                field(&t.misc),
            );
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(i: usize, form: &str, upos: &str, head: usize, deprel: &str) -> String {
        format!("{i}\t{form}\t{form}\t{upos}\t_\t_\t{head}\t{deprel}\t_\t_")
    }

    #[test]
    fn single_token_with_sense() {
        let input = "1\ttremor\ttremor\tNOUN\t_\t_\t0\troot\t_\tSense=noun.phenomenon\n";
        let s = parse_conllu(input.as_bytes()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 1);
        assert_eq!(s[0].tokens[0].sense.as_deref(), Some("noun.phenomenon"));
    }

    #[test]
    fn two_sentences_and_metadata() {
        let input = format!(
            "# headline_id = h7\n# date = 2018-01-02\n# text = a\n{}\n\n{}\n{}\n",
            row(1, "a", "NOUN", 0, "root"),
            row(1, "b", "VERB", 0, "root"),
            row(2, "c", "NOUN", 1, "obj"),
        );
        let s = parse_conllu(input.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].headline_id.as_deref(), Some("h7"));
        assert_eq!(s[0].date.unwrap().to_string(), "2018-01-02");
        assert_eq!(s[0].comments, vec!["text = a".to_string()]);
        assert_eq!(s[1].len(), 2);
    }

    #[test]
    fn cycle_detected() {
        let input = [
            row(1, "a", "NOUN", 0, "root"),
            row(2, "b", "NOUN", 3, "dep"),
            row(3, "c", "NOUN", 2, "dep"),
        ]
        .join("\n");
        let err = parse_conllu(input.as_bytes()).unwrap_err();
        assert!(matches!(err, ConlluError::Cycle { sentence: 1, .. }), "{err}");
    }

    #[test]
    fn column_count_error_has_line() {
        let input = format!("{}\n1\tonly\tthree\n", "# c");
        let err = parse_conllu(input.as_bytes()).unwrap_err();
        assert!(matches!(err, ConlluError::ColumnCount { line: 2, found: 3 }));
    }

    #[test]
    fn multiword_and_empty_nodes_skipped() {
        let input = [
            "1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_".to_string(),
            row(1, "do", "AUX", 3, "aux"),
            row(2, "n't", "PART", 3, "advmod"),
            row(3, "go", "VERB", 0, "root"),
            "3.1\tgo\tgo\tVERB\t_\t_\t_\t_\t0:root\t_".to_string(),
        ]
        .join("\n");
        let s = parse_conllu(input.as_bytes()).unwrap();
        assert_eq!(s[0].len(), 3);
    }

    #[test]
    fn two_roots_rejected() {
        let input = [row(1, "a", "NOUN", 0, "root"), row(2, "b", "NOUN", 0, "root")].join("\n");
        assert!(matches!(
            parse_conllu(input.as_bytes()),
            Err(ConlluError::RootCount { roots: 2, .. })
        ));
    }

    #[test]
    fn spans() {
        // 1 <- 2 <- 3 (3 is root, 1 depends on 2), plus leaf 4 under 3.
        let input = [
            row(1, "a", "NOUN", 2, "dep"),
            row(2, "b", "NOUN", 3, "dep"),
            row(3, "c", "VERB", 0, "root"),
            row(4, "d", "NOUN", 3, "obj"),
        ]
        .join("\n");
        let s = &parse_conllu(input.as_bytes()).unwrap()[0];
        assert_eq!(subtree_span(s, 3), Span::new(1, 4));
        assert_eq!(subtree_span(s, 4), Span::new(4, 4));
        assert_eq!(subtree_span(s, 2), Span::new(1, 2));
    }

    /// Random trees: every node i > 1 attaches to a node in 1..i, then ids are
    /// permuted so heads can point either way.
    fn arb_tree() -> impl Strategy<Value = Vec<usize>> {
        (1usize..12)
            .prop_flat_map(|n| {
                let parents: Vec<_> = (1..n).map(|i| 0..i).collect();
                (Just(n), parents, Just((0..n).collect::<Vec<usize>>()).prop_shuffle())
            })
            .prop_map(|(n, parents, perm)| {
                let mut heads = vec![0; n];
                for (i, &p) in parents.iter().enumerate() {
                    heads[perm[i + 1]] = perm[p] + 1;
                }
                heads[perm[0]] = 0;
                heads
            })
    }

    fn sentence_from_heads(heads: &[usize]) -> Sentence {
        let rows: Vec<String> = heads
            .iter()
            .enumerate()
            .map(|(i, &h)| row(i + 1, &format!("w{i}"), "NOUN", h, if h == 0 { "root" } else { "dep" }))
            .collect();
        parse_conllu(rows.join("\n").as_bytes()).unwrap().remove(0)
    }

    proptest! {
        #[test]
        fn round_trip(heads in arb_tree()) {
            let s = sentence_from_heads(&heads);
            let text = write_conllu(std::slice::from_ref(&s));
            let again = parse_conllu(text.as_bytes()).unwrap();
            prop_assert_eq!(again, vec![s]);
        }

        #[test]
        fn subtree_span_nested_in_head_span(heads in arb_tree()) {
            let s = sentence_from_heads(&heads);
            for t in &s.tokens {
                if t.head != 0 {
                    prop_assert!(subtree_span(&s, t.head).covers(&subtree_span(&s, t.index)));
                }
            }
            let root = s.root().unwrap();
            prop_assert_eq!(subtree_span(&s, root), Span::new(1, s.len()));
        }
    }
}
