//! Event text normalization: lowercase, drop punctuation and stopwords,
//! Porter-stem what remains.

/// Snowball English stopword list.
pub const STOPWORDS: [&str; 174] = [
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours",
    "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself",
    "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "which",
    "who", "whom", "this", "that", "these", "those", "am", "is", "are", "was", "were", "be",
    "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing", "would",
    "should", "could", "ought", "i'm", "you're", "he's", "she's", "it's", "we're", "they're",
    "i've", "you've", "we've", "they've", "i'd", "you'd", "he'd", "she'd", "we'd", "they'd",
    "i'll", "you'll", "he'll", "she'll", "we'll", "they'll", "isn't", "aren't", "wasn't",
    "weren't", "hasn't", "haven't", "hadn't", "doesn't", "don't", "didn't", "won't",
    "wouldn't", "shan't", "shouldn't", "can't", "cannot", "couldn't", "mustn't", "let's",
    "that's", "who's", "what's", "here's", "there's", "when's", "where's", "why's", "how's",
    "a", "an", "the", "and", "but", "if", "or", "because", "as", "until", "while", "of", "at",
    "by", "for", "with", "about", "against", "between", "into", "through", "during", "before",
    "after", "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over",
    "under", "again", "further", "then", "once", "here", "there", "when", "where", "why",
    "how", "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no",
    "nor", "not", "only", "own", "same", "so", "than", "too", "very",
];

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(&word)
}

/// Porter stem of an already lowercased word.
pub fn stem(word: &str) -> String {
    porter_stemmer::stem(word)
}

fn clean_token(raw: &str) -> Option<String> {
    let lower = raw.to_lowercase().replace('\u{2019}', "'");
    // Clitics split off by tokenizers ("China 's", "wo n't") carry no content.
    if matches!(lower.as_str(), "'s" | "'" | "n't" | "'re" | "'ve" | "'ll" | "'d" | "'m") {
        return None;
    }
    let trimmed = lower.trim_matches(|c: char| !c.is_alphanumeric());
    let word = trimmed.strip_suffix("'s").unwrap_or(trimmed);
    (!word.is_empty()).then(|| word.to_string())
}

/// Normalizes whitespace-separated text into a list of stems, order preserved.
pub fn normalize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(clean_token)
        .filter(|w| !is_stopword(w))
        .map(|w| stem(&w))
        .collect()
}
