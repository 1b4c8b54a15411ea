mod common;

use gasflow::tfidf::{pre_purchase_view, rank_tfidf};

#[test]
fn rankings_match_recomputation() {
    common::check_tfidf_oracle().unwrap();
}

#[test]
fn pre_purchase_documents_are_the_preceding_days() {
    let day_events: Vec<Vec<String>> = (0..8).map(|d| vec![format!("day{d}")]).collect();
    let docs = pre_purchase_view(&day_events, &[3, 6], 2);
    let flat: Vec<&str> = docs.iter().map(|d| d[0].as_str()).collect();
    assert_eq!(flat, ["day1", "day2", "day4", "day5"]);
}

#[test]
fn top_n_truncates() {
    let docs: Vec<Vec<String>> = ["a b c", "d e f", "g"]
        .iter()
        .map(|d| d.split(' ').map(String::from).collect())
        .collect();
    assert_eq!(rank_tfidf(&docs, 2).len(), 2);
    assert_eq!(rank_tfidf(&docs, 2), common::oracle_tfidf(&docs, 2));
    assert!(rank_tfidf::<Vec<String>>(&[], 5).is_empty());
}
