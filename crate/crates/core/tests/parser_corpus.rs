// SPDX-License-Identifier: Apache-2.0

use cqscore::{parse_prompt, CategoryCountMap, Lexicon};
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    text: String,
    expected: CategoryCountMap,
}

fn corpus() -> Vec<Case> {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/parser_corpus.jsonl"
    );
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn corpus_parses_exactly() {
    let cases = corpus();
    assert!(cases.len() >= 50);
    let lex = Lexicon::shipped();
    let failures: Vec<String> = cases
        .iter()
        .filter_map(|c| {
            let got = parse_prompt(&c.text, lex).unwrap().categories;
            (got != c.expected).then(|| format!("{:?}: got {got}, want {}", c.text, c.expected))
        })
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn corpus_counts_are_order_preserving() {
    let lex = Lexicon::shipped();
    let got = parse_prompt("Cattle, sheep, chicken and geese are on the estate.", lex)
        .unwrap()
        .categories;
    let labels: Vec<&str> = got.labels().collect();
    assert_eq!(labels, ["cattle", "sheep", "chicken", "goose"]);
}

#[test]
fn render_round_trips_corpus_maps() {
    let lex = Lexicon::shipped();
    for c in corpus() {
        let text = c.expected.render(lex);
        let back = parse_prompt(&text, lex).unwrap().categories;
        assert_eq!(back, c.expected, "rendered as {text:?}");
    }
}
