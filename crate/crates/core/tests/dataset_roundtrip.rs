// SPDX-License-Identifier: Apache-2.0

use std::collections::HashSet;

use cqscore::dataset::{generate_prompts, write_jsonl, GenConfig, PromptSpec};
use cqscore::{parse_prompt, Lexicon};

fn bytes(prompts: &[PromptSpec]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_jsonl(prompts, &mut buf).unwrap();
    buf
}

#[test]
fn default_config_yields_1700_distinct_round_tripping_prompts() {
    let lex = Lexicon::shipped();
    let cfg = GenConfig::default();
    let prompts = generate_prompts(&cfg, lex).unwrap();
    assert_eq!(prompts.len(), 1700);

    let texts: HashSet<&str> = prompts.iter().map(|p| p.text.as_str()).collect();
    assert_eq!(texts.len(), 1700);
    let ids: HashSet<&str> = prompts.iter().map(|p| p.id.as_str()).collect();
    assert_eq!(ids.len(), 1700);

    for p in &prompts {
        assert_eq!(
            parse_prompt(&p.text, lex).unwrap().categories,
            p.truth,
            "{}",
            p.text
        );
    }

    let again = generate_prompts(&cfg, lex).unwrap();
    assert_eq!(bytes(&prompts), bytes(&again));
}

#[test]
fn seed_changes_output() {
    let lex = Lexicon::shipped();
    let a = generate_prompts(&GenConfig::default(), lex).unwrap();
    let cfg = GenConfig {
        rng_seed: 1,
        ..GenConfig::default()
    };
    let b = generate_prompts(&cfg, lex).unwrap();
    assert_ne!(bytes(&a), bytes(&b));
}

#[test]
fn every_category_and_quantity_is_used() {
    let lex = Lexicon::shipped();
    let cfg = GenConfig::default();
    let prompts = generate_prompts(&cfg, lex).unwrap();
    let cats: HashSet<&str> = prompts.iter().flat_map(|p| p.truth.labels()).collect();
    assert_eq!(cats.len(), cfg.category_set.len());
    let counts: HashSet<u32> = prompts
        .iter()
        .flat_map(|p| p.truth.iter().map(|(_, n)| n))
        .collect();
    assert_eq!(counts.len(), cfg.quantity_set.len());
}

#[test]
fn jsonl_lines_deserialize() {
    let lex = Lexicon::shipped();
    let cfg = GenConfig {
        total: 50,
        ..GenConfig::default()
    };
    let prompts = generate_prompts(&cfg, lex).unwrap();
    let text = String::from_utf8(bytes(&prompts)).unwrap();
    let back: Vec<PromptSpec> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(back, prompts);
}
