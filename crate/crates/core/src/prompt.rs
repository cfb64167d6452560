// SPDX-License-Identifier: Apache-2.0

//! Prompt text to `{category: count}` maps.
//!
//! The tagger is lexicon driven. Tokens are classed as quantity words,
//! relation words (prepositions and verbs), stop words, or nouns. Each head
//! noun takes the nearest preceding unconsumed quantity word and defaults to
//! one when there is none. Bare nouns after a relation word describe the
//! scene ("on the prairie") and are only counted when a number word precedes
//! them. A noun directly followed by another noun is treated as a modifier.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, WordClass};

/// Ordered map from singular category label to a positive count.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryCountMap(IndexMap<String, u32>);

impl CategoryCountMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a map from pairs, summing duplicates. Zero counts are rejected.
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u32)>,
        S: Into<String>,
    {
        let mut map = CategoryCountMap::new();
        for (label, count) in pairs {
            let label = label.into();
            if count == 0 {
                return Err(Error::invalid_input(format!(
                    "category {label}: count must be >= 1"
                )));
            }
            map.add(label, count);
        }
        Ok(map)
    }

    /// Adds `count` to `label`, appending it if new.
    pub fn add(&mut self, label: impl Into<String>, count: u32) {
        let slot = self.0.entry(label.into()).or_insert(0);
        *slot = slot.saturating_add(count);
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.0.get(label).copied()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0.contains_key(label)
    }

    /// Number of distinct categories.
    pub fn n_classes(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Order-insensitive equality.
    pub fn same_counts(&self, other: &CategoryCountMap) -> bool {
        self.0.len() == other.0.len() && self.iter().all(|(k, v)| other.get(k) == Some(v))
    }

    /// Renders the map as a prompt such as "four people and one skis".
    pub fn render(&self, lex: &Lexicon) -> String {
        let phrases: Vec<String> = self
            .iter()
            .map(|(label, n)| {
                let q = lex
                    .number_word(n)
                    .map(str::to_string)
                    .unwrap_or(n.to_string());
                let noun = if n == 1 {
                    label.to_string()
                } else {
                    lex.pluralize(label)
                };
                format!("{q} {noun}")
            })
            .collect();
        join_phrases(&phrases)
    }
}

impl fmt::Display for CategoryCountMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{k}: {v}")?;
        }
        f.write_str("}")
    }
}

/// "a", "a and b", "a, b and c".
pub(crate) fn join_phrases(phrases: &[String]) -> String {
    match phrases {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseWarning {
    /// No category noun was recognized.
    NoCategory,
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseWarning::NoCategory => f.write_str("no category noun recognized"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPrompt {
    pub categories: CategoryCountMap,
    pub warnings: Vec<ParseWarning>,
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    text: String,
    /// Punctuation separates this token from the previous one.
    boundary_before: bool,
    /// Joined to the previous token by a hyphen.
    hyphen_before: bool,
}

fn flush(word: &mut String, boundary: &mut bool, hyphen: &mut bool, out: &mut Vec<Token>) {
    if word.is_empty() {
        return;
    }
    let mut text = std::mem::take(word);
    if let Some(stripped) = text.strip_suffix("'s") {
        text = stripped.to_string();
    }
    text.retain(|c| c != '\'');
    if !text.is_empty() {
        out.push(Token {
            text,
            boundary_before: std::mem::take(boundary),
            hyphen_before: std::mem::take(hyphen),
        });
    }
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut word = String::new();
    let mut boundary = false;
    let mut hyphen = false;
    for c in text.chars() {
        let c = if c == '\u{2019}' { '\'' } else { c };
        if c.is_alphanumeric() || c == '\'' {
            word.extend(c.to_lowercase());
        } else {
            let after_word = !word.is_empty();
            flush(&mut word, &mut boundary, &mut hyphen, &mut out);
            hyphen = c == '-' && after_word;
            if !c.is_whitespace() && c != '-' {
                boundary = true;
            }
        }
    }
    flush(&mut word, &mut boundary, &mut hyphen, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Tagged {
    Quantity { value: u32, cardinal: bool },
    Relation,
    Stop,
    Noun(String),
}

fn tag(tokens: &[Token], lex: &Lexicon) -> Vec<(Tagged, bool)> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    'outer: while i < tokens.len() {
        // A hyphenated compound ending in a participle ("snow-covered") is
        // an adjective.
        let mut end = i + 1;
        while end < tokens.len() && tokens[end].hyphen_before {
            end += 1;
        }
        if end - i > 1 && lex.has_verb_suffix(&tokens[end - 1].text) {
            out.push((Tagged::Stop, tokens[i].boundary_before));
            i = end;
            continue;
        }
        let longest = lex.max_alias_words().min(tokens.len() - i);
        for len in (2..=longest).rev() {
            let span = &tokens[i..i + len];
            if span[1..].iter().any(|t| t.boundary_before) {
                continue;
            }
            let head: Vec<&str> = span[..len - 1].iter().map(|t| t.text.as_str()).collect();
            let phrase = format!(
                "{} {}",
                head.join(" "),
                lex.normalize_noun(&span[len - 1].text)
            );
            if let Some(label) = lex.alias(&phrase) {
                out.push((Tagged::Noun(label.to_string()), span[0].boundary_before));
                i += len;
                continue 'outer;
            }
        }
        let tok = &tokens[i];
        let tagged = match lex.classify(&tok.text) {
            WordClass::Quantity { value, cardinal } => Tagged::Quantity { value, cardinal },
            WordClass::Relation => Tagged::Relation,
            WordClass::Stop => Tagged::Stop,
            WordClass::Noun => {
                let singular = lex.normalize_noun(&tok.text);
                let label = lex.alias(&singular).map(str::to_string).unwrap_or(singular);
                Tagged::Noun(label)
            }
        };
        out.push((tagged, tok.boundary_before));
        i += 1;
    }
    out
}

/// Extracts the category/quantity map from a prompt.
///
/// Empty or whitespace-only text is an error; text without any recognizable
/// noun yields an empty map with a [`ParseWarning::NoCategory`] warning.
pub fn parse_prompt(text: &str, lex: &Lexicon) -> Result<ParsedPrompt> {
    if text.trim().is_empty() {
        return Err(Error::invalid_input("empty prompt"));
    }
    let tagged = tag(&tokenize(text), lex);

    let mut categories = CategoryCountMap::new();
    let mut pending: Vec<(u32, bool)> = Vec::new();
    let mut in_relation = false;
    for (idx, (item, _)) in tagged.iter().enumerate() {
        match item {
            Tagged::Quantity { value, cardinal } => pending.push((*value, *cardinal)),
            Tagged::Relation => in_relation = true,
            Tagged::Stop => {}
            Tagged::Noun(label) => {
                let is_modifier = matches!(tagged.get(idx + 1), Some((Tagged::Noun(_), false)));
                if is_modifier {
                    continue;
                }
                let quantity = pending.pop();
                let count = match (in_relation, quantity) {
                    (false, Some((v, _))) => Some(v),
                    (false, None) => Some(1),
                    (true, Some((v, true))) => Some(v),
                    (true, _) => None,
                };
                if let Some(n) = count {
                    categories.add(label.clone(), n);
                }
            }
        }
    }

    let mut warnings = Vec::new();
    if categories.is_empty() {
        warnings.push(ParseWarning::NoCategory);
    }
    Ok(ParsedPrompt {
        categories,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CategoryCountMap {
        parse_prompt(text, Lexicon::shipped()).unwrap().categories
    }

    fn map(pairs: &[(&str, u32)]) -> CategoryCountMap {
        CategoryCountMap::from_pairs(pairs.iter().map(|&(k, v)| (k, v))).unwrap()
    }

    #[test]
    fn tokenizer_marks_punctuation() {
        let toks = tokenize("Cattle, sheep-dogs and the dog's bowl.");
        let texts: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(
            texts,
            ["cattle", "sheep", "dogs", "and", "the", "dog", "bowl"]
        );
        assert!(toks[1].boundary_before);
        assert!(!toks[2].boundary_before);
        assert!(toks[2].hyphen_before);
        assert!(!toks[3].hyphen_before);
    }

    #[test]
    fn hyphenated_participle_is_adjective() {
        assert_eq!(parse("four snow-covered trees"), map(&[("tree", 4)]));
        assert_eq!(parse("two sheep-dogs"), map(&[("dog", 2)]));
    }

    #[test]
    fn worked_examples() {
        assert_eq!(
            parse("four person and one skis"),
            map(&[("person", 4), ("skis", 1)])
        );
        assert_eq!(
            parse("two fishes and five trees"),
            map(&[("fish", 2), ("tree", 5)])
        );
        assert_eq!(parse("a dog running in the park"), map(&[("dog", 1)]));
        assert_eq!(
            parse("two dogs and two cats competing in surfing at sea"),
            map(&[("dog", 2), ("cat", 2)])
        );
    }

    #[test]
    fn default_quantity_is_one() {
        assert_eq!(
            parse("Cattle, sheep and chicken on the estate"),
            map(&[("cattle", 1), ("sheep", 1), ("chicken", 1)])
        );
    }

    #[test]
    fn intervening_adjectives_allowed() {
        assert_eq!(parse("two fluffy dogs"), map(&[("dog", 2)]));
        assert_eq!(parse("three polar bears"), map(&[("bear", 3)]));
    }

    #[test]
    fn unknown_modifier_noun_skipped() {
        assert_eq!(parse("two sheep dogs"), map(&[("dog", 2)]));
    }

    #[test]
    fn duplicates_accumulate() {
        assert_eq!(parse("one dog and one dog"), map(&[("dog", 2)]));
    }

    #[test]
    fn counted_objects_after_relation() {
        assert_eq!(
            parse("a man holding two umbrellas"),
            map(&[("man", 1), ("umbrella", 2)])
        );
        assert_eq!(parse("a cat sitting on a chair"), map(&[("cat", 1)]));
    }

    #[test]
    fn aliases_and_multiword_labels() {
        assert_eq!(
            parse("two hot dogs and a teddy bear"),
            map(&[("hot dog", 2), ("teddy bear", 1)])
        );
        assert_eq!(parse("three traffic lights"), map(&[("traffic light", 3)]));
        assert_eq!(parse("two puppies"), map(&[("dog", 2)]));
        // a boundary between the words blocks the alias
        assert_eq!(parse("hot, dogs"), map(&[("dog", 1)]));
    }

    #[test]
    fn digits_are_quantities() {
        assert_eq!(
            parse("3 cats and 12 birds"),
            map(&[("cat", 3), ("bird", 12)])
        );
    }

    #[test]
    fn no_noun_warns() {
        let p = parse_prompt("running quickly on the", Lexicon::shipped()).unwrap();
        assert!(p.categories.is_empty());
        assert_eq!(p.warnings, vec![ParseWarning::NoCategory]);
        assert!(parse_prompt("   ", Lexicon::shipped()).is_err());
    }

    #[test]
    fn render_round_trip() {
        let m = map(&[("person", 4), ("skis", 1)]);
        let text = m.render(Lexicon::shipped());
        assert_eq!(text, "four people and one skis");
        assert_eq!(parse(&text), m);
    }

    #[test]
    fn display_uses_structured_form() {
        assert_eq!(
            map(&[("person", 4), ("skis", 1)]).to_string(),
            "{person: 4; skis: 1}"
        );
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(CategoryCountMap::from_pairs([("dog", 0)]).is_err());
    }
}
