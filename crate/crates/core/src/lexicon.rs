// SPDX-License-Identifier: Apache-2.0

//! Word lists and inflection rules driving the prompt tagger.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SHIPPED_LEXICON: &str = include_str!("../data/lexicon.json");

/// Digit strings up to this value are read as quantities.
pub const MAX_DIGIT_QUANTITY: u32 = 99;

/// On-disk lexicon layout.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LexiconFile {
    pub number_words: BTreeMap<String, u32>,
    pub articles: Vec<String>,
    /// plural -> singular; consulted before the suffix rules.
    pub irregular_singulars: BTreeMap<String, String>,
    /// singular -> plural, used when rendering prompts.
    #[serde(default)]
    pub irregular_plurals: BTreeMap<String, String>,
    pub stop_words: Vec<String>,
    /// Prepositions and verbs. Nouns after one of these need an explicit
    /// number word to count as a category.
    #[serde(default)]
    pub relation_words: Vec<String>,
    #[serde(default)]
    pub verb_suffixes: Vec<String>,
    #[serde(default)]
    pub stop_suffixes: Vec<String>,
    #[serde(default)]
    pub noun_exceptions: Vec<String>,
    /// phrase (singular form) -> detector label
    #[serde(default)]
    pub label_aliases: BTreeMap<String, String>,
}

/// How the tagger sees a single lowercase token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordClass {
    /// A number word, digit string or article. `cardinal` is false for articles.
    Quantity {
        value: u32,
        cardinal: bool,
    },
    Relation,
    Stop,
    Noun,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    number_words: HashMap<String, u32>,
    articles: HashSet<String>,
    irregular_singulars: HashMap<String, String>,
    irregular_plurals: HashMap<String, String>,
    stop_words: HashSet<String>,
    relation_words: HashSet<String>,
    verb_suffixes: Vec<String>,
    stop_suffixes: Vec<String>,
    noun_exceptions: HashSet<String>,
    label_aliases: HashMap<String, String>,
    max_alias_words: usize,
}

fn lowered(words: impl IntoIterator<Item = String>) -> impl Iterator<Item = String> {
    words.into_iter().map(|w| w.trim().to_lowercase())
}

impl Lexicon {
    /// The lexicon bundled with the crate.
    pub fn shipped() -> &'static Lexicon {
        static SHIPPED: OnceLock<Lexicon> = OnceLock::new();
        SHIPPED
            .get_or_init(|| Lexicon::from_json(SHIPPED_LEXICON).expect("bundled lexicon is valid"))
    }

    pub fn shipped_file() -> LexiconFile {
        serde_json::from_str(SHIPPED_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LexiconFile =
            serde_json::from_str(text).map_err(|e| Error::json("lexicon", e))?;
        Lexicon::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Lexicon::from_json(&text)
    }

    pub fn from_file(file: LexiconFile) -> Result<Self> {
        let pairs = |m: BTreeMap<String, String>| -> HashMap<String, String> {
            m.into_iter()
                .map(|(k, v)| (k.trim().to_lowercase(), v.trim().to_lowercase()))
                .collect()
        };
        let label_aliases = pairs(file.label_aliases);
        let max_alias_words = label_aliases
            .keys()
            .map(|k| k.split_whitespace().count())
            .max()
            .unwrap_or(1);
        let lex = Lexicon {
            number_words: file
                .number_words
                .into_iter()
                .map(|(k, v)| (k.trim().to_lowercase(), v))
                .collect(),
            articles: lowered(file.articles).collect(),
            irregular_singulars: pairs(file.irregular_singulars),
            irregular_plurals: pairs(file.irregular_plurals),
            stop_words: lowered(file.stop_words).collect(),
            relation_words: lowered(file.relation_words).collect(),
            verb_suffixes: lowered(file.verb_suffixes).collect(),
            stop_suffixes: lowered(file.stop_suffixes).collect(),
            noun_exceptions: lowered(file.noun_exceptions).collect(),
            label_aliases,
            max_alias_words,
        };
        lex.validate()?;
        Ok(lex)
    }

    fn validate(&self) -> Result<()> {
        if let Some((w, _)) = self.number_words.iter().find(|(_, &v)| v == 0) {
            return Err(Error::invalid_config(format!(
                "number word {w:?} must map to >= 1"
            )));
        }
        for w in self.number_words.keys().chain(&self.articles) {
            if self.stop_words.contains(w) || self.relation_words.contains(w) {
                return Err(Error::invalid_config(format!(
                    "quantity word {w:?} is also listed as a stop or relation word"
                )));
            }
        }
        for singular in self.irregular_singulars.values() {
            let again = self.normalize_noun(singular);
            if &again != singular {
                return Err(Error::invalid_config(format!(
                    "irregular singular {singular:?} is not a fixed point (normalizes to {again:?})"
                )));
            }
        }
        for (singular, plural) in &self.irregular_plurals {
            let back = self.normalize_noun(plural);
            if &back != singular {
                return Err(Error::invalid_config(format!(
                    "irregular plural {plural:?} normalizes to {back:?}, not {singular:?}"
                )));
            }
        }
        Ok(())
    }

    /// Quantity value for a number word, article or digit string.
    pub fn quantity(&self, token: &str) -> Option<(u32, bool)> {
        if let Some(&v) = self.number_words.get(token) {
            return Some((v, true));
        }
        if self.articles.contains(token) {
            return Some((1, false));
        }
        if !token.is_empty() && token.bytes().all(|b| b.is_ascii_digit()) {
            return token
                .parse::<u32>()
                .ok()
                .filter(|v| (1..=MAX_DIGIT_QUANTITY).contains(v))
                .map(|v| (v, true));
        }
        None
    }

    fn has_suffix(&self, token: &str, suffixes: &[String]) -> bool {
        !self.noun_exceptions.contains(token)
            && suffixes
                .iter()
                .any(|s| token.len() > s.len() + 2 && token.ends_with(s.as_str()))
    }

    /// True for participle-like words ("covered", "looking").
    pub fn has_verb_suffix(&self, token: &str) -> bool {
        self.has_suffix(token, &self.verb_suffixes)
    }

    pub fn classify(&self, token: &str) -> WordClass {
        if let Some((value, cardinal)) = self.quantity(token) {
            return WordClass::Quantity { value, cardinal };
        }
        if self.relation_words.contains(token) || self.has_suffix(token, &self.verb_suffixes) {
            return WordClass::Relation;
        }
        if self.stop_words.contains(token)
            || self.has_suffix(token, &self.stop_suffixes)
            || !token.chars().any(char::is_alphabetic)
        {
            return WordClass::Stop;
        }
        WordClass::Noun
    }

    /// Singular form of one lowercase word.
    ///
    /// Irregulars win over suffix rules. The rule output is looked up in the
    /// irregulars table once more so that the mapping stays idempotent.
    pub fn normalize_noun(&self, word: &str) -> String {
        if let Some(s) = self.irregular_singulars.get(word) {
            return s.clone();
        }
        let stem = singular_by_rule(word);
        match self.irregular_singulars.get(&stem) {
            Some(s) => s.clone(),
            None => stem,
        }
    }

    /// Singular form of a phrase: only the head (last) word is inflected.
    pub fn normalize_phrase(&self, phrase: &str) -> String {
        match phrase.rsplit_once(' ') {
            Some((head, last)) => format!("{head} {}", self.normalize_noun(last)),
            None => self.normalize_noun(phrase),
        }
    }

    /// Plural form of a singular noun or phrase, inflecting the last word.
    pub fn pluralize(&self, singular: &str) -> String {
        match singular.rsplit_once(' ') {
            Some((head, last)) => format!("{head} {}", self.pluralize_word(last)),
            None => self.pluralize_word(singular),
        }
    }

    fn pluralize_word(&self, word: &str) -> String {
        if let Some(p) = self.irregular_plurals.get(word) {
            return p.clone();
        }
        plural_by_rule(word)
    }

    /// Canonical detector label for a normalized phrase, if aliased.
    pub fn alias(&self, phrase: &str) -> Option<&str> {
        self.label_aliases.get(phrase).map(String::as_str)
    }

    pub fn max_alias_words(&self) -> usize {
        self.max_alias_words
    }

    /// Word for a count, as used when rendering prompts.
    pub fn number_word(&self, value: u32) -> Option<&str> {
        // several words may share a value; pick the lexically first
        let mut best: Option<&str> = None;
        for (w, &v) in &self.number_words {
            if v == value && best.is_none_or(|b| w.as_str() < b) {
                best = Some(w.as_str());
            }
        }
        best
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::shipped().clone()
    }
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

fn singular_by_rule(word: &str) -> String {
    if word.len() > 4 && word.ends_with("ies") {
        return format!("{}y", &word[..word.len() - 3]);
    }
    if ["sses", "shes", "ches", "xes", "zes"]
        .iter()
        .any(|s| word.ends_with(s))
    {
        return word[..word.len() - 2].to_string();
    }
    if word.len() > 2
        && word.ends_with('s')
        && !["ss", "us", "is"].iter().any(|s| word.ends_with(s))
    {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

fn plural_by_rule(word: &str) -> String {
    let mut chars = word.chars().rev();
    if let (Some('y'), Some(prev)) = (chars.next(), chars.next()) {
        if !is_vowel(prev) {
            return format!("{}ies", &word[..word.len() - 1]);
        }
    }
    if ["s", "sh", "ch", "x", "z"]
        .iter()
        .any(|s| word.ends_with(s))
    {
        return format!("{word}es");
    }
    format!("{word}s")
}

/// Singular form of `word` under `lex`.
pub fn normalize_noun(word: &str, lex: &Lexicon) -> String {
    lex.normalize_noun(&word.trim().to_lowercase())
}
