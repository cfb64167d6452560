// SPDX-License-Identifier: Apache-2.0

//! Seeded generation of compositional quantity/category prompts, and the
//! score-threshold shortlist used when picking candidate images.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::prompt::{parse_prompt, CategoryCountMap};

const DEFAULT_GEN_CONFIG: &str = include_str!("../data/gen_config.json");

/// Above this many candidate combinations the generator samples instead of
/// enumerating.
const ENUMERATION_LIMIT: u128 = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub quantity_set: Vec<String>,
    pub category_set: Vec<String>,
    /// Patterns with `<q1> <c1>` ... `<q4> <c4>` slots.
    pub templates: Vec<String>,
    #[serde(default = "default_total")]
    pub total: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_total() -> usize {
    1700
}

impl Default for GenConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_GEN_CONFIG).expect("bundled generator config is valid")
    }
}

impl GenConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub id: String,
    pub text: String,
    /// The (category, quantity) pairs the text was rendered from.
    pub truth: CategoryCountMap,
    pub template_id: usize,
    pub seed_index: usize,
}

/// A render pattern split into literal text and slot references.
#[derive(Debug, Clone)]
struct Template {
    parts: Vec<Part>,
    slots: usize,
}

#[derive(Debug, Clone)]
enum Part {
    Text(String),
    Quantity(usize),
    Category(usize),
}

impl Template {
    fn parse(pattern: &str) -> Result<Self> {
        let mut parts = Vec::new();
        let mut rest = pattern;
        let mut seen_q = Vec::new();
        let mut seen_c = Vec::new();
        while let Some(start) = rest.find('<') {
            let end = rest[start..].find('>').map(|e| start + e).ok_or_else(|| {
                Error::invalid_config(format!("unclosed slot in template {pattern:?}"))
            })?;
            if start > 0 {
                parts.push(Part::Text(rest[..start].to_string()));
            }
            let slot = &rest[start + 1..end];
            let (kind, num) = slot.split_at(1.min(slot.len()));
            let idx: usize = num
                .parse()
                .ok()
                .filter(|&n| (1..=9).contains(&n))
                .ok_or_else(|| {
                    Error::invalid_config(format!("bad slot <{slot}> in template {pattern:?}"))
                })?;
            match kind {
                "q" => {
                    parts.push(Part::Quantity(idx - 1));
                    seen_q.push(idx);
                }
                "c" => {
                    parts.push(Part::Category(idx - 1));
                    seen_c.push(idx);
                }
                _ => {
                    return Err(Error::invalid_config(format!(
                        "bad slot <{slot}> in template {pattern:?}"
                    )))
                }
            }
            rest = &rest[end + 1..];
        }
        if !rest.is_empty() {
            parts.push(Part::Text(rest.to_string()));
        }
        let slots = seen_c.iter().copied().max().unwrap_or(0);
        seen_q.sort_unstable();
        seen_c.sort_unstable();
        let expected: Vec<usize> = (1..=slots).collect();
        if slots == 0 || seen_q != expected || seen_c != expected {
            return Err(Error::invalid_config(format!(
                "template {pattern:?} must use each of <q1>/<c1> .. <qN>/<cN> exactly once"
            )));
        }
        Ok(Template { parts, slots })
    }
}

/// Choice of one template plus `(quantity, category)` index pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Combo {
    template: usize,
    pairs: Vec<(usize, usize)>,
}

struct Generator<'a> {
    cfg: &'a GenConfig,
    lex: &'a Lexicon,
    templates: Vec<Template>,
    /// Indices of templates that fit in the category set.
    usable: Vec<usize>,
    quantities: Vec<u32>,
}

fn check_distinct(items: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for item in items {
        if !seen.insert(item) {
            return Err(Error::invalid_config(format!("duplicate {what} {item:?}")));
        }
    }
    Ok(())
}

impl<'a> Generator<'a> {
    fn new(cfg: &'a GenConfig, lex: &'a Lexicon) -> Result<Self> {
        if cfg.quantity_set.is_empty() || cfg.category_set.is_empty() || cfg.templates.is_empty() {
            return Err(Error::invalid_config(
                "quantity_set, category_set and templates must be nonempty",
            ));
        }
        if cfg.total == 0 {
            return Err(Error::invalid_config("total must be >= 1"));
        }
        check_distinct(&cfg.quantity_set, "quantity word")?;
        check_distinct(&cfg.category_set, "category")?;

        let quantities = cfg
            .quantity_set
            .iter()
            .map(|w| {
                lex.quantity(&w.to_lowercase())
                    .map(|(v, _)| v)
                    .ok_or_else(|| Error::invalid_config(format!("{w:?} is not a quantity word")))
            })
            .collect::<Result<Vec<_>>>()?;

        // every category must come back out of the parser unchanged
        for c in &cfg.category_set {
            for (word, n) in [("one", 1), ("two", 2)] {
                let form = if n == 1 { c.clone() } else { lex.pluralize(c) };
                let got = parse_prompt(&format!("{word} {form}"), lex)?.categories;
                if got != CategoryCountMap::from_pairs([(c.as_str(), n)])? {
                    return Err(Error::invalid_config(format!(
                        "category {c:?} does not round-trip through the parser (\"{word} {form}\" -> {got})"
                    )));
                }
            }
        }

        let templates = cfg
            .templates
            .iter()
            .map(|t| Template::parse(t))
            .collect::<Result<Vec<_>>>()?;
        let usable: Vec<usize> = (0..templates.len())
            .filter(|&i| templates[i].slots <= cfg.category_set.len())
            .collect();
        if usable.is_empty() {
            return Err(Error::invalid_config(
                "every template needs more distinct categories than configured",
            ));
        }
        Ok(Generator {
            cfg,
            lex,
            templates,
            usable,
            quantities,
        })
    }

    /// Number of distinct combos (saturating).
    fn space(&self) -> u128 {
        let c = self.cfg.category_set.len() as u128;
        let q = self.cfg.quantity_set.len() as u128;
        self.usable
            .iter()
            .map(|&t| {
                let k = self.templates[t].slots as u32;
                let perms = (0..k as u128).fold(1u128, |acc, i| acc.saturating_mul(c - i));
                perms.saturating_mul(q.saturating_pow(k))
            })
            .fold(0u128, u128::saturating_add)
    }

    fn render(&self, combo: &Combo) -> (String, CategoryCountMap) {
        let mut text = String::new();
        for part in &self.templates[combo.template].parts {
            match *part {
                Part::Text(ref s) => text.push_str(s),
                Part::Quantity(i) => text.push_str(&self.cfg.quantity_set[combo.pairs[i].0]),
                Part::Category(i) => {
                    let (q, c) = combo.pairs[i];
                    let noun = &self.cfg.category_set[c];
                    if self.quantities[q] == 1 {
                        text.push_str(noun);
                    } else {
                        text.push_str(&self.lex.pluralize(noun));
                    }
                }
            }
        }
        let mut truth = CategoryCountMap::new();
        for &(q, c) in &combo.pairs {
            truth.add(self.cfg.category_set[c].clone(), self.quantities[q]);
        }
        (text, truth)
    }

    fn random_combo(&self, rng: &mut ChaCha8Rng, first: Option<(usize, usize)>) -> Combo {
        let template = self.usable[rng.gen_range(0..self.usable.len())];
        let k = self.templates[template].slots;
        let n_cat = self.cfg.category_set.len();
        let n_q = self.cfg.quantity_set.len();
        let mut cats: Vec<usize> = match first {
            Some((_, c)) => {
                let others: Vec<usize> = (0..n_cat).filter(|&i| i != c).collect();
                std::iter::once(c)
                    .chain(others.choose_multiple(rng, k - 1).copied())
                    .collect()
            }
            None => rand::seq::index::sample(rng, n_cat, k).into_vec(),
        };
        cats.truncate(k);
        let pairs = cats
            .into_iter()
            .enumerate()
            .map(|(slot, c)| match (slot, first) {
                (0, Some((q, _))) => (q, c),
                _ => (rng.gen_range(0..n_q), c),
            })
            .collect();
        Combo { template, pairs }
    }

    fn enumerate(&self) -> Vec<Combo> {
        fn extend(
            gen: &Generator<'_>,
            template: usize,
            k: usize,
            used: &mut Vec<(usize, usize)>,
            out: &mut Vec<Combo>,
        ) {
            if used.len() == k {
                out.push(Combo {
                    template,
                    pairs: used.clone(),
                });
                return;
            }
            for c in 0..gen.cfg.category_set.len() {
                if used.iter().any(|&(_, u)| u == c) {
                    continue;
                }
                for q in 0..gen.cfg.quantity_set.len() {
                    used.push((q, c));
                    extend(gen, template, k, used, out);
                    used.pop();
                }
            }
        }
        let mut out = Vec::new();
        for &t in &self.usable {
            extend(self, t, self.templates[t].slots, &mut Vec::new(), &mut out);
        }
        out
    }
}

/// Generates `cfg.total` distinct prompts, deterministically for a seed.
///
/// When the total is at least `|quantities| * |categories|` every quantity
/// word and every category appears somewhere in the output.
pub fn generate_prompts(cfg: &GenConfig, lex: &Lexicon) -> Result<Vec<PromptSpec>> {
    let gen = Generator::new(cfg, lex)?;
    let space = gen.space();
    if space < cfg.total as u128 {
        return Err(Error::InsufficientSpace {
            requested: cfg.total,
            available: space as usize,
            shortfall: cfg.total - space as usize,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut seen: HashSet<String> = HashSet::new();
    let mut picked: Vec<(usize, String, CategoryCountMap)> = Vec::with_capacity(cfg.total);
    let mut accept = |combo: &Combo, picked: &mut Vec<_>| {
        let (text, truth) = gen.render(combo);
        if seen.insert(text.clone()) {
            picked.push((combo.template, text, truth));
            true
        } else {
            false
        }
    };

    let n_q = cfg.quantity_set.len();
    let n_c = cfg.category_set.len();
    let coverage = n_q.max(n_c).min(cfg.total);
    for i in 0..coverage {
        for _ in 0..64 {
            let combo = gen.random_combo(&mut rng, Some((i % n_q, i % n_c)));
            if accept(&combo, &mut picked) {
                break;
            }
        }
    }

    if space <= ENUMERATION_LIMIT {
        let mut all = gen.enumerate();
        all.shuffle(&mut rng);
        for combo in &all {
            if picked.len() == cfg.total {
                break;
            }
            accept(combo, &mut picked);
        }
    } else {
        let max_attempts = cfg.total.saturating_mul(1000);
        let mut attempts = 0usize;
        while picked.len() < cfg.total && attempts < max_attempts {
            let combo = gen.random_combo(&mut rng, None);
            accept(&combo, &mut picked);
            attempts += 1;
        }
    }
    if picked.len() < cfg.total {
        return Err(Error::InsufficientSpace {
            requested: cfg.total,
            available: picked.len(),
            shortfall: cfg.total - picked.len(),
        });
    }

    picked.shuffle(&mut rng);
    let width = cfg.total.to_string().len().max(4);
    picked
        .into_iter()
        .enumerate()
        .map(|(i, (template_id, text, truth))| {
            let parsed = parse_prompt(&text, lex)?.categories;
            if parsed != truth {
                return Err(Error::invalid_config(format!(
                    "generated prompt {text:?} parses to {parsed}, expected {truth}"
                )));
            }
            Ok(PromptSpec {
                id: format!("p{i:0width$}"),
                text,
                truth,
                template_id,
                seed_index: i,
            })
        })
        .collect()
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut out: W) -> Result<()> {
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::json("serialize", e))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

/// Ids with score strictly above `threshold`, best first, ties by id.
pub fn filter_candidates(scores: &[(String, f64)], threshold: f64) -> Result<Vec<String>> {
    if let Some((id, s)) = scores.iter().find(|(_, s)| !s.is_finite()) {
        return Err(Error::invalid_input(format!(
            "candidate {id}: non-finite score {s}"
        )));
    }
    if !threshold.is_finite() {
        return Err(Error::invalid_input(format!(
            "non-finite threshold {threshold}"
        )));
    }
    let mut kept: Vec<&(String, f64)> = scores.iter().filter(|(_, s)| *s > threshold).collect();
    kept.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(kept.into_iter().map(|(id, _)| id.clone()).collect())
}

/// Reads `candidate_id,score` rows. A header row is skipped if present.
pub fn read_candidate_scores(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv {
            context: path.display().to_string(),
            source: e,
        })?;
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            context: path.display().to_string(),
            source: e,
        })?;
        if record.len() != 2 {
            return Err(Error::invalid_input(format!(
                "{}: row {}: expected 2 columns, got {}",
                path.display(),
                row + 1,
                record.len()
            )));
        }
        match record[1].parse::<f64>() {
            Ok(score) => out.push((record[0].to_string(), score)),
            Err(_) if row == 0 => continue,
            Err(_) => {
                return Err(Error::invalid_input(format!(
                    "{}: row {}: score {:?} is not a number",
                    path.display(),
                    row + 1,
                    &record[1]
                )))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(total: usize) -> GenConfig {
        GenConfig {
            quantity_set: vec!["two".into(), "five".into()],
            category_set: vec!["fish".into(), "tree".into()],
            templates: vec!["<q1> <c1> and <q2> <c2>".into()],
            total,
            rng_seed: 0,
        }
    }

    #[test]
    fn two_fishes_and_five_trees_shape() {
        let out = generate_prompts(&small(1), Lexicon::shipped()).unwrap();
        assert_eq!(out.len(), 1);
        let p = &out[0];
        let words: Vec<&str> = p.text.split(' ').collect();
        assert_eq!(words.len(), 5);
        assert_eq!(words[2], "and");
        assert!(["fishes", "trees"].contains(&words[1]));
        assert!(["two", "five"].contains(&words[0]));
        assert_eq!(p.truth.n_classes(), 2);
        assert_eq!(
            parse_prompt(&p.text, Lexicon::shipped())
                .unwrap()
                .categories,
            p.truth
        );
    }

    #[test]
    fn small_space_fully_enumerable() {
        // 2 orders x 2^2 quantity choices
        let out = generate_prompts(&small(8), Lexicon::shipped()).unwrap();
        let texts: HashSet<_> = out.iter().map(|p| p.text.clone()).collect();
        assert_eq!(texts.len(), 8);
        assert!(texts.contains("two fishes and five trees"));
    }

    #[test]
    fn too_many_requested() {
        match generate_prompts(&small(9), Lexicon::shipped()) {
            Err(Error::InsufficientSpace {
                requested: 9,
                available: 8,
                shortfall: 1,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn singular_for_one() {
        let cfg = GenConfig {
            quantity_set: vec!["one".into()],
            category_set: vec!["sheep".into(), "goose".into(), "dog".into()],
            templates: vec!["<q1> <c1> on the prairie".into()],
            total: 3,
            rng_seed: 7,
        };
        let mut texts: Vec<_> = generate_prompts(&cfg, Lexicon::shipped())
            .unwrap()
            .into_iter()
            .map(|p| p.text)
            .collect();
        texts.sort();
        assert_eq!(
            texts,
            [
                "one dog on the prairie",
                "one goose on the prairie",
                "one sheep on the prairie"
            ]
        );
    }

    #[test]
    fn config_errors() {
        let lex = Lexicon::shipped();
        let mut cfg = small(1);
        cfg.quantity_set = vec!["many".into()];
        assert!(matches!(
            generate_prompts(&cfg, lex),
            Err(Error::InvalidConfig(_))
        ));

        let mut cfg = small(1);
        cfg.templates = vec!["<q1> <c1> and <q3> <c3>".into()];
        assert!(matches!(
            generate_prompts(&cfg, lex),
            Err(Error::InvalidConfig(_))
        ));

        let mut cfg = small(1);
        cfg.category_set = vec!["running".into()];
        assert!(matches!(
            generate_prompts(&cfg, lex),
            Err(Error::InvalidConfig(_))
        ));

        let mut cfg = small(1);
        cfg.total = 0;
        assert!(generate_prompts(&cfg, lex).is_err());

        let mut cfg = small(1);
        cfg.category_set = vec!["fish".into(), "fish".into()];
        assert!(generate_prompts(&cfg, lex).is_err());
    }

    #[test]
    fn coverage_when_total_allows() {
        let cfg = GenConfig {
            quantity_set: ["one", "two", "three"].map(String::from).to_vec(),
            category_set: ["dog", "cat", "horse", "sheep", "bird", "cow", "boat"]
                .map(String::from)
                .to_vec(),
            templates: vec!["<q1> <c1> and <q2> <c2>".into(), "<q1> <c1>".into()],
            total: 21,
            rng_seed: 3,
        };
        let out = generate_prompts(&cfg, Lexicon::shipped()).unwrap();
        for c in &cfg.category_set {
            assert!(out.iter().any(|p| p.truth.contains(c)), "missing {c}");
        }
        for q in 1..=3 {
            assert!(
                out.iter().any(|p| p.truth.iter().any(|(_, n)| n == q)),
                "missing {q}"
            );
        }
    }

    #[test]
    fn filter_examples() {
        let s = |pairs: &[(&str, f64)]| -> Vec<(String, f64)> {
            pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
        };
        assert_eq!(
            filter_candidates(&s(&[("a", 0.9), ("b", 0.4), ("c", 0.95)]), 0.5).unwrap(),
            ["c", "a"]
        );
        assert!(filter_candidates(&s(&[("a", 0.1), ("b", 0.2)]), 0.5)
            .unwrap()
            .is_empty());
        assert!(filter_candidates(&s(&[("a", 0.8), ("b", 0.8)]), 0.8)
            .unwrap()
            .is_empty());
        assert_eq!(
            filter_candidates(&s(&[("b", 0.9), ("a", 0.9)]), 0.5).unwrap(),
            ["a", "b"]
        );
        assert!(filter_candidates(&s(&[("a", f64::NAN)]), 0.5).is_err());
    }
}
