// SPDX-License-Identifier: Apache-2.0

//! Composition benchmark suites and per-method aggregation tables.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PromptSpec;
use crate::detect::{parse_detections, ExternalMetrics, PostprocessConfig};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::prompt::{join_phrases, parse_prompt, CategoryCountMap};
use crate::score::{score_pair, AlignmentScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteKind {
    /// Type 1: one category, quantity 1..=max_n.
    FixedCategoryIncrementalQuantity,
    /// Type 2: 1..=max_n categories, random quantities.
    RandomQuantityIncrementalCategory,
    /// Type 3: step k has k categories at quantity k.
    IncrementalQuantityIncrementalCategory,
}

impl SuiteKind {
    fn short(self) -> &'static str {
        match self {
            SuiteKind::FixedCategoryIncrementalQuantity => "t1",
            SuiteKind::RandomQuantityIncrementalCategory => "t2",
            SuiteKind::IncrementalQuantityIncrementalCategory => "t3",
        }
    }
}

impl FromStr for SuiteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "type1" | "1" | "fixed-category-incremental-quantity" => {
                Ok(SuiteKind::FixedCategoryIncrementalQuantity)
            }
            "type2" | "2" | "random-quantity-incremental-category" => {
                Ok(SuiteKind::RandomQuantityIncrementalCategory)
            }
            "type3" | "3" | "incremental-quantity-incremental-category" => {
                Ok(SuiteKind::IncrementalQuantityIncrementalCategory)
            }
            other => Err(Error::invalid_config(format!(
                "unknown suite kind {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositionTag {
    #[default]
    Normal,
    Awkward,
    Unlikely,
}

impl FromStr for CompositionTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(CompositionTag::Normal),
            "awkward" => Ok(CompositionTag::Awkward),
            "unlikely" => Ok(CompositionTag::Unlikely),
            other => Err(Error::invalid_config(format!(
                "unknown composition tag {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub composition_tag: CompositionTag,
    /// Appended to every prompt, e.g. "on the prairie". May be empty.
    pub scene: String,
    /// Quantities drawn uniformly for the random-quantity suite.
    pub quantity_set: Vec<u32>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            composition_tag: CompositionTag::Normal,
            scene: "on the prairie".to_string(),
            quantity_set: vec![1, 2, 3, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteHeader {
    pub suite_kind: SuiteKind,
    pub composition_tag: CompositionTag,
    pub max_n: usize,
    pub seed: u64,
    pub categories: Vec<String>,
    pub scene: String,
    pub quantity_distribution: String,
    pub quantity_set: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub header: SuiteHeader,
    pub prompts: Vec<PromptSpec>,
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn quantity_phrase(noun: &str, n: u32, lex: &Lexicon) -> String {
    if n == 1 {
        let article = if noun.starts_with(['a', 'e', 'i', 'o', 'u']) {
            "an"
        } else {
            "a"
        };
        return format!("{article} {noun}");
    }
    let word = lex
        .number_word(n)
        .map(str::to_string)
        .unwrap_or(n.to_string());
    format!("{word} {}", lex.pluralize(noun))
}

fn render_suite_prompt(truth: &CategoryCountMap, scene: &str, lex: &Lexicon) -> String {
    let phrases: Vec<String> = truth
        .iter()
        .map(|(c, n)| quantity_phrase(c, n, lex))
        .collect();
    let body = capitalize(&join_phrases(&phrases));
    if scene.trim().is_empty() {
        body
    } else {
        format!("{body} {}", scene.trim())
    }
}

/// Builds one composition suite. Every prompt round-trips through the parser.
pub fn generate_suite(
    kind: SuiteKind,
    categories: &[String],
    max_n: usize,
    seed: u64,
    opts: &SuiteOptions,
    lex: &Lexicon,
) -> Result<SuiteSpec> {
    if max_n == 0 {
        return Err(Error::invalid_config("max_n must be >= 1"));
    }
    if categories.is_empty() {
        return Err(Error::invalid_config("category list is empty"));
    }
    if kind != SuiteKind::FixedCategoryIncrementalQuantity && max_n > categories.len() {
        return Err(Error::invalid_config(format!(
            "max_n {max_n} exceeds the {} available categories",
            categories.len()
        )));
    }
    if opts.quantity_set.is_empty() || opts.quantity_set.contains(&0) {
        return Err(Error::invalid_config(
            "quantity_set must be nonempty and >= 1",
        ));
    }
    let cats: Vec<String> = categories.iter().map(|c| c.trim().to_lowercase()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut prompts = Vec::with_capacity(max_n);
    for step in 1..=max_n {
        let pairs: Vec<(&str, u32)> = match kind {
            SuiteKind::FixedCategoryIncrementalQuantity => vec![(cats[0].as_str(), step as u32)],
            SuiteKind::RandomQuantityIncrementalCategory => cats[..step]
                .iter()
                .map(|c| (c.as_str(), *opts.quantity_set.choose(&mut rng).unwrap()))
                .collect(),
            SuiteKind::IncrementalQuantityIncrementalCategory => cats[..step]
                .iter()
                .map(|c| (c.as_str(), step as u32))
                .collect(),
        };
        let truth = CategoryCountMap::from_pairs(pairs)?;
        let text = render_suite_prompt(&truth, &opts.scene, lex);
        let parsed = parse_prompt(&text, lex)?.categories;
        if parsed != truth {
            return Err(Error::invalid_config(format!(
                "suite prompt {text:?} parses to {parsed}, expected {truth}"
            )));
        }
        prompts.push(PromptSpec {
            id: format!("{}-{step:03}", kind.short()),
            text,
            truth,
            template_id: 0,
            seed_index: step - 1,
        });
    }
    Ok(SuiteSpec {
        header: SuiteHeader {
            suite_kind: kind,
            composition_tag: opts.composition_tag,
            max_n,
            seed,
            categories: cats,
            scene: opts.scene.clone(),
            quantity_distribution: "uniform".to_string(),
            quantity_set: opts.quantity_set.clone(),
        },
        prompts,
    })
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    suite: SuiteHeader,
}

/// Header line followed by one prompt per line.
pub fn write_suite<W: Write>(suite: &SuiteSpec, mut out: W) -> Result<()> {
    let header = serde_json::to_string(&HeaderLine {
        suite: suite.header.clone(),
    })
    .map_err(|e| Error::json("serialize suite header", e))?;
    writeln!(out, "{header}").map_err(|e| Error::io("<output>", e))?;
    crate::dataset::write_jsonl(&suite.prompts, out)
}

pub fn read_suite(path: &Path) -> Result<SuiteSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::invalid_input(format!("{}: empty suite file", path.display())))?;
    let header: HeaderLine = serde_json::from_str(first)
        .map_err(|e| Error::json(format!("{}: line 1 (suite header)", path.display()), e))?;
    let prompts = lines
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::json(format!("{}: line {}", path.display(), i + 1), e))
        })
        .collect::<Result<Vec<PromptSpec>>>()?;
    Ok(SuiteSpec {
        header: header.suite,
        prompts,
    })
}

/// A prompt with an id, as read from any prompt-bearing JSON-lines file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRecord {
    pub id: String,
    pub text: String,
}

#[derive(Deserialize)]
struct RawPromptLine {
    #[serde(alias = "image_id")]
    id: String,
    #[serde(alias = "prompt")]
    text: String,
}

/// Reads `{"id", "text"}` lines; suite header lines are skipped.
pub fn read_prompt_records(path: &Path) -> Result<Vec<PromptRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ctx = || format!("{}: line {}", path.display(), i + 1);
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::json(ctx(), e))?;
        if value.get("suite").is_some() {
            continue;
        }
        let raw: RawPromptLine =
            serde_json::from_value(value).map_err(|e| Error::json(ctx(), e))?;
        out.push(PromptRecord {
            id: raw.id,
            text: raw.text,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub prompt_id: String,
    pub score: AlignmentScore,
    pub external: ExternalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method_name: String,
    pub records: Vec<MethodRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Column {
    Acc,
    Aqc,
    Cq,
    Clip,
    Blip,
    Fid,
}

impl Column {
    pub const ALL: [Column; 6] = [
        Column::Acc,
        Column::Aqc,
        Column::Cq,
        Column::Clip,
        Column::Blip,
        Column::Fid,
    ];

    pub fn higher_is_better(self) -> bool {
        self != Column::Fid
    }

    pub fn name(self) -> &'static str {
        match self {
            Column::Acc => "acc",
            Column::Aqc => "aqc",
            Column::Cq => "cq",
            Column::Clip => "clip",
            Column::Blip => "blip",
            Column::Fid => "fid",
        }
    }

    fn of(self, r: &MethodRecord) -> Option<f64> {
        match self {
            Column::Acc => Some(r.score.acc),
            Column::Aqc => Some(r.score.aqc),
            Column::Cq => Some(r.score.cq),
            Column::Clip => r.external.clip,
            Column::Blip => r.external.blip,
            Column::Fid => r.external.fid,
        }
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub n: usize,
    pub acc: f64,
    pub aqc: f64,
    pub cq: f64,
    pub clip: Option<f64>,
    pub blip: Option<f64>,
    pub fid: Option<f64>,
}

impl TableRow {
    pub fn get(&self, col: Column) -> Option<f64> {
        match col {
            Column::Acc => Some(self.acc),
            Column::Aqc => Some(self.aqc),
            Column::Cq => Some(self.cq),
            Column::Clip => self.clip,
            Column::Blip => self.blip,
            Column::Fid => self.fid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    /// Sorted by mean cq, best first.
    pub rows: Vec<TableRow>,
    /// Methods holding the best value of each column.
    pub best: BTreeMap<Column, Vec<String>>,
}

/// Correctly rounded arithmetic mean.
///
/// The sum is carried out exactly, so the result does not depend on the
/// order of `values` and the mean of a constant column is that constant.
pub fn exact_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sum = BigRational::zero();
    for &v in values {
        sum += BigRational::from_float(v)?;
    }
    let n = BigRational::from_integer((values.len() as u64).into());
    (sum / n).to_f64()
}

/// Per-method column means, ranked by cq.
pub fn aggregate(runs: &[MethodRun]) -> Result<Table> {
    let mut all_ids: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    for run in runs {
        let mut own = HashSet::new();
        for r in &run.records {
            if !own.insert(r.prompt_id.as_str()) {
                return Err(Error::invalid_input(format!(
                    "method {}: duplicate record for prompt {}",
                    run.method_name, r.prompt_id
                )));
            }
            if seen.insert(r.prompt_id.as_str()) {
                all_ids.push(r.prompt_id.as_str());
            }
        }
    }
    let mut problems = Vec::new();
    for run in runs {
        let own: HashSet<&str> = run.records.iter().map(|r| r.prompt_id.as_str()).collect();
        for id in &all_ids {
            if !own.contains(id) {
                problems.push(format!("{} lacks {id}", run.method_name));
            }
        }
    }
    if !problems.is_empty() {
        return Err(Error::Mismatch {
            context: "runs cover different prompt sets".to_string(),
            ids: problems,
        });
    }

    let mut rows: Vec<TableRow> = runs
        .iter()
        .map(|run| {
            let mean = |col: Column| {
                let vals: Vec<f64> = run.records.iter().filter_map(|r| col.of(r)).collect();
                exact_mean(&vals)
            };
            TableRow {
                method: run.method_name.clone(),
                n: run.records.len(),
                acc: mean(Column::Acc).unwrap_or(0.0),
                aqc: mean(Column::Aqc).unwrap_or(0.0),
                cq: mean(Column::Cq).unwrap_or(0.0),
                clip: mean(Column::Clip),
                blip: mean(Column::Blip),
                fid: mean(Column::Fid),
            }
        })
        .collect();
    rows.sort_by(|a, b| b.cq.total_cmp(&a.cq).then_with(|| a.method.cmp(&b.method)));

    let mut best = BTreeMap::new();
    for col in Column::ALL {
        let values: Vec<(f64, &str)> = rows
            .iter()
            .filter_map(|r| r.get(col).map(|v| (v, r.method.as_str())))
            .collect();
        let target = values.iter().map(|&(v, _)| v).reduce(|a, b| {
            if col.higher_is_better() {
                a.max(b)
            } else {
                a.min(b)
            }
        });
        if let Some(t) = target {
            best.insert(
                col,
                values
                    .iter()
                    .filter(|&&(v, _)| v == t)
                    .map(|&(_, m)| m.to_string())
                    .collect(),
            );
        }
    }
    Ok(Table { rows, best })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Table {
    fn best_columns(&self, method: &str) -> Vec<&'static str> {
        self.best
            .iter()
            .filter(|(_, ms)| ms.iter().any(|m| m == method))
            .map(|(c, _)| c.name())
            .collect()
    }

    /// Tab-separated, full precision; the last column lists the columns in
    /// which the row holds the best value.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("method\tn\tacc\taqc\tcq\tclip\tblip\tfid\tbest\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.method,
                r.n,
                r.acc,
                r.aqc,
                r.cq,
                fmt_opt(r.clip),
                fmt_opt(r.blip),
                fmt_opt(r.fid),
                self.best_columns(&r.method).join(",")
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    /// Markdown layout with the best value of each column in bold.
    pub fn to_markdown(&self) -> String {
        let cols = [
            (Column::Clip, "Clip Score ↑"),
            (Column::Blip, "Blip Score ↑"),
            (Column::Cq, "CQ Score ↑"),
            (Column::Fid, "FID ↓"),
            (Column::Acc, "Acc ↑"),
            (Column::Aqc, "Aqc ↑"),
        ];
        let mut out = String::from("| Method |");
        for (_, h) in cols {
            out.push_str(&format!(" {h} |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(cols.len()));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("| {} |", r.method));
            for (c, _) in cols {
                let cell = match r.get(c) {
                    None => "-".to_string(),
                    Some(v) => {
                        let is_best = self.best.get(&c).is_some_and(|ms| ms.contains(&r.method));
                        if is_best {
                            format!("**{v:.3}**")
                        } else {
                            format!("{v:.3}")
                        }
                    }
                };
                out.push_str(&format!(" {cell} |"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Deserialize)]
struct RawScoreLine {
    image_id: String,
    acc: f64,
    aqc: f64,
    cq: f64,
    #[serde(flatten)]
    external: ExternalMetrics,
}

fn method_from_scores(name: &str, path: &Path) -> Result<HashMap<String, MethodRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawScoreLine = serde_json::from_str(line)
            .map_err(|e| Error::json(format!("{}: line {}", path.display(), i + 1), e))?;
        let rec = MethodRecord {
            prompt_id: raw.image_id.clone(),
            score: AlignmentScore {
                acc: raw.acc,
                aqc: raw.aqc,
                cq: raw.cq,
            },
            external: raw.external,
        };
        if out.insert(raw.image_id.clone(), rec).is_some() {
            return Err(Error::invalid_input(format!(
                "method {name}: duplicate score for {}",
                raw.image_id
            )));
        }
    }
    Ok(out)
}

fn method_from_detections(
    dir: &Path,
    suite: &SuiteSpec,
    cfg: &PostprocessConfig,
    lex: &Lexicon,
) -> Result<Vec<MethodRecord>> {
    let missing: Vec<String> = suite
        .prompts
        .iter()
        .filter(|p| !dir.join(format!("{}.json", p.id)).is_file())
        .map(|p| p.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Mismatch {
            context: format!("{}: no detection file for", dir.display()),
            ids: missing,
        });
    }
    suite
        .prompts
        .par_iter()
        .map(|p| {
            let path = dir.join(format!("{}.json", p.id));
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let images = parse_detections(&text).map_err(|e| match e {
                Error::Json { context, source } => Error::Json {
                    context: format!("{}: {context}", path.display()),
                    source,
                },
                other => other,
            })?;
            let image = match images.len() {
                1 => images.into_iter().next().unwrap(),
                _ => images
                    .into_iter()
                    .find(|im| im.image_id == p.id)
                    .ok_or_else(|| {
                        Error::invalid_input(format!(
                            "{}: no entry for image {}",
                            path.display(),
                            p.id
                        ))
                    })?,
            };
            let score = score_pair(&image.boxes, &p.text, cfg, lex)?;
            Ok(MethodRecord {
                prompt_id: p.id.clone(),
                score,
                external: image.external,
            })
        })
        .collect()
}

/// Loads the named methods (or every method found) from `runs_dir`.
///
/// A method is either a directory of `<prompt id>.json` detection files,
/// scored here, or a `<method>.jsonl` file of score records.
pub fn load_runs(
    runs_dir: &Path,
    methods: Option<&[String]>,
    suite: &SuiteSpec,
    cfg: &PostprocessConfig,
    lex: &Lexicon,
) -> Result<Vec<MethodRun>> {
    if !runs_dir.is_dir() {
        return Err(Error::io(
            runs_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "runs directory not found"),
        ));
    }
    let names: Vec<String> = match methods {
        Some(m) => m.to_vec(),
        None => {
            let entries = std::fs::read_dir(runs_dir).map_err(|e| Error::io(runs_dir, e))?;
            let mut names = Vec::new();
            for entry in entries {
                let path = entry.map_err(|e| Error::io(runs_dir, e))?.path();
                let name = path.file_name().map(|n| n.to_string_lossy().into_owned());
                match name {
                    Some(n) if path.is_dir() => names.push(n),
                    Some(n) if n.ends_with(".jsonl") => {
                        names.push(n.trim_end_matches(".jsonl").to_string())
                    }
                    _ => {}
                }
            }
            names.sort();
            names.dedup();
            names
        }
    };

    let missing: Vec<String> = names
        .iter()
        .filter(|m| !runs_dir.join(m).is_dir() && !runs_dir.join(format!("{m}.jsonl")).is_file())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Mismatch {
            context: format!("{}: missing method", runs_dir.display()),
            ids: missing,
        });
    }
    if names.is_empty() {
        return Err(Error::Mismatch {
            context: format!("{}: no methods found", runs_dir.display()),
            ids: Vec::new(),
        });
    }

    let mut runs = Vec::with_capacity(names.len());
    for name in names {
        let dir = runs_dir.join(&name);
        let records = if dir.is_dir() {
            method_from_detections(&dir, suite, cfg, lex)?
        } else {
            let mut by_id = method_from_scores(&name, &runs_dir.join(format!("{name}.jsonl")))?;
            let mut records = Vec::with_capacity(suite.prompts.len());
            let mut absent = Vec::new();
            for p in &suite.prompts {
                match by_id.remove(&p.id) {
                    Some(r) => records.push(r),
                    None => absent.push(p.id.clone()),
                }
            }
            let mut extra: Vec<String> = by_id.into_keys().collect();
            extra.sort();
            if !absent.is_empty() || !extra.is_empty() {
                let ids = absent
                    .into_iter()
                    .map(|id| format!("missing {id}"))
                    .chain(extra.into_iter().map(|id| format!("unexpected {id}")))
                    .collect();
                return Err(Error::Mismatch {
                    context: format!("method {name} does not match the suite"),
                    ids,
                });
            }
            records
        };
        runs.push(MethodRun {
            method_name: name,
            records,
        });
    }
    Ok(runs)
}
