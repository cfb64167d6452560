// SPDX-License-Identifier: Apache-2.0

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use cqscore::bench::{self, CompositionTag, SuiteKind, SuiteOptions};
use cqscore::dataset::{self, GenConfig};
use cqscore::detect::{filter_and_nms, read_detections, summarize, PostprocessConfig};
use cqscore::prompt::{parse_prompt, ParseWarning};
use cqscore::score::{score_batch, weighted_reward_loss, LossMapping, RewardConfig, ScoreJob};
use cqscore::{Error, Lexicon, Result};

/// Compositional text-image alignment scoring.
///
/// Exit codes: 0 on success, 2 for unreadable or malformed input and bad
/// flags, 3 when two inputs disagree (orphan ids, missing methods).
#[derive(Debug, Parser)]
#[command(name = "cqscore", version)]
pub struct Cli {
    /// Lexicon JSON replacing the shipped one
    #[arg(long, global = true, value_name = "PATH")]
    pub lexicon: Option<PathBuf>,

    /// Write output here instead of stdout
    #[arg(long, short, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct DetectArgs {
    /// Boxes with confidence below this are dropped
    #[arg(long, default_value_t = 0.8)]
    pub conf_threshold: f64,
    /// Same-class boxes overlapping more than this are suppressed
    #[arg(long, default_value_t = 0.5)]
    pub iou_threshold: f64,
}

impl DetectArgs {
    fn config(&self) -> Result<PostprocessConfig> {
        PostprocessConfig::new(self.conf_threshold, self.iou_threshold)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScoreFormat {
    Json,
    Tsv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TableFormat {
    Json,
    Tsv,
    Markdown,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Phi {
    Negate,
    Complement,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kind {
    Type1,
    Type2,
    Type3,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Tag {
    Normal,
    Awkward,
    Unlikely,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse prompts, one per line, into category/count maps
    Parse {
        /// Plain-text prompts, or JSON lines with "id" and "text"
        prompts: PathBuf,
    },
    /// Filter and deduplicate detections, then summarize per class
    Postprocess {
        /// Detection JSON (object, array, or one object per line)
        detections: PathBuf,
        #[command(flatten)]
        detect: DetectArgs,
    },
    /// Score detections against their prompts
    Score {
        /// Detection JSON keyed by image_id
        detections: PathBuf,
        /// JSON lines with "id" and "text"; a suite header line is skipped
        prompts: PathBuf,
        #[command(flatten)]
        detect: DetectArgs,
        #[arg(long, value_enum, default_value_t = ScoreFormat::Json)]
        format: ScoreFormat,
        /// Add a reward_loss column (lambda * phi(cq))
        #[arg(long)]
        emit_loss: bool,
        /// Weight on the reward loss
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Mapping from reward to loss
        #[arg(long, value_enum, default_value_t = Phi::Negate)]
        phi: Phi,
    },
    /// Generate the training prompt set
    Generate {
        /// Generator config JSON; the bundled default if absent
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        /// RNG seed, overriding the config (default 0)
        #[arg(long)]
        seed: Option<u64>,
        /// Number of prompts, overriding the config
        #[arg(long)]
        total: Option<usize>,
    },
    /// Generate a composition benchmark suite
    Suite {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Comma-separated categories, in order of introduction
        #[arg(long, value_delimiter = ',', required = true)]
        categories: Vec<String>,
        /// Number of steps
        #[arg(long)]
        max_n: usize,
        /// RNG seed for random quantities
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Tag::Normal)]
        tag: Tag,
        /// Trailing scene phrase; empty for none
        #[arg(long, default_value = "on the prairie")]
        scene: String,
        /// Quantities drawn uniformly for type2
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        quantities: Vec<u32>,
    },
    /// Keep candidate ids whose score is strictly above a threshold
    Filter {
        /// CSV of id,score
        scores: PathBuf,
        #[arg(long)]
        threshold: f64,
    },
    /// Aggregate per-method scores over a suite
    Bench {
        /// Suite JSON lines
        suite: PathBuf,
        /// One subdirectory of <prompt id>.json detections, or one
        /// <method>.jsonl score file, per method
        runs: PathBuf,
        /// Comma-separated method names; all found in RUNS if absent
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[command(flatten)]
        detect: DetectArgs,
        #[arg(long, value_enum, default_value_t = TableFormat::Tsv)]
        format: TableFormat,
    },
}

pub fn exit_code(e: &Error) -> u8 {
    if e.is_consistency() {
        3
    } else {
        2
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn out_err(e: io::Error) -> Error {
    io_err(Path::new("<output>"), e)
}

pub fn run(cli: Cli) -> Result<()> {
    let lexicon = match &cli.lexicon {
        Some(p) => Lexicon::load(p)?,
        None => Lexicon::default(),
    };
    let mut out = open_output(cli.out.as_deref())?;
    match cli.command {
        Command::Parse { prompts } => run_parse(&prompts, &lexicon, &mut out)?,
        Command::Postprocess { detections, detect } => {
            run_postprocess(&detections, &detect.config()?, &mut out)?
        }
        Command::Score {
            detections,
            prompts,
            detect,
            format,
            emit_loss,
            lambda,
            phi,
        } => {
            let phi = match phi {
                Phi::Negate => LossMapping::Negate,
                Phi::Complement => LossMapping::Complement,
            };
            let reward = emit_loss
                .then(|| RewardConfig::new(lambda, phi))
                .transpose()?;
            run_score(
                &detections,
                &prompts,
                &detect.config()?,
                &lexicon,
                format,
                reward,
                &mut out,
            )?
        }
        Command::Generate {
            config,
            seed,
            total,
        } => {
            let mut cfg = match config {
                Some(p) => GenConfig::load(&p)?,
                None => GenConfig::default(),
            };
            if let Some(s) = seed {
                cfg.rng_seed = s;
            }
            if let Some(t) = total {
                cfg.total = t;
            }
            let prompts = dataset::generate_prompts(&cfg, &lexicon)?;
            dataset::write_jsonl(&prompts, &mut out)?;
        }
        Command::Suite {
            kind,
            categories,
            max_n,
            seed,
            tag,
            scene,
            quantities,
        } => {
            let kind = match kind {
                Kind::Type1 => SuiteKind::FixedCategoryIncrementalQuantity,
                Kind::Type2 => SuiteKind::RandomQuantityIncrementalCategory,
                Kind::Type3 => SuiteKind::IncrementalQuantityIncrementalCategory,
            };
            let opts = SuiteOptions {
                composition_tag: match tag {
                    Tag::Normal => CompositionTag::Normal,
                    Tag::Awkward => CompositionTag::Awkward,
                    Tag::Unlikely => CompositionTag::Unlikely,
                },
                scene,
                quantity_set: quantities,
            };
            let suite = bench::generate_suite(kind, &categories, max_n, seed, &opts, &lexicon)?;
            bench::write_suite(&suite, &mut out)?;
        }
        Command::Filter { scores, threshold } => {
            let rows = dataset::read_candidate_scores(&scores)?;
            for id in dataset::filter_candidates(&rows, threshold)? {
                writeln!(out, "{id}").map_err(out_err)?;
            }
        }
        Command::Bench {
            suite,
            runs,
            methods,
            detect,
            format,
        } => {
            let cfg = detect.config()?;
            let suite = bench::read_suite(&suite)?;
            let runs = bench::load_runs(&runs, methods.as_deref(), &suite, &cfg, &lexicon)?;
            let table = bench::aggregate(&runs)?;
            let text = match format {
                TableFormat::Tsv => table.to_tsv(),
                TableFormat::Json => table.to_json() + "\n",
                TableFormat::Markdown => table.to_markdown(),
            };
            out.write_all(text.as_bytes()).map_err(out_err)?;
        }
    }
    out.flush().map_err(out_err)
}

fn run_parse(path: &Path, lex: &Lexicon, out: &mut dyn Write) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let prompt = if line.starts_with('{') {
            let value: serde_json::Value = match serde_json::from_str(line) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("warning: line {}: {e}", i + 1);
                    writeln!(out, "{{}}").map_err(out_err)?;
                    continue;
                }
            };
            if value.get("suite").is_some() {
                continue;
            }
            match value
                .get("text")
                .or_else(|| value.get("prompt"))
                .and_then(|t| t.as_str())
            {
                Some(t) => t.to_string(),
                None => {
                    eprintln!("warning: line {}: no \"text\" field", i + 1);
                    writeln!(out, "{{}}").map_err(out_err)?;
                    continue;
                }
            }
        } else {
            line.to_string()
        };
        let map = match parse_prompt(&prompt, lex) {
            Ok(parsed) => {
                if parsed.warnings.contains(&ParseWarning::NoCategory) {
                    eprintln!("warning: line {}: no category found in {prompt:?}", i + 1);
                }
                parsed.categories
            }
            Err(e) => {
                eprintln!("warning: line {}: {e}", i + 1);
                Default::default()
            }
        };
        let json = serde_json::to_string(&map).expect("map serializes");
        writeln!(out, "{json}").map_err(out_err)?;
    }
    Ok(())
}

fn run_postprocess(path: &Path, cfg: &PostprocessConfig, out: &mut dyn Write) -> Result<()> {
    for image in read_detections(path)? {
        let kept = filter_and_nms(&image.boxes, cfg);
        let summary = summarize(&kept);
        let line = serde_json::json!({
            "image_id": image.image_id,
            "boxes": kept,
            "summary": summary,
        });
        writeln!(out, "{line}").map_err(out_err)?;
    }
    Ok(())
}

fn run_score(
    det_path: &Path,
    prompt_path: &Path,
    cfg: &PostprocessConfig,
    lex: &Lexicon,
    format: ScoreFormat,
    reward: Option<RewardConfig>,
    out: &mut dyn Write,
) -> Result<()> {
    let images = read_detections(det_path)?;
    let prompts = bench::read_prompt_records(prompt_path)?;

    let mut by_id = HashMap::with_capacity(images.len());
    for image in &images {
        if by_id.insert(image.image_id.as_str(), image).is_some() {
            return Err(Error::invalid_input(format!(
                "{}: duplicate image_id {}",
                det_path.display(),
                image.image_id
            )));
        }
    }
    let mut prompt_ids = HashSet::with_capacity(prompts.len());
    for p in &prompts {
        if !prompt_ids.insert(p.id.as_str()) {
            return Err(Error::invalid_input(format!(
                "{}: duplicate id {}",
                prompt_path.display(),
                p.id
            )));
        }
    }
    let mut orphans: Vec<String> = prompts
        .iter()
        .filter(|p| !by_id.contains_key(p.id.as_str()))
        .map(|p| format!("prompt {} has no detections", p.id))
        .collect();
    orphans.extend(
        images
            .iter()
            .filter(|im| !prompt_ids.contains(im.image_id.as_str()))
            .map(|im| format!("detections {} have no prompt", im.image_id)),
    );
    if !orphans.is_empty() {
        return Err(Error::Mismatch {
            context: "detection and prompt ids differ".to_string(),
            ids: orphans,
        });
    }

    let jobs: Vec<ScoreJob<'_>> = prompts
        .iter()
        .map(|p| {
            let image = by_id[p.id.as_str()];
            ScoreJob {
                image_id: &p.id,
                prompt: &p.text,
                boxes: &image.boxes,
                external: image.external,
            }
        })
        .collect();
    let records = score_batch(&jobs, cfg, lex)?;

    if let ScoreFormat::Tsv = format {
        let loss_head = if reward.is_some() {
            "\treward_loss"
        } else {
            ""
        };
        writeln!(out, "image_id\tacc\taqc\tcq{loss_head}").map_err(out_err)?;
    }
    for r in &records {
        let loss = reward.map(|rc| weighted_reward_loss(r.cq, &rc));
        match format {
            ScoreFormat::Json => {
                let mut value = serde_json::to_value(r).expect("record serializes");
                if let Some(l) = loss {
                    value["reward_loss"] = serde_json::json!(l);
                }
                writeln!(out, "{value}").map_err(out_err)?;
            }
            ScoreFormat::Tsv => {
                let loss = loss.map(|l| format!("\t{l}")).unwrap_or_default();
                writeln!(out, "{}\t{}\t{}\t{}{loss}", r.image_id, r.acc, r.aqc, r.cq)
                    .map_err(out_err)?;
            }
        }
    }
    Ok(())
}
