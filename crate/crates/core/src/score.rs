// SPDX-License-Identifier: Apache-2.0

//! Category/quantity matching score and the reward/loss terms built on it.
//!
//! * `acc`: mean over detected classes of the class mean box confidence,
//!   zeroed for classes the prompt does not mention.
//! * `aqc`: mean over detected classes of the mean `min/max` count ratio
//!   against every prompt class. The inner sum runs over all prompt classes
//!   with no label match, so a correct multi-class image scores below one.
//! * `cq`: harmonic mean of the two.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{
    filter_and_nms, summarize, DetectionBox, DetectionSummary, ExternalMetrics, PostprocessConfig,
};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::prompt::{parse_prompt, CategoryCountMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentScore {
    pub acc: f64,
    pub aqc: f64,
    pub cq: f64,
}

impl AlignmentScore {
    pub const ZERO: AlignmentScore = AlignmentScore {
        acc: 0.0,
        aqc: 0.0,
        cq: 0.0,
    };

    pub fn from_components(acc: f64, aqc: f64) -> Self {
        AlignmentScore {
            acc,
            aqc,
            cq: cq_score(acc, aqc),
        }
    }
}

/// Average category confidence. Zero when nothing was detected.
pub fn acc(det: &DetectionSummary, prompt: &CategoryCountMap) -> f64 {
    if det.is_empty() {
        return 0.0;
    }
    let sum: f64 = det
        .classes()
        .iter()
        .filter(|(label, _)| prompt.contains(label))
        .map(|(_, stats)| stats.mean_confidence())
        .sum();
    sum / det.n_classes() as f64
}

/// Average quantity confidence. Zero when either side is empty.
pub fn aqc(det: &DetectionSummary, prompt: &CategoryCountMap) -> f64 {
    if det.is_empty() || prompt.is_empty() {
        return 0.0;
    }
    let n_prompt = prompt.n_classes() as f64;
    let sum: f64 = det
        .classes()
        .values()
        .map(|stats| {
            let detected = stats.count;
            let inner: f64 = prompt
                .iter()
                .map(|(_, expected)| {
                    f64::from(detected.min(expected)) / f64::from(detected.max(expected))
                })
                .sum();
            inner / n_prompt
        })
        .sum();
    sum / det.n_classes() as f64
}

/// Harmonic mean of `acc` and `aqc`; zero when both are zero.
pub fn cq_score(acc: f64, aqc: f64) -> f64 {
    let denom = acc + aqc;
    if denom == 0.0 {
        return 0.0;
    }
    2.0 * acc * aqc / denom
}

pub fn score_summary(det: &DetectionSummary, prompt: &CategoryCountMap) -> AlignmentScore {
    AlignmentScore::from_components(acc(det, prompt), aqc(det, prompt))
}

/// Full pipeline: filter + NMS, summarize, parse the prompt, score.
pub fn score_pair(
    boxes: &[DetectionBox],
    prompt_text: &str,
    cfg: &PostprocessConfig,
    lex: &Lexicon,
) -> Result<AlignmentScore> {
    Ok(score_pair_detailed(boxes, prompt_text, cfg, lex)?.score)
}

/// Per-class view of a scored pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassDiagnostic {
    pub label: String,
    pub count: u32,
    pub total_confidence: f64,
    /// The label also appears in the prompt.
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetailedScore {
    pub score: AlignmentScore,
    pub prompt: CategoryCountMap,
    pub classes: Vec<ClassDiagnostic>,
}

pub fn score_pair_detailed(
    boxes: &[DetectionBox],
    prompt_text: &str,
    cfg: &PostprocessConfig,
    lex: &Lexicon,
) -> Result<DetailedScore> {
    cfg.validate()?;
    let summary = summarize(&filter_and_nms(boxes, cfg));
    let prompt = parse_prompt(prompt_text, lex)?.categories;
    let classes = summary
        .classes()
        .iter()
        .map(|(label, stats)| ClassDiagnostic {
            label: label.clone(),
            count: stats.count,
            total_confidence: stats.total_confidence,
            matched: prompt.contains(label),
        })
        .collect();
    Ok(DetailedScore {
        score: score_summary(&summary, &prompt),
        prompt,
        classes,
    })
}

/// One scoring job in a batch.
#[derive(Debug, Clone)]
pub struct ScoreJob<'a> {
    pub image_id: &'a str,
    pub prompt: &'a str,
    pub boxes: &'a [DetectionBox],
    pub external: ExternalMetrics,
}

/// Scored record, one per (image, prompt) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub image_id: String,
    pub prompt: String,
    pub acc: f64,
    pub aqc: f64,
    pub cq: f64,
    #[serde(flatten)]
    pub external: ExternalMetrics,
}

/// Scores jobs in parallel. Output order matches input order.
pub fn score_batch(
    jobs: &[ScoreJob<'_>],
    cfg: &PostprocessConfig,
    lex: &Lexicon,
) -> Result<Vec<ScoreRecord>> {
    jobs.par_iter()
        .map(|job| {
            let s = score_pair(job.boxes, job.prompt, cfg, lex)?;
            Ok(ScoreRecord {
                image_id: job.image_id.to_string(),
                prompt: job.prompt.to_string(),
                acc: s.acc,
                aqc: s.aqc,
                cq: s.cq,
                external: job.external,
            })
        })
        .collect()
}

/// The reward for a prompt/image pair is its CQ score.
pub fn reward(score: &AlignmentScore) -> f64 {
    score.cq
}

/// Maps a reward to a loss term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMapping {
    /// `-r`
    #[default]
    Negate,
    /// `1 - r`
    Complement,
}

impl LossMapping {
    pub fn apply(self, r: f64) -> f64 {
        match self {
            LossMapping::Negate => -r,
            LossMapping::Complement => 1.0 - r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Weight of the reward loss in the combined objective.
    pub lambda: f64,
    pub phi: LossMapping,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            lambda: 1.0,
            phi: LossMapping::Negate,
        }
    }
}

impl RewardConfig {
    pub fn new(lambda: f64, phi: LossMapping) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::invalid_config(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        Ok(RewardConfig { lambda, phi })
    }
}

/// `phi(r)`. The weight is applied by [`combined_loss`].
pub fn reward_loss(r: f64, cfg: &RewardConfig) -> f64 {
    cfg.phi.apply(r)
}

/// `lambda * phi(r)`, the weighted reward term of a training step.
pub fn weighted_reward_loss(r: f64, cfg: &RewardConfig) -> f64 {
    cfg.lambda * reward_loss(r, cfg)
}

/// `l_pretrain + lambda * l_reward`.
pub fn combined_loss(l_pretrain: f64, l_reward: f64, cfg: &RewardConfig) -> Result<f64> {
    if !l_pretrain.is_finite() || !l_reward.is_finite() {
        return Err(Error::invalid_input(format!(
            "losses must be finite, got pretrain={l_pretrain} reward={l_reward}"
        )));
    }
    if !cfg.lambda.is_finite() || cfg.lambda < 0.0 {
        return Err(Error::invalid_config(format!(
            "lambda must be finite and >= 0, got {}",
            cfg.lambda
        )));
    }
    Ok(l_pretrain + cfg.lambda * l_reward)
}
