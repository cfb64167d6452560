// SPDX-License-Identifier: Apache-2.0

//! Compositional text-image alignment scoring.
//!
//! Detector output for a generated image is filtered and deduplicated,
//! summarized per class, and compared with the category/quantity pairs
//! parsed from the prompt. The result is a per-pair score in `[0, 1]`
//! that can be used directly or as a reward signal during fine-tuning.

pub mod bench;
pub mod dataset;
pub mod detect;
pub mod error;
pub mod lexicon;
pub mod prompt;
pub mod score;

pub use bench::{aggregate, generate_suite, MethodRecord, MethodRun, SuiteKind, SuiteSpec, Table};
pub use dataset::{filter_candidates, generate_prompts, GenConfig, PromptSpec};
pub use detect::{
    filter_and_nms, iou, summarize, BBox, DetectionBox, DetectionSummary, PostprocessConfig,
};
pub use error::{Error, Result};
pub use lexicon::Lexicon;
pub use prompt::{parse_prompt, CategoryCountMap, ParsedPrompt};
pub use score::{
    acc, aqc, combined_loss, cq_score, reward, reward_loss, score_pair, AlignmentScore,
    LossMapping, RewardConfig,
};
