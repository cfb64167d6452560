// SPDX-License-Identifier: Apache-2.0

//! Helpers shared by the CLI test targets.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn cqscore<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_cqscore"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// One detection record with `(label, confidence)` boxes laid out side by
/// side so that none overlap.
pub fn detection_json(image_id: &str, boxes: &[(&str, f64)]) -> serde_json::Value {
    let boxes: Vec<serde_json::Value> = boxes
        .iter()
        .enumerate()
        .map(|(k, (label, conf))| {
            let x = 20.0 * k as f64;
            serde_json::json!({
                "label": label,
                "confidence": conf,
                "bbox": [x, 0.0, x + 10.0, 10.0],
            })
        })
        .collect();
    serde_json::json!({ "image_id": image_id, "boxes": boxes })
}

/// Scores written out longhand: every detected class against every prompt
/// class, in plain nested loops.
pub fn naive_score(det: &[(String, u32, f64)], prompt: &[(String, u32)]) -> (f64, f64, f64) {
    if det.is_empty() || prompt.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let mut acc = 0.0;
    let mut aqc = 0.0;
    for (label, count, total) in det {
        let mut hit = false;
        for (pl, _) in prompt {
            hit |= pl == label;
        }
        if hit {
            acc += total / *count as f64;
        }
        let mut inner = 0.0;
        for (_, n) in prompt {
            let (c, n) = (*count as f64, *n as f64);
            inner += if c < n { c / n } else { n / c };
        }
        aqc += inner / prompt.len() as f64;
    }
    acc /= det.len() as f64;
    aqc /= det.len() as f64;
    let cq = if acc + aqc == 0.0 {
        0.0
    } else {
        2.0 * acc * aqc / (acc + aqc)
    };
    (acc, aqc, cq)
}

pub fn ref_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Indices kept by greedy class-wise suppression, in output order.
pub fn ref_nms(boxes: &[(usize, f64, [f64; 4])], conf_cut: f64, iou_cut: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len())
        .filter(|&i| boxes[i].1 >= conf_cut)
        .collect();
    // insertion sort keeps equal confidences in input order
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && boxes[order[j - 1]].1 < boxes[order[j]].1 {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut keep: Vec<usize> = Vec::new();
    for &i in &order {
        let clash = keep
            .iter()
            .any(|&k| boxes[k].0 == boxes[i].0 && ref_iou(boxes[k].2, boxes[i].2) > iou_cut);
        if !clash {
            keep.push(i);
        }
    }
    keep
}
