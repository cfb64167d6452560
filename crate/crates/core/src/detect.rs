// SPDX-License-Identifier: Apache-2.0

//! Detector output ingestion: confidence filtering, class-wise NMS and the
//! per-class count / summed-confidence summary consumed by the scorer.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in corner format, image-pixel units.
///
/// Only constructible with positive width and height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid_input(format!(
                "box coordinates must be finite, got ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(Error::invalid_input(format!(
                "degenerate box ({x1}, {y1}, {x2}, {y2}): need x1 < x2 and y1 < y2"
            )));
        }
        Ok(BBox { x1, y1, x2, y2 })
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.coords()
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

/// Intersection over union. Symmetric, 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// One raw detection. Labels are trimmed and lowercased on construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionBox {
    pub label: String,
    pub confidence: f64,
    #[serde(rename = "bbox")]
    pub bbox: BBox,
}

impl DetectionBox {
    pub fn new(label: impl AsRef<str>, confidence: f64, bbox: BBox) -> Result<Self> {
        let label = label.as_ref().trim().to_lowercase();
        if label.is_empty() {
            return Err(Error::invalid_input("empty detection label"));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::invalid_input(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(DetectionBox {
            label,
            confidence,
            bbox,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostprocessConfig {
    /// Boxes with confidence strictly below this are discarded.
    pub confidence_cutoff: f64,
    /// Same-class boxes overlapping a kept box by strictly more than this are suppressed.
    pub iou_cutoff: f64,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            confidence_cutoff: 0.8,
            iou_cutoff: 0.5,
        }
    }
}

impl PostprocessConfig {
    pub fn new(confidence_cutoff: f64, iou_cutoff: f64) -> Result<Self> {
        let cfg = PostprocessConfig {
            confidence_cutoff,
            iou_cutoff,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("confidence_cutoff", self.confidence_cutoff),
            ("iou_cutoff", self.iou_cutoff),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid_config(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Confidence cutoff followed by greedy class-wise NMS.
///
/// Output is in descending confidence order, ties kept in input order.
pub fn filter_and_nms(boxes: &[DetectionBox], cfg: &PostprocessConfig) -> Vec<DetectionBox> {
    let mut order: Vec<usize> = (0..boxes.len())
        .filter(|&i| boxes[i].confidence >= cfg.confidence_cutoff)
        .collect();
    // stable sort keeps input order among equal confidences
    order.sort_by(|&a, &b| boxes[b].confidence.total_cmp(&boxes[a].confidence));

    let mut kept: Vec<&DetectionBox> = Vec::with_capacity(order.len());
    for i in order {
        let cand = &boxes[i];
        let suppressed = kept
            .iter()
            .any(|k| k.label == cand.label && iou(&k.bbox, &cand.bbox) > cfg.iou_cutoff);
        if !suppressed {
            kept.push(cand);
        }
    }
    kept.into_iter().cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub count: u32,
    pub total_confidence: f64,
}

impl ClassStats {
    pub fn mean_confidence(&self) -> f64 {
        self.total_confidence / f64::from(self.count)
    }
}

/// Per-class box count and summed confidence, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    classes: IndexMap<String, ClassStats>,
}

impl DetectionSummary {
    /// Builds a summary directly from `(label, count, total_confidence)` rows.
    pub fn from_counts<I, S>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u32, f64)>,
        S: Into<String>,
    {
        let mut classes = IndexMap::new();
        for (label, count, total) in rows {
            let label = label.into();
            if count == 0 {
                return Err(Error::invalid_input(format!(
                    "class {label}: count must be >= 1"
                )));
            }
            if !total.is_finite() || total < 0.0 || total > f64::from(count) {
                return Err(Error::invalid_input(format!(
                    "class {label}: total confidence {total} outside [0, {count}]"
                )));
            }
            if classes
                .insert(
                    label.clone(),
                    ClassStats {
                        count,
                        total_confidence: total,
                    },
                )
                .is_some()
            {
                return Err(Error::invalid_input(format!("duplicate class {label}")));
            }
        }
        Ok(DetectionSummary { classes })
    }

    pub fn classes(&self) -> &IndexMap<String, ClassStats> {
        &self.classes
    }

    pub fn get(&self, label: &str) -> Option<&ClassStats> {
        self.classes.get(label)
    }

    /// Number of distinct detected labels.
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn total_boxes(&self) -> u32 {
        self.classes.values().map(|c| c.count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Counts boxes and sums confidences per label. Does not filter.
pub fn summarize(boxes: &[DetectionBox]) -> DetectionSummary {
    let mut classes: IndexMap<String, ClassStats> = IndexMap::new();
    for b in boxes {
        let entry = classes.entry(b.label.clone()).or_insert(ClassStats {
            count: 0,
            total_confidence: 0.0,
        });
        entry.count += 1;
        entry.total_confidence += b.confidence;
    }
    DetectionSummary { classes }
}

/// Detections for one image, as read from a detection input file.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDetections {
    pub image_id: String,
    pub boxes: Vec<DetectionBox>,
    /// Externally computed metrics carried alongside the detections.
    pub external: ExternalMetrics,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExternalMetrics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blip: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fid: Option<f64>,
}

#[derive(Deserialize)]
struct RawImage {
    image_id: String,
    #[serde(default)]
    boxes: Vec<serde_json::Value>,
    #[serde(flatten)]
    external: ExternalMetrics,
}

#[derive(Deserialize)]
struct RawBox {
    label: String,
    confidence: f64,
    bbox: Vec<f64>,
}

fn image_from_value(value: serde_json::Value, position: usize) -> Result<ImageDetections> {
    let raw: RawImage = serde_json::from_value(value)
        .map_err(|e| Error::json(format!("detection record {position}"), e))?;
    let mut boxes = Vec::with_capacity(raw.boxes.len());
    for (index, v) in raw.boxes.into_iter().enumerate() {
        let malformed = |reason: String| Error::MalformedBox {
            image_id: raw.image_id.clone(),
            index,
            reason,
        };
        let rb: RawBox = serde_json::from_value(v).map_err(|e| malformed(e.to_string()))?;
        let coords: [f64; 4] = rb
            .bbox
            .as_slice()
            .try_into()
            .map_err(|_| malformed(format!("bbox needs 4 numbers, got {}", rb.bbox.len())))?;
        let bbox = BBox::try_from(coords).map_err(|e| malformed(e.to_string()))?;
        let det = DetectionBox::new(&rb.label, rb.confidence, bbox)
            .map_err(|e| malformed(e.to_string()))?;
        boxes.push(det);
    }
    Ok(ImageDetections {
        image_id: raw.image_id,
        boxes,
        external: raw.external,
    })
}

/// Parses a single detection object, a JSON array of them, or one object
/// per line.
pub fn parse_detections(text: &str) -> Result<Vec<ImageDetections>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let value: serde_json::Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(_) if text.trim().lines().count() > 1 => {
            return text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    let v = serde_json::from_str(l)
                        .map_err(|e| Error::json(format!("line {}", i + 1), e))?;
                    image_from_value(v, i)
                })
                .collect();
        }
        Err(e) => return Err(Error::json("detection file", e)),
    };
    match value {
        serde_json::Value::Array(items) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| image_from_value(v, i))
            .collect(),
        obj @ serde_json::Value::Object(_) => Ok(vec![image_from_value(obj, 0)?]),
        _ => Err(Error::invalid_input(
            "detection file must hold an object or an array of objects",
        )),
    }
}

pub fn read_detections(path: &Path) -> Result<Vec<ImageDetections>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text).map_err(|e| match e {
        Error::Json { context, source } => Error::Json {
            context: format!("{}: {context}", path.display()),
            source,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn det(label: &str, c: f64, b: BBox) -> DetectionBox {
        DetectionBox::new(label, c, b).unwrap()
    }

    #[test]
    fn iou_identical_disjoint_and_partial() {
        assert_eq!(iou(&bx(0., 0., 10., 10.), &bx(0., 0., 10., 10.)), 1.0);
        assert_eq!(iou(&bx(0., 0., 1., 1.), &bx(5., 5., 6., 6.)), 0.0);
        let v = iou(&bx(0., 0., 2., 2.), &bx(1., 1., 3., 3.));
        assert!((v - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn touching_edges_have_zero_overlap() {
        assert_eq!(iou(&bx(0., 0., 1., 1.), &bx(1., 0., 2., 1.)), 0.0);
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(BBox::new(0., 0., 0., 5.).is_err());
        assert!(BBox::new(0., 5., 3., 5.).is_err());
        assert!(BBox::new(3., 0., 1., 5.).is_err());
        assert!(BBox::new(0., 0., f64::NAN, 5.).is_err());
    }

    #[test]
    fn confidence_out_of_range_rejected() {
        assert!(DetectionBox::new("cat", 1.2, bx(0., 0., 1., 1.)).is_err());
        assert!(DetectionBox::new("cat", -0.1, bx(0., 0., 1., 1.)).is_err());
        assert!(DetectionBox::new("  ", 0.5, bx(0., 0., 1., 1.)).is_err());
    }

    #[test]
    fn overlapping_same_class_suppressed() {
        let boxes = vec![
            det("cat", 0.95, bx(0., 0., 10., 10.)),
            det("cat", 0.90, bx(1., 1., 10., 10.)),
        ];
        let out = filter_and_nms(&boxes, &PostprocessConfig::default());
        assert_eq!(out, vec![boxes[0].clone()]);
    }

    #[test]
    fn nms_is_class_wise() {
        let a = bx(0., 0., 10., 10.);
        let boxes = vec![det("cat", 0.95, a), det("dog", 0.90, a)];
        let out = filter_and_nms(&boxes, &PostprocessConfig::default());
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn cutoffs_are_strict() {
        let cfg = PostprocessConfig::default();
        assert!(filter_and_nms(&[det("cat", 0.79, bx(0., 0., 1., 1.))], &cfg).is_empty());
        assert_eq!(
            filter_and_nms(&[det("cat", 0.8, bx(0., 0., 1., 1.))], &cfg).len(),
            1
        );

        // IoU of exactly 0.5: (0,0,2,1) vs (0,0,1,1) -> 1 / 2
        let boxes = vec![
            det("cat", 0.9, bx(0., 0., 2., 1.)),
            det("cat", 0.85, bx(0., 0., 1., 1.)),
        ];
        assert_eq!(iou(&boxes[0].bbox, &boxes[1].bbox), 0.5);
        assert_eq!(filter_and_nms(&boxes, &cfg).len(), 2);
    }

    #[test]
    fn ties_keep_input_order() {
        let boxes = vec![
            det("cat", 0.9, bx(0., 0., 1., 1.)),
            det("dog", 0.95, bx(0., 0., 1., 1.)),
            det("bird", 0.9, bx(5., 5., 6., 6.)),
        ];
        let out = filter_and_nms(&boxes, &PostprocessConfig::default());
        let labels: Vec<_> = out.iter().map(|b| b.label.as_str()).collect();
        assert_eq!(labels, ["dog", "cat", "bird"]);
    }

    #[test]
    fn summarize_person_skis() {
        let b = bx(0., 0., 1., 1.);
        let boxes = vec![
            det("person", 0.99, b),
            det("person", 0.991, b),
            det("skis", 0.903, b),
            det("person", 0.98, b),
            det("person", 0.96, b),
        ];
        let s = summarize(&boxes);
        assert_eq!(s.n_classes(), 2);
        let labels: Vec<_> = s.classes().keys().cloned().collect();
        assert_eq!(labels, ["person", "skis"]);
        let p = s.get("person").unwrap();
        assert_eq!(p.count, 4);
        assert!((p.total_confidence - 3.921).abs() < 1e-12);
        let k = s.get("skis").unwrap();
        assert_eq!(k.count, 1);
        assert!((k.total_confidence - 0.903).abs() < 1e-12);
    }

    #[test]
    fn summarize_trivial_cases() {
        assert_eq!(summarize(&[]).n_classes(), 0);
        let s = summarize(&[det("dog", 0.9, bx(0., 0., 1., 1.))]);
        assert_eq!(s.n_classes(), 1);
        assert_eq!(s.get("dog").unwrap().count, 1);
        assert_eq!(s.get("dog").unwrap().total_confidence, 0.9);
    }

    #[test]
    fn config_range_checked() {
        assert!(PostprocessConfig::new(1.1, 0.5).is_err());
        assert!(PostprocessConfig::new(0.8, -0.5).is_err());
        assert!(PostprocessConfig::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn from_counts_validates() {
        assert!(DetectionSummary::from_counts([("dog", 0, 0.0)]).is_err());
        assert!(DetectionSummary::from_counts([("dog", 2, 2.5)]).is_err());
        assert!(DetectionSummary::from_counts([("dog", 1, 0.5), ("dog", 1, 0.5)]).is_err());
    }

    #[test]
    fn parse_batch_and_single() {
        let single = r#"{"image_id": "a", "boxes": [{"label": "Dog", "confidence": 0.9, "bbox": [0, 0, 5, 5], "extra": 1}], "note": "x"}"#;
        let out = parse_detections(single).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].boxes[0].label, "dog");

        let batch =
            r#"[{"image_id": "a", "boxes": []}, {"image_id": "b", "boxes": [], "clip": 21.5}]"#;
        let out = parse_detections(batch).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].external.clip, Some(21.5));
    }

    #[test]
    fn malformed_box_reports_image_and_index() {
        let text = r#"{"image_id": "img7", "boxes": [
            {"label": "dog", "confidence": 0.9, "bbox": [0, 0, 5, 5]},
            {"label": "dog", "confidence": 0.9, "bbox": [5, 5, 5, 9]}
        ]}"#;
        match parse_detections(text) {
            Err(Error::MalformedBox {
                image_id, index, ..
            }) => {
                assert_eq!(image_id, "img7");
                assert_eq!(index, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = r#"{"image_id": "img8", "boxes": [{"label": "dog", "confidence": "high", "bbox": [0, 0, 1, 1]}]}"#;
        assert!(matches!(
            parse_detections(text),
            Err(Error::MalformedBox { index: 0, .. })
        ));
        let text = r#"{"image_id": "img9", "boxes": [{"label": "dog", "confidence": 0.9, "bbox": [0, 0, 1]}]}"#;
        assert!(matches!(
            parse_detections(text),
            Err(Error::MalformedBox { .. })
        ));
    }

    #[test]
    fn non_json_is_json_error() {
        assert!(matches!(
            parse_detections("{not json"),
            Err(Error::Json { .. })
        ));
        assert!(matches!(
            parse_detections("42"),
            Err(Error::InvalidInput(_))
        ));
    }
}
