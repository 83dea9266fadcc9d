//! Detection selection, per-class NMS, cross-slice aggregation, and
//! center-distance mAP evaluation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slicing::Box3D;

/// A detection with its slice and frame provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: Box3D,
    pub slice_index: u32,
    pub frame_id: u64,
}

/// An ordered collection of detections. Input order is preserved; it is the
/// tie-break for equal scores everywhere.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    dets: Vec<Detection>,
}

impl DetectionSet {
    pub fn new() -> Self {
        DetectionSet { dets: Vec::new() }
    }

    pub fn from_vec(dets: Vec<Detection>) -> Self {
        DetectionSet { dets }
    }

    pub fn push(&mut self, det: Detection) {
        self.dets.push(det);
    }

    pub fn len(&self) -> usize {
        self.dets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dets.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Detection> {
        self.dets.iter()
    }

    pub fn as_slice(&self) -> &[Detection] {
        &self.dets
    }

    /// Indices sorted by descending score, stable for ties.
    pub fn order_by_score_desc(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.dets.len()).collect();
        idx.sort_by(|&a, &b| {
            self.dets[b]
                .bbox
                .score
                .partial_cmp(&self.dets[a].bbox.score)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        idx
    }
}

impl FromIterator<Detection> for DetectionSet {
    fn from_iter<T: IntoIterator<Item = Detection>>(iter: T) -> Self {
        DetectionSet { dets: iter.into_iter().collect() }
    }
}

fn bev_distance(a: &Box3D, b: &Box3D) -> f64 {
    let (ax, ay) = a.bev_center();
    let (bx, by) = b.bev_center();
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
}

/// Keeps the `k` highest-score detections, ties broken by input order.
pub fn top_k(dets: &DetectionSet, k: usize) -> DetectionSet {
    let order = dets.order_by_score_desc();
    order.into_iter().take(k).map(|i| dets.as_slice()[i].clone()).collect()
}

/// Per-class center-distance suppression radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmsConfig {
    pub default_radius_m: f64,
    pub per_class_radius_m: BTreeMap<u32, f64>,
}

impl Default for NmsConfig {
    fn default() -> Self {
        NmsConfig { default_radius_m: 0.5, per_class_radius_m: BTreeMap::new() }
    }
}

impl NmsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.default_radius_m <= 0.0
            || self.per_class_radius_m.values().any(|&r| r <= 0.0)
        {
            return Err(Error::config("NMS radii must be positive".to_string()));
        }
        Ok(())
    }

    pub fn radius_for(&self, class_id: u32) -> f64 {
        self.per_class_radius_m.get(&class_id).copied().unwrap_or(self.default_radius_m)
    }
}

/// Greedy per-class NMS by descending score: a detection is suppressed iff
/// its BEV center lies strictly within the class radius of an already-kept
/// detection of the same class.
pub fn nms_per_class(dets: &DetectionSet, cfg: &NmsConfig) -> DetectionSet {
    let order = dets.order_by_score_desc();
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let candidate = &dets.as_slice()[i];
        let radius = cfg.radius_for(candidate.bbox.class_id);
        let suppressed = kept.iter().any(|&j| {
            let keeper = &dets.as_slice()[j];
            keeper.bbox.class_id == candidate.bbox.class_id
                && bev_distance(&keeper.bbox, &candidate.bbox) < radius
        });
        if !suppressed {
            kept.push(i);
        }
    }
    kept.into_iter().map(|i| dets.as_slice()[i].clone()).collect()
}

/// Pools per-slice detections and runs per-class NMS over the union to drop
/// duplicates of objects fragmented between slices. Survivors keep their
/// slice provenance.
pub fn aggregate_slices(per_slice: &[DetectionSet], cfg: &NmsConfig) -> DetectionSet {
    let pooled: DetectionSet =
        per_slice.iter().flat_map(|s| s.iter().cloned()).collect();
    nms_per_class(&pooled, cfg)
}

/// Evaluation settings: center-distance thresholds and the class list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub thresholds_m: Vec<f64>,
    pub classes: Vec<u32>,
    pub max_detections: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { thresholds_m: vec![0.5, 1.0, 2.0, 4.0], classes: vec![0, 1, 2], max_detections: 500 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds_m.is_empty() {
            return Err(Error::config("need at least one distance threshold".to_string()));
        }
        if !self.thresholds_m.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config("distance thresholds must be strictly increasing".to_string()));
        }
        if self.classes.is_empty() {
            return Err(Error::config("need at least one class".to_string()));
        }
        Ok(())
    }
}

/// AP of one class at one distance threshold. `ap` is absent when the class
/// has no ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ApEntry {
    pub class_id: u32,
    pub threshold_m: f64,
    pub ap: Option<f64>,
    pub n_gt: usize,
    pub n_det: usize,
}

/// Per-class, per-threshold APs plus the overall mean.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub entries: Vec<ApEntry>,
    /// Mean over entries with defined AP; absent when nothing was evaluable.
    pub mean_ap: Option<f64>,
}

/// Number of recall samples of the interpolated AP integral.
pub const AP_RECALL_SAMPLES: usize = 101;

/// Interpolated AP from ranked true/false positive flags.
fn average_precision(flags: &[bool], n_gt: usize) -> f64 {
    debug_assert!(n_gt > 0);
    let mut curve: Vec<(f64, f64)> = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (rank, &is_tp) in flags.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        let recall = tp as f64 / n_gt as f64;
        let precision = tp as f64 / (rank + 1) as f64;
        curve.push((recall, precision));
    }
    let mut sum = 0.0;
    for step in 0..AP_RECALL_SAMPLES {
        let r = step as f64 / (AP_RECALL_SAMPLES - 1) as f64;
        let p = curve
            .iter()
            .filter(|&&(recall, _)| recall >= r)
            .map(|&(_, precision)| precision)
            .fold(0.0, f64::max);
        sum += p;
    }
    sum / AP_RECALL_SAMPLES as f64
}

/// Center-distance mAP with greedy nearest-first matching.
///
/// Per class and threshold: detections in descending score order each match
/// the nearest unmatched ground truth within the threshold; AP is the
/// 101-point interpolated area under the precision-recall curve; mAP is the
/// mean over classes and thresholds, skipping classes without ground truth.
pub fn evaluate_map(dets: &DetectionSet, gts: &[Box3D], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let mut entries = Vec::new();
    for &class_id in &cfg.classes {
        let class_gts: Vec<&Box3D> = gts.iter().filter(|g| g.class_id == class_id).collect();
        let order = dets.order_by_score_desc();
        let class_dets: Vec<&Detection> = order
            .iter()
            .map(|&i| &dets.as_slice()[i])
            .filter(|d| d.bbox.class_id == class_id)
            .collect();
        for &threshold in &cfg.thresholds_m {
            if class_gts.is_empty() {
                entries.push(ApEntry {
                    class_id,
                    threshold_m: threshold,
                    ap: None,
                    n_gt: 0,
                    n_det: class_dets.len(),
                });
                continue;
            }
            let mut matched = vec![false; class_gts.len()];
            let flags: Vec<bool> = class_dets
                .iter()
                .map(|det| {
                    let best = class_gts
                        .iter()
                        .enumerate()
                        .filter(|&(gi, gt)| {
                            !matched[gi] && bev_distance(&det.bbox, gt) <= threshold
                        })
                        .min_by(|&(_, a), &(_, b)| {
                            bev_distance(&det.bbox, a)
                                .partial_cmp(&bev_distance(&det.bbox, b))
                                .unwrap()
                        })
                        .map(|(gi, _)| gi);
                    match best {
                        Some(gi) => {
                            matched[gi] = true;
                            true
                        }
                        None => false,
                    }
                })
                .collect();
            entries.push(ApEntry {
                class_id,
                threshold_m: threshold,
                ap: Some(average_precision(&flags, class_gts.len())),
                n_gt: class_gts.len(),
                n_det: class_dets.len(),
            });
        }
    }
    let defined: Vec<f64> = entries.iter().filter_map(|e| e.ap).collect();
    let mean_ap = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    Ok(EvalReport { entries, mean_ap })
}
