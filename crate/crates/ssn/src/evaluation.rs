//! Proposal recall and detection AP/mAP metrics.
//!
//! Recall uses one-to-one greedy matching by descending IoU per video.
//! Average precision follows the PASCAL-VOC protocol: detections ranked by
//! score (ties by input order), each greedily matched to the best unmatched
//! ground truth of its class and video, precision-recall curve integrated
//! with either all-point or 11-point interpolation. mAP averages the AP of
//! the classes present in the ground truth.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Result, SsnError};
use crate::inference::Detection;
use crate::intervals::{iou, GroundTruthInstance, TemporalInterval};

/// IoU grid `[0.5 : 0.05 : 0.95]` used for average recall and average mAP.
pub fn default_iou_grid() -> Vec<f64> {
    (0..10).map(|i| 0.5 + i as f64 * 0.05).collect()
}

/// Coarse IoU grid `{0.1, 0.2, 0.3, 0.4, 0.5}`.
pub fn coarse_iou_grid() -> Vec<f64> {
    (1..=5).map(|i| i as f64 * 0.1).collect()
}

/// Fraction of ground-truth instances matched one-to-one by a proposal
/// with IoU at or above the threshold. Matching is greedy by descending
/// IoU within each video.
pub fn recall_at_iou(
    proposals_by_video: &BTreeMap<String, Vec<TemporalInterval>>,
    gts: &[GroundTruthInstance],
    iou_threshold: f64,
) -> Result<f64> {
    if gts.is_empty() {
        return Err(SsnError::NoGroundTruth);
    }
    let mut gts_by_video: BTreeMap<&str, Vec<&GroundTruthInstance>> = BTreeMap::new();
    for gt in gts {
        gts_by_video.entry(&gt.video_id).or_default().push(gt);
    }
    let mut matched = 0usize;
    for (video, video_gts) in &gts_by_video {
        let Some(props) = proposals_by_video.get(*video) else {
            continue;
        };
        // candidate pairs above the threshold, best overlap first
        let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
        for (pi, p) in props.iter().enumerate() {
            for (gi, gt) in video_gts.iter().enumerate() {
                let o = iou(p, &gt.interval);
                if o >= iou_threshold {
                    pairs.push((pi, gi, o));
                }
            }
        }
        pairs.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
                .then(a.1.cmp(&b.1))
        });
        let mut prop_used = vec![false; props.len()];
        let mut gt_used = vec![false; video_gts.len()];
        for (pi, gi, _) in pairs {
            if !prop_used[pi] && !gt_used[gi] {
                prop_used[pi] = true;
                gt_used[gi] = true;
                matched += 1;
            }
        }
    }
    Ok(matched as f64 / gts.len() as f64)
}

/// Mean of [`recall_at_iou`] over a threshold grid.
pub fn average_recall(
    proposals_by_video: &BTreeMap<String, Vec<TemporalInterval>>,
    gts: &[GroundTruthInstance],
    thresholds: &[f64],
) -> Result<f64> {
    if thresholds.is_empty() {
        return Err(SsnError::InvalidConfig("threshold grid is empty".into()));
    }
    let mut total = 0.0;
    for &thr in thresholds {
        total += recall_at_iou(proposals_by_video, gts, thr)?;
    }
    Ok(total / thresholds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Area under the precision envelope at every recall step.
    AllPoint,
    /// Mean of the precision envelope at recalls 0.0, 0.1, ..., 1.0.
    ElevenPoint,
}

/// Cumulative precision/recall points of a ranked detection list for one
/// class, `true` marking true positives.
fn precision_recall(flags: &[bool], num_gt: usize) -> Vec<(f64, f64)> {
    let mut tp = 0usize;
    let mut fp = 0usize;
    flags
        .iter()
        .map(|&is_tp| {
            if is_tp {
                tp += 1;
            } else {
                fp += 1;
            }
            (tp as f64 / num_gt as f64, tp as f64 / (tp + fp) as f64)
        })
        .collect()
}

fn integrate_ap(points: &[(f64, f64)], interp: Interpolation) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    // precision envelope: max precision at recall >= r
    let mut envelope = vec![0.0; points.len()];
    let mut running = 0.0f64;
    for (i, &(_, prec)) in points.iter().enumerate().rev() {
        running = running.max(prec);
        envelope[i] = running;
    }
    match interp {
        Interpolation::AllPoint => {
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for (i, &(recall, _)) in points.iter().enumerate() {
                ap += (recall - prev_recall) * envelope[i];
                prev_recall = recall;
            }
            ap
        }
        Interpolation::ElevenPoint => {
            let mut total = 0.0;
            for step in 0..=10 {
                let r = step as f64 / 10.0;
                let p = points
                    .iter()
                    .zip(&envelope)
                    .find(|((recall, _), _)| *recall >= r - 1e-12)
                    .map(|(_, &env)| env)
                    .unwrap_or(0.0);
                total += p;
            }
            total / 11.0
        }
    }
}

/// True-positive flags of the class-`k` detections in rank order: each
/// detection greedily claims the unmatched same-video instance with the
/// highest IoU, counting as a true positive when that IoU reaches the
/// threshold.
fn match_detections(
    detections: &[&Detection],
    gts_by_video: &BTreeMap<&str, Vec<&GroundTruthInstance>>,
    iou_threshold: f64,
) -> Vec<bool> {
    let mut used: BTreeMap<&str, Vec<bool>> = gts_by_video
        .iter()
        .map(|(v, g)| (*v, vec![false; g.len()]))
        .collect();
    detections
        .iter()
        .map(|det| {
            let Some(video_gts) = gts_by_video.get(det.video_id.as_str()) else {
                return false;
            };
            let used_flags = used.get_mut(det.video_id.as_str()).unwrap();
            let mut best: Option<(usize, f64)> = None;
            for (gi, gt) in video_gts.iter().enumerate() {
                if used_flags[gi] {
                    continue;
                }
                let o = iou(&det.interval, &gt.interval);
                if best.is_none_or(|(_, b)| o > b) {
                    best = Some((gi, o));
                }
            }
            match best {
                Some((gi, o)) if o >= iou_threshold => {
                    used_flags[gi] = true;
                    true
                }
                _ => false,
            }
        })
        .collect()
}

/// Average precision of one class at one IoU threshold. Returns `None`
/// when the class has no ground-truth instances.
pub fn average_precision(
    detections: &[Detection],
    gts: &[GroundTruthInstance],
    class: usize,
    iou_threshold: f64,
    interp: Interpolation,
) -> Option<f64> {
    let mut gts_by_video: BTreeMap<&str, Vec<&GroundTruthInstance>> = BTreeMap::new();
    let mut num_gt = 0usize;
    for gt in gts.iter().filter(|g| g.class == class) {
        gts_by_video.entry(&gt.video_id).or_default().push(gt);
        num_gt += 1;
    }
    if num_gt == 0 {
        return None;
    }
    let mut class_dets: Vec<&Detection> = detections.iter().filter(|d| d.class == class).collect();
    class_dets.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
    let flags = match_detections(&class_dets, &gts_by_video, iou_threshold);
    let points = precision_recall(&flags, num_gt);
    Some(integrate_ap(&points, interp))
}

/// Cumulative (recall, precision) points of the ranked class-`k` detection
/// list, for curve plotting. `None` when the class has no ground truth.
pub fn precision_recall_curve(
    detections: &[Detection],
    gts: &[GroundTruthInstance],
    class: usize,
    iou_threshold: f64,
) -> Option<Vec<(f64, f64)>> {
    let mut gts_by_video: BTreeMap<&str, Vec<&GroundTruthInstance>> = BTreeMap::new();
    let mut num_gt = 0usize;
    for gt in gts.iter().filter(|g| g.class == class) {
        gts_by_video.entry(&gt.video_id).or_default().push(gt);
        num_gt += 1;
    }
    if num_gt == 0 {
        return None;
    }
    let mut class_dets: Vec<&Detection> = detections.iter().filter(|d| d.class == class).collect();
    class_dets.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
    let flags = match_detections(&class_dets, &gts_by_video, iou_threshold);
    Some(precision_recall(&flags, num_gt))
}

/// mAP over a threshold grid plus the grid average.
#[derive(Debug, Clone)]
pub struct MapReport {
    pub thresholds: Vec<f64>,
    /// Mean AP over present classes, one entry per threshold.
    pub map_per_threshold: Vec<f64>,
    /// Mean of `map_per_threshold`.
    pub average_map: f64,
    /// Classes present in the ground truth, ascending.
    pub classes: Vec<usize>,
    /// `ap_per_class[c][t]`: AP of `classes[c]` at `thresholds[t]`.
    pub ap_per_class: Vec<Vec<f64>>,
}

/// Evaluate mAP at every threshold of the grid. Classes absent from the
/// ground truth are excluded from the mean.
pub fn mean_ap(
    detections: &[Detection],
    gts: &[GroundTruthInstance],
    thresholds: &[f64],
    interp: Interpolation,
) -> Result<MapReport> {
    if gts.is_empty() {
        return Err(SsnError::NoGroundTruth);
    }
    if thresholds.is_empty() {
        return Err(SsnError::InvalidConfig("threshold grid is empty".into()));
    }
    let classes: Vec<usize> = gts.iter().map(|g| g.class).collect::<BTreeSet<_>>().into_iter().collect();
    let mut ap_per_class = vec![Vec::with_capacity(thresholds.len()); classes.len()];
    let mut map_per_threshold = Vec::with_capacity(thresholds.len());
    for &thr in thresholds {
        let mut sum = 0.0;
        for (ci, &class) in classes.iter().enumerate() {
            let ap = average_precision(detections, gts, class, thr, interp)
                .expect("class taken from ground truth");
            ap_per_class[ci].push(ap);
            sum += ap;
        }
        map_per_threshold.push(sum / classes.len() as f64);
    }
    let average_map = map_per_threshold.iter().sum::<f64>() / thresholds.len() as f64;
    Ok(MapReport {
        thresholds: thresholds.to_vec(),
        map_per_threshold,
        average_map,
        classes,
        ap_per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(s: f64, e: f64) -> TemporalInterval {
        TemporalInterval::new(s, e).unwrap()
    }

    fn gt(video: &str, s: f64, e: f64, class: usize) -> GroundTruthInstance {
        GroundTruthInstance::new(video, iv(s, e), class).unwrap()
    }

    fn det(video: &str, class: usize, s: f64, e: f64, score: f64) -> Detection {
        Detection {
            video_id: video.into(),
            class,
            interval: iv(s, e),
            score,
            activity: score,
            completeness: 1.0,
        }
    }

    fn props(entries: &[(&str, f64, f64)]) -> BTreeMap<String, Vec<TemporalInterval>> {
        let mut out: BTreeMap<String, Vec<TemporalInterval>> = BTreeMap::new();
        for (v, s, e) in entries {
            out.entry(v.to_string()).or_default().push(iv(*s, *e));
        }
        out
    }

    #[test]
    fn recall_trivial_and_partial_cases() {
        let gts = vec![gt("v", 0.0, 10.0, 1), gt("v", 20.0, 30.0, 2)];
        let perfect = props(&[("v", 0.0, 10.0), ("v", 20.0, 30.0)]);
        for thr in default_iou_grid() {
            assert_eq!(recall_at_iou(&perfect, &gts, thr).unwrap(), 1.0);
        }
        assert_eq!(recall_at_iou(&BTreeMap::new(), &gts, 0.5).unwrap(), 0.0);
        assert!(recall_at_iou(&perfect, &[], 0.5).is_err());

        // two of three instances matchable at 0.7
        let gts = vec![
            gt("v", 0.0, 10.0, 1),
            gt("v", 20.0, 30.0, 1),
            gt("v", 40.0, 50.0, 1),
        ];
        let partial = props(&[("v", 0.0, 9.0), ("v", 20.0, 27.0), ("v", 41.0, 55.0)]);
        let r = recall_at_iou(&partial, &gts, 0.7).unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn recall_matching_is_one_to_one() {
        // one proposal cannot match two instances
        let gts = vec![gt("v", 0.0, 10.0, 1), gt("v", 10.0, 20.0, 1)];
        let single = props(&[("v", 0.0, 10.0)]);
        assert_eq!(recall_at_iou(&single, &gts, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn average_recall_is_grid_mean() {
        let gts = vec![gt("v", 0.0, 10.0, 1)];
        // IoU 0.75 with the instance: recall 1 at thresholds <= 0.75
        let p = props(&[("v", 0.0, 7.5)]);
        let grid = default_iou_grid();
        let ar = average_recall(&p, &gts, &grid).unwrap();
        let manual: f64 = grid
            .iter()
            .map(|&t| recall_at_iou(&p, &gts, t).unwrap())
            .sum::<f64>()
            / grid.len() as f64;
        assert_eq!(ar, manual);
        assert!((ar - 0.6).abs() < 1e-12); // 6 of 10 thresholds pass
    }

    #[test]
    fn ap_trivial_and_half_cases() {
        let gts = vec![gt("v", 0.0, 10.0, 1)];
        let dets = vec![det("v", 1, 0.0, 6.0, 0.9)]; // IoU 0.6
        let ap = average_precision(&dets, &gts, 1, 0.5, Interpolation::AllPoint).unwrap();
        assert_eq!(ap, 1.0);

        // the higher-scored detection misses, the lower one matches
        let dets = vec![
            det("v", 1, 50.0, 60.0, 0.9),
            det("v", 1, 0.0, 10.0, 0.8),
        ];
        let ap = average_precision(&dets, &gts, 1, 0.5, Interpolation::AllPoint).unwrap();
        assert_eq!(ap, 0.5);

        assert!(average_precision(&dets, &gts, 7, 0.5, Interpolation::AllPoint).is_none());
    }

    #[test]
    fn map_composition_and_grid_layout() {
        let gts = vec![gt("v", 0.0, 10.0, 1), gt("v", 20.0, 30.0, 2)];
        let dets = vec![det("v", 1, 0.0, 10.0, 0.9), det("v", 2, 20.0, 30.0, 0.8)];
        let grid = [0.5, 0.75, 0.95];
        let report = mean_ap(&dets, &gts, &grid, Interpolation::AllPoint).unwrap();
        assert_eq!(report.thresholds, grid.to_vec());
        assert_eq!(report.classes, vec![1, 2]);
        assert_eq!(report.map_per_threshold, vec![1.0, 1.0, 1.0]);
        assert_eq!(report.average_map, 1.0);

        // per-class means compose the mAP
        for (t, &m) in report.map_per_threshold.iter().enumerate() {
            let manual: f64 =
                report.ap_per_class.iter().map(|row| row[t]).sum::<f64>() / report.classes.len() as f64;
            assert_eq!(m, manual);
        }
    }

    #[test]
    fn eleven_point_mode_differs_predictably() {
        let gts = vec![gt("v", 0.0, 10.0, 1), gt("v", 20.0, 30.0, 1)];
        let dets = vec![det("v", 1, 0.0, 10.0, 0.9)];
        // recall stops at 0.5 with precision 1
        let all = average_precision(&dets, &gts, 1, 0.5, Interpolation::AllPoint).unwrap();
        let eleven = average_precision(&dets, &gts, 1, 0.5, Interpolation::ElevenPoint).unwrap();
        assert_eq!(all, 0.5);
        assert!((eleven - 6.0 / 11.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn metrics_bounded_and_monotone_in_threshold(seed in 0u64..200) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let gts: Vec<GroundTruthInstance> = (0..rng.random_range(1..5))
                .map(|i| {
                    let s = rng.random_range(0.0..40.0);
                    gt("v", s, s + rng.random_range(1.0..15.0), 1 + i % 2)
                })
                .collect();
            let dets: Vec<Detection> = (0..rng.random_range(0..8))
                .map(|_| {
                    let s = rng.random_range(0.0..40.0);
                    det("v", rng.random_range(1..3), s, s + rng.random_range(1.0..15.0),
                        rng.random_range(0.0..1.0))
                })
                .collect();
            let pmap = props(
                &dets
                    .iter()
                    .map(|d| ("v", d.interval.start(), d.interval.end()))
                    .collect::<Vec<_>>(),
            );
            let mut prev_recall = 1.0;
            let mut prev_map = 1.0;
            for thr in default_iou_grid() {
                let r = recall_at_iou(&pmap, &gts, thr).unwrap();
                prop_assert!((0.0..=1.0).contains(&r));
                prop_assert!(r <= prev_recall + 1e-12);
                prev_recall = r;
                let m = mean_ap(&dets, &gts, &[thr], Interpolation::AllPoint).unwrap();
                prop_assert!((0.0..=1.0).contains(&m.average_map));
                prop_assert!(m.average_map <= prev_map + 1e-12);
                prev_map = m.average_map;
            }
        }

        #[test]
        fn trailing_false_positive_never_raises_ap(seed in 0u64..200) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let gts = vec![gt("v", 0.0, 10.0, 1), gt("v", 30.0, 40.0, 1)];
            let mut dets: Vec<Detection> = (0..rng.random_range(1..6))
                .map(|_| {
                    let s = rng.random_range(0.0..40.0);
                    det("v", 1, s, s + rng.random_range(1.0..12.0), rng.random_range(0.1..1.0))
                })
                .collect();
            let before =
                average_precision(&dets, &gts, 1, 0.5, Interpolation::AllPoint).unwrap();
            dets.push(det("v", 1, 80.0, 90.0, 0.01)); // disjoint, lowest score
            let after = average_precision(&dets, &gts, 1, 0.5, Interpolation::AllPoint).unwrap();
            prop_assert!(after <= before + 1e-12);
        }
    }
}
