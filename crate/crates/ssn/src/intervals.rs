//! Interval arithmetic on the snippet axis: temporal IoU, proposal
//! augmentation with stage splitting, snippet membership, and greedy
//! interval NMS.
//!
//! Intervals are real-valued in snippet units and half-open: `[start, end)`.
//! Snippet `t` covers the unit cell `[t, t+1)`, so the snippets belonging to
//! an interval `[a, b)` are the integers `t` with `a <= t < b`.

use std::cmp::Ordering;

use crate::error::{Result, SsnError};

/// A temporal interval `[start, end)` in snippet units, with `end > start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalInterval {
    start: f64,
    end: f64,
}

impl TemporalInterval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(SsnError::InvalidInterval { start, end });
        }
        Ok(Self { start, end })
    }

    /// Integer-bounds constructor used by proposal grouping.
    pub fn from_snippets(start: usize, end: usize) -> Self {
        debug_assert!(end > start);
        Self {
            start: start as f64,
            end: end as f64,
        }
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.start + self.end)
    }

    /// Length of the overlap with `other`; 0 when disjoint.
    pub fn intersection(&self, other: &TemporalInterval) -> f64 {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        (hi - lo).max(0.0)
    }

    /// Fraction of `self`'s own span covered by `other`.
    pub fn coverage_by(&self, other: &TemporalInterval) -> f64 {
        self.intersection(other) / self.duration()
    }

    /// Clamp to `[0, limit]`, preserving at least a degenerate point.
    fn clamped(start: f64, end: f64, limit: f64) -> (f64, f64) {
        (start.clamp(0.0, limit), end.clamp(0.0, limit))
    }
}

/// Temporal intersection-over-union of two intervals.
pub fn iou(a: &TemporalInterval, b: &TemporalInterval) -> f64 {
    let inter = a.intersection(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.duration() + b.duration() - inter;
    inter / union
}

/// A proposal extended by half its duration on each side and split into the
/// three consecutive stages `starting | course | ending`.
///
/// The starting and ending stages are clamped to the video extent; a stage
/// clamped to zero length is kept as a degenerate interval and pools the
/// single boundary snippet (see [`snippet_run`]).
#[derive(Debug, Clone, Copy)]
pub struct AugmentedProposal {
    original: TemporalInterval,
    /// Stage boundaries `start_ext <= start <= end <= end_ext`.
    start_ext: f64,
    end_ext: f64,
}

impl AugmentedProposal {
    /// Build from explicit stage boundaries. `starting = [start_ext, original.start)`,
    /// `ending = [original.end, end_ext)`; both may be degenerate.
    pub fn from_bounds(original: TemporalInterval, start_ext: f64, end_ext: f64) -> Result<Self> {
        if !(start_ext.is_finite()
            && end_ext.is_finite()
            && start_ext <= original.start()
            && end_ext >= original.end())
        {
            return Err(SsnError::InvalidInterval {
                start: start_ext,
                end: end_ext,
            });
        }
        Ok(Self {
            original,
            start_ext,
            end_ext,
        })
    }

    pub fn original(&self) -> TemporalInterval {
        self.original
    }

    /// The full augmented span `[start_ext, end_ext)`.
    pub fn span(&self) -> TemporalInterval {
        TemporalInterval {
            start: self.start_ext,
            end: self.end_ext,
        }
    }

    /// Starting-stage boundaries; degenerate (`start == end`) when fully clamped.
    pub fn starting_bounds(&self) -> (f64, f64) {
        (self.start_ext, self.original.start)
    }

    pub fn course(&self) -> TemporalInterval {
        self.original
    }

    /// Ending-stage boundaries; degenerate when fully clamped.
    pub fn ending_bounds(&self) -> (f64, f64) {
        (self.original.end, self.end_ext)
    }
}

/// Extend a proposal by half its duration on each side, clamped to
/// `[0, video_length]`, and split it into the three stages.
///
/// Errors when the proposal itself lies outside the video.
pub fn augment(p: &TemporalInterval, video_length: f64) -> Result<AugmentedProposal> {
    if video_length <= 0.0 || !video_length.is_finite() {
        return Err(SsnError::InvalidConfig(format!(
            "video length must be positive, got {video_length}"
        )));
    }
    if p.start() < 0.0 || p.end() > video_length {
        return Err(SsnError::ProposalOutOfBounds {
            start: p.start(),
            end: p.end(),
            video_length,
        });
    }
    let half = 0.5 * p.duration();
    let (start_ext, _) = TemporalInterval::clamped(p.start() - half, p.start(), video_length);
    let (_, end_ext) = TemporalInterval::clamped(p.end(), p.end() + half, video_length);
    AugmentedProposal::from_bounds(*p, start_ext, end_ext)
}

/// A contiguous run of snippet indices `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnippetRun {
    pub start: usize,
    pub end: usize,
}

impl SnippetRun {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn iter(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

/// Snippet membership of `[a, b)` in a video of `num_snippets` snippets:
/// the integers `t` with `a <= t < b`, clamped to the video.
///
/// When the set is empty (degenerate or sub-snippet intervals), falls back
/// to the single snippet whose cell contains the interval midpoint.
pub fn snippet_run(start: f64, end: f64, num_snippets: usize) -> SnippetRun {
    debug_assert!(num_snippets > 0);
    let t0 = start.ceil().max(0.0) as usize;
    let t1 = (end.ceil().max(0.0) as usize).min(num_snippets);
    if t1 > t0 && t0 < num_snippets {
        return SnippetRun { start: t0, end: t1 };
    }
    let mid = 0.5 * (start + end);
    let t = (mid.floor().max(0.0) as usize).min(num_snippets - 1);
    SnippetRun {
        start: t,
        end: t + 1,
    }
}

/// A labeled action instance. Class labels start at 1; 0 is reserved for
/// the background class.
#[derive(Debug, Clone)]
pub struct GroundTruthInstance {
    pub video_id: String,
    pub interval: TemporalInterval,
    pub class: usize,
}

impl GroundTruthInstance {
    pub fn new(video_id: impl Into<String>, interval: TemporalInterval, class: usize) -> Result<Self> {
        if class == 0 {
            return Err(SsnError::InvalidConfig(
                "ground-truth class labels start at 1 (0 is background)".into(),
            ));
        }
        Ok(Self {
            video_id: video_id.into(),
            interval,
            class,
        })
    }
}

/// Deterministic ordering used by NMS: higher score first, then earlier
/// start, then shorter duration, then input position.
fn nms_order(
    a_idx: usize,
    a: &TemporalInterval,
    a_score: f64,
    b_idx: usize,
    b: &TemporalInterval,
    b_score: f64,
) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.start().partial_cmp(&b.start()).unwrap_or(Ordering::Equal))
        .then_with(|| {
            a.duration()
                .partial_cmp(&b.duration())
                .unwrap_or(Ordering::Equal)
        })
        .then(a_idx.cmp(&b_idx))
}

/// Greedy non-maximum suppression. Returns indices of the survivors in
/// selection (descending-score) order; an item is suppressed when its IoU
/// with an already selected item exceeds `threshold`.
pub fn nms_indices(intervals: &[TemporalInterval], scores: &[f64], threshold: f64) -> Vec<usize> {
    assert_eq!(intervals.len(), scores.len());
    let mut order: Vec<usize> = (0..intervals.len()).collect();
    order.sort_by(|&i, &j| nms_order(i, &intervals[i], scores[i], j, &intervals[j], scores[j]));

    let mut keep = Vec::new();
    let mut suppressed = vec![false; intervals.len()];
    for &i in &order {
        if suppressed[i] {
            continue;
        }
        keep.push(i);
        for &j in &order {
            if !suppressed[j] && j != i && iou(&intervals[i], &intervals[j]) > threshold {
                suppressed[j] = true;
            }
        }
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(s: f64, e: f64) -> TemporalInterval {
        TemporalInterval::new(s, e).unwrap()
    }

    #[test]
    fn iou_hand_cases() {
        assert!((iou(&iv(2.0, 4.0), &iv(3.0, 5.0)) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou(&iv(0.0, 10.0), &iv(0.0, 10.0)), 1.0);
        assert_eq!(iou(&iv(0.0, 1.0), &iv(5.0, 6.0)), 0.0);
    }

    #[test]
    fn interval_rejects_degenerate_and_nonfinite() {
        assert!(TemporalInterval::new(3.0, 3.0).is_err());
        assert!(TemporalInterval::new(5.0, 2.0).is_err());
        assert!(TemporalInterval::new(f64::NAN, 2.0).is_err());
    }

    #[test]
    fn augment_splits_and_clamps() {
        let ap = augment(&iv(10.0, 20.0), 100.0).unwrap();
        assert_eq!(ap.starting_bounds(), (5.0, 10.0));
        assert_eq!(ap.course(), iv(10.0, 20.0));
        assert_eq!(ap.ending_bounds(), (20.0, 25.0));

        // left edge: starting stage collapses to a point
        let ap = augment(&iv(0.0, 8.0), 100.0).unwrap();
        assert_eq!(ap.starting_bounds(), (0.0, 0.0));
        assert_eq!(ap.ending_bounds(), (8.0, 12.0));

        // right edge: ending stage clamped to the video end
        let ap = augment(&iv(40.0, 60.0), 65.0).unwrap();
        assert_eq!(ap.ending_bounds(), (60.0, 65.0));
    }

    #[test]
    fn augment_rejects_out_of_video() {
        assert!(augment(&iv(-1.0, 5.0), 100.0).is_err());
        assert!(augment(&iv(90.0, 105.0), 100.0).is_err());
    }

    #[test]
    fn snippet_run_membership_and_fallback() {
        assert_eq!(snippet_run(10.0, 20.0, 100), SnippetRun { start: 10, end: 20 });
        assert_eq!(snippet_run(9.5, 12.0, 100), SnippetRun { start: 10, end: 12 });
        // no integer inside: falls back to the cell containing the midpoint
        assert_eq!(snippet_run(3.2, 3.8, 100), SnippetRun { start: 3, end: 4 });
        // degenerate at zero
        assert_eq!(snippet_run(0.0, 0.0, 100), SnippetRun { start: 0, end: 1 });
        // degenerate at the video end stays in range
        assert_eq!(snippet_run(100.0, 100.0, 100), SnippetRun { start: 99, end: 100 });
    }

    #[test]
    fn nms_hand_cases() {
        let items = [iv(0.0, 10.0), iv(1.0, 10.0)];
        assert_eq!(nms_indices(&items, &[0.9, 0.8], 0.5), vec![0]);

        let items = [iv(0.0, 10.0), iv(20.0, 30.0)];
        assert_eq!(nms_indices(&items, &[0.9, 0.8], 0.5), vec![0, 1]);
    }

    #[test]
    fn nms_tie_break_earlier_start_then_shorter() {
        let items = [iv(5.0, 9.0), iv(0.0, 10.0), iv(0.0, 8.0)];
        let keep = nms_indices(&items, &[0.5, 0.5, 0.5], 0.1);
        // equal scores: [0,8) precedes [0,10); [0,8) suppresses both others
        assert_eq!(keep, vec![2]);
    }

    /// Naive reference: repeatedly pick the best remaining item by the same
    /// ordering and drop everything overlapping it.
    fn nms_reference(intervals: &[TemporalInterval], scores: &[f64], thr: f64) -> Vec<usize> {
        let mut alive: Vec<usize> = (0..intervals.len()).collect();
        let mut keep = Vec::new();
        while !alive.is_empty() {
            let mut best = alive[0];
            for &i in &alive {
                if nms_order(i, &intervals[i], scores[i], best, &intervals[best], scores[best])
                    == Ordering::Less
                {
                    best = i;
                }
            }
            keep.push(best);
            alive.retain(|&i| i != best && iou(&intervals[best], &intervals[i]) <= thr);
        }
        keep
    }

    #[test]
    fn nms_matches_reference_on_random_inputs() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let items: Vec<TemporalInterval> = (0..50)
                .map(|_| {
                    let s: f64 = rng.random_range(0.0..90.0);
                    let d: f64 = rng.random_range(1.0..30.0);
                    iv(s, s + d)
                })
                .collect();
            let scores: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..1.0)).collect();
            assert_eq!(
                nms_indices(&items, &scores, 0.95),
                nms_reference(&items, &scores, 0.95)
            );
        }
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(
            s1 in -50.0..50.0f64, d1 in 0.1..40.0f64,
            s2 in -50.0..50.0f64, d2 in 0.1..40.0f64,
        ) {
            let a = iv(s1, s1 + d1);
            let b = iv(s2, s2 + d2);
            let ab = iou(&a, &b);
            prop_assert!((ab - iou(&b, &a)).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&ab));
            if ab == 1.0 {
                prop_assert_eq!(a, b);
            }
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn augment_scale_equivariant(
            s in 0.0..80.0f64, d in 1.0..20.0f64, c in 0.1..10.0f64,
        ) {
            let video = 100.0;
            let p = iv(s, (s + d).min(video));
            let ap = augment(&p, video).unwrap();
            let scaled = iv(c * p.start(), c * p.end());
            let ap_scaled = augment(&scaled, c * video).unwrap();
            let (a, b) = ap.starting_bounds();
            let (sa, sb) = ap_scaled.starting_bounds();
            prop_assert!((sa - c * a).abs() < 1e-9 * c.max(1.0));
            prop_assert!((sb - c * b).abs() < 1e-9 * c.max(1.0));
            let (a, b) = ap.ending_bounds();
            let (ea, eb) = ap_scaled.ending_bounds();
            prop_assert!((ea - c * a).abs() < 1e-9 * c.max(1.0));
            prop_assert!((eb - c * b).abs() < 1e-9 * c.max(1.0));
        }

        #[test]
        fn nms_subset_and_idempotent(
            seed in 0u64..500,
            n in 1usize..40,
            thr in 0.05..0.99f64,
        ) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let items: Vec<TemporalInterval> = (0..n)
                .map(|_| {
                    let s: f64 = rng.random_range(0.0..50.0);
                    let d: f64 = rng.random_range(0.5..20.0);
                    iv(s, s + d)
                })
                .collect();
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let keep = nms_indices(&items, &scores, thr);
            prop_assert!(keep.iter().all(|&i| i < n));
            // survivors are pairwise below the threshold
            for (x, &i) in keep.iter().enumerate() {
                for &j in &keep[x + 1..] {
                    prop_assert!(iou(&items[i], &items[j]) <= thr);
                }
            }
            // re-running on the survivors keeps all of them
            let kept_items: Vec<_> = keep.iter().map(|&i| items[i]).collect();
            let kept_scores: Vec<_> = keep.iter().map(|&i| scores[i]).collect();
            let again = nms_indices(&kept_items, &kept_scores, thr);
            prop_assert_eq!(again.len(), keep.len());
        }
    }
}
