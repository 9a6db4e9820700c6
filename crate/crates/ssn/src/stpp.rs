//! Structured temporal pyramid pooling (STPP).
//!
//! An augmented proposal is split into starting / course / ending stages.
//! The course stage carries a multi-level pyramid (each level evenly divides
//! it into `B_l` parts); the starting and ending stages are single average-
//! pooled regions. Pooled region vectors are concatenated in a fixed order:
//! starting, course level 1..L (each part in order), ending. The course-only
//! concatenation feeds the activity classifier; the full concatenation is
//! the global proposal representation.
//!
//! For training, dense pooling is approximated by sampling one snippet from
//! each of 9 segments laid over the augmented span (2 per starting stage, 5
//! per course, 2 per ending). Under this sparse scheme, interior course-part
//! boundaries are snapped to the nearest segment boundary so that every
//! pooling region owns a disjoint, non-empty set of sampled snippets.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SsnError};
use crate::intervals::{snippet_run, AugmentedProposal};
use crate::sequence::SnippetSequence;

/// Segments per stage under sparse sampling: 2 + 5 + 2 = 9.
pub const STARTING_SEGMENTS: usize = 2;
pub const COURSE_SEGMENTS: usize = 5;
pub const ENDING_SEGMENTS: usize = 2;
pub const TOTAL_SEGMENTS: usize = STARTING_SEGMENTS + COURSE_SEGMENTS + ENDING_SEGMENTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Average,
    Max,
}

/// Pyramid layout, written `(B_1,...,B_L)-A` where `B_l` are the course
/// part counts per level and `A` toggles the starting/ending stages.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PyramidConfig {
    pub course_levels: Vec<usize>,
    pub use_augmentation: bool,
    pub pool: PoolMode,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self {
            course_levels: vec![1, 2],
            use_augmentation: true,
            pool: PoolMode::Average,
        }
    }
}

impl PyramidConfig {
    pub fn new(course_levels: Vec<usize>, use_augmentation: bool, pool: PoolMode) -> Result<Self> {
        if course_levels.is_empty() || course_levels.contains(&0) {
            return Err(SsnError::InvalidConfig(
                "every course pyramid level needs at least one part".into(),
            ));
        }
        Ok(Self {
            course_levels,
            use_augmentation,
            pool,
        })
    }

    /// Number of course pooling regions (sum of part counts over levels).
    pub fn course_regions(&self) -> usize {
        self.course_levels.iter().sum()
    }

    /// Total pooling regions: course regions plus starting/ending when
    /// augmentation is on.
    pub fn num_regions(&self) -> usize {
        self.course_regions() + if self.use_augmentation { 2 } else { 0 }
    }

    /// Dimension of the course-only feature for snippet dimension `d`.
    pub fn course_dim(&self, d: usize) -> usize {
        self.course_regions() * d
    }

    /// Dimension of the global feature for snippet dimension `d`.
    pub fn global_dim(&self, d: usize) -> usize {
        self.num_regions() * d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Starting,
    Course,
    Ending,
}

/// One pooling region: a stage tag and interval bounds (possibly degenerate
/// for stages clamped at the video edge).
#[derive(Debug, Clone, Copy)]
pub struct Region {
    pub stage: Stage,
    pub start: f64,
    pub end: f64,
}

fn course_parts(ap: &AugmentedProposal, parts: usize) -> Vec<Region> {
    let c = ap.course();
    let width = c.duration() / parts as f64;
    (0..parts)
        .map(|i| Region {
            stage: Stage::Course,
            start: c.start() + i as f64 * width,
            end: if i + 1 == parts {
                c.end()
            } else {
                c.start() + (i + 1) as f64 * width
            },
        })
        .collect()
}

/// Pooling regions in concatenation order, each level evenly dividing the
/// course stage. With augmentation off, only the course regions remain.
pub fn region_layout(cfg: &PyramidConfig, ap: &AugmentedProposal) -> Vec<Region> {
    let mut regions = Vec::with_capacity(cfg.num_regions());
    if cfg.use_augmentation {
        let (s0, s1) = ap.starting_bounds();
        regions.push(Region {
            stage: Stage::Starting,
            start: s0,
            end: s1,
        });
    }
    for &parts in &cfg.course_levels {
        regions.extend(course_parts(ap, parts));
    }
    if cfg.use_augmentation {
        let (e0, e1) = ap.ending_bounds();
        regions.push(Region {
            stage: Stage::Ending,
            start: e0,
            end: e1,
        });
    }
    regions
}

/// The 9 sampling segments laid over the augmented span, allocated 2/5/2 to
/// the starting/course/ending stages, each stage evenly divided.
pub fn sampling_segments(ap: &AugmentedProposal) -> Vec<(f64, f64)> {
    let mut segments = Vec::with_capacity(TOTAL_SEGMENTS);
    let mut push_stage = |a: f64, b: f64, n: usize| {
        let width = (b - a) / n as f64;
        for i in 0..n {
            let lo = a + i as f64 * width;
            let hi = if i + 1 == n { b } else { a + (i + 1) as f64 * width };
            segments.push((lo, hi));
        }
    };
    let (s0, s1) = ap.starting_bounds();
    push_stage(s0, s1, STARTING_SEGMENTS);
    let c = ap.course();
    push_stage(c.start(), c.end(), COURSE_SEGMENTS);
    let (e0, e1) = ap.ending_bounds();
    push_stage(e0, e1, ENDING_SEGMENTS);
    segments
}

/// Region layout used when pooling over a sampled snippet subset: interior
/// course-part boundaries are snapped to the nearest course-segment boundary
/// (ties toward the earlier one), keeping the regions disjoint over the
/// sampled set.
pub fn snapped_region_layout(cfg: &PyramidConfig, ap: &AugmentedProposal) -> Vec<Region> {
    let c = ap.course();
    let seg_width = c.duration() / COURSE_SEGMENTS as f64;
    let mut regions = Vec::with_capacity(cfg.num_regions());
    if cfg.use_augmentation {
        let (s0, s1) = ap.starting_bounds();
        regions.push(Region {
            stage: Stage::Starting,
            start: s0,
            end: s1,
        });
    }
    for &parts in &cfg.course_levels {
        let mut prev_idx = 0usize;
        for p in 0..parts {
            let next_idx = if p + 1 == parts {
                COURSE_SEGMENTS
            } else {
                let exact = (p + 1) as f64 * COURSE_SEGMENTS as f64 / parts as f64;
                let snapped = (exact - 0.5).ceil() as usize;
                snapped.max(prev_idx + 1).min(COURSE_SEGMENTS)
            };
            regions.push(Region {
                stage: Stage::Course,
                start: c.start() + prev_idx as f64 * seg_width,
                end: if next_idx == COURSE_SEGMENTS {
                    c.end()
                } else {
                    c.start() + next_idx as f64 * seg_width
                },
            });
            prev_idx = next_idx;
        }
    }
    if cfg.use_augmentation {
        let (e0, e1) = ap.ending_bounds();
        regions.push(Region {
            stage: Stage::Ending,
            start: e0,
            end: e1,
        });
    }
    regions
}

fn segment_snippets(bounds: (f64, f64), num_snippets: usize) -> crate::intervals::SnippetRun {
    snippet_run(bounds.0, bounds.1, num_snippets)
}

/// Sample one snippet uniformly from each of the 9 segments. Degenerate
/// segments fall back to the boundary snippet. The result is sorted and
/// deduplicated; the same seed always yields the same set.
pub fn sparse_sample(ap: &AugmentedProposal, num_snippets: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = sampling_segments(ap)
        .into_iter()
        .map(|seg| {
            let run = segment_snippets(seg, num_snippets);
            run.start + rng.random_range(0..run.len())
        })
        .collect();
    indices.sort_unstable();
    indices.dedup();
    indices
}

/// Deterministic variant of [`sparse_sample`]: the middle snippet of each
/// segment.
pub fn sparse_sample_center(ap: &AugmentedProposal, num_snippets: usize) -> Vec<usize> {
    let mut indices: Vec<usize> = sampling_segments(ap)
        .into_iter()
        .map(|seg| {
            let run = segment_snippets(seg, num_snippets);
            run.start + run.len() / 2
        })
        .collect();
    indices.sort_unstable();
    indices.dedup();
    indices
}

fn pool_rows<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize, mode: PoolMode) -> Vec<f64> {
    match mode {
        PoolMode::Average => {
            let mut acc = vec![0.0; dim];
            let mut n = 0usize;
            for row in rows {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
                n += 1;
            }
            debug_assert!(n > 0);
            let inv = n as f64;
            acc.iter_mut().for_each(|a| *a /= inv);
            acc
        }
        PoolMode::Max => {
            let mut acc = vec![f64::NEG_INFINITY; dim];
            for row in rows {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a = a.max(*v);
                }
            }
            acc
        }
    }
}

/// Pool the snippets of `[start, end)` (nearest-snippet fallback when the
/// region holds none) into a single feature vector.
pub fn pool_region(seq: &SnippetSequence, start: f64, end: f64, mode: PoolMode) -> Vec<f64> {
    let run = snippet_run(start, end, seq.num_snippets());
    pool_rows(run.iter().map(|t| seq.row(t)), seq.dim(), mode)
}

/// Members of `subset` lying in `[start, end)`; when none do, the subset
/// element nearest the region midpoint.
fn subset_members(subset: &[usize], start: f64, end: f64) -> (usize, usize) {
    debug_assert!(!subset.is_empty());
    let lo = subset.partition_point(|&t| (t as f64) < start);
    let hi = subset.partition_point(|&t| (t as f64) < end);
    if hi > lo {
        return (lo, hi);
    }
    let mid = 0.5 * (start + end);
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, &t) in subset.iter().enumerate() {
        let dist = (t as f64 - mid).abs();
        if dist < best_dist {
            best_dist = dist;
            best = i;
        }
    }
    (best, best + 1)
}

fn pool_region_subset(
    seq: &SnippetSequence,
    start: f64,
    end: f64,
    mode: PoolMode,
    subset: &[usize],
) -> Vec<f64> {
    let (lo, hi) = subset_members(subset, start, end);
    pool_rows(subset[lo..hi].iter().map(|&t| seq.row(t)), seq.dim(), mode)
}

/// Stage-wise pooled features of one proposal. `f_c` feeds the activity
/// classifier; the concatenation `f_s | f_c | f_e` is the global
/// representation used by the completeness classifiers and regressors.
/// `f_s` and `f_e` are empty when augmentation is off.
#[derive(Debug, Clone, PartialEq)]
pub struct StageFeatures {
    pub f_s: Vec<f64>,
    pub f_c: Vec<f64>,
    pub f_e: Vec<f64>,
}

impl StageFeatures {
    pub fn global(&self) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.f_s.len() + self.f_c.len() + self.f_e.len());
        g.extend_from_slice(&self.f_s);
        g.extend_from_slice(&self.f_c);
        g.extend_from_slice(&self.f_e);
        g
    }
}

/// Pool every pyramid region of the proposal. With `snippet_subset` given,
/// pooling is restricted to those snippets over the snapped layout;
/// otherwise every member snippet is used over the even layout.
pub fn stpp_features(
    seq: &SnippetSequence,
    ap: &AugmentedProposal,
    cfg: &PyramidConfig,
    snippet_subset: Option<&[usize]>,
) -> StageFeatures {
    let layout = match snippet_subset {
        Some(_) => snapped_region_layout(cfg, ap),
        None => region_layout(cfg, ap),
    };
    let mut out = StageFeatures {
        f_s: Vec::new(),
        f_c: Vec::new(),
        f_e: Vec::new(),
    };
    for region in layout {
        let pooled = match snippet_subset {
            Some(subset) => pool_region_subset(seq, region.start, region.end, cfg.pool, subset),
            None => pool_region(seq, region.start, region.end, cfg.pool),
        };
        match region.stage {
            Stage::Starting => out.f_s.extend(pooled),
            Stage::Course => out.f_c.extend(pooled),
            Stage::Ending => out.f_e.extend(pooled),
        }
    }
    out
}
