//! Temporal actionness grouping (TAG): proposal generation by watershed
//! flooding of the complemented actionness signal.
//!
//! The per-snippet actionness sequence is viewed as 1D terrain after
//! complementing it (`1 - score`). Flooding the terrain at a water level
//! `gamma` leaves a set of basins: maximal runs of snippets with
//! `score >= 1 - gamma`. Starting from each basin as a seed, consecutive
//! basins are absorbed while the flooded fraction of the growing span stays
//! at or above a coverage threshold `tau`. Proposals are collected over a
//! `(gamma, tau)` grid, deduplicated, and reduced by NMS at IoU 0.95.

use std::collections::HashSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SsnError};
use crate::intervals::{nms_indices, TemporalInterval};
use crate::sequence::SnippetSequence;

/// IoU threshold applied to the grid union.
pub const UNION_NMS_IOU: f64 = 0.95;

/// Default step of the `(gamma, tau)` grid.
pub const DEFAULT_GRID_STEP: f64 = 0.05;

/// Per-snippet actionness probabilities, each in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ActionnessSequence {
    scores: Vec<f64>,
}

impl ActionnessSequence {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(SsnError::InvalidConfig(
                "actionness sequence must be non-empty".into(),
            ));
        }
        if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(SsnError::InvalidConfig(
                "actionness scores must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Mean actionness over the snippet range `[start, end)`.
    pub fn mean_over(&self, start: usize, end: usize) -> f64 {
        debug_assert!(start < end && end <= self.scores.len());
        self.scores[start..end].iter().sum::<f64>() / (end - start) as f64
    }
}

/// A maximal run of flooded snippets `[start, end)` at some water level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Basin {
    pub start: usize,
    pub end: usize,
}

impl Basin {
    pub fn duration(&self) -> usize {
        self.end - self.start
    }
}

/// Basins at water level `gamma`: maximal runs of snippets whose
/// complemented actionness `1 - score` is at or below `gamma`, i.e.
/// `score >= 1 - gamma`. Returned in temporal order, pairwise disjoint.
pub fn flood_basins(a: &ActionnessSequence, gamma: f64) -> Vec<Basin> {
    let flooded = |s: f64| 1.0 - s <= gamma;
    let mut basins = Vec::new();
    let mut run_start = None;
    for (t, &s) in a.scores().iter().enumerate() {
        match (run_start, flooded(s)) {
            (None, true) => run_start = Some(t),
            (Some(s0), false) => {
                basins.push(Basin { start: s0, end: t });
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s0) = run_start {
        basins.push(Basin {
            start: s0,
            end: a.len(),
        });
    }
    basins
}

/// Grow a group from the seed basin, absorbing the basins that follow while
/// the fraction of basin durations over the total span (seed start to the
/// candidate's end) stays at or above `tau`. The first basin that violates
/// the criterion is excluded and growth stops. A lone seed always yields
/// itself.
pub fn group_from_seed(basins: &[Basin], seed_index: usize, tau: f64) -> TemporalInterval {
    let seed = &basins[seed_index];
    let mut covered = seed.duration();
    let mut end = seed.end;
    for b in &basins[seed_index + 1..] {
        let next_covered = covered + b.duration();
        let total = b.end - seed.start;
        if (next_covered as f64) / (total as f64) < tau {
            break;
        }
        covered = next_covered;
        end = b.end;
    }
    TemporalInterval::from_snippets(seed.start, end)
}

/// The deduplicated union of grouped proposals over the `(gamma, tau)` grid
/// `{step, 2*step, ...} < 1`, each scored by its mean actionness. This is
/// the candidate set fed to NMS by [`generate_proposals`].
pub fn generate_candidates(
    a: &ActionnessSequence,
    step: f64,
) -> Result<Vec<(TemporalInterval, f64)>> {
    if !(0.0 < step && step < 1.0) {
        return Err(SsnError::InvalidConfig(format!(
            "grid step must lie in (0, 1), got {step}"
        )));
    }
    let levels = ((1.0 - 1e-9) / step).floor() as usize;
    let grid: Vec<f64> = (1..=levels).map(|k| k as f64 * step).collect();

    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut candidates = Vec::new();
    for &gamma in &grid {
        let basins = flood_basins(a, gamma);
        for &tau in &grid {
            for seed in 0..basins.len() {
                let group = group_from_seed(&basins, seed, tau);
                let key = (group.start() as usize, group.end() as usize);
                if seen.insert(key) {
                    let score = a.mean_over(key.0, key.1);
                    candidates.push((group, score));
                }
            }
        }
    }
    Ok(candidates)
}

/// Full TAG pipeline: grid union, dedup, NMS at IoU 0.95, survivors sorted
/// by score (mean actionness) descending.
pub fn generate_proposals(
    a: &ActionnessSequence,
    step: f64,
) -> Result<Vec<(TemporalInterval, f64)>> {
    let candidates = generate_candidates(a, step)?;
    let intervals: Vec<TemporalInterval> = candidates.iter().map(|(iv, _)| *iv).collect();
    let scores: Vec<f64> = candidates.iter().map(|(_, s)| *s).collect();
    let keep = nms_indices(&intervals, &scores, UNION_NMS_IOU);
    Ok(keep.into_iter().map(|i| candidates[i]).collect())
}

/// A logistic model over snippet features, predicting per-snippet
/// actionness. Stands in for a learned actionness network when only raw
/// features are available.
#[derive(Debug, Clone)]
pub struct ActionnessProbe {
    weights: Vec<f64>,
    bias: f64,
}

impl ActionnessProbe {
    pub fn weights(&self) -> (&[f64], f64) {
        (&self.weights, self.bias)
    }

    pub fn score(&self, features: &[f64]) -> f64 {
        debug_assert_eq!(features.len(), self.weights.len());
        let z: f64 = self
            .weights
            .iter()
            .zip(features)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.bias;
        sigmoid(z)
    }

    pub fn predict(&self, seq: &SnippetSequence) -> Result<ActionnessSequence> {
        if seq.dim() != self.weights.len() {
            return Err(SsnError::DimensionMismatch {
                what: "probe input features".into(),
                expected: self.weights.len(),
                got: seq.dim(),
            });
        }
        ActionnessSequence::new(seq.rows().map(|r| self.score(r)).collect())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Train a logistic-regression actionness probe by seeded SGD over
/// per-snippet binary labels.
pub fn train_actionness_probe(
    seq: &SnippetSequence,
    labels: &[u8],
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<ActionnessProbe> {
    if labels.len() != seq.num_snippets() {
        return Err(SsnError::DimensionMismatch {
            what: "probe labels".into(),
            expected: seq.num_snippets(),
            got: labels.len(),
        });
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(SsnError::InvalidConfig("probe labels must be 0 or 1".into()));
    }
    let mut probe = ActionnessProbe {
        weights: vec![0.0; seq.dim()],
        bias: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..seq.num_snippets()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &t in &order {
            let x = seq.row(t);
            let err = probe.score(x) - labels[t] as f64;
            for (w, xi) in probe.weights.iter_mut().zip(x) {
                *w -= learning_rate * err * xi;
            }
            probe.bias -= learning_rate * err;
        }
    }
    Ok(probe)
}
