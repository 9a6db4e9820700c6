//! Synthetic benchmark videos with planted action instances.
//!
//! Each video is a noise feature matrix; inside every planted instance the
//! class prototype vector is added, and the actionness signal rises there.
//! Short distractor bumps raise actionness over plain-noise features so
//! that proposal generation also yields pure background samples. The
//! generator is fully deterministic under its seed.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::intervals::{GroundTruthInstance, TemporalInterval};
use crate::sequence::{SnippetSequence, VideoData};

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub num_videos: usize,
    pub snippets_per_video: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    /// Standard deviation of the per-dimension feature noise.
    pub noise_sigma: f64,
    pub instances_per_video: (usize, usize),
    /// Instance duration bounds in snippets.
    pub duration_range: (usize, usize),
    pub distractors_per_video: (usize, usize),
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_videos: 200,
            snippets_per_video: 200,
            feature_dim: 16,
            num_classes: 3,
            noise_sigma: 0.3,
            instances_per_video: (1, 3),
            duration_range: (20, 40),
            distractors_per_video: (0, 2),
            seed: 2024,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Magnitude of the class prototype vectors. Chosen so that prototype
/// alignment dominates the chance alignment of a single noise snippet
/// (noise norm is `sigma * sqrt(D)`).
pub const PROTOTYPE_NORM: f64 = 2.0;

/// Class prototype directions of norm [`PROTOTYPE_NORM`], deterministic
/// per seed.
pub fn class_prototypes(num_classes: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0C1A_55E5);
    (0..num_classes)
        .map(|_| {
            let mut v: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
            v.iter_mut().for_each(|x| *x *= PROTOTYPE_NORM / norm);
            v
        })
        .collect()
}

/// Place `count` non-overlapping runs of `dur_range` length with a margin
/// of `gap` snippets, avoiding `occupied`.
fn place_runs(
    rng: &mut ChaCha8Rng,
    t_len: usize,
    count: usize,
    dur_range: (usize, usize),
    gap: usize,
    occupied: &mut Vec<(usize, usize)>,
) -> Vec<(usize, usize)> {
    let mut placed = Vec::new();
    'outer: for _ in 0..count {
        for _attempt in 0..200 {
            let dur = rng.random_range(dur_range.0..=dur_range.1);
            if dur + 2 >= t_len {
                continue;
            }
            let start = rng.random_range(1..t_len - dur);
            let end = start + dur;
            let clashes = occupied
                .iter()
                .any(|&(s, e)| start < e + gap && s < end + gap);
            if !clashes {
                occupied.push((start, end));
                placed.push((start, end));
                continue 'outer;
            }
        }
    }
    placed
}

/// Generate the full benchmark set.
pub fn generate(cfg: &SyntheticConfig) -> Result<Vec<VideoData>> {
    let prototypes = class_prototypes(cfg.num_classes, cfg.feature_dim, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut videos = Vec::with_capacity(cfg.num_videos);
    for v in 0..cfg.num_videos {
        let id = format!("video_{v:04}");
        let t_len = cfg.snippets_per_video;
        let d = cfg.feature_dim;

        let n_inst = rng.random_range(cfg.instances_per_video.0..=cfg.instances_per_video.1);
        let mut occupied = Vec::new();
        let mut instance_runs = place_runs(&mut rng, t_len, n_inst, cfg.duration_range, 8, &mut occupied);
        instance_runs.sort_unstable();
        let classes: Vec<usize> = instance_runs
            .iter()
            .map(|_| rng.random_range(1..=cfg.num_classes))
            .collect();

        let n_distract =
            rng.random_range(cfg.distractors_per_video.0..=cfg.distractors_per_video.1);
        let distractor_runs = place_runs(&mut rng, t_len, n_distract, (5, 12), 4, &mut occupied);

        // base noise everywhere, prototype added inside instances
        let mut features = Vec::with_capacity(t_len * d);
        for _ in 0..t_len * d {
            features.push(cfg.noise_sigma * normal(&mut rng));
        }
        for (&(s, e), &class) in instance_runs.iter().zip(&classes) {
            let proto = &prototypes[class - 1];
            for t in s..e {
                for (x, p) in features[t * d..(t + 1) * d].iter_mut().zip(proto) {
                    *x += p;
                }
            }
        }

        // actionness: high on instances with a slow within-instance dip
        // (bounds how many distinct fragments the flooding grid can cut
        // out), medium on distractors, low elsewhere
        let mut actionness = Vec::with_capacity(t_len);
        for _ in 0..t_len {
            actionness.push((0.05 + 0.04 * normal(&mut rng).abs()).clamp(0.0, 1.0));
        }
        for &(s, e) in &instance_runs {
            let waves = rng.random_range(1..=2) as f64;
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let dur = (e - s) as f64;
            for (i, a) in actionness[s..e].iter_mut().enumerate() {
                let x = (i as f64 + 0.5) / dur;
                let dip = 0.5 * (1.0 + (std::f64::consts::TAU * waves * x + phase).sin());
                *a = (0.92 - 0.10 * dip + 0.015 * normal(&mut rng)).clamp(0.0, 1.0);
            }
        }
        for &(s, e) in &distractor_runs {
            for a in actionness[s..e].iter_mut() {
                *a = (0.45 + 0.06 * normal(&mut rng)).clamp(0.0, 1.0);
            }
        }

        let seq = SnippetSequence::new(features, t_len, d)?.with_actionness(actionness)?;
        let instances = instance_runs
            .iter()
            .zip(&classes)
            .map(|(&(s, e), &class)| {
                GroundTruthInstance::new(
                    &id,
                    TemporalInterval::from_snippets(s, e),
                    class,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        videos.push(VideoData { id, seq, instances });
    }
    Ok(videos)
}
