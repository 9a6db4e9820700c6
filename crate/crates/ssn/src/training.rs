//! Proposal labeling and the multi-task training loop.
//!
//! Proposals are assigned one of three sample types against the ground
//! truth: positive (IoU >= 0.7 with some instance), background (no overlap
//! with any instance), or incomplete (at least 80% of the proposal's own
//! span inside an instance but IoU with it below 0.3); everything else is
//! discarded. Minibatches keep the three types at a 1:1:6 ratio, and the
//! completeness term backpropagates only through the highest-loss sixth of
//! each minibatch. Optimization is plain SGD with momentum, deterministic
//! under a fixed seed.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SsnError};
use crate::intervals::{augment, iou, AugmentedProposal, GroundTruthInstance, TemporalInterval};
use crate::model::{regression_targets, ModelGrads, ModelParams, ProposalSample};
use crate::sequence::VideoData;
use crate::stpp::{sparse_sample, sparse_sample_center, stpp_features, PyramidConfig};

/// Thresholds of the three sample-type criteria.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AssignmentRule {
    pub pos_iou: f64,
    pub incomplete_containment: f64,
    pub incomplete_iou_max: f64,
    /// Maximum IoU with any instance for a proposal to count as background.
    pub background_iou_eps: f64,
}

impl Default for AssignmentRule {
    fn default() -> Self {
        Self {
            pos_iou: 0.7,
            incomplete_containment: 0.8,
            incomplete_iou_max: 0.3,
            background_iou_eps: 0.0,
        }
    }
}

/// Outcome of label assignment for one proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AssignedLabel {
    Positive {
        class: usize,
        gt: TemporalInterval,
    },
    Background,
    Incomplete {
        class: usize,
    },
}

/// Assign a sample type to a proposal, or `None` to discard it. Positives
/// match the maximum-IoU instance; the incomplete check picks the instance
/// covering the largest fraction of the proposal's own span.
pub fn assign_label(
    p: &TemporalInterval,
    gts: &[GroundTruthInstance],
    rule: &AssignmentRule,
) -> Option<AssignedLabel> {
    let mut best_iou = 0.0;
    let mut best: Option<&GroundTruthInstance> = None;
    for gt in gts {
        let o = iou(p, &gt.interval);
        if o > best_iou || best.is_none() {
            best_iou = o;
            best = Some(gt);
        }
    }
    if let Some(gt) = best {
        if best_iou >= rule.pos_iou {
            return Some(AssignedLabel::Positive {
                class: gt.class,
                gt: gt.interval,
            });
        }
    }
    if best_iou <= rule.background_iou_eps {
        return Some(AssignedLabel::Background);
    }
    let mut best_cov = 0.0;
    let mut incomplete_class = None;
    for gt in gts {
        let cov = p.coverage_by(&gt.interval);
        if cov >= rule.incomplete_containment
            && iou(p, &gt.interval) < rule.incomplete_iou_max
            && cov > best_cov
        {
            best_cov = cov;
            incomplete_class = Some(gt.class);
        }
    }
    incomplete_class.map(|class| AssignedLabel::Incomplete { class })
}

/// A labeled proposal waiting for per-epoch feature extraction.
#[derive(Debug, Clone)]
pub struct AssignedProposal {
    pub video_index: usize,
    pub augmented: AugmentedProposal,
    pub label: AssignedLabel,
    /// Stable ordinal used to derive per-epoch sampling seeds.
    pub ordinal: usize,
}

/// The three sample pools produced by assignment.
#[derive(Debug, Default)]
pub struct SamplePools {
    pub positive: Vec<AssignedProposal>,
    pub background: Vec<AssignedProposal>,
    pub incomplete: Vec<AssignedProposal>,
}

impl SamplePools {
    pub fn total(&self) -> usize {
        self.positive.len() + self.background.len() + self.incomplete.len()
    }

    fn pool(&self, kind: PoolKind) -> &[AssignedProposal] {
        match kind {
            PoolKind::Positive => &self.positive,
            PoolKind::Background => &self.background,
            PoolKind::Incomplete => &self.incomplete,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PoolKind {
    Positive,
    Background,
    Incomplete,
}

/// Run label assignment over every proposal of every video.
pub fn build_pools(
    dataset: &[VideoData],
    proposals: &BTreeMap<String, Vec<TemporalInterval>>,
    rule: &AssignmentRule,
) -> Result<SamplePools> {
    let mut pools = SamplePools::default();
    let mut ordinal = 0;
    for (video_index, video) in dataset.iter().enumerate() {
        let Some(video_props) = proposals.get(&video.id) else {
            continue;
        };
        let video_length = video.seq.num_snippets() as f64;
        for p in video_props {
            let Some(label) = assign_label(p, &video.instances, rule) else {
                continue;
            };
            let assigned = AssignedProposal {
                video_index,
                augmented: augment(p, video_length)?,
                label,
                ordinal,
            };
            ordinal += 1;
            match label {
                AssignedLabel::Positive { .. } => pools.positive.push(assigned),
                AssignedLabel::Background => pools.background.push(assigned),
                AssignedLabel::Incomplete { .. } => pools.incomplete.push(assigned),
            }
        }
    }
    Ok(pools)
}

/// Snippet selection for training-time feature extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    /// One random snippet per segment, reseeded every epoch.
    Random,
    /// The deterministic middle snippet of each segment.
    Center,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct LrDecay {
    pub factor: f64,
    pub every_epochs: usize,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub num_classes: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub learning_rate: f64,
    /// positive : background : incomplete parts per minibatch.
    pub ratio: (usize, usize, usize),
    /// Fraction of the minibatch whose completeness losses keep gradients.
    pub ohem_fraction: f64,
    pub epochs: usize,
    pub seed: u64,
    pub lambda: f64,
    pub pyramid: PyramidConfig,
    pub sample_mode: SampleMode,
    pub lr_decay: Option<LrDecay>,
    pub assignment: AssignmentRule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_classes: 1,
            batch_size: 128,
            momentum: 0.9,
            learning_rate: 0.1,
            ratio: (1, 1, 6),
            ohem_fraction: 1.0 / 6.0,
            epochs: 20,
            seed: 0,
            lambda: 1.0,
            pyramid: PyramidConfig::default(),
            sample_mode: SampleMode::Random,
            lr_decay: None,
            assignment: AssignmentRule::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let parts = self.ratio.0 + self.ratio.1 + self.ratio.2;
        if parts == 0 || self.ratio.0 == 0 || self.ratio.1 == 0 || self.ratio.2 == 0 {
            return Err(SsnError::InvalidConfig(
                "every minibatch ratio part must be positive".into(),
            ));
        }
        if self.batch_size == 0 || !self.batch_size.is_multiple_of(parts) {
            return Err(SsnError::InvalidConfig(format!(
                "batch size {} is not a multiple of the ratio parts {}",
                self.batch_size, parts
            )));
        }
        if !(self.ohem_fraction > 0.0 && self.ohem_fraction <= 1.0) {
            return Err(SsnError::InvalidConfig(
                "ohem fraction must lie in (0, 1]".into(),
            ));
        }
        if self.num_classes == 0 {
            return Err(SsnError::InvalidConfig("need at least one class".into()));
        }
        Ok(())
    }

    /// Per-type sample counts for one minibatch.
    pub fn type_quotas(&self) -> (usize, usize, usize) {
        let unit = self.batch_size / (self.ratio.0 + self.ratio.1 + self.ratio.2);
        (
            unit * self.ratio.0,
            unit * self.ratio.1,
            unit * self.ratio.2,
        )
    }

    /// Number of minibatch samples retained by completeness OHEM.
    pub fn ohem_count(&self) -> usize {
        ((self.batch_size as f64) * self.ohem_fraction).ceil() as usize
    }
}

/// Draw a ratio-respecting minibatch: positives, then backgrounds, then
/// incompletes; a pool smaller than its quota is sampled with replacement.
fn sample_minibatch<'a>(
    pools: &'a SamplePools,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<&'a AssignedProposal>> {
    let quotas = cfg.type_quotas();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for (kind, quota, name) in [
        (PoolKind::Positive, quotas.0, "positive"),
        (PoolKind::Background, quotas.1, "background"),
        (PoolKind::Incomplete, quotas.2, "incomplete"),
    ] {
        let pool = pools.pool(kind);
        if pool.is_empty() {
            return Err(SsnError::EmptyPool { kind: name });
        }
        if pool.len() >= quota {
            for i in rand::seq::index::sample(rng, pool.len(), quota) {
                batch.push(&pool[i]);
            }
        } else {
            for _ in 0..quota {
                batch.push(&pool[rng.random_range(0..pool.len())]);
            }
        }
    }
    Ok(batch)
}

/// Indices of the `keep` largest completeness losses, ranked with stable
/// ties (earlier batch position wins).
pub fn ohem_retained(completeness_losses: &[f64], keep: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..completeness_losses.len()).collect();
    order.sort_by(|&i, &j| {
        completeness_losses[j]
            .partial_cmp(&completeness_losses[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    order.truncate(keep);
    order
}

/// One SGD step: `v = momentum * v + g`, `w -= lr * v`.
pub fn sgd_step(params: &mut ModelParams, velocity: &mut ModelGrads, grads: &ModelGrads, lr: f64, momentum: f64) {
    let blocks = [
        (&mut params.w_act, &mut velocity.w_act, &grads.w_act),
        (&mut params.b_act, &mut velocity.b_act, &grads.b_act),
        (&mut params.w_comp, &mut velocity.w_comp, &grads.w_comp),
        (&mut params.b_comp, &mut velocity.b_comp, &grads.b_comp),
        (&mut params.w_reg, &mut velocity.w_reg, &grads.w_reg),
        (&mut params.b_reg, &mut velocity.b_reg, &grads.b_reg),
    ];
    for (w, v, g) in blocks {
        for ((wi, vi), gi) in w.iter_mut().zip(v.iter_mut()).zip(g) {
            *vi = momentum * *vi + gi;
            *wi -= lr * *vi;
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TrainLog {
    pub seed: u64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub epoch_loss: Vec<f64>,
    pub final_loss: f64,
}

fn mix_seed(epoch_seed: u64, ordinal: usize) -> u64 {
    epoch_seed ^ (ordinal as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn sample_features(
    dataset: &[VideoData],
    assigned: &AssignedProposal,
    cfg: &TrainConfig,
    epoch_seed: u64,
) -> ProposalSample {
    let video = &dataset[assigned.video_index];
    let subset = match cfg.sample_mode {
        SampleMode::Random => sparse_sample(
            &assigned.augmented,
            video.seq.num_snippets(),
            mix_seed(epoch_seed, assigned.ordinal),
        ),
        SampleMode::Center => {
            sparse_sample_center(&assigned.augmented, video.seq.num_snippets())
        }
    };
    let features = stpp_features(&video.seq, &assigned.augmented, &cfg.pyramid, Some(&subset));
    match assigned.label {
        AssignedLabel::Positive { class, gt } => {
            let targets = regression_targets(&assigned.augmented.original(), &gt);
            ProposalSample::positive(features, class, targets).expect("class >= 1")
        }
        AssignedLabel::Background => ProposalSample::background(features),
        AssignedLabel::Incomplete { class } => {
            ProposalSample::incomplete(features, class).expect("class >= 1")
        }
    }
}

/// Train the detection heads over assigned proposals.
///
/// The optimized objective per minibatch is the mean activity loss, plus
/// the mean of the completeness losses surviving OHEM, plus `lambda` times
/// the mean regression loss of the positives (all normalized by the batch
/// size). Aborts with a diagnostic when the loss stops being finite.
pub fn train(
    dataset: &[VideoData],
    proposals: &BTreeMap<String, Vec<TemporalInterval>>,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainLog)> {
    cfg.validate()?;
    let dim = dataset
        .first()
        .map(|v| v.seq.dim())
        .ok_or_else(|| SsnError::InvalidConfig("dataset is empty".into()))?;
    for video in dataset {
        if video.seq.dim() != dim {
            return Err(SsnError::DimensionMismatch {
                what: format!("feature dimension of video '{}'", video.id),
                expected: dim,
                got: video.seq.dim(),
            });
        }
        for gt in &video.instances {
            if gt.class > cfg.num_classes {
                return Err(SsnError::InvalidConfig(format!(
                    "video '{}' has class label {} but the model has {} classes",
                    video.id, gt.class, cfg.num_classes
                )));
            }
        }
    }

    let pools = build_pools(dataset, proposals, &cfg.assignment)?;
    for (pool, name) in [
        (&pools.positive, "positive"),
        (&pools.background, "background"),
        (&pools.incomplete, "incomplete"),
    ] {
        if pool.is_empty() {
            return Err(SsnError::EmptyPool { kind: name });
        }
    }

    let mut params = ModelParams::zeros(cfg.num_classes, dim, cfg.pyramid.clone(), cfg.lambda)?;
    let mut velocity = ModelGrads::zeros_like(&params);
    let mut grads = ModelGrads::zeros_like(&params);
    let steps_per_epoch = pools.total().div_ceil(cfg.batch_size).max(1);
    let ohem_keep = cfg.ohem_count();
    let inv_b = 1.0 / cfg.batch_size as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut step_counter = 0usize;

    for epoch in 0..cfg.epochs {
        let lr = match cfg.lr_decay {
            Some(decay) if decay.every_epochs > 0 => {
                cfg.learning_rate * decay.factor.powi((epoch / decay.every_epochs) as i32)
            }
            _ => cfg.learning_rate,
        };
        let epoch_seed: u64 = rng.random();
        let mut epoch_total = 0.0;
        for _ in 0..steps_per_epoch {
            let batch = sample_minibatch(&pools, cfg, &mut rng)?;
            let samples: Vec<ProposalSample> = batch
                .iter()
                .map(|a| sample_features(dataset, a, cfg, epoch_seed))
                .collect();
            let terms: Vec<_> = samples
                .iter()
                .map(|s| params.loss_terms(s))
                .collect::<Result<_>>()?;

            let comp_losses: Vec<f64> =
                terms.iter().map(|t| t.completeness.unwrap_or(0.0)).collect();
            let retained = ohem_retained(&comp_losses, ohem_keep);
            let mut comp_mask = vec![false; samples.len()];
            for &i in &retained {
                comp_mask[i] = true;
            }

            grads.reset();
            let mut batch_loss = 0.0;
            for (i, (sample, term)) in samples.iter().zip(&terms).enumerate() {
                batch_loss += term.activity;
                grads.add_activity(&params, &sample.features.f_c, sample.class, inv_b)?;
                let global = sample.features.global();
                if let (Some(bit), Some(comp)) = (sample.completeness_bit(), term.completeness) {
                    if comp_mask[i] {
                        batch_loss += comp;
                        grads.add_completeness(&params, &global, sample.class, bit, inv_b)?;
                    }
                }
                if let (Some(t), Some(reg)) = (sample.reg_targets, term.regression) {
                    batch_loss += cfg.lambda * reg;
                    grads.add_regression(&params, &global, sample.class, t, cfg.lambda * inv_b)?;
                }
            }
            batch_loss *= inv_b;
            step_counter += 1;
            if !batch_loss.is_finite() {
                return Err(SsnError::Diverged {
                    step: step_counter,
                    loss: batch_loss,
                });
            }
            sgd_step(&mut params, &mut velocity, &grads, lr, cfg.momentum);
            epoch_total += batch_loss;
        }
        epoch_loss.push(epoch_total / steps_per_epoch as f64);
    }

    let final_loss = epoch_loss.last().copied().unwrap_or(f64::NAN);
    Ok((
        params,
        TrainLog {
            seed: cfg.seed,
            epochs: cfg.epochs,
            steps_per_epoch,
            batch_size: cfg.batch_size,
            epoch_loss,
            final_loss,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::SnippetSequence;
    use crate::stpp::{PoolMode, StageFeatures};
    use proptest::prelude::*;

    fn iv(s: f64, e: f64) -> TemporalInterval {
        TemporalInterval::new(s, e).unwrap()
    }

    fn gt(s: f64, e: f64, class: usize) -> GroundTruthInstance {
        GroundTruthInstance::new("v", iv(s, e), class).unwrap()
    }

    #[test]
    fn assignment_hand_cases() {
        let rule = AssignmentRule::default();
        let gts = vec![gt(10.0, 20.0, 3)];
        assert_eq!(
            assign_label(&iv(10.0, 20.0), &gts, &rule),
            Some(AssignedLabel::Positive {
                class: 3,
                gt: iv(10.0, 20.0)
            })
        );

        let gts = vec![gt(0.0, 20.0, 1)];
        assert_eq!(
            assign_label(&iv(50.0, 60.0), &gts, &rule),
            Some(AssignedLabel::Background)
        );

        let gts = vec![gt(0.0, 40.0, 2)];
        assert_eq!(
            assign_label(&iv(10.0, 14.0), &gts, &rule),
            Some(AssignedLabel::Incomplete { class: 2 })
        );

        // moderate overlap matches nothing and is discarded
        let gts = vec![gt(0.0, 20.0, 1)];
        assert_eq!(assign_label(&iv(10.0, 30.0), &gts, &rule), None);
    }

    proptest! {
        /// With disjoint instances the three criteria never overlap, so the
        /// assignment is a function of the thresholds alone.
        #[test]
        fn assignment_exclusive_on_disjoint_instances(seed in 0u64..300) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut gts = Vec::new();
            let mut pos = 0.0;
            for c in 1..=3usize {
                pos += rng.random_range(5.0..15.0);
                let end = pos + rng.random_range(5.0..20.0);
                gts.push(gt(pos, end, c));
                pos = end;
            }
            let rule = AssignmentRule::default();
            for _ in 0..50 {
                let s = rng.random_range(0.0..70.0);
                let p = iv(s, s + rng.random_range(1.0..30.0));
                let pos_fires = gts.iter().any(|g| iou(&p, &g.interval) >= rule.pos_iou);
                let bg_fires = gts.iter().all(|g| iou(&p, &g.interval) <= rule.background_iou_eps);
                let inc_fires = gts.iter().any(|g| {
                    p.coverage_by(&g.interval) >= rule.incomplete_containment
                        && iou(&p, &g.interval) < rule.incomplete_iou_max
                });
                prop_assert!(
                    [pos_fires, bg_fires, inc_fires].iter().filter(|&&b| b).count() <= 1
                );
                let label = assign_label(&p, &gts, &rule);
                match label {
                    Some(AssignedLabel::Positive { .. }) => prop_assert!(pos_fires),
                    Some(AssignedLabel::Background) => prop_assert!(bg_fires),
                    Some(AssignedLabel::Incomplete { .. }) => prop_assert!(inc_fires),
                    None => prop_assert!(!pos_fires && !bg_fires && !inc_fires),
                }
            }
        }
    }

    fn dummy_pools(np: usize, nb: usize, ni: usize) -> SamplePools {
        let mk = |label: AssignedLabel, ordinal: usize| AssignedProposal {
            video_index: 0,
            augmented: augment(&iv(10.0, 20.0), 100.0).unwrap(),
            label,
            ordinal,
        };
        SamplePools {
            positive: (0..np)
                .map(|i| {
                    mk(
                        AssignedLabel::Positive {
                            class: 1,
                            gt: iv(10.0, 20.0),
                        },
                        i,
                    )
                })
                .collect(),
            background: (0..nb).map(|i| mk(AssignedLabel::Background, np + i)).collect(),
            incomplete: (0..ni)
                .map(|i| mk(AssignedLabel::Incomplete { class: 1 }, np + nb + i))
                .collect(),
        }
    }

    #[test]
    fn minibatch_ratio_counts() {
        let pools = dummy_pools(30, 30, 200);
        let mut cfg = TrainConfig {
            batch_size: 128,
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sample_minibatch(&pools, &cfg, &mut rng).unwrap();
        assert_eq!(batch.len(), 128);
        assert_eq!(cfg.type_quotas(), (16, 16, 96));

        cfg.batch_size = 8;
        assert_eq!(cfg.type_quotas(), (1, 1, 6));
        let batch = sample_minibatch(&pools, &cfg, &mut rng).unwrap();
        assert_eq!(batch.len(), 8);
    }

    #[test]
    fn minibatch_is_seeded_and_errors_on_empty_pool() {
        let pools = dummy_pools(3, 3, 10);
        let cfg = TrainConfig {
            batch_size: 16,
            ..TrainConfig::default()
        };
        let a: Vec<usize> = sample_minibatch(&pools, &cfg, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap()
            .iter()
            .map(|s| s.ordinal)
            .collect();
        let b: Vec<usize> = sample_minibatch(&pools, &cfg, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap()
            .iter()
            .map(|s| s.ordinal)
            .collect();
        assert_eq!(a, b);

        let empty = dummy_pools(3, 0, 10);
        let err = sample_minibatch(&empty, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, SsnError::EmptyPool { kind: "background" }));
    }

    #[test]
    fn ohem_counts_and_ties() {
        let cfg = TrainConfig {
            batch_size: 128,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.ohem_count(), 22);

        let equal = vec![0.5; 128];
        let retained = ohem_retained(&equal, 22);
        assert_eq!(retained, (0..22).collect::<Vec<_>>());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let losses: Vec<f64> = (0..128).map(|_| rng.random_range(0.0..3.0)).collect();
        let retained = ohem_retained(&losses, 22);
        // full-sort reference
        let mut order: Vec<usize> = (0..losses.len()).collect();
        order.sort_by(|&i, &j| losses[j].partial_cmp(&losses[i]).unwrap().then(i.cmp(&j)));
        assert_eq!(retained, order[..22].to_vec());
        let min_kept = retained.iter().map(|&i| losses[i]).fold(f64::INFINITY, f64::min);
        for (i, &l) in losses.iter().enumerate() {
            if !retained.contains(&i) {
                assert!(l <= min_kept);
            }
        }
    }

    #[test]
    fn sgd_step_without_momentum_is_plain_descent() {
        let pyramid = PyramidConfig::new(vec![1], true, PoolMode::Average).unwrap();
        let mut params = ModelParams::zeros(1, 2, pyramid, 1.0).unwrap();
        let before = params.flat_params();
        let mut velocity = ModelGrads::zeros_like(&params);
        let mut grads = ModelGrads::zeros_like(&params);
        let feats = StageFeatures {
            f_s: vec![0.5, -1.0],
            f_c: vec![1.0, 2.0],
            f_e: vec![0.0, 0.25],
        };
        grads
            .add_activity(&params, &feats.f_c, 1, 1.0)
            .unwrap();
        let g = grads.flat();
        sgd_step(&mut params, &mut velocity, &grads, 0.25, 0.0);
        let after = params.flat_params();
        for ((w0, w1), gi) in before.iter().zip(&after).zip(&g) {
            assert_eq!(*w1, w0 - 0.25 * gi);
        }
    }

    /// A three-sample dataset the linear heads can drive to near-zero loss.
    fn tiny_dataset() -> (Vec<VideoData>, BTreeMap<String, Vec<TemporalInterval>>) {
        let t = 60;
        let d = 4;
        let mut data = vec![0.0; t * d];
        // class signature on [20, 40)
        for row in data.chunks_exact_mut(d).take(40).skip(20) {
            row[0] = 1.0;
            row[1] = -0.5;
        }
        let seq = SnippetSequence::new(data, t, d).unwrap();
        let video = VideoData {
            id: "v0".into(),
            seq,
            instances: vec![GroundTruthInstance::new("v0", iv(20.0, 40.0), 1).unwrap()],
        };
        let proposals = BTreeMap::from([(
            "v0".to_string(),
            vec![iv(19.0, 41.0), iv(45.0, 55.0), iv(24.0, 29.0)],
        )]);
        (vec![video], proposals)
    }

    #[test]
    fn zero_lr_and_zero_epochs_leave_params_at_init() {
        let (dataset, proposals) = tiny_dataset();
        let cfg = TrainConfig {
            num_classes: 1,
            batch_size: 8,
            learning_rate: 0.0,
            epochs: 3,
            sample_mode: SampleMode::Center,
            ..TrainConfig::default()
        };
        let (params, _) = train(&dataset, &proposals, &cfg).unwrap();
        assert!(params.flat_params().iter().all(|&w| w == 0.0));

        let cfg = TrainConfig {
            epochs: 0,
            ..cfg
        };
        let (params, log) = train(&dataset, &proposals, &cfg).unwrap();
        assert!(params.flat_params().iter().all(|&w| w == 0.0));
        assert!(log.epoch_loss.is_empty());
    }

    #[test]
    fn overfits_three_samples() {
        let (dataset, proposals) = tiny_dataset();
        let cfg = TrainConfig {
            num_classes: 1,
            batch_size: 8,
            learning_rate: 1.0,
            epochs: 500, // one step per epoch at this pool size
            sample_mode: SampleMode::Center,
            seed: 3,
            ..TrainConfig::default()
        };
        let (_, log) = train(&dataset, &proposals, &cfg).unwrap();
        assert_eq!(log.steps_per_epoch, 1);
        assert!(
            log.final_loss < 0.01,
            "expected overfit, final loss {}",
            log.final_loss
        );
    }

    #[test]
    fn training_is_bit_reproducible() {
        let (dataset, proposals) = tiny_dataset();
        let cfg = TrainConfig {
            num_classes: 1,
            batch_size: 8,
            learning_rate: 0.3,
            epochs: 5,
            seed: 11,
            ..TrainConfig::default()
        };
        let (p1, l1) = train(&dataset, &proposals, &cfg).unwrap();
        let (p2, l2) = train(&dataset, &proposals, &cfg).unwrap();
        assert_eq!(p1.flat_params(), p2.flat_params());
        assert_eq!(l1.epoch_loss, l2.epoch_loss);
    }

    #[test]
    fn divergence_is_reported() {
        let (dataset, proposals) = tiny_dataset();
        let cfg = TrainConfig {
            num_classes: 1,
            batch_size: 8,
            learning_rate: 1e6,
            momentum: 2.0, // velocity doubles every step until overflow
            epochs: 2000,
            seed: 1,
            ..TrainConfig::default()
        };
        match train(&dataset, &proposals, &cfg) {
            Err(SsnError::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn missing_type_pool_is_named() {
        let (dataset, mut proposals) = tiny_dataset();
        proposals.get_mut("v0").unwrap().retain(|p| p.start() != 45.0);
        let cfg = TrainConfig {
            num_classes: 1,
            batch_size: 8,
            ..TrainConfig::default()
        };
        match train(&dataset, &proposals, &cfg) {
            Err(SsnError::EmptyPool { kind }) => assert_eq!(kind, "background"),
            other => panic!("expected empty background pool, got {other:?}"),
        }
    }
}
