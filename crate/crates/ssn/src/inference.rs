//! Detection scoring with reordered head evaluation.
//!
//! All heads are linear and every pyramid region is average pooled, so the
//! weight multiplication commutes with pooling: applying each head's
//! per-slot weight block to every snippet first, then averaging those
//! responses over each proposal's regions, gives the same result as pooling
//! features and multiplying afterwards. The per-snippet responses are
//! computed once per video (cost independent of the proposal count) and
//! stored as prefix sums, so scoring one proposal is a handful of
//! subtractions per region regardless of its span.

use std::collections::BTreeMap;

use crate::error::{Result, SsnError};
use crate::intervals::{augment, nms_indices, snippet_run, TemporalInterval};
use crate::model::{apply_regression, ModelParams};
use crate::sequence::SnippetSequence;
use crate::stpp::{region_layout, stpp_features, PoolMode, Region};

/// One scored, refined proposal.
#[derive(Debug, Clone)]
pub struct Detection {
    pub video_id: String,
    /// Class label in 1..=K.
    pub class: usize,
    pub interval: TemporalInterval,
    /// Joint score: activity probability times completeness probability.
    pub score: f64,
    pub activity: f64,
    pub completeness: f64,
}

/// Per-snippet linear head responses for one video, held as prefix sums
/// along the snippet axis.
///
/// For every global feature slot `j` (starting, course parts, ending) each
/// head contributes the product of its slot-`j` weight block with the
/// snippet feature vector: `K + 1` activity values on course slots, `K`
/// completeness values and `2K` regression values on all slots.
#[derive(Debug)]
pub struct SnippetResponses {
    num_snippets: usize,
    num_classes: usize,
    num_slots: usize,
    course_slots: usize,
    /// `(T+1) x course_slots x (K+1)` prefix sums.
    cum_act: Vec<f64>,
    /// `(T+1) x num_slots x K` prefix sums.
    cum_comp: Vec<f64>,
    /// `(T+1) x num_slots x 2K` prefix sums.
    cum_reg: Vec<f64>,
}

impl SnippetResponses {
    pub fn num_snippets(&self) -> usize {
        self.num_snippets
    }

    fn act_width(&self) -> usize {
        self.course_slots * (self.num_classes + 1)
    }

    fn comp_width(&self) -> usize {
        self.num_slots * self.num_classes
    }

    fn reg_width(&self) -> usize {
        self.num_slots * 2 * self.num_classes
    }

    /// Mean response over the snippet run `[t0, t1)`; `stride` selects the
    /// per-snippet width of the addressed table.
    fn mean(cum: &[f64], stride: usize, offset: usize, t0: usize, t1: usize) -> f64 {
        let sum = cum[t1 * stride + offset] - cum[t0 * stride + offset];
        sum / (t1 - t0) as f64
    }
}

/// Multiply every head weight block with every snippet feature once.
/// Requires average pooling; max pooling does not commute with the linear
/// heads, so those models must take the pool-then-multiply path.
pub fn compute_snippet_responses(
    seq: &SnippetSequence,
    params: &ModelParams,
) -> Result<SnippetResponses> {
    if seq.dim() != params.snippet_dim() {
        return Err(SsnError::DimensionMismatch {
            what: "snippet features for model".into(),
            expected: params.snippet_dim(),
            got: seq.dim(),
        });
    }
    if params.pyramid().pool != PoolMode::Average {
        return Err(SsnError::InvalidConfig(
            "reordered inference requires average pooling".into(),
        ));
    }
    let t_len = seq.num_snippets();
    let k = params.num_classes();
    let d = params.snippet_dim();
    let course_slots = params.pyramid().course_regions();
    let num_slots = params.pyramid().num_regions();

    let mut resp = SnippetResponses {
        num_snippets: t_len,
        num_classes: k,
        num_slots,
        course_slots,
        cum_act: vec![0.0; (t_len + 1) * course_slots * (k + 1)],
        cum_comp: vec![0.0; (t_len + 1) * num_slots * k],
        cum_reg: vec![0.0; (t_len + 1) * num_slots * 2 * k],
    };
    let aw = resp.act_width();
    let cw = resp.comp_width();
    let rw = resp.reg_width();

    for t in 0..t_len {
        let v = seq.row(t);
        // activity blocks live in course-feature columns
        for jc in 0..course_slots {
            for j in 0..=k {
                let w = &params.act_row(j)[jc * d..(jc + 1) * d];
                let r: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
                let idx = jc * (k + 1) + j;
                resp.cum_act[(t + 1) * aw + idx] = resp.cum_act[t * aw + idx] + r;
            }
        }
        // completeness and regression blocks span every global slot
        for js in 0..num_slots {
            for class in 1..=k {
                let w = &params.comp_row(class)[js * d..(js + 1) * d];
                let r: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
                let idx = js * k + (class - 1);
                resp.cum_comp[(t + 1) * cw + idx] = resp.cum_comp[t * cw + idx] + r;
                for m in 0..2 {
                    let w = &params.reg_row(class, m)[js * d..(js + 1) * d];
                    let r: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
                    let idx = (js * k + (class - 1)) * 2 + m;
                    resp.cum_reg[(t + 1) * rw + idx] = resp.cum_reg[t * rw + idx] + r;
                }
            }
        }
    }
    Ok(resp)
}

fn stable_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn build_detection(
    video_id: &str,
    p: &TemporalInterval,
    video_len: f64,
    act: &[f64],
    comp: &[f64],
    reg: &[(f64, f64)],
) -> Detection {
    let k = comp.len();
    let mut best = 1usize;
    let mut best_score = f64::NEG_INFINITY;
    for class in 1..=k {
        let joint = act[class] * comp[class - 1];
        if joint > best_score {
            best_score = joint;
            best = class;
        }
    }
    let refined = apply_regression(p, reg[best - 1])
        .ok()
        .and_then(|iv| TemporalInterval::new(iv.start().max(0.0), iv.end().min(video_len)).ok())
        .unwrap_or(*p);
    Detection {
        video_id: video_id.to_string(),
        class: best,
        interval: refined,
        score: best_score,
        activity: act[best],
        completeness: comp[best - 1],
    }
}

/// Score proposals against precomputed responses: average the per-snippet
/// responses over each pyramid region, add biases, and combine the heads.
/// Emits one detection per proposal (argmax class, refined interval).
pub fn score_proposals(
    responses: &SnippetResponses,
    proposals: &[TemporalInterval],
    params: &ModelParams,
    video_id: &str,
) -> Result<Vec<Detection>> {
    let t_len = responses.num_snippets;
    let k = params.num_classes();
    let video_len = t_len as f64;
    let aw = responses.act_width();
    let cw = responses.comp_width();
    let rw = responses.reg_width();

    let mut detections = Vec::with_capacity(proposals.len());
    for p in proposals {
        let ap = augment(p, video_len)?;
        let layout: Vec<Region> = region_layout(params.pyramid(), &ap);
        let mut logits = params.b_act.clone();
        let mut comp_z: Vec<f64> = params.b_comp.clone();
        let mut reg_out: Vec<(f64, f64)> = (0..k)
            .map(|i| (params.b_reg[i * 2], params.b_reg[i * 2 + 1]))
            .collect();

        let mut course_idx = 0usize;
        for (js, region) in layout.iter().enumerate() {
            let run = snippet_run(region.start, region.end, t_len);
            if matches!(region.stage, crate::stpp::Stage::Course) {
                for (j, logit) in logits.iter_mut().enumerate() {
                    *logit += SnippetResponses::mean(
                        &responses.cum_act,
                        aw,
                        course_idx * (k + 1) + j,
                        run.start,
                        run.end,
                    );
                }
                course_idx += 1;
            }
            for class in 1..=k {
                comp_z[class - 1] += SnippetResponses::mean(
                    &responses.cum_comp,
                    cw,
                    js * k + (class - 1),
                    run.start,
                    run.end,
                );
                let base = (js * k + (class - 1)) * 2;
                reg_out[class - 1].0 += SnippetResponses::mean(
                    &responses.cum_reg,
                    rw,
                    base,
                    run.start,
                    run.end,
                );
                reg_out[class - 1].1 += SnippetResponses::mean(
                    &responses.cum_reg,
                    rw,
                    base + 1,
                    run.start,
                    run.end,
                );
            }
        }
        let act = stable_softmax(&logits);
        let comp: Vec<f64> = comp_z.iter().map(|&z| sigmoid(z)).collect();
        detections.push(build_detection(video_id, p, video_len, &act, &comp, &reg_out));
    }
    Ok(detections)
}

/// Pool-then-multiply reference path: dense pyramid features through the
/// model forward passes. Exercised by the `--naive` CLI flag and used as
/// the oracle for the reordered path; also the only path valid for
/// max-pooling models.
pub fn score_proposals_naive(
    seq: &SnippetSequence,
    proposals: &[TemporalInterval],
    params: &ModelParams,
    video_id: &str,
) -> Result<Vec<Detection>> {
    let video_len = seq.num_snippets() as f64;
    let k = params.num_classes();
    let mut detections = Vec::with_capacity(proposals.len());
    for p in proposals {
        let ap = augment(p, video_len)?;
        let feats = stpp_features(seq, &ap, params.pyramid(), None);
        let act = params.activity_forward(&feats.f_c)?;
        let global = feats.global();
        let mut comp = Vec::with_capacity(k);
        let mut reg = Vec::with_capacity(k);
        for class in 1..=k {
            comp.push(params.completeness_forward(&global, class)?);
            reg.push(params.regression_output(&global, class)?);
        }
        detections.push(build_detection(video_id, p, video_len, &act, &comp, &reg));
    }
    Ok(detections)
}

#[derive(Debug, Clone, Copy)]
pub struct PostprocessConfig {
    pub score_threshold: f64,
    pub nms_iou: f64,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.01,
            nms_iou: 0.6,
        }
    }
}

/// Score filtering followed by per-video, per-class NMS; survivors sorted
/// by score descending (ties by video, class, start).
pub fn postprocess(detections: Vec<Detection>, cfg: &PostprocessConfig) -> Vec<Detection> {
    let mut groups: BTreeMap<(String, usize), Vec<Detection>> = BTreeMap::new();
    for det in detections {
        if det.score >= cfg.score_threshold {
            groups
                .entry((det.video_id.clone(), det.class))
                .or_default()
                .push(det);
        }
    }
    let mut out = Vec::new();
    for (_, group) in groups {
        let intervals: Vec<TemporalInterval> = group.iter().map(|d| d.interval).collect();
        let scores: Vec<f64> = group.iter().map(|d| d.score).collect();
        for idx in nms_indices(&intervals, &scores, cfg.nms_iou) {
            out.push(group[idx].clone());
        }
    }
    out.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.video_id.cmp(&b.video_id))
            .then(a.class.cmp(&b.class))
            .then_with(|| {
                a.interval
                    .start()
                    .partial_cmp(&b.interval.start())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stpp::PyramidConfig;
    use rand::prelude::*;

    fn iv(s: f64, e: f64) -> TemporalInterval {
        TemporalInterval::new(s, e).unwrap()
    }

    fn random_model(rng: &mut impl Rng, k: usize, d: usize) -> ModelParams {
        let pyramid = PyramidConfig::default();
        let mut params = ModelParams::zeros(k, d, pyramid, 1.0).unwrap();
        let flat: Vec<f64> = params
            .flat_params()
            .iter()
            .map(|_| rng.random_range(-0.5..0.5))
            .collect();
        params.set_flat_params(&flat).unwrap();
        params
    }

    fn random_seq(rng: &mut impl Rng, t: usize, d: usize) -> SnippetSequence {
        let data: Vec<f64> = (0..t * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        SnippetSequence::new(data, t, d).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_responses() {
        let params = ModelParams::zeros(2, 3, PyramidConfig::default(), 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let seq = random_seq(&mut rng, 40, 3);
        let resp = compute_snippet_responses(&seq, &params).unwrap();
        assert!(resp.cum_act.iter().all(|&x| x == 0.0));
        assert!(resp.cum_comp.iter().all(|&x| x == 0.0));
        assert!(resp.cum_reg.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn responses_linear_in_features() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let params = random_model(&mut rng, 2, 3);
        let t = 30;
        let data: Vec<f64> = (0..t * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let doubled: Vec<f64> = data.iter().map(|v| 2.0 * v).collect();
        let seq = SnippetSequence::new(data, t, 3).unwrap();
        let seq2 = SnippetSequence::new(doubled, t, 3).unwrap();
        let r1 = compute_snippet_responses(&seq, &params).unwrap();
        let r2 = compute_snippet_responses(&seq2, &params).unwrap();
        for (a, b) in r1.cum_act.iter().zip(&r2.cum_act) {
            assert!((2.0 * a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn reordered_matches_naive_path() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let t = rng.random_range(60..160);
            let d = rng.random_range(2..6);
            let k = rng.random_range(1..4);
            let params = random_model(&mut rng, k, d);
            let seq = random_seq(&mut rng, t, d);
            let proposals: Vec<TemporalInterval> = (0..20)
                .map(|_| {
                    let s = rng.random_range(0.0..(t as f64) * 0.7);
                    let dur = rng.random_range(2.0..(t as f64 - s));
                    iv(s, s + dur)
                })
                .collect();
            let resp = compute_snippet_responses(&seq, &params).unwrap();
            let fast = score_proposals(&resp, &proposals, &params, "v").unwrap();
            let slow = score_proposals_naive(&seq, &proposals, &params, "v").unwrap();
            for (a, b) in fast.iter().zip(&slow) {
                assert_eq!(a.class, b.class);
                let tol = 1e-5 * a.score.abs().max(b.score.abs()).max(1.0);
                assert!((a.score - b.score).abs() <= tol, "{} vs {}", a.score, b.score);
                assert!((a.interval.start() - b.interval.start()).abs() <= 1e-5);
                assert!((a.interval.end() - b.interval.end()).abs() <= 1e-5);
                // refined intervals are clamped into the video and scores
                // are proper probabilities
                assert!(a.interval.start() >= 0.0 && a.interval.end() <= t as f64);
                assert!((0.0..=1.0).contains(&a.score));
            }
        }
    }

    #[test]
    fn scores_do_not_depend_on_proposal_order() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let params = random_model(&mut rng, 2, 4);
        let seq = random_seq(&mut rng, 80, 4);
        let proposals: Vec<TemporalInterval> = (0..15)
            .map(|_| {
                let s = rng.random_range(0.0..60.0);
                iv(s, s + rng.random_range(2.0..19.0))
            })
            .collect();
        let mut reversed = proposals.clone();
        reversed.reverse();
        let resp = compute_snippet_responses(&seq, &params).unwrap();
        let fwd = score_proposals(&resp, &proposals, &params, "v").unwrap();
        let bwd = score_proposals(&resp, &reversed, &params, "v").unwrap();
        for (a, b) in fwd.iter().zip(bwd.iter().rev()) {
            assert_eq!(a.score, b.score);
            assert_eq!(a.class, b.class);
            assert_eq!(a.interval, b.interval);
        }
    }

    #[test]
    fn empty_proposals_and_max_pool_guard() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let params = random_model(&mut rng, 2, 3);
        let seq = random_seq(&mut rng, 20, 3);
        let resp = compute_snippet_responses(&seq, &params).unwrap();
        assert!(score_proposals(&resp, &[], &params, "v").unwrap().is_empty());

        let pyramid = PyramidConfig::new(vec![1, 2], true, PoolMode::Max).unwrap();
        let max_params = ModelParams::zeros(2, 3, pyramid, 1.0).unwrap();
        assert!(compute_snippet_responses(&seq, &max_params).is_err());
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

    #[test]
    fn postprocess_identity_and_duplicate_suppression() {
        let dets = vec![
            det("v", 1, 0.0, 10.0, 0.9),
            det("v", 1, 20.0, 30.0, 0.5),
            det("v", 2, 0.0, 10.0, 0.7),
        ];
        let identity = postprocess(
            dets.clone(),
            &PostprocessConfig {
                score_threshold: 0.0,
                nms_iou: 1.0,
            },
        );
        assert_eq!(identity.len(), 3);

        let mut with_dup = dets.clone();
        with_dup.push(det("v", 1, 0.0, 10.0, 0.8));
        let out = postprocess(with_dup, &PostprocessConfig::default());
        let class1: Vec<_> = out
            .iter()
            .filter(|d| d.class == 1 && d.interval.start() == 0.0)
            .collect();
        assert_eq!(class1.len(), 1);
        assert_eq!(class1[0].score, 0.9);
    }

    #[test]
    fn postprocess_matches_per_group_nms_reference() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let dets: Vec<Detection> = (0..60)
            .map(|_| {
                let s = rng.random_range(0.0..50.0);
                det(
                    if rng.random_bool(0.5) { "a" } else { "b" },
                    rng.random_range(1..3),
                    s,
                    s + rng.random_range(1.0..15.0),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect();
        let cfg = PostprocessConfig {
            score_threshold: 0.1,
            nms_iou: 0.4,
        };
        let out = postprocess(dets.clone(), &cfg);
        // every survivor beats the threshold and survivors of one group are
        // pairwise under the NMS IoU
        assert!(out.iter().all(|d| d.score >= cfg.score_threshold));
        for (i, a) in out.iter().enumerate() {
            for b in &out[i + 1..] {
                if a.video_id == b.video_id && a.class == b.class {
                    assert!(crate::intervals::iou(&a.interval, &b.interval) <= cfg.nms_iou);
                }
            }
        }
        // and nothing above the threshold disappears without a suppressor
        for d in dets.iter().filter(|d| d.score >= cfg.score_threshold) {
            let survived = out.iter().any(|o| {
                o.video_id == d.video_id
                    && o.class == d.class
                    && o.interval == d.interval
                    && o.score == d.score
            });
            if !survived {
                assert!(out.iter().any(|o| {
                    o.video_id == d.video_id
                        && o.class == d.class
                        && o.score >= d.score
                        && crate::intervals::iou(&o.interval, &d.interval) > cfg.nms_iou
                }));
            }
        }
    }
}
