//! Full in-memory pipeline on the synthetic benchmark: proposals from the
//! actionness signal, head training on 3/4 of the videos, detection and
//! mAP evaluation on the held-out quarter.
//!
//! ```bash
//! cargo run --release -p ssn --example detection_pipeline
//! ```

use std::collections::BTreeMap;

use ssn::evaluation::{mean_ap, recall_at_iou, Interpolation};
use ssn::inference::{compute_snippet_responses, postprocess, score_proposals, PostprocessConfig};
use ssn::intervals::{GroundTruthInstance, TemporalInterval};
use ssn::synthetic::{generate, SyntheticConfig};
use ssn::tag::{generate_proposals, ActionnessSequence};
use ssn::training::{train, SampleMode, TrainConfig};
use ssn::VideoData;

fn tag_proposals_per_video(
    videos: &[VideoData],
    budget: usize,
) -> BTreeMap<String, Vec<TemporalInterval>> {
    let mut out = BTreeMap::new();
    for video in videos {
        let actionness = ActionnessSequence::new(video.seq.actionness().unwrap().to_vec()).unwrap();
        let mut proposals = generate_proposals(&actionness, 0.05).unwrap();
        proposals.truncate(budget);
        out.insert(
            video.id.clone(),
            proposals.into_iter().map(|(iv, _)| iv).collect(),
        );
    }
    out
}

fn main() {
    let cfg = SyntheticConfig {
        num_videos: 60,
        ..SyntheticConfig::default()
    };
    println!(
        "generating {} videos (T={}, D={}, K={})",
        cfg.num_videos, cfg.snippets_per_video, cfg.feature_dim, cfg.num_classes
    );
    let videos = generate(&cfg).unwrap();
    let split = cfg.num_videos * 3 / 4;
    let (train_videos, test_videos) = videos.split_at(split);

    let proposals = tag_proposals_per_video(&videos, 100);
    let all_gts: Vec<GroundTruthInstance> = videos
        .iter()
        .flat_map(|v| v.instances.iter().cloned())
        .collect();
    let recall = recall_at_iou(&proposals, &all_gts, 0.7).unwrap();
    let per_video: f64 =
        proposals.values().map(|p| p.len() as f64).sum::<f64>() / videos.len() as f64;
    println!("proposal recall@0.7 = {recall:.3} with {per_video:.1} proposals/video");

    let train_cfg = TrainConfig {
        num_classes: cfg.num_classes,
        epochs: 30,
        learning_rate: 0.4,
        seed: 7,
        sample_mode: SampleMode::Random,
        ..TrainConfig::default()
    };
    println!("training on {} videos...", train_videos.len());
    let (params, log) = train(train_videos, &proposals, &train_cfg).unwrap();
    println!(
        "trained {} epochs x {} steps, loss {:.4} -> {:.4}",
        log.epochs, log.steps_per_epoch, log.epoch_loss[0], log.final_loss
    );

    let mut detections = Vec::new();
    for video in test_videos {
        let responses = compute_snippet_responses(&video.seq, &params).unwrap();
        let dets =
            score_proposals(&responses, &proposals[&video.id], &params, &video.id).unwrap();
        detections.extend(dets);
    }
    let detections = postprocess(detections, &PostprocessConfig::default());

    let test_gts: Vec<GroundTruthInstance> = test_videos
        .iter()
        .flat_map(|v| v.instances.iter().cloned())
        .collect();
    let report = mean_ap(&detections, &test_gts, &[0.5, 0.75, 0.95], Interpolation::AllPoint)
        .unwrap();
    for (thr, map) in report.thresholds.iter().zip(&report.map_per_threshold) {
        println!("held-out mAP@{thr:.2} = {map:.3}");
    }
    println!("held-out average mAP = {:.3}", report.average_map);
}
