//! Train the linear actionness probe on snippet features and feed its
//! predictions to proposal generation.
//!
//! ```bash
//! cargo run --release -p ssn --example actionness_probe
//! ```

use std::collections::BTreeMap;

use ssn::evaluation::recall_at_iou;
use ssn::intervals::GroundTruthInstance;
use ssn::synthetic::{generate, SyntheticConfig};
use ssn::tag::{generate_proposals, train_actionness_probe, ActionnessSequence};

fn main() {
    let cfg = SyntheticConfig {
        num_videos: 12,
        ..SyntheticConfig::default()
    };
    let videos = generate(&cfg).unwrap();
    let (probe_video, rest) = videos.split_first().unwrap();

    // per-snippet binary labels: inside any instance vs outside
    let labels: Vec<u8> = (0..probe_video.seq.num_snippets())
        .map(|t| {
            let inside = probe_video.instances.iter().any(|g| {
                g.interval.start() <= t as f64 && (t as f64) < g.interval.end()
            });
            inside as u8
        })
        .collect();
    let probe = train_actionness_probe(&probe_video.seq, &labels, 60, 0.5, 9).unwrap();
    let correct = (0..probe_video.seq.num_snippets())
        .filter(|&t| (probe.score(probe_video.seq.row(t)) > 0.5) == (labels[t] == 1))
        .count();
    println!(
        "probe training accuracy: {:.3}",
        correct as f64 / labels.len() as f64
    );

    // proposals from predicted actionness on unseen videos
    let mut predicted = BTreeMap::new();
    let mut reference = BTreeMap::new();
    for video in rest {
        let scores = probe.predict(&video.seq).unwrap();
        let props = generate_proposals(&scores, 0.05).unwrap();
        predicted.insert(
            video.id.clone(),
            props.into_iter().take(100).map(|(iv, _)| iv).collect::<Vec<_>>(),
        );
        let oracle = ActionnessSequence::new(video.seq.actionness().unwrap().to_vec()).unwrap();
        let props = generate_proposals(&oracle, 0.05).unwrap();
        reference.insert(
            video.id.clone(),
            props.into_iter().take(100).map(|(iv, _)| iv).collect::<Vec<_>>(),
        );
    }
    let gts: Vec<GroundTruthInstance> = rest
        .iter()
        .flat_map(|v| v.instances.iter().cloned())
        .collect();
    println!(
        "proposal recall@0.7 from probe actionness:     {:.3}",
        recall_at_iou(&predicted, &gts, 0.7).unwrap()
    );
    println!(
        "proposal recall@0.7 from reference actionness: {:.3}",
        recall_at_iou(&reference, &gts, 0.7).unwrap()
    );
}
