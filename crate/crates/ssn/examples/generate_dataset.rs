//! Write a synthetic dataset to disk in the formats the `ssn` binary
//! consumes: binary feature/actionness files plus a JSON manifest.
//!
//! ```bash
//! cargo run --release -p ssn --example generate_dataset -- /tmp/ssn-demo
//! ssn propose --manifest /tmp/ssn-demo/manifest.json --out /tmp/ssn-demo/proposals.json
//! ```

use std::path::PathBuf;

use ssn::io::{write_actionness, write_features, write_json, Manifest, ManifestInstance, ManifestVideo};
use ssn::synthetic::{generate, SyntheticConfig};

fn main() {
    let out_dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "ssn-demo-data".to_string()),
    );
    std::fs::create_dir_all(out_dir.join("features")).unwrap();
    std::fs::create_dir_all(out_dir.join("actionness")).unwrap();

    let cfg = SyntheticConfig {
        num_videos: 20,
        ..SyntheticConfig::default()
    };
    let videos = generate(&cfg).unwrap();

    let mut manifest = Manifest {
        classes: (1..=cfg.num_classes).map(|k| format!("activity_{k}")).collect(),
        videos: Vec::new(),
    };
    for video in &videos {
        let feature_rel = format!("features/{}.ssnf", video.id);
        let actionness_rel = format!("actionness/{}.ssna", video.id);
        write_features(&out_dir.join(&feature_rel), &video.seq).unwrap();
        write_actionness(&out_dir.join(&actionness_rel), video.seq.actionness().unwrap()).unwrap();
        manifest.videos.push(ManifestVideo {
            id: video.id.clone(),
            feature_path: feature_rel,
            actionness_path: Some(actionness_rel),
            snippet_stride_frames: 6,
            instances: video
                .instances
                .iter()
                .map(|g| ManifestInstance {
                    class: g.class,
                    start: g.interval.start(),
                    end: g.interval.end(),
                })
                .collect(),
        });
    }
    let manifest_path = out_dir.join("manifest.json");
    write_json(&manifest_path, &manifest).unwrap();

    println!("wrote {} videos under {}", videos.len(), out_dir.display());
    println!("\nnext steps:");
    let m = manifest_path.display();
    let d = out_dir.display();
    println!("  ssn propose --manifest {m} --out {d}/proposals.json");
    println!("  ssn train   --manifest {m} --proposals {d}/proposals.json --out {d}/model.ckpt --epochs 30 --learning-rate 0.4");
    println!("  ssn detect  --manifest {m} --proposals {d}/proposals.json --model {d}/model.ckpt --out {d}/detections.json");
    println!("  ssn eval    --manifest {m} --detections {d}/detections.json --out {d}/report.json");
    println!("  ssn plot-data --manifest {m} --proposals {d}/proposals.json --detections {d}/detections.json --out-dir {d}/curves");
}
