//! File-based detection pipeline: propose -> train -> detect -> eval,
//! plus CSV curve export for plotting.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ssn::error::{Result, SsnError};
use ssn::evaluation::{
    average_recall, coarse_iou_grid, default_iou_grid, mean_ap, precision_recall_curve,
    recall_at_iou, Interpolation,
};
use ssn::inference::{
    compute_snippet_responses, postprocess, score_proposals, score_proposals_naive, Detection,
    PostprocessConfig,
};
use ssn::intervals::{GroundTruthInstance, TemporalInterval};
use ssn::io::{
    atomic_write, load_dataset, load_manifest, proposal_intervals, read_actionness,
    read_checkpoint, read_json, resolve_path, write_checkpoint, write_json, DetectionEntry,
    DetectionsFile, Manifest, ProposalEntry, ProposalsFile,
};
use ssn::stpp::PoolMode;
use ssn::tag::{generate_proposals, ActionnessSequence, DEFAULT_GRID_STEP};
use ssn::training::{train, TrainConfig};

#[derive(Parser)]
#[command(name = "ssn", version, about = "Temporal action detection over snippet features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Map,
    Ar,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    /// IoU thresholds 0.5 to 0.95, step 0.05.
    Fine,
    /// IoU thresholds 0.1 to 0.5, step 0.1.
    Coarse,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterpArg {
    /// Area under the full precision envelope.
    AllPoint,
    /// Classic 11-point interpolation.
    ElevenPoint,
}

#[derive(Subcommand)]
enum Command {
    /// Generate temporal proposals from actionness scores.
    Propose {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Step of the water-level / coverage threshold grid.
        #[arg(long, default_value_t = DEFAULT_GRID_STEP)]
        grid_step: f64,
    },
    /// Train detection heads on labeled proposals.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        proposals: PathBuf,
        /// Training config JSON; defaults apply for absent fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Loss-log JSON path (default: <out>.loss.json).
        #[arg(long)]
        loss_log: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Score and refine proposals with a trained model.
    Detect {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        proposals: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pool features first and run the model forward per proposal
        /// instead of pooling precomputed per-snippet responses.
        #[arg(long)]
        naive: bool,
        #[arg(long, default_value_t = 0.6)]
        nms_iou: f64,
        #[arg(long, default_value_t = 0.01)]
        score_threshold: f64,
    },
    /// Evaluate detections (mAP) or proposals (average recall).
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Detections JSON for --metric map; a proposals JSON for
        /// --metric ar.
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, value_enum, default_value_t = Metric::Map)]
        metric: Metric,
        #[arg(long, value_enum, default_value_t = Grid::Fine)]
        grid: Grid,
        #[arg(long, value_enum, default_value_t = InterpArg::AllPoint)]
        interpolation: InterpArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit recall-vs-IoU and precision-recall CSV curves.
    PlotData {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        proposals: Option<PathBuf>,
        #[arg(long)]
        detections: Option<PathBuf>,
        /// IoU threshold of the precision-recall curves.
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Propose {
            manifest,
            out,
            grid_step,
        } => cmd_propose(&manifest, &out, grid_step),
        Command::Train {
            manifest,
            proposals,
            config,
            out,
            loss_log,
            epochs,
            seed,
            learning_rate,
            batch_size,
        } => cmd_train(
            &manifest,
            &proposals,
            config.as_deref(),
            &out,
            loss_log.as_deref(),
            epochs,
            seed,
            learning_rate,
            batch_size,
        ),
        Command::Detect {
            manifest,
            proposals,
            model,
            out,
            naive,
            nms_iou,
            score_threshold,
        } => cmd_detect(&manifest, &proposals, &model, &out, naive, nms_iou, score_threshold),
        Command::Eval {
            manifest,
            detections,
            metric,
            grid,
            interpolation,
            out,
        } => cmd_eval(&manifest, &detections, metric, grid, interpolation, &out),
        Command::PlotData {
            manifest,
            proposals,
            detections,
            iou,
            out_dir,
        } => cmd_plot_data(&manifest, proposals.as_deref(), detections.as_deref(), iou, &out_dir),
    }
}

fn cmd_propose(manifest_path: &Path, out: &Path, grid_step: f64) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    let mut output: ProposalsFile = BTreeMap::new();
    let mut failures = Vec::new();
    for video in &manifest.videos {
        let Some(rel) = &video.actionness_path else {
            failures.push(SsnError::MissingActionness {
                video: video.id.clone(),
            });
            continue;
        };
        let scores = match read_actionness(&resolve_path(manifest_path, rel)) {
            Ok(s) => s,
            Err(e) => {
                failures.push(e);
                continue;
            }
        };
        let actionness = ActionnessSequence::new(scores)?;
        let proposals = generate_proposals(&actionness, grid_step)?;
        output.insert(
            video.id.clone(),
            proposals
                .into_iter()
                .map(|(iv, score)| ProposalEntry {
                    start: iv.start(),
                    end: iv.end(),
                    score,
                })
                .collect(),
        );
    }
    if !failures.is_empty() {
        for f in &failures[1..] {
            eprintln!("error: {f}");
        }
        return Err(failures.into_iter().next().unwrap());
    }
    write_json(out, &output)
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    manifest_path: &Path,
    proposals_path: &Path,
    config_path: Option<&Path>,
    out: &Path,
    loss_log: Option<&Path>,
    epochs: Option<usize>,
    seed: Option<u64>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    let dataset = load_dataset(manifest_path, &manifest)?;
    let proposals = load_proposal_intervals(proposals_path)?;

    let mut cfg: TrainConfig = match config_path {
        Some(path) => read_json(path)?,
        None => TrainConfig::default(),
    };
    // the manifest's class table is authoritative
    cfg.num_classes = manifest.num_classes();
    if let Some(v) = epochs {
        cfg.epochs = v;
    }
    if let Some(v) = seed {
        cfg.seed = v;
    }
    if let Some(v) = learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = batch_size {
        cfg.batch_size = v;
    }

    let (params, log) = train(&dataset, &proposals, &cfg)?;
    write_checkpoint(out, &params)?;
    let log_path = match loss_log {
        Some(p) => p.to_path_buf(),
        None => {
            let mut os = out.as_os_str().to_owned();
            os.push(".loss.json");
            PathBuf::from(os)
        }
    };
    write_json(&log_path, &log)
}

fn cmd_detect(
    manifest_path: &Path,
    proposals_path: &Path,
    model_path: &Path,
    out: &Path,
    naive: bool,
    nms_iou: f64,
    score_threshold: f64,
) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    let params = read_checkpoint(model_path)?;
    let proposals = load_proposal_intervals(proposals_path)?;
    // max pooling cannot be reordered, so those models always take the
    // pool-then-multiply path
    let use_naive = naive || params.pyramid().pool == PoolMode::Max;

    let mut detections: Vec<Detection> = Vec::new();
    for video in &manifest.videos {
        let Some(video_props) = proposals.get(&video.id) else {
            continue;
        };
        if video_props.is_empty() {
            continue;
        }
        let data = ssn::io::load_video(manifest_path, video)?;
        let dets = if use_naive {
            score_proposals_naive(&data.seq, video_props, &params, &video.id)?
        } else {
            let responses = compute_snippet_responses(&data.seq, &params)?;
            score_proposals(&responses, video_props, &params, &video.id)?
        };
        detections.extend(dets);
    }
    let final_dets = postprocess(
        detections,
        &PostprocessConfig {
            score_threshold,
            nms_iou,
        },
    );
    let mut output: DetectionsFile = BTreeMap::new();
    for det in final_dets {
        output.entry(det.video_id.clone()).or_default().push(DetectionEntry {
            class: det.class,
            start: det.interval.start(),
            end: det.interval.end(),
            score: det.score,
        });
    }
    write_json(out, &output)
}

fn load_proposal_intervals(path: &Path) -> Result<BTreeMap<String, Vec<TemporalInterval>>> {
    let file: ProposalsFile = read_json(path)?;
    file.iter()
        .map(|(video, entries)| Ok((video.clone(), proposal_intervals(path, video, entries)?)))
        .collect()
}

fn manifest_ground_truth(manifest: &Manifest) -> Result<Vec<GroundTruthInstance>> {
    let mut gts = Vec::new();
    for video in &manifest.videos {
        for inst in &video.instances {
            gts.push(GroundTruthInstance::new(
                &video.id,
                TemporalInterval::new(inst.start, inst.end)?,
                inst.class,
            )?);
        }
    }
    Ok(gts)
}

fn threshold_key(thr: f64) -> String {
    format!("{thr:.2}")
}

fn cmd_eval(
    manifest_path: &Path,
    detections_path: &Path,
    metric: Metric,
    grid: Grid,
    interpolation: InterpArg,
    out: &Path,
) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    let gts = manifest_ground_truth(&manifest)?;
    let thresholds = match grid {
        Grid::Fine => default_iou_grid(),
        Grid::Coarse => coarse_iou_grid(),
    };
    match metric {
        Metric::Map => {
            let file: DetectionsFile = read_json(detections_path)?;
            let detections = detections_from_file(detections_path, &file)?;
            let interp = match interpolation {
                InterpArg::AllPoint => Interpolation::AllPoint,
                InterpArg::ElevenPoint => Interpolation::ElevenPoint,
            };
            let report = mean_ap(&detections, &gts, &thresholds, interp)?;

            let mut map_by_iou = BTreeMap::new();
            for (thr, value) in report.thresholds.iter().zip(&report.map_per_threshold) {
                map_by_iou.insert(threshold_key(*thr), *value);
            }
            let mut summary = BTreeMap::new();
            for key in [0.5, 0.75, 0.95] {
                if let Some(pos) = report.thresholds.iter().position(|t| (t - key).abs() < 1e-9) {
                    summary.insert(
                        format!("mAP@{}", threshold_key(key)),
                        report.map_per_threshold[pos],
                    );
                }
            }
            summary.insert("average".into(), report.average_map);
            let mut ap_by_class = BTreeMap::new();
            for (ci, &class) in report.classes.iter().enumerate() {
                let name = manifest
                    .classes
                    .get(class - 1)
                    .cloned()
                    .unwrap_or_else(|| format!("class_{class}"));
                let mut per_thr = BTreeMap::new();
                for (ti, thr) in report.thresholds.iter().enumerate() {
                    per_thr.insert(threshold_key(*thr), report.ap_per_class[ci][ti]);
                }
                ap_by_class.insert(name, per_thr);
            }
            let json = serde_json::json!({
                "metric": "map",
                "interpolation": match interpolation {
                    InterpArg::AllPoint => "all_point",
                    InterpArg::ElevenPoint => "eleven_point",
                },
                "iou_thresholds": report.thresholds,
                "map_by_iou": map_by_iou,
                "average_map": report.average_map,
                "summary": summary,
                "ap_by_class": ap_by_class,
            });
            write_json(out, &json)
        }
        Metric::Ar => {
            let file: ProposalsFile = read_json(detections_path)?;
            let mut by_video: BTreeMap<String, Vec<TemporalInterval>> = BTreeMap::new();
            let mut total = 0usize;
            for (video, entries) in &file {
                let ivs = proposal_intervals(detections_path, video, entries)?;
                total += ivs.len();
                by_video.insert(video.clone(), ivs);
            }
            let mut recall_by_iou = BTreeMap::new();
            for &thr in &thresholds {
                recall_by_iou.insert(threshold_key(thr), recall_at_iou(&by_video, &gts, thr)?);
            }
            let ar = average_recall(&by_video, &gts, &thresholds)?;
            let per_video = if manifest.videos.is_empty() {
                0.0
            } else {
                total as f64 / manifest.videos.len() as f64
            };
            let json = serde_json::json!({
                "metric": "ar",
                "iou_thresholds": thresholds,
                "recall_by_iou": recall_by_iou,
                "average_recall": ar,
                "proposals_per_video": per_video,
            });
            write_json(out, &json)
        }
    }
}

fn detections_from_file(path: &Path, file: &DetectionsFile) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (video, entries) in file {
        for (i, e) in entries.iter().enumerate() {
            let interval = TemporalInterval::new(e.start, e.end).map_err(|_| {
                SsnError::format(
                    path,
                    format!(
                        "video '{video}' detection {i}: invalid interval [{}, {})",
                        e.start, e.end
                    ),
                )
            })?;
            if e.class == 0 {
                return Err(SsnError::format(
                    path,
                    format!("video '{video}' detection {i}: class 0 is reserved for background"),
                ));
            }
            out.push(Detection {
                video_id: video.clone(),
                class: e.class,
                interval,
                score: e.score,
                activity: e.score,
                completeness: 1.0,
            });
        }
    }
    Ok(out)
}

fn cmd_plot_data(
    manifest_path: &Path,
    proposals_path: Option<&Path>,
    detections_path: Option<&Path>,
    iou: f64,
    out_dir: &Path,
) -> Result<()> {
    if proposals_path.is_none() && detections_path.is_none() {
        return Err(SsnError::InvalidConfig(
            "plot-data needs --proposals and/or --detections".into(),
        ));
    }
    let manifest = load_manifest(manifest_path)?;
    let gts = manifest_ground_truth(&manifest)?;
    std::fs::create_dir_all(out_dir).map_err(|e| SsnError::io(out_dir, e))?;

    if let Some(path) = proposals_path {
        let by_video = load_proposal_intervals(path)?;
        let mut csv = String::from("iou,recall\n");
        for step in 1..20 {
            let thr = step as f64 * 0.05;
            let r = recall_at_iou(&by_video, &gts, thr)?;
            csv.push_str(&format!("{thr:.2},{r}\n"));
        }
        atomic_write(&out_dir.join("recall_vs_iou.csv"), csv.as_bytes())?;
    }

    if let Some(path) = detections_path {
        let file: DetectionsFile = read_json(path)?;
        let detections = detections_from_file(path, &file)?;
        let classes: std::collections::BTreeSet<usize> = gts.iter().map(|g| g.class).collect();
        for class in classes {
            let Some(points) = precision_recall_curve(&detections, &gts, class, iou) else {
                continue;
            };
            let mut csv = String::from("recall,precision\n");
            for (r, p) in points {
                csv.push_str(&format!("{r},{p}\n"));
            }
            let name = format!("pr_class{class}_iou{}.csv", threshold_key(iou));
            atomic_write(&out_dir.join(name), csv.as_bytes())?;
        }
    }
    Ok(())
}
