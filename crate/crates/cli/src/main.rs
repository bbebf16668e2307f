//! `lanekit`: command-line front end for `lane-core`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
//! malformed input), 3 invariant violation.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lane_core::anchoring::{
    approximate_vp, generate_anchors, line_nms, vp_mask, AnchorParams, ScoredProposal,
    VanishingPoint, VP_MASK_SCALE, VP_RADIUS_PX,
};
use lane_core::eval::{match_and_score, tusimple_counts, EvalReport, ImageLanes, TuSimpleCounts};
use lane_core::io::{
    entry_lanes, record_lanes, render_overlay, serialize_culane, Annotation, Config, DatasetIndex,
};
use lane_core::losses::run_gradcheck;
use lane_core::repr::{encode, BoxLineCode, ImageSpec, LanePolyline};
use lane_core::structures::write_pgm;
use lane_core::trainer::{
    evaluate_predictions, generate_scene, predict_lanes, prepare_scene, train, ScorerParams,
    SyntheticScene,
};
use lane_core::{LaneError, Result};
use log::info;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "lanekit",
    version,
    about = "Box-line lane encoding, VP anchoring, evaluation and training"
)]
struct Cli {
    /// TOML configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Image grid as H,W,P; overrides the config's [image] section.
    #[arg(long, global = true, value_parser = parse_spec)]
    spec: Option<ImageSpec>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Culane,
    Tusimple,
}

#[derive(Subcommand)]
enum Cmd {
    /// Encode every lane of an annotation file as box-line JSON.
    Encode {
        annotations: PathBuf,
        /// Record index within a TuSimple file.
        #[arg(long, default_value_t = 0)]
        record: usize,
    },
    /// Approximate the vanishing point of an annotation file.
    Vp {
        annotations: PathBuf,
        #[arg(long, default_value_t = 0)]
        record: usize,
        /// Also write the VP mask as a PGM.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Enumerate anchors around a vanishing point as CSV.
    Anchors {
        #[arg(long, value_parser = parse_pair)]
        vp: (f64, f64),
        #[arg(long)]
        w: Option<u32>,
        #[arg(long)]
        s: Option<u32>,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Line-NMS over a JSON array of `{conf, xs, valid}` proposals.
    Nms {
        proposals: PathBuf,
        #[arg(long)]
        dist: Option<f64>,
        #[arg(long)]
        conf: Option<f64>,
    },
    /// Score predictions against ground truth.
    Eval {
        #[arg(long, value_enum)]
        format: Format,
        pred: PathBuf,
        gt: PathBuf,
        /// Write every IoU pair as CSV.
        #[arg(long)]
        iou_csv: Option<PathBuf>,
    },
    /// Finite-difference check of every loss gradient.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Generate a synthetic dataset directory.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scenes: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the scorer; writes `params.bin` and `log.csv`.
    Train {
        /// Directory from `synth`; generated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a synthetic scene (or its predictions) as a PPM overlay.
    Render {
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Draw the lanes predicted by these parameters instead of the ground truth.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        anchors: bool,
    },
}

fn parse_numbers(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != n {
        return Err(format!(
            "expected {n} comma-separated values, got {}",
            v.len()
        ));
    }
    Ok(v)
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let v = parse_numbers(s, 2)?;
    Ok((v[0], v[1]))
}

fn parse_spec(s: &str) -> std::result::Result<ImageSpec, String> {
    let v: Vec<u64> = s
        .split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [h, w, p] => {
            let (h, w) = (
                u32::try_from(h).map_err(|e| e.to_string())?,
                u32::try_from(w).map_err(|e| e.to_string())?,
            );
            ImageSpec::new(h, w, p as usize).map_err(|e| e.to_string())
        }
        _ => Err("expected H,W,P".to_string()),
    }
}

#[derive(Deserialize)]
struct ProposalIn {
    conf: f64,
    xs: Vec<f64>,
    valid: Vec<bool>,
}

#[derive(Serialize)]
struct ProposalOut<'a> {
    conf: f64,
    xs: &'a [f64],
    valid: &'a [bool],
}

#[derive(Serialize)]
struct EncodeOut {
    image: PathBuf,
    codes: Vec<BoxLineCode>,
}

#[derive(Serialize)]
struct VpOut {
    image: PathBuf,
    vp: VanishingPoint,
    mask_cells: usize,
    vp_inside: bool,
}

#[derive(Serialize)]
struct EvalOut {
    #[serde(flatten)]
    report: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    tusimple_accuracy: Option<f64>,
}

#[derive(Serialize)]
struct TrainSummary {
    scenes: usize,
    epochs: usize,
    final_total: f64,
    non_monotone_epochs: usize,
    train_f1: f64,
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn is_tusimple(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

/// Lanes of a single annotated image: a CULane `.lines.txt` file or one
/// record of a TuSimple JSON-lines file.
fn load_single(
    path: &Path,
    record: usize,
    spec: &ImageSpec,
) -> Result<(PathBuf, Vec<LanePolyline>)> {
    let entry = if is_tusimple(path) {
        let idx = DatasetIndex::from_tusimple(path)?;
        idx.entries()
            .get(record)
            .cloned()
            .ok_or_else(|| LaneError::Parse {
                line: record + 1,
                message: format!("{} has {} records", path.display(), idx.len()),
            })?
    } else {
        lane_core::io::DatasetEntry {
            image: path.to_path_buf(),
            annotation: Annotation::File(path.to_path_buf()),
            category: None,
        }
    };
    let lanes = entry_lanes(&entry, spec)?;
    Ok((entry.image, lanes))
}

fn load_index(path: &Path, format: Format) -> Result<DatasetIndex> {
    match format {
        Format::Culane => DatasetIndex::from_culane_dir(path),
        Format::Tusimple => DatasetIndex::from_tusimple(path),
    }
}

fn load_scene(path: &Path) -> Result<SyntheticScene> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn scene_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| {
        p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("scene_") && n.ends_with(".json"))
    });
    files.sort();
    Ok(files)
}

fn synth_scenes(cfg: &Config) -> Result<Vec<SyntheticScene>> {
    let s = &cfg.synth;
    (0..s.scenes)
        .map(|k| generate_scene(s.scene_seed(k), &cfg.image, s.lanes_for(k), s.noise_px))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(spec) = cli.spec {
        cfg.image = spec;
    }
    let spec = cfg.image;
    match cli.cmd {
        Cmd::Encode {
            annotations,
            record,
        } => {
            let (image, lanes) = load_single(&annotations, record, &spec)?;
            let codes = lanes
                .iter()
                .map(|l| encode(l, &spec))
                .collect::<Result<_>>()?;
            print_json(&EncodeOut { image, codes })
        }
        Cmd::Vp {
            annotations,
            record,
            mask,
        } => {
            let (image, lanes) = load_single(&annotations, record, &spec)?;
            let codes: Vec<BoxLineCode> = lanes
                .iter()
                .map(|l| encode(l, &spec))
                .collect::<Result<_>>()?;
            let vp = approximate_vp(&codes)?;
            let m = vp_mask(&vp, &spec, VP_MASK_SCALE, VP_RADIUS_PX)?;
            if let Some(path) = mask {
                let mut f = create(&path)?;
                write_pgm(&m.grid, &mut f)?;
                f.flush()?;
            }
            print_json(&VpOut {
                image,
                vp,
                mask_cells: m.count(),
                vp_inside: m.vp_inside,
            })
        }
        Cmd::Anchors { vp, w, s, a, out } => {
            let params = AnchorParams {
                w_anchor: w.unwrap_or(cfg.anchor.w_anchor),
                s_anchor: s.unwrap_or(cfg.anchor.s_anchor),
                a_anchor: a.unwrap_or(cfg.anchor.a_anchor),
            };
            let set = generate_anchors(&VanishingPoint::new(vp.0, vp.1), &params, &spec)?;
            info!("{} anchors", set.len());
            match out {
                Some(p) => set.write_csv(create(&p)?),
                None => set.write_csv(std::io::stdout().lock()),
            }
        }
        Cmd::Nms {
            proposals,
            dist,
            conf,
        } => {
            let raw: Vec<ProposalIn> = serde_json::from_str(&std::fs::read_to_string(&proposals)?)?;
            let props = raw
                .into_iter()
                .map(|p| ScoredProposal::new(p.conf, p.xs, p.valid))
                .collect::<Result<Vec<_>>>()?;
            let kept = line_nms(
                &props,
                dist.unwrap_or(cfg.nms.dist_thresh_px),
                conf.unwrap_or(cfg.nms.conf_thresh),
            );
            let out: Vec<ProposalOut> = kept
                .iter()
                .map(|p| ProposalOut {
                    conf: p.conf,
                    xs: &p.xs,
                    valid: &p.valid,
                })
                .collect();
            print_json(&out)
        }
        Cmd::Eval {
            format,
            pred,
            gt,
            iou_csv,
        } => {
            let gt_idx = load_index(&gt, format)?;
            let pred_idx = load_index(&pred, format)?;
            let gt_lanes = gt_idx.load_lanes(&spec)?;
            let mut images = Vec::with_capacity(gt_idx.len());
            let mut counts = TuSimpleCounts::default();
            for (entry, gts) in gt_idx.entries().iter().zip(gt_lanes) {
                let pred_entry = pred_idx.get(&entry.image);
                let preds = match pred_entry {
                    Some(p) => entry_lanes(p, &spec)?,
                    None => Vec::new(),
                };
                if let Annotation::Inline(g) = &entry.annotation {
                    let g = record_lanes(g);
                    let p = match pred_entry.map(|p| &p.annotation) {
                        Some(Annotation::Inline(p)) => record_lanes(p).lanes,
                        _ => Vec::new(),
                    };
                    counts += tusimple_counts(&p, &g.lanes, cfg.eval.x_thresh_px)?;
                }
                images.push(ImageLanes {
                    preds,
                    gts,
                    category: entry.category.clone(),
                });
            }
            let report = match_and_score(&images, &spec, cfg.eval.iou_thresh, cfg.eval.width_px)?;
            if let Some(p) = iou_csv {
                report.write_iou_csv(create(&p)?)?;
            }
            print_json(&EvalOut {
                report,
                tusimple_accuracy: matches!(format, Format::Tusimple).then(|| counts.accuracy()),
            })
        }
        Cmd::Gradcheck { points, seed, tol } => {
            let report = run_gradcheck(points, seed, tol)?;
            print_json(&report)?;
            if report.passed() {
                Ok(())
            } else {
                let failed: Vec<&str> = report
                    .entries
                    .iter()
                    .filter(|e| !e.passed)
                    .map(|e| e.loss.as_str())
                    .collect();
                Err(LaneError::InvalidParameter {
                    key: "gradcheck".to_string(),
                    reason: format!("{} exceed tolerance {tol:e}", failed.join(", ")),
                })
            }
        }
        Cmd::Synth {
            seed,
            scenes,
            noise,
            out,
        } => {
            cfg.synth.seed = seed.unwrap_or(cfg.synth.seed);
            cfg.synth.scenes = scenes.unwrap_or(cfg.synth.scenes);
            cfg.synth.noise_px = noise.unwrap_or(cfg.synth.noise_px);
            cfg.validate()?;
            std::fs::create_dir_all(&out)?;
            for (k, scene) in synth_scenes(&cfg)?.iter().enumerate() {
                let mut f = create(&out.join(format!("scene_{k:04}.json")))?;
                serde_json::to_writer_pretty(&mut f, scene)?;
                writeln!(f)?;
                f.flush()?;
                std::fs::write(
                    out.join(format!("scene_{k:04}.lines.txt")),
                    serialize_culane(&scene.lanes, &spec),
                )?;
            }
            std::fs::write(out.join("config.toml"), cfg.to_toml_string())?;
            info!("wrote {} scenes to {}", cfg.synth.scenes, out.display());
            Ok(())
        }
        Cmd::Train { data, out } => {
            let scenes = match data {
                Some(dir) => scene_files(&dir)?
                    .iter()
                    .map(|p| load_scene(p))
                    .collect::<Result<Vec<_>>>()?,
                None => synth_scenes(&cfg)?,
            };
            let tcfg = cfg.trainer_config();
            let result = train(&scenes, &spec, &tcfg)?;
            std::fs::create_dir_all(&out)?;
            let mut f = create(&out.join("params.bin"))?;
            result.params.write_to(&mut f)?;
            f.flush()?;
            result.log.write_csv(create(&out.join("log.csv"))?)?;
            let gts: Vec<Vec<LanePolyline>> = scenes.iter().map(|s| s.lanes.clone()).collect();
            let report =
                evaluate_predictions(&result.params, &result.prepared, &gts, &cfg.nms, &cfg.eval)?;
            print_json(&TrainSummary {
                scenes: scenes.len(),
                epochs: tcfg.epochs,
                final_total: result.log.last().map_or(f64::NAN, |r| r.total),
                non_monotone_epochs: result.log.flagged(),
                train_f1: report.f1,
            })
        }
        Cmd::Render {
            scene,
            out,
            params,
            anchors,
        } => {
            let scene = load_scene(&scene)?;
            let tcfg = cfg.trainer_config();
            let vp = VanishingPoint::new(scene.vp_true.x, scene.vp_true.y);
            let lanes = match params {
                Some(p) => {
                    let params = ScorerParams::read_from(std::io::BufReader::new(File::open(p)?))?;
                    let prep = prepare_scene(&scene, &spec, &tcfg)?;
                    predict_lanes(&params, &prep, &cfg.nms)
                }
                None => scene.lanes.clone(),
            };
            let set = if anchors {
                Some(generate_anchors(&vp, &cfg.anchor, &spec)?)
            } else {
                None
            };
            render_overlay(&spec, &lanes, Some(&vp), set.as_ref(), &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 3 })
        }
    }
}
