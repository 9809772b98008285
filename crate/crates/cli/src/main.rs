use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rayon::prelude::*;

use mscsp::config::RunConfig;
use mscsp::curves::{format_curve_csv, read_curve_csv, render_svg, Series};
use mscsp::formats::{
    format_detections, frame_id, list_files, read_annotation_dir, read_annotation_file,
    read_detection_file, write_annotation_dir, write_annotation_file, DetectionSet,
};
use mscsp::fuse::fuse_annotation_dirs;
use mscsp::imageio::{read_gray, read_rgb, write_png};
use mscsp::mapdump::{read_maps, write_maps};
use mscsp_core::augment::{apply_pipeline, ImagePair, Stage};
use mscsp_core::codec::{decode_detections, encode_targets};
use mscsp_core::eval::{evaluate, log_average_mr, DEFAULT_FPPI_RANGE};
use mscsp_core::fusion::{FusionGraph, Tensor, Topology};
use mscsp_core::{ImageSize, RngState, SubsetSpec};

#[derive(Parser)]
#[command(name = "mscsp", version, about = "Multispectral anchor-free pedestrian detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode an annotation file into a target-map dump.
    Encode(EncodeArgs),
    /// Decode a map dump into a detection file.
    Decode(DecodeArgs),
    /// Build a fusion network and report its layers, parameters and output shape.
    Simulate(SimulateArgs),
    /// Augment a directory of VIS/IR image pairs.
    Augment(AugmentArgs),
    /// Evaluate detections against ground truth.
    Evaluate(EvaluateArgs),
    /// Fuse VIS and IR annotation directories into union boxes.
    FuseAnnotations(FuseArgs),
    /// Plot miss-rate/FPPI curves from CSV files as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration (`key = value` lines); defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    ann: PathBuf,
    /// Image size as HEIGHTxWIDTH.
    #[arg(long, default_value = "384x480")]
    size: String,
    /// Write the ideal prediction (center 1 at positives, 0 elsewhere) instead of the targets.
    #[arg(long)]
    ideal: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    maps: PathBuf,
    /// Frame id for the output lines; defaults to the dump's file stem.
    #[arg(long)]
    frame: Option<String>,
    /// Output detection file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    topology: String,
    /// Input size as HEIGHTxWIDTH.
    #[arg(long, default_value = "64x80")]
    input: String,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also print every intermediate tensor shape.
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct AugmentArgs {
    /// Directory with `vis/*.png`, `ir/*.png` and optional `ann/*.txt`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated stage list; overrides the config.
    #[arg(long)]
    stages: Option<String>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the drawn parameters, one line per image.
    #[arg(long)]
    dump_params: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    dets: PathBuf,
    /// Directory of annotation files, one per frame.
    #[arg(long)]
    ann: PathBuf,
    /// Subset to report (repeatable); overrides the config list.
    #[arg(long)]
    subset: Vec<String>,
    /// Skip the size and occlusion bins.
    #[arg(long)]
    no_bins: bool,
    /// Directory receiving one `<name>.csv` curve per entry.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long)]
    vis: PathBuf,
    #[arg(long)]
    ir: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Curve CSV files; each becomes one series labelled by its file stem.
    #[arg(required = true)]
    curves: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "Miss rate vs FPPI")]
    title: String,
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("size `{s}` is not HEIGHTxWIDTH"))?;
    let h: usize = h.trim().parse().with_context(|| format!("invalid height in `{s}`"))?;
    let w: usize = w.trim().parse().with_context(|| format!("invalid width in `{s}`"))?;
    if h == 0 || w == 0 {
        bail!("size `{s}` must be positive");
    }
    Ok((h, w))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn encode(a: EncodeArgs) -> Result<()> {
    let cfg = RunConfig::load_or_default(a.config.config.as_deref())?;
    let (h, w) = parse_size(&a.size)?;
    let (_, anns) = read_annotation_file(&a.ann)?;
    let targets = encode_targets(&anns, ImageSize::new(w, h), &cfg.codec)
        .with_context(|| format!("encoding {}", a.ann.display()))?;
    let maps = if a.ideal { targets.ideal_prediction() } else { targets.maps };
    write_maps(&a.out, &maps)?;
    let (rows, cols) = maps.shape();
    println!("maps: {rows}x{cols}, positives: {}", targets.positive.iter().filter(|p| **p).count());
    Ok(())
}

fn decode(a: DecodeArgs) -> Result<()> {
    let cfg = RunConfig::load_or_default(a.config.config.as_deref())?;
    let maps = read_maps(&a.maps)?;
    let (rows, cols) = maps.shape();
    let stride = cfg.codec.stride;
    let dets = decode_detections(&maps, ImageSize::new(cols * stride, rows * stride), &cfg.codec)
        .with_context(|| format!("decoding {}", a.maps.display()))?;
    let frame = match a.frame {
        Some(f) => f,
        None => frame_id(&a.maps)?,
    };
    let set = DetectionSet::from([(frame, dets)]);
    write_or_print(a.out.as_deref(), &format_detections(&set))
}

fn random_tensor(rng: &mut RngState, c: usize, h: usize, w: usize) -> Tensor {
    let data = (0..c * h * w).map(|_| rng.random::<f64>()).collect();
    Tensor::from_vec(c, h, w, data).expect("length matches")
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = RunConfig::load_or_default(a.config.config.as_deref())?;
    let topology: Topology = a.topology.parse()?;
    let (h, w) = parse_size(&a.input)?;
    let seed = a.seed.unwrap_or(cfg.seed);
    let graph = FusionGraph::build_with_head(topology, &cfg.backbone, cfg.head_channels, seed);
    let mut rng = RngState::stream(seed, 1);
    let vis = random_tensor(&mut rng, 3, h, w);
    let ir = random_tensor(&mut rng, 1, h, w);
    let (maps, trace) = graph.forward_traced(&vis, &ir)?;
    println!("{}", graph.summary());
    if a.trace {
        for t in &trace {
            let (c, th, tw) = t.shape;
            println!("{:<24} {c}x{th}x{tw}", t.name);
        }
    }
    let (rows, cols) = maps.shape();
    println!("input: {h}x{w}");
    println!("head maps: {rows}x{cols}");
    Ok(())
}

struct Frame {
    stem: String,
    vis: PathBuf,
    ir: PathBuf,
    ann: Option<PathBuf>,
}

fn collect_frames(input: &Path) -> Result<Vec<Frame>> {
    let vis_dir = input.join("vis");
    let ir_dir = input.join("ir");
    let ann_dir = input.join("ann");
    let mut frames = Vec::new();
    for vis in list_files(&vis_dir, "png")? {
        let stem = frame_id(&vis)?;
        let ir = ir_dir.join(format!("{stem}.png"));
        if !ir.is_file() {
            bail!("frame `{stem}` has no IR image at {}", ir.display());
        }
        let ann = ann_dir.join(format!("{stem}.txt"));
        frames.push(Frame {
            stem,
            vis,
            ir,
            ann: ann.is_file().then_some(ann),
        });
    }
    if frames.is_empty() {
        bail!("no images found in {}", vis_dir.display());
    }
    Ok(frames)
}

fn augment(a: AugmentArgs) -> Result<()> {
    let cfg = RunConfig::load_or_default(a.config.config.as_deref())?;
    let stages: Vec<Stage> = match &a.stages {
        Some(s) => s
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()?,
        None => cfg.stages.clone(),
    };
    let master = RngState::from_seed(a.seed.unwrap_or(cfg.seed));
    let frames = collect_frames(&a.input)?;
    for sub in ["vis", "ir", "ann"] {
        let d = a.out.join(sub);
        std::fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
    }
    let lines: Vec<String> = frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| -> Result<String> {
            let anns = match &f.ann {
                Some(p) => read_annotation_file(p)?.1,
                None => Vec::new(),
            };
            let pair = ImagePair::new(read_rgb(&f.vis)?, read_gray(&f.ir)?, anns)
                .with_context(|| format!("frame `{}`", f.stem))?;
            let (out, log) = apply_pipeline(&pair, &cfg.augment, &stages, &master.derive(i as u64))
                .with_context(|| format!("frame `{}`", f.stem))?;
            write_png(&a.out.join("vis").join(format!("{}.png", f.stem)), &out.vis)?;
            write_png(&a.out.join("ir").join(format!("{}.png", f.stem)), &out.ir)?;
            write_annotation_file(&a.out.join("ann").join(format!("{}.txt", f.stem)), &out.annotations)?;
            Ok(format!("{} {log}\n", f.stem))
        })
        .collect::<Result<_>>()?;
    if let Some(p) = &a.dump_params {
        std::fs::write(p, lines.concat()).with_context(|| format!("writing {}", p.display()))?;
    }
    println!("augmented {} frames", frames.len());
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let cfg = RunConfig::load_or_default(a.config.config.as_deref())?;
    let mut eval_cfg = cfg.eval.clone();
    if !a.subset.is_empty() {
        eval_cfg.subsets = a
            .subset
            .iter()
            .map(|s| SubsetSpec::builtin(s).ok_or_else(|| anyhow!("unknown subset `{s}`")))
            .collect::<Result<_>>()?;
    }
    if a.no_bins {
        eval_cfg.size_bins.clear();
        eval_cfg.occlusion_bins.clear();
    }
    let dets = read_detection_file(&a.dets)?;
    let gts = read_annotation_dir(&a.ann)?;
    let report = evaluate(&dets, &gts, &eval_cfg)?;
    println!("{report}");
    if let Some(dir) = &a.csv {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for e in &report.entries {
            if let Some(c) = &e.curve {
                let p = dir.join(format!("{}.csv", e.name));
                std::fs::write(&p, format_curve_csv(c)).with_context(|| format!("writing {}", p.display()))?;
            }
        }
    }
    Ok(())
}

fn fuse(a: FuseArgs) -> Result<()> {
    let fused = fuse_annotation_dirs(&a.vis, &a.ir)?;
    write_annotation_dir(&a.out, &fused)?;
    println!("fused {} frames", fused.len());
    Ok(())
}

fn plot(a: PlotArgs) -> Result<()> {
    let series = a
        .curves
        .iter()
        .map(|p| -> Result<Series> {
            let curve = read_curve_csv(p)?;
            let name = frame_id(p)?;
            let label = match log_average_mr(&curve, DEFAULT_FPPI_RANGE) {
                Ok(mr) => format!("{name} ({mr:.2}%)"),
                Err(_) => name,
            };
            Ok(Series { label, curve })
        })
        .collect::<Result<Vec<_>>>()?;
    std::fs::write(&a.out, render_svg(&series, &a.title)).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::Simulate(a) => simulate(a),
        Command::Augment(a) => augment(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::FuseAnnotations(a) => fuse(a),
        Command::Plot(a) => plot(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
