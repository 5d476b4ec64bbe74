//! Command-line front end.
//!
//! Exit codes: 0 success, 1 internal error, 2 invalid input.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use partverify_core::context::{
    oracle_for_plans, prior_for_plans, ContextError, ExperimentKind, MaskPlan, DEFAULT_IOU,
};
use partverify_core::metrics::{layout_stats, Interpolation, MetricError};
use partverify_core::model::{Dataset, Detection, EvalConfig, ModelError, Presence};
use partverify_core::raster::Rgb;
use partverify_core::synth::{class_mean_boxes, render_image, DetectorKind, DetectorParams, LayoutSpec, SynthError};
use rayon::prelude::*;
use serde::Serialize;

use crate::images::save_png;
use crate::occlude::{self, Manifest, OccludeError};
use crate::parallel;
use crate::report;
use crate::schema::{self, BoxFormat, LoadError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input files, flags or data; exit code 2.
    #[error("{0}")]
    Input(String),
    /// Anything else; exit code 1.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}
input_error!(LoadError, MetricError, SynthError, ContextError, ModelError);

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<OccludeError> for CliError {
    fn from(e: OccludeError) -> Self {
        match e {
            OccludeError::Io(..) | OccludeError::Image(crate::images::ImageError::Write { .. }) => {
                CliError::Internal(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "partverify", version, about = "Visual part verification evaluation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output directory.
    #[arg(long, env = "PARTVERIFY_OUT", default_value = "partverify-out")]
    pub out: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// Annotation file.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Detection file.
    #[arg(long)]
    pub detections: PathBuf,
    /// Read boxes as [x, y, width, height].
    #[arg(long)]
    pub xywh: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GroupArg {
    Present,
    Missing,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InterpolationArg {
    Coco101,
    Voc11,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Present recall, missing recall and F_vv.
    Verify {
        #[command(flatten)]
        inputs: Inputs,
        /// IoU threshold for present parts.
        #[arg(long, default_value_t = 0.5)]
        tp: f64,
        /// IoU threshold for missing parts.
        #[arg(long, default_value_t = 0.1)]
        tm: f64,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        /// Ignore detections scoring below this.
        #[arg(long, default_value_t = 0.0)]
        score_threshold: f64,
        /// Also write a per-class CSV table.
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Recall as a function of the IoU threshold.
    Curves {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value = "both")]
        group: GroupArg,
        /// `start:step:end` or a comma-separated list.
        #[arg(long, default_value = "0:0.05:1")]
        grid: String,
        #[arg(long, default_value_t = 0.0)]
        score_threshold: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Per-class AP and mAP over an IoU grid.
    Ap {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value = "0.5:0.05:0.95")]
        grid: String,
        #[arg(long, value_enum, default_value = "coco101")]
        interpolation: InterpolationArg,
        #[command(flatten)]
        output: Output,
    },
    /// Part layout and state statistics of an annotation file.
    Stats {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        xywh: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Generate a synthetic dataset and reference detector outputs.
    Synth {
        /// Layout spec JSON (default: built-in 22-part bike).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Reference detectors to run: oracle, prior, noisy.
        #[arg(long, value_delimiter = ',', value_parser = parse_detector)]
        detectors: Vec<DetectorKind>,
        /// Drop probability for the noisy detector.
        #[arg(long, default_value_t = 0.2)]
        drop: f64,
        /// Corner jitter (pixels, standard deviation) for the noisy detector.
        #[arg(long, default_value_t = 4.0)]
        jitter: f64,
        /// Write one PNG per image.
        #[arg(long)]
        render: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Print the built-in layout spec as JSON.
    DefaultSpec,
    /// Build context-manipulated images and a manifest.
    Occlude {
        #[arg(long)]
        annotations: PathBuf,
        /// Directory holding the source images. Without it only the manifest
        /// (and reference detections) are written.
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', value_parser = parse_experiment, default_value = "hide_bg,hide_fg,location_shift")]
        experiment: Vec<ExperimentKind>,
        /// Comma-separated context sizes in pixels.
        #[arg(long, default_value = "0,5,10,25,50,100,150,200,250,300,350")]
        grid: String,
        /// Fill color as `r,g,b`.
        #[arg(long, default_value = "114,114,114")]
        fill: String,
        /// Reference detectors for the manipulated images: oracle, prior.
        #[arg(long, value_delimiter = ',', value_parser = parse_detector)]
        detectors: Vec<DetectorKind>,
        #[arg(long)]
        xywh: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Accuracy against context size from per-size detection files.
    ContextEval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_parser = parse_experiment)]
        experiment: Option<ExperimentKind>,
        /// Detection file path with `{c}` standing for the context size.
        #[arg(long)]
        detections: String,
        #[arg(long, default_value_t = DEFAULT_IOU)]
        iou: f64,
        #[command(flatten)]
        output: Output,
    },
}

fn parse_detector(s: &str) -> Result<DetectorKind, String> {
    DetectorKind::parse(s).ok_or_else(|| format!("unknown detector {s:?} (expected oracle, prior or noisy)"))
}

fn parse_experiment(s: &str) -> Result<ExperimentKind, String> {
    ExperimentKind::parse(s).ok_or_else(|| format!("unknown experiment {s:?} (expected hide_bg, hide_fg or location_shift)"))
}

/// Parses `start:step:end` or `a,b,c` into IoU values.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Input(format!("invalid grid {s:?}"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts.as_slice() {
        [start, step, end] => {
            let (start, step, end) = (num(start)?, num(step)?, num(end)?);
            if step.is_nan() || step <= 0.0 || end < start {
                return Err(bad());
            }
            let n = ((end - start) / step + 1e-9).floor() as usize;
            // round away accumulation error so 0.15 prints as 0.15
            (0..=n).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(bad()),
    };
    if values.is_empty() {
        return Err(bad());
    }
    Ok(values)
}

fn parse_sizes(s: &str) -> Result<Vec<u32>, CliError> {
    let sizes = s
        .split(',')
        .map(|t| t.trim().parse::<u32>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::Input(format!("invalid context grid {s:?}")))?;
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Input("context grid must be strictly increasing".into()));
    }
    Ok(sizes)
}

fn parse_fill(s: &str) -> Result<Rgb, CliError> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<u8>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::Input(format!("invalid fill color {s:?}")))?;
    <[u8; 3]>::try_from(v).map_err(|_| CliError::Input(format!("fill color needs three components: {s:?}")))
}

fn format_of(xywh: bool) -> BoxFormat {
    if xywh {
        BoxFormat::Xywh
    } else {
        BoxFormat::Xyxy
    }
}

fn load_inputs(inputs: &Inputs) -> Result<(Dataset, Vec<Detection>), CliError> {
    let fmt = format_of(inputs.xywh);
    let ds = schema::load_dataset(&inputs.annotations, fmt)?;
    let dets = schema::load_detections(&inputs.detections, &ds, fmt)?;
    Ok((ds, dets))
}

fn out_dir(output: &Output) -> Result<&Path, CliError> {
    fs::create_dir_all(&output.out)?;
    Ok(&output.out)
}

#[derive(Serialize)]
struct CurvesDoc<'a> {
    grid: &'a [f64],
    score_threshold: f64,
    curves: Vec<partverify_core::metrics::RecallCurve>,
}

#[derive(Serialize)]
struct SynthDoc<'a> {
    n_images: usize,
    seed: u64,
    spec: &'a LayoutSpec,
    detectors: Vec<DetectorParams>,
    rendered: bool,
}

#[derive(Serialize)]
struct ContextDoc<'a> {
    manifest: String,
    detections: &'a str,
    report: partverify_core::context::ContextRunReport,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Verify { inputs, tp, tm, beta, score_threshold, csv, output } => {
            let config = EvalConfig { t_present: tp, t_missing: tm, beta, score_threshold, ..Default::default() };
            config.validate()?;
            let (ds, dets) = load_inputs(&inputs)?;
            let pool = parallel::pool(output.threads);
            let rep = parallel::verify(&pool, &ds, &dets, &config)?;
            let out = out_dir(&output)?;
            report::write_json(&out.join("verify.json"), &rep)?;
            if csv {
                report::verify_csv(&out.join("verify_per_class.csv"), &rep)?;
            }
            println!("{}", report::summary_line(&rep));
        }
        Command::Curves { inputs, group, grid, score_threshold, output } => {
            let grid = parse_grid(&grid)?;
            let (ds, dets) = load_inputs(&inputs)?;
            let pool = parallel::pool(output.threads);
            let groups: &[Presence] = match group {
                GroupArg::Present => &[Presence::Present],
                GroupArg::Missing => &[Presence::Missing],
                GroupArg::Both => &[Presence::Present, Presence::Missing],
            };
            let curves = groups
                .iter()
                .map(|&g| parallel::recall_curve(&pool, &ds, &dets, g, &grid, score_threshold))
                .collect::<Result<Vec<_>, _>>()?;
            let out = out_dir(&output)?;
            for c in &curves {
                report::curve_csv(&out.join(format!("curve_{}.csv", c.group.as_str())), c)?;
                let line: Vec<String> = c.recall.iter().map(|r| format!("{r:.2}")).collect();
                println!("{}: {}", c.group.as_str(), line.join(" "));
            }
            report::write_json(&out.join("curves.json"), &CurvesDoc { grid: &grid, score_threshold, curves })?;
        }
        Command::Ap { inputs, grid, interpolation, output } => {
            let grid = parse_grid(&grid)?;
            let config = EvalConfig { ap_iou_grid: grid.clone(), ..Default::default() };
            config.validate()?;
            let interpolation = match interpolation {
                InterpolationArg::Coco101 => Interpolation::Coco101,
                InterpolationArg::Voc11 => Interpolation::Voc11,
            };
            let (ds, dets) = load_inputs(&inputs)?;
            let pool = parallel::pool(output.threads);
            let rep = parallel::mean_average_precision(&pool, &ds, &dets, &grid, interpolation);
            let out = out_dir(&output)?;
            report::write_json(&out.join("ap.json"), &rep)?;
            report::ap_csv(&out.join("ap.csv"), &rep)?;
            for c in &rep.per_class {
                match c.ap {
                    Some(ap) => println!("{:<20} {ap:.2}", c.class),
                    None => println!("{:<20} n/a (no present parts)", c.class),
                }
            }
            match rep.map {
                Some(m) => println!("mAP {m:.2}"),
                None => println!("mAP n/a"),
            }
        }
        Command::Stats { annotations, xywh, output } => {
            let ds = schema::load_dataset(&annotations, format_of(xywh))?;
            let st = layout_stats(&ds)?;
            let out = out_dir(&output)?;
            report::write_json(&out.join("stats.json"), &st)?;
            report::stats_csv(&out.join("stats_classes.csv"), &out.join("stats_states.csv"), &st)?;
            for s in &st.states {
                println!("{:<9} {:>7} {:.3}", s.state.as_str(), s.count, s.ratio);
            }
        }
        Command::Synth { spec, n, seed, detectors, drop, jitter, render, output } => {
            let spec = match spec {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
                    serde_json::from_str::<LayoutSpec>(&text)
                        .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
                }
                None => LayoutSpec::bike_default(),
            };
            let params: Vec<DetectorParams> = dedup(&detectors)
                .into_iter()
                .map(|k| match k {
                    DetectorKind::Oracle => DetectorParams::oracle(seed),
                    DetectorKind::Prior => DetectorParams::prior(seed),
                    DetectorKind::Noisy => DetectorParams::noisy(seed, drop, jitter),
                })
                .collect();
            for p in &params {
                p.validate()?;
            }
            let pool = parallel::pool(output.threads);
            let ds = parallel::generate_dataset(&pool, &spec, n, seed)?;
            let outputs = params
                .iter()
                .map(|p| parallel::run_detector(&pool, &ds, p))
                .collect::<Result<Vec<_>, _>>()?;
            let out = out_dir(&output)?;
            fs::write(out.join("annotations.json"), schema::dataset_to_json(&ds))?;
            for (p, dets) in params.iter().zip(&outputs) {
                fs::write(out.join(format!("detections_{}.json", p.kind.as_str())), schema::detections_to_json(dets))?;
            }
            if render {
                let dir = out.join("images");
                fs::create_dir_all(&dir)?;
                pool.install(|| {
                    (0..ds.images().len()).into_par_iter().try_for_each(|i| {
                        let name = ds.images()[i].file_name.clone().unwrap_or_else(|| format!("{}.png", ds.images()[i].id));
                        save_png(&dir.join(name), &render_image(&ds, i))
                    })
                })
                .map_err(|e| CliError::Internal(e.to_string()))?;
            }
            report::write_json(
                &out.join("synth.json"),
                &SynthDoc { n_images: n, seed, spec: &spec, detectors: params.clone(), rendered: render },
            )?;
            println!(
                "{} images, {} annotations; detectors: {}",
                ds.images().len(),
                ds.annotations().len(),
                params.iter().map(|p| p.kind.as_str()).collect::<Vec<_>>().join(",")
            );
        }
        Command::DefaultSpec => {
            print!("{}", schema::to_pretty(&LayoutSpec::bike_default()));
        }
        Command::Occlude { annotations, images, experiment, grid, fill, detectors, xywh, output } => {
            let ds = schema::load_dataset(&annotations, format_of(xywh))?;
            let grid = parse_sizes(&grid)?;
            let fill = parse_fill(&fill)?;
            let kinds = dedup(&experiment);
            let detectors = dedup(&detectors);
            if detectors.contains(&DetectorKind::Noisy) {
                return Err(CliError::Input("occlude supports the oracle and prior detectors".into()));
            }
            let pool = parallel::pool(output.threads);
            let out = out_dir(&output)?;
            let manifest = occlude::run(&pool, &ds, images.as_deref(), &kinds, &grid, fill, out)?;
            let means = class_mean_boxes(&ds);
            for &kind in &kinds {
                let plans = manifest.plans(kind);
                for &c in &grid {
                    let at_c: Vec<MaskPlan> = plans.iter().filter(|p| p.context == c).cloned().collect();
                    for &det in &detectors {
                        let dets = match det {
                            DetectorKind::Oracle => oracle_for_plans(&at_c),
                            _ => prior_for_plans(&at_c, &ds, &means),
                        };
                        let dir = out.join(kind.as_str()).join(format!("c{c}"));
                        fs::create_dir_all(&dir)?;
                        fs::write(dir.join(format!("detections_{}.json", det.as_str())), schema::detections_to_json(&dets))?;
                    }
                }
            }
            report::write_json(&out.join("manifest.json"), &manifest)?;
            println!("{} manipulated samples written to {}", manifest.entries.len(), out.display());
        }
        Command::ContextEval { manifest, experiment, detections, iou, output } => {
            if !(0.0..=1.0).contains(&iou) {
                return Err(CliError::Input("IoU threshold must lie in [0, 1]".into()));
            }
            if !detections.contains("{c}") {
                return Err(CliError::Input("detection path must contain {c}".into()));
            }
            let text = fs::read_to_string(&manifest)
                .map_err(|e| CliError::Input(format!("{}: {e}", manifest.display())))?;
            let m: Manifest = serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("{}: malformed manifest: {e}", manifest.display())))?;
            let kind = match (experiment, m.experiments.as_slice()) {
                (Some(k), _) => k,
                (None, [only]) => *only,
                (None, _) => return Err(CliError::Input("manifest holds several experiments; pass --experiment".into())),
            };
            let plans = m.plans(kind);
            let mut per_c = BTreeMap::new();
            for &c in &m.grid {
                let path = PathBuf::from(detections.replace("{c}", &c.to_string()));
                if !path.is_file() {
                    return Err(CliError::Input(format!("missing detection file for context size {c}: {}", path.display())));
                }
                let dets = schema::load_detections_unchecked(&path, BoxFormat::Xyxy)?;
                validate_context_detections(&plans, &dets)
                    .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                per_c.insert(c, dets);
            }
            let rep = occlude::evaluate(&m, kind, &per_c, iou)?;
            let out = out_dir(&output)?;
            report::context_csv(&out.join(format!("context_{}.csv", kind.as_str())), &rep)?;
            report::write_json(
                &out.join(format!("context_{}.json", kind.as_str())),
                &ContextDoc { manifest: manifest.display().to_string(), detections: &detections, report: rep.clone() },
            )?;
            for p in &rep.points {
                println!("c={:<4} accuracy {:.2}", p.context, p.accuracy);
            }
        }
    }
    Ok(())
}

fn validate_context_detections(plans: &[MaskPlan], dets: &[Detection]) -> Result<(), ModelError> {
    let samples: BTreeSet<String> = plans.iter().map(MaskPlan::sample_id).collect();
    for (record, d) in dets.iter().enumerate() {
        if !samples.contains(&d.image_id) {
            return Err(ModelError::UnknownImage { record, image_id: d.image_id.clone() });
        }
        if !d.bbox.is_valid() {
            return Err(ModelError::InvalidBox { record, bbox: d.bbox.to_array() });
        }
        if !(0.0..=1.0).contains(&d.score) {
            return Err(ModelError::ScoreOutOfRange { record, score: d.score });
        }
    }
    Ok(())
}

fn dedup<T: PartialEq + Copy>(items: &[T]) -> Vec<T> {
    let mut out = Vec::new();
    for &i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}
