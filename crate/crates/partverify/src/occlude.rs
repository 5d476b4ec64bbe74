//! Batch generation of context-manipulated images and their manifest.
//!
//! Layout: `<out>/<experiment>/c<size>/<sample_id>.png`, with the manifest
//! at `<out>/manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use partverify_core::context::{
    apply_plan, evaluate_context_run, plans_for_image, ContextError, ContextRunReport, ExperimentKind, MaskPlan,
};
use partverify_core::model::{Dataset, Detection};
use partverify_core::raster::Rgb;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::images::{load_png, save_png, ImageError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path of the manipulated image, relative to the manifest.
    pub file: String,
    pub plan: MaskPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiments: Vec<ExperimentKind>,
    pub grid: Vec<u32>,
    pub fill: Rgb,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn plans(&self, kind: ExperimentKind) -> Vec<MaskPlan> {
        self.entries.iter().filter(|e| e.plan.kind == kind).map(|e| e.plan.clone()).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OccludeError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("image {0:?} has no file on disk ({1})")]
    MissingImage(String, PathBuf),
    #[error("cannot create {0}: {1}")]
    Io(PathBuf, std::io::Error),
}

pub fn relative_file(kind: ExperimentKind, c: u32, plan: &MaskPlan) -> String {
    format!("{}/c{}/{}.png", kind.as_str(), c, plan.sample_id())
}

pub fn image_path(images_dir: &Path, dataset: &Dataset, image: usize) -> PathBuf {
    let info = &dataset.images()[image];
    images_dir.join(info.file_name.clone().unwrap_or_else(|| format!("{}.png", info.id)))
}

/// Builds plans for every (experiment, size, image, present part) and,
/// when `images_dir` is given, writes the manipulated images.
pub fn run(
    pool: &ThreadPool,
    dataset: &Dataset,
    images_dir: Option<&Path>,
    kinds: &[ExperimentKind],
    grid: &[u32],
    fill: Rgb,
    out: &Path,
) -> Result<Manifest, OccludeError> {
    if let Some(dir) = images_dir {
        for i in 0..dataset.images().len() {
            let p = image_path(dir, dataset, i);
            if !p.is_file() {
                return Err(OccludeError::MissingImage(dataset.images()[i].id.clone(), p));
            }
        }
        for kind in kinds {
            for c in grid {
                let d = out.join(kind.as_str()).join(format!("c{c}"));
                fs::create_dir_all(&d).map_err(|e| OccludeError::Io(d.clone(), e))?;
            }
        }
    }

    let per_image: Vec<Vec<ManifestEntry>> = pool.install(|| {
        (0..dataset.images().len())
            .into_par_iter()
            .map(|i| -> Result<Vec<ManifestEntry>, OccludeError> {
                let source = images_dir.map(|dir| load_png(&image_path(dir, dataset, i))).transpose()?;
                let mut entries = Vec::new();
                for &kind in kinds {
                    for &c in grid {
                        for plan in plans_for_image(dataset, kind, i, c, fill) {
                            let file = relative_file(kind, c, &plan);
                            if let Some(src) = &source {
                                save_png(&out.join(&file), &apply_plan(src, &plan)?)?;
                            }
                            entries.push(ManifestEntry { file, plan });
                        }
                    }
                }
                Ok(entries)
            })
            .collect::<Result<_, _>>()
    })?;

    // order: experiment, size, image, class
    let mut entries: Vec<ManifestEntry> = per_image.into_iter().flatten().collect();
    let kind_rank = |k: ExperimentKind| kinds.iter().position(|&x| x == k).unwrap_or(usize::MAX);
    let size_rank = |c: u32| grid.iter().position(|&x| x == c).unwrap_or(usize::MAX);
    entries.sort_by_key(|e| (kind_rank(e.plan.kind), size_rank(e.plan.context)));
    Ok(Manifest { experiments: kinds.to_vec(), grid: grid.to_vec(), fill, entries })
}

/// Scores per-size detection files for one experiment of a manifest.
pub fn evaluate(
    manifest: &Manifest,
    kind: ExperimentKind,
    detections: &BTreeMap<u32, Vec<Detection>>,
    iou_threshold: f64,
) -> Result<ContextRunReport, ContextError> {
    evaluate_context_run(&manifest.plans(kind), detections, &manifest.grid, iou_threshold)
}
