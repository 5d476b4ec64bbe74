//! Thread-pool versions of the batch computations.
//!
//! Work fans out per part, class or image; results are collected in input
//! order and reduced by the same core routines as the sequential path, so
//! output does not depend on the number of threads.

use partverify_core::metrics::{
    class_ap, group_members, ApReport, BestOverlaps, Interpolation, MetricError, PartScorer, RecallCurve,
    VerificationReport,
};
use partverify_core::model::{Dataset, Detection, EvalConfig, Presence};
use partverify_core::matching::DetectionIndex;
use partverify_core::synth::{
    assemble_dataset, class_mean_boxes, generate_image, noisy_image, oracle_image, prior_image, DetectorKind,
    DetectorParams, LayoutSpec, SynthError,
};
use rayon::prelude::*;
use rayon::ThreadPool;

pub fn pool(threads: Option<usize>) -> ThreadPool {
    let n = threads
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("thread pool")
}

pub fn best_overlaps(
    pool: &ThreadPool,
    scorer: &PartScorer<'_>,
    group: Presence,
    score_threshold: f64,
) -> BestOverlaps {
    let members = group_members(scorer.dataset(), group);
    let entries = pool.install(|| {
        members
            .par_iter()
            .map(|&i| (i, scorer.best_iou(i, score_threshold)))
            .collect()
    });
    BestOverlaps { group, score_threshold, entries }
}

pub fn verify(
    pool: &ThreadPool,
    dataset: &Dataset,
    dets: &[Detection],
    config: &EvalConfig,
) -> Result<VerificationReport, MetricError> {
    config.validate()?;
    let scorer = PartScorer::new(dataset, dets);
    let present = best_overlaps(pool, &scorer, Presence::Present, config.score_threshold)
        .recall_at(dataset, config.t_present)?;
    let missing = best_overlaps(pool, &scorer, Presence::Missing, config.score_threshold)
        .recall_at(dataset, config.t_missing)?;
    VerificationReport::assemble(&present, &missing, config)
}

pub fn recall_curve(
    pool: &ThreadPool,
    dataset: &Dataset,
    dets: &[Detection],
    group: Presence,
    thresholds: &[f64],
    score_threshold: f64,
) -> Result<RecallCurve, MetricError> {
    let scorer = PartScorer::new(dataset, dets);
    let overlaps = best_overlaps(pool, &scorer, group, score_threshold);
    RecallCurve::from_overlaps(dataset, &overlaps, thresholds)
}

pub fn mean_average_precision(
    pool: &ThreadPool,
    dataset: &Dataset,
    dets: &[Detection],
    grid: &[f64],
    interpolation: Interpolation,
) -> ApReport {
    let index = DetectionIndex::build(dataset, dets);
    let per_class = pool.install(|| {
        (0..dataset.vocabulary().len())
            .into_par_iter()
            .map(|c| class_ap(dataset, dets, &index, c, grid, interpolation))
            .collect()
    });
    ApReport::from_classes(per_class, grid, interpolation)
}

pub fn generate_dataset(
    pool: &ThreadPool,
    spec: &LayoutSpec,
    n_images: usize,
    seed: u64,
) -> Result<Dataset, SynthError> {
    spec.validate()?;
    if n_images == 0 {
        return Err(SynthError::NoImages);
    }
    let per_image = pool.install(|| (0..n_images).into_par_iter().map(|i| generate_image(spec, seed, i)).collect());
    assemble_dataset(spec, per_image)
}

pub fn run_detector(
    pool: &ThreadPool,
    dataset: &Dataset,
    params: &DetectorParams,
) -> Result<Vec<Detection>, SynthError> {
    params.validate()?;
    let n = dataset.images().len();
    let means = match params.kind {
        DetectorKind::Prior if n < 2 => return Err(SynthError::TooFewImages { needed: 2, found: n }),
        DetectorKind::Prior => class_mean_boxes(dataset),
        _ => Vec::new(),
    };
    let per_image: Vec<Vec<Detection>> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| match params.kind {
                DetectorKind::Oracle => oracle_image(dataset, params, i),
                DetectorKind::Prior => prior_image(dataset, params, &means, i),
                DetectorKind::Noisy => noisy_image(dataset, params, i),
            })
            .collect()
    });
    Ok(per_image.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use partverify_core::metrics;
    use partverify_core::synth;

    #[test]
    fn matches_sequential_at_any_thread_count() {
        let spec = LayoutSpec::bike_default();
        let ds = synth::generate_dataset(&spec, 40, 3).unwrap();
        let prior = synth::run_prior(&ds, &DetectorParams::prior(4)).unwrap();
        let noisy = synth::run_noisy(&ds, &DetectorParams::noisy(4, 0.3, 5.0));
        let cfg = EvalConfig::default();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        for threads in [1, 3, 8] {
            let p = pool(Some(threads));
            assert_eq!(generate_dataset(&p, &spec, 40, 3).unwrap(), ds);
            assert_eq!(run_detector(&p, &ds, &DetectorParams::prior(4)).unwrap(), prior);
            assert_eq!(run_detector(&p, &ds, &DetectorParams::noisy(4, 0.3, 5.0)).unwrap(), noisy);
            for dets in [&prior, &noisy] {
                assert_eq!(verify(&p, &ds, dets, &cfg).unwrap(), metrics::verify(&ds, dets, &cfg).unwrap());
                assert_eq!(
                    recall_curve(&p, &ds, dets, Presence::Missing, &grid, 0.0).unwrap(),
                    metrics::recall_curve(&ds, dets, Presence::Missing, &grid, 0.0).unwrap()
                );
                assert_eq!(
                    mean_average_precision(&p, &ds, dets, &cfg.ap_iou_grid, Interpolation::Coco101),
                    metrics::mean_average_precision(&ds, dets, &cfg.ap_iou_grid, Interpolation::Coco101)
                );
            }
        }
    }
}
