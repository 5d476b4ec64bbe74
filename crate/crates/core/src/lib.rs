//! Evaluation primitives for visual part verification.
//!
//! A part verifier answers, for every expected part of an object, whether
//! the part is there or not. This crate scores detector output for that
//! task: present-part recall, missing-part (hallucination) recall, the
//! recall-based `F_vv` score, AP/mAP for comparison, synthetic datasets and
//! reference detectors, and the context-masking experiments used to probe
//! how much a detector leans on surroundings and location.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, PNG output,
//! thread pools and the command line live in the `partverify` crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod context;
pub mod geometry;
pub mod matching;
pub mod metrics;
pub mod model;
pub mod raster;
pub mod synth;

pub use geometry::{expand, iou, mirror_about_center, shrink, BBox, ImageExtent};
pub use matching::{greedy_ap_match, hit_test, ApFlags, MatchResult};
pub use metrics::{
    average_precision, compute_fvv, layout_stats, mean_average_precision, recall, recall_curve,
    verify, ApReport, Interpolation, LayoutStats, MetricError, RecallCurve, VerificationReport,
};
pub use model::{
    group_state, Dataset, Detection, EvalConfig, ImageInfo, ModelError, PartAnnotation, PartState,
    Presence,
};
