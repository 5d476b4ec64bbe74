//! Expected values computed independently of the implementation: hand
//! fixtures, a brute-force matcher, and simulation checks on synthetic data.

use partverify_core::context::{
    apply_plan, evaluate_context_run, oracle_for_plans, plan_hide_fg, plans_for_dataset, prior_for_plans,
    ExperimentKind, CONTEXT_GRID, DEFAULT_FILL, DEFAULT_IOU,
};
use partverify_core::geometry::BBox;
use partverify_core::matching::greedy_ap_match;
use partverify_core::metrics::{compute_fvv, layout_stats, mean_average_precision, recall, recall_curve, verify, Interpolation};
use partverify_core::model::{Dataset, Detection, EvalConfig, ImageInfo, PartAnnotation, PartState, Presence};
use partverify_core::synth::{
    class_color, class_mean_boxes, generate_dataset, render_image, run_noisy, run_oracle, run_prior, DetectorParams,
    LayoutSpec,
};
use proptest::prelude::*;
use std::collections::BTreeMap;

fn ann(img: &str, class: &str, b: [f64; 4], state: PartState) -> PartAnnotation {
    PartAnnotation { image_id: img.into(), part_class: class.into(), bbox: BBox::new(b[0], b[1], b[2], b[3]), state }
}

fn det(img: &str, class: &str, b: [f64; 4], score: f64) -> Detection {
    Detection { image_id: img.into(), part_class: class.into(), bbox: BBox::new(b[0], b[1], b[2], b[3]), score }
}

/// Two images, three classes, four missing parts.
///
/// missing: (i0,b) det IoU 0.3, (i0,c) det IoU 0.05, (i1,a) exact det, (i1,c) none
/// present: (i0,a) exact det, (i1,b) det IoU 0.4
fn fixture() -> (Dataset, Vec<Detection>) {
    let g = [0.0, 0.0, 10.0, 10.0];
    let images = ["i0", "i1"]
        .iter()
        .map(|id| ImageInfo { id: id.to_string(), width: 50, height: 50, file_name: None })
        .collect();
    let ds = Dataset::new(
        images,
        vec!["a".into(), "b".into(), "c".into()],
        vec![
            ann("i0", "a", g, PartState::Intact),
            ann("i0", "b", g, PartState::Absent),
            ann("i0", "c", g, PartState::Occluded),
            ann("i1", "a", g, PartState::Absent),
            ann("i1", "b", g, PartState::Damaged),
            ann("i1", "c", g, PartState::Occluded),
        ],
    )
    .unwrap();
    let dets = vec![
        det("i0", "a", g, 0.9),
        det("i0", "b", [0.0, 0.0, 10.0, 3.0], 0.8),
        det("i0", "c", [0.0, 0.0, 10.0, 0.5], 0.7),
        det("i1", "a", g, 0.6),
        det("i1", "b", [0.0, 0.0, 10.0, 4.0], 0.5),
    ];
    (ds, dets)
}

#[test]
fn fixture_recalls_match_hand_count() {
    let (ds, dets) = fixture();
    let m = recall(&ds, &dets, Presence::Missing, 0.1, 0.0).unwrap();
    assert_eq!((m.hits, m.total), (2, 4));
    assert_eq!(m.recall, 0.5);
    let p = recall(&ds, &dets, Presence::Present, 0.5, 0.0).unwrap();
    assert_eq!((p.hits, p.total), (1, 2));

    let rep = verify(&ds, &dets, &EvalConfig::default()).unwrap();
    assert_eq!((rep.r_present, rep.r_missing), (0.5, 0.5));
    // (1.01 * 0.5 * 0.5) / (0.01 * 0.5 + 0.5)
    assert!((rep.f_vv - 0.2525 / 0.505).abs() < 1e-12);
    assert_eq!(rep.f_vv, compute_fvv(0.5, 0.5, 0.1).unwrap());
    let b = rep.per_class.iter().find(|c| c.class == "b").unwrap();
    assert_eq!((b.present_hits, b.present_support, b.missing_hits, b.missing_support), (0, 1, 1, 1));
}

#[test]
fn fixture_without_localization() {
    let (ds, dets) = fixture();
    let cfg = EvalConfig { t_present: 0.0, t_missing: 0.0, ..Default::default() };
    let rep = verify(&ds, &dets, &cfg).unwrap();
    assert_eq!((rep.r_present, rep.r_missing), (1.0, 0.75));
}

#[test]
fn curve_is_pointwise_recall() {
    let ds = generate_dataset(&LayoutSpec::bike_default(), 60, 11).unwrap();
    let dets = run_prior(&ds, &DetectorParams::prior(3)).unwrap();
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
    let curve = recall_curve(&ds, &dets, Presence::Missing, &grid, 0.0).unwrap();
    for (t, r) in grid.iter().zip(&curve.recall) {
        assert_eq!(*r, recall(&ds, &dets, Presence::Missing, *t, 0.0).unwrap().recall);
    }
    assert!(curve.recall.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(curve.recall[0], 1.0);
    assert!(*curve.recall.last().unwrap() < 0.1);

    let oracle = run_oracle(&ds, &DetectorParams::oracle(3));
    let oc = recall_curve(&ds, &oracle, Presence::Missing, &grid, 0.0).unwrap();
    assert!(oc.recall.iter().all(|&r| r == 0.0));
}

#[test]
fn oracle_is_perfect() {
    let ds = generate_dataset(&LayoutSpec::bike_default(), 100, 2).unwrap();
    let dets = run_oracle(&ds, &DetectorParams::oracle(9));
    let rep = verify(&ds, &dets, &EvalConfig::default()).unwrap();
    assert_eq!((rep.r_present, rep.r_missing, rep.f_vv), (1.0, 0.0, 1.0));
    let ap = mean_average_precision(&ds, &dets, &EvalConfig::default().ap_iou_grid, Interpolation::Coco101);
    assert_eq!(ap.map, Some(1.0));
}

#[test]
fn prior_hallucinates_everything_at_zero_iou() {
    let ds = generate_dataset(&LayoutSpec::bike_default(), 50, 4).unwrap();
    let dets = run_prior(&ds, &DetectorParams::prior(1)).unwrap();
    let cfg = EvalConfig { t_present: 0.0, t_missing: 0.0, ..Default::default() };
    let rep = verify(&ds, &dets, &cfg).unwrap();
    assert_eq!((rep.r_present, rep.r_missing, rep.f_vv), (1.0, 1.0, 0.0));
    let loc = verify(&ds, &dets, &EvalConfig::default()).unwrap();
    assert!(loc.f_vv < 1.0);
    let ap = mean_average_precision(&ds, &dets, &[0.5], Interpolation::Coco101);
    assert!(ap.map.unwrap() > 0.0);
}

#[test]
fn noisy_drop_rate_matches_binomial_expectation() {
    let ds = generate_dataset(&LayoutSpec::bike_default(), 400, 21).unwrap();
    let dets = run_noisy(&ds, &DetectorParams::noisy(5, 0.2, 0.0));
    let r = recall(&ds, &dets, Presence::Present, 0.5, 0.0).unwrap();
    // ~5.8k present parts: binomial sd ~ 0.005
    assert!((r.recall - 0.8).abs() <= 0.03, "{}", r.recall);
}

#[test]
fn state_ratios_follow_probabilities() {
    let ds = generate_dataset(&LayoutSpec::bike_default(), 2000, 2024).unwrap();
    let st = layout_stats(&ds).unwrap();
    for (state, p) in [
        (PartState::Intact, 0.605),
        (PartState::Damaged, 0.06),
        (PartState::Absent, 0.195),
        (PartState::Occluded, 0.14),
    ] {
        assert!((st.ratio(state) - p).abs() <= 0.02, "{state}: {}", st.ratio(state));
    }
}

#[test]
fn hide_fg_at_zero_leaves_no_part_color() {
    let ds = generate_dataset(&LayoutSpec::bike_default(), 3, 8).unwrap();
    for i in 0..3 {
        let img = render_image(&ds, i);
        for c in 0..ds.vocabulary().len() {
            let a = ds.annotation_at(i, c).unwrap();
            if a.presence() != Presence::Present {
                continue;
            }
            let out = apply_plan(&img, &plan_hide_fg(a, 0, ds.images()[i].extent(), DEFAULT_FILL)).unwrap();
            assert_eq!(out.pixels_in(&a.bbox).filter(|p| p.2 == class_color(c)).count(), 0);
        }
    }
}

#[test]
fn shifted_prior_collapses_and_oracle_stays_perfect() {
    let ds = generate_dataset(&LayoutSpec::bike_default(), 20, 6).unwrap();
    let means = class_mean_boxes(&ds);
    let mut acc = BTreeMap::new();
    for kind in [ExperimentKind::HideBg, ExperimentKind::LocationShift] {
        let plans = plans_for_dataset(&ds, kind, &CONTEXT_GRID, DEFAULT_FILL);
        let mut oracle = BTreeMap::new();
        let mut prior = BTreeMap::new();
        for &c in &CONTEXT_GRID {
            let at_c: Vec<_> = plans.iter().filter(|p| p.context == c).cloned().collect();
            oracle.insert(c, oracle_for_plans(&at_c));
            prior.insert(c, prior_for_plans(&at_c, &ds, &means));
        }
        let o = evaluate_context_run(&plans, &oracle, &CONTEXT_GRID, DEFAULT_IOU).unwrap();
        assert!(o.points.iter().all(|p| p.accuracy == 1.0));
        let p = evaluate_context_run(&plans, &prior, &CONTEXT_GRID, DEFAULT_IOU).unwrap();
        acc.insert(kind, p.points);
    }
    let bg0 = acc[&ExperimentKind::HideBg][0].accuracy;
    let shift0 = acc[&ExperimentKind::LocationShift][0].accuracy;
    assert!(bg0 > 0.5, "{bg0}");
    assert!(shift0 < bg0 / 2.0, "{shift0} vs {bg0}");
    // at 350 px of context the crop is nearly the whole frame
    let shift_last = acc[&ExperimentKind::LocationShift].last().unwrap().accuracy;
    assert!(shift_last > shift0);
}

// Brute-force greedy matcher: repeatedly picks the first detection in
// processing order by scanning all remaining ones, then scans every ground
// truth for the best unmatched overlap.
fn reference_iou(a: &BBox, b: &BBox) -> f64 {
    let area = |x: &BBox| (x.x_max - x.x_min) * (x.y_max - x.y_min);
    if area(a) <= 0.0 || area(b) <= 0.0 {
        return 0.0;
    }
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    inter / (area(a) + area(b) - inter)
}

fn goes_first(a: &Detection, b: &Detection) -> bool {
    if a.score != b.score {
        return a.score > b.score;
    }
    if a.image_id != b.image_id {
        return a.image_id < b.image_id;
    }
    let (p, q) = (a.bbox.to_array(), b.bbox.to_array());
    for k in 0..4 {
        if p[k] != q[k] {
            return p[k] < q[k];
        }
    }
    false
}

fn brute_force(dets: &[Detection], gts: &[PartAnnotation], t: f64) -> Vec<(Detection, bool)> {
    let mut remaining: Vec<usize> = (0..dets.len()).collect();
    let mut matched = vec![false; gts.len()];
    let mut out = Vec::new();
    while !remaining.is_empty() {
        let mut pick = 0;
        for k in 1..remaining.len() {
            if goes_first(&dets[remaining[k]], &dets[remaining[pick]]) {
                pick = k;
            }
        }
        let d = &dets[remaining.remove(pick)];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if matched[g] || gt.image_id != d.image_id {
                continue;
            }
            let v = reference_iou(&gt.bbox, &d.bbox);
            if v >= t && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            matched[g] = true;
        }
        out.push((d.clone(), best.is_some()));
    }
    out
}

fn small_box() -> impl Strategy<Value = BBox> {
    (0u32..6, 0u32..6, 1u32..5, 1u32..5)
        .prop_map(|(x, y, w, h)| BBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn greedy_agrees_with_brute_force(
        ds in prop::collection::vec((0u8..2, small_box(), 0u8..4), 0..=5),
        gs in prop::collection::vec((0u8..2, small_box()), 0..=3),
        t in prop::sample::select(vec![0.0, 0.1, 0.25, 0.5, 0.75]),
    ) {
        let dets: Vec<Detection> = ds.iter().map(|(i, b, s)| Detection { image_id: format!("im{i}"), part_class: "x".into(), bbox: *b, score: *s as f64 / 4.0 }).collect();
        let gts: Vec<PartAnnotation> = gs.iter().map(|(i, b)| PartAnnotation { image_id: format!("im{i}"), part_class: "x".into(), bbox: *b, state: PartState::Intact }).collect();
        let dr: Vec<&Detection> = dets.iter().collect();
        let gr: Vec<&PartAnnotation> = gts.iter().collect();
        let flags = greedy_ap_match(&dr, &gr, t);
        let expected = brute_force(&dets, &gts, t);
        prop_assert_eq!(flags.n_gt, gts.len());
        prop_assert_eq!(flags.true_positive.len(), expected.len());
        for (k, (d, tp)) in expected.iter().enumerate() {
            prop_assert_eq!(&dets[flags.order[k]], d);
            prop_assert_eq!(flags.true_positive[k], *tp);
        }
        prop_assert!(flags.tp_count() <= dets.len().min(gts.len()));
    }
}
