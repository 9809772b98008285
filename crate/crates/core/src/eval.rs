//! Miss rate versus false positives per image.
//!
//! Detections are matched greedily per frame, the miss-rate/FPPI curve is
//! swept over every distinct detection score, and the curve is summarised by
//! its log-average miss rate over a FPPI range.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::codec::Detection;
use crate::geometry::{classify, ioa, iou, Annotation, GtClass, Occlusion, OcclusionSet, SubsetSpec};

pub const MATCH_IOU: f64 = 0.5;
pub const IGNORE_IOA: f64 = 0.5;
pub const MR_FLOOR: f64 = 1e-4;
pub const REFERENCE_POINTS: usize = 9;
pub const DEFAULT_FPPI_RANGE: (f64, f64) = (1e-2, 1.0);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("empty ground truth")]
    EmptyGroundTruth,
    #[error("empty curve")]
    EmptyCurve,
    #[error("invalid FPPI range")]
    InvalidRange,
    #[error("detections reference frame `{0}` which has no ground truth")]
    UnknownFrame(String),
    #[error("cannot sample: no frames {0} pedestrians")]
    EmptyClass(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Disposition {
    TruePositive,
    FalsePositive,
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetMatch {
    /// Index into the frame's detection list.
    pub detection: usize,
    /// Index into the frame's GT list for true positives.
    pub gt: Option<usize>,
    pub disposition: Disposition,
    pub score: f64,
}

/// Matching outcome of one frame, `matches` in descending score order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame_id: String,
    pub matches: Vec<DetMatch>,
    /// Evaluate-class GT left unmatched.
    pub misses: usize,
}

impl FrameResult {
    pub fn count(&self, d: Disposition) -> usize {
        self.matches.iter().filter(|m| m.disposition == d).count()
    }

    /// Number of evaluate-class GT in the frame.
    pub fn gt_count(&self) -> usize {
        self.count(Disposition::TruePositive) + self.misses
    }
}

/// Greedy matching in descending score order (ties keep input order).
pub fn match_frame(frame_id: &str, dets: &[Detection], gts: &[(Annotation, GtClass)]) -> FrameResult {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score().total_cmp(&dets[a].score()));
    let mut taken = alloc::vec![false; gts.len()];
    let mut matches = Vec::with_capacity(dets.len());
    for &di in &order {
        let det = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, (gt, class)) in gts.iter().enumerate() {
            if *class != GtClass::Evaluate || taken[gi] {
                continue;
            }
            let o = iou(&det.bbox, &gt.bbox);
            if o >= MATCH_IOU && best.is_none_or(|(_, b)| o > b) {
                best = Some((gi, o));
            }
        }
        let (gt, disposition) = match best {
            Some((gi, _)) => {
                taken[gi] = true;
                (Some(gi), Disposition::TruePositive)
            }
            None => {
                let ignored = gts
                    .iter()
                    .any(|(gt, c)| *c == GtClass::Ignore && ioa(&det.bbox, &gt.bbox) >= IGNORE_IOA);
                if ignored {
                    (None, Disposition::Ignored)
                } else {
                    (None, Disposition::FalsePositive)
                }
            }
        };
        matches.push(DetMatch {
            detection: di,
            gt,
            disposition,
            score: det.score(),
        });
    }
    let misses = gts
        .iter()
        .zip(&taken)
        .filter(|((_, c), t)| *c == GtClass::Evaluate && !**t)
        .count();
    FrameResult {
        frame_id: frame_id.into(),
        matches,
        misses,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub fppi: f64,
    pub miss_rate: f64,
}

/// Points in ascending FPPI with non-increasing miss rate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MrFppiCurve {
    pub points: Vec<CurvePoint>,
}

/// Sweeps the score threshold over every distinct detection score.
///
/// Greedy matching restricted to detections scoring at least `t` is a prefix
/// of the full matching, so one pass suffices. Where several thresholds
/// share a FPPI value only the lowest miss rate is kept. With no detections
/// the curve is the single point `(0, 1)`.
pub fn mr_fppi_curve(frames: &[FrameResult]) -> Result<MrFppiCurve, EvalError> {
    let total_gt: usize = frames.iter().map(FrameResult::gt_count).sum();
    if frames.is_empty() || total_gt == 0 {
        return Err(EvalError::EmptyGroundTruth);
    }
    let n_frames = frames.len() as f64;
    let mut all: Vec<(f64, Disposition)> = frames
        .iter()
        .flat_map(|f| f.matches.iter().map(|m| (m.score, m.disposition)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points: Vec<CurvePoint> = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            match all[i].1 {
                Disposition::TruePositive => tp += 1,
                Disposition::FalsePositive => fp += 1,
                Disposition::Ignored => {}
            }
            i += 1;
        }
        let p = CurvePoint {
            fppi: fp as f64 / n_frames,
            miss_rate: 1.0 - tp as f64 / total_gt as f64,
        };
        match points.last_mut() {
            Some(last) if last.fppi == p.fppi => *last = p,
            _ => points.push(p),
        }
    }
    if points.is_empty() {
        points.push(CurvePoint {
            fppi: 0.0,
            miss_rate: 1.0,
        });
    }
    Ok(MrFppiCurve { points })
}

/// The reference FPPI values, evenly spaced in log10 over `range`.
pub fn reference_fppi(range: (f64, f64)) -> Result<[f64; REFERENCE_POINTS], EvalError> {
    let (lo, hi) = range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(EvalError::InvalidRange);
    }
    let (a, b) = (libm::log10(lo), libm::log10(hi));
    let mut refs = [0.0; REFERENCE_POINTS];
    for (i, r) in refs.iter_mut().enumerate() {
        *r = libm::pow(10.0, a + (b - a) * i as f64 / (REFERENCE_POINTS - 1) as f64);
    }
    Ok(refs)
}

/// Log-average miss rate in percent.
pub fn log_average_mr(curve: &MrFppiCurve, range: (f64, f64)) -> Result<f64, EvalError> {
    if curve.points.is_empty() {
        return Err(EvalError::EmptyCurve);
    }
    let refs = reference_fppi(range)?;
    let worst = curve
        .points
        .iter()
        .map(|p| p.miss_rate)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut log_sum = 0.0;
    for r in refs {
        let mr = curve
            .points
            .iter()
            .rev()
            .find(|p| p.fppi <= r)
            .map_or(worst, |p| p.miss_rate);
        log_sum += libm::log(mr.max(MR_FLOOR));
    }
    Ok(libm::exp(log_sum / REFERENCE_POINTS as f64) * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryKind {
    Subset,
    Size,
    Occlusion,
}

impl EntryKind {
    pub fn name(&self) -> &'static str {
        match self {
            EntryKind::Subset => "subset",
            EntryKind::Size => "size",
            EntryKind::Occlusion => "occlusion",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub subsets: Vec<SubsetSpec>,
    /// Inclusive height ranges in pixels.
    pub size_bins: Vec<(f64, f64)>,
    pub occlusion_bins: Vec<Occlusion>,
    pub fppi_range: (f64, f64),
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            subsets: alloc::vec![SubsetSpec::reasonable(), SubsetSpec::all()],
            size_bins: alloc::vec![(20.0, 40.0), (40.0, 60.0), (60.0, 80.0), (80.0, f64::INFINITY)],
            occlusion_bins: alloc::vec![Occlusion::None, Occlusion::Partial, Occlusion::Heavy],
            fppi_range: DEFAULT_FPPI_RANGE,
        }
    }
}

fn bin_bound(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

impl EvalConfig {
    /// Every subset and bin as a `SubsetSpec`, tagged with its kind.
    pub fn specs(&self) -> Vec<(EntryKind, SubsetSpec)> {
        let mut out: Vec<(EntryKind, SubsetSpec)> =
            self.subsets.iter().map(|s| (EntryKind::Subset, s.clone())).collect();
        for &(lo, hi) in &self.size_bins {
            let name = format!("h{}-{}", bin_bound(lo), bin_bound(hi));
            if let Ok(spec) = SubsetSpec::new(&name, lo, hi, OcclusionSet::ALL) {
                out.push((EntryKind::Size, spec));
            }
        }
        for &occ in &self.occlusion_bins {
            let name = format!("occ-{}", occ.name());
            if let Ok(spec) = SubsetSpec::new(&name, 0.0, f64::INFINITY, OcclusionSet::of(&[occ])) {
                out.push((EntryKind::Occlusion, spec));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub name: String,
    pub kind: EntryKind,
    pub gt_count: usize,
    /// `None` when the subset holds no evaluate-class GT.
    pub log_average_mr: Option<f64>,
    pub curve: Option<MrFppiCurve>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub frames: usize,
    pub entries: Vec<ReportEntry>,
}

impl EvalReport {
    pub fn entry(&self, name: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.name.eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:<16} {:>7} {:>8}", "kind", "name", "gt", "MR(%)")?;
        for e in &self.entries {
            let mr = match e.log_average_mr {
                Some(v) => format!("{v:.2}"),
                None => "n/a".into(),
            };
            writeln!(f, "{:<10} {:<16} {:>7} {:>8}", e.kind.name(), e.name, e.gt_count, mr)?;
        }
        write!(f, "frames: {}", self.frames)
    }
}

/// Matches every GT frame under every subset and bin of `cfg`.
///
/// Frames without detections count as frames with zero detections; a
/// detection frame absent from the GT is an error.
pub fn evaluate(
    dets_by_frame: &BTreeMap<String, Vec<Detection>>,
    gts_by_frame: &BTreeMap<String, Vec<Annotation>>,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if let Some(id) = dets_by_frame.keys().find(|k| !gts_by_frame.contains_key(*k)) {
        return Err(EvalError::UnknownFrame(id.clone()));
    }
    reference_fppi(cfg.fppi_range)?;
    let empty = Vec::new();
    let mut entries = Vec::new();
    for (kind, spec) in cfg.specs() {
        let frames: Vec<FrameResult> = gts_by_frame
            .iter()
            .map(|(id, anns)| {
                let gts: Vec<(Annotation, GtClass)> =
                    anns.iter().map(|a| (*a, classify(a, &spec))).collect();
                let dets = dets_by_frame.get(id).unwrap_or(&empty);
                match_frame(id, dets, &gts)
            })
            .collect();
        let gt_count = frames.iter().map(FrameResult::gt_count).sum();
        let (curve, mr) = match mr_fppi_curve(&frames) {
            Ok(c) => {
                let mr = log_average_mr(&c, cfg.fppi_range)?;
                (Some(c), Some(mr))
            }
            Err(EvalError::EmptyGroundTruth) => (None, None),
            Err(e) => return Err(e),
        };
        entries.push(ReportEntry {
            name: spec.name().into(),
            kind,
            gt_count,
            log_average_mr: mr,
            curve,
        });
    }
    Ok(EvalReport {
        frames: gts_by_frame.len(),
        entries,
    })
}

/// Draws `n` frames with replacement; each draw picks the pedestrian class
/// with probability 0.5, then a frame uniformly within the class.
pub fn balanced_sample<R: Rng + ?Sized>(
    index: &[(String, bool)],
    n: usize,
    rng: &mut R,
) -> Result<Vec<String>, EvalError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let with: Vec<&String> = index.iter().filter(|(_, p)| *p).map(|(id, _)| id).collect();
    let without: Vec<&String> = index.iter().filter(|(_, p)| !*p).map(|(id, _)| id).collect();
    if with.is_empty() {
        return Err(EvalError::EmptyClass("with"));
    }
    if without.is_empty() {
        return Err(EvalError::EmptyClass("without"));
    }
    Ok((0..n)
        .map(|_| {
            let class = if rng.random::<f64>() < 0.5 { &with } else { &without };
            class[rng.random_range(0..class.len())].clone()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BBox, Label};
    use crate::rng::RngState;
    use alloc::vec;
    use proptest::prelude::*;

    fn det(x: f64, y: f64, w: f64, h: f64, s: f64) -> Detection {
        Detection::new(BBox::new(x, y, w, h).unwrap(), s).unwrap()
    }

    fn gt(x: f64, y: f64, w: f64, h: f64, class: GtClass) -> (Annotation, GtClass) {
        (Annotation::person(BBox::new(x, y, w, h).unwrap()), class)
    }

    #[test]
    fn single_match() {
        // IoU = 60 / 100 = 0.6
        let g = [gt(0.0, 0.0, 10.0, 10.0, GtClass::Evaluate)];
        let d = [det(0.0, 0.0, 10.0, 6.0, 0.9)];
        let r = match_frame("f", &d, &g);
        assert_eq!(r.matches[0].disposition, Disposition::TruePositive);
        assert_eq!(r.matches[0].gt, Some(0));
        assert_eq!(r.misses, 0);
    }

    #[test]
    fn no_detections_is_a_miss() {
        let g = [gt(0.0, 0.0, 10.0, 10.0, GtClass::Evaluate)];
        let r = match_frame("f", &[], &g);
        assert_eq!(r.misses, 1);
        assert!(r.matches.is_empty());
    }

    #[test]
    fn detection_inside_ignore_region() {
        let g = [gt(0.0, 0.0, 40.0, 80.0, GtClass::Ignore)];
        let d = [det(5.0, 5.0, 10.0, 20.0, 0.7)];
        let r = match_frame("f", &d, &g);
        assert_eq!(r.matches[0].disposition, Disposition::Ignored);
        assert_eq!(r.count(Disposition::FalsePositive), 0);
        assert_eq!(r.misses, 0);
    }

    #[test]
    fn each_gt_matched_once() {
        let g = [gt(0.0, 0.0, 10.0, 20.0, GtClass::Evaluate)];
        let d = [det(0.0, 0.0, 10.0, 20.0, 0.5), det(0.0, 1.0, 10.0, 20.0, 0.9)];
        let r = match_frame("f", &d, &g);
        assert_eq!(r.matches[0].detection, 1);
        assert_eq!(r.matches[0].disposition, Disposition::TruePositive);
        assert_eq!(r.matches[1].disposition, Disposition::FalsePositive);
    }

    #[test]
    fn picks_highest_iou_gt() {
        let g = [
            gt(0.0, 0.0, 10.0, 20.0, GtClass::Evaluate),
            gt(2.0, 0.0, 10.0, 20.0, GtClass::Evaluate),
        ];
        let d = [det(2.0, 0.0, 10.0, 20.0, 0.9)];
        assert_eq!(match_frame("f", &d, &g).matches[0].gt, Some(1));
    }

    #[test]
    fn curve_of_tp_then_fp() {
        let a = match_frame(
            "a",
            &[det(0.0, 0.0, 10.0, 20.0, 0.9)],
            &[gt(0.0, 0.0, 10.0, 20.0, GtClass::Evaluate)],
        );
        let b = match_frame(
            "b",
            &[det(50.0, 50.0, 10.0, 20.0, 0.8)],
            &[gt(0.0, 0.0, 10.0, 20.0, GtClass::Evaluate)],
        );
        let c = mr_fppi_curve(&[a, b]).unwrap();
        assert_eq!(
            c.points,
            vec![
                CurvePoint { fppi: 0.0, miss_rate: 0.5 },
                CurvePoint { fppi: 0.5, miss_rate: 0.5 }
            ]
        );
    }

    #[test]
    fn perfect_detector_curve() {
        let g = [
            gt(0.0, 0.0, 10.0, 20.0, GtClass::Evaluate),
            gt(40.0, 0.0, 10.0, 20.0, GtClass::Evaluate),
        ];
        let d = [det(0.0, 0.0, 10.0, 20.0, 0.9), det(40.0, 0.0, 10.0, 20.0, 0.8)];
        let c = mr_fppi_curve(&[match_frame("f", &d, &g)]).unwrap();
        assert_eq!(c.points, vec![CurvePoint { fppi: 0.0, miss_rate: 0.0 }]);
        let mr = log_average_mr(&c, DEFAULT_FPPI_RANGE).unwrap();
        assert!((mr - 0.01).abs() < 1e-12);
    }

    #[test]
    fn zero_detections_curve() {
        let g = [gt(0.0, 0.0, 10.0, 20.0, GtClass::Evaluate)];
        let c = mr_fppi_curve(&[match_frame("f", &[], &g)]).unwrap();
        assert_eq!(c.points, vec![CurvePoint { fppi: 0.0, miss_rate: 1.0 }]);
        assert!((log_average_mr(&c, DEFAULT_FPPI_RANGE).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn empty_ground_truth_is_an_error() {
        let g = [gt(0.0, 0.0, 10.0, 20.0, GtClass::Ignore)];
        assert_eq!(mr_fppi_curve(&[match_frame("f", &[], &g)]), Err(EvalError::EmptyGroundTruth));
        assert_eq!(mr_fppi_curve(&[]), Err(EvalError::EmptyGroundTruth));
        assert_eq!(log_average_mr(&MrFppiCurve::default(), DEFAULT_FPPI_RANGE), Err(EvalError::EmptyCurve));
    }

    #[test]
    fn constant_miss_rate() {
        let c = MrFppiCurve {
            points: vec![
                CurvePoint { fppi: 0.001, miss_rate: 0.2 },
                CurvePoint { fppi: 0.5, miss_rate: 0.2 },
                CurvePoint { fppi: 3.0, miss_rate: 0.2 },
            ],
        };
        assert!((log_average_mr(&c, DEFAULT_FPPI_RANGE).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn references_are_log_spaced() {
        let r = reference_fppi(DEFAULT_FPPI_RANGE).unwrap();
        assert!((r[0] - 0.01).abs() < 1e-15);
        assert!((r[4] - 0.1).abs() < 1e-15);
        assert!((r[8] - 1.0).abs() < 1e-15);
        assert!(reference_fppi((0.0, 1.0)).is_err());
    }

    #[test]
    fn points_left_of_every_reference_use_the_worst_rate() {
        let c = MrFppiCurve {
            points: vec![CurvePoint { fppi: 2.0, miss_rate: 0.3 }],
        };
        assert!((log_average_mr(&c, DEFAULT_FPPI_RANGE).unwrap() - 30.0).abs() < 1e-9);
    }

    #[test]
    fn default_config_specs() {
        let names: Vec<String> = EvalConfig::default().specs().into_iter().map(|(_, s)| s.name().into()).collect();
        assert_eq!(
            names,
            vec![
                "Reasonable", "All", "h20-40", "h40-60", "h60-80", "h80-inf", "occ-none", "occ-partial", "occ-heavy"
            ]
        );
    }

    #[test]
    fn evaluate_rejects_unknown_frames() {
        let mut dets = BTreeMap::new();
        dets.insert(String::from("x"), vec![det(0.0, 0.0, 10.0, 20.0, 0.5)]);
        let gts = BTreeMap::new();
        assert_eq!(
            evaluate(&dets, &gts, &EvalConfig::default()),
            Err(EvalError::UnknownFrame("x".into()))
        );
    }

    #[test]
    fn evaluate_reports_missing_subsets_as_none() {
        let mut gts = BTreeMap::new();
        gts.insert(
            String::from("f"),
            vec![Annotation::new(BBox::new(0.0, 0.0, 20.0, 100.0).unwrap(), Label::Person, Occlusion::None)],
        );
        let dets = BTreeMap::new();
        let r = evaluate(&dets, &gts, &EvalConfig::default()).unwrap();
        assert_eq!(r.entry("reasonable").unwrap().log_average_mr, Some(100.0));
        assert_eq!(r.entry("h20-40").unwrap().log_average_mr, None);
        assert_eq!(r.entry("occ-heavy").unwrap().gt_count, 0);
        let text = format!("{r}");
        assert!(text.contains("n/a") && text.ends_with("frames: 1"));
    }

    #[test]
    fn balanced_sampling() {
        let mut rng = RngState::from_seed(3);
        let idx = vec![
            (String::from("p1"), true),
            (String::from("n1"), false),
            (String::from("n2"), false),
            (String::from("n3"), false),
        ];
        assert!(balanced_sample(&idx, 0, &mut rng).unwrap().is_empty());
        let draws = balanced_sample(&idx, 4000, &mut rng).unwrap();
        let pos = draws.iter().filter(|d| *d == "p1").count() as f64 / 4000.0;
        assert!((pos - 0.5).abs() < 0.03, "{pos}");
        assert_eq!(
            balanced_sample(&idx[1..], 3, &mut rng),
            Err(EvalError::EmptyClass("with"))
        );
    }

    proptest! {
        #[test]
        fn curve_is_monotone(
            frames in proptest::collection::vec(
                (proptest::collection::vec((0u8..8, 0u8..100), 0..6), 1usize..4),
                1..5,
            )
        ) {
            let results: Vec<FrameResult> = frames
                .iter()
                .enumerate()
                .map(|(fi, (dets, n_gt))| {
                    let gts: Vec<_> = (0..*n_gt)
                        .map(|k| gt(k as f64 * 30.0, 0.0, 10.0, 20.0, GtClass::Evaluate))
                        .collect();
                    let dets: Vec<_> = dets
                        .iter()
                        .map(|&(slot, s)| det(slot as f64 * 30.0, 0.0, 10.0, 20.0, s as f64 / 100.0))
                        .collect();
                    match_frame(&format!("{fi}"), &dets, &gts)
                })
                .collect();
            let c = mr_fppi_curve(&results).unwrap();
            for w in c.points.windows(2) {
                prop_assert!(w[0].fppi < w[1].fppi);
                prop_assert!(w[0].miss_rate >= w[1].miss_rate);
            }
            for p in &c.points {
                prop_assert!(p.fppi >= 0.0 && (0.0..=1.0).contains(&p.miss_rate));
            }
            let mr = log_average_mr(&c, DEFAULT_FPPI_RANGE).unwrap();
            prop_assert!((0.0..=100.0 + 1e-9).contains(&mr));
        }
    }
}
