//! Random instance generators and independent oracles shared by the
//! integration tests and the acceptance suite.

#![allow(dead_code)]

use std::collections::BTreeMap;

use mscsp_core::codec::{decode_detections, encode_targets};
use mscsp_core::eval::{evaluate, EvalConfig};
use mscsp_core::loss::{total_loss, LossConfig};
use mscsp_core::{
    Annotation, BBox, CodecConfig, Detection, DetectionMaps, Grid, ImageSize, Label, Occlusion,
    RngState, TargetMaps,
};
use rand::Rng;

// ---------------------------------------------------------------- codec

/// 1 to 5 pairwise disjoint boxes with `h >= 8`, aspect 0.41, centers at
/// least 8 px apart, fully inside the image.
pub fn random_box_set(rng: &mut RngState, size: ImageSize) -> Vec<BBox> {
    let n = rng.random_range(1..=5);
    let (w_img, h_img) = (size.width as f64, size.height as f64);
    let mut boxes: Vec<BBox> = Vec::new();
    let mut attempts = 0;
    while boxes.len() < n && attempts < 10_000 {
        attempts += 1;
        let h = rng.random_range(8.0..(h_img * 0.6));
        let w = 0.41 * h;
        let x = rng.random_range(0.0..(w_img - w));
        let y = rng.random_range(0.0..(h_img - h));
        let b = BBox::new(x, y, w, h).unwrap();
        let (cx, cy) = b.center();
        let ok = boxes.iter().all(|o| {
            let (ox, oy) = o.center();
            o.intersection_area(&b) == 0.0 && ((cx - ox).powi(2) + (cy - oy).powi(2)).sqrt() >= 8.0
        });
        if ok {
            boxes.push(b);
        }
    }
    boxes
}

/// Encodes, decodes the ideal prediction and checks every box is recovered.
pub fn check_round_trip(boxes: &[BBox], size: ImageSize, cfg: &CodecConfig) -> Result<(), String> {
    let anns: Vec<Annotation> = boxes.iter().copied().map(Annotation::person).collect();
    let targets = encode_targets(&anns, size, cfg).map_err(|e| e.to_string())?;
    let dets = decode_detections(&targets.ideal_prediction(), size, cfg).map_err(|e| e.to_string())?;
    if dets.len() != boxes.len() {
        return Err(format!("{} boxes decoded as {} detections", boxes.len(), dets.len()));
    }
    let mut used = vec![false; dets.len()];
    for b in boxes {
        let (cx, cy) = b.center();
        let (k, err) = dets
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, d)| {
                let (dx, dy) = d.bbox.center();
                (k, (dx - cx).abs().max((dy - cy).abs()))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or("no detection left")?;
        used[k] = true;
        if err > 0.5 {
            return Err(format!("center error {err} for {b}"));
        }
        let rel = (dets[k].bbox.h() - b.h()).abs() / b.h();
        if rel > 1e-9 {
            return Err(format!("relative height error {rel} for {b}"));
        }
    }
    // every detection is accounted for, so nothing spurious scores above 0.5
    if dets.iter().filter(|d| d.score() > 0.5).count() > boxes.len() {
        return Err("spurious detection above 0.5".into());
    }
    Ok(())
}

// ---------------------------------------------------------------- loss

/// Random 8×8 targets from 0 to 3 encoded boxes and a random prediction
/// strictly inside the clamp range.
pub fn random_loss_case(rng: &mut RngState) -> (DetectionMaps, TargetMaps) {
    let size = ImageSize::new(32, 32);
    let cfg = CodecConfig {
        scale_radius: rng.random_range(0..=1),
        ..CodecConfig::default()
    };
    let n = rng.random_range(0..=3);
    let anns: Vec<Annotation> = (0..n)
        .map(|_| {
            let h = rng.random_range(8.0..28.0);
            let w = 0.41 * h;
            let x = rng.random_range(0.0..(32.0 - w));
            let y = rng.random_range(0.0..(32.0 - h));
            Annotation::person(BBox::new(x, y, w, h).unwrap())
        })
        .collect();
    let targets = encode_targets(&anns, size, &cfg).unwrap();
    let mut grid = |lo: f64, hi: f64| {
        Grid::from_vec(8, 8, (0..64).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
    };
    let pred = DetectionMaps {
        center: grid(0.02, 0.98),
        scale: grid(1.0, 4.0),
        offset_x: grid(-0.5, 1.5),
        offset_y: grid(-0.5, 1.5),
    };
    (pred, targets)
}

fn map_mut(maps: &mut DetectionMaps, which: usize) -> &mut Grid {
    match which {
        0 => &mut maps.center,
        1 => &mut maps.scale,
        2 => &mut maps.offset_x,
        _ => &mut maps.offset_y,
    }
}

/// Largest relative discrepancy between the analytic gradient of the total
/// loss and a central finite difference with the given step.
pub fn gradient_max_rel_error(pred: &DetectionMaps, target: &TargetMaps, cfg: &LossConfig, step: f64) -> f64 {
    let analytic = total_loss(pred, target, cfg).unwrap();
    let grads = [
        &analytic.grad_center,
        &analytic.grad_scale,
        &analytic.grad_offset_x,
        &analytic.grad_offset_y,
    ];
    let mut worst = 0.0f64;
    for (which, grad) in grads.iter().enumerate() {
        for i in 0..64 {
            let mut plus = pred.clone();
            map_mut(&mut plus, which).as_mut_slice()[i] += step;
            let mut minus = pred.clone();
            map_mut(&mut minus, which).as_mut_slice()[i] -= step;
            let fp = total_loss(&plus, target, cfg).unwrap().total;
            let fm = total_loss(&minus, target, cfg).unwrap().total;
            let numeric = (fp - fm) / (2.0 * step);
            let a = grad.as_slice()[i];
            let denom = a.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}

// ---------------------------------------------------------------- evaluator

pub type Dets = BTreeMap<String, Vec<Detection>>;
pub type Gts = BTreeMap<String, Vec<Annotation>>;

/// Up to 5 frames, 6 GT and 8 detections on a coarse lattice so that
/// overlaps, ties and ignore regions are common.
pub fn random_eval_instance(rng: &mut RngState) -> (Dets, Gts) {
    let frames = rng.random_range(1..=5);
    let ids: Vec<String> = (0..frames).map(|i| format!("f{i}")).collect();
    let mut gts: Gts = ids.iter().map(|id| (id.clone(), Vec::new())).collect();
    let mut dets: Dets = BTreeMap::new();
    let lattice_box = |rng: &mut RngState| {
        let x = rng.random_range(0..4) as f64 * 10.0;
        let y = rng.random_range(0..3) as f64 * 10.0;
        let w = [10.0, 20.0, 30.0][rng.random_range(0..3)];
        let h = [30.0, 50.0, 56.0, 70.0, 90.0][rng.random_range(0..5)];
        BBox::new(x, y, w, h).unwrap()
    };
    for _ in 0..rng.random_range(0..=6) {
        let id = &ids[rng.random_range(0..frames)];
        let label = [Label::Person, Label::Person, Label::Person, Label::People, Label::PersonUnsure]
            [rng.random_range(0..5)];
        let occ = [Occlusion::None, Occlusion::Partial, Occlusion::Heavy][rng.random_range(0..3)];
        let b = lattice_box(rng);
        gts.get_mut(id).unwrap().push(Annotation::new(b, label, occ));
    }
    for _ in 0..rng.random_range(0..=8) {
        let id = &ids[rng.random_range(0..frames)];
        let score = rng.random_range(1..=5) as f64 / 5.0;
        let b = lattice_box(rng);
        dets.entry(id.clone()).or_default().push(Detection::new(b, score).unwrap());
    }
    (dets, gts)
}

fn oracle_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x() + a.w()).min(b.x() + b.w()) - a.x().max(b.x());
    let ih = (a.y() + a.h()).min(b.y() + b.h()) - a.y().max(b.y());
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    inter / (a.w() * a.h() + b.w() * b.h() - inter)
}

fn oracle_ioa(det: &BBox, region: &BBox) -> f64 {
    let iw = (det.x() + det.w()).min(region.x() + region.w()) - det.x().max(region.x());
    let ih = (det.y() + det.h()).min(region.y() + region.h()) - det.y().max(region.y());
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    iw * ih / (det.w() * det.h())
}

/// `(tp, fp, evaluate-class gt)` for one frame using only detections with
/// score at least `t`, matched greedily from scratch.
fn oracle_frame(dets: &[Detection], gts: &[(BBox, bool)], t: f64) -> (usize, usize, usize) {
    let mut kept: Vec<&Detection> = dets.iter().filter(|d| d.score() >= t).collect();
    kept.sort_by(|a, b| b.score().partial_cmp(&a.score()).unwrap());
    let mut taken = vec![false; gts.len()];
    let (mut tp, mut fp) = (0, 0);
    for d in kept {
        let mut best = None;
        let mut best_iou = 0.5;
        for (i, (g, eval)) in gts.iter().enumerate() {
            if !*eval || taken[i] {
                continue;
            }
            let o = oracle_iou(&d.bbox, g);
            if o >= best_iou && best.is_none_or(|_| o > best_iou) {
                best = Some(i);
                best_iou = o;
            }
        }
        if let Some(i) = best {
            taken[i] = true;
            tp += 1;
        } else if !gts.iter().any(|(g, eval)| !*eval && oracle_ioa(&d.bbox, g) >= 0.5) {
            fp += 1;
        }
    }
    (tp, fp, gts.iter().filter(|(_, e)| *e).count())
}

pub struct OracleEntry {
    pub name: String,
    pub points: Option<Vec<(f64, f64)>>,
    pub mr: Option<f64>,
}

/// Brute-force report: every threshold recomputed from scratch.
pub fn oracle_report(dets: &Dets, gts: &Gts, cfg: &EvalConfig) -> Vec<OracleEntry> {
    let mut out = Vec::new();
    for (_, spec) in cfg.specs() {
        let allowed = spec.allowed_occlusion();
        let frames: Vec<(Vec<Detection>, Vec<(BBox, bool)>)> = gts
            .iter()
            .map(|(id, anns)| {
                let classes = anns
                    .iter()
                    .map(|a| {
                        let h = a.bbox.h();
                        let eval = a.label == Label::Person
                            && h >= spec.min_height()
                            && h <= spec.max_height()
                            && allowed.contains(a.occlusion);
                        (a.bbox, eval)
                    })
                    .collect();
                (dets.get(id).cloned().unwrap_or_default(), classes)
            })
            .collect();
        let total_gt: usize = frames.iter().map(|(_, g)| g.iter().filter(|(_, e)| *e).count()).sum();
        if total_gt == 0 {
            out.push(OracleEntry {
                name: spec.name().into(),
                points: None,
                mr: None,
            });
            continue;
        }
        let mut thresholds: Vec<f64> = frames.iter().flat_map(|(d, _)| d.iter().map(|d| d.score())).collect();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let mut points: Vec<(f64, f64)> = Vec::new();
        for t in thresholds {
            let (mut tp, mut fp) = (0, 0);
            for (d, g) in &frames {
                let (a, b, _) = oracle_frame(d, g, t);
                tp += a;
                fp += b;
            }
            let p = (fp as f64 / frames.len() as f64, 1.0 - tp as f64 / total_gt as f64);
            match points.last_mut() {
                Some(last) if last.0 == p.0 => *last = p,
                _ => points.push(p),
            }
        }
        if points.is_empty() {
            points.push((0.0, 1.0));
        }
        let worst = points.iter().map(|p| p.1).fold(0.0f64, f64::max);
        let mut logs = 0.0;
        for i in 0..9 {
            let r = 10f64.powf(-2.0 + 2.0 * i as f64 / 8.0);
            let mr = points.iter().filter(|p| p.0 <= r).last().map_or(worst, |p| p.1);
            logs += mr.max(1e-4).ln();
        }
        out.push(OracleEntry {
            name: spec.name().into(),
            points: Some(points),
            mr: Some((logs / 9.0).exp() * 100.0),
        });
    }
    out
}

/// Compares `evaluate` with the oracle; exact curve points, MR to `tol`.
pub fn check_against_oracle(dets: &Dets, gts: &Gts, tol: f64) -> Result<(), String> {
    let cfg = EvalConfig::default();
    let report = evaluate(dets, gts, &cfg).map_err(|e| e.to_string())?;
    let oracle = oracle_report(dets, gts, &cfg);
    if report.entries.len() != oracle.len() {
        return Err("entry count differs".into());
    }
    for (e, o) in report.entries.iter().zip(&oracle) {
        if e.name != o.name {
            return Err(format!("entry {} vs {}", e.name, o.name));
        }
        let got: Option<Vec<(f64, f64)>> =
            e.curve.as_ref().map(|c| c.points.iter().map(|p| (p.fppi, p.miss_rate)).collect());
        if got != o.points {
            return Err(format!("{}: curve {:?} vs oracle {:?}", e.name, got, o.points));
        }
        match (e.log_average_mr, o.mr) {
            (None, None) => {}
            (Some(a), Some(b)) if (a - b).abs() <= tol => {}
            (a, b) => return Err(format!("{}: MR {a:?} vs oracle {b:?}", e.name)),
        }
    }
    Ok(())
}
