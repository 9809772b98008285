//! Center/scale/offset target maps and their inverse.
//!
//! A pedestrian is represented on a grid `stride` times coarser than the
//! input image by a single positive cell holding its center. Three maps carry
//! the object:
//!
//! - `center`: 1 at the positive cell, surrounded by a Gaussian bump that the
//!   focal loss uses to soften penalties near the true center,
//! - `scale`: natural log of the box height in input pixels,
//! - `offset`: the sub-cell position of the center, in `[0, 1)` per axis.
//!
//! Width is never encoded. Decoding derives it from the height with a fixed
//! aspect ratio.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::geometry::{iou, Annotation, BBox, Label, PEDESTRIAN_ASPECT_RATIO};
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CodecError {
    #[error("invalid codec configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("image size {width}x{height} is not divisible by stride {stride}")]
    NotDivisible {
        width: usize,
        height: usize,
        stride: usize,
    },
    #[error("image size must be positive")]
    EmptyImage,
    #[error("annotation {index} crosses the image boundary")]
    OutOfBounds { index: usize },
    #[error("annotation {index} has height {height}, below the minimum {min}")]
    TooSmall { index: usize, height: f64, min: f64 },
    #[error("map shape {found:?} does not match expected {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
}

/// Input image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImageSize {
    pub width: usize,
    pub height: usize,
}

impl ImageSize {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    /// `(rows, cols)` of the output grid for `stride`.
    pub fn grid_shape(&self, stride: usize) -> Result<(usize, usize), CodecError> {
        if self.width == 0 || self.height == 0 {
            return Err(CodecError::EmptyImage);
        }
        if stride == 0 || self.width % stride != 0 || self.height % stride != 0 {
            return Err(CodecError::NotDivisible {
                width: self.width,
                height: self.height,
                stride,
            });
        }
        Ok((self.height / stride, self.width / stride))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    /// Downsampling factor between the input image and the output maps.
    pub stride: usize,
    /// Minimum center score for a cell to become a candidate.
    pub confidence_threshold: f64,
    /// IoU above which a lower-scored candidate is suppressed.
    pub nms_threshold: f64,
    /// Box width as a fraction of box height.
    pub aspect_ratio: f64,
    /// Gaussian sigma as a fraction of the box extent in grid cells (floored at one cell).
    pub gaussian_sigma_factor: f64,
    /// Chebyshev radius around the positive cell that also receives the scale
    /// target. Zero writes only the positive cell.
    pub scale_radius: usize,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            stride: 4,
            confidence_threshold: 0.01,
            nms_threshold: 0.3,
            aspect_ratio: PEDESTRIAN_ASPECT_RATIO,
            gaussian_sigma_factor: 0.125,
            scale_radius: 0,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.stride == 0 {
            return Err(CodecError::InvalidConfig("stride must be at least 1"));
        }
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.confidence_threshold) {
            return Err(CodecError::InvalidConfig(
                "confidence threshold must lie in (0, 1)",
            ));
        }
        if !open_unit(self.nms_threshold) {
            return Err(CodecError::InvalidConfig("nms threshold must lie in (0, 1)"));
        }
        if !(self.aspect_ratio > 0.0 && self.aspect_ratio.is_finite()) {
            return Err(CodecError::InvalidConfig("aspect ratio must be positive"));
        }
        if !(self.gaussian_sigma_factor >= 0.0 && self.gaussian_sigma_factor.is_finite()) {
            return Err(CodecError::InvalidConfig(
                "gaussian sigma factor must be non-negative",
            ));
        }
        Ok(())
    }
}

/// A scored box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    score: f64,
}

impl Detection {
    /// Returns `None` unless `score` lies in `[0, 1]`.
    pub fn new(bbox: BBox, score: f64) -> Option<Self> {
        (0.0..=1.0).contains(&score).then_some(Self { bbox, score })
    }

    pub fn score(&self) -> f64 {
        self.score
    }
}

/// The three predicted maps, with the two offset channels stored separately.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMaps {
    pub center: Grid,
    pub scale: Grid,
    pub offset_x: Grid,
    pub offset_y: Grid,
}

impl DetectionMaps {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            center: Grid::zeros(rows, cols),
            scale: Grid::zeros(rows, cols),
            offset_x: Grid::zeros(rows, cols),
            offset_y: Grid::zeros(rows, cols),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.center.shape()
    }

    /// Shape shared by all four maps, or the first mismatch.
    pub fn common_shape(&self) -> Result<(usize, usize), CodecError> {
        let expected = self.center.shape();
        for g in [&self.scale, &self.offset_x, &self.offset_y] {
            if g.shape() != expected {
                return Err(CodecError::ShapeMismatch {
                    expected,
                    found: g.shape(),
                });
            }
        }
        Ok(expected)
    }
}

/// Training targets: the maps plus the cells that carry regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMaps {
    /// Gaussian-supplemented center heatmap; exactly 1 at positive cells.
    pub maps: DetectionMaps,
    /// Cells holding an object center (row-major).
    pub positive: Vec<bool>,
    /// Cells holding a scale target; equals `positive` when `scale_radius` is 0.
    pub scale_mask: Vec<bool>,
}

impl TargetMaps {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            maps: DetectionMaps::zeros(rows, cols),
            positive: vec![false; rows * cols],
            scale_mask: vec![false; rows * cols],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.maps.shape()
    }

    pub fn positive_count(&self) -> usize {
        self.positive.iter().filter(|&&p| p).count()
    }

    /// `(row, col)` of every positive cell in row-major order.
    pub fn positive_cells(&self) -> Vec<(usize, usize)> {
        let cols = self.maps.center.cols();
        self.positive
            .iter()
            .enumerate()
            .filter(|(_, &p)| p)
            .map(|(i, _)| (i / cols, i % cols))
            .collect()
    }

    /// The prediction a perfect model converges to under the focal loss:
    /// center 1 at positive cells and 0 everywhere else, with the regression
    /// maps copied from the targets.
    pub fn ideal_prediction(&self) -> DetectionMaps {
        let (rows, cols) = self.shape();
        let center = Grid::from_vec(
            rows,
            cols,
            self.positive
                .iter()
                .map(|&p| if p { 1.0 } else { 0.0 })
                .collect(),
        )
        .expect("mask matches grid");
        DetectionMaps {
            center,
            ..self.maps.clone()
        }
    }
}

/// Encodes `person` annotations into target maps. Other labels are skipped:
/// they never receive a positive cell.
pub fn encode_targets(
    anns: &[Annotation],
    size: ImageSize,
    cfg: &CodecConfig,
) -> Result<TargetMaps, CodecError> {
    cfg.validate()?;
    let (rows, cols) = size.grid_shape(cfg.stride)?;
    let stride = cfg.stride as f64;
    let mut targets = TargetMaps::empty(rows, cols);

    for (index, ann) in anns.iter().enumerate() {
        if ann.label != Label::Person {
            continue;
        }
        let b = &ann.bbox;
        if b.x() < 0.0
            || b.y() < 0.0
            || b.right() > size.width as f64
            || b.bottom() > size.height as f64
        {
            return Err(CodecError::OutOfBounds { index });
        }
        let min_h = 2.0 * stride;
        if b.h() < min_h {
            return Err(CodecError::TooSmall {
                index,
                height: b.h(),
                min: min_h,
            });
        }

        let (cx, cy) = b.center();
        let fx = cx / stride;
        let fy = cy / stride;
        let col_f = libm::floor(fx);
        let row_f = libm::floor(fy);
        let col = (col_f as usize).min(cols - 1);
        let row = (row_f as usize).min(rows - 1);

        let sigma_x = (cfg.gaussian_sigma_factor * b.w() / stride).max(1.0);
        let sigma_y = (cfg.gaussian_sigma_factor * b.h() / stride).max(1.0);
        splat_gaussian(&mut targets.maps.center, row, col, sigma_x, sigma_y);

        let i = row * cols + col;
        targets.positive[i] = true;
        targets.scale_mask[i] = true;
        targets.maps.center[(row, col)] = 1.0;
        targets.maps.scale[(row, col)] = libm::log(b.h());
        targets.maps.offset_x[(row, col)] = fx - col_f;
        targets.maps.offset_y[(row, col)] = fy - row_f;

        let r = cfg.scale_radius;
        for nr in row.saturating_sub(r)..=(row + r).min(rows - 1) {
            for nc in col.saturating_sub(r)..=(col + r).min(cols - 1) {
                let j = nr * cols + nc;
                if !targets.positive[j] {
                    targets.scale_mask[j] = true;
                    targets.maps.scale[(nr, nc)] = libm::log(b.h());
                }
            }
        }
    }
    Ok(targets)
}

/// Writes an axis-aligned Gaussian peaked at `(row, col)` by element-wise maximum.
fn splat_gaussian(center: &mut Grid, row: usize, col: usize, sigma_x: f64, sigma_y: f64) {
    let (rows, cols) = center.shape();
    let rx = libm::ceil(3.0 * sigma_x) as usize;
    let ry = libm::ceil(3.0 * sigma_y) as usize;
    let inv_x = 1.0 / (2.0 * sigma_x * sigma_x);
    let inv_y = 1.0 / (2.0 * sigma_y * sigma_y);
    for r in row.saturating_sub(ry)..=(row + ry).min(rows - 1) {
        let dy = r as f64 - row as f64;
        for c in col.saturating_sub(rx)..=(col + rx).min(cols - 1) {
            let dx = c as f64 - col as f64;
            let g = libm::exp(-(dx * dx * inv_x + dy * dy * inv_y));
            let cell = &mut center[(r, c)];
            if g > *cell {
                *cell = g;
            }
        }
    }
}

/// Thresholds the center map, turns each surviving cell into a box and runs NMS.
/// The result is sorted by descending score.
pub fn decode_detections(
    pred: &DetectionMaps,
    size: ImageSize,
    cfg: &CodecConfig,
) -> Result<Vec<Detection>, CodecError> {
    cfg.validate()?;
    let expected = size.grid_shape(cfg.stride)?;
    let found = pred.common_shape()?;
    if found != expected {
        return Err(CodecError::ShapeMismatch { expected, found });
    }
    let (rows, cols) = expected;
    let stride = cfg.stride as f64;

    let mut candidates = Vec::new();
    for row in 0..rows {
        for col in 0..cols {
            let score = pred.center[(row, col)];
            if !(score >= cfg.confidence_threshold) {
                continue;
            }
            let cx = stride * (col as f64 + pred.offset_x[(row, col)]);
            let cy = stride * (row as f64 + pred.offset_y[(row, col)]);
            let h = libm::exp(pred.scale[(row, col)]);
            let w = cfg.aspect_ratio * h;
            if let Ok(bbox) = BBox::from_center(cx, cy, w, h) {
                if let Some(det) = Detection::new(bbox, score.min(1.0)) {
                    candidates.push(det);
                }
            }
        }
    }
    Ok(nms(&candidates, cfg.nms_threshold))
}

/// Greedy non-maximum suppression.
///
/// Candidates are visited by descending score, ties in input order; each kept
/// box removes every remaining box whose IoU with it exceeds `threshold`.
pub fn nms(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(Ordering::Equal)
    });

    let mut suppressed = vec![false; dets.len()];
    let mut keep = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        keep.push(dets[i]);
        for &j in &order[pos + 1..] {
            if !suppressed[j] && iou(&dets[i].bbox, &dets[j].bbox) > threshold {
                suppressed[j] = true;
            }
        }
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Occlusion;
    use proptest::prelude::*;

    fn person(x: f64, y: f64, w: f64, h: f64) -> Annotation {
        Annotation::person(BBox::new(x, y, w, h).unwrap())
    }

    fn det(x: f64, y: f64, w: f64, h: f64, s: f64) -> Detection {
        Detection::new(BBox::new(x, y, w, h).unwrap(), s).unwrap()
    }

    #[test]
    fn empty_annotations_give_zero_maps() {
        let t = encode_targets(&[], ImageSize::new(480, 384), &CodecConfig::default()).unwrap();
        assert_eq!(t.shape(), (96, 120));
        assert_eq!(t.positive_count(), 0);
        assert!(t.maps.center.as_slice().iter().all(|&v| v == 0.0));
        assert!(t.maps.scale.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pedestrian_encoding() {
        // center (200, 100), h = 80
        let ann = person(184.0, 60.0, 32.0, 80.0);
        let t = encode_targets(&[ann], ImageSize::new(480, 384), &CodecConfig::default()).unwrap();
        assert_eq!(t.positive_cells(), vec![(25, 50)]);
        assert_eq!(t.maps.center[(25, 50)], 1.0);
        assert!((t.maps.scale[(25, 50)] - 4.382026634673881).abs() < 1e-12);
        assert_eq!(t.maps.offset_x[(25, 50)], 0.0);
        assert_eq!(t.maps.offset_y[(25, 50)], 0.0);
        // Gaussian neighbours stay strictly below one.
        assert!(t.maps.center[(24, 50)] > 0.0 && t.maps.center[(24, 50)] < 1.0);
    }

    #[test]
    fn encode_rejects_out_of_frame_and_tiny_boxes() {
        let size = ImageSize::new(64, 64);
        let cfg = CodecConfig::default();
        assert_eq!(
            encode_targets(&[person(50.0, 10.0, 20.0, 40.0)], size, &cfg),
            Err(CodecError::OutOfBounds { index: 0 })
        );
        assert!(matches!(
            encode_targets(&[person(10.0, 10.0, 4.0, 7.9)], size, &cfg),
            Err(CodecError::TooSmall { index: 0, .. })
        ));
        assert!(matches!(
            encode_targets(&[], ImageSize::new(66, 64), &cfg),
            Err(CodecError::NotDivisible { .. })
        ));
    }

    #[test]
    fn non_person_labels_are_not_encoded() {
        let b = BBox::new(10.0, 10.0, 20.0, 40.0).unwrap();
        let ann = Annotation::new(b, Label::People, Occlusion::None);
        let t = encode_targets(&[ann], ImageSize::new(64, 64), &CodecConfig::default()).unwrap();
        assert_eq!(t.positive_count(), 0);
    }

    #[test]
    fn scale_radius_extends_scale_mask_only() {
        let cfg = CodecConfig {
            scale_radius: 1,
            ..CodecConfig::default()
        };
        let t = encode_targets(&[person(20.0, 10.0, 16.0, 40.0)], ImageSize::new(64, 64), &cfg)
            .unwrap();
        assert_eq!(t.positive_count(), 1);
        assert_eq!(t.scale_mask.iter().filter(|&&m| m).count(), 9);
        assert_eq!(t.maps.scale[(6, 6)], libm::log(40.0));
    }

    #[test]
    fn decode_of_zero_maps_is_empty() {
        let maps = DetectionMaps::zeros(16, 20);
        let dets = decode_detections(&maps, ImageSize::new(80, 64), &CodecConfig::default());
        assert_eq!(dets, Ok(Vec::new()));
    }

    #[test]
    fn decode_rejects_wrong_shape() {
        let maps = DetectionMaps::zeros(16, 21);
        assert!(matches!(
            decode_detections(&maps, ImageSize::new(80, 64), &CodecConfig::default()),
            Err(CodecError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn single_box_round_trip() {
        let ann = person(101.3, 47.9, 0.41 * 63.7, 63.7);
        let size = ImageSize::new(240, 160);
        let cfg = CodecConfig::default();
        let t = encode_targets(&[ann], size, &cfg).unwrap();
        let dets = decode_detections(&t.ideal_prediction(), size, &cfg).unwrap();
        assert_eq!(dets.len(), 1);
        let (cx, cy) = ann.bbox.center();
        let (dx, dy) = dets[0].bbox.center();
        assert!((cx - dx).abs() <= 0.5 && (cy - dy).abs() <= 0.5);
        assert!(((dets[0].bbox.h() - 63.7) / 63.7).abs() <= 1e-9);
        assert_eq!(dets[0].score(), 1.0);
    }

    #[test]
    fn decode_applies_threshold_aspect_and_nms() {
        let size = ImageSize::new(160, 160);
        let cfg = CodecConfig::default();
        let mut maps = DetectionMaps::zeros(40, 40);
        let h = 60.0f64;
        // Two cells one column apart: boxes of width 24.6 shifted by 4 px.
        maps.center[(20, 20)] = 0.9;
        maps.center[(20, 21)] = 0.8;
        // Below threshold: never a candidate.
        maps.center[(5, 5)] = 0.009;
        // Exactly on the threshold: kept.
        maps.center[(5, 35)] = 0.01;
        for (r, c) in [(20, 20), (20, 21), (5, 5), (5, 35)] {
            maps.scale[(r, c)] = libm::log(h);
        }
        let dets = decode_detections(&maps, size, &cfg).unwrap();
        assert_eq!(dets.len(), 2);
        assert_eq!(dets[0].score(), 0.9);
        assert_eq!(dets[1].score(), 0.01);
        assert!((dets[0].bbox.w() - 0.41 * h).abs() < 1e-9);
        assert!((dets[0].bbox.h() - h).abs() < 1e-9);
        assert_eq!(dets[0].bbox.center(), (80.0, 80.0));
    }

    #[test]
    fn nms_suppresses_above_threshold_only() {
        // IoU = 1/3 > 0.3: suppressed.
        let a = det(0.0, 0.0, 10.0, 10.0, 0.9);
        let b = det(5.0, 0.0, 10.0, 10.0, 0.8);
        assert_eq!(nms(&[a, b], 0.3), vec![a]);
        // Same pair survives a 0.34 threshold.
        assert_eq!(nms(&[a, b], 0.34).len(), 2);
        assert!(nms(&[], 0.3).is_empty());
        let far = det(100.0, 100.0, 10.0, 10.0, 0.1);
        assert_eq!(nms(&[far, a], 0.3), vec![a, far]);
        let twin = det(0.0, 0.0, 10.0, 10.0, 0.8);
        assert_eq!(nms(&[twin, a], 0.3), vec![a]);
    }

    #[test]
    fn nms_ties_keep_input_order() {
        let a = det(0.0, 0.0, 10.0, 10.0, 0.5);
        let b = det(1.0, 0.0, 10.0, 10.0, 0.5);
        assert_eq!(nms(&[a, b], 0.3), vec![a]);
        assert_eq!(nms(&[b, a], 0.3), vec![b]);
    }

    fn arb_dets() -> impl Strategy<Value = Vec<Detection>> {
        prop::collection::vec(
            (0.0..100.0f64, 0.0..100.0f64, 1.0..40.0f64, 1.0..40.0f64, 0.0..=1.0f64),
            0..30,
        )
        .prop_map(|v| v.into_iter().map(|(x, y, w, h, s)| det(x, y, w, h, s)).collect())
    }

    proptest! {
        #[test]
        fn nms_output_is_sorted_and_separated(dets in arb_dets(), thr in 0.05..0.95f64) {
            let kept = nms(&dets, thr);
            for pair in kept.windows(2) {
                prop_assert!(pair[0].score() >= pair[1].score());
            }
            for i in 0..kept.len() {
                for j in i + 1..kept.len() {
                    prop_assert!(iou(&kept[i].bbox, &kept[j].bbox) <= thr);
                }
            }
        }

        #[test]
        fn targets_respect_invariants(
            boxes in prop::collection::vec((0.0..100.0f64, 0.0..60.0f64, 8.0..60.0f64), 0..6)
        ) {
            let anns: Vec<Annotation> = boxes
                .iter()
                .map(|&(x, y, h)| person(x, y, 0.41 * h, h))
                .collect();
            let t = encode_targets(&anns, ImageSize::new(160, 128), &CodecConfig::default()).unwrap();
            let (rows, cols) = t.shape();
            for r in 0..rows {
                for c in 0..cols {
                    let v = t.maps.center[(r, c)];
                    if t.positive[r * cols + c] {
                        prop_assert_eq!(v, 1.0);
                        let (ox, oy) = (t.maps.offset_x[(r, c)], t.maps.offset_y[(r, c)]);
                        prop_assert!((0.0..1.0).contains(&ox) && (0.0..1.0).contains(&oy));
                    } else {
                        prop_assert!((0.0..1.0).contains(&v));
                    }
                }
            }
        }

        #[test]
        fn decode_then_encode_keeps_positive_cells(
            boxes in prop::collection::vec((0.0..100.0f64, 0.0..60.0f64, 8.0..60.0f64), 1..6)
        ) {
            let size = ImageSize::new(160, 128);
            let cfg = CodecConfig::default();
            let anns: Vec<Annotation> = boxes
                .iter()
                .map(|&(x, y, h)| person(x, y, 0.41 * h, h))
                .collect();
            let t = encode_targets(&anns, size, &cfg).unwrap();
            let dets = decode_detections(&t.ideal_prediction(), size, &cfg).unwrap();
            let again: Vec<Annotation> = dets.iter().map(|d| Annotation::person(d.bbox)).collect();
            let t2 = encode_targets(&again, size, &cfg).unwrap();
            let mut kept: Vec<(usize, usize)> = t2.positive_cells();
            kept.sort();
            let original = t.positive_cells();
            // Every re-encoded cell is one of the original positives (NMS may drop some).
            for cell in &kept {
                prop_assert!(original.contains(cell));
            }
            prop_assert!(!kept.is_empty());
        }
    }
}
