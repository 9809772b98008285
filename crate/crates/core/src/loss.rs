//! Detection objective with analytic gradients.
//!
//! The center map uses a focal-modulated binary cross-entropy in which
//! negatives near an object are down-weighted by `(1 - t)^beta`, `t` being
//! the Gaussian target. Scale and offset maps use smooth-L1 over the cells
//! that carry a regression target. Predictions are probabilities, not logits.
//!
//! All sums run in row-major order so results are bit-reproducible.

use crate::codec::{DetectionMaps, TargetMaps};
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("{what} shape {found:?} does not match target shape {expected:?}")]
    ShapeMismatch {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid loss configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub focal_gamma: f64,
    pub negative_beta: f64,
    pub weight_center: f64,
    pub weight_scale: f64,
    pub weight_offset: f64,
    pub smooth_l1_delta: f64,
    /// Probabilities are clamped into `[epsilon, 1 - epsilon]` before taking logs.
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            focal_gamma: 2.0,
            negative_beta: 4.0,
            weight_center: 0.01,
            weight_scale: 1.0,
            weight_offset: 0.1,
            smooth_l1_delta: 1.0,
            epsilon: 1e-12,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        let fields = [
            self.focal_gamma,
            self.negative_beta,
            self.weight_center,
            self.weight_scale,
            self.weight_offset,
            self.smooth_l1_delta,
        ];
        if fields.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(LossError::InvalidConfig(
                "loss parameters must be finite and non-negative",
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(LossError::InvalidConfig("epsilon must lie in (0, 0.5)"));
        }
        Ok(())
    }
}

/// Weighted loss and its gradients with respect to every predicted map.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    /// `weight_center * center + weight_scale * scale + weight_offset * offset`.
    pub total: f64,
    pub center: f64,
    pub scale: f64,
    /// Sum of the smooth-L1 terms of both offset channels.
    pub offset: f64,
    pub grad_center: Grid,
    pub grad_scale: Grid,
    pub grad_offset_x: Grid,
    pub grad_offset_y: Grid,
}

fn check_shape(what: &'static str, found: &Grid, expected: (usize, usize)) -> Result<(), LossError> {
    if found.shape() == expected {
        Ok(())
    } else {
        Err(LossError::ShapeMismatch {
            what,
            expected,
            found: found.shape(),
        })
    }
}

/// Focal loss on the center map, normalized by the number of positive cells
/// (at least one). Returns the loss and `d loss / d pred`.
pub fn center_focal_loss(
    pred: &Grid,
    target: &TargetMaps,
    cfg: &LossConfig,
) -> Result<(f64, Grid), LossError> {
    cfg.validate()?;
    let shape = target.shape();
    check_shape("center prediction", pred, shape)?;

    let gamma = cfg.focal_gamma;
    let beta = cfg.negative_beta;
    let eps = cfg.epsilon;
    let norm = target.positive_count().max(1) as f64;

    let mut sum = 0.0;
    let mut grad = Grid::zeros(shape.0, shape.1);
    let truth = target.maps.center.as_slice();
    for (i, (&raw, g)) in pred
        .as_slice()
        .iter()
        .zip(grad.as_mut_slice())
        .enumerate()
    {
        let p = raw.clamp(eps, 1.0 - eps);
        let inside = raw >= eps && raw <= 1.0 - eps;
        let q = 1.0 - p;
        let (loss, dloss) = if target.positive[i] {
            // -(1-p)^g ln p
            let mod_ = libm::pow(q, gamma);
            let ln_p = libm::log(p);
            let d = gamma * libm::pow(q, gamma - 1.0) * ln_p - mod_ / p;
            (-mod_ * ln_p, d)
        } else {
            // -(1-t)^b p^g ln(1-p)
            let w = libm::pow(1.0 - truth[i], beta);
            let pg = libm::pow(p, gamma);
            let ln_q = libm::log(q);
            let d = -w * (gamma * libm::pow(p, gamma - 1.0) * ln_q - pg / q);
            (-w * pg * ln_q, d)
        };
        sum += loss;
        *g = if inside { dloss / norm } else { 0.0 };
    }
    Ok((sum / norm, grad))
}

/// Smooth-L1 averaged over masked cells; zero when the mask is empty.
pub fn smooth_l1(
    pred: &Grid,
    target: &Grid,
    mask: &[bool],
    delta: f64,
) -> Result<(f64, Grid), LossError> {
    let shape = target.shape();
    check_shape("regression prediction", pred, shape)?;
    if mask.len() != shape.0 * shape.1 {
        return Err(LossError::ShapeMismatch {
            what: "mask",
            expected: shape,
            found: (mask.len(), 1),
        });
    }
    let count = mask.iter().filter(|&&m| m).count();
    let mut grad = Grid::zeros(shape.0, shape.1);
    if count == 0 {
        return Ok((0.0, grad));
    }
    let norm = count as f64;
    let mut sum = 0.0;
    for (((&p, &t), &m), g) in pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .zip(mask)
        .zip(grad.as_mut_slice())
    {
        if !m {
            continue;
        }
        let d = p - t;
        let (loss, dloss) = if d.abs() < delta {
            (0.5 * d * d / delta, d / delta)
        } else {
            (d.abs() - 0.5 * delta, if d > 0.0 { 1.0 } else { -1.0 })
        };
        sum += loss;
        *g = dloss / norm;
    }
    Ok((sum / norm, grad))
}

fn scaled(grid: Grid, w: f64) -> Grid {
    grid.map(|v| v * w)
}

/// Weighted sum of the center, scale and offset terms.
pub fn total_loss(
    pred: &DetectionMaps,
    target: &TargetMaps,
    cfg: &LossConfig,
) -> Result<LossResult, LossError> {
    let (center, g_center) = center_focal_loss(&pred.center, target, cfg)?;
    let delta = cfg.smooth_l1_delta;
    let (scale, g_scale) = smooth_l1(&pred.scale, &target.maps.scale, &target.scale_mask, delta)?;
    let (off_x, g_ox) = smooth_l1(&pred.offset_x, &target.maps.offset_x, &target.positive, delta)?;
    let (off_y, g_oy) = smooth_l1(&pred.offset_y, &target.maps.offset_y, &target.positive, delta)?;
    let offset = off_x + off_y;
    let total = cfg.weight_center * center + cfg.weight_scale * scale + cfg.weight_offset * offset;
    Ok(LossResult {
        total,
        center,
        scale,
        offset,
        grad_center: scaled(g_center, cfg.weight_center),
        grad_scale: scaled(g_scale, cfg.weight_scale),
        grad_offset_x: scaled(g_ox, cfg.weight_offset),
        grad_offset_y: scaled(g_oy, cfg.weight_offset),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn single_cell(positive: bool, truth: f64) -> TargetMaps {
        let mut t = TargetMaps::empty(1, 1);
        t.positive[0] = positive;
        t.scale_mask[0] = positive;
        t.maps.center[(0, 0)] = truth;
        t
    }

    #[test]
    fn focal_single_positive() {
        let t = single_cell(true, 1.0);
        let (l, _) = center_focal_loss(&Grid::filled(1, 1, 0.5), &t, &LossConfig::default()).unwrap();
        // -(0.5)^2 ln 0.5
        assert!((l - 0.173_286_795_139_986_3).abs() < 1e-12);
    }

    #[test]
    fn focal_single_pure_negative() {
        let t = single_cell(false, 0.0);
        let (l, _) = center_focal_loss(&Grid::filled(1, 1, 0.5), &t, &LossConfig::default()).unwrap();
        assert!((l - 0.173_286_795_139_986_3).abs() < 1e-12);
    }

    #[test]
    fn focal_negative_near_center_is_damped() {
        let far = single_cell(false, 0.0);
        let near = single_cell(false, 0.8);
        let p = Grid::filled(1, 1, 0.5);
        let cfg = LossConfig::default();
        let (lf, _) = center_focal_loss(&p, &far, &cfg).unwrap();
        let (ln, _) = center_focal_loss(&p, &near, &cfg).unwrap();
        // (1 - 0.8)^4 = 0.0016
        assert!((ln - 0.0016 * lf).abs() < 1e-15);
    }

    #[test]
    fn perfect_center_prediction_has_near_zero_loss() {
        let mut t = TargetMaps::empty(4, 4);
        t.positive[5] = true;
        t.maps.center[(1, 1)] = 1.0;
        t.maps.center[(1, 2)] = 0.6;
        let (l, _) = center_focal_loss(&t.ideal_prediction().center, &t, &LossConfig::default()).unwrap();
        assert!(l >= 0.0 && l < 1e-20);
    }

    #[test]
    fn focal_positive_loss_decreases_with_confidence() {
        let t = single_cell(true, 1.0);
        let cfg = LossConfig::default();
        let mut prev = f64::INFINITY;
        for k in 1..100 {
            let (l, _) = center_focal_loss(&Grid::filled(1, 1, k as f64 / 100.0), &t, &cfg).unwrap();
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn smooth_l1_branches() {
        let t = Grid::zeros(1, 1);
        let m = [true];
        assert_eq!(smooth_l1(&Grid::zeros(1, 1), &t, &m, 1.0).unwrap().0, 0.0);
        assert_eq!(smooth_l1(&Grid::filled(1, 1, 0.5), &t, &m, 1.0).unwrap().0, 0.125);
        assert_eq!(smooth_l1(&Grid::filled(1, 1, 2.0), &t, &m, 1.0).unwrap().0, 1.5);
        assert_eq!(smooth_l1(&Grid::filled(1, 1, -2.0), &t, &m, 1.0).unwrap().1[(0, 0)], -1.0);
        assert_eq!(smooth_l1(&Grid::filled(1, 1, 2.0), &t, &[false], 1.0).unwrap().0, 0.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let t = TargetMaps::empty(2, 2);
        assert!(matches!(
            center_focal_loss(&Grid::zeros(2, 3), &t, &LossConfig::default()),
            Err(LossError::ShapeMismatch { .. })
        ));
        assert!(smooth_l1(&Grid::zeros(2, 2), &Grid::zeros(2, 2), &[true], 1.0).is_err());
    }

    #[test]
    fn empty_image_only_has_center_term() {
        let mut t = TargetMaps::empty(3, 3);
        t.maps.center[(1, 1)] = 0.3;
        let mut pred = DetectionMaps::zeros(3, 3);
        pred.center = Grid::filled(3, 3, 0.2);
        pred.scale = Grid::filled(3, 3, 5.0);
        pred.offset_x = Grid::filled(3, 3, 0.7);
        let cfg = LossConfig::default();
        let r = total_loss(&pred, &t, &cfg).unwrap();
        assert_eq!(r.scale, 0.0);
        assert_eq!(r.offset, 0.0);
        assert_eq!(r.total, cfg.weight_center * r.center);
        assert!(r.grad_scale.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn decomposition_identity_is_exact() {
        let mut t = TargetMaps::empty(2, 2);
        t.positive = vec![true, false, false, true];
        t.scale_mask = t.positive.clone();
        t.maps.center = Grid::from_vec(2, 2, vec![1.0, 0.4, 0.1, 1.0]).unwrap();
        t.maps.scale = Grid::from_vec(2, 2, vec![4.0, 0.0, 0.0, 3.5]).unwrap();
        t.maps.offset_x = Grid::from_vec(2, 2, vec![0.25, 0.0, 0.0, 0.75]).unwrap();
        let pred = DetectionMaps {
            center: Grid::from_vec(2, 2, vec![0.7, 0.2, 0.05, 0.4]).unwrap(),
            scale: Grid::from_vec(2, 2, vec![3.1, 1.0, 2.0, 3.6]).unwrap(),
            offset_x: Grid::from_vec(2, 2, vec![0.5, 0.1, 0.2, 0.6]).unwrap(),
            offset_y: Grid::from_vec(2, 2, vec![0.3, 0.4, 0.5, 0.9]).unwrap(),
        };
        let cfg = LossConfig::default();
        let r = total_loss(&pred, &t, &cfg).unwrap();
        assert_eq!(
            r.total,
            cfg.weight_center * r.center + cfg.weight_scale * r.scale + cfg.weight_offset * r.offset
        );
        assert!(r.center >= 0.0 && r.scale >= 0.0 && r.offset >= 0.0);
    }
}
