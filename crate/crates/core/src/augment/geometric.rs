use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use super::{bernoulli, uniform, AugmentConfig, AugmentError, ImagePair};
use crate::fusion::Tensor;
use crate::geometry::{Annotation, BBox};

/// Boxes shorter than this after clipping are dropped.
const MIN_BOX_HEIGHT: f64 = 2.0;

/// One geometric draw. Maps a source point `(x, y)` to
/// `(x' * sx + shift_x, y * sy + shift_y)` where `x'` is the flipped `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricParams {
    pub flip: bool,
    pub scale: f64,
    pub src_height: usize,
    pub src_width: usize,
    pub resized_height: usize,
    pub resized_width: usize,
    /// Offset of the resized image inside the output frame; negative is a crop.
    pub shift_x: i64,
    pub shift_y: i64,
    pub out_height: usize,
    pub out_width: usize,
}

impl GeometricParams {
    fn sx(&self) -> f64 {
        self.resized_width as f64 / self.src_width as f64
    }

    fn sy(&self) -> f64 {
        self.resized_height as f64 / self.src_height as f64
    }

    /// Maps a continuous point in source pixel coordinates to output coordinates.
    pub fn map_point(&self, x: f64, y: f64) -> (f64, f64) {
        let x = if self.flip { self.src_width as f64 - x } else { x };
        (
            x * self.sx() + self.shift_x as f64,
            y * self.sy() + self.shift_y as f64,
        )
    }

    /// Transforms a box and clips it to the output frame. `None` when the
    /// result is empty or shorter than 2 px.
    pub fn map_box(&self, b: &BBox) -> Option<BBox> {
        let (ax, ay) = self.map_point(b.x(), b.y());
        let (bx, by) = self.map_point(b.right(), b.bottom());
        let (w, h) = (self.out_width as f64, self.out_height as f64);
        let x1 = ax.min(bx).clamp(0.0, w);
        let x2 = ax.max(bx).clamp(0.0, w);
        let y1 = ay.min(by).clamp(0.0, h);
        let y2 = ay.max(by).clamp(0.0, h);
        if y2 - y1 < MIN_BOX_HEIGHT || x2 <= x1 {
            return None;
        }
        BBox::from_corners(x1, y1, x2, y2).ok()
    }

    fn apply(&self, img: &Tensor) -> Tensor {
        let flipped = if self.flip { flip_horizontal(img) } else { img.clone() };
        let resized = resize_bilinear(&flipped, self.resized_height, self.resized_width);
        place(&resized, self.out_height, self.out_width, self.shift_y, self.shift_x)
    }
}

impl fmt::Display for GeometricParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "flip={},scale={},size={}x{},shift={},{}",
            u8::from(self.flip),
            self.scale,
            self.resized_height,
            self.resized_width,
            self.shift_x,
            self.shift_y
        )
    }
}

fn flip_horizontal(img: &Tensor) -> Tensor {
    let (c, h, w) = img.shape();
    let mut out = Tensor::zeros(c, h, w);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out.set(ch, y, x, img.get(ch, y, w - 1 - x));
            }
        }
    }
    out
}

/// Half-pixel-centred bilinear resampling with edge clamping. Identity when
/// the size is unchanged.
pub fn resize_bilinear(img: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (c, h, w) = img.shape();
    if (h, w) == (out_h, out_w) {
        return img.clone();
    }
    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        let ratio = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * ratio - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = libm::floor(src) as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, src - i0 as f64)
            })
            .collect()
    };
    let ty = taps(h, out_h);
    let tx = taps(w, out_w);
    let mut out = Tensor::zeros(c, out_h, out_w);
    for ch in 0..c {
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let top = lerp(img.get(ch, y0, x0), img.get(ch, y0, x1), fx);
                let bot = lerp(img.get(ch, y1, x0), img.get(ch, y1, x1), fx);
                out.set(ch, oy, ox, lerp(top, bot, fy));
            }
        }
    }
    out
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Copies `img` into a zero canvas at offset `(dy, dx)`, cropping what falls outside.
fn place(img: &Tensor, out_h: usize, out_w: usize, dy: i64, dx: i64) -> Tensor {
    let (c, h, w) = img.shape();
    let mut out = Tensor::zeros(c, out_h, out_w);
    for ch in 0..c {
        for y in 0..out_h {
            let sy = y as i64 - dy;
            if sy < 0 || sy >= h as i64 {
                continue;
            }
            for x in 0..out_w {
                let sx = x as i64 - dx;
                if sx < 0 || sx >= w as i64 {
                    continue;
                }
                out.set(ch, y, x, img.get(ch, sy as usize, sx as usize));
            }
        }
    }
    out
}

/// Crop (negative) or pave (non-negative) offset along one axis.
fn draw_shift<R: Rng + ?Sized>(rng: &mut R, resized: usize, target: usize) -> i64 {
    if resized >= target {
        -(rng.random_range(0..=resized - target) as i64)
    } else {
        rng.random_range(0..=target - resized) as i64
    }
}

/// Draws flip, then scale, then the x and y shifts, and applies them to
/// both modalities and every annotation.
pub fn geometric_augment<R: Rng + ?Sized>(
    pair: &ImagePair,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(ImagePair, GeometricParams), AugmentError> {
    cfg.validate()?;
    let (h, w) = (pair.height(), pair.width());
    let flip = bernoulli(rng, cfg.flip_probability);
    let scale = uniform(rng, cfg.rescale_range);
    let resized_height = (libm::round(h as f64 * scale) as usize).max(1);
    let resized_width = (libm::round(w as f64 * scale) as usize).max(1);
    let shift_x = draw_shift(rng, resized_width, cfg.target_width);
    let shift_y = draw_shift(rng, resized_height, cfg.target_height);
    let params = GeometricParams {
        flip,
        scale,
        src_height: h,
        src_width: w,
        resized_height,
        resized_width,
        shift_x,
        shift_y,
        out_height: cfg.target_height,
        out_width: cfg.target_width,
    };
    let annotations = pair
        .annotations
        .iter()
        .filter_map(|a| {
            params
                .map_box(&a.bbox)
                .map(|bbox| Annotation::new(bbox, a.label, a.occlusion))
        })
        .collect();
    let out = ImagePair {
        vis: params.apply(&pair.vis),
        ir: params.apply(&pair.ir),
        annotations,
    };
    Ok((out, params))
}
