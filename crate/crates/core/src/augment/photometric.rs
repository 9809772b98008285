use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::{bernoulli, uniform, AugmentConfig, AugmentError, EraseConfig, ImagePair, NoiseConfig, NoiseModel, SyncMode};
use crate::fusion::Tensor;

const MAX_ERASE_ATTEMPTS: usize = 100;

/// Pixel rectangle `[x, x + w) × [y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EraseRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskChoice {
    None,
    Vis,
    Ir,
}

impl MaskChoice {
    pub fn name(&self) -> &'static str {
        match self {
            MaskChoice::None => "none",
            MaskChoice::Vis => "vis",
            MaskChoice::Ir => "ir",
        }
    }
}

/// Samples a rectangle of the configured area fraction and aspect ratio.
/// Gives up after a bounded number of attempts.
fn draw_rect<R: Rng + ?Sized>(rng: &mut R, cfg: &EraseConfig, h: usize, w: usize) -> Option<EraseRect> {
    let area = (h * w) as f64;
    for _ in 0..MAX_ERASE_ATTEMPTS {
        let target = uniform(rng, cfg.area_range) * area;
        let aspect = uniform(rng, cfg.aspect_range);
        let rh = libm::round(libm::sqrt(target * aspect)) as usize;
        let rw = libm::round(libm::sqrt(target / aspect)) as usize;
        if rh > 0 && rw > 0 && rh < h && rw < w {
            let y = rng.random_range(0..=h - rh);
            let x = rng.random_range(0..=w - rw);
            return Some(EraseRect { x, y, w: rw, h: rh });
        }
    }
    None
}

fn fill_rect<R: Rng + ?Sized>(rng: &mut R, img: &mut Tensor, r: &EraseRect) {
    for ch in 0..img.channels() {
        for y in r.y..r.y + r.h {
            for x in r.x..r.x + r.w {
                img.set(ch, y, x, rng.random::<f64>());
            }
        }
    }
}

fn erase_one<R: Rng + ?Sized>(rng: &mut R, cfg: &EraseConfig, img: &mut Tensor) -> Option<EraseRect> {
    if !bernoulli(rng, cfg.probability) {
        return None;
    }
    let rect = draw_rect(rng, cfg, img.height(), img.width())?;
    fill_rect(rng, img, &rect);
    Some(rect)
}

/// Random erasing. Returns the rectangle erased in each modality.
///
/// Sync: one Bernoulli draw and one rectangle shared by both images.
/// Async: VIS runs the full procedure, then IR runs it again independently.
pub fn random_erasing<R: Rng + ?Sized>(
    pair: &ImagePair,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(ImagePair, Option<EraseRect>, Option<EraseRect>), AugmentError> {
    cfg.validate()?;
    let mut out = pair.clone();
    let e = &cfg.erase;
    let (vis, ir) = match e.mode {
        SyncMode::Sync => {
            let rect = if bernoulli(rng, e.probability) {
                draw_rect(rng, e, pair.height(), pair.width())
            } else {
                None
            };
            if let Some(r) = &rect {
                fill_rect(rng, &mut out.vis, r);
                fill_rect(rng, &mut out.ir, r);
            }
            (rect, rect)
        }
        SyncMode::Async => {
            let v = erase_one(rng, e, &mut out.vis);
            let i = erase_one(rng, e, &mut out.ir);
            (v, i)
        }
    };
    Ok((out, vis, ir))
}

/// Blanks at most one modality: none with probability `1 - p`, otherwise
/// VIS with probability `split_vis` and IR otherwise.
pub fn random_masking<R: Rng + ?Sized>(
    pair: &ImagePair,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(ImagePair, MaskChoice), AugmentError> {
    cfg.validate()?;
    let choice = if !bernoulli(rng, cfg.mask.probability) {
        MaskChoice::None
    } else if bernoulli(rng, cfg.mask.split_vis) {
        MaskChoice::Vis
    } else {
        MaskChoice::Ir
    };
    let mut out = pair.clone();
    match choice {
        MaskChoice::None => {}
        MaskChoice::Vis => out.vis.as_mut_slice().fill(0.0),
        MaskChoice::Ir => out.ir.as_mut_slice().fill(0.0),
    }
    Ok((out, choice))
}

fn apply_noise<R: Rng + ?Sized>(rng: &mut R, model: NoiseModel, cfg: &NoiseConfig, img: &mut Tensor) {
    match model {
        NoiseModel::Gaussian => {
            if cfg.gaussian_sigma == 0.0 {
                return;
            }
            for v in img.as_mut_slice() {
                let n: f64 = rng.sample(StandardNormal);
                *v = (*v + cfg.gaussian_sigma * n).clamp(0.0, 1.0);
            }
        }
        NoiseModel::Poisson => {
            let peak = cfg.poisson_peak;
            for v in img.as_mut_slice() {
                let lambda = *v * peak;
                let count = match Poisson::new(lambda) {
                    Ok(d) => d.sample(rng),
                    Err(_) => 0.0,
                };
                *v = (count / peak).clamp(0.0, 1.0);
            }
        }
        NoiseModel::SaltPepper => {
            let plane = img.plane_len();
            let n = libm::round(cfg.sp_fraction * plane as f64) as usize;
            let picked = index::sample(rng, plane, n.min(plane));
            for i in picked.iter() {
                let value = if bernoulli(rng, 0.5) { 1.0 } else { 0.0 };
                for ch in 0..img.channels() {
                    img.plane_mut(ch)[i] = value;
                }
            }
        }
    }
}

/// Noise injection. Returns the model applied to each modality (`None` when
/// skipped or unconfigured).
///
/// Sync: one application draw, then VIS noise, then IR noise.
/// Async: VIS draw and noise, then IR draw and noise.
pub fn inject_noise<R: Rng + ?Sized>(
    pair: &ImagePair,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(ImagePair, Option<NoiseModel>, Option<NoiseModel>), AugmentError> {
    cfg.validate()?;
    let n = &cfg.noise;
    let mut out = pair.clone();
    let mut applied = [None, None];
    let shared = match n.mode {
        SyncMode::Sync => Some(bernoulli(rng, n.probability)),
        SyncMode::Async => None,
    };
    for (slot, (model, img)) in [(n.vis_model, &mut out.vis), (n.ir_model, &mut out.ir)]
        .into_iter()
        .enumerate()
    {
        let Some(model) = model else { continue };
        let hit = shared.unwrap_or_else(|| bernoulli(rng, n.probability));
        if hit {
            apply_noise(rng, model, n, img);
            applied[slot] = Some(model);
        }
    }
    Ok((out, applied[0], applied[1]))
}
