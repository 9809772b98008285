//! Augmentation of aligned VIS/IR image pairs.
//!
//! Geometric transforms are always drawn once and applied identically to
//! both modalities and to the annotations, so the pair stays aligned.
//! Photometric stages (erasing, masking, noise) may act on each modality
//! separately.
//!
//! Randomness is explicit. [`apply_pipeline`] gives stage `k` its own
//! ChaCha stream of the master seed, so inserting or removing a stage never
//! shifts the draws of the stages before it.

mod geometric;
mod photometric;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::fusion::Tensor;
use crate::geometry::Annotation;
use crate::rng::RngState;

pub use geometric::{geometric_augment, resize_bilinear, GeometricParams};
pub use photometric::{inject_noise, random_erasing, random_masking, EraseRect, MaskChoice};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AugmentError {
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(&'static str),
    #[error("invalid image pair: {0}")]
    InvalidPair(&'static str),
    #[error("unknown augmentation stage `{0}`")]
    UnknownStage(String),
    #[error("unknown noise model `{0}`")]
    UnknownNoiseModel(String),
}

/// A VIS image (3 channels) and an IR image (1 channel) of identical size,
/// with values in `[0, 1]`, plus the shared annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub vis: Tensor,
    pub ir: Tensor,
    pub annotations: Vec<Annotation>,
}

impl ImagePair {
    pub fn new(vis: Tensor, ir: Tensor, annotations: Vec<Annotation>) -> Result<Self, AugmentError> {
        if vis.channels() != 3 {
            return Err(AugmentError::InvalidPair("VIS image must have 3 channels"));
        }
        if ir.channels() != 1 {
            return Err(AugmentError::InvalidPair("IR image must have 1 channel"));
        }
        if (vis.height(), vis.width()) != (ir.height(), ir.width()) {
            return Err(AugmentError::InvalidPair("VIS and IR sizes differ"));
        }
        Ok(Self {
            vis,
            ir,
            annotations,
        })
    }

    pub fn height(&self) -> usize {
        self.vis.height()
    }

    pub fn width(&self) -> usize {
        self.vis.width()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SyncMode {
    /// One draw shared by both modalities.
    Sync,
    /// Independent draws per modality.
    Async,
}

impl SyncMode {
    pub fn name(&self) -> &'static str {
        match self {
            SyncMode::Sync => "sync",
            SyncMode::Async => "async",
        }
    }
}

impl FromStr for SyncMode {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sync" => Ok(SyncMode::Sync),
            "async" => Ok(SyncMode::Async),
            _ => Err(AugmentError::InvalidConfig("mode must be `sync` or `async`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseModel {
    Gaussian,
    Poisson,
    SaltPepper,
}

impl NoiseModel {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseModel::Gaussian => "gaussian",
            NoiseModel::Poisson => "poisson",
            NoiseModel::SaltPepper => "salt-pepper",
        }
    }
}

impl FromStr for NoiseModel {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(NoiseModel::Gaussian),
            "poisson" => Ok(NoiseModel::Poisson),
            "salt-pepper" | "salt-and-pepper" | "salt_pepper" => Ok(NoiseModel::SaltPepper),
            other => Err(AugmentError::UnknownNoiseModel(other.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EraseConfig {
    pub probability: f64,
    /// Erased area as a fraction of the image area.
    pub area_range: (f64, f64),
    /// Height-to-width ratio of the erased rectangle.
    pub aspect_range: (f64, f64),
    pub mode: SyncMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskConfig {
    /// Probability that one modality is blanked.
    pub probability: f64,
    /// Given a blanking, probability that it hits VIS rather than IR.
    pub split_vis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub probability: f64,
    pub vis_model: Option<NoiseModel>,
    pub ir_model: Option<NoiseModel>,
    pub mode: SyncMode,
    pub gaussian_sigma: f64,
    pub poisson_peak: f64,
    /// Fraction of pixels hit by salt-and-pepper noise.
    pub sp_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub target_height: usize,
    pub target_width: usize,
    pub erase: EraseConfig,
    pub mask: MaskConfig,
    pub noise: NoiseConfig,
    pub flip_probability: f64,
    pub rescale_range: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            target_height: 384,
            target_width: 480,
            erase: EraseConfig {
                probability: 0.5,
                area_range: (0.02, 0.4),
                aspect_range: (0.3, 1.0 / 0.3),
                mode: SyncMode::Sync,
            },
            mask: MaskConfig {
                probability: 0.5,
                split_vis: 0.5,
            },
            noise: NoiseConfig {
                probability: 0.2,
                vis_model: Some(NoiseModel::Gaussian),
                ir_model: Some(NoiseModel::Poisson),
                mode: SyncMode::Async,
                gaussian_sigma: 0.05,
                poisson_peak: 30.0,
                sp_fraction: 0.02,
            },
            flip_probability: 0.5,
            rescale_range: (0.4, 1.5),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(prob(self.erase.probability)
            && prob(self.mask.probability)
            && prob(self.mask.split_vis)
            && prob(self.noise.probability)
            && prob(self.flip_probability))
        {
            return Err(AugmentError::InvalidConfig("probabilities must lie in [0, 1]"));
        }
        if self.target_height == 0 || self.target_width == 0 {
            return Err(AugmentError::InvalidConfig("target size must be positive"));
        }
        let ordered = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi && hi.is_finite();
        if !ordered(self.rescale_range) {
            return Err(AugmentError::InvalidConfig("rescale range must be positive and ordered"));
        }
        if !ordered(self.erase.area_range) || self.erase.area_range.1 > 1.0 {
            return Err(AugmentError::InvalidConfig("erase area range must be ordered within (0, 1]"));
        }
        if !ordered(self.erase.aspect_range) {
            return Err(AugmentError::InvalidConfig("erase aspect range must be positive and ordered"));
        }
        let n = &self.noise;
        if !(n.gaussian_sigma >= 0.0 && n.poisson_peak > 0.0 && prob(n.sp_fraction)) {
            return Err(AugmentError::InvalidConfig("noise magnitudes out of range"));
        }
        Ok(())
    }
}

/// Draws exactly one `f64` regardless of `p`.
pub(crate) fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// Uniform draw in `[lo, hi]`; exactly one `f64` regardless of the range.
pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Geometric,
    /// Erasing with an optional override of the configured mode.
    Erasing(Option<SyncMode>),
    Masking,
    Noise(Option<SyncMode>),
}

impl FromStr for Stage {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "geometric" => Ok(Stage::Geometric),
            "erasing" => Ok(Stage::Erasing(None)),
            "erasing-sync" => Ok(Stage::Erasing(Some(SyncMode::Sync))),
            "erasing-async" => Ok(Stage::Erasing(Some(SyncMode::Async))),
            "masking" => Ok(Stage::Masking),
            "noise" => Ok(Stage::Noise(None)),
            "noise-sync" => Ok(Stage::Noise(Some(SyncMode::Sync))),
            "noise-async" => Ok(Stage::Noise(Some(SyncMode::Async))),
            other => Err(AugmentError::UnknownStage(other.into())),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Geometric => f.write_str("geometric"),
            Stage::Erasing(None) => f.write_str("erasing"),
            Stage::Erasing(Some(m)) => write!(f, "erasing-{}", m.name()),
            Stage::Masking => f.write_str("masking"),
            Stage::Noise(None) => f.write_str("noise"),
            Stage::Noise(Some(m)) => write!(f, "noise-{}", m.name()),
        }
    }
}

/// What a stage actually drew and applied.
#[derive(Debug, Clone, PartialEq)]
pub enum StageRecord {
    /// Parameters applied to each modality; always equal.
    Geometric {
        vis: GeometricParams,
        ir: GeometricParams,
    },
    Erasing {
        mode: SyncMode,
        vis: Option<EraseRect>,
        ir: Option<EraseRect>,
    },
    Masking(MaskChoice),
    /// Noise model applied to each modality, `None` when skipped.
    Noise {
        mode: SyncMode,
        vis: Option<NoiseModel>,
        ir: Option<NoiseModel>,
    },
}

fn fmt_rect(r: &Option<EraseRect>) -> String {
    match r {
        Some(r) => alloc::format!("{},{},{},{}", r.x, r.y, r.w, r.h),
        None => "-".into(),
    }
}

fn fmt_model(m: &Option<NoiseModel>) -> &'static str {
    m.map_or("-", |m| m.name())
}

impl fmt::Display for StageRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StageRecord::Geometric { vis, ir } => {
                write!(f, "geometric(vis={vis};ir={ir})")
            }
            StageRecord::Erasing { mode, vis, ir } => write!(
                f,
                "erasing-{}(vis={};ir={})",
                mode.name(),
                fmt_rect(vis),
                fmt_rect(ir)
            ),
            StageRecord::Masking(choice) => write!(f, "masking({})", choice.name()),
            StageRecord::Noise { mode, vis, ir } => write!(
                f,
                "noise-{}(vis={};ir={})",
                mode.name(),
                fmt_model(vis),
                fmt_model(ir)
            ),
        }
    }
}

/// Ordered record of every stage of one pipeline run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AugmentLog {
    pub records: Vec<StageRecord>,
}

impl fmt::Display for AugmentLog {
    /// Space-separated stage records on a single line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.records.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Applies `stages` in order, with any geometric stage moved to the front.
/// Stage `k` (after reordering) draws from stream `k` of `rng`'s seed.
pub fn apply_pipeline(
    pair: &ImagePair,
    cfg: &AugmentConfig,
    stages: &[Stage],
    rng: &RngState,
) -> Result<(ImagePair, AugmentLog), AugmentError> {
    cfg.validate()?;
    let mut ordered: Vec<Stage> = stages
        .iter()
        .copied()
        .filter(|s| *s == Stage::Geometric)
        .collect();
    ordered.extend(stages.iter().copied().filter(|s| *s != Stage::Geometric));

    let mut current = pair.clone();
    let mut log = AugmentLog::default();
    for (k, stage) in ordered.iter().enumerate() {
        let mut stage_rng = RngState::stream(rng.seed(), k as u64);
        let (next, record) = match *stage {
            Stage::Geometric => {
                let (p, params) = geometric_augment(&current, cfg, &mut stage_rng)?;
                (p, StageRecord::Geometric { vis: params, ir: params })
            }
            Stage::Erasing(mode) => {
                let mut c = cfg.clone();
                if let Some(m) = mode {
                    c.erase.mode = m;
                }
                let (p, vis, ir) = random_erasing(&current, &c, &mut stage_rng)?;
                (p, StageRecord::Erasing { mode: c.erase.mode, vis, ir })
            }
            Stage::Masking => {
                let (p, choice) = random_masking(&current, cfg, &mut stage_rng)?;
                (p, StageRecord::Masking(choice))
            }
            Stage::Noise(mode) => {
                let mut c = cfg.clone();
                if let Some(m) = mode {
                    c.noise.mode = m;
                }
                let (p, vis, ir) = inject_noise(&current, &c, &mut stage_rng)?;
                (p, StageRecord::Noise { mode: c.noise.mode, vis, ir })
            }
        };
        current = next;
        log.records.push(record);
    }
    Ok((current, log))
}
