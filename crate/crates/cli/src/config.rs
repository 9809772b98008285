//! Flat `key = value` run configuration.
//!
//! Every key is optional and falls back to its default; unknown or repeated
//! keys are errors. [`RunConfig::to_text`] writes every key, and parsing that
//! text gives back the same configuration.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use mscsp_core::augment::{AugmentConfig, NoiseModel, Stage, SyncMode};
use mscsp_core::eval::EvalConfig;
use mscsp_core::fusion::{BackboneSpec, DEFAULT_HEAD_CHANNELS};
use mscsp_core::loss::LossConfig;
use mscsp_core::{CodecConfig, Occlusion, OcclusionSet, SubsetSpec};

use crate::error::{read_to_string, IoError, LineError};

/// Training constants of the reference setup. Recorded for completeness;
/// nothing in this toolkit trains a network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReference {
    pub optimizer: String,
    pub learning_rate: f64,
    pub epochs: usize,
    pub samples_per_epoch: usize,
    pub batch_size: usize,
}

impl Default for TrainingReference {
    fn default() -> Self {
        Self {
            optimizer: "adam".into(),
            learning_rate: 1e-4,
            epochs: 100,
            samples_per_epoch: 2000,
            batch_size: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub codec: CodecConfig,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    pub stages: Vec<Stage>,
    pub backbone: BackboneSpec,
    pub head_channels: usize,
    pub eval: EvalConfig,
    pub training: TrainingReference,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            codec: CodecConfig::default(),
            loss: LossConfig::default(),
            augment: AugmentConfig::default(),
            stages: vec![
                Stage::Geometric,
                Stage::Masking,
                Stage::Erasing(Some(SyncMode::Sync)),
            ],
            backbone: BackboneSpec::default(),
            head_channels: DEFAULT_HEAD_CHANNELS,
            eval: EvalConfig::default(),
            training: TrainingReference::default(),
        }
    }
}

fn parse<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| format!("invalid value `{value}`: {e}"))
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: Display,
{
    list(value).map(parse).collect()
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

fn model_name(m: Option<NoiseModel>) -> String {
    m.map_or("none".into(), |m| m.name().into())
}

fn parse_model(value: &str) -> Result<Option<NoiseModel>, String> {
    if value == "none" {
        Ok(None)
    } else {
        parse(value).map(Some)
    }
}

fn occlusion_list(set: OcclusionSet) -> String {
    set.iter().map(|o| o.name()).collect::<Vec<_>>().join("+")
}

fn parse_occlusion_list(value: &str) -> Result<OcclusionSet, String> {
    value.split('+').try_fold(OcclusionSet::EMPTY, |set, name| {
        Occlusion::from_name(name.trim())
            .map(|o| set.with(o))
            .ok_or_else(|| format!("unknown occlusion level `{name}`"))
    })
}

fn bound(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        v.to_string()
    }
}

fn parse_range(value: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = value
        .split_once('-')
        .ok_or_else(|| format!("expected `min-max`, found `{value}`"))?;
    let (lo, hi): (f64, f64) = (parse(lo.trim())?, parse(hi.trim())?);
    if !(lo >= 0.0 && lo <= hi) {
        return Err(format!("unordered range `{value}`"));
    }
    Ok((lo, hi))
}

/// Built-in subsets by name, others as `name:min-max:occ+occ`.
fn subset_text(s: &SubsetSpec) -> String {
    match SubsetSpec::builtin(s.name()) {
        Some(b) if b == *s => s.name().to_ascii_lowercase(),
        _ => format!(
            "{}:{}-{}:{}",
            s.name(),
            bound(s.min_height()),
            bound(s.max_height()),
            occlusion_list(s.allowed_occlusion())
        ),
    }
}

fn parse_subset(value: &str) -> Result<SubsetSpec, String> {
    let parts: Vec<&str> = value.split(':').collect();
    match parts.as_slice() {
        [name] => SubsetSpec::builtin(name).ok_or_else(|| format!("unknown subset `{name}`")),
        [name, range, occ] => {
            let (lo, hi) = parse_range(range)?;
            SubsetSpec::new(name.trim(), lo, hi, parse_occlusion_list(occ)?).map_err(|e| e.to_string())
        }
        _ => Err(format!("expected a subset name or `name:min-max:occ+occ`, found `{value}`")),
    }
}

fn pair(a: f64, b: f64) -> String {
    format!("{a}, {b}")
}

fn parse_pair(value: &str) -> Result<(f64, f64), String> {
    match parse_list::<f64>(value)?.as_slice() {
        &[a, b] => Ok((a, b)),
        _ => Err(format!("expected two numbers, found `{value}`")),
    }
}

impl RunConfig {
    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let c = &self.codec;
        let l = &self.loss;
        let a = &self.augment;
        let t = &self.training;
        let channels: Vec<usize> = self.backbone.stages().iter().map(|s| s.out_channels).collect();
        let strides: Vec<usize> = self.backbone.stages().iter().map(|s| s.stride).collect();
        vec![
            ("seed", self.seed.to_string()),
            ("codec.stride", c.stride.to_string()),
            ("codec.confidence_threshold", c.confidence_threshold.to_string()),
            ("codec.nms_threshold", c.nms_threshold.to_string()),
            ("codec.aspect_ratio", c.aspect_ratio.to_string()),
            ("codec.gaussian_sigma_factor", c.gaussian_sigma_factor.to_string()),
            ("codec.scale_radius", c.scale_radius.to_string()),
            ("loss.focal_gamma", l.focal_gamma.to_string()),
            ("loss.negative_beta", l.negative_beta.to_string()),
            ("loss.weight_center", l.weight_center.to_string()),
            ("loss.weight_scale", l.weight_scale.to_string()),
            ("loss.weight_offset", l.weight_offset.to_string()),
            ("loss.smooth_l1_delta", l.smooth_l1_delta.to_string()),
            ("loss.epsilon", l.epsilon.to_string()),
            ("augment.stages", join(&self.stages)),
            ("augment.target_height", a.target_height.to_string()),
            ("augment.target_width", a.target_width.to_string()),
            ("augment.flip_probability", a.flip_probability.to_string()),
            ("augment.rescale_range", pair(a.rescale_range.0, a.rescale_range.1)),
            ("augment.erase.probability", a.erase.probability.to_string()),
            ("augment.erase.area_range", pair(a.erase.area_range.0, a.erase.area_range.1)),
            ("augment.erase.aspect_range", pair(a.erase.aspect_range.0, a.erase.aspect_range.1)),
            ("augment.erase.mode", a.erase.mode.name().into()),
            ("augment.mask.probability", a.mask.probability.to_string()),
            ("augment.mask.split_vis", a.mask.split_vis.to_string()),
            ("augment.noise.probability", a.noise.probability.to_string()),
            ("augment.noise.vis_model", model_name(a.noise.vis_model)),
            ("augment.noise.ir_model", model_name(a.noise.ir_model)),
            ("augment.noise.mode", a.noise.mode.name().into()),
            ("augment.noise.gaussian_sigma", a.noise.gaussian_sigma.to_string()),
            ("augment.noise.poisson_peak", a.noise.poisson_peak.to_string()),
            ("augment.noise.sp_fraction", a.noise.sp_fraction.to_string()),
            ("backbone.channels", join(&channels)),
            ("backbone.strides", join(&strides)),
            ("head.channels", self.head_channels.to_string()),
            (
                "eval.subsets",
                self.eval.subsets.iter().map(subset_text).collect::<Vec<_>>().join(", "),
            ),
            (
                "eval.size_bins",
                self.eval
                    .size_bins
                    .iter()
                    .map(|&(lo, hi)| format!("{}-{}", bound(lo), bound(hi)))
                    .collect::<Vec<_>>()
                    .join(", "),
            ),
            (
                "eval.occlusion_bins",
                self.eval.occlusion_bins.iter().map(|o| o.name()).collect::<Vec<_>>().join(", "),
            ),
            ("eval.fppi_range", pair(self.eval.fppi_range.0, self.eval.fppi_range.1)),
            ("train.optimizer", t.optimizer.clone()),
            ("train.learning_rate", t.learning_rate.to_string()),
            ("train.epochs", t.epochs.to_string()),
            ("train.samples_per_epoch", t.samples_per_epoch.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
        ]
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let a = &mut self.augment;
        match key {
            "seed" => self.seed = parse(v)?,
            "codec.stride" => self.codec.stride = parse(v)?,
            "codec.confidence_threshold" => self.codec.confidence_threshold = parse(v)?,
            "codec.nms_threshold" => self.codec.nms_threshold = parse(v)?,
            "codec.aspect_ratio" => self.codec.aspect_ratio = parse(v)?,
            "codec.gaussian_sigma_factor" => self.codec.gaussian_sigma_factor = parse(v)?,
            "codec.scale_radius" => self.codec.scale_radius = parse(v)?,
            "loss.focal_gamma" => self.loss.focal_gamma = parse(v)?,
            "loss.negative_beta" => self.loss.negative_beta = parse(v)?,
            "loss.weight_center" => self.loss.weight_center = parse(v)?,
            "loss.weight_scale" => self.loss.weight_scale = parse(v)?,
            "loss.weight_offset" => self.loss.weight_offset = parse(v)?,
            "loss.smooth_l1_delta" => self.loss.smooth_l1_delta = parse(v)?,
            "loss.epsilon" => self.loss.epsilon = parse(v)?,
            "augment.stages" => self.stages = parse_list(v)?,
            "augment.target_height" => a.target_height = parse(v)?,
            "augment.target_width" => a.target_width = parse(v)?,
            "augment.flip_probability" => a.flip_probability = parse(v)?,
            "augment.rescale_range" => a.rescale_range = parse_pair(v)?,
            "augment.erase.probability" => a.erase.probability = parse(v)?,
            "augment.erase.area_range" => a.erase.area_range = parse_pair(v)?,
            "augment.erase.aspect_range" => a.erase.aspect_range = parse_pair(v)?,
            "augment.erase.mode" => a.erase.mode = parse::<SyncMode>(v)?,
            "augment.mask.probability" => a.mask.probability = parse(v)?,
            "augment.mask.split_vis" => a.mask.split_vis = parse(v)?,
            "augment.noise.probability" => a.noise.probability = parse(v)?,
            "augment.noise.vis_model" => a.noise.vis_model = parse_model(v)?,
            "augment.noise.ir_model" => a.noise.ir_model = parse_model(v)?,
            "augment.noise.mode" => a.noise.mode = parse::<SyncMode>(v)?,
            "augment.noise.gaussian_sigma" => a.noise.gaussian_sigma = parse(v)?,
            "augment.noise.poisson_peak" => a.noise.poisson_peak = parse(v)?,
            "augment.noise.sp_fraction" => a.noise.sp_fraction = parse(v)?,
            "backbone.channels" | "backbone.strides" => {
                let values: Vec<usize> = parse_list(v)?;
                let stages = self.backbone.stages();
                let (channels, strides) = if key == "backbone.channels" {
                    (values, stages.iter().map(|s| s.stride).collect())
                } else {
                    (stages.iter().map(|s| s.out_channels).collect(), values)
                };
                self.backbone = BackboneSpec::from_lists(&channels, &strides).map_err(|e| e.to_string())?;
            }
            "head.channels" => self.head_channels = parse(v)?,
            "eval.subsets" => self.eval.subsets = list(v).map(parse_subset).collect::<Result<_, _>>()?,
            "eval.size_bins" => self.eval.size_bins = list(v).map(parse_range).collect::<Result<_, _>>()?,
            "eval.occlusion_bins" => {
                self.eval.occlusion_bins = list(v)
                    .map(|n| Occlusion::from_name(n).ok_or_else(|| format!("unknown occlusion level `{n}`")))
                    .collect::<Result<_, _>>()?
            }
            "eval.fppi_range" => self.eval.fppi_range = parse_pair(v)?,
            "train.optimizer" => self.training.optimizer = v.into(),
            "train.learning_rate" => self.training.learning_rate = parse(v)?,
            "train.epochs" => self.training.epochs = parse(v)?,
            "train.samples_per_epoch" => self.training.samples_per_epoch = parse(v)?,
            "train.batch_size" => self.training.batch_size = parse(v)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Cross-field checks run after parsing.
    pub fn validate(&self) -> Result<(), String> {
        self.codec.validate().map_err(|e| e.to_string())?;
        self.loss.validate().map_err(|e| e.to_string())?;
        self.augment.validate().map_err(|e| e.to_string())?;
        if self.head_channels == 0 {
            return Err("head.channels must be positive".into());
        }
        let (lo, hi) = self.eval.fppi_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err("eval.fppi_range must be positive and ordered".into());
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self, LineError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        let mut last_line = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            last_line = line;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| LineError::new(line, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(LineError::new(line, format!("duplicate key `{key}`")));
            }
            seen.push(key);
            cfg.set(key, value).map_err(|m| LineError::new(line, format!("{key}: {m}")))?;
        }
        cfg.validate().map_err(|m| LineError::new(last_line, m))?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (key, value) in self.entries() {
            let head = key.split('.').next().unwrap_or("");
            if head != section && key.contains('.') {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("# {head}\n"));
                section = head;
            }
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = read_to_string(path)?;
        Self::parse_str(&text).map_err(|e| IoError::parse(path, e))
    }

    /// Defaults when `path` is `None`.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, IoError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}
