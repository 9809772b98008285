use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::ops::{clone_input_conv, conv2d, l2_normalize, nin_fuse, upsample, ConvLayer, Padding};
use super::{FusionError, Tensor};
use crate::codec::DetectionMaps;
use crate::grid::Grid;
use crate::rng::RngState;

/// Width of the 3x3 head convolution.
pub const DEFAULT_HEAD_CHANNELS: usize = 32;
/// Initial per-channel factor of every L2-normalization layer.
pub const L2_SCALE_INIT: f64 = 10.0;

const IMAGE_CHANNELS: usize = 3;
const STAGES: usize = 5;
/// Stage indices (0-based) whose outputs feed the detection head.
const HEAD_LEVELS: [usize; 3] = [2, 3, 4];
/// Output maps are this many times smaller than the input.
const OUTPUT_STRIDE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StageSpec {
    pub out_channels: usize,
    pub stride: usize,
}

/// Five convolutional stages with cumulative strides `(.., .., 8, 16, 16)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackboneSpec {
    stages: Vec<StageSpec>,
}

impl Default for BackboneSpec {
    fn default() -> Self {
        let stages = [(8, 2), (16, 2), (32, 2), (64, 2), (64, 1)]
            .into_iter()
            .map(|(out_channels, stride)| StageSpec {
                out_channels,
                stride,
            })
            .collect();
        Self { stages }
    }
}

impl BackboneSpec {
    pub fn new(stages: Vec<StageSpec>) -> Result<Self, FusionError> {
        if stages.len() != STAGES {
            return Err(FusionError::InvalidSpec("backbone must have exactly 5 stages"));
        }
        if stages.iter().any(|s| s.out_channels == 0) {
            return Err(FusionError::InvalidSpec("stage channel counts must be positive"));
        }
        if stages.iter().any(|s| s.stride != 1 && s.stride != 2) {
            return Err(FusionError::InvalidSpec("stage strides must be 1 or 2"));
        }
        let spec = Self { stages };
        let cum = spec.cumulative_strides();
        if cum[2] != 8 || cum[3] != 16 || cum[4] != 16 {
            return Err(FusionError::InvalidSpec(
                "cumulative strides of stages 3, 4 and 5 must be 8, 16 and 16",
            ));
        }
        Ok(spec)
    }

    /// Builds a spec from parallel channel and stride lists.
    pub fn from_lists(channels: &[usize], strides: &[usize]) -> Result<Self, FusionError> {
        if channels.len() != strides.len() {
            return Err(FusionError::InvalidSpec("channel and stride lists differ in length"));
        }
        Self::new(
            channels
                .iter()
                .zip(strides)
                .map(|(&out_channels, &stride)| StageSpec {
                    out_channels,
                    stride,
                })
                .collect(),
        )
    }

    pub fn stages(&self) -> &[StageSpec] {
        &self.stages
    }

    pub fn cumulative_strides(&self) -> Vec<usize> {
        self.stages
            .iter()
            .scan(1, |acc, s| {
                *acc *= s.stride;
                Some(*acc)
            })
            .collect()
    }

    fn level_channels(&self) -> [usize; 3] {
        HEAD_LEVELS.map(|i| self.stages[i].out_channels)
    }

    fn level_factors(&self) -> [usize; 3] {
        let cum = self.cumulative_strides();
        HEAD_LEVELS.map(|i| cum[i] / OUTPUT_STRIDE)
    }

    fn input_multiple(&self) -> usize {
        self.cumulative_strides()[STAGES - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Topology {
    /// VIS and IR stacked into a six-channel image, single backbone.
    InputFusion,
    /// Two backbones; all six level maps meet only in the head.
    LateFusionBaseline,
    /// Two backbones; IR features added into the VIS stream after every stage.
    SparseFusion,
    /// Two backbones through stage 3, one NiN fusion, shared stages 4 and 5.
    HalfwayFusion,
    /// Two backbones with a NiN fusion block per level before upsampling.
    LateFusion,
    VisOnly,
    IrOnly,
}

impl Topology {
    pub const ALL: [Topology; 7] = [
        Topology::InputFusion,
        Topology::LateFusionBaseline,
        Topology::SparseFusion,
        Topology::HalfwayFusion,
        Topology::LateFusion,
        Topology::VisOnly,
        Topology::IrOnly,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Topology::InputFusion => "input-fusion",
            Topology::LateFusionBaseline => "late-fusion-baseline",
            Topology::SparseFusion => "sparse-fusion",
            Topology::HalfwayFusion => "halfway-fusion",
            Topology::LateFusion => "late-fusion",
            Topology::VisOnly => "vis-only",
            Topology::IrOnly => "ir-only",
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Topology::ALL
            .into_iter()
            .find(|t| t.name() == norm)
            .ok_or_else(|| FusionError::UnknownTopology(s.into()))
    }
}

/// Fixed bilinear upsampling followed by L2 normalization with a learnable
/// per-channel scale.
#[derive(Debug, Clone, PartialEq)]
struct DeconvBlock {
    factor: usize,
    scale: Vec<f64>,
}

impl DeconvBlock {
    fn new(channels: usize, factor: usize) -> Self {
        Self {
            factor,
            scale: alloc::vec![L2_SCALE_INIT; channels],
        }
    }

    fn apply(&self, x: &Tensor) -> Result<Tensor, FusionError> {
        l2_normalize(&upsample(x, self.factor)?, &self.scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Head {
    conv: ConvLayer,
    center: ConvLayer,
    scale: ConvLayer,
    offset: ConvLayer,
}

/// Shape of one intermediate tensor, recorded during a traced forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub name: String,
    /// `(channels, height, width)`.
    pub shape: (usize, usize, usize),
}

/// One parameterized layer of a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSummary {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Zero for the L2-normalization scale vectors.
    pub kernel: usize,
    pub stride: usize,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSummary {
    pub topology: Topology,
    pub seed: u64,
    pub layers: Vec<LayerSummary>,
    pub total_params: usize,
}

impl fmt::Display for GraphSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "topology: {}", self.topology)?;
        writeln!(f, "seed: {}", self.seed)?;
        writeln!(
            f,
            "{:<24} {:>6} {:>6} {:>6} {:>6} {:>10}",
            "layer", "in", "out", "kernel", "stride", "params"
        )?;
        for l in &self.layers {
            let kernel = if l.kernel == 0 {
                String::from("-")
            } else {
                format!("{0}x{0}", l.kernel)
            };
            writeln!(
                f,
                "{:<24} {:>6} {:>6} {:>6} {:>6} {:>10}",
                l.name, l.in_channels, l.out_channels, kernel, l.stride, l.params
            )?;
        }
        write!(f, "total params: {}", self.total_params)
    }
}

/// A fully instantiated fusion network.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionGraph {
    topology: Topology,
    spec: BackboneSpec,
    seed: u64,
    vis: Vec<ConvLayer>,
    ir: Vec<ConvLayer>,
    tail: Vec<ConvLayer>,
    fusion: Vec<ConvLayer>,
    deconvs: Vec<DeconvBlock>,
    head: Head,
}

fn build_stages(
    spec: &BackboneSpec,
    range: core::ops::Range<usize>,
    mut in_channels: usize,
    rng: &mut RngState,
) -> Vec<ConvLayer> {
    let mut layers = Vec::with_capacity(range.len());
    for stage in &spec.stages[range] {
        layers.push(ConvLayer::random(
            in_channels,
            stage.out_channels,
            3,
            stage.stride,
            rng,
        ));
        in_channels = stage.out_channels;
    }
    layers
}

fn run_stages(
    stages: &[ConvLayer],
    mut x: Tensor,
    prefix: &str,
    first_stage: usize,
    trace: &mut Option<&mut Vec<TraceEntry>>,
) -> Result<Vec<Tensor>, FusionError> {
    let mut outputs = Vec::with_capacity(stages.len());
    for (i, layer) in stages.iter().enumerate() {
        let mut y = conv2d(&x, layer, Padding::Same)?;
        y.relu_in_place();
        record(trace, || format!("{prefix}.stage{}", first_stage + i + 1), &y);
        outputs.push(y.clone());
        x = y;
    }
    Ok(outputs)
}

fn record(trace: &mut Option<&mut Vec<TraceEntry>>, name: impl FnOnce() -> String, t: &Tensor) {
    if let Some(entries) = trace.as_deref_mut() {
        entries.push(TraceEntry {
            name: name(),
            shape: t.shape(),
        });
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

impl FusionGraph {
    /// Deterministic graph for `seed` with the default head width.
    pub fn build(topology: Topology, spec: &BackboneSpec, seed: u64) -> Self {
        Self::build_with_head(topology, spec, DEFAULT_HEAD_CHANNELS, seed)
    }

    pub fn build_with_head(
        topology: Topology,
        spec: &BackboneSpec,
        head_channels: usize,
        seed: u64,
    ) -> Self {
        let mut rng = RngState::from_seed(seed);
        let levels = spec.level_channels();
        let factors = spec.level_factors();
        let full = 0..STAGES;

        let mut vis = Vec::new();
        let mut ir = Vec::new();
        let mut tail = Vec::new();
        let mut fusion = Vec::new();
        let mut deconv_channels: Vec<(usize, usize)> = Vec::new();
        let per_level = |ch: &[usize; 3]| -> Vec<(usize, usize)> {
            ch.iter().copied().zip(factors).collect()
        };

        match topology {
            Topology::VisOnly => {
                vis = build_stages(spec, full, IMAGE_CHANNELS, &mut rng);
                deconv_channels = per_level(&levels);
            }
            Topology::IrOnly => {
                ir = build_stages(spec, full, IMAGE_CHANNELS, &mut rng);
                deconv_channels = per_level(&levels);
            }
            Topology::InputFusion => {
                vis = build_stages(spec, full, IMAGE_CHANNELS, &mut rng);
                vis[0] = clone_input_conv(&vis[0]).expect("first stage takes three channels");
                deconv_channels = per_level(&levels);
            }
            Topology::LateFusionBaseline => {
                vis = build_stages(spec, full.clone(), IMAGE_CHANNELS, &mut rng);
                ir = build_stages(spec, full, IMAGE_CHANNELS, &mut rng);
                deconv_channels.extend(per_level(&levels));
                deconv_channels.extend(per_level(&levels));
            }
            Topology::SparseFusion => {
                vis = build_stages(spec, full.clone(), IMAGE_CHANNELS, &mut rng);
                ir = build_stages(spec, full, IMAGE_CHANNELS, &mut rng);
                deconv_channels = per_level(&levels);
            }
            Topology::HalfwayFusion => {
                vis = build_stages(spec, 0..3, IMAGE_CHANNELS, &mut rng);
                ir = build_stages(spec, 0..3, IMAGE_CHANNELS, &mut rng);
                let c3 = levels[0];
                fusion.push(ConvLayer::random(2 * c3, c3, 1, 1, &mut rng));
                tail = build_stages(spec, 3..STAGES, c3, &mut rng);
                deconv_channels = per_level(&levels);
            }
            Topology::LateFusion => {
                vis = build_stages(spec, full.clone(), IMAGE_CHANNELS, &mut rng);
                ir = build_stages(spec, full, IMAGE_CHANNELS, &mut rng);
                for &c in &levels {
                    fusion.push(ConvLayer::random(2 * c, c, 1, 1, &mut rng));
                }
                deconv_channels = per_level(&levels);
            }
        }

        let deconvs: Vec<DeconvBlock> = deconv_channels
            .iter()
            .map(|&(c, f)| DeconvBlock::new(c, f))
            .collect();
        let head_in: usize = deconv_channels.iter().map(|(c, _)| c).sum();
        let head = Head {
            conv: ConvLayer::random(head_in, head_channels, 3, 1, &mut rng),
            center: ConvLayer::random(head_channels, 1, 1, 1, &mut rng),
            scale: ConvLayer::random(head_channels, 1, 1, 1, &mut rng),
            offset: ConvLayer::random(head_channels, 2, 1, 1, &mut rng),
        };

        Self {
            topology,
            spec: spec.clone(),
            seed,
            vis,
            ir,
            tail,
            fusion,
            deconvs,
            head,
        }
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn vis_stages(&self) -> &[ConvLayer] {
        &self.vis
    }

    pub fn ir_stages(&self) -> &[ConvLayer] {
        &self.ir
    }

    /// Stages shared by both modalities after a mid-backbone fusion.
    pub fn shared_stages(&self) -> &[ConvLayer] {
        &self.tail
    }

    pub fn fusion_blocks(&self) -> &[ConvLayer] {
        &self.fusion
    }

    /// Number of backbone stems (1 for single-stream topologies, 2 otherwise).
    pub fn backbone_count(&self) -> usize {
        usize::from(!self.vis.is_empty()) + usize::from(!self.ir.is_empty())
    }

    /// Channel count entering the head's 3x3 convolution.
    pub fn head_in_channels(&self) -> usize {
        self.head.conv.in_channels()
    }

    /// Total scalar weight, bias and normalization-scale count.
    pub fn param_count(&self) -> usize {
        self.summary().total_params
    }

    pub fn summary(&self) -> GraphSummary {
        let mut layers = Vec::new();
        let conv = |name: String, l: &ConvLayer| LayerSummary {
            name,
            in_channels: l.in_channels(),
            out_channels: l.out_channels(),
            kernel: l.kernel(),
            stride: l.stride(),
            params: l.param_count(),
        };
        for (i, l) in self.vis.iter().enumerate() {
            layers.push(conv(format!("vis.stage{}", i + 1), l));
        }
        for (i, l) in self.ir.iter().enumerate() {
            layers.push(conv(format!("ir.stage{}", i + 1), l));
        }
        let fuse_levels: &[usize] = if self.topology == Topology::HalfwayFusion {
            &[3]
        } else {
            &[3, 4, 5]
        };
        for (l, level) in self.fusion.iter().zip(fuse_levels) {
            layers.push(conv(format!("fuse.level{level}"), l));
        }
        for (i, l) in self.tail.iter().enumerate() {
            layers.push(conv(format!("shared.stage{}", i + 4), l));
        }
        for (i, d) in self.deconvs.iter().enumerate() {
            let stream = if self.topology == Topology::LateFusionBaseline && i >= 3 {
                "ir."
            } else if self.topology == Topology::LateFusionBaseline {
                "vis."
            } else {
                ""
            };
            layers.push(LayerSummary {
                name: format!("{stream}deconv.level{}", i % 3 + 3),
                in_channels: d.scale.len(),
                out_channels: d.scale.len(),
                kernel: 0,
                stride: d.factor,
                params: d.scale.len(),
            });
        }
        layers.push(conv("head.conv".into(), &self.head.conv));
        layers.push(conv("head.center".into(), &self.head.center));
        layers.push(conv("head.scale".into(), &self.head.scale));
        layers.push(conv("head.offset".into(), &self.head.offset));
        let total_params = layers.iter().map(|l| l.params).sum();
        GraphSummary {
            topology: self.topology,
            seed: self.seed,
            layers,
            total_params,
        }
    }

    /// Runs the network. `vis` has 3 channels; `ir` has 1 (replicated to 3)
    /// or 3 channels. Single-modality topologies ignore the other input.
    pub fn forward(&self, vis: &Tensor, ir: &Tensor) -> Result<DetectionMaps, FusionError> {
        self.forward_impl(vis, ir, None)
    }

    /// Like [`forward`](Self::forward) and also records every intermediate shape.
    pub fn forward_traced(
        &self,
        vis: &Tensor,
        ir: &Tensor,
    ) -> Result<(DetectionMaps, Vec<TraceEntry>), FusionError> {
        let mut trace = Vec::new();
        let maps = self.forward_impl(vis, ir, Some(&mut trace))?;
        Ok((maps, trace))
    }

    /// Sparse fusion evaluated with the IR stream removed: the VIS backbone
    /// and head alone, on the same weights.
    pub fn forward_vis_path(&self, vis: &Tensor) -> Result<DetectionMaps, FusionError> {
        if self.topology != Topology::SparseFusion {
            return Err(FusionError::Unsupported("vis path is defined for sparse fusion only"));
        }
        self.check_input(vis, IMAGE_CHANNELS)?;
        let mut none = None;
        let feats = run_stages(&self.vis, vis.clone(), "vis", 0, &mut none)?;
        let levels: Vec<Tensor> = HEAD_LEVELS.iter().map(|&i| feats[i].clone()).collect();
        self.head_forward(&levels, &mut none)
    }

    fn check_input(&self, t: &Tensor, channels: usize) -> Result<(), FusionError> {
        if t.channels() != channels {
            return Err(FusionError::ChannelMismatch {
                expected: channels,
                found: t.channels(),
            });
        }
        let m = self.spec.input_multiple();
        if t.height() % m != 0 || t.width() % m != 0 {
            return Err(FusionError::Indivisible {
                height: t.height(),
                width: t.width(),
            });
        }
        Ok(())
    }

    fn forward_impl(
        &self,
        vis: &Tensor,
        ir: &Tensor,
        mut trace: Option<&mut Vec<TraceEntry>>,
    ) -> Result<DetectionMaps, FusionError> {
        let needs_vis = self.topology != Topology::IrOnly;
        let needs_ir = self.topology != Topology::VisOnly;
        let ir3 = match ir.channels() {
            1 => ir.repeat_channels(IMAGE_CHANNELS),
            _ => ir.clone(),
        };
        if needs_vis {
            self.check_input(vis, IMAGE_CHANNELS)?;
        }
        if needs_ir {
            self.check_input(&ir3, IMAGE_CHANNELS)?;
        }
        if needs_vis && needs_ir && (vis.height(), vis.width()) != (ir.height(), ir.width()) {
            return Err(FusionError::SpatialMismatch {
                left: (vis.height(), vis.width()),
                right: (ir.height(), ir.width()),
            });
        }

        let pick = |feats: &[Tensor]| -> Vec<Tensor> {
            HEAD_LEVELS.iter().map(|&i| feats[i].clone()).collect()
        };
        let t = &mut trace;
        let levels: Vec<Tensor> = match self.topology {
            Topology::VisOnly => pick(&run_stages(&self.vis, vis.clone(), "vis", 0, t)?),
            Topology::IrOnly => pick(&run_stages(&self.ir, ir3, "ir", 0, t)?),
            Topology::InputFusion => {
                let stacked = Tensor::concat_channels(vis, &ir3)?;
                record(t, || "input.stacked".into(), &stacked);
                pick(&run_stages(&self.vis, stacked, "vis", 0, t)?)
            }
            Topology::LateFusionBaseline => {
                let mut all = pick(&run_stages(&self.vis, vis.clone(), "vis", 0, t)?);
                all.extend(pick(&run_stages(&self.ir, ir3, "ir", 0, t)?));
                all
            }
            Topology::SparseFusion => {
                let mut xv = vis.clone();
                let mut xi = ir3;
                let mut feats = Vec::with_capacity(STAGES);
                for (k, (lv, li)) in self.vis.iter().zip(&self.ir).enumerate() {
                    let mut yi = conv2d(&xi, li, Padding::Same)?;
                    yi.relu_in_place();
                    record(t, || format!("ir.stage{}", k + 1), &yi);
                    let mut yv = conv2d(&xv, lv, Padding::Same)?;
                    yv.relu_in_place();
                    let fused = yv.add(&yi)?;
                    record(t, || format!("add.stage{}", k + 1), &fused);
                    feats.push(fused.clone());
                    xv = fused;
                    xi = yi;
                }
                pick(&feats)
            }
            Topology::HalfwayFusion => {
                let fv = run_stages(&self.vis, vis.clone(), "vis", 0, t)?;
                let fi = run_stages(&self.ir, ir3, "ir", 0, t)?;
                let mut fused = nin_fuse(&fv[2], &fi[2], &self.fusion[0])?;
                fused.relu_in_place();
                record(t, || "fuse.level3".into(), &fused);
                let rest = run_stages(&self.tail, fused.clone(), "shared", 3, t)?;
                let mut levels = alloc::vec![fused];
                levels.extend(rest);
                levels
            }
            Topology::LateFusion => {
                let fv = run_stages(&self.vis, vis.clone(), "vis", 0, t)?;
                let fi = run_stages(&self.ir, ir3, "ir", 0, t)?;
                let mut levels = Vec::with_capacity(3);
                for (block, &i) in self.fusion.iter().zip(&HEAD_LEVELS) {
                    let mut fused = nin_fuse(&fv[i], &fi[i], block)?;
                    fused.relu_in_place();
                    record(t, || format!("fuse.level{}", i + 1), &fused);
                    levels.push(fused);
                }
                levels
            }
        };
        self.head_forward(&levels, t)
    }

    fn head_forward(
        &self,
        levels: &[Tensor],
        trace: &mut Option<&mut Vec<TraceEntry>>,
    ) -> Result<DetectionMaps, FusionError> {
        let mut stacked: Option<Tensor> = None;
        for (i, (x, block)) in levels.iter().zip(&self.deconvs).enumerate() {
            let up = block.apply(x)?;
            record(trace, || format!("deconv.{}", i + 1), &up);
            stacked = Some(match stacked {
                None => up,
                Some(acc) => Tensor::concat_channels(&acc, &up)?,
            });
        }
        let stacked = stacked.ok_or(FusionError::InvalidLayer("head has no inputs"))?;
        record(trace, || "head.concat".into(), &stacked);

        let mut feat = conv2d(&stacked, &self.head.conv, Padding::Same)?;
        feat.relu_in_place();
        record(trace, || "head.conv".into(), &feat);

        let center = conv2d(&feat, &self.head.center, Padding::Valid)?.map(sigmoid);
        let scale = conv2d(&feat, &self.head.scale, Padding::Valid)?;
        let offset = conv2d(&feat, &self.head.offset, Padding::Valid)?;
        record(trace, || "head.center".into(), &center);
        record(trace, || "head.scale".into(), &scale);
        record(trace, || "head.offset".into(), &offset);

        let (rows, cols) = (center.height(), center.width());
        let grid = |t: &Tensor, c: usize| {
            Grid::from_vec(rows, cols, t.plane(c).to_vec()).expect("plane matches grid")
        };
        Ok(DetectionMaps {
            center: grid(&center, 0),
            scale: grid(&scale, 0),
            offset_x: grid(&offset, 0),
            offset_y: grid(&offset, 1),
        })
    }
}
