//! Anchor-free multispectral pedestrian detection primitives.
//!
//! The crate is `no_std` and only needs `alloc`. It provides:
//!
//! - [`geometry`]: boxes, annotations, evaluation subsets and paired-annotation fusion.
//! - [`codec`]: center/scale/offset target encoding and box decoding with NMS.
//! - [`loss`]: focal center loss and smooth-L1 regression with analytic gradients.
//! - [`fusion`]: forward-only VIS+IR fusion topologies over a small convolutional backbone.
//! - [`augment`]: seedable augmentation suite for aligned VIS/IR image pairs.
//! - [`eval`]: detection matching, miss-rate/FPPI curves and log-average miss rate.
//!
//! File formats, configuration and the command-line tool live in the `mscsp` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod augment;
pub mod codec;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod grid;
pub mod loss;
pub mod rng;

pub use codec::{CodecConfig, Detection, DetectionMaps, ImageSize, TargetMaps};
pub use geometry::{Annotation, BBox, GtClass, Label, Occlusion, OcclusionSet, SubsetSpec};
pub use grid::Grid;
pub use rng::RngState;
