//! Fusion of per-modality annotation directories into union boxes.

use std::collections::BTreeSet;
use std::path::Path;

use mscsp_core::geometry::union_box;
use mscsp_core::Annotation;

use crate::error::IoError;
use crate::formats::{read_annotation_dir, AnnotationSet};

/// Pairs line `i` of each VIS file with line `i` of the IR file of the same
/// stem. Label and occlusion come from the VIS entry.
pub fn fuse_annotation_sets(vis: &AnnotationSet, ir: &AnnotationSet) -> Result<AnnotationSet, IoError> {
    let vis_keys: BTreeSet<&String> = vis.keys().collect();
    let ir_keys: BTreeSet<&String> = ir.keys().collect();
    if vis_keys != ir_keys {
        return Err(IoError::FileSetMismatch {
            only_vis: vis_keys.difference(&ir_keys).map(|s| s.to_string()).collect(),
            only_ir: ir_keys.difference(&vis_keys).map(|s| s.to_string()).collect(),
        });
    }
    let mut out = AnnotationSet::new();
    for (frame, v) in vis {
        let i = &ir[frame];
        if v.len() != i.len() {
            return Err(IoError::LineCountMismatch {
                frame: frame.clone(),
                vis: v.len(),
                ir: i.len(),
            });
        }
        let fused = v
            .iter()
            .zip(i)
            .map(|(a, b)| Annotation::new(union_box(&a.bbox, &b.bbox), a.label, a.occlusion))
            .collect();
        out.insert(frame.clone(), fused);
    }
    Ok(out)
}

pub fn fuse_annotation_dirs(vis_dir: &Path, ir_dir: &Path) -> Result<AnnotationSet, IoError> {
    fuse_annotation_sets(&read_annotation_dir(vis_dir)?, &read_annotation_dir(ir_dir)?)
}
