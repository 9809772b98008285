//! Line-oriented annotation and detection files.
//!
//! Annotation files hold one object per line, `label x y w h occlusion`,
//! and take their frame id from the file stem. Detection files hold one
//! detection per line, `frame_id x y w h score`. Blank lines and lines
//! starting with `#` are skipped; anything else must parse.
//!
//! Numbers are written with 6 significant digits.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mscsp_core::{Annotation, BBox, Detection, Label, Occlusion};

use crate::error::{read_to_string, write, IoError, LineError};

pub const SIGNIFICANT_DIGITS: usize = 6;

pub type AnnotationSet = BTreeMap<String, Vec<Annotation>>;
pub type DetectionSet = BTreeMap<String, Vec<Detection>>;

/// `%g`-style formatting with [`SIGNIFICANT_DIGITS`] digits.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= SIGNIFICANT_DIGITS as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).into()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split_whitespace().collect()))
        }
    })
}

fn number(line: usize, token: &str, what: &str) -> Result<f64, LineError> {
    let v: f64 = token
        .parse()
        .map_err(|_| LineError::new(line, format!("invalid number `{token}` for {what}")))?;
    if !v.is_finite() {
        return Err(LineError::new(line, format!("non-finite {what}")));
    }
    Ok(v)
}

fn bbox(line: usize, tokens: &[&str]) -> Result<BBox, LineError> {
    let x = number(line, tokens[0], "x")?;
    let y = number(line, tokens[1], "y")?;
    let w = number(line, tokens[2], "width")?;
    let h = number(line, tokens[3], "height")?;
    if w <= 0.0 {
        return Err(LineError::new(line, "non-positive width"));
    }
    if h <= 0.0 {
        return Err(LineError::new(line, "non-positive height"));
    }
    BBox::new(x, y, w, h).map_err(|e| LineError::new(line, e.to_string()))
}

pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>, LineError> {
    content_lines(text)
        .map(|(line, t)| {
            if t.len() != 6 {
                return Err(LineError::new(
                    line,
                    format!("expected 6 fields (label x y w h occlusion), found {}", t.len()),
                ));
            }
            let label = Label::parse(t[0])
                .ok_or_else(|| LineError::new(line, format!("unknown label `{}`", t[0])))?;
            let bbox = bbox(line, &t[1..5])?;
            let occlusion = t[5]
                .parse::<u8>()
                .ok()
                .and_then(Occlusion::from_level)
                .ok_or_else(|| LineError::new(line, format!("invalid occlusion level `{}`", t[5])))?;
            Ok(Annotation::new(bbox, label, occlusion))
        })
        .collect()
}

fn box_fields(b: &BBox) -> String {
    format!(
        "{} {} {} {}",
        format_sig(b.x()),
        format_sig(b.y()),
        format_sig(b.w()),
        format_sig(b.h())
    )
}

pub fn format_annotations(anns: &[Annotation]) -> String {
    anns.iter()
        .map(|a| {
            format!(
                "{} {} {}\n",
                a.label.as_str(),
                box_fields(&a.bbox),
                a.occlusion.level()
            )
        })
        .collect()
}

pub fn parse_detections(text: &str) -> Result<Vec<(String, Detection)>, LineError> {
    content_lines(text)
        .map(|(line, t)| {
            if t.len() != 6 {
                return Err(LineError::new(
                    line,
                    format!("expected 6 fields (frame_id x y w h score), found {}", t.len()),
                ));
            }
            let bbox = bbox(line, &t[1..5])?;
            let score = number(line, t[5], "score")?;
            let det = Detection::new(bbox, score)
                .ok_or_else(|| LineError::new(line, format!("score {score} outside [0, 1]")))?;
            Ok((t[0].to_string(), det))
        })
        .collect()
}

/// Groups parsed detections by frame, keeping file order within a frame.
pub fn group_detections(dets: Vec<(String, Detection)>) -> DetectionSet {
    let mut out = DetectionSet::new();
    for (frame, d) in dets {
        out.entry(frame).or_default().push(d);
    }
    out
}

pub fn format_detection_line(frame: &str, d: &Detection) -> String {
    format!("{frame} {} {}\n", box_fields(&d.bbox), format_sig(d.score()))
}

pub fn format_detections(set: &DetectionSet) -> String {
    set.iter()
        .flat_map(|(frame, dets)| dets.iter().map(move |d| format_detection_line(frame, d)))
        .collect()
}

/// Frame id of an annotation or image file: its stem.
pub fn frame_id(path: &Path) -> Result<String, IoError> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| IoError::format(path, "file name is not valid UTF-8"))
}

pub fn read_annotation_file(path: &Path) -> Result<(String, Vec<Annotation>), IoError> {
    let text = read_to_string(path)?;
    let anns = parse_annotations(&text).map_err(|e| IoError::parse(path, e))?;
    Ok((frame_id(path)?, anns))
}

pub fn write_annotation_file(path: &Path, anns: &[Annotation]) -> Result<(), IoError> {
    write(path, format_annotations(anns))
}

pub fn read_detection_file(path: &Path) -> Result<DetectionSet, IoError> {
    let text = read_to_string(path)?;
    let dets = parse_detections(&text).map_err(|e| IoError::parse(path, e))?;
    Ok(group_detections(dets))
}

/// Files in `dir` with extension `ext`, sorted by name.
pub fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, IoError> {
    let entries = std::fs::read_dir(dir).map_err(|e| IoError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| IoError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Every `*.txt` annotation file of `dir`, keyed by frame id.
pub fn read_annotation_dir(dir: &Path) -> Result<AnnotationSet, IoError> {
    list_files(dir, "txt")?
        .iter()
        .map(|p| read_annotation_file(p))
        .collect()
}

pub fn write_annotation_dir(dir: &Path, set: &AnnotationSet) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    for (frame, anns) in set {
        write_annotation_file(&dir.join(format!("{frame}.txt")), anns)?;
    }
    Ok(())
}
