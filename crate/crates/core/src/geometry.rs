//! Box arithmetic, annotation semantics and evaluation subsets.
//!
//! Boxes are real-valued `(x, y, w, h)` rectangles in pixel units with the
//! origin at the top-left corner. Widths and heights are strictly positive,
//! which keeps every ratio in this module well defined.

use alloc::string::String;
use core::fmt;

/// Width-to-height ratio applied to every predicted pedestrian.
pub const PEDESTRIAN_ASPECT_RATIO: f64 = 0.41;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("non-positive width {0}")]
    NonPositiveWidth(f64),
    #[error("non-positive height {0}")]
    NonPositiveHeight(f64),
    #[error("non-finite box coordinate")]
    NonFinite,
    #[error("subset height range [{min}, {max}] is not ordered")]
    UnorderedHeightRange { min: f64, max: f64 },
}

/// Axis-aligned box with strictly positive extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if w <= 0.0 {
            return Err(GeometryError::NonPositiveWidth(w));
        }
        if h <= 0.0 {
            return Err(GeometryError::NonPositiveHeight(h));
        }
        Ok(Self { x, y, w, h })
    }

    /// Builds a box from its two corners, `(x1, y1)` top-left and `(x2, y2)` bottom-right.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        Self::new(x1, y1, x2 - x1, y2 - y1)
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// True when `other` lies entirely inside `self` (shared edges count as inside).
    pub fn contains(&self, other: &BBox) -> bool {
        self.x <= other.x
            && self.y <= other.y
            && self.right() >= other.right()
            && self.bottom() >= other.bottom()
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x, self.y, self.w, self.h)
    }
}

/// Intersection over union.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let ratio = inter / (a.area() + b.area() - inter);
    ratio.clamp(0.0, 1.0)
}

/// Fraction of `det` covered by `region`.
pub fn ioa(det: &BBox, region: &BBox) -> f64 {
    if det == region {
        return 1.0;
    }
    (det.intersection_area(region) / det.area()).clamp(0.0, 1.0)
}

/// Smallest axis-aligned box covering both inputs.
pub fn union_box(vis: &BBox, ir: &BBox) -> BBox {
    let x1 = vis.x.min(ir.x);
    let y1 = vis.y.min(ir.y);
    let x2 = vis.right().max(ir.right());
    let y2 = vis.bottom().max(ir.bottom());
    BBox {
        x: x1,
        y: y1,
        w: x2 - x1,
        h: y2 - y1,
    }
}

/// Width of a pedestrian box of height `h` under the fixed aspect ratio.
pub fn width_from_height(h: f64) -> f64 {
    PEDESTRIAN_ASPECT_RATIO * h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Person,
    People,
    PersonUnsure,
    Cyclist,
}

impl Label {
    pub const ALL: [Label; 4] = [
        Label::Person,
        Label::People,
        Label::PersonUnsure,
        Label::Cyclist,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Person => "person",
            Label::People => "people",
            Label::PersonUnsure => "person?",
            Label::Cyclist => "cyclist",
        }
    }

    /// Accepts the canonical token plus `person_unsure` as an alias for `person?`.
    pub fn parse(token: &str) -> Option<Label> {
        match token {
            "person" => Some(Label::Person),
            "people" => Some(Label::People),
            "person?" | "person_unsure" => Some(Label::PersonUnsure),
            "cyclist" => Some(Label::Cyclist),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Occlusion {
    None,
    Partial,
    Heavy,
}

impl Occlusion {
    pub const ALL: [Occlusion; 3] = [Occlusion::None, Occlusion::Partial, Occlusion::Heavy];

    pub fn level(&self) -> u8 {
        match self {
            Occlusion::None => 0,
            Occlusion::Partial => 1,
            Occlusion::Heavy => 2,
        }
    }

    pub fn from_level(level: u8) -> Option<Occlusion> {
        match level {
            0 => Some(Occlusion::None),
            1 => Some(Occlusion::Partial),
            2 => Some(Occlusion::Heavy),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Occlusion::None => "none",
            Occlusion::Partial => "partial",
            Occlusion::Heavy => "heavy",
        }
    }

    pub fn from_name(name: &str) -> Option<Occlusion> {
        match name {
            "none" => Some(Occlusion::None),
            "partial" => Some(Occlusion::Partial),
            "heavy" => Some(Occlusion::Heavy),
            _ => None,
        }
    }
}

/// Set of occlusion levels, stored as a 3-bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct OcclusionSet(u8);

impl OcclusionSet {
    pub const EMPTY: OcclusionSet = OcclusionSet(0);
    pub const ALL: OcclusionSet = OcclusionSet(0b111);

    pub fn of(levels: &[Occlusion]) -> Self {
        levels.iter().fold(Self::EMPTY, |s, &o| s.with(o))
    }

    pub fn with(self, occ: Occlusion) -> Self {
        OcclusionSet(self.0 | (1 << occ.level()))
    }

    pub fn contains(&self, occ: Occlusion) -> bool {
        self.0 & (1 << occ.level()) != 0
    }

    pub fn iter(&self) -> impl Iterator<Item = Occlusion> + '_ {
        Occlusion::ALL.into_iter().filter(|o| self.contains(*o))
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annotation {
    pub bbox: BBox,
    pub label: Label,
    pub occlusion: Occlusion,
}

impl Annotation {
    pub fn new(bbox: BBox, label: Label, occlusion: Occlusion) -> Self {
        Self {
            bbox,
            label,
            occlusion,
        }
    }

    pub fn person(bbox: BBox) -> Self {
        Self::new(bbox, Label::Person, Occlusion::None)
    }
}

/// Whether a ground-truth entry counts toward a subset or acts as an ignore region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GtClass {
    Evaluate,
    Ignore,
}

/// Height and occlusion filter defining an evaluation subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSpec {
    name: String,
    min_height: f64,
    max_height: f64,
    allowed_occlusion: OcclusionSet,
}

impl SubsetSpec {
    pub fn new(
        name: impl Into<String>,
        min_height: f64,
        max_height: f64,
        allowed_occlusion: OcclusionSet,
    ) -> Result<Self, GeometryError> {
        if !(min_height >= 0.0 && min_height <= max_height) {
            return Err(GeometryError::UnorderedHeightRange {
                min: min_height,
                max: max_height,
            });
        }
        Ok(Self {
            name: name.into(),
            min_height,
            max_height,
            allowed_occlusion,
        })
    }

    /// Pedestrians at least 55 px tall with no or partial occlusion.
    pub fn reasonable() -> Self {
        Self {
            name: "Reasonable".into(),
            min_height: 55.0,
            max_height: f64::INFINITY,
            allowed_occlusion: OcclusionSet::of(&[Occlusion::None, Occlusion::Partial]),
        }
    }

    /// Pedestrians of any height and occlusion level.
    pub fn all() -> Self {
        Self {
            name: "All".into(),
            min_height: 0.0,
            max_height: f64::INFINITY,
            allowed_occlusion: OcclusionSet::ALL,
        }
    }

    /// Looks up a built-in subset by case-insensitive name.
    pub fn builtin(name: &str) -> Option<Self> {
        if name.eq_ignore_ascii_case("reasonable") {
            Some(Self::reasonable())
        } else if name.eq_ignore_ascii_case("all") || name.eq_ignore_ascii_case("overall") {
            Some(Self::all())
        } else {
            None
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn min_height(&self) -> f64 {
        self.min_height
    }

    pub fn max_height(&self) -> f64 {
        self.max_height
    }

    pub fn allowed_occlusion(&self) -> OcclusionSet {
        self.allowed_occlusion
    }
}

/// Only `person` boxes inside the height range with an allowed occlusion
/// level are evaluated; everything else becomes an ignore region.
pub fn classify(ann: &Annotation, spec: &SubsetSpec) -> GtClass {
    let h = ann.bbox.h();
    if ann.label == Label::Person
        && h >= spec.min_height
        && h <= spec.max_height
        && spec.allowed_occlusion.contains(ann.occlusion)
    {
        GtClass::Evaluate
    } else {
        GtClass::Ignore
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(100.0, 100.0, 5.0, 5.0)), 0.0);
        // inter 50, union 150
        assert!((iou(&a, &bb(5.0, 0.0, 10.0, 10.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ioa_examples() {
        let region = bb(0.0, 0.0, 100.0, 100.0);
        assert_eq!(ioa(&bb(10.0, 10.0, 5.0, 5.0), &region), 1.0);
        assert_eq!(ioa(&bb(200.0, 10.0, 5.0, 5.0), &region), 0.0);
        assert_eq!(ioa(&bb(0.0, 0.0, 10.0, 10.0), &bb(5.0, 0.0, 10.0, 10.0)), 0.5);
    }

    #[test]
    fn union_examples() {
        let a = bb(10.0, 10.0, 20.0, 40.0);
        assert_eq!(union_box(&a, &a), a);
        assert_eq!(
            union_box(&a, &bb(12.0, 8.0, 20.0, 44.0)),
            bb(10.0, 8.0, 22.0, 44.0)
        );
        let outer = bb(0.0, 0.0, 100.0, 100.0);
        assert_eq!(union_box(&a, &outer), outer);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert_eq!(
            BBox::new(0.0, 0.0, -5.0, 1.0),
            Err(GeometryError::NonPositiveWidth(-5.0))
        );
        assert_eq!(
            BBox::new(0.0, 0.0, 5.0, 0.0),
            Err(GeometryError::NonPositiveHeight(0.0))
        );
        assert_eq!(
            BBox::new(f64::NAN, 0.0, 5.0, 1.0),
            Err(GeometryError::NonFinite)
        );
    }

    #[test]
    fn classify_reasonable_boundary() {
        let spec = SubsetSpec::reasonable();
        let at = |h: f64, occ| Annotation::new(bb(0.0, 0.0, 20.0, h), Label::Person, occ);
        assert_eq!(classify(&at(55.0, Occlusion::None), &spec), GtClass::Evaluate);
        assert_eq!(classify(&at(54.0, Occlusion::None), &spec), GtClass::Ignore);
        assert_eq!(classify(&at(80.0, Occlusion::Partial), &spec), GtClass::Evaluate);
        assert_eq!(classify(&at(80.0, Occlusion::Heavy), &spec), GtClass::Ignore);
    }

    #[test]
    fn non_person_labels_are_ignored() {
        for label in [Label::People, Label::PersonUnsure, Label::Cyclist] {
            let ann = Annotation::new(bb(0.0, 0.0, 40.0, 100.0), label, Occlusion::None);
            assert_eq!(classify(&ann, &SubsetSpec::all()), GtClass::Ignore);
            assert_eq!(classify(&ann, &SubsetSpec::reasonable()), GtClass::Ignore);
        }
    }

    #[test]
    fn subset_spec_rejects_unordered_range() {
        assert!(SubsetSpec::new("x", 60.0, 40.0, OcclusionSet::ALL).is_err());
        assert!(SubsetSpec::new("x", -1.0, 40.0, OcclusionSet::ALL).is_err());
        assert!(SubsetSpec::new("x", 20.0, f64::INFINITY, OcclusionSet::ALL).is_ok());
    }

    #[test]
    fn width_from_height_uses_fixed_aspect() {
        assert!((width_from_height(100.0) - 41.0).abs() < 1e-12);
        assert!((width_from_height(55.0) - 22.55).abs() < 1e-12);
    }

    // Coordinates on a 1/8 px lattice keep corner arithmetic exact.
    fn arb_box() -> impl Strategy<Value = BBox> {
        (-400i32..400, -400i32..400, 1i32..480, 1i32..480).prop_map(|(x, y, w, h)| {
            BBox::new(x as f64 / 8.0, y as f64 / 8.0, w as f64 / 8.0, h as f64 / 8.0).unwrap()
        })
    }

    proptest! {
        #[test]
        fn iou_is_symmetric(a in arb_box(), b in arb_box()) {
            prop_assert_eq!(iou(&a, &b), iou(&b, &a));
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn self_overlap_is_one(a in arb_box()) {
            prop_assert_eq!(iou(&a, &a), 1.0);
            prop_assert_eq!(ioa(&a, &a), 1.0);
        }

        #[test]
        fn union_is_minimal_cover(a in arb_box(), b in arb_box()) {
            let u = union_box(&a, &b);
            prop_assert!(u.contains(&a) && u.contains(&b));
            let eps = 1.0 / 64.0;
            let shrunk = [
                BBox::from_corners(u.x() + eps, u.y(), u.right(), u.bottom()).unwrap(),
                BBox::from_corners(u.x(), u.y() + eps, u.right(), u.bottom()).unwrap(),
                BBox::from_corners(u.x(), u.y(), u.right() - eps, u.bottom()).unwrap(),
                BBox::from_corners(u.x(), u.y(), u.right(), u.bottom() - eps).unwrap(),
            ];
            for s in shrunk {
                prop_assert!(!(s.contains(&a) && s.contains(&b)));
            }
        }

        #[test]
        fn classify_is_monotone_in_height(h1 in 1.0..200.0f64, h2 in 1.0..200.0f64, occ in 0u8..3) {
            let (hi, lo) = if h1 >= h2 { (h1, h2) } else { (h2, h1) };
            let occ = Occlusion::from_level(occ).unwrap();
            let spec = SubsetSpec::reasonable();
            let low = Annotation::new(bb(0.0, 0.0, 10.0, lo), Label::Person, occ);
            let high = Annotation::new(bb(0.0, 0.0, 10.0, hi), Label::Person, occ);
            if classify(&low, &spec) == GtClass::Evaluate {
                prop_assert_eq!(classify(&high, &spec), GtClass::Evaluate);
            }
        }
    }
}
