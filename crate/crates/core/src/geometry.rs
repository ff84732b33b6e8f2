//! LI/MA boundary handling: annotation parsing, arc-length resampling,
//! thickness profiles, calibrated CIMT, wall descriptors and dense mask
//! rasterization.
//!
//! Boundaries are open polylines in pixel coordinates (x to the right, y
//! down). Thickness is measured between points of the lumen–intima (LI) and
//! media–adventitia (MA) boundaries that share the same normalized arc-length
//! coordinate once both contours run left to right.

use std::fmt;

use log::warn;

use crate::error::{Error, Result};
use crate::grid::WallMask;

/// Default number of arc-length samples used for thickness profiles.
pub const DEFAULT_RESAMPLE_POINTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point::new(x, y)
    }
}

/// Which wall interface a contour traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundarySide {
    /// Lumen–intima.
    Li,
    /// Media–adventitia.
    Ma,
}

impl BoundarySide {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundarySide::Li => "LI",
            BoundarySide::Ma => "MA",
        }
    }
}

impl fmt::Display for BoundarySide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Left or right carotid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImageSide {
    Left,
    Right,
}

impl ImageSide {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l" | "left" => Some(ImageSide::Left),
            "r" | "right" => Some(ImageSide::Right),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ImageSide::Left => "left",
            ImageSide::Right => "right",
        }
    }
}

/// Pixel-to-millimetre calibration factor (mm per pixel), always positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Kappa(f64);

impl Kappa {
    pub fn new(mm_per_px: f64) -> Result<Self> {
        if !(mm_per_px.is_finite() && mm_per_px > 0.0) {
            return Err(Error::invalid(format!(
                "calibration factor must be positive, got {mm_per_px}"
            )));
        }
        Ok(Self(mm_per_px))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Per-image metadata attached to an annotated ultrasound frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedImageMeta {
    pub image_id: String,
    pub kappa: Kappa,
    pub height: usize,
    pub width: usize,
    pub patient_id: String,
    pub side: ImageSide,
}

/// Ordered planar polyline tracing one wall boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    points: Vec<Point>,
    side: BoundarySide,
}

impl Contour {
    /// Validates: at least two finite points in the non-negative quadrant and
    /// no two consecutive points identical.
    pub fn new(points: Vec<Point>, side: BoundarySide) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TooFewPoints(points.len()));
        }
        for (i, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::InvalidContour(format!("point {i} is not finite")));
            }
            if p.x < 0.0 || p.y < 0.0 {
                return Err(Error::InvalidContour(format!(
                    "point {i} ({}, {}) has a negative coordinate",
                    p.x, p.y
                )));
            }
        }
        if let Some(i) = points.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::InvalidContour(format!(
                "points {i} and {} are identical",
                i + 1
            )));
        }
        Ok(Self { points, side })
    }

    pub fn from_xy(xy: &[(f64, f64)], side: BoundarySide) -> Result<Self> {
        Self::new(xy.iter().copied().map(Point::from).collect(), side)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn side(&self) -> BoundarySide {
        self.side
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Point {
        self.points[0]
    }

    pub fn last(&self) -> Point {
        self.points[self.points.len() - 1]
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    pub fn reversed(&self) -> Contour {
        let mut points = self.points.clone();
        points.reverse();
        Contour {
            points,
            side: self.side,
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Result<Contour> {
        Contour::new(
            self.points
                .iter()
                .map(|p| Point::new(p.x + dx, p.y + dy))
                .collect(),
            self.side,
        )
    }

    /// Orders the contour so the endpoint with smaller x comes first (ties
    /// broken by smaller y).
    pub fn canonical(&self) -> Contour {
        let (a, b) = (self.first(), self.last());
        if (b.x, b.y) < (a.x, a.y) {
            self.reversed()
        } else {
            self.clone()
        }
    }

    /// Serializes as one `x y` pair per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            out.push_str(&format!("{} {}\n", p.x, p.y));
        }
        out
    }
}

/// Parses a plain-text boundary annotation: one `x y` pair per line, LF or
/// CRLF line endings, blank lines ignored.
pub fn parse_contour(text: &str, side: BoundarySide) -> Result<Contour> {
    let mut points = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::MalformedLine {
                line: idx + 1,
                reason: format!("expected 2 numbers, found {}", tokens.len()),
            });
        }
        let mut coords = [0.0; 2];
        for (slot, tok) in coords.iter_mut().zip(&tokens) {
            *slot = tok.parse::<f64>().map_err(|_| Error::MalformedLine {
                line: idx + 1,
                reason: format!("non-numeric token {tok:?}"),
            })?;
        }
        points.push(Point::new(coords[0], coords[1]));
    }
    if points.len() < 2 {
        return Err(Error::TooFewPoints(points.len()));
    }
    Contour::new(points, side)
}

/// Resamples `c` to `samples` points equally spaced in cumulative arc length.
/// The first and last original points are reproduced exactly.
pub fn resample_arclength(c: &Contour, samples: usize) -> Result<Contour> {
    let points = resample_points(c.points(), samples)?;
    Ok(Contour {
        points,
        side: c.side,
    })
}

fn resample_points(pts: &[Point], samples: usize) -> Result<Vec<Point>> {
    if samples < 2 {
        return Err(Error::invalid(format!(
            "resample count must be at least 2, got {samples}"
        )));
    }
    let mut cumulative = Vec::with_capacity(pts.len());
    cumulative.push(0.0);
    for w in pts.windows(2) {
        let last = *cumulative.last().unwrap();
        cumulative.push(last + w[0].distance(w[1]));
    }
    let total = *cumulative.last().unwrap();
    if total <= 0.0 {
        return Err(Error::DegenerateContour);
    }

    let mut out = Vec::with_capacity(samples);
    out.push(pts[0]);
    let mut seg = 0;
    for k in 1..samples - 1 {
        let target = total * k as f64 / (samples - 1) as f64;
        while seg + 2 < cumulative.len() && cumulative[seg + 1] < target {
            seg += 1;
        }
        let seg_len = cumulative[seg + 1] - cumulative[seg];
        let t = if seg_len > 0.0 {
            ((target - cumulative[seg]) / seg_len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(pts[seg].lerp(pts[seg + 1], t));
    }
    out.push(pts[pts.len() - 1]);
    Ok(out)
}

/// Local wall thickness sampled along normalized arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct ThicknessProfile {
    samples: Vec<f64>,
    s_coords: Vec<f64>,
}

impl ThicknessProfile {
    pub fn new(samples: Vec<f64>, s_coords: Vec<f64>) -> Result<Self> {
        if samples.len() != s_coords.len() {
            return Err(Error::LengthMismatch {
                expected: samples.len(),
                found: s_coords.len(),
            });
        }
        if samples.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: samples.len(),
            });
        }
        if samples.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::invalid("thickness samples must be finite and >= 0"));
        }
        if s_coords.windows(2).any(|w| w[1] <= w[0])
            || s_coords[0] < 0.0
            || s_coords[s_coords.len() - 1] > 1.0
        {
            return Err(Error::invalid(
                "arc-length coordinates must be strictly increasing within [0, 1]",
            ));
        }
        Ok(Self { samples, s_coords })
    }

    /// Profile with uniform coordinates `k/(S-1)`.
    pub fn uniform(samples: Vec<f64>) -> Result<Self> {
        let n = samples.len();
        let s = (0..n)
            .map(|k| k as f64 / (n.max(2) - 1) as f64)
            .collect();
        Self::new(samples, s)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn s_coords(&self) -> &[f64] {
        &self.s_coords
    }

    pub fn mean_px(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }
}

/// Distance between LI and MA at `samples` matching arc-length positions.
///
/// Both contours are put in canonical left-to-right order before resampling,
/// so the result does not depend on annotation direction.
pub fn thickness_profile(li: &Contour, ma: &Contour, samples: usize) -> Result<ThicknessProfile> {
    let li = resample_arclength(&li.canonical(), samples)?;
    let ma = resample_arclength(&ma.canonical(), samples)?;
    let d = li
        .points()
        .iter()
        .zip(ma.points())
        .map(|(a, b)| a.distance(*b))
        .collect();
    ThicknessProfile::uniform(d)
}

/// Calibrated CIMT in millimetres: κ times the mean thickness.
pub fn cimt_mm(profile: &ThicknessProfile, kappa: Kappa) -> f64 {
    kappa.get() * profile.mean_px()
}

/// Morphological summary of one wall segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallDescriptors {
    pub cimt_mm: f64,
    pub max_thickness_mm: f64,
    pub thickness_std_mm: f64,
    pub wall_area_ratio: f64,
    pub boundary_smoothness: f64,
}

pub fn wall_descriptors(profile: &ThicknessProfile, kappa: Kappa, mask: &WallMask) -> WallDescriptors {
    let k = kappa.get();
    let d = profile.samples();
    let mean = profile.mean_px();
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64;
    let max = d.iter().copied().fold(0.0_f64, f64::max);
    let smoothness = if d.len() >= 3 {
        let total: f64 = d
            .windows(3)
            .map(|w| (w[2] - 2.0 * w[1] + w[0]).abs())
            .sum();
        k * total / (d.len() - 2) as f64
    } else {
        0.0
    };
    let area = mask.len();
    WallDescriptors {
        cimt_mm: k * mean,
        max_thickness_mm: k * max,
        thickness_std_mm: k * var.sqrt(),
        wall_area_ratio: if area == 0 {
            0.0
        } else {
            mask.count_foreground() as f64 / area as f64
        },
        boundary_smoothness: smoothness,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RasterWarning {
    /// Some contour points fell outside `[0, width] × [0, height]` and were clipped.
    ClippedPoints(usize),
    /// The wall polygon encloses no area; the mask is empty.
    ZeroArea,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rasterization {
    pub mask: WallMask,
    pub warnings: Vec<RasterWarning>,
}

/// Closed wall polygon: canonical LI points followed by reversed canonical MA points.
pub fn wall_polygon(li: &Contour, ma: &Contour) -> Vec<Point> {
    let li = li.canonical();
    let ma = ma.canonical();
    li.points()
        .iter()
        .copied()
        .chain(ma.points().iter().rev().copied())
        .collect()
}

fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut twice = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    0.5 * twice.abs()
}

/// Fills the wall polygon by the even-odd rule, sampling each pixel at its
/// centre `(x + 0.5, y + 0.5)`. Pixels whose centre lies strictly inside are set.
pub fn rasterize_mask(li: &Contour, ma: &Contour, height: usize, width: usize) -> Rasterization {
    let mut warnings = Vec::new();
    let mut clipped = 0;
    let poly: Vec<Point> = wall_polygon(li, ma)
        .into_iter()
        .map(|p| {
            let q = Point::new(p.x.clamp(0.0, width as f64), p.y.clamp(0.0, height as f64));
            if q != p {
                clipped += 1;
            }
            q
        })
        .collect();
    if clipped > 0 {
        warn!("clipped {clipped} contour points to the {height}x{width} image");
        warnings.push(RasterWarning::ClippedPoints(clipped));
    }

    let mut mask = WallMask::filled(height, width, false);
    if polygon_area(&poly) == 0.0 {
        warn!("wall polygon has zero area; mask is empty");
        warnings.push(RasterWarning::ZeroArea);
        return Rasterization { mask, warnings };
    }

    let n = poly.len();
    let mut crossings = Vec::new();
    for y in 0..height {
        let yc = y as f64 + 0.5;
        crossings.clear();
        for i in 0..n {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            if (a.y > yc) != (b.y > yc) {
                crossings.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        crossings.sort_by(|a, b| a.total_cmp(b));
        for span in crossings.chunks_exact(2) {
            let (x0, x1) = (span[0], span[1]);
            // first centre strictly right of x0, last strictly left of x1
            let start = ((x0 - 0.5).floor() + 1.0).max(0.0) as usize;
            let end = (x1 - 0.5).ceil() - 1.0;
            if end < 0.0 {
                continue;
            }
            let end = (end as usize).min(width.saturating_sub(1));
            for x in start..=end {
                if x < width {
                    mask.set(y, x, true);
                }
            }
        }
    }
    Rasterization { mask, warnings }
}

/// Recovers LI and MA boundaries from a mask by taking, for every column that
/// has foreground, the top edge of its first foreground pixel and the bottom
/// edge of its last one (at the column centre). Returns `None` when fewer than
/// two columns have foreground.
pub fn boundaries_from_mask(mask: &WallMask) -> Option<(Contour, Contour)> {
    let mut li = Vec::new();
    let mut ma = Vec::new();
    for x in 0..mask.width() {
        let top = (0..mask.height()).find(|&y| *mask.get(y, x));
        let bottom = (0..mask.height()).rev().find(|&y| *mask.get(y, x));
        if let (Some(t), Some(b)) = (top, bottom) {
            let xc = x as f64 + 0.5;
            li.push(Point::new(xc, t as f64));
            ma.push(Point::new(xc, b as f64 + 1.0));
        }
    }
    if li.len() < 2 {
        return None;
    }
    Some((
        Contour::new(li, BoundarySide::Li).ok()?,
        Contour::new(ma, BoundarySide::Ma).ok()?,
    ))
}

/// Euclidean distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(Point::new(a.x + t * dx, a.y + t * dy))
}

/// Distance from `p` to the nearest point of the polyline `c`.
pub fn point_polyline_distance(p: Point, c: &Contour) -> f64 {
    c.points()
        .windows(2)
        .map(|w| point_segment_distance(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn contour(xy: &[(f64, f64)], side: BoundarySide) -> Contour {
        Contour::from_xy(xy, side).unwrap()
    }

    #[test]
    fn parse_echoes_points() {
        let c = parse_contour("3.0 5.0\n4.0 5.0", BoundarySide::Li).unwrap();
        assert_eq!(c.points(), &[Point::new(3.0, 5.0), Point::new(4.0, 5.0)]);
    }

    #[test]
    fn parse_skips_blank_lines_and_crlf() {
        let c = parse_contour("1 2\n\n3 4\n", BoundarySide::Ma).unwrap();
        assert_eq!(c.len(), 2);
        let c = parse_contour("1 2\r\n3 4\r\n\r\n", BoundarySide::Ma).unwrap();
        assert_eq!(c.last(), Point::new(3.0, 4.0));
    }

    #[test]
    fn parse_rejects_bad_arity_and_tokens() {
        assert!(matches!(
            parse_contour("1 2\n3", BoundarySide::Li),
            Err(Error::MalformedLine { line: 2, .. })
        ));
        assert!(matches!(
            parse_contour("1 2\n3 x", BoundarySide::Li),
            Err(Error::MalformedLine { line: 2, .. })
        ));
        assert!(matches!(
            parse_contour("1 2\n", BoundarySide::Li),
            Err(Error::TooFewPoints(1))
        ));
    }

    #[test]
    fn contour_invariants() {
        assert!(Contour::from_xy(&[(1.0, 1.0), (1.0, 1.0)], BoundarySide::Li).is_err());
        assert!(Contour::from_xy(&[(-1.0, 1.0), (1.0, 1.0)], BoundarySide::Li).is_err());
        assert!(Contour::from_xy(&[(1.0, 1.0)], BoundarySide::Li).is_err());
    }

    #[test]
    fn resample_straight_segment() {
        let c = contour(&[(0.0, 0.0), (10.0, 0.0)], BoundarySide::Li);
        let r = resample_arclength(&c, 3).unwrap();
        assert_eq!(
            r.points(),
            &[Point::new(0.0, 0.0), Point::new(5.0, 0.0), Point::new(10.0, 0.0)]
        );
    }

    #[test]
    fn resample_two_keeps_endpoints() {
        let c = contour(&[(1.0, 2.0), (3.0, 7.0), (9.0, 4.0)], BoundarySide::Ma);
        let r = resample_arclength(&c, 2).unwrap();
        assert_eq!(r.points(), &[c.first(), c.last()]);
    }

    #[test]
    fn resample_l_shape_hits_corner() {
        let c = contour(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0)], BoundarySide::Li);
        let r = resample_arclength(&c, 3).unwrap();
        assert_eq!(
            r.points(),
            &[Point::new(0.0, 0.0), Point::new(4.0, 0.0), Point::new(4.0, 4.0)]
        );
    }

    #[test]
    fn resample_rejects_small_count() {
        let c = contour(&[(0.0, 0.0), (1.0, 0.0)], BoundarySide::Li);
        assert!(resample_arclength(&c, 1).is_err());
    }

    #[test]
    fn closed_loop_is_not_degenerate_but_zero_length_is() {
        let degenerate = Contour {
            points: vec![Point::new(1.0, 1.0), Point::new(1.0, 1.0)],
            side: BoundarySide::Li,
        };
        assert!(matches!(
            resample_arclength(&degenerate, 5),
            Err(Error::DegenerateContour)
        ));
    }

    #[test]
    fn thickness_parallel_lines() {
        let li = contour(&[(0.0, 3.0), (50.0, 3.0)], BoundarySide::Li);
        let ma = contour(&[(0.0, 6.0), (50.0, 6.0)], BoundarySide::Ma);
        let p = thickness_profile(&li, &ma, 100).unwrap();
        assert_eq!(p.samples().len(), 100);
        for d in p.samples() {
            assert_abs_diff_eq!(*d, 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn thickness_identical_is_zero() {
        let li = contour(&[(0.0, 3.0), (5.0, 4.0), (9.0, 3.5)], BoundarySide::Li);
        let p = thickness_profile(&li, &li, 17).unwrap();
        assert!(p.samples().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn thickness_tilted_ma() {
        let li = contour(&[(0.0, 3.0), (10.0, 3.0)], BoundarySide::Li);
        let ma = contour(&[(0.0, 5.0), (10.0, 7.0)], BoundarySide::Ma);
        let p = thickness_profile(&li, &ma, 3).unwrap();
        for (d, e) in p.samples().iter().zip([2.0, 3.0, 4.0]) {
            assert_abs_diff_eq!(*d, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn thickness_ignores_annotation_direction() {
        let li = contour(&[(0.0, 3.0), (4.0, 3.5), (10.0, 3.0)], BoundarySide::Li);
        let ma = contour(&[(10.0, 7.0), (3.0, 6.0), (0.0, 5.0)], BoundarySide::Ma);
        let a = thickness_profile(&li, &ma, 40).unwrap();
        let b = thickness_profile(&li.reversed(), &ma.reversed(), 40).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cimt_examples() {
        let p = ThicknessProfile::uniform(vec![3.0; 10]).unwrap();
        assert_abs_diff_eq!(cimt_mm(&p, Kappa::new(0.06).unwrap()), 0.18, epsilon = 1e-15);
        let zero = ThicknessProfile::uniform(vec![0.0; 4]).unwrap();
        assert_eq!(cimt_mm(&zero, Kappa::new(0.1).unwrap()), 0.0);
        let q = ThicknessProfile::uniform(vec![1.0, 2.5, 7.0]).unwrap();
        assert_eq!(
            cimt_mm(&q, Kappa::new(0.2).unwrap()),
            2.0 * cimt_mm(&q, Kappa::new(0.1).unwrap())
        );
    }

    #[test]
    fn kappa_must_be_positive() {
        assert!(Kappa::new(0.0).is_err());
        assert!(Kappa::new(-0.1).is_err());
        assert!(Kappa::new(f64::NAN).is_err());
    }

    #[test]
    fn descriptors_constant_profile() {
        let p = ThicknessProfile::uniform(vec![3.0; 20]).unwrap();
        let mask = WallMask::filled(4, 4, false);
        let d = wall_descriptors(&p, Kappa::new(0.1).unwrap(), &mask);
        assert_eq!(d.thickness_std_mm, 0.0);
        assert_eq!(d.boundary_smoothness, 0.0);
        assert_eq!(d.wall_area_ratio, 0.0);
        assert_abs_diff_eq!(d.max_thickness_mm, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn descriptors_population_std() {
        let p = ThicknessProfile::uniform(vec![2.0, 4.0]).unwrap();
        let mut mask = WallMask::filled(2, 2, false);
        mask.set(0, 0, true);
        let d = wall_descriptors(&p, Kappa::new(0.1).unwrap(), &mask);
        assert_abs_diff_eq!(d.max_thickness_mm, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(d.thickness_std_mm, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(d.wall_area_ratio, 0.25);
        assert!(d.max_thickness_mm >= d.cimt_mm);
    }

    #[test]
    fn descriptors_smoothness_second_difference() {
        // |4 - 2*1 + 0| = 2, |1 - 2*4 + 1| = 6, mean 4 px
        let p = ThicknessProfile::uniform(vec![0.0, 1.0, 4.0, 1.0]).unwrap();
        let d = wall_descriptors(&p, Kappa::new(0.5).unwrap(), &WallMask::filled(1, 1, true));
        assert_abs_diff_eq!(d.boundary_smoothness, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn rasterize_rectangle_fifteen_pixels() {
        let li = contour(&[(2.0, 3.0), (7.0, 3.0)], BoundarySide::Li);
        let ma = contour(&[(2.0, 6.0), (7.0, 6.0)], BoundarySide::Ma);
        let r = rasterize_mask(&li, &ma, 10, 10);
        assert!(r.warnings.is_empty());
        assert_eq!(r.mask.count_foreground(), 15);
        for y in 0..10 {
            for x in 0..10 {
                let inside = (2..=6).contains(&x) && (3..=5).contains(&y);
                assert_eq!(*r.mask.get(y, x), inside, "pixel ({x},{y})");
            }
        }
        let swapped = rasterize_mask(&ma, &li, 10, 10);
        assert_eq!(swapped.mask, r.mask);
    }

    #[test]
    fn rasterize_zero_area_is_empty_with_warning() {
        let li = contour(&[(2.0, 3.0), (7.0, 3.0)], BoundarySide::Li);
        let r = rasterize_mask(&li, &li, 10, 10);
        assert_eq!(r.mask.count_foreground(), 0);
        assert_eq!(r.warnings, vec![RasterWarning::ZeroArea]);
    }

    #[test]
    fn rasterize_clips_out_of_bounds_points() {
        let li = contour(&[(2.0, 3.0), (15.0, 3.0)], BoundarySide::Li);
        let ma = contour(&[(2.0, 6.0), (15.0, 6.0)], BoundarySide::Ma);
        let r = rasterize_mask(&li, &ma, 10, 10);
        assert_eq!(r.warnings, vec![RasterWarning::ClippedPoints(2)]);
        assert_eq!(r.mask.count_foreground(), 8 * 3);
    }

    #[test]
    fn boundaries_recovered_from_rectangle_mask() {
        let li = contour(&[(2.0, 3.0), (7.0, 3.0)], BoundarySide::Li);
        let ma = contour(&[(2.0, 6.0), (7.0, 6.0)], BoundarySide::Ma);
        let mask = rasterize_mask(&li, &ma, 10, 10).mask;
        let (pli, pma) = boundaries_from_mask(&mask).unwrap();
        assert!(pli.points().iter().all(|p| p.y == 3.0));
        assert!(pma.points().iter().all(|p| p.y == 6.0));
        assert_eq!(pli.len(), 5);
        assert!(boundaries_from_mask(&WallMask::filled(5, 5, false)).is_none());
    }

    #[test]
    fn segment_distance_cases() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(4.0, 0.0);
        assert_eq!(point_segment_distance(Point::new(2.0, 3.0), a, b), 3.0);
        assert_eq!(point_segment_distance(Point::new(7.0, 4.0), a, b), 5.0);
        assert_eq!(point_segment_distance(Point::new(1.0, 1.0), a, a), 2f64.sqrt());
    }
}
