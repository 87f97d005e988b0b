//! Dense RGB semantic maps rendered from 68-point facial landmarks.
//!
//! Landmarks are grouped into five facial components and every component is
//! painted with one palette colour:
//!
//! | group    | points | style            | colour  |
//! |----------|--------|------------------|---------|
//! | jaw      | 0–16   | polyline         | red     |
//! | eyebrows | 17–26  | two polylines    | green   |
//! | nose     | 27–35  | two polylines    | blue    |
//! | eyes     | 36–47  | filled polygons  | yellow  |
//! | mouth    | 48–67  | filled polygon   | magenta |
//!
//! Later groups overpaint earlier ones. Stroke width is 2 px at 64×64 and
//! scales with the image width.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ImageTensor;
use crate::raster::{self, Point};

pub const NUM_LANDMARKS: usize = 68;

/// Landmark coordinates are snapped to this grid (pixels).
pub const LANDMARK_GRID: f64 = 1.0 / 256.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceGroup {
    Jaw,
    Eyebrows,
    Nose,
    Eyes,
    Mouth,
}

impl FaceGroup {
    pub const ALL: [FaceGroup; 5] = [
        FaceGroup::Jaw,
        FaceGroup::Eyebrows,
        FaceGroup::Nose,
        FaceGroup::Eyes,
        FaceGroup::Mouth,
    ];

    /// Palette colour in generator range.
    pub fn color(self) -> [f64; 3] {
        match self {
            FaceGroup::Jaw => [1.0, -1.0, -1.0],
            FaceGroup::Eyebrows => [-1.0, 1.0, -1.0],
            FaceGroup::Nose => [-1.0, -1.0, 1.0],
            FaceGroup::Eyes => [1.0, 1.0, -1.0],
            FaceGroup::Mouth => [1.0, -1.0, 1.0],
        }
    }

    fn label(self) -> u8 {
        self as u8 + 1
    }

    fn from_label(label: u8) -> Option<FaceGroup> {
        FaceGroup::ALL
            .get(usize::from(label).checked_sub(1)?)
            .copied()
    }

    pub fn indices(self) -> std::ops::Range<usize> {
        match self {
            FaceGroup::Jaw => 0..17,
            FaceGroup::Eyebrows => 17..27,
            FaceGroup::Nose => 27..36,
            FaceGroup::Eyes => 36..48,
            FaceGroup::Mouth => 48..68,
        }
    }
}

pub const BACKGROUND: [f64; 3] = [-1.0, -1.0, -1.0];

/// Index of each landmark's mirror partner under a left-right flip.
pub fn mirror_index(i: usize) -> usize {
    const MIRROR: [usize; NUM_LANDMARKS] = [
        16, 15, 14, 13, 12, 11, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0, // jaw
        26, 25, 24, 23, 22, 21, 20, 19, 18, 17, // brows
        27, 28, 29, 30, 35, 34, 33, 32, 31, // nose
        45, 44, 43, 42, 47, 46, 39, 38, 37, 36, 41, 40, // eyes
        54, 53, 52, 51, 50, 49, 48, 59, 58, 57, 56, 55, // outer lips
        64, 63, 62, 61, 60, 67, 66, 65, // inner lips
    ];
    MIRROR[i]
}

fn snap(v: f64) -> f64 {
    (v / LANDMARK_GRID).round() * LANDMARK_GRID
}

/// 68 landmark points inside a `width x height` frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<Point>,
    width: usize,
    height: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct LandmarkFile {
    points: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<usize>,
}

impl LandmarkSet {
    /// Coordinates are snapped to [`LANDMARK_GRID`] and must fall in
    /// `[0, width) x [0, height)`.
    pub fn new(points: Vec<Point>, height: usize, width: usize) -> Result<Self> {
        if points.len() != NUM_LANDMARKS {
            return Err(Error::WrongPointCount(points.len()));
        }
        let points: Vec<Point> = points.iter().map(|p| [snap(p[0]), snap(p[1])]).collect();
        for (index, p) in points.iter().enumerate() {
            let ok = p[0].is_finite()
                && p[1].is_finite()
                && p[0] >= 0.0
                && p[1] >= 0.0
                && p[0] < width as f64
                && p[1] < height as f64;
            if !ok {
                return Err(Error::OutOfFrame {
                    index,
                    x: p[0],
                    y: p[1],
                    width,
                    height,
                });
            }
        }
        Ok(LandmarkSet {
            points,
            width,
            height,
        })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn group(&self, g: FaceGroup) -> &[Point] {
        &self.points[g.indices()]
    }

    /// Mirror image under `x -> width - x`, with indices relabelled so that the
    /// result is again in the standard 68-point order.
    pub fn reflect_horizontal(&self) -> Result<LandmarkSet> {
        let w = self.width as f64;
        let pts = (0..NUM_LANDMARKS)
            .map(|i| {
                let p = self.points[mirror_index(i)];
                [w - p[0], p[1]]
            })
            .collect();
        LandmarkSet::new(pts, self.height, self.width)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<LandmarkSet> {
        let pts = self.points.iter().map(|p| [p[0] + dx, p[1] + dy]).collect();
        LandmarkSet::new(pts, self.height, self.width)
    }

    /// The same landmarks in a `height x width` frame, scaling each axis.
    pub fn rescale(&self, height: usize, width: usize) -> Result<LandmarkSet> {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        let pts = self.points.iter().map(|p| [p[0] * sx, p[1] * sy]).collect();
        LandmarkSet::new(pts, height, width)
    }

    /// Write the `{"points": [[x, y], ...]}` document, including the frame size.
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let doc = LandmarkFile {
            points: self.points.clone(),
            width: Some(self.width),
            height: Some(self.height),
        };
        let text = serde_json::to_string(&doc).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Read a landmark JSON document in the frame size it records, falling back
/// to `frame` (`height, width`) for documents without one.
pub fn load_landmarks_framed(
    path: impl AsRef<Path>,
    frame: Option<(usize, usize)>,
) -> Result<LandmarkSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: LandmarkFile = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let (h, w) = match (doc.height, doc.width, frame) {
        (Some(h), Some(w), _) => (h, w),
        (_, _, Some(f)) => f,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "{} does not record its frame size; pass one explicitly",
                path.display()
            )))
        }
    };
    LandmarkSet::new(doc.points, h, w)
}

/// Read a landmark JSON document for an image of size `height x width`. A
/// frame size stored in the document must agree with the one given.
pub fn load_landmarks(path: impl AsRef<Path>, height: usize, width: usize) -> Result<LandmarkSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: LandmarkFile = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    match (doc.width, doc.height) {
        (Some(w), Some(h)) if (w, h) != (width, height) => {
            return Err(Error::Shape(format!(
                "{} was written for a {w}x{h} frame, expected {width}x{height}",
                path.display()
            )))
        }
        _ => {}
    }
    LandmarkSet::new(doc.points, height, width)
}

/// RGB semantic map; every pixel is background or one palette colour.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SemanticMap {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl SemanticMap {
    pub fn blank(height: usize, width: usize) -> Self {
        SemanticMap {
            height,
            width,
            labels: vec![0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn group_at(&self, y: usize, x: usize) -> Option<FaceGroup> {
        FaceGroup::from_label(self.labels[y * self.width + x])
    }

    fn paint(&mut self, y: usize, x: usize, g: FaceGroup) {
        self.labels[y * self.width + x] = g.label();
    }

    /// Number of pixels painted with `g`.
    pub fn count(&self, g: FaceGroup) -> usize {
        self.labels.iter().filter(|&&l| l == g.label()).count()
    }

    pub fn to_image(&self) -> ImageTensor {
        ImageTensor::from_fn(self.height, self.width, |y, x| {
            self.group_at(y, x).map_or(BACKGROUND, FaceGroup::color)
        })
    }

    /// Inverse of [`SemanticMap::to_image`]; fails on off-palette colours.
    pub fn from_image(img: &ImageTensor) -> Result<Self> {
        if img.channels() != 3 {
            return Err(Error::Shape("semantic map must be RGB".into()));
        }
        let mut map = SemanticMap::blank(img.height(), img.width());
        for y in 0..img.height() {
            for x in 0..img.width() {
                let px = img.pixel(y, x);
                let near = |c: [f64; 3]| px.iter().zip(c).all(|(a, b)| (a - b).abs() < 0.5);
                if near(BACKGROUND) {
                    continue;
                }
                let g = FaceGroup::ALL
                    .into_iter()
                    .find(|g| near(g.color()))
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "pixel ({y}, {x}) colour {px:?} is not in the semantic palette"
                        ))
                    })?;
                map.paint(y, x, g);
            }
        }
        Ok(map)
    }

    pub fn flip_horizontal(&self) -> SemanticMap {
        let mut out = SemanticMap::blank(self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                out.labels[y * self.width + self.width - 1 - x] = self.labels[y * self.width + x];
            }
        }
        out
    }

    /// Shift by whole pixels; pixels shifted in from outside are background.
    pub fn shift(&self, dx: isize, dy: isize) -> SemanticMap {
        let mut out = SemanticMap::blank(self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                let (sy, sx) = (y as isize - dy, x as isize - dx);
                if sy >= 0 && sx >= 0 && (sy as usize) < self.height && (sx as usize) < self.width {
                    out.labels[y * self.width + x] =
                        self.labels[sy as usize * self.width + sx as usize];
                }
            }
        }
        out
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::imaging::save_image(&self.to_image(), path)
    }

    pub fn load_png(path: impl AsRef<Path>, size: usize) -> Result<Self> {
        Self::from_image(&crate::imaging::load_image(path, size)?)
    }
}

/// Stroke width in pixels for a map of the given width.
pub fn stroke_width(width: usize) -> f64 {
    2.0 * width as f64 / 64.0
}

/// Render the semantic map of `lms` at `height x width`.
pub fn render_map(lms: &LandmarkSet, height: usize, width: usize) -> SemanticMap {
    let mut map = SemanticMap::blank(height, width);
    let r = stroke_width(width) / 2.0;
    let p = lms.points();
    let stroke = |pts: &[Point], closed: bool, g: FaceGroup, map: &mut SemanticMap| {
        raster::stroke_polyline(pts, closed, r, height, width, |y, x| map.paint(y, x, g));
    };
    stroke(&p[0..17], false, FaceGroup::Jaw, &mut map);
    stroke(&p[17..22], false, FaceGroup::Eyebrows, &mut map);
    stroke(&p[22..27], false, FaceGroup::Eyebrows, &mut map);
    stroke(&p[27..31], false, FaceGroup::Nose, &mut map);
    stroke(&p[31..36], false, FaceGroup::Nose, &mut map);
    for eye in [&p[36..42], &p[42..48]] {
        raster::fill_polygon(eye, r, height, width, |y, x| {
            map.paint(y, x, FaceGroup::Eyes)
        });
    }
    raster::fill_polygon(&p[48..60], r, height, width, |y, x| {
        map.paint(y, x, FaceGroup::Mouth)
    });
    stroke(&p[60..68], true, FaceGroup::Mouth, &mut map);
    map
}

/// Pose and expression parameters of the parametric landmark generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FacePose {
    /// Face centre in pixels (x, y).
    pub center: [f64; 2],
    /// Half the face width in pixels.
    pub scale: f64,
    /// In-plane head rotation in radians.
    pub tilt: f64,
    /// 0 = closed eyes, 1 = fully open.
    pub eye_openness: f64,
    /// +1 bends the mouth corners up, −1 down.
    pub mouth_curvature: f64,
}

impl FacePose {
    pub fn centered(size: usize) -> Self {
        let s = size as f64;
        FacePose {
            center: [s / 2.0, s * 0.45],
            scale: s * 0.34,
            tilt: 0.0,
            eye_openness: 1.0,
            mouth_curvature: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eye_openness) {
            return Err(Error::InvalidArgument(format!(
                "eye openness {} outside [0, 1]",
                self.eye_openness
            )));
        }
        if !(-1.0..=1.0).contains(&self.mouth_curvature) {
            return Err(Error::InvalidArgument(format!(
                "mouth curvature {} outside [-1, 1]",
                self.mouth_curvature
            )));
        }
        if !(self.scale > 0.0) {
            return Err(Error::InvalidArgument("face scale must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) const MOUTH_CENTER_Y: f64 = 0.62;
pub(crate) const MOUTH_HALF_WIDTH: f64 = 0.38;
pub(crate) const MOUTH_BEND: f64 = 0.12;
pub(crate) const EYE_CENTER: [f64; 2] = [-0.42, -0.25];
pub(crate) const EYE_HALF_WIDTH: f64 = 0.18;
pub(crate) const EYE_HALF_HEIGHT: f64 = 0.09;

/// Landmark template in face units (x right, y down, unit = half face width).
/// Only the image-left half is computed; the right half is its exact mirror.
pub(crate) fn template(eye_openness: f64, curvature: f64) -> [Point; NUM_LANDMARKS] {
    let mut t = [[0.0; 2]; NUM_LANDMARKS];
    let half = |t: &mut [Point; NUM_LANDMARKS], i: usize, p: Point| {
        t[i] = p;
        t[mirror_index(i)] = [-p[0], p[1]];
    };
    // jaw: left ear around to the chin
    for i in 0..8 {
        let phi = std::f64::consts::PI * (1.0 - i as f64 / 16.0);
        half(&mut t, i, [phi.cos(), -0.15 + 1.1 * phi.sin()]);
    }
    t[8] = [0.0, 0.95];
    // left eyebrow, outer to inner
    for j in 0..5 {
        let u = j as f64 / 4.0;
        let x = -0.78 + 0.6 * u;
        let y = -0.5 - 0.12 * (std::f64::consts::PI * u).sin();
        half(&mut t, 17 + j, [x, y]);
    }
    for (k, y) in [-0.3, -0.15, 0.0, 0.15].into_iter().enumerate() {
        t[27 + k] = [0.0, y];
    }
    half(&mut t, 31, [-0.18, 0.3]);
    half(&mut t, 32, [-0.09, 0.34]);
    t[33] = [0.0, 0.36];
    // left eye: outer corner, top two, inner corner, bottom two
    let [ex, ey] = EYE_CENTER;
    let (a, b) = (EYE_HALF_WIDTH, EYE_HALF_HEIGHT * eye_openness);
    half(&mut t, 36, [ex - a, ey]);
    half(&mut t, 37, [ex - a / 3.0, ey - b]);
    half(&mut t, 38, [ex + a / 3.0, ey - b]);
    half(&mut t, 39, [ex + a, ey]);
    half(&mut t, 40, [ex + a / 3.0, ey + b]);
    half(&mut t, 41, [ex - a / 3.0, ey + b]);
    // mouth: parabolic bend lifts the corners for positive curvature
    let (yc, ma) = (MOUTH_CENTER_Y, MOUTH_HALF_WIDTH);
    let bend = |x: f64| -curvature * MOUTH_BEND * (x / ma) * (x / ma);
    half(&mut t, 48, [-ma, yc + bend(-ma)]);
    half(
        &mut t,
        49,
        [-2.0 * ma / 3.0, yc - 0.07 + bend(-2.0 * ma / 3.0)],
    );
    half(&mut t, 50, [-ma / 3.0, yc - 0.08 + bend(-ma / 3.0)]);
    t[51] = [0.0, yc - 0.07];
    half(
        &mut t,
        59,
        [-2.0 * ma / 3.0, yc + 0.08 + bend(-2.0 * ma / 3.0)],
    );
    half(&mut t, 58, [-ma / 3.0, yc + 0.1 + bend(-ma / 3.0)]);
    t[57] = [0.0, yc + 0.1];
    half(&mut t, 60, [-0.7 * ma, yc + bend(-0.7 * ma)]);
    half(&mut t, 61, [-ma / 3.0, yc - 0.025 + bend(-ma / 3.0)]);
    t[62] = [0.0, yc - 0.025];
    half(&mut t, 67, [-ma / 3.0, yc + 0.03 + bend(-ma / 3.0)]);
    t[66] = [0.0, yc + 0.03];
    t
}

/// Map face-unit coordinates to pixels for `pose`. Offsets are snapped before
/// being added to the snapped centre so mirrored template points stay exactly
/// mirrored about the centre.
pub(crate) fn to_pixels(pose: &FacePose, p: Point) -> Point {
    let (s, c) = pose.tilt.sin_cos();
    let rx = p[0] * c - p[1] * s;
    let ry = p[0] * s + p[1] * c;
    [
        snap(pose.center[0]) + snap(pose.scale * rx),
        snap(pose.center[1]) + snap(pose.scale * ry),
    ]
}

/// Deterministic parametric 68-point layout for `pose` in a `height x width` frame.
pub fn synth_landmarks(pose: &FacePose, height: usize, width: usize) -> Result<LandmarkSet> {
    pose.validate()?;
    let t = template(pose.eye_openness, pose.mouth_curvature);
    let pts: Vec<Point> = t.iter().map(|&p| to_pixels(pose, p)).collect();
    LandmarkSet::new(pts, height, width).map_err(|e| match e {
        Error::OutOfFrame { .. } => Error::InvalidArgument(format!(
            "face scale {} too large for a {width}x{height} frame at centre {:?}",
            pose.scale, pose.center
        )),
        other => other,
    })
}

/// Mean y of the two mouth corners minus the mean y of the lip midline
/// points (51, 57, 62, 66). Negative when the corners are lifted.
pub fn mouth_corner_offset(lms: &LandmarkSet) -> f64 {
    let p = lms.points();
    let corners = (p[48][1] + p[54][1]) / 2.0;
    let middle = (p[51][1] + p[57][1] + p[62][1] + p[66][1]) / 4.0;
    corners - middle
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn pose32() -> FacePose {
        FacePose::centered(32)
    }

    #[test]
    fn mirror_table_is_an_involution_preserving_groups() {
        for i in 0..NUM_LANDMARKS {
            let j = mirror_index(i);
            assert_eq!(mirror_index(j), i);
            let group = |k: usize| FaceGroup::ALL.iter().position(|g| g.indices().contains(&k));
            assert_eq!(group(i), group(j));
        }
    }

    #[test]
    fn palette_colours_are_distinct_and_not_background() {
        let colours: HashSet<_> = FaceGroup::ALL
            .iter()
            .map(|g| g.color().map(|v| v as i32))
            .collect();
        assert_eq!(colours.len(), 5);
        assert!(FaceGroup::ALL.iter().all(|g| g.color() != BACKGROUND));
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_landmarks(&pose32(), 32, 32).unwrap();
        let b = synth_landmarks(&pose32(), 32, 32).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn untilted_face_is_bilaterally_symmetric() {
        let lms = synth_landmarks(&pose32(), 32, 32).unwrap();
        let cx = 16.0;
        for i in 0..NUM_LANDMARKS {
            let (p, q) = (lms.points()[i], lms.points()[mirror_index(i)]);
            assert_eq!(p[0] - cx, cx - q[0], "point {i}");
            assert_eq!(p[1], q[1], "point {i}");
        }
        assert_eq!(lms.reflect_horizontal().unwrap(), lms);
    }

    #[test]
    fn curvature_sign_moves_mouth_corners() {
        let mut pose = pose32();
        pose.mouth_curvature = 1.0;
        let up = synth_landmarks(&pose, 32, 32).unwrap();
        pose.mouth_curvature = -1.0;
        let down = synth_landmarks(&pose, 32, 32).unwrap();
        assert!(mouth_corner_offset(&up) < 0.0);
        assert!(mouth_corner_offset(&down) > 0.0);
    }

    #[test]
    fn oversized_face_is_rejected() {
        let mut pose = pose32();
        pose.scale = 40.0;
        assert!(matches!(
            synth_landmarks(&pose, 32, 32),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn symmetric_face_renders_symmetric_map() {
        for size in [32, 64] {
            let lms = synth_landmarks(&FacePose::centered(size), size, size).unwrap();
            let map = render_map(&lms, size, size);
            assert_eq!(map.flip_horizontal(), map, "size {size}");
        }
    }

    #[test]
    fn render_uses_at_most_five_colours() {
        let lms = synth_landmarks(&pose32(), 32, 32).unwrap();
        let img = render_map(&lms, 32, 32).to_image();
        let mut colours = HashSet::new();
        for y in 0..32 {
            for x in 0..32 {
                let px = img.pixel(y, x);
                if px != BACKGROUND {
                    colours.insert(px.iter().map(|v| *v as i32).collect::<Vec<_>>());
                }
            }
        }
        assert!(colours.len() <= 5 && !colours.is_empty());
    }

    #[test]
    fn reflection_equivariance_for_asymmetric_faces() {
        let pose = FacePose {
            center: [30.3, 29.1],
            scale: 19.7,
            tilt: 0.21,
            eye_openness: 0.4,
            mouth_curvature: -0.7,
        };
        let lms = synth_landmarks(&pose, 64, 64).unwrap();
        let direct = render_map(&lms, 64, 64).flip_horizontal();
        let reflected = render_map(&lms.reflect_horizontal().unwrap(), 64, 64);
        assert_eq!(direct, reflected);
    }

    #[test]
    fn translation_equivariance_against_shift_oracle() {
        let pose = FacePose {
            center: [27.0, 26.0],
            scale: 15.0,
            tilt: -0.15,
            eye_openness: 0.8,
            mouth_curvature: 0.5,
        };
        let lms = synth_landmarks(&pose, 64, 64).unwrap();
        let base = render_map(&lms, 64, 64);
        for (dx, dy) in [(3, 0), (0, 5), (4, 7), (-2, 3)] {
            let moved = lms.translate(dx as f64, dy as f64).unwrap();
            assert_eq!(
                render_map(&moved, 64, 64),
                base.shift(dx, dy),
                "shift ({dx}, {dy})"
            );
        }
    }

    #[test]
    fn map_image_round_trip() {
        let lms = synth_landmarks(&pose32(), 32, 32).unwrap();
        let map = render_map(&lms, 32, 32);
        assert_eq!(SemanticMap::from_image(&map.to_image()).unwrap(), map);
        let bad = ImageTensor::filled(2, 2, 3, 0.0);
        assert!(SemanticMap::from_image(&bad).is_err());
    }

    #[test]
    fn landmark_json_contract() {
        let dir = tempfile::tempdir().unwrap();
        let lms = synth_landmarks(&pose32(), 32, 32).unwrap();
        let ok = dir.path().join("ok.json");
        lms.save_json(&ok).unwrap();
        assert_eq!(load_landmarks(&ok, 32, 32).unwrap(), lms);

        let mut pts: Vec<[f64; 2]> = lms.points().to_vec();
        pts.pop();
        let short = dir.path().join("short.json");
        std::fs::write(&short, serde_json::json!({ "points": pts }).to_string()).unwrap();
        assert!(matches!(
            load_landmarks(&short, 32, 32),
            Err(Error::WrongPointCount(67))
        ));

        let mut pts: Vec<[f64; 2]> = lms.points().to_vec();
        pts[3] = [-1.0, 5.0];
        let out = dir.path().join("out.json");
        std::fs::write(&out, serde_json::json!({ "points": pts }).to_string()).unwrap();
        assert!(matches!(
            load_landmarks(&out, 32, 32),
            Err(Error::OutOfFrame { index: 3, .. })
        ));

        let junk = dir.path().join("junk.json");
        std::fs::write(&junk, "{ points: ").unwrap();
        assert!(matches!(
            load_landmarks(&junk, 32, 32),
            Err(Error::Json { .. })
        ));
    }
}
