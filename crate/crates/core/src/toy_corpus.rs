//! Procedural face corpus: appearance (skin and hair colours) and pose
//! (landmark geometry) are sampled independently, and the semantic map is a
//! function of the pose alone.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{save_image, ImageTensor};
use crate::raster::{self, Point};
use crate::seed::{derive_seed, rng_for, rng_from};
use crate::semantic_map::{
    render_map, stroke_width, synth_landmarks, FaceGroup, FacePose, LandmarkSet, SemanticMap,
};
use crate::training::PairedSample;

pub const BACKGROUND_COLOR: [f64; 3] = [-0.55, -0.45, -0.2];
pub const EYE_COLOR: [f64; 3] = [-0.85, -0.85, -0.75];
pub const LIP_COLOR: [f64; 3] = [-0.35, -0.9, -0.8];
pub const INNER_LIP_COLOR: [f64; 3] = [-0.9, -0.95, -0.95];

/// Colour parameters of one face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    pub skin: [f64; 3],
    pub hair: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceSpec {
    pub seed: u64,
    pub appearance: Appearance,
    pub pose: FacePose,
}

impl FaceSpec {
    pub fn validate(&self) -> Result<()> {
        let colors = self.appearance.skin.iter().chain(&self.appearance.hair);
        if let Some(c) = colors.clone().find(|c| !(-1.0..=1.0).contains(*c)) {
            return Err(Error::InvalidArgument(format!(
                "colour component {c} outside [-1, 1]"
            )));
        }
        Ok(())
    }
}

/// Each colour is `mean + tone * direction` with one tone `U[-1, 1]` per colour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppearanceSampler {
    pub skin_mean: [f64; 3],
    pub skin_direction: [f64; 3],
    pub hair_mean: [f64; 3],
    pub hair_direction: [f64; 3],
}

impl Default for AppearanceSampler {
    fn default() -> Self {
        AppearanceSampler {
            skin_mean: [0.6, 0.3, 0.1],
            skin_direction: [0.3, 0.3, 0.3],
            hair_mean: [-0.2, -0.4, -0.6],
            hair_direction: [0.35, 0.3, 0.25],
        }
    }
}

impl AppearanceSampler {
    pub fn sample(&self, rng: &mut impl Rng) -> Appearance {
        let t_skin: f64 = rng.gen_range(-1.0..=1.0);
        let t_hair: f64 = rng.gen_range(-1.0..=1.0);
        let mix = |m: [f64; 3], d: [f64; 3], t: f64| {
            [m[0] + t * d[0], m[1] + t * d[1], m[2] + t * d[2]].map(|v| v.clamp(-1.0, 1.0))
        };
        Appearance {
            skin: mix(self.skin_mean, self.skin_direction, t_skin),
            hair: mix(self.hair_mean, self.hair_direction, t_hair),
        }
    }

    /// Standard deviation of each skin channel (`|direction| / sqrt(3)`).
    pub fn skin_std(&self) -> [f64; 3] {
        self.skin_direction.map(|d| d.abs() / 3f64.sqrt())
    }
}

/// Ranges for the pose parameters, as fractions of the frame size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSampler {
    pub center_jitter: f64,
    pub scale: (f64, f64),
    pub max_tilt: f64,
    pub eye_openness: (f64, f64),
}

impl Default for PoseSampler {
    fn default() -> Self {
        PoseSampler {
            center_jitter: 0.04,
            scale: (0.3, 0.36),
            max_tilt: 0.12,
            eye_openness: (0.25, 1.0),
        }
    }
}

impl PoseSampler {
    pub fn sample(&self, size: usize, rng: &mut impl Rng) -> FacePose {
        let s = size as f64;
        let mut pose = FacePose::centered(size);
        pose.center[0] += rng.gen_range(-1.0..=1.0) * self.center_jitter * s;
        pose.center[1] += rng.gen_range(-1.0..=1.0) * self.center_jitter * s;
        pose.scale = rng.gen_range(self.scale.0..=self.scale.1) * s;
        pose.tilt = rng.gen_range(-self.max_tilt..=self.max_tilt);
        pose.eye_openness = rng.gen_range(self.eye_openness.0..=self.eye_openness.1);
        pose.mouth_curvature = rng.gen_range(-1.0..=1.0);
        pose
    }
}

/// Which part of the face each pixel of a rendered image shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Background,
    Hair,
    Skin,
    Brow,
    Eye,
    Mouth,
}

fn face_point(pose: &FacePose, p: Point) -> Point {
    let (s, c) = pose.tilt.sin_cos();
    [
        pose.center[0] + pose.scale * (p[0] * c - p[1] * s),
        pose.center[1] + pose.scale * (p[0] * s + p[1] * c),
    ]
}

fn painter(reg: &mut [Region], w: usize, r: Region) -> impl FnMut(usize, usize) + '_ {
    move |y, x| reg[y * w + x] = r
}

/// Region label of every pixel for `pose`; appearance plays no part.
pub fn render_regions(pose: &FacePose, lms: &LandmarkSet, h: usize, w: usize) -> Vec<Region> {
    let mut reg = vec![Region::Background; h * w];
    let sc = pose.scale;
    raster::fill_ellipse(
        face_point(pose, [0.0, -0.4]),
        1.1 * sc,
        0.9 * sc,
        pose.tilt,
        h,
        w,
        painter(&mut reg, w, Region::Hair),
    );
    raster::fill_ellipse(
        face_point(pose, [0.0, 0.05]),
        1.0 * sc,
        1.05 * sc,
        pose.tilt,
        h,
        w,
        painter(&mut reg, w, Region::Skin),
    );
    let r = stroke_width(w) / 2.0;
    let p = lms.points();
    for brow in [&p[17..22], &p[22..27]] {
        raster::stroke_polyline(brow, false, r, h, w, painter(&mut reg, w, Region::Brow));
    }
    for eye in [&p[36..42], &p[42..48]] {
        raster::fill_polygon(eye, r, h, w, painter(&mut reg, w, Region::Eye));
    }
    raster::fill_polygon(&p[48..60], r, h, w, painter(&mut reg, w, Region::Mouth));
    reg
}

/// Render the image and its semantic map. Eyes, brows and lips are drawn from
/// the landmarks, so an eye with openness 0 is a line of stroke width.
pub fn render_face(spec: &FaceSpec, h: usize, w: usize) -> Result<PairedSample> {
    spec.validate()?;
    let lms = synth_landmarks(&spec.pose, h, w)?;
    let map = render_map(&lms, h, w);
    let regions = render_regions(&spec.pose, &lms, h, w);
    let a = spec.appearance;
    let mut data = Vec::with_capacity(h * w * 3);
    for r in &regions {
        let c = match r {
            Region::Background => BACKGROUND_COLOR,
            Region::Hair | Region::Brow => a.hair,
            Region::Skin => a.skin,
            Region::Eye => EYE_COLOR,
            Region::Mouth => LIP_COLOR,
        };
        data.extend_from_slice(&c);
    }
    let mut image = ImageTensor::new(h, w, 3, data)?;
    let rr = stroke_width(w) / 4.0;
    raster::stroke_polyline(&lms.points()[60..68], true, rr, h, w, |y, x| {
        image.set_pixel(y, x, &INNER_LIP_COLOR)
    });
    PairedSample::new(image, map)
}

/// Mask of the skin pixels for `pose` (independent of appearance).
pub fn skin_region(pose: &FacePose, h: usize, w: usize) -> Result<Vec<bool>> {
    let lms = synth_landmarks(pose, h, w)?;
    Ok(render_regions(pose, &lms, h, w)
        .into_iter()
        .map(|r| r == Region::Skin)
        .collect())
}

/// Mean colour of `img` over the selected pixels.
pub fn mean_color(img: &ImageTensor, region: &[bool]) -> [f64; 3] {
    let mut acc = [0.0; 3];
    let mut n = 0.0f64;
    for (i, &on) in region.iter().enumerate() {
        if on {
            for c in 0..3 {
                acc[c] += img.data()[i * 3 + c];
            }
            n += 1.0;
        }
    }
    acc.map(|v| v / n.max(1.0))
}

/// Bounding box `(y0, y1, x0, x1)` (exclusive ends) of the mouth label in `map`.
pub fn mouth_box(map: &SemanticMap) -> Option<(usize, usize, usize, usize)> {
    let (mut y0, mut y1, mut x0, mut x1) = (usize::MAX, 0, usize::MAX, 0);
    for y in 0..map.height() {
        for x in 0..map.width() {
            if map.group_at(y, x) == Some(FaceGroup::Mouth) {
                y0 = y0.min(y);
                y1 = y1.max(y + 1);
                x0 = x0.min(x);
                x1 = x1.max(x + 1);
            }
        }
    }
    (y0 < y1).then_some((y0, y1, x0, x1))
}

/// Weighted mean row of the middle third of a box minus that of the outer
/// thirds. Positive when the corners sit higher than the middle (a smile).
fn curvature_from_weights(
    weight: impl Fn(usize, usize) -> f64,
    bx: (usize, usize, usize, usize),
) -> f64 {
    let (y0, y1, x0, x1) = bx;
    let width = (x1 - x0) as f64;
    let (mut sm, mut wm, mut sc, mut wc) = (0.0, 0.0, 0.0, 0.0);
    for y in y0..y1 {
        for x in x0..x1 {
            let wgt = weight(y, x);
            let u = (x as f64 + 0.5 - x0 as f64) / width;
            if (1.0 / 3.0..2.0 / 3.0).contains(&u) {
                sm += wgt * y as f64;
                wm += wgt;
            } else {
                sc += wgt * y as f64;
                wc += wgt;
            }
        }
    }
    if wm == 0.0 || wc == 0.0 {
        return 0.0;
    }
    sm / wm - sc / wc
}

/// Mouth-curvature statistic of a semantic map.
pub fn map_mouth_curvature(map: &SemanticMap) -> f64 {
    match mouth_box(map) {
        Some(bx) => curvature_from_weights(
            |y, x| (map.group_at(y, x) == Some(FaceGroup::Mouth)) as u8 as f64,
            bx,
        ),
        None => 0.0,
    }
}

/// Mouth-curvature statistic of an image, measured inside the mouth box of
/// its conditioning map (grown by one pixel) with lip darkness as weight.
pub fn image_mouth_curvature(img: &ImageTensor, map: &SemanticMap) -> f64 {
    let Some((y0, y1, x0, x1)) = mouth_box(map) else {
        return 0.0;
    };
    let bx = (
        y0.saturating_sub(1),
        (y1 + 1).min(img.height()),
        x0.saturating_sub(1),
        (x1 + 1).min(img.width()),
    );
    curvature_from_weights(
        |y, x| {
            let p = img.pixel(y, x);
            let luma = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
            (-0.2 - luma).max(0.0)
        },
        bx,
    )
}

/// Spec of sample `index` of the corpus with `seed`.
pub fn corpus_spec(
    index: usize,
    seed: u64,
    size: usize,
    appearance: &AppearanceSampler,
    pose: &PoseSampler,
) -> FaceSpec {
    let s = derive_seed(seed, &format!("corpus-face-{index}"));
    let mut rng = rng_from(s);
    FaceSpec {
        seed: s,
        pose: pose.sample(size, &mut rng),
        appearance: appearance.sample(&mut rng),
    }
}

#[derive(Debug, Serialize)]
struct CorpusIndex<'a> {
    height: usize,
    width: usize,
    faces: Vec<(&'a str, &'a FaceSpec)>,
}

/// Write `specs` in the training layout (`images/`, `landmarks/`, `maps/`)
/// plus `corpus.json` listing the spec of each stem.
pub fn write_corpus(specs: &[FaceSpec], h: usize, w: usize, root: &Path) -> Result<PathBuf> {
    for sub in ["images", "landmarks", "maps"] {
        let dir = root.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let stems: Vec<String> = (0..specs.len()).map(|i| format!("face_{i:05}")).collect();
    for (spec, stem) in specs.iter().zip(&stems) {
        let sample = render_face(spec, h, w)?;
        save_image(
            &sample.image,
            root.join("images").join(format!("{stem}.png")),
        )?;
        synth_landmarks(&spec.pose, h, w)?
            .save_json(root.join("landmarks").join(format!("{stem}.json")))?;
        sample
            .map
            .save_png(root.join("maps").join(format!("{stem}.png")))?;
    }
    let index = CorpusIndex {
        height: h,
        width: w,
        faces: stems.iter().map(|s| s.as_str()).zip(specs).collect(),
    };
    let path = root.join("corpus.json");
    let text = serde_json::to_string_pretty(&index).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(root.to_path_buf())
}

/// `n` faces with default samplers, deterministic in `(n, seed, h, w)`.
pub fn make_corpus(n: usize, seed: u64, h: usize, w: usize, root: &Path) -> Result<PathBuf> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "corpus size must be at least 1".into(),
        ));
    }
    let (a, p) = (AppearanceSampler::default(), PoseSampler::default());
    let specs: Vec<FaceSpec> = (0..n).map(|i| corpus_spec(i, seed, w, &a, &p)).collect();
    write_corpus(&specs, h, w, root)
}

/// Every combination of `n_poses` sampled poses with `n_appearances` sampled
/// appearances, pose-major.
pub fn factorial_specs(
    n_poses: usize,
    n_appearances: usize,
    seed: u64,
    size: usize,
) -> Vec<FaceSpec> {
    let mut prng = rng_for(seed, "factorial-poses");
    let mut arng = rng_for(seed, "factorial-appearances");
    let poses: Vec<FacePose> = (0..n_poses)
        .map(|_| PoseSampler::default().sample(size, &mut prng))
        .collect();
    let looks: Vec<Appearance> = (0..n_appearances)
        .map(|_| AppearanceSampler::default().sample(&mut arng))
        .collect();
    let mut out = Vec::new();
    for (i, pose) in poses.iter().enumerate() {
        for (j, look) in looks.iter().enumerate() {
            out.push(FaceSpec {
                seed: derive_seed(seed, &format!("factorial-{i}-{j}")),
                appearance: *look,
                pose: *pose,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn spec(curvature: f64) -> FaceSpec {
        let mut pose = FacePose::centered(32);
        pose.mouth_curvature = curvature;
        FaceSpec {
            seed: 0,
            appearance: Appearance {
                skin: [0.6, 0.3, 0.1],
                hair: [-0.3, -0.5, -0.6],
            },
            pose,
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = spec(0.5);
        assert_eq!(
            render_face(&s, 32, 32).unwrap(),
            render_face(&s, 32, 32).unwrap()
        );
    }

    #[test]
    fn appearance_does_not_touch_the_map() {
        let a = spec(0.3);
        let mut b = a;
        b.appearance.skin = [0.1, 0.0, -0.2];
        b.appearance.hair = [0.5, 0.5, 0.5];
        let (ra, rb) = (
            render_face(&a, 32, 32).unwrap(),
            render_face(&b, 32, 32).unwrap(),
        );
        assert_eq!(ra.map, rb.map);
        assert_ne!(ra.image, rb.image);
    }

    #[test]
    fn curvature_changes_only_the_mouth_box() {
        for size in [32, 64] {
            let mut lo = spec(-1.0);
            let mut hi = spec(1.0);
            lo.pose = FacePose {
                mouth_curvature: -1.0,
                ..FacePose::centered(size)
            };
            hi.pose = FacePose {
                mouth_curvature: 1.0,
                ..FacePose::centered(size)
            };
            let (a, b) = (
                render_face(&lo, size, size).unwrap(),
                render_face(&hi, size, size).unwrap(),
            );
            let mut boxes = Vec::new();
            for s in [&lo, &hi] {
                let lms = synth_landmarks(&s.pose, size, size).unwrap();
                boxes.extend_from_slice(&lms.points()[48..68]);
            }
            let pad = stroke_width(size) / 2.0 + 1.0;
            let x0 = boxes.iter().map(|p| p[0]).fold(f64::MAX, f64::min) - pad;
            let x1 = boxes.iter().map(|p| p[0]).fold(f64::MIN, f64::max) + pad;
            let y0 = boxes.iter().map(|p| p[1]).fold(f64::MAX, f64::min) - pad;
            let y1 = boxes.iter().map(|p| p[1]).fold(f64::MIN, f64::max) + pad;
            let mut changed = 0;
            for y in 0..size {
                for x in 0..size {
                    if a.image.pixel(y, x) != b.image.pixel(y, x) {
                        changed += 1;
                        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                        assert!(cx >= x0 && cx <= x1 && cy >= y0 && cy <= y1, "({y}, {x})");
                    }
                }
            }
            assert!(changed > 0);
        }
    }

    #[test]
    fn closed_eye_is_a_stroke_of_the_eye_outline() {
        let mut s = spec(0.0);
        s.pose.eye_openness = 0.0;
        let lms = synth_landmarks(&s.pose, 64, 64).unwrap();
        let regions = render_regions(&s.pose, &lms, 64, 64);
        let r = stroke_width(64) / 2.0;
        let mut expected = BTreeSet::new();
        for eye in [&lms.points()[36..42], &lms.points()[42..48]] {
            raster::stroke_polyline(eye, true, r, 64, 64, |y, x| {
                expected.insert((y, x));
            });
        }
        let got: BTreeSet<(usize, usize)> = (0..64 * 64)
            .filter(|i| regions[*i] == Region::Eye)
            .map(|i| (i / 64, i % 64))
            .collect();
        assert_eq!(got, expected);
        let rows: BTreeSet<usize> = got.iter().map(|p| p.0).collect();
        assert!(rows.len() <= 3, "closed eye spans rows {rows:?}");
    }

    #[test]
    fn curvature_statistic_tracks_pose_sign() {
        for c in [-1.0, -0.6, 0.6, 1.0] {
            let s = render_face(&spec(c), 32, 32).unwrap();
            let from_map = map_mouth_curvature(&s.map);
            let from_image = image_mouth_curvature(&s.image, &s.map);
            assert_eq!(from_map.signum(), c.signum(), "map at {c}: {from_map}");
            assert_eq!(
                from_image.signum(),
                c.signum(),
                "image at {c}: {from_image}"
            );
        }
    }

    #[test]
    fn sampler_means_match_configuration() {
        let sampler = AppearanceSampler::default();
        let mut rng = rng_for(3, "appearance-census");
        let n = 1000;
        let mut acc = [0.0; 6];
        for _ in 0..n {
            let a = sampler.sample(&mut rng);
            for c in 0..3 {
                acc[c] += a.skin[c];
                acc[3 + c] += a.hair[c];
            }
        }
        let want = [sampler.skin_mean, sampler.hair_mean].concat();
        for (sum, m) in acc.iter().zip(want) {
            let (got, m) = ((sum / n as f64 + 1.0) / 2.0, (m + 1.0) / 2.0);
            assert!((got - m).abs() <= 0.05 * m, "{got} vs {m}");
        }
    }

    #[test]
    fn corpus_is_paired_and_reproducible() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        make_corpus(8, 11, 32, 32, d1.path()).unwrap();
        make_corpus(8, 11, 32, 32, d2.path()).unwrap();
        for sub in ["images", "landmarks", "maps"] {
            let names = |root: &Path| -> Vec<String> {
                let mut v: Vec<String> = fs::read_dir(root.join(sub))
                    .unwrap()
                    .map(|e| e.unwrap().file_name().into_string().unwrap())
                    .collect();
                v.sort();
                v
            };
            let n1 = names(d1.path());
            assert_eq!(n1.len(), 8);
            assert_eq!(n1, names(d2.path()));
            for name in n1 {
                assert_eq!(
                    fs::read(d1.path().join(sub).join(&name)).unwrap(),
                    fs::read(d2.path().join(sub).join(&name)).unwrap()
                );
            }
        }
        let data = crate::training::load_dataset(d1.path(), 32).unwrap();
        assert_eq!(data.len(), 8);
        let first = corpus_spec(
            0,
            11,
            32,
            &AppearanceSampler::default(),
            &PoseSampler::default(),
        );
        assert_eq!(data[0].map, render_face(&first, 32, 32).unwrap().map);
    }

    #[test]
    fn pose_is_recoverable_from_the_map() {
        let mut rng = rng_for(9, "pose-recovery");
        for _ in 0..50 {
            let pose = PoseSampler::default().sample(64, &mut rng);
            if pose.mouth_curvature.abs() < 0.3 {
                continue;
            }
            let map = render_map(&synth_landmarks(&pose, 64, 64).unwrap(), 64, 64);
            assert_eq!(
                map_mouth_curvature(&map).signum(),
                pose.mouth_curvature.signum()
            );
        }
    }
}
