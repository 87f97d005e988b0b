//! Corruption-mask families: central square, checkerboard, left half and
//! freehand brush strokes.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::CorruptionMask;
use crate::seed::{derive_seed, rng_for, rng_from};

pub const CENTRAL_RANGE: (f64, f64) = (0.5, 0.7);
pub const FREEHAND_FRACTION: f64 = 0.25;
pub const FREEHAND_TOLERANCE: f64 = 0.02;
pub const FREEHAND_STROKES: usize = 3;
pub const MIN_MASK_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Central,
    Checkerboard,
    Left,
    Freehand,
}

impl MaskKind {
    pub const ALL: [MaskKind; 4] = [
        MaskKind::Central,
        MaskKind::Checkerboard,
        MaskKind::Left,
        MaskKind::Freehand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MaskKind::Central => "central",
            MaskKind::Checkerboard => "checkerboard",
            MaskKind::Left => "left",
            MaskKind::Freehand => "freehand",
        }
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mask kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MaskSpec {
    /// Centred square covering `fraction` of the pixels.
    Central { fraction: f64 },
    /// Alternating cells of side `cell`, top-left cell corrupted. `None`
    /// means one eighth of the width.
    Checkerboard { cell: Option<usize> },
    /// Left half corrupted.
    Left,
    /// Random-walk brush strokes grown until `fraction` of the pixels are
    /// corrupted.
    Freehand {
        fraction: f64,
        strokes: usize,
        seed: u64,
    },
}

impl MaskSpec {
    pub fn kind(&self) -> MaskKind {
        match self {
            MaskSpec::Central { .. } => MaskKind::Central,
            MaskSpec::Checkerboard { .. } => MaskKind::Checkerboard,
            MaskSpec::Left => MaskKind::Left,
            MaskSpec::Freehand { .. } => MaskKind::Freehand,
        }
    }

    pub fn freehand(seed: u64) -> Self {
        MaskSpec::Freehand {
            fraction: FREEHAND_FRACTION,
            strokes: FREEHAND_STROKES,
            seed,
        }
    }

    /// Default spec of `kind`. Central masks use the middle of their range.
    pub fn default_for(kind: MaskKind, seed: u64) -> Self {
        match kind {
            MaskKind::Central => MaskSpec::Central {
                fraction: (CENTRAL_RANGE.0 + CENTRAL_RANGE.1) / 2.0,
            },
            MaskKind::Checkerboard => MaskSpec::Checkerboard { cell: None },
            MaskKind::Left => MaskSpec::Left,
            MaskKind::Freehand => MaskSpec::freehand(seed),
        }
    }
}

/// Side of the central square: nearest integer to `sqrt(fraction * h * w)`,
/// nudged by one pixel if rounding left the area outside the central band.
pub fn central_side(fraction: f64, h: usize, w: usize) -> usize {
    let area = (h * w) as f64;
    let mut side = (fraction * area).sqrt().round() as usize;
    let max_side = h.min(w);
    while side > 0 && (side * side) as f64 > CENTRAL_RANGE.1 * area {
        side -= 1;
    }
    while side < max_side && ((side * side) as f64) < CENTRAL_RANGE.0 * area {
        side += 1;
    }
    side.min(max_side)
}

pub fn make_mask(spec: &MaskSpec, h: usize, w: usize) -> Result<CorruptionMask> {
    if h < MIN_MASK_SIZE || w < MIN_MASK_SIZE {
        return Err(Error::InvalidArgument(format!(
            "masks need at least {MIN_MASK_SIZE}x{MIN_MASK_SIZE} pixels, got {h}x{w}"
        )));
    }
    match *spec {
        MaskSpec::Central { fraction } => {
            if !(CENTRAL_RANGE.0..=CENTRAL_RANGE.1).contains(&fraction) {
                return Err(Error::InvalidArgument(format!(
                    "central fraction {fraction} outside [{}, {}]",
                    CENTRAL_RANGE.0, CENTRAL_RANGE.1
                )));
            }
            let side = central_side(fraction, h, w);
            let (top, left) = ((h - side) / 2, (w - side) / 2);
            let mut m = CorruptionMask::ones(h, w);
            for y in top..top + side {
                for x in left..left + side {
                    m.set(y, x, 0);
                }
            }
            Ok(m)
        }
        MaskSpec::Checkerboard { cell } => {
            let cell = cell.unwrap_or((w / 8).max(1));
            if cell == 0 || cell > h.min(w) {
                return Err(Error::InvalidArgument(format!(
                    "checkerboard cell {cell} must be in 1..={}",
                    h.min(w)
                )));
            }
            let mut m = CorruptionMask::ones(h, w);
            for y in 0..h {
                for x in 0..w {
                    if (y / cell + x / cell) % 2 == 0 {
                        m.set(y, x, 0);
                    }
                }
            }
            Ok(m)
        }
        MaskSpec::Left => {
            let mut m = CorruptionMask::ones(h, w);
            for y in 0..h {
                for x in 0..w / 2 {
                    m.set(y, x, 0);
                }
            }
            Ok(m)
        }
        MaskSpec::Freehand {
            fraction,
            strokes,
            seed,
        } => {
            if !(fraction > 0.0 && fraction <= 0.5) {
                return Err(Error::InvalidArgument(format!(
                    "freehand fraction {fraction} outside (0, 0.5]"
                )));
            }
            if strokes == 0 {
                return Err(Error::InvalidArgument(
                    "freehand needs at least one stroke".into(),
                ));
            }
            Ok(freehand(fraction, strokes, seed, h, w))
        }
    }
}

/// Brush radius for freehand strokes: one sixteenth of the width.
pub fn brush_radius(w: usize) -> f64 {
    (w as f64 / 16.0).max(1.0)
}

fn freehand(fraction: f64, strokes: usize, seed: u64, h: usize, w: usize) -> CorruptionMask {
    let mut rng = rng_from(seed);
    let mut m = CorruptionMask::ones(h, w);
    let target = (fraction * (h * w) as f64).ceil() as usize;
    let r = brush_radius(w);
    let step = 0.75 * r;
    let (fw, fh) = (w as f64, h as f64);
    let mut heads: Vec<([f64; 2], f64)> = (0..strokes)
        .map(|_| {
            let p = [rng.gen_range(0.0..fw), rng.gen_range(0.0..fh)];
            (p, rng.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let mut zeros = 0;
    let stamp = |m: &mut CorruptionMask, c: [f64; 2], zeros: &mut usize| {
        crate::raster::fill_ellipse(c, r, r, 0.0, h, w, |y, x| {
            if m.get(y, x) == 1 {
                m.set(y, x, 0);
                *zeros += 1;
            }
        });
    };
    for (p, _) in &heads {
        stamp(&mut m, *p, &mut zeros);
    }
    // Bounded walk; coverage only grows, so the cap is never reached in practice.
    let max_steps = 400 * h * w;
    let mut i = 0;
    while zeros < target && i < max_steps {
        let (p, angle) = &mut heads[i % strokes];
        *angle += rng.gen_range(-0.7..0.7);
        let mut next = [p[0] + step * angle.cos(), p[1] + step * angle.sin()];
        if !(0.0..fw).contains(&next[0]) {
            *angle = std::f64::consts::PI - *angle;
            next[0] = next[0].clamp(0.0, fw - 1e-9);
        }
        if !(0.0..fh).contains(&next[1]) {
            *angle = -*angle;
            next[1] = next[1].clamp(0.0, fh - 1e-9);
        }
        *p = next;
        stamp(&mut m, next, &mut zeros);
        i += 1;
    }
    m
}

/// Masks for an N-frame pseudo-sequence. Central and freehand frames are
/// sampled independently (central fractions uniform over the central range);
/// left and checkerboard frames repeat one constant mask.
pub fn make_sequence_masks(
    kind: MaskKind,
    n: usize,
    seed: u64,
    h: usize,
    w: usize,
) -> Result<Vec<CorruptionMask>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "a sequence needs at least 2 frames, got {n}"
        )));
    }
    match kind {
        MaskKind::Central => {
            let mut rng = rng_for(seed, "central-sequence");
            (0..n)
                .map(|_| {
                    let fraction = rng.gen_range(CENTRAL_RANGE.0..=CENTRAL_RANGE.1);
                    make_mask(&MaskSpec::Central { fraction }, h, w)
                })
                .collect()
        }
        MaskKind::Freehand => (0..n)
            .map(|i| {
                let s = derive_seed(seed, &format!("freehand-frame-{i}"));
                make_mask(&MaskSpec::freehand(s), h, w)
            })
            .collect(),
        MaskKind::Left | MaskKind::Checkerboard => {
            let m = make_mask(&MaskSpec::default_for(kind, seed), h, w)?;
            Ok(vec![m; n])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn left_mask_zero_count() {
        let m = make_mask(&MaskSpec::Left, 64, 64).unwrap();
        assert_eq!(m.count_zeros(), 2048);
        assert!((0..64).all(|y| m.get(y, 31) == 0 && m.get(y, 32) == 1));
    }

    #[test]
    fn checkerboard_coarse_cells_split_in_half() {
        let m = make_mask(&MaskSpec::Checkerboard { cell: Some(32) }, 64, 64).unwrap();
        assert_eq!(m.count_zeros(), 2048);
        assert_eq!(m.get(0, 0), 0);
        assert_eq!(m.get(0, 32), 1);
        assert_eq!(m.get(32, 32), 0);
    }

    #[test]
    fn checkerboard_with_remainder() {
        let m = make_mask(&MaskSpec::Checkerboard { cell: Some(5) }, 32, 32).unwrap();
        // brute force: top-left cell zero, parity of cell indices
        let expect = (0..32)
            .flat_map(|y| (0..32).map(move |x| (y, x)))
            .filter(|(y, x)| (y / 5 + x / 5) % 2 == 0)
            .count();
        assert_eq!(m.count_zeros(), expect);
        assert!((m.count_zeros() as i64 - 512).unsigned_abs() <= 2 * 32);
    }

    #[test]
    fn central_mask_block_side() {
        let m = make_mask(&MaskSpec::Central { fraction: 0.5625 }, 64, 64).unwrap();
        assert_eq!(m.count_zeros(), 48 * 48);
        assert_eq!(m.get(8, 8), 0);
        assert_eq!(m.get(7, 8), 1);
        assert_eq!(m.get(55, 55), 0);
        assert_eq!(m.get(56, 55), 1);
        assert_eq!(
            central_side(0.5625, 64, 64),
            (64.0f64 * 0.5625f64.sqrt()).round() as usize
        );
    }

    #[test]
    fn central_band_holds_after_rounding() {
        for size in [16, 32, 64, 128] {
            for f in [0.5, 0.55, 0.6, 0.65, 0.7] {
                let s = central_side(f, size, size);
                let frac = (s * s) as f64 / (size * size) as f64;
                assert!((0.5..=0.7).contains(&frac), "size {size} f {f}: {frac}");
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(make_mask(&MaskSpec::Central { fraction: 0.4 }, 32, 32).is_err());
        assert!(make_mask(&MaskSpec::Central { fraction: 0.75 }, 32, 32).is_err());
        assert!(make_mask(&MaskSpec::Checkerboard { cell: Some(33) }, 32, 32).is_err());
        assert!(make_mask(&MaskSpec::Left, 8, 32).is_err());
    }

    #[test]
    fn freehand_fraction_band_and_determinism() {
        for seed in 0..20 {
            let spec = MaskSpec::freehand(seed);
            let m = make_mask(&spec, 32, 32).unwrap();
            let f = m.corrupted_fraction();
            assert!((0.23..=0.27).contains(&f), "seed {seed}: {f}");
            assert_eq!(make_mask(&spec, 32, 32).unwrap(), m);
        }
    }

    #[test]
    fn sequence_contracts() {
        let left = make_sequence_masks(MaskKind::Left, 5, 1, 32, 32).unwrap();
        assert_eq!(left.len(), 5);
        assert!(left.windows(2).all(|p| p[0] == p[1]));

        let a = make_sequence_masks(MaskKind::Central, 3, 9, 64, 64).unwrap();
        let b = make_sequence_masks(MaskKind::Central, 3, 9, 64, 64).unwrap();
        assert_eq!(a, b);

        let free = make_sequence_masks(MaskKind::Freehand, 4, 2, 64, 64).unwrap();
        for m in &free {
            assert!((0.23..=0.27).contains(&m.corrupted_fraction()));
        }
        assert_ne!(free[0], free[1]);

        assert!(make_sequence_masks(MaskKind::Left, 1, 0, 32, 32).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in MaskKind::ALL {
            assert_eq!(k.name().parse::<MaskKind>().unwrap(), k);
        }
        assert!("diagonal".parse::<MaskKind>().is_err());
    }
}
