//! Inpainting by latent search: find `z` minimising
//! `L_con(z) + eta * L_per(z)` for a corrupted image and its semantic map,
//! then paste the known pixels over `G(z, c)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::PseudoSequence;
use crate::imaging::{CorruptionMask, ImageTensor};
use crate::models::{
    images_to_tensor, maps_to_tensor, tensor_to_image, Discriminator, Generator, LatentVector,
};
use crate::nn::act::sigmoid;
use crate::nn::{Adam, AdamConfig, Mode, Scalar, Tensor};
use crate::seed::rng_for;
use crate::semantic_map::SemanticMap;
use crate::training::SCORE_EPS;

pub const TRACE_HEADER: &str = "iter,total,contextual,perceptual";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InpaintConfig {
    /// Weight of the perceptual term.
    pub eta: f64,
    pub lr: f64,
    pub iterations: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub seed: u64,
    /// Independent starts; the one with the lowest final total loss wins.
    pub restarts: usize,
    /// Divide the contextual L1 sum by the number of known entries.
    pub normalize_context: bool,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        InpaintConfig {
            eta: 0.1,
            lr: 5e-2,
            iterations: 1500,
            beta1: 0.9,
            beta2: 0.99,
            z_min: -1.0,
            z_max: 1.0,
            seed: 0,
            restarts: 1,
            normalize_context: true,
        }
    }
}

impl InpaintConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eta {} must be >= 0",
                self.eta
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be >= 0",
                self.lr
            )));
        }
        if !(-1.0 <= self.z_min && self.z_min < self.z_max && self.z_max <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "latent bounds [{}, {}] must lie in [-1, 1]",
                self.z_min, self.z_max
            )));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument(
                "at least one restart is required".into(),
            ));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
        }
    }
}

/// Frozen networks used for inference.
#[derive(Debug, Clone)]
pub struct InpaintModel<T: Scalar = f32> {
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    /// Training iterations behind the weights; 0 marks an untrained model.
    pub trained_iterations: u64,
}

impl<T: Scalar> InpaintModel<T> {
    pub fn new(
        generator: Generator<T>,
        discriminator: Discriminator<T>,
        trained_iterations: u64,
    ) -> Result<Self> {
        if generator.spec().resolution != discriminator.spec().resolution {
            return Err(Error::Shape(format!(
                "generator resolution {} differs from discriminator resolution {}",
                generator.spec().resolution,
                discriminator.spec().resolution
            )));
        }
        Ok(InpaintModel {
            generator,
            discriminator,
            trained_iterations,
        })
    }

    pub fn resolution(&self) -> usize {
        self.generator.spec().resolution
    }

    pub fn latent_dim(&self) -> usize {
        self.generator.spec().latent_dim
    }
}

impl InpaintModel<f32> {
    pub fn load(path: &Path) -> Result<Self> {
        let (g, d, iters) = crate::training::load_trained(path)?;
        InpaintModel::new(g, d, iters)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iter: usize,
    pub total: f64,
    pub contextual: f64,
    pub perceptual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintResult {
    pub z_hat: LatentVector,
    /// `G(z_hat, c)`.
    pub generated: ImageTensor,
    /// Known pixels from the corrupted input, holes from `generated`.
    pub inpainted: ImageTensor,
    /// Losses at the start of every iteration plus the final state
    /// (`iterations + 1` rows) for the winning restart.
    pub trace: Vec<LossRecord>,
    pub restart: usize,
    pub untrained: bool,
}

impl InpaintResult {
    pub fn final_loss(&self) -> LossRecord {
        *self.trace.last().expect("trace has the final state")
    }

    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut text = format!("{TRACE_HEADER}\n");
        for r in &self.trace {
            text.push_str(&format!(
                "{},{},{},{}\n",
                r.iter, r.total, r.contextual, r.perceptual
            ));
        }
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// `mask (.) (gen - corrupted)` in L1, divided by the number of known
/// entries (pixels x channels). An all-zero mask gives 0.
pub fn contextual_loss(
    gen: &ImageTensor,
    corrupted: &ImageTensor,
    mask: &CorruptionMask,
) -> Result<f64> {
    contextual_loss_with(gen, corrupted, mask, true)
}

pub fn contextual_loss_with(
    gen: &ImageTensor,
    corrupted: &ImageTensor,
    mask: &CorruptionMask,
    normalize: bool,
) -> Result<f64> {
    gen.check_same_shape(corrupted)?;
    mask.check_matches(gen)?;
    let c = gen.channels();
    let mut sum = 0.0;
    for (i, &m) in mask.data().iter().enumerate() {
        if m == 1 {
            for k in 0..c {
                sum += (gen.data()[i * c + k] - corrupted.data()[i * c + k]).abs();
            }
        }
    }
    let known = mask.count_ones() * c;
    Ok(if known == 0 {
        0.0
    } else if normalize {
        sum / known as f64
    } else {
        sum
    })
}

/// `log(1 - s)` with `s` clamped into `[EPS, 1 - EPS]`.
pub fn perceptual_loss(score: f64) -> f64 {
    (1.0 - score.clamp(SCORE_EPS, 1.0 - SCORE_EPS)).ln()
}

/// `mask (.) corrupted + (1 - mask) (.) gen`.
pub fn overlay(
    corrupted: &ImageTensor,
    gen: &ImageTensor,
    mask: &CorruptionMask,
) -> Result<ImageTensor> {
    corrupted.check_same_shape(gen)?;
    mask.check_matches(corrupted)?;
    let c = corrupted.channels();
    let data = mask
        .data()
        .iter()
        .enumerate()
        .flat_map(|(i, &m)| {
            let src = if m == 1 { corrupted } else { gen };
            src.data()[i * c..(i + 1) * c].iter().copied()
        })
        .collect();
    ImageTensor::new(corrupted.height(), corrupted.width(), c, data)
}

/// Inputs of the latent objective prepared once per problem.
pub struct Objective<T: Scalar> {
    corrupted: Tensor<T>,
    /// Per-pixel mask weight already divided by the normaliser.
    weight: Vec<f64>,
    mask: Vec<u8>,
    map: Tensor<T>,
    eta: f64,
}

impl<T: Scalar> Objective<T> {
    pub fn new(
        corrupted: &ImageTensor,
        mask: &CorruptionMask,
        map: &SemanticMap,
        eta: f64,
        normalize: bool,
    ) -> Result<Self> {
        mask.check_matches(corrupted)?;
        if (map.height(), map.width()) != (corrupted.height(), corrupted.width()) {
            return Err(Error::Shape(
                "semantic map and corrupted image differ in size".into(),
            ));
        }
        let known = mask.count_ones() * corrupted.channels();
        let w = if known == 0 {
            0.0
        } else if normalize {
            1.0 / known as f64
        } else {
            1.0
        };
        Ok(Objective {
            corrupted: images_to_tensor(&[corrupted]),
            weight: mask.data().iter().map(|&m| m as f64 * w).collect(),
            mask: mask.data().to_vec(),
            map: maps_to_tensor(&[map]),
            eta,
        })
    }

    /// Loss record and `d total / d z` at `z`.
    pub fn evaluate(
        &self,
        model: &InpaintModel<T>,
        z: &[T],
        need_grad: bool,
    ) -> (LossRecord, Option<Vec<T>>) {
        let (gen, gtape) = model.generator.forward(z, &self.map, Mode::Eval);
        let (logit, dtape) = model.discriminator.forward(&gen, &self.map, Mode::Eval);
        let s = sigmoid(logit[0]).to_f64().unwrap_or(f64::NAN);
        let plane = gen.height() * gen.width();
        let mut contextual = 0.0;
        let mut dgen = Tensor::<T>::zeros(gen.shape());
        for ch in 0..gen.channels() {
            for p in 0..plane {
                if self.mask[p] == 0 {
                    continue;
                }
                let i = ch * plane + p;
                let diff =
                    gen.data()[i].to_f64().unwrap() - self.corrupted.data()[i].to_f64().unwrap();
                contextual += self.weight[p] * diff.abs();
                if need_grad {
                    dgen.data_mut()[i] = T::lit(self.weight[p] * sign(diff));
                }
            }
        }
        let perceptual = perceptual_loss(s);
        let record = LossRecord {
            iter: 0,
            total: contextual + self.eta * perceptual,
            contextual,
            perceptual,
        };
        if !need_grad {
            return (record, None);
        }
        if self.eta > 0.0 && (SCORE_EPS..=1.0 - SCORE_EPS).contains(&s) {
            // d log(1 - sigmoid(l)) / dl = -sigmoid(l)
            let dlogit = [T::lit(-self.eta * s)];
            let dimg = model
                .discriminator
                .backward(&dtape, &dlogit, None, true)
                .expect("image gradient requested");
            for (a, b) in dgen.data_mut().iter_mut().zip(dimg.data()) {
                *a = *a + *b;
            }
        }
        let dz = model.generator.backward(&gtape, dgen, None, true);
        (record, dz)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Starting latent of restart `restart`.
pub fn initial_latent(seed: u64, restart: usize, dim: usize) -> LatentVector {
    LatentVector::sample(
        dim,
        &mut rng_for(seed, &format!("inpaint-latent-{restart}")),
    )
}

fn check_inputs<T: Scalar>(
    model: &InpaintModel<T>,
    corrupted: &ImageTensor,
    mask: &CorruptionMask,
    map: &SemanticMap,
) -> Result<()> {
    let r = model.resolution();
    for (what, h, w) in [
        ("corrupted image", corrupted.height(), corrupted.width()),
        ("semantic map", map.height(), map.width()),
        ("mask", mask.height(), mask.width()),
    ] {
        if (h, w) != (r, r) {
            return Err(Error::Shape(format!(
                "{what} is {h}x{w}, model expects {r}x{r}"
            )));
        }
    }
    if corrupted.channels() != 3 {
        return Err(Error::Shape("corrupted image must have 3 channels".into()));
    }
    Ok(())
}

pub fn optimize_latent<T: Scalar>(
    model: &InpaintModel<T>,
    corrupted: &ImageTensor,
    mask: &CorruptionMask,
    map: &SemanticMap,
    cfg: &InpaintConfig,
) -> Result<InpaintResult> {
    optimize_latent_observed(model, corrupted, mask, map, cfg, |_, _, _| {})
}

/// [`optimize_latent`], calling `observe(restart, step, z)` after every
/// optimizer step.
pub fn optimize_latent_observed<T: Scalar>(
    model: &InpaintModel<T>,
    corrupted: &ImageTensor,
    mask: &CorruptionMask,
    map: &SemanticMap,
    cfg: &InpaintConfig,
    mut observe: impl FnMut(usize, usize, &[T]),
) -> Result<InpaintResult> {
    cfg.validate()?;
    check_inputs(model, corrupted, mask, map)?;
    let objective = Objective::<T>::new(corrupted, mask, map, cfg.eta, cfg.normalize_context)?;
    let (lo, hi) = (T::lit(cfg.z_min), T::lit(cfg.z_max));
    let mut best: Option<(Vec<T>, Vec<LossRecord>, usize)> = None;
    for restart in 0..cfg.restarts {
        let z0 = initial_latent(cfg.seed, restart, model.latent_dim());
        let mut z: Vec<T> = z0
            .values()
            .iter()
            .map(|&v| T::lit(v).max(lo).min(hi))
            .collect();
        let mut opt = Adam::<T>::new(cfg.adam());
        let mut trace = Vec::with_capacity(cfg.iterations + 1);
        for step in 0..cfg.iterations {
            let (mut rec, dz) = objective.evaluate(model, &z, true);
            rec.iter = step;
            check_finite(&rec, step)?;
            trace.push(rec);
            let dz = dz.expect("gradient requested");
            opt.step_vec(&mut z, &dz);
            for v in z.iter_mut() {
                *v = v.max(lo).min(hi);
            }
            observe(restart, step, &z);
        }
        let (mut rec, _) = objective.evaluate(model, &z, false);
        rec.iter = cfg.iterations;
        check_finite(&rec, cfg.iterations)?;
        trace.push(rec);
        let better = match &best {
            None => true,
            Some((_, t, _)) => rec.total < t.last().unwrap().total,
        };
        if better {
            best = Some((z, trace, restart));
        }
    }
    let (z, trace, restart) = best.expect("at least one restart");
    let z_hat = LatentVector::new(z.iter().map(|v| v.to_f64().unwrap()).collect())?;
    let (gen, _) = model.generator.forward(&z, &objective.map, Mode::Eval);
    let generated = tensor_to_image(&gen, 0)?;
    let inpainted = overlay(corrupted, &generated, mask)?;
    Ok(InpaintResult {
        z_hat,
        generated,
        inpainted,
        trace,
        restart,
        untrained: model.trained_iterations == 0,
    })
}

fn check_finite(rec: &LossRecord, step: usize) -> Result<()> {
    if rec.total.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!(
            "inpainting loss at iteration {step}: total {}, contextual {}, perceptual {}",
            rec.total, rec.contextual, rec.perceptual
        )))
    }
}

/// Seed used for frame `index` of a sequence.
pub fn frame_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

/// Inpaint every frame independently (frame `i` uses seed `cfg.seed + i`),
/// preserving order. `maps` holds one map per frame, or a single map shared
/// by all frames.
pub fn inpaint_sequence<T: Scalar>(
    model: &InpaintModel<T>,
    seq: &PseudoSequence,
    maps: &[SemanticMap],
    cfg: &InpaintConfig,
) -> Result<Vec<InpaintResult>> {
    inpaint_frames(model, seq.frames(), seq.masks(), maps, cfg)
}

/// [`inpaint_sequence`] over bare frame and mask lists, which may hold a
/// single frame.
pub fn inpaint_frames<T: Scalar>(
    model: &InpaintModel<T>,
    frames: &[ImageTensor],
    masks: &[CorruptionMask],
    maps: &[SemanticMap],
    cfg: &InpaintConfig,
) -> Result<Vec<InpaintResult>> {
    if frames.is_empty() || masks.len() != frames.len() {
        return Err(Error::InvalidArgument(format!(
            "{} frames with {} masks",
            frames.len(),
            masks.len()
        )));
    }
    if maps.len() != 1 && maps.len() != frames.len() {
        return Err(Error::InvalidArgument(format!(
            "{} maps for a sequence of {} frames",
            maps.len(),
            frames.len()
        )));
    }
    (0..frames.len())
        .map(|i| {
            let map = if maps.len() == 1 { &maps[0] } else { &maps[i] };
            let frame_cfg = InpaintConfig {
                seed: frame_seed(cfg.seed, i),
                ..cfg.clone()
            };
            optimize_latent(model, &frames[i], &masks[i], map, &frame_cfg).map_err(|e| {
                Error::Frame {
                    index: i,
                    source: Box::new(e),
                }
            })
        })
        .collect()
}
