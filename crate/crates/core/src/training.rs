//! Adversarial training of the conditional pair.
//!
//! Each iteration takes one discriminator Adam step on
//! `-mean log D(x, c) - mean log(1 - D(G(z, c), c))` and then one generator
//! step on the non-saturating loss `-mean log D(G(z', c), c)`, with fresh
//! latents for each step.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_gan, save_gan};
use crate::error::{Error, Result};
use crate::imaging::{image_size, load_image, ImageTensor};
use crate::models::{
    images_to_tensor, maps_to_tensor, Discriminator, DiscriminatorSpec, Generator, GeneratorSpec,
    DEFAULT_BASE_FILTERS, DEFAULT_LATENT_DIM, DEFAULT_MAX_FILTERS,
};
use crate::nn::act::sigmoid;
use crate::nn::{Adam, AdamConfig, Mode, Scalar, Tensor};
use crate::seed::{derive_seed, rng_for};
use crate::semantic_map::{load_landmarks, render_map, SemanticMap};

/// Sigmoid outputs are clamped into `[EPS, 1 - EPS]` before taking logs.
pub const SCORE_EPS: f64 = 1e-7;
pub const METRICS_HEADER: &str = "iter,d_loss,g_loss,real_score,fake_score";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub iterations: u64,
    pub seed: u64,
    pub resolution: usize,
    pub latent_dim: usize,
    pub gen_filters: usize,
    pub disc_filters: usize,
    pub max_filters: usize,
    /// Write an intermediate checkpoint every this many iterations (0 = final only).
    pub checkpoint_every: u64,
    /// Append a metrics row every this many iterations (0 = never).
    pub log_every: u64,
    pub dataset_root: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.5,
            iterations: 10_000,
            seed: 0,
            resolution: 64,
            latent_dim: DEFAULT_LATENT_DIM,
            gen_filters: DEFAULT_BASE_FILTERS,
            disc_filters: DEFAULT_BASE_FILTERS,
            max_filters: DEFAULT_MAX_FILTERS,
            checkpoint_every: 0,
            log_every: 100,
            dataset_root: PathBuf::from("data"),
            out_dir: PathBuf::from("run"),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument(
                "batch size must be at least 2 for batch statistics".into(),
            ));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be > 0",
                self.lr
            )));
        }
        self.generator_spec().validate()?;
        self.discriminator_spec().validate()
    }

    pub fn generator_spec(&self) -> GeneratorSpec {
        GeneratorSpec {
            resolution: self.resolution,
            latent_dim: self.latent_dim,
            base_filters: self.gen_filters,
            max_filters: self.max_filters,
        }
    }

    pub fn discriminator_spec(&self) -> DiscriminatorSpec {
        DiscriminatorSpec {
            resolution: self.resolution,
            base_filters: self.disc_filters,
            max_filters: self.max_filters,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
        }
    }
}

/// One `(x, c)` training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub image: ImageTensor,
    pub map: SemanticMap,
}

impl PairedSample {
    pub fn new(image: ImageTensor, map: SemanticMap) -> Result<Self> {
        if (image.height(), image.width()) != (map.height(), map.width()) || image.channels() != 3 {
            return Err(Error::Shape(format!(
                "image {}x{}x{} does not pair with a {}x{} map",
                image.height(),
                image.width(),
                image.channels(),
                map.height(),
                map.width()
            )));
        }
        Ok(PairedSample { image, map })
    }
}

/// Load `<root>/images/*.png` paired by stem with `<root>/landmarks/*.json`
/// (or a cached `<root>/maps/*.png`), resampled to `resolution`. Samples are
/// returned in stem order.
pub fn load_dataset(root: &Path, resolution: usize) -> Result<Vec<PairedSample>> {
    Ok(load_named_dataset(root, resolution)?
        .into_iter()
        .map(|(_, s)| s)
        .collect())
}

/// [`load_dataset`] keeping each sample's file stem.
pub fn load_named_dataset(root: &Path, resolution: usize) -> Result<Vec<(String, PairedSample)>> {
    let images_dir = root.join("images");
    let entries = fs::read_dir(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let mut stems = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&images_dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("png") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    let mut out = Vec::with_capacity(stems.len());
    for stem in stems {
        let img_path = images_dir.join(format!("{stem}.png"));
        let image = load_image(&img_path, resolution)?;
        let lm_path = root.join("landmarks").join(format!("{stem}.json"));
        let map_path = root.join("maps").join(format!("{stem}.png"));
        let map = if lm_path.exists() {
            let (h, w) = image_size(&img_path)?;
            let lms = load_landmarks(&lm_path, h, w)?.rescale(resolution, resolution)?;
            render_map(&lms, resolution, resolution)
        } else if map_path.exists() {
            SemanticMap::load_png(&map_path, resolution)?
        } else {
            return Err(Error::Io {
                path: lm_path,
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no landmarks for image"),
            });
        };
        out.push((stem, PairedSample::new(image, map)?));
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    Ok(out)
}

fn clamp_score(s: f64) -> f64 {
    s.clamp(SCORE_EPS, 1.0 - SCORE_EPS)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `-mean log r - mean log(1 - f)` on clamped scores.
pub fn d_loss(real_scores: &[f64], fake_scores: &[f64]) -> f64 {
    let r: Vec<f64> = real_scores.iter().map(|&s| -clamp_score(s).ln()).collect();
    let f: Vec<f64> = fake_scores
        .iter()
        .map(|&s| -(1.0 - clamp_score(s)).ln())
        .collect();
    mean(&r) + mean(&f)
}

/// Non-saturating generator loss `-mean log f` on clamped scores.
pub fn g_loss(fake_scores: &[f64]) -> f64 {
    mean(
        &fake_scores
            .iter()
            .map(|&s| -clamp_score(s).ln())
            .collect::<Vec<_>>(),
    )
}

fn inside_clamp(s: f64) -> bool {
    (SCORE_EPS..=1.0 - SCORE_EPS).contains(&s)
}

fn scores<T: Scalar>(logits: &[T]) -> Vec<f64> {
    logits
        .iter()
        .map(|&l| sigmoid(l).to_f64().unwrap_or(f64::NAN))
        .collect()
}

/// d/dlogit of `-mean log s` (zero where the clamp is active).
fn grad_neg_log<T: Scalar>(s: &[f64]) -> Vec<T> {
    let n = s.len() as f64;
    s.iter()
        .map(|&s| T::lit(if inside_clamp(s) { -(1.0 - s) / n } else { 0.0 }))
        .collect()
}

/// d/dlogit of `-mean log(1 - s)`.
fn grad_neg_log_one_minus<T: Scalar>(s: &[f64]) -> Vec<T> {
    let n = s.len() as f64;
    s.iter()
        .map(|&s| T::lit(if inside_clamp(s) { s / n } else { 0.0 }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub d_loss: f64,
    pub g_loss: f64,
    pub real_score: f64,
    pub fake_score: f64,
}

/// Draw `n` latents from `U[-1, 1]^dim`, row-major.
pub fn sample_latents<T: Scalar>(n: usize, dim: usize, rng: &mut impl Rng) -> Vec<T> {
    (0..n * dim)
        .map(|_| T::lit(rng.gen_range(-1.0..=1.0)))
        .collect()
}

/// Discriminator loss and scores for given inputs, without updating anything.
pub fn evaluate_d_loss<T: Scalar>(
    g: &Generator<T>,
    d: &Discriminator<T>,
    images: &Tensor<T>,
    maps: &Tensor<T>,
    z: &[T],
) -> (f64, f64, f64) {
    let (fake, _) = g.forward(z, maps, Mode::Train);
    let (lr, _) = d.forward(images, maps, Mode::Train);
    let (lf, _) = d.forward(&fake, maps, Mode::Train);
    let (sr, sf) = (scores(&lr), scores(&lf));
    (d_loss(&sr, &sf), mean(&sr), mean(&sf))
}

/// One Adam step of the discriminator; returns `(d_loss, real_score, fake_score)`.
pub fn discriminator_step<T: Scalar>(
    g: &Generator<T>,
    d: &mut Discriminator<T>,
    opt: &mut Adam<T>,
    images: &Tensor<T>,
    maps: &Tensor<T>,
    z: &[T],
) -> Result<(f64, f64, f64)> {
    let (fake, _) = g.forward(z, maps, Mode::Train);
    let (lr, tape_r) = d.forward(images, maps, Mode::Train);
    let (lf, tape_f) = d.forward(&fake, maps, Mode::Train);
    let (sr, sf) = (scores(&lr), scores(&lf));
    let loss = d_loss(&sr, &sf);
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "discriminator loss {loss} (real scores {sr:?}, fake scores {sf:?})"
        )));
    }
    let mut grads = d.store().zero_grads();
    d.backward(&tape_r, &grad_neg_log::<T>(&sr), Some(&mut grads), false);
    d.backward(
        &tape_f,
        &grad_neg_log_one_minus::<T>(&sf),
        Some(&mut grads),
        false,
    );
    if !grads.all_finite() {
        return Err(Error::NonFinite("discriminator gradients".into()));
    }
    opt.step_store(d.store_mut(), &grads);
    d.update_running_stats(&tape_r);
    d.update_running_stats(&tape_f);
    Ok((loss, mean(&sr), mean(&sf)))
}

/// One Adam step of the generator against the current discriminator.
pub fn generator_step<T: Scalar>(
    g: &mut Generator<T>,
    d: &Discriminator<T>,
    opt: &mut Adam<T>,
    maps: &Tensor<T>,
    z: &[T],
) -> Result<f64> {
    let (fake, gtape) = g.forward(z, maps, Mode::Train);
    let (lf, dtape) = d.forward(&fake, maps, Mode::Train);
    let sf = scores(&lf);
    let loss = g_loss(&sf);
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "generator loss {loss} (fake scores {sf:?})"
        )));
    }
    let dimg = d
        .backward(&dtape, &grad_neg_log::<T>(&sf), None, true)
        .expect("image gradient requested");
    let mut grads = g.store().zero_grads();
    g.backward(&gtape, dimg, Some(&mut grads), false);
    if !grads.all_finite() {
        return Err(Error::NonFinite("generator gradients".into()));
    }
    opt.step_store(g.store_mut(), &grads);
    g.update_running_stats(&gtape);
    Ok(loss)
}

/// Discriminator step then generator step, each with fresh latents from `rng`.
#[allow(clippy::too_many_arguments)]
pub fn train_step<T: Scalar>(
    g: &mut Generator<T>,
    d: &mut Discriminator<T>,
    opt_g: &mut Adam<T>,
    opt_d: &mut Adam<T>,
    batch: &[&PairedSample],
    rng: &mut impl Rng,
) -> Result<StepMetrics> {
    let images = images_to_tensor::<T>(&batch.iter().map(|s| &s.image).collect::<Vec<_>>());
    let maps = maps_to_tensor::<T>(&batch.iter().map(|s| &s.map).collect::<Vec<_>>());
    let dim = g.spec().latent_dim;
    let z_d = sample_latents::<T>(batch.len(), dim, rng);
    let (d_loss, real_score, fake_score) = discriminator_step(g, d, opt_d, &images, &maps, &z_d)?;
    let z_g = sample_latents::<T>(batch.len(), dim, rng);
    let g_loss = generator_step(g, d, opt_g, &maps, &z_g)?;
    Ok(StepMetrics {
        d_loss,
        g_loss,
        real_score,
        fake_score,
    })
}

/// Owns both networks, their optimizers and the seeded batch/latent streams.
#[derive(Debug, Clone)]
pub struct Trainer<T: Scalar = f32> {
    config: TrainConfig,
    data: Vec<PairedSample>,
    generator: Generator<T>,
    discriminator: Discriminator<T>,
    opt_g: Adam<T>,
    opt_d: Adam<T>,
    batch_rng: ChaCha8Rng,
    latent_rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    iteration: u64,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: TrainConfig, data: Vec<PairedSample>) -> Result<Self> {
        config.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyDataset(config.dataset_root.clone()));
        }
        for s in &data {
            if s.image.height() != config.resolution || s.image.width() != config.resolution {
                return Err(Error::Shape(format!(
                    "sample is {}x{}, training resolution is {}",
                    s.image.height(),
                    s.image.width(),
                    config.resolution
                )));
            }
        }
        let generator = Generator::new(
            config.generator_spec(),
            derive_seed(config.seed, "generator-init"),
        )?;
        let discriminator = Discriminator::new(
            config.discriminator_spec(),
            derive_seed(config.seed, "discriminator-init"),
        )?;
        Ok(Trainer {
            opt_g: Adam::new(config.adam()),
            opt_d: Adam::new(config.adam()),
            batch_rng: rng_for(config.seed, "train-batches"),
            latent_rng: rng_for(config.seed, "train-latents"),
            order: Vec::new(),
            cursor: 0,
            iteration: 0,
            generator,
            discriminator,
            data,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn generator(&self) -> &Generator<T> {
        &self.generator
    }

    pub fn discriminator(&self) -> &Discriminator<T> {
        &self.discriminator
    }

    pub fn data(&self) -> &[PairedSample] {
        &self.data
    }

    /// Next batch indices, walking shuffled passes over the data.
    fn next_batch(&mut self) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.config.batch_size);
        while idx.len() < self.config.batch_size {
            if self.cursor == self.order.len() {
                self.order = (0..self.data.len()).collect();
                self.order.shuffle(&mut self.batch_rng);
                self.cursor = 0;
            }
            idx.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        idx
    }

    pub fn step(&mut self) -> Result<StepMetrics> {
        let idx = self.next_batch();
        let batch: Vec<&PairedSample> = idx.iter().map(|&i| &self.data[i]).collect();
        let m = train_step(
            &mut self.generator,
            &mut self.discriminator,
            &mut self.opt_g,
            &mut self.opt_d,
            &batch,
            &mut self.latent_rng,
        )
        .map_err(|e| match e {
            Error::NonFinite(msg) => {
                Error::NonFinite(format!("iteration {}: {msg}", self.iteration + 1))
            }
            other => other,
        })?;
        self.iteration += 1;
        Ok(m)
    }

    pub fn checkpoint_meta(&self) -> serde_json::Value {
        serde_json::json!({
            "iteration": self.iteration,
            "config": self.config,
        })
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        save_gan(
            path,
            &self.generator,
            &self.discriminator,
            self.checkpoint_meta(),
        )
    }
}

/// Number of training iterations recorded in a checkpoint's metadata.
pub fn trained_iterations(meta: &serde_json::Value) -> u64 {
    meta.get("iteration").and_then(|v| v.as_u64()).unwrap_or(0)
}

/// Run a full training job: load the dataset, train for the budget, write
/// `metrics.csv`, periodic `checkpoint-<iter>.ckpt` files and `final.ckpt`
/// into `config.out_dir`. Returns the final checkpoint path.
pub fn train(config: &TrainConfig) -> Result<PathBuf> {
    config.validate()?;
    let data = load_dataset(&config.dataset_root, config.resolution)?;
    train_on(config, data, |_, _| {})
}

/// [`train`] on already-loaded samples, reporting each step to `observe`.
pub fn train_on(
    config: &TrainConfig,
    data: Vec<PairedSample>,
    mut observe: impl FnMut(u64, &StepMetrics),
) -> Result<PathBuf> {
    let mut trainer = Trainer::<f32>::new(config.clone(), data)?;
    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let metrics_path = out.join("metrics.csv");
    let mut log = fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    writeln!(log, "{METRICS_HEADER}").map_err(|e| Error::io(&metrics_path, e))?;
    while trainer.iteration() < config.iterations {
        let m = trainer.step()?;
        let it = trainer.iteration();
        observe(it, &m);
        if config.log_every > 0 && it % config.log_every == 0 {
            writeln!(
                log,
                "{it},{},{},{},{}",
                m.d_loss, m.g_loss, m.real_score, m.fake_score
            )
            .map_err(|e| Error::io(&metrics_path, e))?;
        }
        if config.checkpoint_every > 0
            && it % config.checkpoint_every == 0
            && it < config.iterations
        {
            trainer.save_checkpoint(&out.join(format!("checkpoint-{it:06}.ckpt")))?;
        }
    }
    let final_path = out.join("final.ckpt");
    trainer.save_checkpoint(&final_path)?;
    Ok(final_path)
}

/// Load the generator, discriminator and trained-iteration count of a checkpoint.
pub fn load_trained(path: &Path) -> Result<(Generator<f32>, Discriminator<f32>, u64)> {
    let ck = load_gan::<f32>(path)?;
    let iters = trained_iterations(&ck.meta);
    Ok((ck.generator, ck.discriminator, iters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantic_map::{synth_landmarks, FacePose};

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            resolution: 32,
            latent_dim: 4,
            gen_filters: 2,
            disc_filters: 2,
            max_filters: 8,
            iterations: 3,
            log_every: 1,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    fn tiny_data(n: usize) -> Vec<PairedSample> {
        (0..n)
            .map(|i| {
                let mut pose = FacePose::centered(32);
                pose.mouth_curvature = i as f64 / n as f64 * 2.0 - 1.0;
                let map = render_map(&synth_landmarks(&pose, 32, 32).unwrap(), 32, 32);
                let v = i as f64 / n as f64 - 0.5;
                let image = ImageTensor::from_fn(32, 32, |y, x| {
                    [v, (y as f64 / 32.0) - 0.5, (x as f64 / 32.0) - 0.5]
                });
                PairedSample::new(image, map).unwrap()
            })
            .collect()
    }

    #[test]
    fn loss_values() {
        assert!((d_loss(&[0.5], &[0.5]) - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!((d_loss(&[0.8], &[0.3]) - (-(0.8f64).ln() - (0.7f64).ln())).abs() < 1e-12);
        assert!((d_loss(&[0.8], &[0.3]) - 0.579_818_495_252_942).abs() < 1e-12);
        assert!(d_loss(&[1.0], &[0.0]) < 1e-6);
        assert!((g_loss(&[0.5]) - 2f64.ln()).abs() < 1e-15);
        assert!((g_loss(&[0.25]) - 4f64.ln()).abs() < 1e-12);
        assert!(g_loss(&[1.0 - SCORE_EPS]) < 1e-6);
        assert!(d_loss(&[0.0], &[1.0]).is_finite() && g_loss(&[0.0]).is_finite());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = tiny_config();
        c.batch_size = 1;
        assert!(matches!(c.validate(), Err(Error::InvalidArgument(_))));
        let mut c = tiny_config();
        c.lr = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let data = tiny_data(4);
        let batch: Vec<&PairedSample> = data.iter().collect();
        let cfg = AdamConfig {
            lr: 0.0,
            ..tiny_config().adam()
        };
        let mut g = Generator::<f32>::new(tiny_config().generator_spec(), 1).unwrap();
        let mut d = Discriminator::<f32>::new(tiny_config().discriminator_spec(), 2).unwrap();
        let (g0, d0) = (g.store().clone(), d.store().clone());
        let mut rng = rng_for(0, "t");
        train_step(
            &mut g,
            &mut d,
            &mut Adam::new(cfg),
            &mut Adam::new(cfg),
            &batch,
            &mut rng,
        )
        .unwrap();
        let trainable = |a: &crate::nn::ParamStore<f32>| -> Vec<Vec<u32>> {
            a.entries()
                .iter()
                .filter(|e| e.trainable)
                .map(|e| e.data.iter().map(|v| v.to_bits()).collect())
                .collect()
        };
        assert_eq!(trainable(g.store()), trainable(&g0));
        assert_eq!(trainable(d.store()), trainable(&d0));
    }

    #[test]
    fn training_is_replayable() {
        let run = || {
            let mut t = Trainer::<f32>::new(tiny_config(), tiny_data(6)).unwrap();
            let m: Vec<StepMetrics> = (0..3).map(|_| t.step().unwrap()).collect();
            (
                m,
                t.generator().store().clone(),
                t.discriminator().store().clone(),
            )
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn discriminator_step_lowers_its_loss_in_f64() {
        let data = tiny_data(4);
        let images = images_to_tensor::<f64>(&data.iter().map(|s| &s.image).collect::<Vec<_>>());
        let maps = maps_to_tensor::<f64>(&data.iter().map(|s| &s.map).collect::<Vec<_>>());
        let g = Generator::<f64>::new(tiny_config().generator_spec(), 1).unwrap();
        let mut d = Discriminator::<f64>::new(tiny_config().discriminator_spec(), 2).unwrap();
        let z = sample_latents::<f64>(4, 4, &mut rng_for(1, "z"));
        let mut opt = Adam::new(AdamConfig {
            lr: 1e-3,
            ..tiny_config().adam()
        });
        let (before, _, _) = evaluate_d_loss(&g, &d, &images, &maps, &z);
        let (reported, _, _) =
            discriminator_step(&g, &mut d, &mut opt, &images, &maps, &z).unwrap();
        assert_eq!(before, reported);
        let (after, _, _) = evaluate_d_loss(&g, &d, &images, &maps, &z);
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn budget_zero_checkpoint_equals_initialization() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config();
        cfg.iterations = 0;
        cfg.out_dir = dir.path().to_path_buf();
        let path = train_on(&cfg, tiny_data(4), |_, _| {}).unwrap();
        let (g, d, iters) = load_trained(&path).unwrap();
        let fresh = Trainer::<f32>::new(cfg, tiny_data(4)).unwrap();
        assert_eq!(iters, 0);
        assert_eq!(g.store(), fresh.generator().store());
        assert_eq!(d.store(), fresh.discriminator().store());
    }

    #[test]
    fn metrics_rows_follow_log_cadence() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config();
        cfg.iterations = 6;
        cfg.log_every = 2;
        cfg.checkpoint_every = 3;
        cfg.out_dir = dir.path().to_path_buf();
        train_on(&cfg, tiny_data(4), |_, _| {}).unwrap();
        let text = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines.len() - 1, 3);
        assert!(lines[1].starts_with("2,"));
        assert!(dir.path().join("checkpoint-000003.ckpt").exists());
        assert!(dir.path().join("final.ckpt").exists());
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("images")).unwrap();
        assert!(matches!(
            load_dataset(dir.path(), 32),
            Err(Error::EmptyDataset(_))
        ));
    }
}
