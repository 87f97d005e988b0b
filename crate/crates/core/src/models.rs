//! Map-conditioned generator `G(z, c)` and discriminator `D(x, c)`.
//!
//! Both networks are resolution-parametric. With `d = log2(W) - 2`:
//!
//! * the generator concatenates the tiled latent with the map, runs `d`
//!   stride-2 convolutions (filters doubling from the base, capped) down to
//!   4×4, then `d` transposed convolutions back to `W×W`. Every layer but the
//!   last is followed by BatchNorm and ReLU; the last by tanh.
//! * the discriminator concatenates image and map (6 channels), runs `d`
//!   stride-2 convolutions down to 4×4 with LeakyReLU, BatchNorm on every
//!   convolution after the first, then a linear layer and a sigmoid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{ImageTensor, MODEL_RESOLUTIONS};
use crate::nn::act;
use crate::nn::conv::{
    Conv2d, ConvCache, ConvTCache, ConvTranspose2d, LatentMapCache, LatentMapConv,
};
use crate::nn::linear::Linear;
use crate::nn::norm::{BatchNorm2d, BnCache};
use crate::nn::{Grads, Mode, ParamStore, Scalar, Tensor};
use crate::seed::rng_from;
use crate::semantic_map::SemanticMap;

pub const DEFAULT_LATENT_DIM: usize = 100;
pub const DEFAULT_BASE_FILTERS: usize = 64;
pub const DEFAULT_MAX_FILTERS: usize = 512;
pub const INIT_STD: f64 = 0.02;
pub const KERNEL: usize = 5;
pub const STRIDE: usize = 2;
pub const MAP_CHANNELS: usize = 3;
/// Channel order of the generator's first layer input.
pub const GENERATOR_INPUT_ORDER: &str = "latent,map";

fn depth_for(resolution: usize) -> Result<usize> {
    if !MODEL_RESOLUTIONS.contains(&resolution) {
        return Err(Error::InvalidArgument(format!(
            "resolution {resolution} not in {MODEL_RESOLUTIONS:?}"
        )));
    }
    Ok(resolution.trailing_zeros() as usize - 2)
}

fn filters(base: usize, max: usize, layer: usize) -> usize {
    (base << layer).min(max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub resolution: usize,
    pub latent_dim: usize,
    pub base_filters: usize,
    pub max_filters: usize,
}

impl GeneratorSpec {
    pub fn new(resolution: usize) -> Self {
        GeneratorSpec {
            resolution,
            latent_dim: DEFAULT_LATENT_DIM,
            base_filters: DEFAULT_BASE_FILTERS,
            max_filters: DEFAULT_MAX_FILTERS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        depth_for(self.resolution)?;
        if self.latent_dim == 0 || self.base_filters == 0 || self.max_filters < self.base_filters {
            return Err(Error::InvalidArgument(format!(
                "invalid generator spec {self:?}"
            )));
        }
        Ok(())
    }

    /// Number of down (and up) layers.
    pub fn depth(&self) -> usize {
        depth_for(self.resolution).expect("validated spec")
    }

    pub fn down_filters(&self, layer: usize) -> usize {
        filters(self.base_filters, self.max_filters, layer)
    }

    /// Declared `(name, [channels, height, width])` after every layer block.
    pub fn layer_shapes(&self) -> Vec<(String, [usize; 3])> {
        let d = self.depth();
        let mut out = Vec::new();
        let mut s = self.resolution;
        for i in 0..d {
            s /= 2;
            out.push((format!("enc{i}"), [self.down_filters(i), s, s]));
        }
        for j in 0..d {
            s *= 2;
            let c = if j + 1 == d {
                3
            } else {
                self.down_filters(d - 2 - j)
            };
            out.push((format!("dec{j}"), [c, s, s]));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub resolution: usize,
    pub base_filters: usize,
    pub max_filters: usize,
}

impl DiscriminatorSpec {
    pub fn new(resolution: usize) -> Self {
        DiscriminatorSpec {
            resolution,
            base_filters: DEFAULT_BASE_FILTERS,
            max_filters: DEFAULT_MAX_FILTERS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        depth_for(self.resolution)?;
        if self.base_filters == 0 || self.max_filters < self.base_filters {
            return Err(Error::InvalidArgument(format!(
                "invalid discriminator spec {self:?}"
            )));
        }
        Ok(())
    }

    /// Number of stride-2 convolutions (spatial size `W -> 4`).
    pub fn conv_layers(&self) -> usize {
        depth_for(self.resolution).expect("validated spec")
    }

    pub fn filters(&self, layer: usize) -> usize {
        filters(self.base_filters, self.max_filters, layer)
    }

    pub fn layer_shapes(&self) -> Vec<(String, [usize; 3])> {
        let mut s = self.resolution;
        let mut out: Vec<_> = (0..self.conv_layers())
            .map(|i| {
                s /= 2;
                (format!("conv{i}"), [self.filters(i), s, s])
            })
            .collect();
        out.push(("linear".into(), [1, 1, 1]));
        out
    }
}

/// Architecture record stored with a network's weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "network", rename_all = "lowercase")]
pub enum NetworkSpec {
    Generator(GeneratorSpec),
    Discriminator(DiscriminatorSpec),
}

/// A network's spec plus its flat registry of named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub spec: NetworkSpec,
    pub store: ParamStore<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn is_finite(&self) -> bool {
        self.store.all_finite()
    }
}

/// Latent code with every coordinate in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "latent coordinate {v} outside [-1, 1]"
            )));
        }
        Ok(LatentVector(values))
    }

    /// Draw from `U[-1, 1]^dim`.
    pub fn sample(dim: usize, rng: &mut impl Rng) -> Self {
        LatentVector((0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Repeat `z` at every spatial site: an `h x w x dim` array (channel fastest).
pub fn tile_latent(z: &LatentVector, h: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(h * w * z.dim());
    for _ in 0..h * w {
        out.extend_from_slice(z.values());
    }
    out
}

/// Stack interleaved images into an NCHW tensor.
pub fn images_to_tensor<T: Scalar>(images: &[&ImageTensor]) -> Tensor<T> {
    assert!(!images.is_empty());
    let (h, w, c) = (images[0].height(), images[0].width(), images[0].channels());
    let mut t = Tensor::zeros([images.len(), c, h, w]);
    for (n, img) in images.iter().enumerate() {
        assert!(
            img.same_shape(images[0]),
            "images in a batch must share a shape"
        );
        let dst = t.sample_mut(n);
        for (i, &v) in img.data().iter().enumerate() {
            let (pix, ch) = (i / c, i % c);
            dst[ch * h * w + pix] = T::lit(v);
        }
    }
    t
}

pub fn maps_to_tensor<T: Scalar>(maps: &[&SemanticMap]) -> Tensor<T> {
    let imgs: Vec<ImageTensor> = maps.iter().map(|m| m.to_image()).collect();
    images_to_tensor(&imgs.iter().collect::<Vec<_>>())
}

/// Sample `n` of an NCHW tensor as an interleaved image, clamped into `[-1, 1]`.
pub fn tensor_to_image<T: Scalar>(t: &Tensor<T>, n: usize) -> Result<ImageTensor> {
    let [_, c, h, w] = t.shape();
    let src = t.sample(n);
    let mut data = vec![0.0; c * h * w];
    for ch in 0..c {
        for pix in 0..h * w {
            data[pix * c + ch] = src[ch * h * w + pix].to_f64().unwrap_or(f64::NAN);
        }
    }
    ImageTensor::from_clamped(h, w, c, data)
}

pub fn latents_to_vec<T: Scalar>(zs: &[&LatentVector]) -> Vec<T> {
    zs.iter()
        .flat_map(|z| z.values().iter().map(|&v| T::lit(v)))
        .collect()
}

fn check_resolution(what: &str, got: (usize, usize), want: usize) -> Result<()> {
    if got != (want, want) {
        return Err(Error::Shape(format!(
            "{what} is {}x{}, model expects {want}x{want}",
            got.0, got.1
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Generator<T = f32> {
    spec: GeneratorSpec,
    store: ParamStore<T>,
    first: LatentMapConv,
    enc: Vec<Conv2d>,
    enc_bn: Vec<BatchNorm2d>,
    dec: Vec<ConvTranspose2d>,
    dec_bn: Vec<BatchNorm2d>,
}

/// Intermediate values of one generator forward pass.
#[derive(Debug, Clone)]
pub struct GenTape<T> {
    first: LatentMapCache<T>,
    enc: Vec<ConvCache<T>>,
    dec: Vec<ConvTCache<T>>,
    bn: Vec<BnCache<T>>,
    relu_out: Vec<Tensor<T>>,
    output: Tensor<T>,
    /// Realized `(name, [c, h, w])` after each layer block.
    pub shapes: Vec<(String, [usize; 3])>,
}

impl<T: Scalar> GenTape<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }
}

impl<T: Scalar> Generator<T> {
    /// Fresh network with N(0, 0.02) weights drawn from `seed`.
    pub fn new(spec: GeneratorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_from(seed);
        let mut store = ParamStore::new();
        let d = spec.depth();
        let first = LatentMapConv::new(
            &mut store,
            "enc0",
            spec.latent_dim,
            MAP_CHANNELS,
            spec.down_filters(0),
            INIT_STD,
            &mut rng,
        );
        let mut enc_bn = vec![BatchNorm2d::new(
            &mut store,
            "enc0_bn",
            spec.down_filters(0),
        )];
        let mut enc = Vec::new();
        for i in 1..d {
            enc.push(Conv2d::new(
                &mut store,
                &format!("enc{i}"),
                spec.down_filters(i - 1),
                spec.down_filters(i),
                false,
                INIT_STD,
                &mut rng,
            ));
            enc_bn.push(BatchNorm2d::new(
                &mut store,
                &format!("enc{i}_bn"),
                spec.down_filters(i),
            ));
        }
        let mut dec = Vec::new();
        let mut dec_bn = Vec::new();
        for j in 0..d {
            let cin = spec.down_filters(d - 1 - j);
            let last = j + 1 == d;
            let cout = if last {
                3
            } else {
                spec.down_filters(d - 2 - j)
            };
            dec.push(ConvTranspose2d::new(
                &mut store,
                &format!("dec{j}"),
                cin,
                cout,
                last,
                INIT_STD,
                &mut rng,
            ));
            if !last {
                dec_bn.push(BatchNorm2d::new(&mut store, &format!("dec{j}_bn"), cout));
            }
        }
        Ok(Generator {
            spec,
            store,
            first,
            enc,
            enc_bn,
            dec,
            dec_bn,
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn params(&self) -> ModelParams<T> {
        ModelParams {
            spec: NetworkSpec::Generator(self.spec),
            store: self.store.clone(),
        }
    }

    /// Rebuild a generator from stored parameters, checking every name and shape.
    pub fn from_params(params: ModelParams<T>) -> Result<Self> {
        let NetworkSpec::Generator(spec) = params.spec else {
            return Err(Error::Shape(
                "parameters describe a discriminator, not a generator".into(),
            ));
        };
        let mut g = Generator::new(spec, 0)?;
        adopt_store(&mut g.store, params.store)?;
        Ok(g)
    }

    pub fn cast<U: Scalar>(&self) -> Generator<U> {
        Generator {
            spec: self.spec,
            store: self.store.cast(),
            first: self.first.clone(),
            enc: self.enc.clone(),
            enc_bn: self.enc_bn.clone(),
            dec: self.dec.clone(),
            dec_bn: self.dec_bn.clone(),
        }
    }

    /// `z` is `batch x latent_dim` row-major; `maps` is `batch x 3 x W x W`.
    pub fn forward(&self, z: &[T], maps: &Tensor<T>, mode: Mode) -> (Tensor<T>, GenTape<T>) {
        let d = self.spec.depth();
        let mut shapes = Vec::with_capacity(2 * d);
        let record = |shapes: &mut Vec<(String, [usize; 3])>, name: String, t: &Tensor<T>| {
            shapes.push((name, [t.channels(), t.height(), t.width()]));
        };
        let mut bn = Vec::with_capacity(2 * d);
        let mut relu_out = Vec::with_capacity(2 * d);

        let (h, first) = self.first.forward(&self.store, z, maps);
        let (h, c) = self.enc_bn[0].forward(&self.store, &h, mode);
        bn.push(c);
        let mut h = act::relu(h);
        record(&mut shapes, "enc0".into(), &h);
        relu_out.push(h.clone());

        let mut enc = Vec::with_capacity(d);
        for i in 1..d {
            let (x, cc) = self.enc[i - 1].forward(&self.store, &h);
            enc.push(cc);
            let (x, c) = self.enc_bn[i].forward(&self.store, &x, mode);
            bn.push(c);
            h = act::relu(x);
            record(&mut shapes, format!("enc{i}"), &h);
            relu_out.push(h.clone());
        }
        let mut dec = Vec::with_capacity(d);
        for j in 0..d {
            let (x, cc) = self.dec[j].forward(&self.store, &h);
            dec.push(cc);
            if j + 1 == d {
                h = act::tanh(x);
            } else {
                let (x, c) = self.dec_bn[j].forward(&self.store, &x, mode);
                bn.push(c);
                h = act::relu(x);
                relu_out.push(h.clone());
            }
            record(&mut shapes, format!("dec{j}"), &h);
        }
        let tape = GenTape {
            first,
            enc,
            dec,
            bn,
            relu_out,
            output: h.clone(),
            shapes,
        };
        (h, tape)
    }

    /// Backpropagate `dy` (gradient w.r.t. the output image). Accumulates into
    /// `grads` when given; returns the gradient w.r.t. `z` when `need_dz`.
    pub fn backward(
        &self,
        tape: &GenTape<T>,
        dy: Tensor<T>,
        mut grads: Option<&mut Grads<T>>,
        need_dz: bool,
    ) -> Option<Vec<T>> {
        let d = self.spec.depth();
        let mut g = act::tanh_backward(&tape.output, dy);
        let mut relu_idx = tape.relu_out.len();
        let mut bn_idx = tape.bn.len();
        for j in (0..d).rev() {
            if j + 1 != d {
                relu_idx -= 1;
                bn_idx -= 1;
                g = act::relu_backward(&tape.relu_out[relu_idx], g);
                g = self.dec_bn[j].backward(
                    &self.store,
                    &tape.bn[bn_idx],
                    &g,
                    grads.as_deref_mut(),
                );
            }
            g = self.dec[j]
                .backward(&self.store, &tape.dec[j], &g, grads.as_deref_mut(), true)
                .expect("dx requested");
        }
        for i in (1..d).rev() {
            relu_idx -= 1;
            bn_idx -= 1;
            g = act::relu_backward(&tape.relu_out[relu_idx], g);
            g = self.enc_bn[i].backward(&self.store, &tape.bn[bn_idx], &g, grads.as_deref_mut());
            g = self.enc[i - 1]
                .backward(
                    &self.store,
                    &tape.enc[i - 1],
                    &g,
                    grads.as_deref_mut(),
                    true,
                )
                .expect("dx requested");
        }
        relu_idx -= 1;
        bn_idx -= 1;
        debug_assert_eq!((relu_idx, bn_idx), (0, 0));
        g = act::relu_backward(&tape.relu_out[0], g);
        g = self.enc_bn[0].backward(&self.store, &tape.bn[0], &g, grads.as_deref_mut());
        self.first
            .backward(&self.store, &tape.first, &g, grads, need_dz)
    }

    /// Fold the batch statistics of a training-mode pass into running statistics.
    pub fn update_running_stats(&mut self, tape: &GenTape<T>) {
        let d = self.spec.depth();
        let mut it = tape.bn.iter();
        for i in 0..d {
            self.enc_bn[i].update_running(&mut self.store, it.next().expect("bn cache"));
        }
        for j in 0..d - 1 {
            self.dec_bn[j].update_running(&mut self.store, it.next().expect("bn cache"));
        }
    }

    /// `G(z, c)` in inference mode for a single sample.
    pub fn generate(&self, z: &LatentVector, map: &SemanticMap) -> Result<ImageTensor> {
        Ok(self.generate_batch(&[z], &[map])?.remove(0))
    }

    pub fn generate_batch(
        &self,
        zs: &[&LatentVector],
        maps: &[&SemanticMap],
    ) -> Result<Vec<ImageTensor>> {
        if zs.len() != maps.len() || zs.is_empty() {
            return Err(Error::Shape("need one latent per map".into()));
        }
        for z in zs {
            if z.dim() != self.spec.latent_dim {
                return Err(Error::Shape(format!(
                    "latent dimension {} but the generator expects {}",
                    z.dim(),
                    self.spec.latent_dim
                )));
            }
        }
        for m in maps {
            check_resolution(
                "semantic map",
                (m.height(), m.width()),
                self.spec.resolution,
            )?;
        }
        let (out, _) = self.forward(&latents_to_vec(zs), &maps_to_tensor(maps), Mode::Eval);
        if !out.is_finite() {
            return Err(Error::NonFinite("generator activations".into()));
        }
        (0..zs.len()).map(|n| tensor_to_image(&out, n)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator<T = f32> {
    spec: DiscriminatorSpec,
    store: ParamStore<T>,
    convs: Vec<Conv2d>,
    bns: Vec<Option<BatchNorm2d>>,
    linear: Linear,
}

#[derive(Debug, Clone)]
pub struct DiscTape<T> {
    convs: Vec<ConvCache<T>>,
    bns: Vec<Option<BnCache<T>>>,
    act_out: Vec<Tensor<T>>,
    image_channels: usize,
    pub shapes: Vec<(String, [usize; 3])>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(spec: DiscriminatorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_from(seed);
        let mut store = ParamStore::new();
        let layers = spec.conv_layers();
        let mut convs = Vec::new();
        let mut bns = Vec::new();
        for i in 0..layers {
            let cin = if i == 0 {
                3 + MAP_CHANNELS
            } else {
                spec.filters(i - 1)
            };
            convs.push(Conv2d::new(
                &mut store,
                &format!("conv{i}"),
                cin,
                spec.filters(i),
                i == 0,
                INIT_STD,
                &mut rng,
            ));
            bns.push(
                (i > 0)
                    .then(|| BatchNorm2d::new(&mut store, &format!("conv{i}_bn"), spec.filters(i))),
            );
        }
        let linear = Linear::new(
            &mut store,
            "linear",
            spec.filters(layers - 1) * 16,
            1,
            INIT_STD,
            &mut rng,
        );
        Ok(Discriminator {
            spec,
            store,
            convs,
            bns,
            linear,
        })
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn params(&self) -> ModelParams<T> {
        ModelParams {
            spec: NetworkSpec::Discriminator(self.spec),
            store: self.store.clone(),
        }
    }

    pub fn from_params(params: ModelParams<T>) -> Result<Self> {
        let NetworkSpec::Discriminator(spec) = params.spec else {
            return Err(Error::Shape(
                "parameters describe a generator, not a discriminator".into(),
            ));
        };
        let mut d = Discriminator::new(spec, 0)?;
        adopt_store(&mut d.store, params.store)?;
        Ok(d)
    }

    pub fn cast<U: Scalar>(&self) -> Discriminator<U> {
        Discriminator {
            spec: self.spec,
            store: self.store.cast(),
            convs: self.convs.clone(),
            bns: self.bns.clone(),
            linear: self.linear.clone(),
        }
    }

    /// Returns one logit per sample; `sigmoid(logit)` is the probability of
    /// the (image, map) pair being real.
    pub fn forward(
        &self,
        images: &Tensor<T>,
        maps: &Tensor<T>,
        mode: Mode,
    ) -> (Vec<T>, DiscTape<T>) {
        let mut h = Tensor::concat_channels(images, maps);
        let mut convs = Vec::new();
        let mut bns = Vec::new();
        let mut act_out = Vec::new();
        let mut shapes = Vec::new();
        for (i, (conv, bn)) in self.convs.iter().zip(&self.bns).enumerate() {
            let (x, cc) = conv.forward(&self.store, &h);
            convs.push(cc);
            let x = match bn {
                Some(bn) => {
                    let (x, c) = bn.forward(&self.store, &x, mode);
                    bns.push(Some(c));
                    x
                }
                None => {
                    bns.push(None);
                    x
                }
            };
            h = act::leaky_relu(x);
            shapes.push((format!("conv{i}"), [h.channels(), h.height(), h.width()]));
            act_out.push(h.clone());
        }
        let logits = self.linear.forward(&self.store, &h);
        shapes.push(("linear".into(), [1, 1, 1]));
        (
            logits,
            DiscTape {
                convs,
                bns,
                act_out,
                image_channels: images.channels(),
                shapes,
            },
        )
    }

    /// Backpropagate logit gradients; returns the gradient w.r.t. the image
    /// channels of the input when `need_dimage`.
    pub fn backward(
        &self,
        tape: &DiscTape<T>,
        dlogits: &[T],
        mut grads: Option<&mut Grads<T>>,
        need_dimage: bool,
    ) -> Option<Tensor<T>> {
        let last = tape.act_out.last().expect("at least one conv");
        let mut g = self
            .linear
            .backward(&self.store, last, dlogits, grads.as_deref_mut(), true)
            .expect("dx requested");
        for i in (0..self.convs.len()).rev() {
            g = act::leaky_relu_backward(&tape.act_out[i], g);
            if let (Some(bn), Some(c)) = (&self.bns[i], &tape.bns[i]) {
                g = bn.backward(&self.store, c, &g, grads.as_deref_mut());
            }
            let need_dx = i > 0 || need_dimage;
            {
                let dx = self.convs[i].backward(
                    &self.store,
                    &tape.convs[i],
                    &g,
                    grads.as_deref_mut(),
                    need_dx,
                )?;
                g = dx
            }
        }
        Some(g.leading_channels(tape.image_channels))
    }

    pub fn update_running_stats(&mut self, tape: &DiscTape<T>) {
        for (bn, c) in self.bns.iter().zip(&tape.bns) {
            if let (Some(bn), Some(c)) = (bn, c) {
                bn.update_running(&mut self.store, c);
            }
        }
    }

    /// `D(x, c)` in inference mode.
    pub fn score(&self, image: &ImageTensor, map: &SemanticMap) -> Result<f64> {
        check_resolution(
            "image",
            (image.height(), image.width()),
            self.spec.resolution,
        )?;
        check_resolution(
            "semantic map",
            (map.height(), map.width()),
            self.spec.resolution,
        )?;
        let (logits, _) = self.forward(
            &images_to_tensor(&[image]),
            &maps_to_tensor(&[map]),
            Mode::Eval,
        );
        let p = act::sigmoid(logits[0]).to_f64().unwrap_or(f64::NAN);
        if !p.is_finite() {
            return Err(Error::NonFinite("discriminator output".into()));
        }
        Ok(p)
    }
}

fn adopt_store<T: Scalar>(target: &mut ParamStore<T>, source: ParamStore<T>) -> Result<()> {
    if target.len() != source.len() {
        return Err(Error::Shape(format!(
            "expected {} tensors, found {}",
            target.len(),
            source.len()
        )));
    }
    for (dst, src) in target.entries_mut().iter_mut().zip(source.entries()) {
        if dst.name != src.name || dst.shape != src.shape || dst.trainable != src.trainable {
            return Err(Error::Shape(format!(
                "tensor {} {:?} does not match expected {} {:?}",
                src.name, src.shape, dst.name, dst.shape
            )));
        }
        dst.data.clone_from(&src.data);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantic_map::{render_map, synth_landmarks, FacePose};

    fn small_gen(res: usize) -> Generator<f32> {
        Generator::new(
            GeneratorSpec {
                resolution: res,
                latent_dim: 8,
                base_filters: 4,
                max_filters: 32,
            },
            3,
        )
        .unwrap()
    }

    fn face_map(res: usize) -> SemanticMap {
        let lms = synth_landmarks(&FacePose::centered(res), res, res).unwrap();
        render_map(&lms, res, res)
    }

    #[test]
    fn tile_latent_repeats_code_everywhere() {
        let z = LatentVector::new(vec![0.5, -0.5]).unwrap();
        let t = tile_latent(&z, 2, 2);
        assert_eq!(t, vec![0.5, -0.5, 0.5, -0.5, 0.5, -0.5, 0.5, -0.5]);
        let z = LatentVector::sample(100, &mut rng_from(1));
        let t = tile_latent(&z, 64, 64);
        assert_eq!(t.len(), 64 * 64 * 100);
        let sum_k: f64 = t.iter().skip(7).step_by(100).sum();
        assert!((sum_k - 64.0 * 64.0 * z.values()[7]).abs() < 1e-9);
    }

    #[test]
    fn latent_rejects_out_of_range() {
        assert!(LatentVector::new(vec![0.0, 1.01]).is_err());
    }

    #[test]
    fn layer_counts_follow_resolution() {
        assert_eq!(DiscriminatorSpec::new(64).conv_layers(), 4);
        assert_eq!(DiscriminatorSpec::new(128).conv_layers(), 5);
        assert_eq!(GeneratorSpec::new(64).depth(), 4);
        assert!(GeneratorSpec::new(48).validate().is_err());
    }

    #[test]
    fn realized_shapes_match_declared_shapes() {
        for res in [32, 64, 128] {
            let g = small_gen(res);
            let z = vec![0.1f32; 8];
            let maps = maps_to_tensor::<f32>(&[&face_map(res)]);
            let (out, tape) = g.forward(&z, &maps, Mode::Eval);
            assert_eq!(tape.shapes, g.spec().layer_shapes(), "generator at {res}");
            assert_eq!(out.shape(), [1, 3, res, res]);

            let d = Discriminator::<f32>::new(
                DiscriminatorSpec {
                    resolution: res,
                    base_filters: 4,
                    max_filters: 32,
                },
                5,
            )
            .unwrap();
            let (_, dt) = d.forward(&out, &maps, Mode::Eval);
            assert_eq!(dt.shapes, d.spec().layer_shapes(), "discriminator at {res}");
            assert_eq!(dt.shapes[dt.shapes.len() - 2].1[1..], [4, 4]);
        }
    }

    #[test]
    fn generator_output_is_tanh_bounded_and_deterministic() {
        let g = small_gen(32);
        let z = LatentVector::sample(8, &mut rng_from(4));
        let map = face_map(32);
        let a = g.generate(&z, &map).unwrap();
        let b = g.generate(&z, &map).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.height(), a.width(), a.channels()), (32, 32, 3));
        assert!(a.data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let g = small_gen(32);
        let z = LatentVector::sample(8, &mut rng_from(4));
        assert!(matches!(
            g.generate(&z, &face_map(64)),
            Err(Error::Shape(_))
        ));
        let wrong = LatentVector::sample(9, &mut rng_from(4));
        assert!(matches!(
            g.generate(&wrong, &face_map(32)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn discriminator_score_is_a_probability() {
        let d = Discriminator::<f32>::new(DiscriminatorSpec::new(32), 1).unwrap();
        let img = ImageTensor::filled(32, 32, 3, 0.3);
        let p = d.score(&img, &face_map(32)).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn from_params_round_trip_and_kind_check() {
        let g = small_gen(32);
        let back = Generator::from_params(g.params()).unwrap();
        assert_eq!(back.store(), g.store());
        let d = Discriminator::<f32>::new(DiscriminatorSpec::new(32), 1).unwrap();
        assert!(Generator::from_params(d.params()).is_err());
    }
}
