//! Central finite-difference checks of every backward pass, in f64. Each
//! check records one relative error per parameter or input it probes.

use rand::Rng;
use semgan::models::{Discriminator, DiscriminatorSpec, Generator, GeneratorSpec};
use semgan::nn::act;
use semgan::nn::conv::{Conv2d, ConvTranspose2d, LatentMapConv};
use semgan::nn::linear::Linear;
use semgan::nn::norm::BatchNorm2d;
use semgan::nn::{Mode, ParamStore, Tensor};
use semgan::seed::rng_from;

const STEP: f64 = 1e-3;
/// Whole networks stack ReLU/LeakyReLU after BatchNorm; a 1e-3 step moves
/// enough pre-activations across zero to bias the difference quotient.
const NETWORK_STEP: f64 = 1e-6;
pub const TOL: f64 = 1e-4;

fn random_vec(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_tensor(shape: [usize; 4], rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_vec(shape, random_vec(shape.iter().product(), rng))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Relative error `||a - n|| / (||a|| + ||n||)`.
fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    if na + nn == 0.0 {
        0.0
    } else {
        diff / (na + nn)
    }
}

/// Central difference of `loss` at the scalars reachable through `slot`.
fn numeric<S>(
    state: &mut S,
    indices: &[usize],
    slot: impl Fn(&mut S, usize) -> &mut f64,
    loss: impl Fn(&S) -> f64,
) -> Vec<f64> {
    numeric_step(state, STEP, indices, slot, loss)
}

fn numeric_step<S>(
    state: &mut S,
    step: f64,
    indices: &[usize],
    slot: impl Fn(&mut S, usize) -> &mut f64,
    loss: impl Fn(&S) -> f64,
) -> Vec<f64> {
    indices
        .iter()
        .map(|&i| {
            let orig = *slot(state, i);
            *slot(state, i) = orig + step;
            let up = loss(state);
            *slot(state, i) = orig - step;
            let down = loss(state);
            *slot(state, i) = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

fn sample_indices(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        let mut rng = rng_from(len as u64);
        (0..max).map(|_| rng.gen_range(0..len)).collect()
    }
}

#[derive(Debug, Default)]
pub struct Report {
    pub errors: Vec<(String, f64)>,
}

impl Report {
    fn close(&mut self, label: &str, analytic: &[f64], indices: &[usize], numeric: &[f64]) {
        let picked: Vec<f64> = indices.iter().map(|&i| analytic[i]).collect();
        self.errors
            .push((label.to_string(), rel_err(&picked, numeric)));
    }

    pub fn worst(&self) -> (&str, f64) {
        self.errors.iter().fold(
            ("", 0.0),
            |acc, (l, e)| if *e > acc.1 { (l.as_str(), *e) } else { acc },
        )
    }
}

struct Net {
    store: ParamStore<f64>,
    x: Tensor<f64>,
}

fn param_slot(s: &mut Net, entry: usize, i: usize) -> &mut f64 {
    &mut s.store.entries_mut()[entry].data[i]
}

fn check_store_and_input(
    rep: &mut Report,
    label: &str,
    net: &mut Net,
    analytic_params: &[Vec<f64>],
    analytic_dx: Option<&Tensor<f64>>,
    loss: impl Fn(&Net) -> f64,
) {
    for e in 0..net.store.len() {
        if !net.store.entries()[e].trainable {
            continue;
        }
        let idx = sample_indices(net.store.entries()[e].data.len(), 60);
        let num = numeric(net, &idx, |s, i| param_slot(s, e, i), &loss);
        let name = net.store.entries()[e].name.clone();
        rep.close(&format!("{label} {name}"), &analytic_params[e], &idx, &num);
    }
    if let Some(dx) = analytic_dx {
        let idx = sample_indices(dx.data().len(), 80);
        let num = numeric(net, &idx, |s, i| &mut s.x.data_mut()[i], &loss);
        rep.close(&format!("{label} input"), dx.data(), &idx, &num);
    }
}

pub fn conv2d_gradients(rep: &mut Report) {
    let mut rng = rng_from(1);
    let mut store = ParamStore::new();
    let conv = Conv2d::new(&mut store, "c", 3, 4, true, 0.3, &mut rng);
    let x = random_tensor([2, 3, 8, 8], &mut rng);
    let r = random_tensor([2, 4, 4, 4], &mut rng);
    let mut net = Net { store, x };
    let (_, cache) = conv.forward(&net.store, &net.x);
    let mut grads = net.store.zero_grads();
    let dx = conv
        .backward(&net.store, &cache, &r, Some(&mut grads), true)
        .unwrap();
    let loss = |n: &Net| dot(conv.forward(&n.store, &n.x).0.data(), r.data());
    check_store_and_input(rep, "conv", &mut net, grads.buffers(), Some(&dx), loss);
}

pub fn conv_transpose_gradients(rep: &mut Report) {
    let mut rng = rng_from(2);
    let mut store = ParamStore::new();
    let conv = ConvTranspose2d::new(&mut store, "t", 4, 3, true, 0.3, &mut rng);
    let x = random_tensor([2, 4, 4, 4], &mut rng);
    let r = random_tensor([2, 3, 8, 8], &mut rng);
    let mut net = Net { store, x };
    let (y, cache) = conv.forward(&net.store, &net.x);
    assert_eq!(y.shape(), [2, 3, 8, 8]);
    let mut grads = net.store.zero_grads();
    let dx = conv
        .backward(&net.store, &cache, &r, Some(&mut grads), true)
        .unwrap();
    let loss = |n: &Net| dot(conv.forward(&n.store, &n.x).0.data(), r.data());
    check_store_and_input(rep, "convT", &mut net, grads.buffers(), Some(&dx), loss);
}

pub fn batchnorm_train_mode_gradients(rep: &mut Report) {
    let mut rng = rng_from(3);
    let mut store = ParamStore::new();
    let bn = BatchNorm2d::new(&mut store, "bn", 4);
    for e in store.entries_mut().iter_mut().filter(|e| e.trainable) {
        for v in e.data.iter_mut() {
            *v += rng.gen_range(-0.5..0.5);
        }
    }
    let x = random_tensor([3, 4, 4, 4], &mut rng);
    let r = random_tensor([3, 4, 4, 4], &mut rng);
    let mut net = Net { store, x };
    let (_, cache) = bn.forward(&net.store, &net.x, Mode::Train);
    let mut grads = net.store.zero_grads();
    let dx = bn.backward(&net.store, &cache, &r, Some(&mut grads));
    let loss = |n: &Net| dot(bn.forward(&n.store, &n.x, Mode::Train).0.data(), r.data());
    check_store_and_input(rep, "bn", &mut net, grads.buffers(), Some(&dx), loss);
}

pub fn batchnorm_eval_mode_gradients(rep: &mut Report) {
    let mut rng = rng_from(4);
    let mut store = ParamStore::new();
    let bn = BatchNorm2d::new(&mut store, "bn", 2);
    store.find_mut("bn.running_mean").unwrap().data = vec![0.3, -0.2];
    store.find_mut("bn.running_var").unwrap().data = vec![1.7, 0.4];
    let x = random_tensor([2, 2, 3, 3], &mut rng);
    let r = random_tensor([2, 2, 3, 3], &mut rng);
    let mut net = Net { store, x };
    let (_, cache) = bn.forward(&net.store, &net.x, Mode::Eval);
    let mut grads = net.store.zero_grads();
    let dx = bn.backward(&net.store, &cache, &r, Some(&mut grads));
    let loss = |n: &Net| dot(bn.forward(&n.store, &n.x, Mode::Eval).0.data(), r.data());
    check_store_and_input(rep, "bn eval", &mut net, grads.buffers(), Some(&dx), loss);
}

pub fn activation_gradients(rep: &mut Report) {
    let mut rng = rng_from(5);
    // Keep inputs away from the LeakyReLU kink.
    let data: Vec<f64> = random_vec(64, &mut rng)
        .into_iter()
        .map(|v| if v.abs() < 0.01 { 0.5 } else { v })
        .collect();
    let r = random_vec(64, &mut rng);
    let shape = [1, 4, 4, 4];
    for (label, fwd, bwd) in [
        (
            "leaky_relu",
            act::leaky_relu::<f64> as fn(Tensor<f64>) -> Tensor<f64>,
            act::leaky_relu_backward::<f64> as fn(&Tensor<f64>, Tensor<f64>) -> Tensor<f64>,
        ),
        ("relu", act::relu::<f64>, act::relu_backward::<f64>),
        ("tanh", act::tanh::<f64>, act::tanh_backward::<f64>),
    ] {
        let mut x = Tensor::from_vec(shape, data.clone());
        let out = fwd(x.clone());
        let dx = bwd(&out, Tensor::from_vec(shape, r.clone()));
        let idx: Vec<usize> = (0..64).collect();
        let num = numeric(
            &mut x,
            &idx,
            |x, i| &mut x.data_mut()[i],
            |x| dot(fwd(x.clone()).data(), &r),
        );
        rep.close(label, dx.data(), &idx, &num);
    }
}

pub fn linear_sigmoid_gradients(rep: &mut Report) {
    let mut rng = rng_from(6);
    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "fc", 12, 2, 0.3, &mut rng);
    let x = random_tensor([3, 3, 2, 2], &mut rng);
    let r = random_vec(6, &mut rng);
    let mut net = Net { store, x };
    let logits = lin.forward(&net.store, &net.x);
    let dlogits: Vec<f64> = logits
        .iter()
        .zip(&r)
        .map(|(&l, &rr)| {
            let s = act::sigmoid(l);
            rr * s * (1.0 - s)
        })
        .collect();
    let mut grads = net.store.zero_grads();
    let dx = lin
        .backward(&net.store, &net.x, &dlogits, Some(&mut grads), true)
        .unwrap();
    let loss = |n: &Net| {
        let l = lin.forward(&n.store, &n.x);
        l.iter().zip(&r).map(|(&v, &rr)| rr * act::sigmoid(v)).sum()
    };
    check_store_and_input(
        rep,
        "linear+sigmoid",
        &mut net,
        grads.buffers(),
        Some(&dx),
        loss,
    );
}

struct LatentNet {
    store: ParamStore<f64>,
    z: Vec<f64>,
    map: Tensor<f64>,
}

pub fn latent_map_conv_gradients(rep: &mut Report) {
    let mut rng = rng_from(7);
    let mut store = ParamStore::new();
    let layer = LatentMapConv::new(&mut store, "lm", 5, 3, 4, 0.3, &mut rng);
    let z = random_vec(2 * 5, &mut rng);
    let map = random_tensor([2, 3, 8, 8], &mut rng);
    let r = random_tensor([2, 4, 4, 4], &mut rng);
    let mut net = LatentNet { store, z, map };
    let (_, cache) = layer.forward(&net.store, &net.z, &net.map);
    let mut grads = net.store.zero_grads();
    let dz = layer
        .backward(&net.store, &cache, &r, Some(&mut grads), true)
        .unwrap();
    let loss = |n: &LatentNet| dot(layer.forward(&n.store, &n.z, &n.map).0.data(), r.data());

    let idx = sample_indices(net.store.entries()[0].data.len(), 80);
    let num = numeric(
        &mut net,
        &idx,
        |s, i| &mut s.store.entries_mut()[0].data[i],
        loss,
    );
    rep.close("latent-map weight", &grads.buffers()[0], &idx, &num);

    let idx: Vec<usize> = (0..10).collect();
    let num = numeric(&mut net, &idx, |s, i| &mut s.z[i], loss);
    rep.close("latent-map z", &dz, &idx, &num);
}

pub fn latent_map_conv_equals_tiled_concat_convolution() {
    let mut rng = rng_from(8);
    let (k, c, o) = (6, 3, 5);
    let mut store = ParamStore::new();
    let layer = LatentMapConv::new(&mut store, "lm", k, c, o, 0.3, &mut rng);
    let mut ref_store = ParamStore::new();
    let conv = Conv2d::new(&mut ref_store, "c", k + c, o, false, 0.3, &mut rng);
    ref_store.entries_mut()[0].data = store.entries()[0].data.clone();

    let z = random_vec(2 * k, &mut rng);
    let map = random_tensor([2, c, 16, 16], &mut rng);
    let mut tiled = Tensor::zeros([2, k, 16, 16]);
    for n in 0..2 {
        for ch in 0..k {
            tiled.sample_mut(n)[ch * 256..(ch + 1) * 256].fill(z[n * k + ch]);
        }
    }
    let (fast, _) = layer.forward(&store, &z, &map);
    let (slow, _) = conv.forward(&ref_store, &Tensor::concat_channels(&tiled, &map));
    let max = fast
        .data()
        .iter()
        .zip(slow.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(max < 1e-12, "max difference {max:e}");
}

fn mini_specs() -> (GeneratorSpec, DiscriminatorSpec) {
    (
        GeneratorSpec {
            resolution: 32,
            latent_dim: 4,
            base_filters: 2,
            max_filters: 8,
        },
        DiscriminatorSpec {
            resolution: 32,
            base_filters: 2,
            max_filters: 8,
        },
    )
}

struct GenNet {
    g: Generator<f64>,
    z: Vec<f64>,
}

pub fn generator_gradients_train_mode(rep: &mut Report) {
    let mut rng = rng_from(9);
    let (gs, _) = mini_specs();
    let g = Generator::<f64>::new(gs, 11).unwrap();
    let z = random_vec(2 * 4, &mut rng);
    let maps = random_tensor([2, 3, 32, 32], &mut rng);
    let r = random_tensor([2, 3, 32, 32], &mut rng);
    let mut net = GenNet { g, z };
    let (_, tape) = net.g.forward(&net.z, &maps, Mode::Train);
    let mut grads = net.g.store().zero_grads();
    let dz = net
        .g
        .backward(&tape, r.clone(), Some(&mut grads), true)
        .unwrap();
    let loss = |n: &GenNet| dot(n.g.forward(&n.z, &maps, Mode::Train).0.data(), r.data());

    let idx: Vec<usize> = (0..8).collect();
    let num = numeric_step(&mut net, NETWORK_STEP, &idx, |s, i| &mut s.z[i], loss);
    rep.close("generator z", &dz, &idx, &num);

    for e in 0..net.g.store().len() {
        if !net.g.store().entries()[e].trainable {
            continue;
        }
        let idx = sample_indices(net.g.store().entries()[e].data.len(), 12);
        let num = numeric_step(
            &mut net,
            NETWORK_STEP,
            &idx,
            |s, i| &mut s.g.store_mut().entries_mut()[e].data[i],
            loss,
        );
        let name = net.g.store().entries()[e].name.clone();
        rep.close(
            &format!("generator {name}"),
            &grads.buffers()[e],
            &idx,
            &num,
        );
    }
}

pub fn generator_latent_gradient_eval_mode(rep: &mut Report) {
    let mut rng = rng_from(10);
    let (gs, _) = mini_specs();
    let g = Generator::<f64>::new(gs, 12).unwrap();
    let mut z = random_vec(4, &mut rng);
    let maps = random_tensor([1, 3, 32, 32], &mut rng);
    let r = random_tensor([1, 3, 32, 32], &mut rng);
    let (_, tape) = g.forward(&z, &maps, Mode::Eval);
    let dz = g.backward(&tape, r.clone(), None, true).unwrap();
    let idx: Vec<usize> = (0..4).collect();
    let num = numeric(
        &mut z,
        &idx,
        |z, i| &mut z[i],
        |z| dot(g.forward(z, &maps, Mode::Eval).0.data(), r.data()),
    );
    rep.close("generator eval z", &dz, &idx, &num);
}

struct DiscNet {
    d: Discriminator<f64>,
    x: Tensor<f64>,
}

pub fn discriminator_gradients(rep: &mut Report) {
    let mut rng = rng_from(13);
    let (_, ds) = mini_specs();
    let d = Discriminator::<f64>::new(ds, 14).unwrap();
    let x = random_tensor([3, 3, 32, 32], &mut rng);
    let maps = random_tensor([3, 3, 32, 32], &mut rng);
    let r = random_vec(3, &mut rng);
    let mut net = DiscNet { d, x };
    let (_, tape) = net.d.forward(&net.x, &maps, Mode::Train);
    let mut grads = net.d.store().zero_grads();
    let dx = net.d.backward(&tape, &r, Some(&mut grads), true).unwrap();
    assert_eq!(dx.shape(), [3, 3, 32, 32]);
    let loss = |n: &DiscNet| dot(&n.d.forward(&n.x, &maps, Mode::Train).0, &r);

    let idx = sample_indices(dx.data().len(), 40);
    let num = numeric_step(
        &mut net,
        NETWORK_STEP,
        &idx,
        |s, i| &mut s.x.data_mut()[i],
        loss,
    );
    rep.close("discriminator image", dx.data(), &idx, &num);

    for e in 0..net.d.store().len() {
        if !net.d.store().entries()[e].trainable {
            continue;
        }
        let idx = sample_indices(net.d.store().entries()[e].data.len(), 12);
        let num = numeric_step(
            &mut net,
            NETWORK_STEP,
            &idx,
            |s, i| &mut s.d.store_mut().entries_mut()[e].data[i],
            loss,
        );
        let name = net.d.store().entries()[e].name.clone();
        rep.close(
            &format!("discriminator {name}"),
            &grads.buffers()[e],
            &idx,
            &num,
        );
    }
}

pub fn inpainting_objective_latent_gradient(rep: &mut Report) {
    use semgan::imaging::{CorruptionMask, ImageTensor};
    use semgan::inpainting::{InpaintModel, Objective};
    use semgan::semantic_map::{render_map, synth_landmarks, FacePose};

    let mut rng = rng_from(15);
    let (gs, ds) = mini_specs();
    // At the default init scale the eval-mode output barely depends on z;
    // much larger weights saturate tanh and the score clamp.
    let mut g = Generator::<f64>::new(gs, 16).unwrap();
    for e in g
        .store_mut()
        .entries_mut()
        .iter_mut()
        .filter(|e| e.trainable)
    {
        e.data.iter_mut().for_each(|v| *v *= 2.0);
    }
    let model = InpaintModel::new(g, Discriminator::<f64>::new(ds, 17).unwrap(), 1).unwrap();
    let corrupted = ImageTensor::new(32, 32, 3, random_vec(3072, &mut rng)).unwrap();
    let mask = CorruptionMask::new(
        32,
        32,
        (0..1024).map(|i| ((i / 32) % 3 != 0) as u8).collect(),
    )
    .unwrap();
    let map = render_map(
        &synth_landmarks(&FacePose::centered(32), 32, 32).unwrap(),
        32,
        32,
    );
    let obj = Objective::<f64>::new(&corrupted, &mask, &map, 0.1, true).unwrap();

    let mut z = random_vec(4, &mut rng);
    let (_, dz) = obj.evaluate(&model, &z, true);
    let idx: Vec<usize> = (0..4).collect();
    let num = numeric(
        &mut z,
        &idx,
        |z, i| &mut z[i],
        |z| obj.evaluate(&model, z, false).0.total,
    );
    rep.close("inpainting total", &dz.unwrap(), &idx, &num);
}

/// Every gradient check, with the difference step it uses.
pub fn all() -> Vec<(&'static str, f64, fn(&mut Report))> {
    vec![
        ("conv2d", STEP, conv2d_gradients),
        ("conv-transpose", STEP, conv_transpose_gradients),
        ("batchnorm train", STEP, batchnorm_train_mode_gradients),
        ("batchnorm eval", STEP, batchnorm_eval_mode_gradients),
        ("activations", STEP, activation_gradients),
        ("linear+sigmoid", STEP, linear_sigmoid_gradients),
        ("latent-map conv", STEP, latent_map_conv_gradients),
        (
            "generator eval z",
            STEP,
            generator_latent_gradient_eval_mode,
        ),
        (
            "inpainting total wrt z",
            STEP,
            inpainting_objective_latent_gradient,
        ),
        (
            "generator train",
            NETWORK_STEP,
            generator_gradients_train_mode,
        ),
        ("discriminator train", NETWORK_STEP, discriminator_gradients),
    ]
}
