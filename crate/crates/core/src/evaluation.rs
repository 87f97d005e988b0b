//! Quantitative protocols: correctness (PSNR against the clean source),
//! consistency over pseudo-sequences, and reconstruction of training pairs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{psnr, CorruptionMask, ImageTensor};
use crate::inpainting::{frame_seed, optimize_latent, InpaintConfig, InpaintModel};
use crate::masks::{make_mask, make_sequence_masks, MaskKind, MaskSpec};
use crate::models::{images_to_tensor, maps_to_tensor, Generator, LatentVector};
use crate::nn::{Mode, Scalar, Tensor};
use crate::seed::{derive_seed, rng_for};
use crate::semantic_map::SemanticMap;
use crate::training::PairedSample;

/// Value written into corrupted pixels (black).
pub const CORRUPT_FILL: f64 = -1.0;

/// `N` corrupted variants of one source image.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSequence {
    source: ImageTensor,
    frames: Vec<ImageTensor>,
    masks: Vec<CorruptionMask>,
    kind: MaskKind,
}

impl PseudoSequence {
    /// Frames must agree with `source` on their own known pixels.
    pub fn new(
        source: ImageTensor,
        frames: Vec<ImageTensor>,
        masks: Vec<CorruptionMask>,
        kind: MaskKind,
    ) -> Result<Self> {
        if frames.len() < 2 || frames.len() != masks.len() {
            return Err(Error::InvalidArgument(format!(
                "a sequence needs at least 2 frames with one mask each ({} frames, {} masks)",
                frames.len(),
                masks.len()
            )));
        }
        let c = source.channels();
        for (f, m) in frames.iter().zip(&masks) {
            f.check_same_shape(&source)?;
            m.check_matches(f)?;
            for (i, &bit) in m.data().iter().enumerate() {
                if bit == 1 && f.data()[i * c..(i + 1) * c] != source.data()[i * c..(i + 1) * c] {
                    return Err(Error::InvalidArgument(
                        "frame differs from the source on a known pixel".into(),
                    ));
                }
            }
        }
        Ok(PseudoSequence {
            source,
            frames,
            masks,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn source(&self) -> &ImageTensor {
        &self.source
    }

    pub fn frames(&self) -> &[ImageTensor] {
        &self.frames
    }

    pub fn masks(&self) -> &[CorruptionMask] {
        &self.masks
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }
}

/// Corrupt `source` with the `n` masks of a `kind` sequence, filling holes with black.
pub fn make_pseudo_sequence(
    source: &ImageTensor,
    kind: MaskKind,
    n: usize,
    seed: u64,
) -> Result<PseudoSequence> {
    let masks = make_sequence_masks(kind, n, seed, source.height(), source.width())?;
    let frames = masks
        .iter()
        .map(|m| m.apply(source, CORRUPT_FILL))
        .collect::<Result<Vec<_>>>()?;
    PseudoSequence::new(source.clone(), frames, masks, kind)
}

/// Mean PSNR over the `N(N-1)/2` unordered frame pairs.
pub fn consistency(frames: &[ImageTensor]) -> Result<f64> {
    consistency_with(frames, |_, _| {})
}

/// [`consistency`], calling `on_pair(i, j)` for each pair evaluated.
pub fn consistency_with(
    frames: &[ImageTensor],
    mut on_pair: impl FnMut(usize, usize),
) -> Result<f64> {
    let n = frames.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "consistency needs at least 2 frames, got {n}"
        )));
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            on_pair(i, j);
            sum += psnr(&frames[i], &frames[j])?;
        }
    }
    Ok(sum / (n * (n - 1) / 2) as f64)
}

/// Anything that fills the holes of a corrupted image.
pub trait Inpainter: Sync {
    fn inpaint(
        &self,
        corrupted: &ImageTensor,
        mask: &CorruptionMask,
        map: &SemanticMap,
        seed: u64,
    ) -> Result<ImageTensor>;
}

impl<F> Inpainter for F
where
    F: Fn(&ImageTensor, &CorruptionMask, &SemanticMap, u64) -> Result<ImageTensor> + Sync,
{
    fn inpaint(
        &self,
        corrupted: &ImageTensor,
        mask: &CorruptionMask,
        map: &SemanticMap,
        seed: u64,
    ) -> Result<ImageTensor> {
        self(corrupted, mask, map, seed)
    }
}

/// Latent-search inpainting with a fixed configuration; the per-call seed
/// replaces `config.seed`.
pub struct LatentInpainter<'a, T: Scalar> {
    pub model: &'a InpaintModel<T>,
    pub config: InpaintConfig,
}

impl<T: Scalar> Inpainter for LatentInpainter<'_, T> {
    fn inpaint(
        &self,
        corrupted: &ImageTensor,
        mask: &CorruptionMask,
        map: &SemanticMap,
        seed: u64,
    ) -> Result<ImageTensor> {
        let cfg = InpaintConfig {
            seed,
            ..self.config.clone()
        };
        Ok(optimize_latent(self.model, corrupted, mask, map, &cfg)?.inpainted)
    }
}

/// A named evaluation input.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSample {
    pub name: String,
    pub sample: PairedSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub seed: u64,
    /// Worker threads for the per-item fan-out.
    pub jobs: usize,
    /// Frames per pseudo-sequence.
    pub n: usize,
    pub kinds: Vec<MaskKind>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seed: 0,
            jobs: 1,
            n: 5,
            kinds: vec![MaskKind::Central, MaskKind::Freehand, MaskKind::Left],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Correctness,
    Consistency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportItem {
    pub name: String,
    pub kind: String,
    /// PSNR (correctness) or mean pairwise PSNR (consistency), in dB.
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub kind: String,
    pub mean: Option<f64>,
    pub count: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub meta: serde_json::Value,
    pub items: Vec<ReportItem>,
    pub aggregates: Vec<Aggregate>,
    pub failed: usize,
}

fn kind_label(protocol: Protocol, kind: MaskKind) -> String {
    match (protocol, kind) {
        (Protocol::Consistency, MaskKind::Central) => "random-central".into(),
        (Protocol::Consistency, MaskKind::Freehand) => "random-freehand".into(),
        _ => kind.name().into(),
    }
}

impl EvalReport {
    fn assemble(
        protocol: Protocol,
        kinds: &[MaskKind],
        items: Vec<ReportItem>,
        meta: serde_json::Value,
    ) -> Self {
        let aggregates = kinds
            .iter()
            .map(|&k| {
                let label = kind_label(protocol, k);
                let of_kind: Vec<&ReportItem> = items.iter().filter(|i| i.kind == label).collect();
                let values: Vec<f64> = of_kind.iter().filter_map(|i| i.value).collect();
                Aggregate {
                    mean: (!values.is_empty())
                        .then(|| values.iter().sum::<f64>() / values.len() as f64),
                    count: values.len(),
                    failed: of_kind.len() - values.len(),
                    kind: label,
                }
            })
            .collect::<Vec<_>>();
        let failed = items.iter().filter(|i| i.value.is_none()).count();
        EvalReport {
            protocol,
            meta,
            items,
            aggregates,
            failed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table: one row per mask kind.
    pub fn to_table(&self) -> String {
        let title = match self.protocol {
            Protocol::Correctness => "PSNR (dB) against the uncorrupted image",
            Protocol::Consistency => "Mean pairwise PSNR (dB) within pseudo-sequences",
        };
        let mut s = format!(
            "{title}\n{:<18} {:>10} {:>7} {:>7}\n",
            "mask", "mean", "items", "failed"
        );
        for a in &self.aggregates {
            let mean = a.mean.map_or("-".to_string(), |m| format!("{m:.2}"));
            let _ = writeln!(
                s,
                "{:<18} {:>10} {:>7} {:>7}",
                a.kind, mean, a.count, a.failed
            );
        }
        s
    }

    /// `name,kind,value,error` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,kind,value,error\n");
        for i in &self.items {
            let value = i.value.map_or(String::new(), |v| v.to_string());
            let err = i.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            let _ = writeln!(s, "{},{},{},{}", i.name, i.kind, value, err);
        }
        s
    }

    /// Write `report.json`, `report.txt` and `items.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [
            ("report.json", self.to_json()),
            ("report.txt", self.to_table()),
            ("items.csv", self.to_csv()),
        ] {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

fn run_jobs<R: Send>(
    jobs: usize,
    n: usize,
    f: impl Fn(usize) -> R + Sync + Send,
) -> Result<Vec<R>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(&f).collect()))
}

fn item_seed(seed: u64, protocol: &str, kind: MaskKind, index: usize) -> u64 {
    derive_seed(seed, &format!("{protocol}-{}-{index}", kind.name()))
}

fn to_item(name: &str, kind: String, r: Result<f64>) -> ReportItem {
    match r {
        Ok(v) => ReportItem {
            name: name.to_string(),
            kind,
            value: Some(v),
            error: None,
        },
        Err(e) => ReportItem {
            name: name.to_string(),
            kind,
            value: None,
            error: Some(e.to_string()),
        },
    }
}

/// Corrupt every image with each mask kind, inpaint it and measure PSNR
/// against the original.
pub fn correctness_eval(
    inpainter: &dyn Inpainter,
    data: &[EvalSample],
    cfg: &EvalConfig,
    meta: serde_json::Value,
) -> Result<EvalReport> {
    let tasks: Vec<(usize, MaskKind)> = cfg
        .kinds
        .iter()
        .flat_map(|&k| (0..data.len()).map(move |i| (i, k)))
        .collect();
    let items = run_jobs(cfg.jobs, tasks.len(), |t| {
        let (i, kind) = tasks[t];
        let s = &data[i].sample;
        let seed = item_seed(cfg.seed, "correctness", kind, i);
        let value = (|| {
            let mask = make_mask(
                &MaskSpec::default_for(kind, seed),
                s.image.height(),
                s.image.width(),
            )?;
            let corrupted = mask.apply(&s.image, CORRUPT_FILL)?;
            let out = inpainter.inpaint(&corrupted, &mask, &s.map, seed)?;
            psnr(&out, &s.image)
        })();
        to_item(
            &data[i].name,
            kind_label(Protocol::Correctness, kind),
            value,
        )
    })?;
    Ok(EvalReport::assemble(
        Protocol::Correctness,
        &cfg.kinds,
        items,
        meta,
    ))
}

/// For each image and kind, inpaint an `n`-frame pseudo-sequence frame by
/// frame and report its consistency.
pub fn consistency_eval(
    inpainter: &dyn Inpainter,
    data: &[EvalSample],
    cfg: &EvalConfig,
    meta: serde_json::Value,
) -> Result<EvalReport> {
    if cfg.n < 2 {
        return Err(Error::InvalidArgument(format!(
            "sequence length {} must be at least 2",
            cfg.n
        )));
    }
    let tasks: Vec<(usize, MaskKind)> = cfg
        .kinds
        .iter()
        .flat_map(|&k| (0..data.len()).map(move |i| (i, k)))
        .collect();
    let items = run_jobs(cfg.jobs, tasks.len(), |t| {
        let (i, kind) = tasks[t];
        let s = &data[i].sample;
        let seed = item_seed(cfg.seed, "consistency", kind, i);
        let value = (|| {
            let seq = make_pseudo_sequence(&s.image, kind, cfg.n, seed)?;
            let outs = (0..seq.len())
                .map(|j| {
                    inpainter
                        .inpaint(
                            &seq.frames()[j],
                            &seq.masks()[j],
                            &s.map,
                            frame_seed(seed, j),
                        )
                        .map_err(|e| Error::Frame {
                            index: j,
                            source: Box::new(e),
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            consistency(&outs)
        })();
        to_item(
            &data[i].name,
            kind_label(Protocol::Consistency, kind),
            value,
        )
    })?;
    Ok(EvalReport::assemble(
        Protocol::Consistency,
        &cfg.kinds,
        items,
        meta,
    ))
}

/// For each pair `(x, c)`, the smallest mean absolute error between `x` and
/// `G(z, c)` over `n_z` latents drawn with `seed` (shared across pairs).
pub fn memorization_errors<T: Scalar>(
    g: &Generator<T>,
    data: &[PairedSample],
    n_z: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = rng_for(seed, "memorization-latents");
    let dim = g.spec().latent_dim;
    let zs: Vec<LatentVector> = (0..n_z)
        .map(|_| LatentVector::sample(dim, &mut rng))
        .collect();
    let z: Vec<T> = zs
        .iter()
        .flat_map(|z| z.values().iter().map(|&v| T::lit(v)))
        .collect();
    data.iter()
        .map(|s| {
            let maps: Tensor<T> = maps_to_tensor(&vec![&s.map; n_z]);
            let (out, _) = g.forward(&z, &maps, Mode::Eval);
            if !out.is_finite() {
                return Err(Error::NonFinite("generator activations".into()));
            }
            let target = images_to_tensor::<T>(&[&s.image]);
            let len = target.sample_len() as f64;
            Ok((0..n_z)
                .map(|n| {
                    out.sample(n)
                        .iter()
                        .zip(target.sample(0))
                        .map(|(a, b)| (a.to_f64().unwrap() - b.to_f64().unwrap()).abs())
                        .sum::<f64>()
                        / len
                })
                .fold(f64::INFINITY, f64::min))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::PSNR_CAP_DB;
    use crate::semantic_map::{render_map, synth_landmarks, FacePose};
    use rand::Rng;
    use std::collections::HashMap;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn random_image(rng: &mut impl Rng) -> ImageTensor {
        ImageTensor::new(
            8,
            8,
            3,
            (0..192).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        )
        .unwrap()
    }

    fn dataset(n: usize) -> Vec<EvalSample> {
        let mut rng = rng_for(1, "eval-data");
        (0..n)
            .map(|i| {
                let mut pose = FacePose::centered(32);
                pose.mouth_curvature = -1.0 + 2.0 * i as f64 / n.max(2) as f64;
                pose.eye_openness = 0.2 + 0.8 * i as f64 / n as f64;
                let map = render_map(&synth_landmarks(&pose, 32, 32).unwrap(), 32, 32);
                let image = ImageTensor::new(
                    32,
                    32,
                    3,
                    (0..3072).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
                )
                .unwrap();
                EvalSample {
                    name: format!("img{i}"),
                    sample: PairedSample::new(image, map).unwrap(),
                }
            })
            .collect()
    }

    #[test]
    fn consistency_matches_pairwise_loop() {
        let mut rng = rng_for(2, "frames");
        for n in 2..=5 {
            let frames: Vec<ImageTensor> = (0..n).map(|_| random_image(&mut rng)).collect();
            let mut total = 0.0;
            let mut pairs = 0;
            for i in 0..n {
                for j in 0..n {
                    if i < j {
                        total += psnr(&frames[i], &frames[j]).unwrap();
                        pairs += 1;
                    }
                }
            }
            let mut count = 0;
            let got = consistency_with(&frames, |_, _| count += 1).unwrap();
            assert!((got - total / pairs as f64).abs() <= 1e-9);
            assert_eq!(count, n * (n - 1) / 2);
        }
    }

    #[test]
    fn consistency_edge_cases() {
        let mut rng = rng_for(3, "frames");
        let a = random_image(&mut rng);
        let b = random_image(&mut rng);
        assert_eq!(
            consistency(&[a.clone(), b.clone()]).unwrap(),
            psnr(&a, &b).unwrap()
        );
        assert_eq!(consistency(&vec![a.clone(); 4]).unwrap(), PSNR_CAP_DB);
        assert!(consistency(&[a]).is_err());
    }

    #[test]
    fn pseudo_sequences() {
        let src = ImageTensor::from_fn(32, 32, |y, x| [x as f64 / 40.0, y as f64 / 40.0, 0.1]);
        let left = make_pseudo_sequence(&src, MaskKind::Left, 3, 1).unwrap();
        assert!(left.frames().iter().all(|f| f == &left.frames()[0]));
        let central = make_pseudo_sequence(&src, MaskKind::Central, 4, 1).unwrap();
        for m in central.masks() {
            let f = m.count_zeros() as f64 / 1024.0;
            assert!((0.5..=0.7).contains(&f));
        }
        for (f, m) in central.frames().iter().zip(central.masks()) {
            assert_eq!(m.apply(f, 0.0).unwrap(), m.apply(&src, 0.0).unwrap());
        }
        assert!(make_pseudo_sequence(&src, MaskKind::Left, 1, 1).is_err());
    }

    fn oracle(data: &[EvalSample]) -> impl Inpainter + '_ {
        let by_map: HashMap<SemanticMap, ImageTensor> = data
            .iter()
            .map(|s| (s.sample.map.clone(), s.sample.image.clone()))
            .collect();
        move |_: &ImageTensor,
              _: &CorruptionMask,
              map: &SemanticMap,
              _: u64|
              -> Result<ImageTensor> { Ok(by_map[map].clone()) }
    }

    #[test]
    fn oracle_inpainter_hits_the_cap() {
        let data = dataset(3);
        let cfg = EvalConfig {
            kinds: MaskKind::ALL.to_vec(),
            ..EvalConfig::default()
        };
        let r = correctness_eval(&oracle(&data), &data, &cfg, serde_json::Value::Null).unwrap();
        assert_eq!(r.items.len(), 12);
        assert!(r.items.iter().all(|i| i.value == Some(PSNR_CAP_DB)));
        let one = correctness_eval(
            &oracle(&data),
            &data[..1],
            &EvalConfig {
                kinds: vec![MaskKind::Left],
                ..cfg
            },
            serde_json::Value::Null,
        )
        .unwrap();
        assert_eq!(one.aggregates[0].mean, one.items[0].value);
    }

    #[test]
    fn constant_output_is_perfectly_consistent() {
        let data = dataset(2);
        let fixed = ImageTensor::filled(32, 32, 3, 0.25);
        let constant =
            |_: &ImageTensor, _: &CorruptionMask, _: &SemanticMap, _: u64| Ok(fixed.clone());
        let r = consistency_eval(
            &constant,
            &data,
            &EvalConfig::default(),
            serde_json::Value::Null,
        )
        .unwrap();
        assert!(r.items.iter().all(|i| i.value == Some(PSNR_CAP_DB)));
        assert_eq!(
            r.aggregates
                .iter()
                .map(|a| a.kind.as_str())
                .collect::<Vec<_>>(),
            ["random-central", "random-freehand", "left"]
        );
    }

    #[test]
    fn two_frame_sequences_report_direct_psnr() {
        let data = dataset(2);
        let calls = AtomicUsize::new(0);
        let noisy = |c: &ImageTensor, _: &CorruptionMask, _: &SemanticMap, seed: u64| {
            calls.fetch_add(1, Ordering::SeqCst);
            let mut rng = rng_for(seed, "noise");
            ImageTensor::from_clamped(
                32,
                32,
                3,
                c.data()
                    .iter()
                    .map(|v| v + rng.gen_range(-0.1..0.1))
                    .collect(),
            )
        };
        let cfg = EvalConfig {
            n: 2,
            kinds: vec![MaskKind::Left],
            ..EvalConfig::default()
        };
        let r = consistency_eval(&noisy, &data, &cfg, serde_json::Value::Null).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 4);
        for (i, item) in r.items.iter().enumerate() {
            let seed = item_seed(0, "consistency", MaskKind::Left, i);
            let seq = make_pseudo_sequence(&data[i].sample.image, MaskKind::Left, 2, seed).unwrap();
            let outs: Vec<ImageTensor> = (0..2)
                .map(|j| {
                    noisy(
                        &seq.frames()[j],
                        &seq.masks()[j],
                        &data[i].sample.map,
                        frame_seed(seed, j),
                    )
                    .unwrap()
                })
                .collect();
            assert_eq!(item.value.unwrap(), psnr(&outs[0], &outs[1]).unwrap());
        }
    }

    #[test]
    fn failures_are_recorded_not_dropped() {
        let data = dataset(3);
        let flaky = |c: &ImageTensor, _: &CorruptionMask, map: &SemanticMap, _: u64| {
            if map == &data[1].sample.map {
                Err(Error::NonFinite("synthetic failure".into()))
            } else {
                Ok(c.clone())
            }
        };
        let cfg = EvalConfig {
            kinds: vec![MaskKind::Left],
            ..EvalConfig::default()
        };
        let r = correctness_eval(&flaky, &data, &cfg, serde_json::Value::Null).unwrap();
        assert_eq!(r.failed, 1);
        assert_eq!(r.aggregates[0].count, 2);
        assert_eq!(r.aggregates[0].failed, 1);
        assert!(r.items[1].error.as_deref().unwrap().contains("synthetic"));
        let vals: Vec<f64> = r.items.iter().filter_map(|i| i.value).collect();
        assert!((r.aggregates[0].mean.unwrap() - vals.iter().sum::<f64>() / 2.0).abs() <= 1e-9);
        assert!(r.to_csv().lines().count() == 4);
        assert!(r.to_table().contains("left"));
    }

    #[test]
    fn reports_do_not_depend_on_job_count() {
        let data = dataset(4);
        let id = |c: &ImageTensor, _: &CorruptionMask, _: &SemanticMap, _: u64| Ok(c.clone());
        let one = consistency_eval(
            &id,
            &data,
            &EvalConfig {
                jobs: 1,
                n: 3,
                ..EvalConfig::default()
            },
            serde_json::Value::Null,
        )
        .unwrap();
        let three = consistency_eval(
            &id,
            &data,
            &EvalConfig {
                jobs: 3,
                n: 3,
                ..EvalConfig::default()
            },
            serde_json::Value::Null,
        )
        .unwrap();
        assert_eq!(one.to_json(), three.to_json());
    }
}
