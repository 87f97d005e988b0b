use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use semgan::evaluation::{
    consistency, consistency_eval, correctness_eval, make_pseudo_sequence, EvalSample,
    LatentInpainter, PseudoSequence, CORRUPT_FILL,
};
use semgan::imaging::{image_size, load_image, psnr, save_image, CorruptionMask, ImageTensor};
use semgan::inpainting::{inpaint_sequence, optimize_latent, InpaintModel, InpaintResult};
use semgan::masks::make_mask;
use semgan::models::LatentVector;
use semgan::seed::rng_for;
use semgan::semantic_map::{load_landmarks, load_landmarks_framed, render_map, SemanticMap};
use semgan::toy_corpus::{make_corpus, PoseSampler};
use semgan::training::{load_dataset, load_named_dataset, train_on};
use semgan::{Error, Result};

use crate::config::{Grid, ProtocolChoice, RunConfig};

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(
        path,
        serde_json::to_string_pretty(value).expect("json serializes"),
    )
    .map_err(io(path))
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value.as_deref().ok_or_else(|| {
        Error::InvalidArgument(format!(
            "--{flag} is required (or set it in the config file)"
        ))
    })
}

pub fn corpus(cfg: &RunConfig) -> Result<()> {
    let out = &cfg.paths.out;
    make_corpus(cfg.corpus.n, cfg.seed, cfg.resolution, cfg.resolution, out)?;
    cfg.write_resolved(out)?;
    println!("wrote {} faces to {}", cfg.corpus.n, out.display());
    Ok(())
}

pub fn maps(cfg: &RunConfig, landmarks: &Path, frame: Option<(usize, usize)>) -> Result<()> {
    let files: Vec<PathBuf> = if landmarks.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(landmarks)
            .map_err(io(landmarks))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json"))
            .collect();
        v.sort();
        v
    } else {
        vec![landmarks.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Error::EmptyDataset(landmarks.to_path_buf()));
    }
    let out = &cfg.paths.out;
    fs::create_dir_all(out).map_err(io(out))?;
    let r = cfg.resolution;
    for f in &files {
        let lms = load_landmarks_framed(f, frame)?.rescale(r, r)?;
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("map");
        render_map(&lms, r, r).save_png(out.join(format!("{stem}.png")))?;
    }
    cfg.write_resolved(out)?;
    println!(
        "rendered {} maps at {r}x{r} into {}",
        files.len(),
        out.display()
    );
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let data = required(&cfg.paths.data, "data")?.to_path_buf();
    let tc = cfg.train_config(data.clone(), cfg.paths.out.clone());
    tc.validate()?;
    let samples = load_dataset(&data, tc.resolution)?;
    cfg.write_resolved(&cfg.paths.out)?;
    let every = tc.log_every.max(1);
    let last = train_on(&tc, samples, |it, m| {
        if it % every == 0 {
            eprintln!(
                "iter {it}: d_loss {:.4} g_loss {:.4} D(x) {:.3} D(G(z)) {:.3}",
                m.d_loss, m.g_loss, m.real_score, m.fake_score
            );
        }
    })?;
    println!("wrote {}", last.display());
    Ok(())
}

fn load_model(cfg: &mut RunConfig, resolution_flag: Option<usize>) -> Result<InpaintModel<f32>> {
    let path = required(&cfg.paths.checkpoint, "checkpoint")?;
    let model = InpaintModel::load(path)?;
    if let Some(r) = resolution_flag {
        if r != model.resolution() {
            return Err(Error::Shape(format!(
                "--resolution {r} does not match the {0}x{0} checkpoint",
                model.resolution()
            )));
        }
    }
    cfg.resolution = model.resolution();
    if model.trained_iterations == 0 {
        eprintln!(
            "warning: {} holds an untrained model; outputs are noise",
            path.display()
        );
    }
    Ok(model)
}

/// Image at exactly `r x r`; other sizes are a resolution mismatch.
fn load_input_image(path: &Path, r: usize) -> Result<ImageTensor> {
    let (h, w) = image_size(path)?;
    if (h, w) != (r, r) {
        return Err(Error::Shape(format!(
            "{} is {w}x{h} but the model works at {r}x{r}",
            path.display()
        )));
    }
    load_image(path, r)
}

/// Landmark JSON (rendered) or semantic-map PNG.
fn load_map(path: &Path, r: usize) -> Result<SemanticMap> {
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        Ok(render_map(&load_landmarks(path, r, r)?, r, r))
    } else {
        let (h, w) = image_size(path)?;
        if (h, w) != (r, r) {
            return Err(Error::Shape(format!(
                "{} is {w}x{h} but the model works at {r}x{r}",
                path.display()
            )));
        }
        SemanticMap::load_png(path, r)
    }
}

fn load_mask(cfg: &RunConfig, r: usize) -> Result<CorruptionMask> {
    match &cfg.mask.file {
        Some(p) => {
            let m = CorruptionMask::load_png(p)?;
            if (m.height(), m.width()) != (r, r) {
                return Err(Error::Shape(format!("mask {} is not {r}x{r}", p.display())));
            }
            Ok(m)
        }
        None => make_mask(&cfg.mask.spec(cfg.seed)?, r, r),
    }
}

pub fn sample(cfg: &mut RunConfig, resolution_flag: Option<usize>) -> Result<()> {
    let model = load_model(cfg, resolution_flag)?;
    let r = cfg.resolution;
    let (rows, cols) = (cfg.sample.rows, cfg.sample.cols);
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(
            "grid needs at least one row and one column".into(),
        ));
    }
    let maps: Vec<SemanticMap> = match &cfg.paths.data {
        Some(d) => {
            let data = load_dataset(d, r)?;
            data.into_iter().map(|s| s.map).cycle().take(rows).collect()
        }
        None => {
            let mut rng = rng_for(cfg.seed, "sample-poses");
            (0..rows)
                .map(|_| {
                    let pose = PoseSampler::default().sample(r, &mut rng);
                    Ok(render_map(
                        &semgan::semantic_map::synth_landmarks(&pose, r, r)?,
                        r,
                        r,
                    ))
                })
                .collect::<Result<_>>()?
        }
    };
    let dim = model.latent_dim();
    let mut rng = rng_for(cfg.seed, "sample-latents");
    // same-z: column c uses z_c in every row; diff-z: every cell has its own z.
    let shared: Vec<LatentVector> = (0..cols)
        .map(|_| LatentVector::sample(dim, &mut rng))
        .collect();
    let mut grid = ImageTensor::filled(rows * r, (cols + 1) * r, 3, -1.0);
    for (row, map) in maps.iter().enumerate() {
        let zs: Vec<LatentVector> = match cfg.sample.grid {
            Grid::SameZ => shared.clone(),
            Grid::DiffZ => (0..cols)
                .map(|_| LatentVector::sample(dim, &mut rng))
                .collect(),
        };
        let imgs = model
            .generator
            .generate_batch(&zs.iter().collect::<Vec<_>>(), &vec![map; cols])?;
        paste(&mut grid, &map.to_image(), row * r, 0);
        for (c, img) in imgs.iter().enumerate() {
            paste(&mut grid, img, row * r, (c + 1) * r);
        }
    }
    let out = cfg.paths.out.clone();
    cfg.write_resolved(&out)?;
    let path = out.join("grid.png");
    save_image(&grid, &path)?;
    println!("wrote {} (first column: conditioning maps)", path.display());
    Ok(())
}

fn paste(dst: &mut ImageTensor, src: &ImageTensor, y0: usize, x0: usize) {
    for y in 0..src.height() {
        for x in 0..src.width() {
            dst.set_pixel(y0 + y, x0 + x, src.pixel(y, x));
        }
    }
}

fn summary(r: &InpaintResult) -> serde_json::Value {
    let first = r.trace.first().expect("trace is never empty");
    json!({
        "z_hat": r.z_hat.values(),
        "restart": r.restart,
        "untrained": r.untrained,
        "initial_loss": first,
        "final_loss": r.final_loss(),
    })
}

pub fn inpaint(
    cfg: &mut RunConfig,
    resolution_flag: Option<usize>,
    image: &Path,
    map: &Path,
) -> Result<()> {
    let model = load_model(cfg, resolution_flag)?;
    let r = cfg.resolution;
    let source = load_input_image(image, r)?;
    let map = load_map(map, r)?;
    let mask = load_mask(cfg, r)?;
    let corrupted = mask.apply(&source, CORRUPT_FILL)?;
    let result = optimize_latent(&model, &corrupted, &mask, &map, &cfg.inpaint_config())?;
    let out = cfg.paths.out.clone();
    cfg.write_resolved(&out)?;
    save_image(&corrupted, out.join("corrupted.png"))?;
    mask.save_png(out.join("mask.png"))?;
    map.save_png(out.join("map.png"))?;
    save_image(&result.generated, out.join("generated.png"))?;
    save_image(&result.inpainted, out.join("inpainted.png"))?;
    result.write_trace_csv(&out.join("trace.csv"))?;
    let mut s = summary(&result);
    s["psnr_vs_input"] = json!(psnr(&result.inpainted, &source)?);
    write_json(&out.join("result.json"), &s)?;
    let f = result.final_loss();
    println!(
        "final loss {:.5} (contextual {:.5}, perceptual {:.5}); wrote {}",
        f.total,
        f.contextual,
        f.perceptual,
        out.display()
    );
    Ok(())
}

pub fn inpaint_seq(
    cfg: &mut RunConfig,
    resolution_flag: Option<usize>,
    image: &Path,
    map: &Path,
) -> Result<()> {
    let model = load_model(cfg, resolution_flag)?;
    let r = cfg.resolution;
    let source = load_input_image(image, r)?;
    let map = load_map(map, r)?;
    let n = cfg.eval.n;
    let seq = match &cfg.mask.file {
        Some(_) => {
            let mask = load_mask(cfg, r)?;
            let frame = mask.apply(&source, CORRUPT_FILL)?;
            PseudoSequence::new(source.clone(), vec![frame; n], vec![mask; n], cfg.mask.kind)?
        }
        None => {
            if cfg.mask.fraction.is_some() {
                return Err(Error::InvalidArgument(
                    "sequence masks draw their own fractions; --mask-fraction is not accepted here"
                        .into(),
                ));
            }
            make_pseudo_sequence(&source, cfg.mask.kind, n, cfg.seed)?
        }
    };
    let results = inpaint_sequence(
        &model,
        &seq,
        std::slice::from_ref(&map),
        &cfg.inpaint_config(),
    )?;
    let out = cfg.paths.out.clone();
    cfg.write_resolved(&out)?;
    let frames_dir = out.join("frames");
    fs::create_dir_all(&frames_dir).map_err(io(&frames_dir))?;
    for (i, res) in results.iter().enumerate() {
        save_image(
            &seq.frames()[i],
            frames_dir.join(format!("frame_{i:03}_corrupted.png")),
        )?;
        save_image(
            &res.inpainted,
            frames_dir.join(format!("frame_{i:03}_inpainted.png")),
        )?;
        res.write_trace_csv(&frames_dir.join(format!("frame_{i:03}_trace.csv")))?;
    }
    let inpainted: Vec<ImageTensor> = results.iter().map(|r| r.inpainted.clone()).collect();
    let c = consistency(&inpainted)?;
    let psnrs = inpainted
        .iter()
        .map(|f| psnr(f, &source))
        .collect::<Result<Vec<_>>>()?;
    write_json(
        &out.join("result.json"),
        &json!({
            "consistency_db": c,
            "psnr_vs_source_db": psnrs,
            "frames": results.iter().map(summary).collect::<Vec<_>>(),
        }),
    )?;
    println!(
        "consistency {c:.2} dB over {n} frames; wrote {}",
        out.display()
    );
    Ok(())
}

pub fn eval(cfg: &mut RunConfig, resolution_flag: Option<usize>) -> Result<()> {
    let model = load_model(cfg, resolution_flag)?;
    let r = cfg.resolution;
    let root = required(&cfg.paths.data, "data")?.to_path_buf();
    let mut named = load_named_dataset(&root, r)?;
    if let Some(l) = cfg.eval.limit {
        named.truncate(l);
    }
    let samples: Vec<EvalSample> = named
        .into_iter()
        .map(|(name, sample)| EvalSample { name, sample })
        .collect();
    let inpainter = LatentInpainter {
        model: &model,
        config: cfg.inpaint_config(),
    };
    let ec = cfg.eval_config();
    let out = cfg.paths.out.clone();
    cfg.write_resolved(&out)?;
    let meta = json!({
        "checkpoint": cfg.paths.checkpoint,
        "trained_iterations": model.trained_iterations,
        "resolution": r,
        "data": root,
        "images": samples.len(),
        "seed": cfg.seed,
        "inpaint": cfg.inpaint_config(),
        "sequence_length": ec.n,
    });
    let run_correctness = matches!(
        cfg.eval.protocol,
        ProtocolChoice::Correctness | ProtocolChoice::Both
    );
    let run_consistency = matches!(
        cfg.eval.protocol,
        ProtocolChoice::Consistency | ProtocolChoice::Both
    );
    if run_correctness {
        let report = correctness_eval(&inpainter, &samples, &ec, meta.clone())?;
        report.write(&out.join("correctness"))?;
        print!("{}", report.to_table());
        warn_failures(report.failed);
    }
    if run_consistency {
        let report = consistency_eval(&inpainter, &samples, &ec, meta)?;
        report.write(&out.join("consistency"))?;
        print!("{}", report.to_table());
        warn_failures(report.failed);
    }
    Ok(())
}

fn warn_failures(n: usize) {
    if n > 0 {
        eprintln!("warning: {n} item(s) failed; see items.csv");
    }
}
