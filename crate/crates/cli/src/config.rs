//! Run configuration: built-in defaults, overlaid by a TOML (or resolved
//! JSON) file, overlaid by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use semgan::evaluation::EvalConfig;
use semgan::inpainting::InpaintConfig;
use semgan::masks::{MaskKind, MaskSpec};
use semgan::training::TrainConfig;
use semgan::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub resolution: usize,
    pub paths: Paths,
    pub corpus: CorpusSection,
    pub train: TrainSection,
    pub sample: SampleSection,
    pub mask: MaskSection,
    pub inpaint: InpaintSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            resolution: 64,
            paths: Paths::default(),
            corpus: CorpusSection::default(),
            train: TrainSection::default(),
            sample: SampleSection::default(),
            mask: MaskSection::default(),
            inpaint: InpaintSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Dataset root (`images/`, `landmarks/`, `maps/`).
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data: None,
            checkpoint: None,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub n: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection { n: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub iterations: u64,
    pub latent_dim: usize,
    pub gen_filters: usize,
    pub disc_filters: usize,
    pub max_filters: usize,
    pub checkpoint_every: u64,
    pub log_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            batch_size: t.batch_size,
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            iterations: t.iterations,
            latent_dim: t.latent_dim,
            gen_filters: t.gen_filters,
            disc_filters: t.disc_filters,
            max_filters: t.max_filters,
            checkpoint_every: t.checkpoint_every,
            log_every: t.log_every,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Grid {
    /// Each column shares one z; rows vary the map.
    SameZ,
    /// Each row keeps one map; every cell draws its own z.
    DiffZ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub grid: Grid,
    /// Number of maps (grid rows).
    pub rows: usize,
    /// Number of latents per row.
    pub cols: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            grid: Grid::SameZ,
            rows: 4,
            cols: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSection {
    pub kind: MaskKind,
    /// Corrupted fraction for central and freehand masks.
    pub fraction: Option<f64>,
    /// Explicit mask PNG (white = known); overrides `kind`.
    pub file: Option<PathBuf>,
}

impl Default for MaskSection {
    fn default() -> Self {
        MaskSection {
            kind: MaskKind::Central,
            fraction: None,
            file: None,
        }
    }
}

impl MaskSection {
    pub fn spec(&self, seed: u64) -> Result<MaskSpec> {
        let mut spec = MaskSpec::default_for(self.kind, seed);
        if let Some(f) = self.fraction {
            match &mut spec {
                MaskSpec::Central { fraction } | MaskSpec::Freehand { fraction, .. } => {
                    *fraction = f
                }
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "mask fraction does not apply to {} masks",
                        self.kind
                    )))
                }
            }
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InpaintSection {
    pub eta: f64,
    pub lr: f64,
    pub iterations: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub restarts: usize,
    pub normalize_context: bool,
}

impl Default for InpaintSection {
    fn default() -> Self {
        let c = InpaintConfig::default();
        InpaintSection {
            eta: c.eta,
            lr: c.lr,
            iterations: c.iterations,
            beta1: c.beta1,
            beta2: c.beta2,
            restarts: c.restarts,
            normalize_context: c.normalize_context,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolChoice {
    Correctness,
    Consistency,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub protocol: ProtocolChoice,
    pub kinds: Vec<MaskKind>,
    /// Frames per pseudo-sequence.
    pub n: usize,
    pub jobs: usize,
    /// Evaluate only the first `limit` images.
    pub limit: Option<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let e = EvalConfig::default();
        EvalSection {
            protocol: ProtocolChoice::Both,
            kinds: e.kinds,
            n: e.n,
            jobs: e.jobs,
            limit: None,
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with the document at `path`, if any.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let bad =
            |e: &dyn std::fmt::Display| Error::InvalidArgument(format!("{}: {e}", path.display()));
        let file: serde_json::Value = if path.extension().and_then(|e| e.to_str()) == Some("json") {
            serde_json::from_str(&text).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })?
        } else {
            toml::from_str(&text).map_err(|e| bad(&e))?
        };
        let mut merged = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
        merge(&mut merged, file);
        serde_json::from_value(merged).map_err(|e| bad(&e))
    }

    pub fn train_config(&self, data: PathBuf, out: PathBuf) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch_size: t.batch_size,
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            iterations: t.iterations,
            seed: self.seed,
            resolution: self.resolution,
            latent_dim: t.latent_dim,
            gen_filters: t.gen_filters,
            disc_filters: t.disc_filters,
            max_filters: t.max_filters,
            checkpoint_every: t.checkpoint_every,
            log_every: t.log_every,
            dataset_root: data,
            out_dir: out,
        }
    }

    pub fn inpaint_config(&self) -> InpaintConfig {
        let i = &self.inpaint;
        InpaintConfig {
            eta: i.eta,
            lr: i.lr,
            iterations: i.iterations,
            beta1: i.beta1,
            beta2: i.beta2,
            seed: self.seed,
            restarts: i.restarts,
            normalize_context: i.normalize_context,
            ..InpaintConfig::default()
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            seed: self.seed,
            jobs: self.eval.jobs,
            n: self.eval.n,
            kinds: self.eval.kinds.clone(),
        }
    }

    /// Write `config.json` into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let path = dir.join("config.json");
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
    }
}

/// Recursive table merge; non-table values in `over` replace those in `base`.
fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
