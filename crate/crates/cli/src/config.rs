use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zsgan_core::data::SyntheticSpec;
use zsgan_core::eval::ProtocolConfig;
use zsgan_core::{Error, Result, TrainConfig};

pub const RESOLVED_CONFIG: &str = "resolved.toml";

/// Everything a command reads. Every key has a default, so an empty file
/// is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed. When set it replaces `data.seed`, `train.seed` and
    /// `protocol.split_seed`.
    pub seed: Option<u64>,
    /// Dataset directory as written by `gen-data`.
    pub dataset: Option<PathBuf>,
    /// Optional word-vector text file; otherwise the dataset's own table.
    pub embeddings: Option<PathBuf>,
    pub out: PathBuf,
    /// Split index used by `train`, `synth` and checkpoint-mode `eval`.
    pub split: usize,
    /// Checkpoint directory; defaults to `<out>/checkpoint`.
    pub checkpoint: Option<PathBuf>,
    pub export_2d: bool,
    pub data: SyntheticSpec,
    pub train: TrainConfig,
    pub protocol: ProtocolConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            dataset: None,
            embeddings: None,
            out: PathBuf::from("out"),
            split: 0,
            checkpoint: None,
            export_2d: false,
            data: SyntheticSpec::default(),
            train: TrainConfig::default(),
            protocol: ProtocolConfig::default(),
        }
    }
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub splits: Option<usize>,
    pub export_2d: bool,
    pub include_seen_in_svm: bool,
}

impl RunConfig {
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let offset = e.span().map_or(0, |s| s.start as u64);
            Error::format(source, offset, e.message().to_string())
        })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::parse(&text, p)
            }
        }
    }

    /// Applies overrides and the master seed, then validates.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self> {
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if o.dataset.is_some() {
            self.dataset = o.dataset.clone();
        }
        if o.checkpoint.is_some() {
            self.checkpoint = o.checkpoint.clone();
        }
        if let Some(n) = o.splits {
            self.protocol.num_splits = n;
        }
        self.export_2d |= o.export_2d;
        self.protocol.include_seen_in_svm |= o.include_seen_in_svm;
        if let Some(s) = self.seed {
            self.data.seed = s;
            self.train.seed = s;
            self.protocol.split_seed = s;
        }
        self.train.validate()?;
        self.protocol.validate()?;
        Ok(self)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("checkpoint"))
    }

    pub fn dataset_dir(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| Error::Config("no dataset directory; set `dataset` or pass --dataset".into()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Writes the resolved config into the output directory.
    pub fn echo(&self) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let p = self.out.join(RESOLVED_CONFIG);
        fs::write(&p, self.to_toml()?).map_err(|e| Error::io(&p, e))
    }
}
