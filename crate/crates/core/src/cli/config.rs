use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentationSpec;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::model::TrainConfig;
use crate::morphometry::MorphometryOptions;
use crate::phantom::PhantomSpec;
use crate::selftrain::{SelectionPolicy, SelfTrainConfig};

/// Parses a JSON config; schema errors name the offending field.
pub fn parse_config<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        Error::Config(format!("{}: field `{field}`: {}", origin.display(), e.inner()))
    })
}

pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.is_file() {
        return Err(Error::Config(format!("config file not found: {}", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSizes {
    pub labeled: usize,
    pub unlabeled: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn as_array(&self) -> [usize; 4] {
        [self.labeled, self.unlabeled, self.validation, self.test]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Labeled,
    Unlabeled,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Labeled, Split::Unlabeled, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Labeled => "labeled",
            Split::Unlabeled => "unlabeled",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    /// Same sizes with every other split zeroed.
    pub fn only(self, sizes: SplitSizes) -> [usize; 4] {
        let mut out = [0; 4];
        out[self.index()] = sizes.as_array()[self.index()];
        out
    }
}

/// `phantom` subcommand input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomCorpusConfig {
    /// Template; its own `seed` is replaced by one derived per scan.
    pub phantom: PhantomSpec,
    /// Number of `tree<i>` phantoms when `splits` is absent.
    pub count: usize,
    pub splits: Option<SplitSizes>,
    pub seed: u64,
}

impl Default for PhantomCorpusConfig {
    fn default() -> Self {
        PhantomCorpusConfig {
            phantom: PhantomSpec::default(),
            count: 1,
            splits: None,
            seed: 0,
        }
    }
}

impl PhantomCorpusConfig {
    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        let total = match &self.splits {
            Some(s) => s.as_array().iter().sum(),
            None => self.count,
        };
        if total == 0 {
            return Err(Error::Config("phantom corpus is empty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitPaths {
    pub labeled: Option<PathBuf>,
    pub unlabeled: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

impl SplitPaths {
    pub fn get(&self, split: Split) -> Option<&PathBuf> {
        match split {
            Split::Labeled => self.labeled.as_ref(),
            Split::Unlabeled => self.unlabeled.as_ref(),
            Split::Validation => self.validation.as_ref(),
            Split::Test => self.test.as_ref(),
        }
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut Option<PathBuf>> {
        [&mut self.labeled, &mut self.unlabeled, &mut self.validation, &mut self.test].into_iter()
    }
}

/// Phantoms generated in memory instead of read from split manifests.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InlineCorpus {
    pub phantom: PhantomSpec,
    pub sizes: SplitSizes,
}

/// Everything `train`, `pseudolabel`, `select`, `pipeline` and model-based
/// `evaluate` read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub splits: SplitPaths,
    pub phantom_corpus: Option<InlineCorpus>,
    pub train: TrainConfig,
    pub features: FeatureConfig,
    pub augmentation: AugmentationSpec,
    pub selection: SelectionPolicy,
    pub k_checkpoints: usize,
    pub views_per_scan: usize,
    pub final_retrain: bool,
    pub pseudo_threshold: f64,
    pub pseudo_min_component_voxels: usize,
    pub morphometry: MorphometryOptions,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let st = SelfTrainConfig::default();
        PipelineConfig {
            splits: SplitPaths::default(),
            phantom_corpus: None,
            train: st.train,
            features: st.features,
            augmentation: st.augmentation,
            selection: st.selection,
            k_checkpoints: st.k_checkpoints,
            views_per_scan: st.views_per_scan,
            final_retrain: st.final_retrain,
            pseudo_threshold: st.pseudo_threshold,
            pseudo_min_component_voxels: st.pseudo_min_component_voxels,
            morphometry: MorphometryOptions::default(),
            out: None,
            seed: st.seed,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        parse_config(text, Path::new("<inline>"))
    }

    /// Reads a config and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = read_config(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in cfg.splits.iter_mut().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(out) = cfg.out.as_mut() {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }

    pub fn selftrain(&self) -> SelfTrainConfig {
        SelfTrainConfig {
            train: self.train.clone(),
            features: self.features.clone(),
            augmentation: self.augmentation.clone(),
            selection: self.selection.clone(),
            k_checkpoints: self.k_checkpoints,
            views_per_scan: self.views_per_scan,
            final_retrain: self.final_retrain,
            pseudo_threshold: self.pseudo_threshold,
            pseudo_min_component_voxels: self.pseudo_min_component_voxels,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.selftrain().validate()?;
        if let Some(c) = &self.phantom_corpus {
            c.phantom.validate()?;
            if self.splits != SplitPaths::default() {
                return Err(Error::Config("give either `splits` or `phantom_corpus`, not both".into()));
            }
        }
        for split in Split::ALL {
            if let Some(p) = self.splits.get(split) {
                if !p.is_file() {
                    return Err(Error::Config(format!("splits.{}: {} does not exist", split.name(), p.display())));
                }
            }
        }
        Ok(())
    }
}

/// `stats` subcommand input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub alpha: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { alpha: 0.05 }
    }
}
