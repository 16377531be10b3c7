use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::read_config;
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::model::{Checkpoint, TrainOutcome};
use crate::selftrain::Scan;
use crate::volume::{load_mask, load_volume, save_volume, volume_paths, BinaryMask, VolumeData, VolumeGrid};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Written last into every output directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        read_config(path)
    }
}

/// Tracks what one subcommand reads and writes.
pub struct Run {
    out: PathBuf,
    command: String,
    seed: u64,
    config_sha256: String,
    inputs: BTreeMap<String, String>,
    outputs: BTreeSet<String>,
}

impl Run {
    pub fn new(out: &Path, command: &str, seed: u64) -> Result<Self> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        Ok(Run {
            out: out.to_path_buf(),
            command: command.to_string(),
            seed,
            config_sha256: String::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeSet::new(),
        })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    /// Echoes the effective config and records its hash.
    pub fn echo_config<T: Serialize>(&mut self, config: &T) -> Result<()> {
        let text = pretty(config);
        self.config_sha256 = sha256_hex(text.as_bytes());
        self.write_text(EFFECTIVE_CONFIG_FILE, &text)
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let key = path.display().to_string();
        if !self.inputs.contains_key(&key) {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            self.inputs.insert(key, sha256_hex(&bytes));
        }
        Ok(())
    }

    fn require(path: &Path) -> Result<()> {
        let (header, _) = volume_paths(path);
        if header.is_file() {
            Ok(())
        } else {
            Err(Error::Config(format!("input volume not found: {}", header.display())))
        }
    }

    pub fn load_volume(&mut self, path: &Path) -> Result<VolumeGrid> {
        Self::require(path)?;
        let (h, r) = volume_paths(path);
        self.record_input(&h)?;
        self.record_input(&r)?;
        load_volume(path)
    }

    pub fn load_mask(&mut self, path: &Path) -> Result<BinaryMask> {
        Self::require(path)?;
        let (h, r) = volume_paths(path);
        self.record_input(&h)?;
        self.record_input(&r)?;
        load_mask(path)
    }

    pub fn load_json<T: DeserializeOwned>(&mut self, path: &Path) -> Result<T> {
        let value = read_config(path)?;
        self.record_input(path)?;
        Ok(value)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<()> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.outputs.insert(rel.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        self.write_text(rel, &pretty(value))
    }

    /// `rel` names the header, e.g. `tree0.vvol.json`.
    pub fn write_volume<V: VolumeData + ?Sized>(&mut self, rel: &str, data: &V) -> Result<PathBuf> {
        let path = self.path(rel);
        save_volume(data, &path)?;
        let (h, r) = volume_paths(Path::new(rel));
        self.outputs.insert(h.display().to_string());
        self.outputs.insert(r.display().to_string());
        Ok(path)
    }

    pub fn finish(self) -> Result<RunManifest> {
        let outputs = self
            .outputs
            .iter()
            .map(|rel| {
                let path = self.out.join(rel);
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                Ok(FileDigest {
                    path: rel.clone(),
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command,
            seed: self.seed,
            config_sha256: self.config_sha256,
            inputs: self
                .inputs
                .into_iter()
                .map(|(path, sha256)| FileDigest { path, sha256 })
                .collect(),
            outputs,
        };
        let path = self.out.join(MANIFEST_FILE);
        fs::write(&path, pretty(&manifest)).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

/// One scan of a split manifest. Relative paths are relative to the
/// manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanEntry {
    pub id: String,
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub scans: Vec<ScanEntry>,
}

/// Scans plus the image file each came from (`None` when generated in memory).
#[derive(Debug, Default)]
pub struct LoadedSplit {
    pub scans: Vec<Scan>,
    pub images: Vec<Option<PathBuf>>,
}

impl LoadedSplit {
    pub fn in_memory(scans: Vec<Scan>) -> Self {
        let images = vec![None; scans.len()];
        LoadedSplit { scans, images }
    }
}

pub fn load_split(run: &mut Run, manifest: &Path, need_masks: bool) -> Result<LoadedSplit> {
    let m: SplitManifest = run.load_json(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("")).to_path_buf();
    let resolve = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
    let mut out = LoadedSplit::default();
    for e in m.scans {
        let image = resolve(&e.image);
        let grid = run.load_volume(&image)?;
        let scan = match (&e.mask, need_masks) {
            (Some(mask), true) => {
                let mask = run.load_mask(&resolve(mask))?;
                if mask.dims() != grid.dims() {
                    return Err(Error::DimsMismatch { left: grid.dims(), right: mask.dims() });
                }
                Scan::labeled(e.id, grid, mask)
            }
            (None, true) => {
                return Err(Error::Config(format!("{}: scan {} has no mask", manifest.display(), e.id)))
            }
            (_, false) => Scan::unlabeled(e.id, grid),
        };
        out.scans.push(scan);
        out.images.push(Some(image));
    }
    Ok(out)
}

/// `model.json`: extractor, checkpoint files and the best one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub stage: String,
    pub seed: u64,
    pub extractor: FeatureExtractor,
    pub checkpoints: Vec<PathBuf>,
    pub best: PathBuf,
    pub best_epoch: usize,
}

pub fn write_model(run: &mut Run, stage: &str, seed: u64, extractor: &FeatureExtractor, outcome: &TrainOutcome) -> Result<()> {
    let mut files = Vec::new();
    for ck in &outcome.checkpoints {
        let rel = format!("checkpoints/epoch_{:05}.json", ck.epoch);
        run.write_json(&rel, ck)?;
        files.push(PathBuf::from(rel));
    }
    let model = ModelFile {
        stage: stage.to_string(),
        seed,
        extractor: extractor.clone(),
        best: files[outcome.best].clone(),
        best_epoch: outcome.best().epoch,
        checkpoints: files,
    };
    run.write_json("model.json", &model)
}

pub fn load_model(run: &mut Run, path: &Path) -> Result<(ModelFile, TrainOutcome)> {
    let model: ModelFile = run.load_json(path)?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let mut checkpoints = Vec::new();
    let mut best = None;
    for (i, rel) in model.checkpoints.iter().enumerate() {
        let ck: Checkpoint = run.load_json(&base.join(rel))?;
        if *rel == model.best {
            best = Some(i);
        }
        checkpoints.push(ck);
    }
    let best = best.ok_or_else(|| Error::Config(format!("{}: best checkpoint is not listed", path.display())))?;
    Ok((model, TrainOutcome { checkpoints, best }))
}
