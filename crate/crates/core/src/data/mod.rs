//! Dataset ingestion and preprocessing. Everything leaves this module as a
//! canonical `N x 32 x 32 x 3` batch with values in [0, 1].

mod canon;
mod sources;
mod synthetic;
mod transform;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::batch::ImageBatch;
use crate::error::{ensure, Error, Result};
use crate::io;

pub use canon::{resize_bilinear, to_canonical};
pub use synthetic::synthetic_blobs;
pub use transform::{add_noise, apply_session_jitter, train_val_split, NoiseSpec, SessionJitter};

/// Environment variable naming the dataset root directory.
pub const DATA_ROOT_ENV: &str = "FLASHCARDS_DATA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!("unknown split `{s}` (expected train, val or test)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    pub images: ImageBatch,
    pub labels: Option<Vec<u32>>,
    pub num_classes: Option<usize>,
    pub name: String,
    pub split: Split,
}

impl LabeledImageSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Checks the shape/range invariants and label bounds.
    pub fn validate(&self) -> Result<()> {
        self.images.validate_canonical()?;
        if let Some(labels) = &self.labels {
            ensure!(labels.len() == self.len(), "{} labels for {} images", labels.len(), self.len());
            if let Some(k) = self.num_classes {
                if let Some(bad) = labels.iter().find(|&&l| l as usize >= k) {
                    return Err(Error::InvalidArgument(format!("label {bad} outside [0, {k})")));
                }
            }
        }
        Ok(())
    }

    pub fn select(&self, indices: &[usize]) -> LabeledImageSet {
        LabeledImageSet {
            images: self.images.select(indices),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            num_classes: self.num_classes,
            name: self.name.clone(),
            split: self.split,
        }
    }

    pub fn take(&self, n: usize) -> LabeledImageSet {
        self.select(&(0..n.min(self.len())).collect::<Vec<_>>())
    }

    /// Keeps samples whose label is in `classes`, relabelled to their
    /// position in `classes`.
    pub fn filter_classes(&self, classes: &[u32]) -> Result<LabeledImageSet> {
        let labels = self.labels.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("dataset `{}` has no labels to filter by", self.name))
        })?;
        let idx: Vec<usize> = (0..self.len()).filter(|&i| classes.contains(&labels[i])).collect();
        let mut out = self.select(&idx);
        out.labels = Some(idx.iter().map(|&i| classes.iter().position(|&c| c == labels[i]).unwrap() as u32).collect());
        out.num_classes = Some(classes.len());
        Ok(out)
    }
}

/// Where datasets live on disk, plus an optional cache of canonicalized tensors.
#[derive(Debug, Clone)]
pub struct DataRoot {
    root: PathBuf,
    cache: Option<PathBuf>,
}

impl DataRoot {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), cache: None }
    }

    /// `$FLASHCARDS_DATA`, falling back to `./data`.
    pub fn from_env() -> Self {
        Self::new(std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data")))
    }

    pub fn with_cache(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache = Some(dir.into());
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Loads and canonicalizes `name`/`split`, keeping the first `limit`
    /// samples. `name` is one of `mnist`, `fashion-mnist`, `cifar10`, `svhn`,
    /// `omniglot`, `synthetic-blobs`, or `dir:<path>` for a directory of PNGs.
    pub fn load(&self, name: &str, split: Split, limit: Option<usize>) -> Result<LabeledImageSet> {
        if split == Split::Val {
            return Err(Error::InvalidArgument(
                "no stored validation split; carve one from train with train_val_split".into(),
            ));
        }
        if name == "synthetic-blobs" {
            return synthetic::load(split, limit);
        }
        if let Some(set) = self.load_cached(name, split, limit)? {
            return Ok(set);
        }
        let raw = match name {
            "mnist" | "fashion-mnist" => sources::idx(&self.root.join(name), split, limit)?,
            "cifar10" => sources::cifar10(&self.root.join("cifar10"), split, limit)?,
            "svhn" | "omniglot" => sources::png_dir(&self.root.join(name).join(split.to_string()))?,
            _ => match name.strip_prefix("dir:") {
                Some(path) => {
                    let p = Path::new(path);
                    let split_dir = p.join(split.to_string());
                    sources::png_dir(if split_dir.is_dir() { &split_dir } else { p })?
                }
                None => return Err(Error::UnknownDataset(name.to_string())),
            },
        };
        let available = raw.available;
        let keep = match limit {
            Some(k) if k > available => {
                return Err(Error::NotEnoughSamples {
                    name: name.to_string(),
                    split: split.to_string(),
                    requested: k,
                    available,
                })
            }
            Some(k) => k,
            None => available,
        };
        let mut parts = Vec::new();
        let mut left = keep;
        for chunk in &raw.images {
            if left == 0 {
                break;
            }
            let k = chunk.len().min(left);
            parts.push(to_canonical(&chunk.slice(0, k)));
            left -= k;
        }
        let images = ImageBatch::concat(&parts.iter().collect::<Vec<_>>())?;
        let set = LabeledImageSet {
            images,
            labels: raw.labels.map(|mut l| {
                l.truncate(keep);
                l
            }),
            num_classes: raw.num_classes,
            name: name.to_string(),
            split,
        };
        set.validate()?;
        if limit.is_none() {
            self.store_cached(&set)?;
        }
        Ok(set)
    }

    fn cache_paths(&self, name: &str, split: Split) -> Option<(PathBuf, PathBuf)> {
        let dir = self.cache.as_ref()?;
        let key: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
        Some((dir.join(format!("{key}-{split}.fct")), dir.join(format!("{key}-{split}.labels.json"))))
    }

    fn load_cached(&self, name: &str, split: Split, limit: Option<usize>) -> Result<Option<LabeledImageSet>> {
        let Some((tensor, meta)) = self.cache_paths(name, split) else { return Ok(None) };
        if !tensor.exists() || !meta.exists() {
            return Ok(None);
        }
        let images = io::load_images(&tensor, limit)?;
        let text = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        let info: CacheMeta = serde_json::from_str(&text).map_err(|e| Error::corrupt(&meta, e.to_string()))?;
        if let Some(k) = limit {
            if k > info.count {
                return Err(Error::NotEnoughSamples {
                    name: name.to_string(),
                    split: split.to_string(),
                    requested: k,
                    available: info.count,
                });
            }
        }
        let n = images.len();
        let set = LabeledImageSet {
            images,
            labels: info.labels.map(|mut l| {
                l.truncate(n);
                l
            }),
            num_classes: info.num_classes,
            name: name.to_string(),
            split,
        };
        set.validate()?;
        Ok(Some(set))
    }

    fn store_cached(&self, set: &LabeledImageSet) -> Result<()> {
        let Some((tensor, meta)) = self.cache_paths(&set.name, set.split) else { return Ok(()) };
        if let Some(dir) = tensor.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        io::save_images(&tensor, &set.images)?;
        let info = CacheMeta { count: set.len(), labels: set.labels.clone(), num_classes: set.num_classes };
        std::fs::write(&meta, serde_json::to_string(&info).expect("serializable")).map_err(|e| Error::io(&meta, e))
    }
}

#[derive(Serialize, Deserialize)]
struct CacheMeta {
    count: usize,
    labels: Option<Vec<u32>>,
    num_classes: Option<usize>,
}

/// [`DataRoot::load`] against the root named by `$FLASHCARDS_DATA`.
pub fn load_dataset(name: &str, split: Split, limit: Option<usize>) -> Result<LabeledImageSet> {
    DataRoot::from_env().load(name, split, limit)
}
