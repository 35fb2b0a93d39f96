//! Labeled synthetic datasets and their JSON manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{generate_shape, load_cloud, save_cloud, CloudFormat, PointCloud, ShapeKind};
use crate::seed::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Parameters of the five-class synthetic suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySuiteConfig {
    pub per_class_train: usize,
    pub per_class_test: usize,
    pub points: usize,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for ToySuiteConfig {
    fn default() -> Self {
        Self {
            per_class_train: 100,
            per_class_test: 40,
            points: 256,
            jitter: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub class_names: Vec<String>,
    pub train: Vec<PointCloud>,
    pub test: Vec<PointCloud>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }
}

/// Builds the synthetic suite: one class per [`ShapeKind`], in
/// [`ShapeKind::ALL`] order. Every cloud is labeled.
pub fn toy_suite(config: &ToySuiteConfig) -> Result<Dataset> {
    let make = |split: Split, per_class: usize| -> Result<Vec<PointCloud>> {
        let mut out = Vec::with_capacity(per_class * ShapeKind::ALL.len());
        for (label, kind) in ShapeKind::ALL.iter().enumerate() {
            for i in 0..per_class {
                let seed = derive_seed(config.seed, &[split as u64, label as u64, i as u64]);
                out.push(generate_shape(*kind, config.points, config.jitter, seed)?.with_label(label));
            }
        }
        Ok(out)
    };
    Ok(Dataset {
        class_names: ShapeKind::ALL.iter().map(|k| k.name().to_string()).collect(),
        train: make(Split::Train, config.per_class_train)?,
        test: make(Split::Test, config.per_class_test)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub label: usize,
    pub split: Split,
}

/// On-disk description of a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub classes: Vec<String>,
    pub points_per_cloud: usize,
    pub jitter: f64,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    /// Writes every cloud of `dataset` as XYZ under `dir` plus `manifest.json`.
    pub fn write(dir: &Path, dataset: &Dataset, config: &ToySuiteConfig) -> Result<Self> {
        let mut entries = Vec::new();
        for (split, clouds) in [(Split::Train, &dataset.train), (Split::Test, &dataset.test)] {
            let split_name = match split {
                Split::Train => "train",
                Split::Test => "test",
            };
            std::fs::create_dir_all(dir.join(split_name))?;
            for (i, cloud) in clouds.iter().enumerate() {
                let label = cloud
                    .label
                    .ok_or_else(|| Error::InvalidArgument(format!("{split_name} cloud {i} has no label")))?;
                let rel = format!("{split_name}/{}_{i:04}.xyz", dataset.class_names[label]);
                save_cloud(dir.join(&rel), cloud, CloudFormat::Xyz)?;
                entries.push(ManifestEntry {
                    path: rel,
                    label,
                    split,
                });
            }
        }
        let manifest = Self {
            seed: config.seed,
            classes: dataset.class_names.clone(),
            points_per_cloud: config.points,
            jitter: config.jitter,
            entries,
        };
        std::fs::write(dir.join(Self::FILE_NAME), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }

    /// Reads and validates a manifest. Paths in the returned entries stay
    /// relative; use [`DatasetManifest::load_dataset`] to read the clouds.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let manifest: Self = serde_json::from_str(&text)?;
        manifest.validate(path.parent().unwrap_or(Path::new(".")))?;
        Ok(manifest)
    }

    fn validate(&self, root: &Path) -> Result<()> {
        let n = self.classes.len();
        let mut used = vec![false; n];
        for e in &self.entries {
            if e.label >= n {
                return Err(Error::InvalidArgument(format!(
                    "entry {} has label {} but only {n} classes",
                    e.path, e.label
                )));
            }
            used[e.label] = true;
            let full: PathBuf = root.join(&e.path);
            if !full.exists() {
                return Err(Error::MissingFile(full));
            }
        }
        if let Some(missing) = used.iter().position(|u| !u) {
            return Err(Error::InvalidArgument(format!("class id {missing} has no entries")));
        }
        Ok(())
    }

    /// Loads every referenced cloud. `root` is the manifest's directory.
    pub fn load_dataset(&self, root: &Path) -> Result<Dataset> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for e in &self.entries {
            let cloud = load_cloud(root.join(&e.path), CloudFormat::Xyz)?.with_label(e.label);
            match e.split {
                Split::Train => train.push(cloud),
                Split::Test => test.push(cloud),
            }
        }
        Ok(Dataset {
            class_names: self.classes.clone(),
            train,
            test,
        })
    }
}
