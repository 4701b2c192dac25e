//! On-disk dataset formats and the synthetic generator.

mod feature_file;
mod raster_file;
mod scan;
mod synth;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{FeatureStack, Label, Mask, ModelError, Raster};
use crate::wire::FormatError;

pub use self::feature_file::{
    read_feature_file, write_feature_file, FeatureFile, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use self::raster_file::{
    raster_from_bytes, raster_to_bytes, read_mask, read_raster, write_mask, write_raster,
    RASTER_MAGIC, RASTER_VERSION,
};
pub use self::scan::{scan_dataset, CategoryIndex, DatasetIndex, IndexEntry, INDEX_FILE, NORMAL_DIR};
pub use self::synth::{generate_category, generate_synthetic, LayerShape, SyntheticSpec, ANOMALY_DEFECT};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset root {0} does not exist or is not a directory")]
    MissingRoot(PathBuf),
    #[error("no categories found under {0}")]
    EmptyDataset(PathBuf),
    #[error("category {category:?} has no train/good split")]
    MissingTrainSplit { category: String },
    #[error("category {category:?} has a defect directory {defect:?} in its train split")]
    DefectInTrain { category: String, defect: String },
    #[error("anomalous test entry {entry:?} of category {category:?} has no mask")]
    MissingMask { category: String, entry: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("dataset layout: {0}")]
    Layout(String),
    #[error("synthetic spec: {0}")]
    Synthetic(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, source: FormatError) -> Self {
        Self::Format {
            path: path.to_path_buf(),
            source,
        }
    }

    /// The format-level corruption class, when there is one.
    pub fn format_error(&self) -> Option<&FormatError> {
        match self {
            Self::Format { source, .. } => Some(source),
            _ => None,
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|e| DataError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| DataError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| DataError::io(path, e))
}

/// One image with whatever representations the source provides.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: Label,
    pub mask: Option<Mask>,
    pub image: Option<Raster>,
    pub features: Option<FeatureStack<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryData {
    pub name: String,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub categories: Vec<CategoryData>,
}

impl Dataset {
    pub fn category(&self, name: &str) -> Option<&CategoryData> {
        self.categories.iter().find(|c| c.name == name)
    }
}

fn load_entry(root: &Path, entry: &IndexEntry) -> Result<Sample, DataError> {
    let features = entry
        .features
        .as_ref()
        .map(|p| read_feature_file(&root.join(p)))
        .transpose()?
        .map(|f| f.stack);
    let image = entry.image.as_ref().map(|p| read_raster(&root.join(p))).transpose()?;
    let mask = entry.mask.as_ref().map(|p| read_mask(&root.join(p))).transpose()?;
    if let (Some(img), Some(m)) = (&image, &mask) {
        if (img.height, img.width) != (m.height, m.width) {
            return Err(DataError::Layout(format!(
                "{}: mask {}x{} does not match image {}x{}",
                entry.id, m.height, m.width, img.height, img.width
            )));
        }
    }
    let features = features.map(|mut s| {
        s.mask = mask.clone();
        s
    });
    Ok(Sample {
        id: entry.id.clone(),
        label: entry.label,
        mask,
        image,
        features,
    })
}

/// Reads every file listed by `index`. `only` restricts the categories.
pub fn load_dataset(root: &Path, index: &DatasetIndex, only: Option<&[String]>) -> Result<Dataset, DataError> {
    let mut categories = Vec::new();
    for cat in &index.categories {
        if only.is_some_and(|names| !names.contains(&cat.name)) {
            continue;
        }
        let load = |entries: &[IndexEntry]| -> Result<Vec<Sample>, DataError> {
            entries.iter().map(|e| load_entry(root, e)).collect()
        };
        categories.push(CategoryData {
            name: cat.name.clone(),
            train: load(&cat.train)?,
            test: load(&cat.test)?,
        });
    }
    if let Some(names) = only {
        for n in names {
            if index.category(n).is_none() {
                return Err(DataError::Layout(format!("category {n:?} not in the dataset")));
            }
        }
    }
    Ok(Dataset { categories })
}

/// Writes `dataset` as an MVTec-style tree under `root` plus the index
/// sidecar, and returns the index.
pub fn write_dataset(root: &Path, dataset: &Dataset) -> Result<DatasetIndex, DataError> {
    let mut index = DatasetIndex::default();
    for cat in &dataset.categories {
        let entries = |samples: &[Sample], split: &str| -> Result<Vec<IndexEntry>, DataError> {
            let mut out = Vec::with_capacity(samples.len());
            for s in samples {
                let (defect, stem) = s.id.split_once('/').unwrap_or((NORMAL_DIR, s.id.as_str()));
                let base = format!("{}/{split}/{defect}/{stem}", cat.name);
                let mask_ref = s
                    .mask
                    .as_ref()
                    .filter(|_| s.label == Label::Anomalous)
                    .map(|_| format!("{}/ground_truth/{defect}/{stem}_mask.vimg", cat.name));
                if let (Some(m), Some(path)) = (&s.mask, &mask_ref) {
                    write_mask(&root.join(path), m)?;
                }
                let features = match &s.features {
                    Some(stack) => {
                        let path = format!("{base}.vftr");
                        let file = FeatureFile {
                            stack: stack.clone(),
                            mask_ref: mask_ref.clone().unwrap_or_default(),
                        };
                        write_feature_file(&root.join(&path), &file)?;
                        Some(path)
                    }
                    None => None,
                };
                let image = match &s.image {
                    Some(img) => {
                        let path = format!("{base}.vimg");
                        write_raster(&root.join(&path), img)?;
                        Some(path)
                    }
                    None => None,
                };
                out.push(IndexEntry {
                    id: format!("{defect}/{stem}"),
                    defect: defect.to_string(),
                    label: s.label,
                    features,
                    image,
                    mask: mask_ref,
                });
            }
            // the order a scan of the written tree produces
            out.sort_by(|a, b| {
                let stem = |e: &IndexEntry| e.id.split_once('/').map(|(_, s)| s.to_string());
                (&a.defect, stem(a)).cmp(&(&b.defect, stem(b)))
            });
            Ok(out)
        };
        let train = entries(&cat.train, "train")?;
        let test = entries(&cat.test, "test")?;
        index.categories.push(CategoryIndex {
            name: cat.name.clone(),
            train,
            test,
        });
    }
    index.categories.sort_by(|a, b| a.name.cmp(&b.name));
    index.write(root)?;
    Ok(index)
}
