//! MVTec-style directory scanning.
//!
//! ```text
//! <root>/<category>/train/good/<stem>.<ext>
//! <root>/<category>/test/<defect>/<stem>.<ext>
//! <root>/<category>/ground_truth/<defect>/<stem>_mask.<ext>
//! ```
//!
//! `<ext>` is `vftr` for feature files and `vimg` or `png` for images. Files
//! of one stem in one directory form a single entry.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::{read_file, write_file, DataError};
use crate::model::Label;

pub const NORMAL_DIR: &str = "good";
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    /// `<defect>/<stem>`, unique within the category.
    pub id: String,
    pub defect: String,
    pub label: Label,
    /// Paths relative to the dataset root, `/`-separated.
    pub features: Option<String>,
    pub image: Option<String>,
    pub mask: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryIndex {
    pub name: String,
    pub train: Vec<IndexEntry>,
    pub test: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetIndex {
    /// Sorted by name.
    pub categories: Vec<CategoryIndex>,
}

impl DatasetIndex {
    pub fn category(&self, name: &str) -> Option<&CategoryIndex> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("index serialises")
    }

    pub fn write(&self, root: &Path) -> Result<(), DataError> {
        write_file(&root.join(INDEX_FILE), self.to_json().as_bytes())
    }

    pub fn read(root: &Path) -> Result<Self, DataError> {
        let path = root.join(INDEX_FILE);
        let bytes = read_file(&path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| DataError::Layout(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Copy, PartialEq)]
enum FileRole {
    Features,
    Image,
}

fn role_of(path: &Path) -> Option<FileRole> {
    match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
        "vftr" => Some(FileRole::Features),
        "vimg" | "png" => Some(FileRole::Image),
        _ => None,
    }
}

fn sorted_children(dir: &Path) -> Result<Vec<PathBuf>, DataError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| DataError::io(dir, e))? {
        out.push(entry.map_err(|e| DataError::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

fn name_of(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Groups the files of one split directory by stem.
fn scan_split_dir(root: &Path, dir: &Path, defect: &str) -> Result<BTreeMap<String, IndexEntry>, DataError> {
    let mut entries: BTreeMap<String, IndexEntry> = BTreeMap::new();
    for path in sorted_children(dir)? {
        let role = if path.is_file() { role_of(&path) } else { None };
        let Some(role) = role else {
            warn!("ignoring unexpected entry {}", path.display());
            continue;
        };
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let entry = entries.entry(stem.clone()).or_insert_with(|| IndexEntry {
            id: format!("{defect}/{stem}"),
            defect: defect.to_string(),
            label: if defect == NORMAL_DIR {
                Label::Normal
            } else {
                Label::Anomalous
            },
            features: None,
            image: None,
            mask: None,
        });
        let slot = match role {
            FileRole::Features => &mut entry.features,
            FileRole::Image => &mut entry.image,
        };
        if slot.is_some() {
            warn!("duplicate {} for {stem} in {}; keeping the first", name_of(&path), dir.display());
        } else {
            *slot = Some(relative(root, &path));
        }
    }
    Ok(entries)
}

fn find_mask(root: &Path, category_dir: &Path, defect: &str, stem: &str) -> Option<String> {
    let dir = category_dir.join("ground_truth").join(defect);
    ["vimg", "png"]
        .iter()
        .map(|ext| dir.join(format!("{stem}_mask.{ext}")))
        .find(|p| p.is_file())
        .map(|p| relative(root, &p))
}

fn scan_category(root: &Path, dir: &Path) -> Result<CategoryIndex, DataError> {
    let name = name_of(dir);
    let train_dir = dir.join("train");
    if !train_dir.is_dir() {
        return Err(DataError::MissingTrainSplit { category: name });
    }
    let mut train = Vec::new();
    for sub in sorted_children(&train_dir)? {
        if !sub.is_dir() {
            warn!("ignoring unexpected entry {}", sub.display());
            continue;
        }
        let defect = name_of(&sub);
        if defect != NORMAL_DIR {
            return Err(DataError::DefectInTrain {
                category: name,
                defect,
            });
        }
        train.extend(scan_split_dir(root, &sub, &defect)?.into_values());
    }
    if train.is_empty() {
        return Err(DataError::MissingTrainSplit { category: name });
    }

    let mut test = Vec::new();
    let test_dir = dir.join("test");
    if test_dir.is_dir() {
        for sub in sorted_children(&test_dir)? {
            if !sub.is_dir() {
                warn!("ignoring unexpected entry {}", sub.display());
                continue;
            }
            let defect = name_of(&sub);
            for (stem, mut entry) in scan_split_dir(root, &sub, &defect)? {
                if entry.label == Label::Anomalous {
                    entry.mask = find_mask(root, dir, &defect, &stem);
                    if entry.mask.is_none() {
                        return Err(DataError::MissingMask {
                            category: name,
                            entry: entry.id,
                        });
                    }
                }
                test.push(entry);
            }
        }
    }
    for other in sorted_children(dir)? {
        let n = name_of(&other);
        if !matches!(n.as_str(), "train" | "test" | "ground_truth") {
            warn!("ignoring unexpected entry {}", other.display());
        }
    }
    Ok(CategoryIndex { name, train, test })
}

/// Builds the index of an MVTec-style tree. Directory listing order never
/// affects the result: every level is sorted by name.
pub fn scan_dataset(root: &Path) -> Result<DatasetIndex, DataError> {
    if !root.is_dir() {
        return Err(DataError::MissingRoot(root.to_path_buf()));
    }
    let mut categories = Vec::new();
    for path in sorted_children(root)? {
        if path.is_dir() {
            if name_of(&path).starts_with('.') {
                continue;
            }
            categories.push(scan_category(root, &path)?);
        } else if name_of(&path) != INDEX_FILE {
            warn!("ignoring unexpected entry {}", path.display());
        }
    }
    if categories.is_empty() {
        return Err(DataError::EmptyDataset(root.to_path_buf()));
    }
    Ok(DatasetIndex { categories })
}
