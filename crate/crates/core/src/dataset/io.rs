//! On-disk dataset directory:
//!
//! ```text
//! manifest.json    name, K, L, class table (external id, name, seen flag), file names
//! features.csv     N rows of K comma-separated decimals, no header
//! labels.csv       N rows, one external class id each
//! attributes.csv   C rows of L decimals, in class-table order
//! splits.json      sample index lists and calibration class sets
//! ```
//!
//! Indices are 0-based. Reals are written in their shortest exact decimal form.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ClassId, GzslDataset, SplitManifest};
use crate::error::{Error, Result};
use crate::textio;

pub const MANIFEST_FILE: &str = "manifest.json";
const GENERATED_FEATURES_FILE: &str = "generated_features.csv";
const GENERATED_LABELS_FILE: &str = "generated_labels.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    #[serde(rename = "K")]
    pub feature_dim: usize,
    #[serde(rename = "L")]
    pub attribute_dim: usize,
    pub classes: Vec<ManifestClass>,
    #[serde(default)]
    pub files: ManifestFiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestClass {
    pub id: i64,
    pub name: String,
    pub seen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFiles {
    pub features: String,
    pub labels: String,
    pub attributes: String,
    pub splits: String,
}

impl Default for ManifestFiles {
    fn default() -> Self {
        Self {
            features: "features.csv".into(),
            labels: "labels.csv".into(),
            attributes: "attributes.csv".into(),
            splits: "splits.json".into(),
        }
    }
}

/// `splits.json`; class ids use the manifest's external ids.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitsFile {
    train: Vec<usize>,
    test_seen: Vec<usize>,
    test_unseen: Vec<usize>,
    calib_subtrain_classes: Vec<i64>,
    calib_pseudo_unseen_classes: Vec<i64>,
}

/// Maps external class ids onto the contiguous seen-then-unseen layout.
struct ClassTable {
    internal: HashMap<i64, ClassId>,
    /// Internal id -> position in the manifest class table.
    table_row: Vec<usize>,
    num_seen: usize,
}

impl ClassTable {
    fn new(manifest: &Manifest, path: &Path) -> Result<Self> {
        let mut order: Vec<usize> = (0..manifest.classes.len())
            .filter(|&i| manifest.classes[i].seen)
            .collect();
        let num_seen = order.len();
        order.extend((0..manifest.classes.len()).filter(|&i| !manifest.classes[i].seen));
        if num_seen == 0 || num_seen == order.len() {
            return Err(Error::data(
                path,
                None,
                "class table needs at least one seen and one unseen class",
            ));
        }
        let mut internal = HashMap::new();
        for (new_id, &row) in order.iter().enumerate() {
            let ext = manifest.classes[row].id;
            if internal.insert(ext, new_id).is_some() {
                return Err(Error::data(path, None, format!("duplicate class id {ext}")));
            }
        }
        Ok(Self {
            internal,
            table_row: order,
            num_seen,
        })
    }

    fn map(&self, ext: i64, path: &Path, line: Option<usize>) -> Result<ClassId> {
        self.internal
            .get(&ext)
            .copied()
            .ok_or_else(|| Error::data(path, line, format!("label out of range: unknown class id {ext}")))
    }
}

fn read_manifest(dir: &Path) -> Result<(PathBuf, Manifest)> {
    let path = if dir.is_file() {
        dir.to_path_buf()
    } else {
        dir.join(MANIFEST_FILE)
    };
    let manifest = textio::read_json(&path)?;
    Ok((path, manifest))
}

/// Loads and validates a dataset. `path` is either the dataset directory or
/// its `manifest.json`.
pub fn load_dataset(path: &Path) -> Result<GzslDataset> {
    let (manifest_path, manifest) = read_manifest(path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let table = ClassTable::new(&manifest, &manifest_path)?;
    let c = manifest.classes.len();

    let features_path = dir.join(&manifest.files.features);
    let labels_path = dir.join(&manifest.files.labels);
    let attributes_path = dir.join(&manifest.files.attributes);
    let splits_path = dir.join(&manifest.files.splits);

    let features = textio::read_matrix_csv(&features_path, Some(manifest.feature_dim))?;
    let raw_attributes = textio::read_matrix_csv(&attributes_path, Some(manifest.attribute_dim))?;
    if raw_attributes.nrows() != c {
        return Err(Error::data(
            &attributes_path,
            None,
            format!(
                "row count mismatch: {} rows for {} classes in the manifest",
                raw_attributes.nrows(),
                c
            ),
        ));
    }
    let raw_labels = textio::read_int_column(&labels_path)?;
    if raw_labels.len() != features.nrows() {
        return Err(Error::data(
            &labels_path,
            None,
            format!(
                "row count mismatch: {} labels but {} rows in {}",
                raw_labels.len(),
                features.nrows(),
                manifest.files.features
            ),
        ));
    }
    let labels = raw_labels
        .iter()
        .enumerate()
        .map(|(i, &ext)| table.map(ext, &labels_path, Some(i + 1)))
        .collect::<Result<Vec<_>>>()?;

    let mut attributes = Array2::zeros(raw_attributes.raw_dim());
    for (new_id, &row) in table.table_row.iter().enumerate() {
        attributes.row_mut(new_id).assign(&raw_attributes.row(row));
    }
    let class_names = table
        .table_row
        .iter()
        .map(|&r| manifest.classes[r].name.clone())
        .collect();

    let splits_file: SplitsFile = textio::read_json(&splits_path)?;
    let map_set = |ids: &[i64]| -> Result<Vec<ClassId>> {
        let mut v = ids
            .iter()
            .map(|&e| table.map(e, &splits_path, None))
            .collect::<Result<Vec<_>>>()?;
        v.sort_unstable();
        Ok(v)
    };
    let splits = SplitManifest {
        calib_subtrain_classes: map_set(&splits_file.calib_subtrain_classes)?,
        calib_pseudo_unseen_classes: map_set(&splits_file.calib_pseudo_unseen_classes)?,
        train: splits_file.train,
        test_seen: splits_file.test_seen,
        test_unseen: splits_file.test_unseen,
    };

    let dataset = GzslDataset {
        name: manifest.name,
        class_names,
        features,
        labels,
        attributes,
        num_seen: table.num_seen,
        splits,
    };
    dataset.validate().map_err(|e| match e {
        Error::Invalid(msg) => Error::data(&splits_path, None, msg),
        other => other,
    })?;
    Ok(dataset)
}

/// Writes `dataset` as a dataset directory; class ids are written in the
/// normalized layout.
pub fn save_dataset(dataset: &GzslDataset, dir: &Path) -> Result<()> {
    dataset.validate()?;
    let manifest = Manifest {
        name: dataset.name.clone(),
        feature_dim: dataset.feature_dim(),
        attribute_dim: dataset.attribute_dim(),
        classes: dataset
            .class_names
            .iter()
            .enumerate()
            .map(|(i, name)| ManifestClass {
                id: i as i64,
                name: name.clone(),
                seen: dataset.is_seen(i),
            })
            .collect(),
        files: ManifestFiles::default(),
    };
    let files = &manifest.files;
    textio::write_matrix_csv(&dir.join(&files.features), &dataset.features)?;
    textio::write_int_column(&dir.join(&files.labels), &dataset.labels)?;
    textio::write_matrix_csv(&dir.join(&files.attributes), &dataset.attributes)?;
    let s = &dataset.splits;
    let as_ext = |v: &[ClassId]| v.iter().map(|&c| c as i64).collect();
    textio::write_json(
        &dir.join(&files.splits),
        &SplitsFile {
            train: s.train.clone(),
            test_seen: s.test_seen.clone(),
            test_unseen: s.test_unseen.clone(),
            calib_subtrain_classes: as_ext(&s.calib_subtrain_classes),
            calib_pseudo_unseen_classes: as_ext(&s.calib_pseudo_unseen_classes),
        },
    )?;
    textio::write_json(&dir.join(MANIFEST_FILE), &manifest)
}

/// Externally generated visual features (e.g. from a trained generative
/// model) for classes without real training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedFeatures {
    pub features: Array2<f64>,
    pub labels: Vec<ClassId>,
}

impl GeneratedFeatures {
    /// Reads `generated_features.csv` and `generated_labels.csv` from the
    /// dataset directory, if present. Labels use the manifest's class ids.
    pub fn load(dataset_dir: &Path, dataset: &GzslDataset) -> Result<Option<Self>> {
        let (manifest_path, manifest) = read_manifest(dataset_dir)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let features_path = dir.join(GENERATED_FEATURES_FILE);
        let labels_path = dir.join(GENERATED_LABELS_FILE);
        if !features_path.exists() && !labels_path.exists() {
            return Ok(None);
        }
        let table = ClassTable::new(&manifest, &manifest_path)?;
        let features = textio::read_matrix_csv(&features_path, Some(dataset.feature_dim()))?;
        let raw = textio::read_int_column(&labels_path)?;
        if raw.len() != features.nrows() {
            return Err(Error::data(
                &labels_path,
                None,
                format!(
                    "row count mismatch: {} labels for {} generated rows",
                    raw.len(),
                    features.nrows()
                ),
            ));
        }
        let labels = raw
            .iter()
            .enumerate()
            .map(|(i, &e)| table.map(e, &labels_path, Some(i + 1)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Some(Self { features, labels }))
    }
}
