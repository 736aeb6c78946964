use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, DatasetManifest, ManifestEntry, Sample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reads a CSV with one header row and one row per timestep.
pub fn read_matrix_csv(path: &Path) -> Result<Tensor> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let width = reader.headers().map_err(|e| csv_error(path, e))?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != width {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                msg: format!("row {} has {} fields, header has {width}", line + 1, record.len()),
            });
        }
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                msg: format!("row {} column {col}: `{field}` is not a number", line + 1),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    msg: format!("row {} column {col}: non-finite value `{field}`", line + 1),
                });
            }
            data.push(value);
        }
        rows += 1;
    }
    if rows == 0 || width == 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            msg: "no data rows".into(),
        });
    }
    Tensor::new(vec![rows, width], data)
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    match err.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.to_path_buf(),
            msg: format!("{other:?}"),
        },
    }
}

/// Writes a `T×D` matrix with a `{prefix}_{j}` header. Values use the
/// shortest representation that parses back to the same bits.
pub fn write_matrix_csv(path: &Path, prefix: &str, matrix: &Tensor) -> Result<()> {
    let cols = matrix.cols();
    let mut out = String::new();
    let header: Vec<String> = (0..cols).map(|j| format!("{prefix}_{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..matrix.rows() {
        let row: Vec<String> = matrix.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    load_dataset_with(manifest_path, None)
}

/// Loads a dataset, optionally replacing entries of the semantic table
/// (video id → embedding file, relative to the manifest).
pub fn load_dataset_with(
    manifest_path: &Path,
    semantic_override: Option<&BTreeMap<String, PathBuf>>,
) -> Result<Dataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let mut manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: manifest_path.to_path_buf(),
        msg: e.to_string(),
    })?;
    if let Some(table) = semantic_override {
        for (video, path) in table {
            manifest.semantic_table.insert(video.clone(), path.clone());
        }
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    build_dataset(&manifest, base)
}

fn build_dataset(manifest: &DatasetManifest, base: &Path) -> Result<Dataset> {
    let k = manifest.class_names.len();
    if k < 2 {
        return Err(Error::Config(format!(
            "manifest declares {k} class(es); at least 2 are required"
        )));
    }
    let dims = manifest.feature_dims;
    let mut semantic_cache: HashMap<&str, Tensor> = HashMap::new();
    let mut seen = BTreeSet::new();
    let mut samples = Vec::with_capacity(manifest.samples.len());

    for entry in &manifest.samples {
        if !seen.insert(entry.id.as_str()) {
            return Err(Error::Sample {
                sample: entry.id.clone(),
                path: base.to_path_buf(),
                msg: "duplicate sample id".into(),
            });
        }
        if entry.label >= k {
            return Err(Error::Sample {
                sample: entry.id.clone(),
                path: base.to_path_buf(),
                msg: format!("unknown label {} (manifest has {k} classes)", entry.label),
            });
        }
        let eye = load_block(entry, &base.join(&entry.eye_path), dims.eye, "eye")?;
        let ppg = load_block(entry, &base.join(&entry.ppg_path), dims.ppg, "ppg")?;
        let semantic = match semantic_cache.get(entry.semantic_ref.as_str()) {
            Some(t) => t.clone(),
            None => {
                let rel = manifest.semantic_table.get(&entry.semantic_ref).ok_or_else(|| {
                    Error::Sample {
                        sample: entry.id.clone(),
                        path: base.to_path_buf(),
                        msg: format!("semantic_ref `{}` is not in the semantic table", entry.semantic_ref),
                    }
                })?;
                let t = load_block(entry, &base.join(rel), dims.semantic, "semantic")?;
                semantic_cache.insert(entry.semantic_ref.as_str(), t.clone());
                t
            }
        };
        samples.push(Sample {
            id: entry.id.clone(),
            label: entry.label,
            eye,
            ppg,
            semantic,
            video_id: entry.semantic_ref.clone(),
        });
    }
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(Dataset {
        class_names: manifest.class_names.clone(),
        dims,
        samples,
    })
}

fn load_block(entry: &ManifestEntry, path: &Path, width: usize, what: &str) -> Result<Tensor> {
    let located = |msg: String| Error::Sample {
        sample: entry.id.clone(),
        path: path.to_path_buf(),
        msg,
    };
    if !path.is_file() {
        return Err(located(format!("{what} file not found")));
    }
    let block = read_matrix_csv(path).map_err(|e| located(e.to_string()))?;
    if block.cols() != width {
        return Err(located(format!(
            "{what} block has {} columns, manifest declares {width}",
            block.cols()
        )));
    }
    Ok(block)
}

/// Writes `dataset` as `manifest.json` plus per-sample CSV files under
/// `dir` and returns the manifest path.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut semantic_table = BTreeMap::new();
    let mut entries = Vec::with_capacity(dataset.len());
    for s in &dataset.samples {
        let eye_path = PathBuf::from("eye").join(format!("{}.csv", s.id));
        let ppg_path = PathBuf::from("ppg").join(format!("{}.csv", s.id));
        write_matrix_csv(&dir.join(&eye_path), "eye", &s.eye)?;
        write_matrix_csv(&dir.join(&ppg_path), "ppg", &s.ppg)?;
        if !semantic_table.contains_key(&s.video_id) {
            let sem_path = PathBuf::from("semantic").join(format!("{}.csv", s.video_id));
            write_matrix_csv(&dir.join(&sem_path), "sem", &s.semantic)?;
            semantic_table.insert(s.video_id.clone(), sem_path);
        }
        entries.push(ManifestEntry {
            id: s.id.clone(),
            label: s.label,
            eye_path,
            ppg_path,
            semantic_ref: s.video_id.clone(),
        });
    }
    let manifest = DatasetManifest {
        class_names: dataset.class_names.clone(),
        feature_dims: dataset.dims,
        semantic_table,
        samples: entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
