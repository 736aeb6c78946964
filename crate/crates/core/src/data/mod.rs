//! Multimodal samples, the on-disk dataset format, splitting and synthesis.

mod io;
mod split;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::tensor::Tensor;

pub use io::{load_dataset, load_dataset_with, read_matrix_csv, write_dataset, write_matrix_csv};
pub use split::{kfold, split_train_test, Fold, SplitPlan};
pub use synth::{generate, synthesize_dataset, SynthSpec};

pub const DEFAULT_CLASS_NAMES: [&str; 4] = ["Interest", "Boredom", "Happiness", "Confusion"];

pub fn default_class_names() -> Vec<String> {
    DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "em", alias = "eye", alias = "e")]
    Eye,
    #[serde(rename = "ppg", alias = "p")]
    Ppg,
    #[serde(rename = "vsi", alias = "semantic", alias = "s")]
    Semantic,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Eye, Modality::Ppg, Modality::Semantic];

    pub fn tag(self) -> &'static str {
        match self {
            Modality::Eye => "em",
            Modality::Ppg => "ppg",
            Modality::Semantic => "vsi",
        }
    }

    pub fn letter(self) -> char {
        match self {
            Modality::Eye => 'e',
            Modality::Ppg => 'p',
            Modality::Semantic => 's',
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "em" | "eye" | "e" => Ok(Modality::Eye),
            "ppg" | "p" => Ok(Modality::Ppg),
            "vsi" | "semantic" | "s" => Ok(Modality::Semantic),
            other => Err(Error::InvalidArgument(format!("unknown modality `{other}`"))),
        }
    }
}

/// Declared feature widths per modality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDims {
    pub eye: usize,
    pub ppg: usize,
    pub semantic: usize,
}

/// One labelled window: a sequence per modality plus the source video.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: usize,
    /// `T_e × D_e`
    pub eye: Tensor,
    /// `T_p × D_p`
    pub ppg: Tensor,
    /// `T_s × D_s`; shared by every sample of the same video.
    pub semantic: Tensor,
    pub video_id: String,
}

impl Sample {
    pub fn modality(&self, m: Modality) -> &Tensor {
        match m {
            Modality::Eye => &self.eye,
            Modality::Ppg => &self.ppg,
            Modality::Semantic => &self.semantic,
        }
    }

    pub fn modality_mut(&mut self, m: Modality) -> &mut Tensor {
        match m {
            Modality::Eye => &mut self.eye,
            Modality::Ppg => &mut self.ppg,
            Modality::Semantic => &mut self.semantic,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub class_names: Vec<String>,
    pub dims: FeatureDims,
    /// Sorted by id.
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labeled_ids(&self) -> Vec<(String, usize)> {
        self.samples.iter().map(|s| (s.id.clone(), s.label)).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Samples whose ids are in `ids`, in dataset order.
    pub fn subset(&self, ids: &[String]) -> Vec<Sample> {
        let wanted: std::collections::BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        self.samples
            .iter()
            .filter(|s| wanted.contains(s.id.as_str()))
            .cloned()
            .collect()
    }
}

/// Manifest JSON: class names, declared widths, a video → semantic file
/// table and one entry per sample. Paths are relative to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default = "default_class_names")]
    pub class_names: Vec<String>,
    pub feature_dims: FeatureDims,
    pub semantic_table: BTreeMap<String, PathBuf>,
    pub samples: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub label: usize,
    pub eye_path: PathBuf,
    pub ppg_path: PathBuf,
    pub semantic_ref: String,
}
