use serde::{Deserialize, Serialize};

use super::adasyn::{adasyn, AdasynConfig, ResampleReport};
use super::pca::PcaModel;
use super::standardize::Standardizer;
use crate::data::{Modality, Sample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub standardize: bool,
    /// Target width of the semantic PCA; `None` keeps the raw embedding.
    pub pca_dim: Option<usize>,
    pub adasyn: bool,
    pub adasyn_k: usize,
    pub adasyn_beta: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            standardize: true,
            pca_dim: Some(25),
            adasyn: true,
            adasyn_k: 5,
            adasyn_beta: 1.0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pca_dim == Some(0) {
            return Err(Error::Config("preprocess.pca_dim must be >= 1".into()));
        }
        if self.adasyn_k == 0 {
            return Err(Error::Config("preprocess.adasyn_k must be >= 1".into()));
        }
        if !(self.adasyn_beta.is_finite() && self.adasyn_beta >= 0.0) {
            return Err(Error::Config("preprocess.adasyn_beta must be a finite value >= 0".into()));
        }
        Ok(())
    }
}

/// Statistics learned from one training split. Applying it never refits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedPreprocessor {
    pub eye: Option<Standardizer>,
    pub ppg: Option<Standardizer>,
    pub semantic: Option<Standardizer>,
    pub pca: Option<PcaModel>,
}

fn stacked_rows(samples: &[Sample], m: Modality) -> Result<Tensor> {
    let width = samples[0].modality(m).cols();
    let mut data = Vec::new();
    for s in samples {
        let t = s.modality(m);
        if t.cols() != width {
            return Err(Error::shape("preprocess rows", &[width], t.shape()));
        }
        data.extend_from_slice(t.data());
    }
    Ok(Tensor::from_parts(vec![data.len() / width, width], data))
}

impl FittedPreprocessor {
    /// Fits on training samples only. Standardizers see every timestep row of
    /// their modality; PCA sees the standardized semantic rows.
    pub fn fit(samples: &[Sample], config: &PreprocessConfig) -> Result<Self> {
        config.validate()?;
        if samples.is_empty() {
            return Err(Error::InvalidArgument("cannot fit preprocessing on an empty split".into()));
        }
        let fit_std = |m| -> Result<Option<Standardizer>> {
            if config.standardize {
                Standardizer::fit(&stacked_rows(samples, m)?).map(Some)
            } else {
                Ok(None)
            }
        };
        let eye = fit_std(Modality::Eye)?;
        let ppg = fit_std(Modality::Ppg)?;
        let semantic = fit_std(Modality::Semantic)?;
        let pca = match config.pca_dim {
            Some(r) => {
                let rows = stacked_rows(samples, Modality::Semantic)?;
                let rows = match &semantic {
                    Some(s) => s.apply(&rows)?,
                    None => rows,
                };
                Some(PcaModel::fit(&rows, r)?)
            }
            None => None,
        };
        Ok(FittedPreprocessor { eye, ppg, semantic, pca })
    }

    /// Widths of the transformed eye, ppg and semantic rows, given raw widths.
    pub fn output_dims(&self, eye: usize, ppg: usize, semantic: usize) -> (usize, usize, usize) {
        (eye, ppg, self.pca.as_ref().map_or(semantic, |p| p.target_dim))
    }

    pub fn apply(&self, sample: &Sample) -> Result<Sample> {
        let mut out = sample.clone();
        let wrap = |e: Error| match e {
            Error::Shape { .. } => Error::Sample {
                sample: sample.id.clone(),
                path: Default::default(),
                msg: e.to_string(),
            },
            other => other,
        };
        if let Some(s) = &self.eye {
            out.eye = s.apply(&sample.eye).map_err(wrap)?;
        }
        if let Some(s) = &self.ppg {
            out.ppg = s.apply(&sample.ppg).map_err(wrap)?;
        }
        if let Some(s) = &self.semantic {
            out.semantic = s.apply(&sample.semantic).map_err(wrap)?;
        }
        if let Some(p) = &self.pca {
            out.semantic = p.apply(&out.semantic).map_err(wrap)?;
        }
        Ok(out)
    }

    pub fn apply_all(&self, samples: &[Sample]) -> Result<Vec<Sample>> {
        samples.iter().map(|s| self.apply(s)).collect()
    }
}

/// Per-modality `(T, D)` of a sample; the flattening layout.
type Layout = [(usize, usize); 3];

fn layout(s: &Sample) -> Layout {
    Modality::ALL.map(|m| {
        let t = s.modality(m);
        (t.rows(), t.cols())
    })
}

/// Concatenates eye, ppg and semantic in row-major time order.
pub fn flatten(sample: &Sample) -> Vec<f64> {
    Modality::ALL.iter().flat_map(|&m| sample.modality(m).data().iter().copied()).collect()
}

fn unflatten(row: &[f64], layout: &Layout) -> [Tensor; 3] {
    let mut offset = 0;
    layout.map(|(t, d)| {
        let part = row[offset..offset + t * d].to_vec();
        offset += t * d;
        Tensor::from_parts(vec![t, d], part)
    })
}

/// ADASYN over flattened samples. Originals come back first, unchanged;
/// synthetic samples take the id `syn{n}` and the video of their base row.
pub fn oversample(
    samples: &[Sample],
    num_classes: usize,
    config: &PreprocessConfig,
    seed: u64,
) -> Result<(Vec<Sample>, ResampleReport)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("cannot oversample an empty split".into()));
    }
    let shape = layout(&samples[0]);
    if let Some(odd) = samples.iter().find(|s| layout(s) != shape) {
        return Err(Error::InvalidArgument(format!(
            "oversampling needs equal sequence shapes; sample {} has {:?}, expected {:?}",
            odd.id,
            layout(odd),
            shape
        )));
    }
    let width: usize = shape.iter().map(|(t, d)| t * d).sum();
    let mut data = Vec::with_capacity(samples.len() * width);
    for s in samples {
        data.extend(flatten(s));
    }
    let x = Tensor::from_parts(vec![samples.len(), width], data);
    let y: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let cfg = AdasynConfig {
        k: config.adasyn_k,
        beta: config.adasyn_beta,
        seed,
    };
    let res = adasyn(&x, &y, num_classes, &cfg)?;

    let mut out = samples.to_vec();
    for (n, (r, &(base, _, _))) in (samples.len()..res.x.rows()).zip(&res.provenance).enumerate() {
        let [eye, ppg, semantic] = unflatten(res.x.row(r), &shape);
        out.push(Sample {
            id: format!("syn{n}"),
            label: res.y[r],
            eye,
            ppg,
            semantic,
            video_id: samples[base].video_id.clone(),
        });
    }
    Ok((out, res.report))
}
