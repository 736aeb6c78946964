//! Synthetic multimodal datasets with a controllable class signal.
//!
//! Every timestep of modality `m` for a sample of class `c` is drawn as
//! `separation · u(m, c) + ε` with `ε ~ N(0, I)` and `u(m, c)` a random unit
//! direction fixed by the seed. With `semantic_informative = false` all
//! classes share one semantic direction, so the semantic block carries no
//! label information.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{default_class_names, write_dataset, Dataset, FeatureDims, Sample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub class_names: Vec<String>,
    /// Samples per class, in class order.
    pub counts: Vec<usize>,
    pub eye_dim: usize,
    pub ppg_dim: usize,
    pub semantic_dim: usize,
    pub eye_steps: usize,
    pub ppg_steps: usize,
    pub semantic_steps: usize,
    pub separation: f64,
    pub semantic_informative: bool,
    /// Consecutive samples of a class that share one video (and therefore
    /// one semantic block).
    pub samples_per_video: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            class_names: default_class_names(),
            counts: vec![100; 4],
            eye_dim: 8,
            ppg_dim: 6,
            semantic_dim: 32,
            eye_steps: 4,
            ppg_steps: 4,
            semantic_steps: 4,
            separation: 3.0,
            semantic_informative: true,
            samples_per_video: 1,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn balanced(per_class: usize, separation: f64, seed: u64) -> Self {
        SynthSpec {
            counts: vec![per_class; 4],
            separation,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.class_names.len();
        let fail = |msg: String| Err(Error::InvalidArgument(format!("synth spec: {msg}")));
        if k < 2 {
            return fail(format!("need at least 2 classes, got {k}"));
        }
        if self.counts.len() != k {
            return fail(format!("{} counts for {k} classes", self.counts.len()));
        }
        if self.counts.iter().any(|&n| n == 0) {
            return fail("every class needs at least one sample".into());
        }
        let sizes = [
            self.eye_dim,
            self.ppg_dim,
            self.semantic_dim,
            self.eye_steps,
            self.ppg_steps,
            self.semantic_steps,
            self.samples_per_video,
        ];
        if sizes.iter().any(|&v| v == 0) {
            return fail("dimensions, step counts and samples_per_video must be positive".into());
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return fail(format!("separation {} must be finite and >= 0", self.separation));
        }
        Ok(())
    }
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn draw_block(rng: &mut ChaCha8Rng, steps: usize, center: &[f64], scale: f64) -> Tensor {
    let dim = center.len();
    let data = (0..steps * dim)
        .map(|i| scale * center[i % dim] + rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::from_parts(vec![steps, dim], data)
}

/// Draws a dataset in memory.
pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let k = spec.class_names.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let eye_dirs: Vec<_> = (0..k).map(|_| unit_direction(&mut rng, spec.eye_dim)).collect();
    let ppg_dirs: Vec<_> = (0..k).map(|_| unit_direction(&mut rng, spec.ppg_dim)).collect();
    let mut sem_dirs: Vec<_> = (0..k).map(|_| unit_direction(&mut rng, spec.semantic_dim)).collect();
    if !spec.semantic_informative {
        let shared = sem_dirs[0].clone();
        sem_dirs.iter_mut().for_each(|d| *d = shared.clone());
    }

    let total: usize = spec.counts.iter().sum();
    let width = total.to_string().len().max(4);
    let mut samples = Vec::with_capacity(total);
    let mut index = 0;
    for (class, &count) in spec.counts.iter().enumerate() {
        let mut semantic = None;
        for i in 0..count {
            let video = i / spec.samples_per_video;
            if i % spec.samples_per_video == 0 {
                semantic = Some(draw_block(
                    &mut rng,
                    spec.semantic_steps,
                    &sem_dirs[class],
                    spec.separation,
                ));
            }
            let eye = draw_block(&mut rng, spec.eye_steps, &eye_dirs[class], spec.separation);
            let ppg = draw_block(&mut rng, spec.ppg_steps, &ppg_dirs[class], spec.separation);
            samples.push(Sample {
                id: format!("s{index:0width$}"),
                label: class,
                eye,
                ppg,
                semantic: semantic.clone().expect("drawn at first sample of each video"),
                video_id: format!("v{class}_{video:04}"),
            });
            index += 1;
        }
    }
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(Dataset {
        class_names: spec.class_names.clone(),
        dims: FeatureDims {
            eye: spec.eye_dim,
            ppg: spec.ppg_dim,
            semantic: spec.semantic_dim,
        },
        samples,
    })
}

/// Draws a dataset and writes it under `dir` (manifest, CSV files and a
/// README describing the generating parameters). Returns the manifest path.
pub fn synthesize_dataset(spec: &SynthSpec, dir: &Path) -> Result<(Dataset, PathBuf)> {
    let dataset = generate(spec)?;
    let manifest = write_dataset(&dataset, dir)?;
    let readme = format!(
        "Synthetic multimodal emotion dataset.\n\n\
         Each timestep of every modality is separation * u(modality, class) + N(0, I),\n\
         with u a unit direction drawn from the seed. The semantic block is shared\n\
         by consecutive samples of one video.\n\n\
         seed: {}\n\ngenerating parameters:\n{}\n",
        spec.seed,
        serde_json::to_string_pretty(spec)?
    );
    let path = dir.join("README.txt");
    fs::write(&path, readme).map_err(|e| Error::io(&path, e))?;
    Ok((dataset, manifest))
}
