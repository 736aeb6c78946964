//! Per-modality encoders, pairwise cross-attention fusion and the pooled
//! softmax classifier.

mod forward;
mod params;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use forward::{classify, encode, forward_batch, fuse, mha, pair_weight, pool_stack, sample_features};
pub use params::{
    init_params, param_specs, AttentionParams, ClassifierParams, DenseParams, EncoderParams, Init, ModelParams,
    ParamKind, ParamSpec,
};

use crate::autodiff::{Tape, Var};
use crate::data::{FeatureDims, Modality, Sample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MODEL_SCHEMA: &str = "emofuse.model.v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Encoder width (LSTM units) and attention output width.
    pub d_model: usize,
    pub heads: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub conv_filters: usize,
    /// Width of the first classifier layer.
    pub hidden: usize,
    pub num_classes: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            heads: 8,
            d_k: 128,
            d_v: 64,
            conv_filters: 16,
            hidden: 64,
            num_classes: 4,
            seed: 7,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("d_k", self.d_k),
            ("d_v", self.d_v),
            ("conv_filters", self.conv_filters),
            ("hidden", self.hidden),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be positive")));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("model.num_classes must be at least 2".into()));
        }
        Ok(())
    }
}

/// Ordered modality pair: queries from `query`, keys and values from `key`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pair {
    pub query: Modality,
    pub key: Modality,
}

impl Pair {
    /// Stack order of the six directed pairs: es, ps, se, pe, sp, ep.
    pub const STACK_ORDER: [Pair; 6] = {
        use Modality::*;
        [
            Pair { query: Eye, key: Semantic },
            Pair { query: Ppg, key: Semantic },
            Pair { query: Semantic, key: Eye },
            Pair { query: Ppg, key: Eye },
            Pair { query: Semantic, key: Ppg },
            Pair { query: Eye, key: Ppg },
        ]
    };

    pub fn code(self) -> String {
        format!("{}{}", self.query.letter(), self.key.letter())
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

/// Which modalities feed the network and whether they are fused by
/// cross-attention or by concatenating time-means.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub modalities: Vec<Modality>,
    pub cross_attention: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            modalities: Modality::ALL.to_vec(),
            cross_attention: true,
        }
    }
}

impl Architecture {
    /// Sorts and deduplicates the modality list; rejects an empty one.
    pub fn new(modalities: &[Modality], cross_attention: bool) -> Result<Self> {
        let mut modalities = modalities.to_vec();
        modalities.sort();
        modalities.dedup();
        if modalities.is_empty() {
            return Err(Error::Config("at least one modality must be selected".into()));
        }
        Ok(Architecture { modalities, cross_attention })
    }

    pub fn uses_attention(&self) -> bool {
        self.cross_attention && self.modalities.len() >= 2
    }

    /// The directed pairs among the selected modalities, in stack order.
    pub fn pairs(&self) -> Vec<Pair> {
        if !self.uses_attention() {
            return Vec::new();
        }
        Pair::STACK_ORDER
            .into_iter()
            .filter(|p| self.modalities.contains(&p.query) && self.modalities.contains(&p.key))
            .collect()
    }

    /// Width of the classifier input.
    pub fn feature_width(&self, config: &ModelConfig) -> usize {
        if self.uses_attention() {
            2 * config.d_model
        } else {
            self.modalities.len() * config.d_model
        }
    }

    /// Short label such as `em+ppg+vsi+ca`.
    pub fn label(&self) -> String {
        let mut parts: Vec<&str> = self.modalities.iter().map(|m| m.tag()).collect();
        if self.uses_attention() {
            parts.push("ca");
        }
        parts.join("+")
    }
}

impl FromStr for Architecture {
    type Err = Error;

    /// Parses `em,ppg,vsi` or `em+ppg+vsi+ca`; cross-attention is on only
    /// when `ca` appears in the list.
    fn from_str(s: &str) -> Result<Self> {
        let mut modalities = Vec::new();
        let mut ca = false;
        for token in s.split([',', '+']).map(str::trim).filter(|t| !t.is_empty()) {
            if token.eq_ignore_ascii_case("ca") {
                ca = true;
            } else {
                modalities.push(token.parse()?);
            }
        }
        Architecture::new(&modalities, ca)
    }
}

/// A network with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub arch: Architecture,
    /// Input widths seen by the encoders (semantic after PCA).
    pub dims: FeatureDims,
    pub params: ModelParams<Tensor>,
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema: String,
    config: ModelConfig,
    architecture: Architecture,
    input_dims: FeatureDims,
    parameters: Vec<NamedTensor>,
}

impl Model {
    pub fn new(config: ModelConfig, arch: Architecture, dims: FeatureDims) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, &arch, &dims, config.seed);
        Ok(Model { config, arch, dims, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Places every parameter on `tape`, as trainable leaves or as constants.
    pub fn on_tape(&self, tape: &mut Tape, trainable: bool) -> ModelParams<Var> {
        self.params.map(&mut |_, _, t| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        })
    }

    fn run<T>(&self, samples: &[Sample], mut pick: impl FnMut(&Tape, Var, Var) -> T) -> Result<Vec<T>> {
        const CHUNK: usize = 64;
        let mut out = Vec::new();
        for chunk in samples.chunks(CHUNK) {
            let mut tape = Tape::new();
            let params = self.on_tape(&mut tape, false);
            let refs: Vec<&Sample> = chunk.iter().collect();
            let (probs, features) = forward_batch(&mut tape, &params, &self.arch, self.config.heads, &refs)?;
            out.push(pick(&tape, probs, features));
        }
        Ok(out)
    }

    /// Class probabilities, one row per sample.
    pub fn predict(&self, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
        let k = self.config.num_classes;
        let parts = self.run(samples, |tape, probs, _| {
            tape.value(probs).data().chunks_exact(k).map(<[f64]>::to_vec).collect::<Vec<_>>()
        })?;
        Ok(parts.into_iter().flatten().collect())
    }

    /// Classifier inputs (the pooled fusion features), one row per sample.
    pub fn features(&self, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
        let parts = self.run(samples, |tape, _, features| {
            let v = tape.value(features);
            v.data().chunks_exact(v.cols()).map(<[f64]>::to_vec).collect::<Vec<_>>()
        })?;
        Ok(parts.into_iter().flatten().collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let parameters = self
            .params
            .entries()
            .into_iter()
            .map(|(name, _, t)| NamedTensor {
                name,
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect();
        let file = ModelFile {
            schema: MODEL_SCHEMA.to_string(),
            config: self.config.clone(),
            architecture: self.arch.clone(),
            input_dims: self.dims,
            parameters,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.schema != MODEL_SCHEMA {
            return Err(Error::InvalidArgument(format!(
                "unsupported model schema `{}`, expected `{MODEL_SCHEMA}`",
                file.schema
            )));
        }
        file.config.validate()?;
        let arch = Architecture::new(&file.architecture.modalities, file.architecture.cross_attention)?;
        let specs = param_specs(&file.config, &arch, &file.input_dims);
        let mut stored = file.parameters.into_iter();
        let mut failure = None;
        let params = specs.map(&mut |name, _, spec| {
            let placeholder = || Tensor::zeros(&spec.shape);
            match stored.next() {
                Some(t) if t.name == name && t.shape == spec.shape => match Tensor::new(t.shape, t.data) {
                    Ok(t) => t,
                    Err(e) => {
                        failure.get_or_insert(Error::InvalidArgument(format!("parameter {name}: {e}")));
                        placeholder()
                    }
                },
                other => {
                    failure.get_or_insert(Error::InvalidArgument(format!(
                        "parameter {name} with shape {:?} expected, found {:?}",
                        spec.shape,
                        other.map(|t| (t.name, t.shape))
                    )));
                    placeholder()
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if let Some(extra) = stored.next() {
            return Err(Error::InvalidArgument(format!("unexpected parameter {}", extra.name)));
        }
        Ok(Model {
            config: file.config,
            arch,
            dims: file.input_dims,
            params,
        })
    }
}
