use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Architecture, ModelConfig, Pair};
use crate::autodiff::LstmParams;
use crate::data::{FeatureDims, Modality};
use crate::tensor::Tensor;

/// Weights receive L2 regularization; biases do not.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseParams<T> {
    pub weight: T,
    pub bias: T,
}

/// Conv1D (kernel 1) followed by an LSTM. The semantic encoder has no conv.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams<T> {
    pub conv: Option<DenseParams<T>>,
    pub lstm: LstmParams<T>,
}

/// Multi-head projections for one ordered pair. Head `h` owns columns
/// `h·d_k .. (h+1)·d_k` of `query`/`key` and `h·d_v .. (h+1)·d_v` of `value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams<T> {
    /// `d_model × H·d_k`
    pub query: T,
    /// `d_model × H·d_k`
    pub key: T,
    /// `d_model × H·d_v`
    pub value: T,
    /// `H·d_v → d_model`
    pub output: DenseParams<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams<T> {
    pub hidden: DenseParams<T>,
    pub output: DenseParams<T>,
}

/// Every learnable tensor of the network, generic over storage so the same
/// structure can hold tensors, tape handles or initialization specs.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub eye: Option<EncoderParams<T>>,
    pub ppg: Option<EncoderParams<T>>,
    pub semantic: Option<EncoderParams<T>>,
    /// In stack order.
    pub fusion: Vec<(Pair, AttentionParams<T>)>,
    pub classifier: ClassifierParams<T>,
}

fn map_dense<'a, T, U>(
    prefix: &str,
    d: &'a DenseParams<T>,
    f: &mut impl FnMut(&str, ParamKind, &'a T) -> U,
) -> DenseParams<U> {
    DenseParams {
        weight: f(&format!("{prefix}.weight"), ParamKind::Weight, &d.weight),
        bias: f(&format!("{prefix}.bias"), ParamKind::Bias, &d.bias),
    }
}

fn map_encoder<'a, T, U>(
    prefix: &str,
    e: &'a EncoderParams<T>,
    f: &mut impl FnMut(&str, ParamKind, &'a T) -> U,
) -> EncoderParams<U> {
    EncoderParams {
        conv: e.conv.as_ref().map(|c| map_dense(&format!("{prefix}.conv"), c, f)),
        lstm: LstmParams {
            w_input: f(&format!("{prefix}.lstm.w_input"), ParamKind::Weight, &e.lstm.w_input),
            w_recurrent: f(&format!("{prefix}.lstm.w_recurrent"), ParamKind::Weight, &e.lstm.w_recurrent),
            bias: f(&format!("{prefix}.lstm.bias"), ParamKind::Bias, &e.lstm.bias),
        },
    }
}

impl<T> ModelParams<T> {
    pub fn encoder(&self, m: Modality) -> Option<&EncoderParams<T>> {
        match m {
            Modality::Eye => self.eye.as_ref(),
            Modality::Ppg => self.ppg.as_ref(),
            Modality::Semantic => self.semantic.as_ref(),
        }
    }

    /// Rebuilds the structure with `f(name, kind, value)` applied to every
    /// entry, visiting entries in a fixed order.
    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&str, ParamKind, &'a T) -> U) -> ModelParams<U> {
        let mut enc = |m: Modality, e: &'a Option<EncoderParams<T>>| {
            e.as_ref().map(|e| map_encoder(&format!("encoder.{}", m.tag()), e, &mut *f))
        };
        let eye = enc(Modality::Eye, &self.eye);
        let ppg = enc(Modality::Ppg, &self.ppg);
        let semantic = enc(Modality::Semantic, &self.semantic);
        let fusion = self
            .fusion
            .iter()
            .map(|(pair, a)| {
                let p = format!("fusion.{}", pair.code());
                let mapped = AttentionParams {
                    query: f(&format!("{p}.query"), ParamKind::Weight, &a.query),
                    key: f(&format!("{p}.key"), ParamKind::Weight, &a.key),
                    value: f(&format!("{p}.value"), ParamKind::Weight, &a.value),
                    output: map_dense(&format!("{p}.output"), &a.output, f),
                };
                (*pair, mapped)
            })
            .collect();
        let classifier = ClassifierParams {
            hidden: map_dense("classifier.hidden", &self.classifier.hidden, f),
            output: map_dense("classifier.output", &self.classifier.output, f),
        };
        ModelParams { eye, ppg, semantic, fusion, classifier }
    }

    /// `(name, kind, value)` for every entry in visiting order.
    pub fn entries(&self) -> Vec<(String, ParamKind, &T)> {
        let mut out = Vec::new();
        self.map(&mut |name, kind, t| out.push((name.to_string(), kind, t)));
        out
    }
}

impl ModelParams<Tensor> {
    pub fn count(&self) -> usize {
        self.entries().iter().map(|(_, _, t)| t.numel()).sum()
    }

    /// Mutable access in visiting order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for e in [&mut self.eye, &mut self.ppg, &mut self.semantic].into_iter().flatten() {
            if let Some(c) = &mut e.conv {
                out.push(&mut c.weight);
                out.push(&mut c.bias);
            }
            out.push(&mut e.lstm.w_input);
            out.push(&mut e.lstm.w_recurrent);
            out.push(&mut e.lstm.bias);
        }
        for (_, a) in &mut self.fusion {
            out.push(&mut a.query);
            out.push(&mut a.key);
            out.push(&mut a.value);
            out.push(&mut a.output.weight);
            out.push(&mut a.output.bias);
        }
        let c = &mut self.classifier;
        out.extend([&mut c.hidden.weight, &mut c.hidden.bias, &mut c.output.weight, &mut c.output.bias]);
        out
    }
}

/// Shape plus initializer for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub shape: Vec<usize>,
    pub init: Init,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform on `±√(6/(fan_in + fan_out))`.
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    /// Zeros except the forget-gate block, which is 1.
    LstmBias { units: usize },
}

impl Init {
    pub fn glorot_limit(self) -> Option<f64> {
        match self {
            Init::Glorot { fan_in, fan_out } => Some((6.0 / (fan_in + fan_out) as f64).sqrt()),
            _ => None,
        }
    }
}

fn glorot(rows: usize, cols: usize) -> ParamSpec {
    ParamSpec {
        shape: vec![rows, cols],
        init: Init::Glorot { fan_in: rows, fan_out: cols },
    }
}

fn dense_spec(input: usize, output: usize) -> DenseParams<ParamSpec> {
    DenseParams {
        weight: glorot(input, output),
        bias: ParamSpec { shape: vec![output], init: Init::Zeros },
    }
}

fn lstm_spec(input: usize, units: usize) -> LstmParams<ParamSpec> {
    LstmParams {
        w_input: glorot(input, 4 * units),
        w_recurrent: glorot(units, 4 * units),
        bias: ParamSpec { shape: vec![4 * units], init: Init::LstmBias { units } },
    }
}

/// Shapes and initializers for the given architecture and input widths.
pub fn param_specs(config: &ModelConfig, arch: &Architecture, dims: &FeatureDims) -> ModelParams<ParamSpec> {
    let d = config.d_model;
    let conv_encoder = |input: usize| EncoderParams {
        conv: Some(dense_spec(input, config.conv_filters)),
        lstm: lstm_spec(config.conv_filters, d),
    };
    let uses = |m| arch.modalities.contains(&m);
    let fusion = arch
        .pairs()
        .into_iter()
        .map(|pair| {
            let per_head = |width: usize| ParamSpec {
                shape: vec![d, config.heads * width],
                init: Init::Glorot { fan_in: d, fan_out: width },
            };
            let attention = AttentionParams {
                query: per_head(config.d_k),
                key: per_head(config.d_k),
                value: per_head(config.d_v),
                output: dense_spec(config.heads * config.d_v, d),
            };
            (pair, attention)
        })
        .collect();
    ModelParams {
        eye: uses(Modality::Eye).then(|| conv_encoder(dims.eye)),
        ppg: uses(Modality::Ppg).then(|| conv_encoder(dims.ppg)),
        semantic: uses(Modality::Semantic).then(|| EncoderParams {
            conv: None,
            lstm: lstm_spec(dims.semantic, d),
        }),
        fusion,
        classifier: ClassifierParams {
            hidden: dense_spec(arch.feature_width(config), config.hidden),
            output: dense_spec(config.hidden, config.num_classes),
        },
    }
}

/// Draws initial values in visiting order from a generator seeded with `seed`.
pub fn init_params(config: &ModelConfig, arch: &Architecture, dims: &FeatureDims, seed: u64) -> ModelParams<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    param_specs(config, arch, dims).map(&mut |_, _, spec| {
        let n: usize = spec.shape.iter().product();
        let data = match spec.init {
            Init::Glorot { .. } => {
                let limit = spec.init.glorot_limit().expect("glorot");
                (0..n).map(|_| rng.random_range(-limit..=limit)).collect()
            }
            Init::Zeros => vec![0.0; n],
            Init::LstmBias { units } => (0..n).map(|i| if i / units == 1 { 1.0 } else { 0.0 }).collect(),
        };
        Tensor::from_parts(spec.shape.clone(), data)
    })
}
