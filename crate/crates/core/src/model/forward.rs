use super::params::{AttentionParams, ClassifierParams, DenseParams, EncoderParams, ModelParams};
use super::{Architecture, Pair};
use crate::autodiff::{dense, lstm_seq, Tape, Var};
use crate::data::{Modality, Sample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sequence encoder: `conv1d_k1 → ReLU → LSTM` when a conv is present,
/// otherwise the LSTM alone. Returns every hidden state (`T × d_model`).
pub fn encode(tape: &mut Tape, x: Var, params: &EncoderParams<Var>) -> Result<Var> {
    let input = match &params.conv {
        Some(conv) => {
            let z = dense(tape, x, conv.weight, conv.bias)?;
            tape.relu(z)
        }
        None => x,
    };
    let units = tape.value(params.lstm.w_recurrent).rows();
    let h0 = tape.constant(Tensor::zeros(&[units]));
    let c0 = tape.constant(Tensor::zeros(&[units]));
    lstm_seq(tape, input, &params.lstm, h0, c0)
}

fn head_widths(params: &AttentionParams<Var>, tape: &Tape, heads: usize) -> Result<(usize, usize)> {
    let qk_width = tape.value(params.query).cols();
    let v_width = tape.value(params.value).cols();
    if heads == 0 || qk_width % heads != 0 || v_width % heads != 0 {
        return Err(Error::InvalidArgument(format!(
            "projection widths {qk_width}/{v_width} do not split into {heads} heads"
        )));
    }
    Ok((qk_width / heads, v_width / heads))
}

/// Scaled dot-product attention per head on already projected `q`, `k`,
/// `v`; the head outputs are joined side by side.
fn attend(tape: &mut Tape, q: Var, k: Var, v: Var, heads: usize, d_k: usize, d_v: usize) -> Result<Var> {
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut outputs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                tape.slice_cols(q, h * d_k, d_k)?,
                tape.slice_cols(k, h * d_k, d_k)?,
                tape.slice_cols(v, h * d_v, d_v)?,
            )
        };
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, scale);
        let weights = tape.softmax(scores);
        outputs.push(tape.matmul(weights, vh)?);
    }
    if heads == 1 {
        Ok(outputs[0])
    } else {
        tape.concat_cols(&outputs)
    }
}

/// Multi-head cross-attention with queries from `query_seq` and keys and
/// values from `kv_seq`. Output is `T_q × d_model`.
pub fn mha(tape: &mut Tape, query_seq: Var, kv_seq: Var, params: &AttentionParams<Var>, heads: usize) -> Result<Var> {
    let (d_k, d_v) = head_widths(params, tape, heads)?;
    let q = tape.matmul(query_seq, params.query)?;
    let k = tape.matmul(kv_seq, params.key)?;
    let v = tape.matmul(kv_seq, params.value)?;
    let joined = attend(tape, q, k, v, heads, d_k, d_v)?;
    dense(tape, joined, params.output.weight, params.output.bias)
}

/// Mean over the query-time axis of the pair's attention output.
pub fn pair_weight(tape: &mut Tape, f_m1: Var, f_m2: Var, params: &AttentionParams<Var>, heads: usize) -> Result<Var> {
    let attended = mha(tape, f_m1, f_m2, params, heads)?;
    tape.mean_rows(attended)
}

/// Stacks the weights of every configured pair, one row per pair, in the
/// order of `fusion`.
pub fn fuse(
    tape: &mut Tape,
    encoded: &[(Modality, Var)],
    fusion: &[(Pair, AttentionParams<Var>)],
    heads: usize,
) -> Result<Var> {
    let lookup = |m: Modality| {
        encoded
            .iter()
            .find(|(k, _)| *k == m)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::InvalidArgument(format!("no encoding for modality {m}")))
    };
    let mut rows = Vec::with_capacity(fusion.len());
    for (pair, params) in fusion {
        let (a, b) = (lookup(pair.query)?, lookup(pair.key)?);
        rows.push(pair_weight(tape, a, b, params, heads)?);
    }
    tape.concat_rows(&rows)
}

/// Per-column mean and population std over the stack rows, concatenated.
pub fn pool_stack(tape: &mut Tape, stack: Var) -> Result<Var> {
    let mean = tape.mean_rows(stack)?;
    let std = tape.std_rows(stack)?;
    tape.concat_cols(&[mean, std])
}

fn dense_layer(tape: &mut Tape, x: Var, p: &DenseParams<Var>) -> Result<Var> {
    dense(tape, x, p.weight, p.bias)
}

/// `softmax(W₂·ReLU(W₁·x + b₁) + b₂)` for a feature vector or a batch of rows.
pub fn classify(tape: &mut Tape, features: Var, params: &ClassifierParams<Var>) -> Result<Var> {
    let hidden = dense_layer(tape, features, &params.hidden)?;
    let hidden = tape.relu(hidden);
    let logits = dense_layer(tape, hidden, &params.output)?;
    Ok(tape.softmax(logits))
}

fn encode_sample(
    tape: &mut Tape,
    params: &ModelParams<Var>,
    arch: &Architecture,
    sample: &Sample,
) -> Result<Vec<(Modality, Var)>> {
    let mut encoded = Vec::with_capacity(arch.modalities.len());
    for &m in &arch.modalities {
        let p = params
            .encoder(m)
            .ok_or_else(|| Error::InvalidArgument(format!("no encoder parameters for modality {m}")))?;
        let x = tape.constant(sample.modality(m).clone());
        let e = encode(tape, x, p).map_err(|e| match e {
            Error::Shape { .. } => Error::Sample {
                sample: sample.id.clone(),
                path: Default::default(),
                msg: format!("{m} input: {e}"),
            },
            other => other,
        })?;
        encoded.push((m, e));
    }
    Ok(encoded)
}

fn mean_pooled(tape: &mut Tape, encoded: &[(Modality, Var)]) -> Result<Var> {
    let pooled = encoded
        .iter()
        .map(|&(_, e)| tape.mean_rows(e))
        .collect::<Result<Vec<_>>>()?;
    if pooled.len() == 1 {
        Ok(pooled[0])
    } else {
        tape.concat_cols(&pooled)
    }
}

/// The classifier input for one sample: pooled pair weights with
/// cross-attention, otherwise the concatenated time-means of the encodings.
pub fn sample_features(
    tape: &mut Tape,
    params: &ModelParams<Var>,
    arch: &Architecture,
    heads: usize,
    sample: &Sample,
) -> Result<Var> {
    let encoded = encode_sample(tape, params, arch, sample)?;
    if arch.uses_attention() {
        let stack = fuse(tape, &encoded, &params.fusion, heads)?;
        pool_stack(tape, stack)
    } else {
        mean_pooled(tape, &encoded)
    }
}

/// Per-head products of the projection weights. `Q_h K_hᵀ` equals
/// `X_q (W_q,h W_k,hᵀ) X_kᵀ` and head `h`'s share of the output projection
/// equals `A_h X_k (W_v,h W_o,h)`, so attention can work at model width
/// instead of projecting every step to `H·d_k`.
fn merged_heads(tape: &mut Tape, params: &AttentionParams<Var>, heads: usize) -> Result<(Var, Var, usize, usize)> {
    let (d_k, d_v) = head_widths(params, tape, heads)?;
    let width = tape.value(params.query).rows();
    let out_width = tape.value(params.output.weight).cols();
    let mut qk = Vec::with_capacity(heads);
    let mut vo = Vec::with_capacity(heads);
    for h in 0..heads {
        let wq = tape.slice_cols(params.query, h * d_k, d_k)?;
        let wk = tape.slice_cols(params.key, h * d_k, d_k)?;
        let wkt = tape.transpose(wk)?;
        qk.push(tape.matmul(wq, wkt)?);
        let wv = tape.slice_cols(params.value, h * d_v, d_v)?;
        let wo = tape.slice_rows(params.output.weight, h * d_v, d_v)?;
        vo.push(tape.matmul(wv, wo)?);
    }
    let qk = tape.concat_cols(&qk)?;
    let vo = tape.concat_cols(&vo)?;
    let scale = 1.0 / (d_k as f64).sqrt();
    let qk = tape.scale(qk, scale);
    Ok((qk, vo, width, out_width))
}

/// Same values as running `fuse` + `pool_stack` per sample (up to
/// rounding), but every projection runs once over the whole batch.
fn batched_fusion(
    tape: &mut Tape,
    encoded: &[Vec<(Modality, Var)>],
    fusion: &[(Pair, AttentionParams<Var>)],
    heads: usize,
) -> Result<Vec<Var>> {
    // per modality: all samples stacked, plus each sample's (offset, steps)
    let mut stacked: Vec<(Modality, Var, Vec<(usize, usize)>)> = Vec::new();
    for (i, &(m, _)) in encoded[0].iter().enumerate() {
        let parts: Vec<Var> = encoded.iter().map(|e| e[i].1).collect();
        let mut spans = Vec::with_capacity(parts.len());
        let mut offset = 0;
        for &p in &parts {
            let t = tape.value(p).rows();
            spans.push((offset, t));
            offset += t;
        }
        stacked.push((m, tape.concat_rows(&parts)?, spans));
    }
    let lookup = |m: Modality| {
        stacked
            .iter()
            .find(|(k, _, _)| *k == m)
            .ok_or_else(|| Error::InvalidArgument(format!("no encoding for modality {m}")))
    };

    let mut pair_rows = vec![Vec::with_capacity(fusion.len()); encoded.len()];
    for (pair, params) in fusion {
        let (qk, vo, width, out_width) = merged_heads(tape, params, heads)?;
        let (_, query_all, q_spans) = lookup(pair.query)?;
        let (_, kv_all, kv_spans) = lookup(pair.key)?;
        let queries = tape.matmul(*query_all, qk)?;
        let values = tape.matmul(*kv_all, vo)?;
        for (rows, (&(qo, qt), &(ko, kt))) in pair_rows.iter_mut().zip(q_spans.iter().zip(kv_spans)) {
            let q = tape.slice_rows(queries, qo, qt)?;
            let keys = tape.slice_rows(*kv_all, ko, kt)?;
            let keys = tape.transpose(keys)?;
            let v = tape.slice_rows(values, ko, kt)?;
            let mut total = None;
            for h in 0..heads {
                let qh = if heads == 1 { q } else { tape.slice_cols(q, h * width, width)? };
                let vh = if heads == 1 { v } else { tape.slice_cols(v, h * out_width, out_width)? };
                let scores = tape.matmul(qh, keys)?;
                let weights = tape.softmax(scores);
                let out = tape.matmul(weights, vh)?;
                total = Some(match total {
                    None => out,
                    Some(acc) => tape.add(acc, out)?,
                });
            }
            let attended = tape.add_bias(total.expect("at least one head"), params.output.bias)?;
            rows.push(tape.mean_rows(attended)?);
        }
    }
    pair_rows
        .into_iter()
        .map(|rows| {
            let stack = tape.concat_rows(&rows)?;
            pool_stack(tape, stack)
        })
        .collect()
}

/// Class probabilities (`B × K`) and classifier inputs (`B × F`) for a batch.
pub fn forward_batch(
    tape: &mut Tape,
    params: &ModelParams<Var>,
    arch: &Architecture,
    heads: usize,
    samples: &[&Sample],
) -> Result<(Var, Var)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let encoded = samples
        .iter()
        .map(|s| encode_sample(tape, params, arch, s))
        .collect::<Result<Vec<_>>>()?;
    let rows = if arch.uses_attention() {
        batched_fusion(tape, &encoded, &params.fusion, heads)?
    } else {
        encoded
            .iter()
            .map(|e| mean_pooled(tape, e))
            .collect::<Result<Vec<_>>>()?
    };
    let features = tape.concat_rows(&rows)?;
    let probs = classify(tape, features, &params.classifier)?;
    Ok((probs, features))
}
