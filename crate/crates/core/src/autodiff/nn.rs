//! Layer-level primitives composed from tape operations.

use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Affine map `x·W + b` applied over the last axis of `x`; leading axes are
/// flattened into rows and restored afterwards.
pub fn dense(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let x_shape = tape.value(x).shape().to_vec();
    let w_shape = tape.value(weight).shape().to_vec();
    let b_shape = tape.value(bias).shape().to_vec();
    let input = *x_shape
        .last()
        .ok_or_else(|| Error::shape("dense", &x_shape, &w_shape))?;
    if w_shape.len() != 2 || w_shape[0] != input || b_shape != [w_shape[1]] {
        return Err(Error::shape("dense", &x_shape, &w_shape));
    }
    let output = w_shape[1];
    let rows = tape.value(x).rows();
    let flat = if x_shape.len() == 2 {
        x
    } else {
        tape.reshape(x, &[rows, input])?
    };
    let product = tape.matmul(flat, weight)?;
    let shifted = tape.add_bias(product, bias)?;
    if x_shape.len() == 2 {
        return Ok(shifted);
    }
    let mut out_shape = x_shape;
    *out_shape.last_mut().expect("non-empty") = output;
    tape.reshape(shifted, &out_shape)
}

/// Kernel-size-1 convolution over time for a `T×C_in` sequence. With a
/// single-tap kernel this is the same affine map at every timestep.
pub fn conv1d_k1(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> Result<Var> {
    if tape.value(x).rank() != 2 {
        return Err(Error::shape(
            "conv1d_k1",
            tape.value(x).shape(),
            tape.value(weight).shape(),
        ));
    }
    dense(tape, x, weight, bias)
}

/// Per-column population mean and standard deviation of an `S×D` matrix.
pub fn reduce_mean_std(tape: &mut Tape, x: Var) -> Result<(Var, Var)> {
    let mean = tape.mean_rows(x)?;
    let std = tape.std_rows(x)?;
    Ok((mean, std))
}

/// LSTM weights. Gate blocks along the `4U` axis are ordered
/// input, forget, cell candidate, output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams<T> {
    /// `I × 4U`
    pub w_input: T,
    /// `U × 4U`
    pub w_recurrent: T,
    /// `4U`
    pub bias: T,
}

impl<T> LstmParams<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&str, &T) -> U) -> LstmParams<U> {
        LstmParams {
            w_input: f("w_input", &self.w_input),
            w_recurrent: f("w_recurrent", &self.w_recurrent),
            bias: f("bias", &self.bias),
        }
    }
}

/// Runs an LSTM over a `T×I` sequence and returns every hidden state (`T×U`).
pub fn lstm_seq(
    tape: &mut Tape,
    x: Var,
    params: &LstmParams<Var>,
    h0: Var,
    c0: Var,
) -> Result<Var> {
    let (steps, input) = match *tape.value(x).shape() {
        [t, i] => (t, i),
        ref other => return Err(Error::shape("lstm_seq", other, &[0, 0])),
    };
    let w_in = tape.value(params.w_input).shape().to_vec();
    let w_rec = tape.value(params.w_recurrent).shape().to_vec();
    let units = tape.value(h0).numel();
    let consistent = w_in == [input, 4 * units]
        && w_rec == [units, 4 * units]
        && tape.value(params.bias).shape() == [4 * units]
        && tape.value(c0).numel() == units;
    if !consistent {
        return Err(Error::shape("lstm_seq", &w_in, &w_rec));
    }

    let projected = dense(tape, x, params.w_input, params.bias)?;
    let mut h = tape.reshape(h0, &[1, units])?;
    let mut c = tape.reshape(c0, &[1, units])?;
    let mut outputs = Vec::with_capacity(steps);
    for t in 0..steps {
        let xt = tape.slice_rows(projected, t, 1)?;
        let recurrent = tape.matmul(h, params.w_recurrent)?;
        let z = tape.add(xt, recurrent)?;
        let zi = tape.slice_cols(z, 0, units)?;
        let zf = tape.slice_cols(z, units, units)?;
        let zg = tape.slice_cols(z, 2 * units, units)?;
        let zo = tape.slice_cols(z, 3 * units, units)?;
        let i_gate = tape.sigmoid(zi);
        let f_gate = tape.sigmoid(zf);
        let candidate = tape.tanh(zg);
        let o_gate = tape.sigmoid(zo);
        let kept = tape.mul(f_gate, c)?;
        let written = tape.mul(i_gate, candidate)?;
        c = tape.add(kept, written)?;
        let squashed = tape.tanh(c);
        h = tape.mul(o_gate, squashed)?;
        outputs.push(h);
    }
    tape.concat_rows(&outputs)
}
