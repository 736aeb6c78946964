//! Reverse-mode gradients of a small two-layer network against central
//! finite differences.

use emofuse::autodiff::{dense, finite_diff_grad, relative_error, Tape};
use emofuse::{Result, Tensor};

fn loss(x: &Tensor, w1: &Tensor, w2: &Tensor, want_grads: bool) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let (a, b) = (tape.param(w1.clone()), tape.param(w2.clone()));
    let zero1 = tape.constant(Tensor::zeros(&[w1.cols()]));
    let zero2 = tape.constant(Tensor::zeros(&[w2.cols()]));
    let h = dense(&mut tape, xv, a, zero1)?;
    let h = tape.tanh(h);
    let out = dense(&mut tape, h, b, zero2)?;
    let sq = tape.sum_squares(out);
    let value = tape.value(sq).item();
    if !want_grads {
        return Ok((value, vec![]));
    }
    let grads = tape.backward(sq)?;
    Ok((value, vec![grads.wrt(a)?.clone(), grads.wrt(b)?.clone()]))
}

fn main() -> Result<()> {
    let x = Tensor::from_rows(&[[0.5, -1.0, 2.0], [1.5, 0.3, -0.7]])?;
    let w1 = Tensor::from_rows(&[[0.2, -0.4], [0.7, 0.1], [-0.3, 0.5]])?;
    let w2 = Tensor::from_rows(&[[1.1], [-0.6]])?;
    let (value, analytic) = loss(&x, &w1, &w2, true)?;
    println!("loss = {value:.6}");

    let n1 = finite_diff_grad(|p| Ok(loss(&x, p, &w2, false)?.0), &w1, 1e-5)?;
    let n2 = finite_diff_grad(|p| Ok(loss(&x, &w1, p, false)?.0), &w2, 1e-5)?;
    for (name, a, n) in [("w1", &analytic[0], &n1), ("w2", &analytic[1], &n2)] {
        println!("{name}: relative error {:.2e}", relative_error(a, n, 1e-8));
    }
    Ok(())
}
