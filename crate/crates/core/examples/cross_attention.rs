//! One directed cross-attention pair: queries from one sequence, keys and
//! values from another, mean-pooled over time. Shuffling either time axis
//! leaves the pooled vector unchanged.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use emofuse::autodiff::Tape;
use emofuse::model::{pair_weight, AttentionParams, DenseParams};
use emofuse::{Result, Tensor};

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn pooled(q: &Tensor, kv: &Tensor, p: &AttentionParams<Tensor>, heads: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let params = AttentionParams {
        query: tape.constant(p.query.clone()),
        key: tape.constant(p.key.clone()),
        value: tape.constant(p.value.clone()),
        output: DenseParams {
            weight: tape.constant(p.output.weight.clone()),
            bias: tape.constant(p.output.bias.clone()),
        },
    };
    let (qv, kvv) = (tape.constant(q.clone()), tape.constant(kv.clone()));
    let w = pair_weight(&mut tape, qv, kvv, &params, heads)?;
    Ok(tape.value(w).clone())
}

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (d, heads, d_k, d_v) = (8, 4, 6, 4);
    let p = AttentionParams {
        query: random(&mut rng, &[d, heads * d_k]),
        key: random(&mut rng, &[d, heads * d_k]),
        value: random(&mut rng, &[d, heads * d_v]),
        output: DenseParams {
            weight: random(&mut rng, &[heads * d_v, d]),
            bias: random(&mut rng, &[d]),
        },
    };
    let eye = random(&mut rng, &[6, d]);
    let ppg = random(&mut rng, &[9, d]);
    let w = pooled(&eye, &ppg, &p, heads)?;
    println!("pair weight (eye queries, ppg keys): {:.4?}", w.data());

    let mut order: Vec<usize> = (0..9).collect();
    order.shuffle(&mut rng);
    let shuffled = Tensor::from_rows(&order.iter().map(|&i| ppg.row(i).to_vec()).collect::<Vec<_>>())?;
    let moved = pooled(&eye, &shuffled, &p, heads)?;
    println!("after shuffling the key sequence, max change {:.1e}", w.max_abs_diff(&moved).unwrap());
    Ok(())
}
