//! Cross-validated training of the trimodal cross-attention model on a
//! synthetic dataset, with a per-fold summary.
//!
//! `cargo run --release --example train_synthetic -- [per_class] [epochs]`

use emofuse::data::{generate, SynthSpec};
use emofuse::model::ModelConfig;
use emofuse::training::{run_cv, Experiment};
use emofuse::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let per_class: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(60);
    let epochs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(40);

    let data = generate(&SynthSpec::balanced(per_class, 2.0, 7))?;
    let mut exp = Experiment::default().with_seed(7);
    exp.model = ModelConfig {
        d_model: 16,
        heads: 2,
        d_k: 16,
        d_v: 8,
        conv_filters: 8,
        hidden: 16,
        ..exp.model
    };
    exp.train.max_epochs = epochs;
    exp.folds = 3;

    let out = run_cv(&data, &exp, &mut ())?;
    for f in &out.folds {
        println!(
            "fold {}: {} epochs (best {:?}), validation {:.1}%, test {:.1}%",
            f.fold,
            f.record.epochs.len(),
            f.record.best_epoch,
            100.0 * f.validation.accuracy,
            100.0 * f.test.accuracy
        );
    }
    let a = &out.aggregate;
    println!(
        "test accuracy {:.2} ± {:.2}%, macro F1 {:.3}, {} parameters",
        100.0 * a.test_accuracy.mean,
        100.0 * a.test_accuracy.std,
        a.test_macro_f1.mean,
        a.param_count
    );
    Ok(())
}
