//! Confusion matrix, macro scores and one-vs-rest ROC for a trained model,
//! then the report written as JSON plus ROC points as CSV.

use emofuse::data::{generate, SynthSpec};
use emofuse::metrics::evaluate;
use emofuse::model::{Architecture, Model, ModelConfig};
use emofuse::report::{write_json, write_roc_csv};
use emofuse::training::{fit, Monitor, TrainConfig};
use emofuse::Result;

fn main() -> Result<()> {
    let train = generate(&SynthSpec::balanced(30, 2.0, 1))?;
    let test = generate(&SynthSpec::balanced(15, 2.0, 2))?;
    let config = ModelConfig {
        d_model: 8,
        heads: 2,
        d_k: 8,
        d_v: 4,
        conv_filters: 4,
        hidden: 8,
        ..ModelConfig::default()
    };
    let mut model = Model::new(config, Architecture::default(), train.dims)?;
    let cfg = TrainConfig {
        max_epochs: 30,
        learning_rate: 1e-2,
        monitor: Monitor::TrainLoss,
        ..TrainConfig::default()
    };
    fit(&mut model, &train.samples, None, &cfg)?;

    let report = evaluate(&model, &test.samples, &test.class_names, "test")?;
    println!("accuracy {:.3}, macro recall {:.3}, macro F1 {:.3}", report.accuracy, report.macro_recall, report.macro_f1);
    for (name, row) in report.class_names.iter().zip(&report.confusion.counts) {
        println!("{name:>10} {row:?}");
    }
    for curve in &report.roc {
        println!("AUC {}: {:?}", report.class_names[curve.class], curve.auc);
    }
    let dir = std::env::temp_dir().join("emofuse-metrics-example");
    write_json(&dir.join("report.json"), &report)?;
    write_roc_csv(&dir.join("roc.csv"), &report.roc)?;
    println!("wrote {}", dir.display());
    Ok(())
}
