//! The seven modality and fusion variants side by side on one synthetic
//! dataset.

use emofuse::data::{generate, SynthSpec};
use emofuse::model::ModelConfig;
use emofuse::report::{ablation_suite, standard_ablation};
use emofuse::training::Experiment;
use emofuse::Result;

fn main() -> Result<()> {
    let data = generate(&SynthSpec::balanced(40, 1.5, 3))?;
    let mut exp = Experiment::default().with_seed(3);
    exp.model = ModelConfig {
        d_model: 8,
        heads: 2,
        d_k: 8,
        d_v: 4,
        conv_filters: 4,
        hidden: 8,
        ..exp.model
    };
    exp.train.max_epochs = 25;
    exp.train.learning_rate = 5e-3;
    exp.folds = 2;
    let table = ablation_suite(&data, None, &exp, &standard_ablation(), &mut ())?;
    print!("{}", table.render());
    Ok(())
}
