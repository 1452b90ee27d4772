//! Embedding network, synthetic data, SGD trainer and gradient checks.

mod gradcheck;
mod mlp;
mod synth;
mod trainer;

pub use gradcheck::{
    compare, gradcheck, model_gradcheck, rel_err, GradTarget, GradcheckReport, DEFAULT_H, REL_ERR_FLOOR,
};
pub use mlp::{Activation, EmbeddingForward, ForwardCache, Gradients, Layer, MlpModel};
pub use synth::{synth_dataset, synth_split, Dataset, SynthConfig, Task};
pub use trainer::{
    binary_config, embedding_eer, score_auc, train_loop, MetricKind, Objective, TrainConfig, TrainOutcome, TrainReport,
};
