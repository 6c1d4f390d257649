//! Pretraining, fine-tuning, few-shot evaluation and best@K.

mod eval;
mod pretrain;

pub use eval::{
    best_at_k, context_indices, evaluate_fewshot, geomean, mean_std, optimize, write_loss_curve, EvalReport, FineTuned, InContextPredictor,
    OptEntry, OptReport, ProgramEval, DEFAULT_SEEDS,
};
pub use pretrain::{finetune, pretrain, sample_training_sequence, Preset, TrainConfig, TrainOutcome};
