//! Surrogate GNN ensemble, synthetic functions and weak labels.

mod encoder;
mod ensemble;
mod gp;
mod regressor;
mod weak;

pub use encoder::{GnnConfig, GnnEncoder, GraphBatch, NODE_INPUT};
pub use ensemble::{spawn_synthetic_function, train_ensemble, Ensemble, EnsembleConfig, EnsembleReport, SyntheticFunction};
pub use gp::{gp_weak_labels, padded_features, GpFunction, GpPrior, GP_JITTER};
pub use regressor::{FitOptions, SurrogateRegressor};
pub use weak::{
    build_hybrid_dataset, generate_weak_designs, generate_weak_labels, is_weak_draw, sample_configs, Context, HybridDataset, HybridSpec,
    WeakSource,
};

use crate::kernel::Kernel;
use crate::oracle::LabeledDesign;

/// A program, its default-design latency and whatever labels it has.
#[derive(Clone, Debug, PartialEq)]
pub struct ProgramData {
    pub kernel: Kernel,
    pub base_latency: u64,
    pub designs: Vec<LabeledDesign>,
}
