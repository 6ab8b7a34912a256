//! Dense autodiff and the Score2Lead / Lead2Score transformers.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod infer;
pub mod layers;
pub mod model;
pub mod optim;

pub use graph::{Gradients, Graph, Param, ParamId, ParamStore, Var};
pub use model::{DecodeOptions, L2SModel, LeadAe, ModelConfig, S2LModel};
pub use optim::{Adam, AdamConfig};
