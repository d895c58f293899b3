//! Synthetic regression data: random streams, target functions, noise
//! models and dataset assembly.

mod dataset;
pub mod manifold;
mod noise;
mod prng;
mod targets;

pub use dataset::{
    make_dataset, make_dataset_with, sample_inputs, Dataset, DatasetOptions, InputSpec, Provenance,
    DATASET_FORMAT_VERSION,
};
pub use manifold::manifold_inputs;
pub use noise::{sample_noise, NoiseModel};
pub use prng::PrngStream;
pub use targets::{dj_target, ka_pool, CustomTarget, DjKind, KaTarget, TargetFn, TargetSpec};
