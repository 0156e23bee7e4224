//! Sequence descriptors, the embedding network and its triplet training.

pub mod descriptor;
pub mod dual;
pub mod io;
pub mod model;
pub mod probe;
pub mod triplet;

pub use descriptor::{
    appearance_descriptor, appearance_descriptor_with, geometric_descriptor, Binning, Descriptor,
    DescriptorError, DescriptorKind,
};
pub use io::{read_descriptor_csv, write_descriptor_csv, Checkpoint, IoError};
pub use model::{EmbeddingModel, Gradients, InputNorm, Layer, ModelError};
pub use probe::{train_probe, LinearProbe, ProbeConfig};
pub use triplet::{
    batch_hard_eval, batch_hard_mine, gradient_check, train_embedding, triplet_batch_eval, triplet_loss,
    GradCheckReport, MineError, TrainConfig, TrainError, TrainResult, Triplet,
};
