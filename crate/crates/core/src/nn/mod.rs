//! Compact CNN: layer specs, forward/backward, SGD training and checkpoints.

pub mod gradcheck;
pub mod io;
pub mod kernels;
pub mod network;
pub mod real;
pub mod spec;
pub mod train;

pub use gradcheck::{grad_check, grad_check_report, GradCheckReport};
pub use io::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use network::{
    argmax, forward, image_to_input, init_network, predict, transfer_head, Checkpoint, LayerParams, ParamArray,
    Predictor, TrainMeta, FORMAT_VERSION,
};
pub use real::{DType, Real};
pub use spec::{InputShape, LayerSpec, NetworkSpec};
pub use train::{gradient, mean_loss, train, Hyper, Sample, TrainOutcome};
