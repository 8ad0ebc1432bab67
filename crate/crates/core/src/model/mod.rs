//! From-scratch vision and text transformers with late fusion, training and checkpoints.

pub mod attention;
pub mod block;
pub mod checkpoint;
pub mod encoder;
pub mod fusion;
pub mod layers;
pub mod linalg;
pub mod loss;
pub mod optim;
pub mod params;
pub mod train;
pub mod window;

pub use attention::{masked_softmax, scaled_dot_attention, AttentionMask};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use encoder::{EncoderCache, EncoderConfig, TextEncoderConfig, TextEncoder, VisionEncoder};
pub use fusion::{backward_with, encode_all, forward_with, fuse_and_classify, FusionModel, ModelConfig, ModelInput, Task};
pub use loss::{bce_with_logits, sigmoid};
pub use optim::AdamW;
pub use params::{Grads, ParamId, ParamStore};
pub use train::{batch_gradient, predict, train, train_step, Example, EpochRecord, TrainConfig, TrainOutcome};
pub use window::{cyclic_shift, cyclic_unshift, window_partition, window_reverse};
