//! Point embedding network, its reverse-mode gradients, Adam, and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod net;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use net::{EmbeddingNet, Forward, Layer, Linear, NetConfig, Params};
