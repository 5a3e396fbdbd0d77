//! Dense and attention layers with hand-written backward passes, an Adam
//! optimizer, finite-difference gradient checks and a compact checkpoint
//! format. All arithmetic is `f64`; checkpoints store `f32`.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod matrix;
pub mod network;
pub mod param;
pub mod spec;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, TensorRecord};
pub use error::{NetError, Result};
pub use gradcheck::{grad_check, grad_check_input};
pub use matrix::Matrix;
pub use network::Network;
pub use param::Param;
pub use spec::{Activation, LayerSpec, NetSpec};
