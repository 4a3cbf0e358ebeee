//! Audio-visual video parsing with class-aware feature decoupling and
//! fine-grained semantic enhancement.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`]: dense `f64` tensors, a reverse-mode [`Graph`] and a
//!   finite-difference gradient checker.
//! * [`model`]: the network. Holistic features are decoupled into per-class
//!   and background slices, enhanced by stacked co-occurrence / local-global
//!   layers, and parsed into segment and video probabilities.
//! * [`losses`]: classification, reconstruction, orthogonality and
//!   co-occurrence objectives and their weighted total.
//! * [`metrics`]: segment- and event-level F-scores.
//! * [`data`]: synthetic corpus generation and the on-disk formats.
//! * [`train`]: AdamW training, checkpoints and evaluation.
//! * [`export`]: co-occurrence maps and decoupled embeddings for inspection.

pub mod data;
pub mod error;
pub mod export;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use data::{Annotations, BinaryGrid, Dataset, SynthConfig, VideoSample};
pub use error::{Error, ErrorKind, MmctError, Result};
pub use losses::{LossConfig, LossToggles, LossValues, OrtMode};
pub use metrics::{MetricReport, Protocol};
pub use model::{Ablation, ForwardTrace, LgsfResidual, MmilMode, ModelConfig, ModelParams};
pub use tensor::{Graph, Tensor, Var};
pub use train::{AdamW, OptimState, StepRecord, TrainConfig};
