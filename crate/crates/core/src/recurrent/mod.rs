//! LSTM and GRU cells, the bidirectional LSTM layer, and the three sequence
//! classifiers built from them:
//!
//! * `bilstm` — Bi-LSTM, concatenated state at the last step, dense head.
//! * `gru` — unidirectional GRU, final hidden state, dense head.
//! * `hybrid` — Bi-LSTM over the whole sequence feeding a GRU, dense head.
//!
//! Dropout sits between layers and is only active in [`Mode::Train`].

mod cells;
mod checkpoint;
mod gradcheck;
mod model;
mod params;

use thiserror::Error;

pub use cells::{bilstm_layer, gru_layer, gru_step, lstm_layer, lstm_step, HiddenState};
pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, relative_error, GradCheckConfig, TensorCheck};
pub use model::{Mode, Model, ModelSpec, Variant, DEFAULT_DROPOUT, DEFAULT_HIDDEN};
pub use params::{BiLstmParams, DenseParams, GruCellParams, LstmCellParams, ModelParams};

use crate::numkit::NumError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension error: {0}")]
    Dimension(#[from] NumError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("sequence must have at least one step")]
    EmptySequence,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
