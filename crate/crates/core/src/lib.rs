//! Two-layer ReLU networks trained toward max-margin KKT points, and the
//! privacy attacks that exploit their margin structure: membership inference
//! in high dimension and training-point reconstruction in one dimension.

pub mod distributions;
pub mod error;
pub mod harness;
pub mod io;
pub mod kkt;
pub mod membership;
pub mod model;
pub mod nnls;
pub mod reconstruct;
pub mod training;

pub use error::{Error, Result};
pub use kkt::{analyze, diagnostic_bounds, estimate_lambdas, margin, DiagnosticBounds, KktReport, Margin};
pub use model::{
    activations, breakpoints, forward, forward_batch, to_piecewise_linear, Label, LabeledDataset, NetworkParams,
    Neuron, PiecewiseLinear, Segment,
};
pub use training::{gradient, init_small, loss, train, train_from, LossKind, TrainConfig, TrainTrace};
