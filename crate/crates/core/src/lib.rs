//! Deep multi-task attribute estimation.
//!
//! A shared feature trunk feeds one head per heterogeneous attribute
//! category: nominal categories are trained with softmax cross-entropy and
//! ordinal categories with a squared Euclidean loss. The crate carries its
//! own reverse-mode differentiation engine ([`tensor`]), the layer stack
//! ([`layers`]), the multi-task model and objective ([`dmtl`]), data
//! ingestion and synthetic generation ([`data`]), SGD training with
//! bit-exact checkpoints ([`train`]) and the metric suite ([`eval`]).

// Negated comparisons deliberately reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod dmtl;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod layers;
pub mod tensor;
pub mod train;

pub use data::{Dataset, LabelRecord};
pub use dmtl::{AttributeCatalog, DmtlModel, Prediction};
pub use error::{Error, ErrorClass, Result};
pub use layers::{LayerSpec, Mode, Network, ParameterSet};
pub use tensor::{Graph, NodeId, Precision, Scalar, Tensor};
pub use train::{train_loop, TrainConfig, Trainer};
