// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conjugate;
pub mod data;
pub mod error;
pub mod metrics;
pub mod network;
pub mod optimizer;
pub mod predictive;
pub mod priors;
pub mod random;
pub mod tape;
pub mod tensor;
pub mod variational;

pub use data::{Dataset, InputDesign, Standardization, Targets, Task};
pub use error::{Error, Result};
pub use network::{Activation, FlatParams, NetworkSpec};
pub use priors::{PriorSpec, ScaleBase, StudentT};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{ElementwiseOp, Tensor};
pub use variational::{ElboEstimate, ElboGradient, Objective, VariationalState};
pub use optimizer::{AdamState, LrSchedule, TrainConfig};
pub use predictive::PredictiveSummary;
