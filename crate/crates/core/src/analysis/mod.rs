//! Evaluation metrics, post-selection and attribution.

pub mod attribution;
pub mod metrics;

pub use attribution::{integrated_gradients, map_attributions_to_qubits, top_k, Attribution};
pub use metrics::{logical_error_rate, postselect, wilson_interval, EvalReport, PostselectReport};
