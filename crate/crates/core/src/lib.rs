//! Graph representation learning features blended into a gradient-boosted
//! credit-scoring model.

pub mod egofeat;
pub mod error;
pub mod eval;
pub mod explain;
pub mod frame;
pub mod gbm;
pub mod gnn;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod n2v;
pub mod netstats;
pub mod pipeline;
pub mod synth;
pub mod study;
mod par;

pub use error::{Error, Result};
