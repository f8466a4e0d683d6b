//! Routing and selective answering over a panel of four specialized QA
//! experts.
//!
//! A random-forest correctness classifier scores each expert's answer from
//! question, answer, context and inter-expert agreement features. The
//! highest-scoring answer is returned (routing), and its score decides
//! whether to answer at all (selective QA). The crate also ships the
//! ensemble baselines, the evaluation metrics, a deterministic benchmark
//! simulator and the bookkeeping for a human abstention study.

pub mod error;
pub mod experiment;
pub mod features;
pub mod forest;
pub mod qa;
pub mod rng;
pub mod router;
pub mod selective;
pub mod simulator;
pub mod study;

pub use error::{Error, Result};
