//! Sum-product networks over binary variables.
//!
//! * [`graph`]: structure, validation, scopes and sum-edge indexing.
//! * [`inference`]: log-space evaluation and differentiation.
//! * [`mixture`]: induced trees and exact network cardinality.
//! * [`learn`]: PGD, EG, SMA and CCCP (EM) weight learning.
//! * [`io`]: model and dataset files, curve export, random structures.

pub mod graph;
pub mod inference;
pub mod io;
pub mod learn;
pub mod logspace;
pub mod mixture;

pub use graph::{GraphError, Node, NodeId, NodeKind, SpnGraph, ValidationReport, VarSet, Violation, WeightVector};
pub use inference::{Assignment, EvalTrace, InferenceError, VarValue};
pub use io::{Dataset, IoError};
pub use learn::{Algorithm, GradientPair, LearnError, LearnerConfig, StopReason, TrainRun};
pub use mixture::{Cardinality, InducedTree, MixtureError};
