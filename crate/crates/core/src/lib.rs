//! Exact combinatorial kernel for tropical moduli cone stacks.
//!
//! The crate builds the moduli cone stacks of genus-`g`, `n`-marked
//! tropical curves (with or without leg lengths), gluing and forgetful
//! morphisms between them, graded piecewise-polynomial classes with exact
//! rational coefficients, tropical divisor cones with prescribed leg
//! slopes, an executable axiom suite for gluing-compatible systems of
//! classes, and Chow rings of smooth complete fans.

pub mod cohft;
pub mod cone;
pub mod divisor;
pub mod fanchow;
pub mod graph;
pub mod linalg;
pub mod moduli;
pub mod poly;
pub mod pp;

pub use graph::{enumerate_stable_graphs, Caps, GraphData, GraphError, StableGraph};
pub use linalg::{Int, Rat};
