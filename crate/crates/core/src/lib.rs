//! Kernels on finite alphabets seen through their feature subspaces.
//!
//! The crate works entirely with finite probability tables: a
//! [`JointDistribution`] over `X × Y`, features of `X` stored as value tables,
//! and kernels stored as Gram tables. On top of those it provides
//!
//! - the modal decomposition of `P_{X,Y}` and the HGR maximal correlation ([`modal`]),
//! - `P_X`-weighted feature geometry and projections ([`feature`]),
//! - projection kernels, the maximal correlation kernel and kernelized
//!   discriminative models ([`kernel`]),
//! - H-scores of features, kernels and subspaces ([`hscore`]),
//! - closed-form and solver-based SVMs, logistic regression and the
//!   cross-method comparisons for balanced binary labels ([`classify`]),
//! - score functions, Fisher kernels and mixture experiments ([`fisher`]),
//! - seeded invariant suites used by `corrkernel verify-all` ([`verify`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::needless_range_loop))]

pub mod classify;
pub mod cli;
pub mod dist;
mod error;
pub mod feature;
pub mod fisher;
pub mod hscore;
pub mod kernel;
mod linalg;
pub mod modal;
pub mod rng;
pub mod verify;

pub use dist::{Alphabet, JointDistribution, Marginal};
pub use error::{Error, Result};
pub use feature::{Feature, FeatureSubspace};
pub use kernel::{KdmModel, Kernel};
pub use modal::ModalDecomposition;
