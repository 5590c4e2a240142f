//! Bayes linear belief adjustment for covariance matrices.
//!
//! Covariance matrices are treated as single objects in an inner-product
//! space of random symmetric matrices, with `(P, Q) = E(Tr(PQ))`. Prior
//! beliefs about a population covariance matrix are revised from sample
//! covariance data by orthogonal projection onto collections of observable
//! matrices, with second-order exchangeability supplying the joint belief
//! structure over population and sample quantities. No distributional
//! assumptions are made for the data or the prior.
//!
//! The crate is organized around the flow of an analysis:
//!
//! - [`quantity`] and [`store`]: scalar base quantities and the
//!   second-order prior over them.
//! - [`matrix`]: random symmetric matrices, the inner product, and the
//!   induced metric.
//! - [`exchangeable`]: from raw exchangeability specifications to belief
//!   stores over `V_ij` and `S_ij`; sample covariances; Gaussian-consistent
//!   residual fourth moments.
//! - [`adjustment`]: projection collections and adjusted expectations,
//!   with resolutions and stepwise decompositions.
//! - [`diagnostics`] and [`diagram`]: bearings, size ratios, conditional
//!   linear independence, eigenvalue warnings, and DOT export.
//! - [`specfile`] and [`pipeline`]: file formats, orchestration, and
//!   reports for the front ends.

pub mod adjustment;
pub mod diagnostics;
pub mod diagram;
pub mod error;
pub mod exchangeable;
pub mod linalg;
pub mod matrix;
pub mod pipeline;
pub mod quantity;
pub mod specfile;
pub mod store;
pub mod synth;
pub mod tol;

pub use error::{Error, Result};
