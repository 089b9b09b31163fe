//! Covariance estimation for the array normal (tensor normal) model.
//!
//! The model is `vec(X) ~ N(0, sigma^2 (Sigma_K ⊗ ... ⊗ Sigma_1))` with each
//! `det(Sigma_k) = 1`. This crate provides
//!
//! - [`tensor`]: column-major tensors, matricization, Tucker products and
//!   centering;
//! - [`linalg`] and [`samplers`]: Cholesky factors and Wishart, inverse-Wishart,
//!   mirror-Wishart and Haar samplers;
//! - [`covariance`], [`model`] and [`loss`]: the separable parameter, the
//!   density, group actions and losses;
//! - [`estimators`]: flip-flop MLE, Gibbs-based equivariant estimators and the
//!   orthogonally equivariant estimator;
//! - [`risk`]: reproducible Monte Carlo risk studies.

pub mod covariance;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod rng;
pub mod risk;
pub mod samplers;
pub mod tensor;

pub use covariance::{GroupElement, SeparableCovariance};
pub use error::{Error, Result};
pub use linalg::{chol_lower, chol_upper, LowerTriangular, Orthogonal, Spd, UpperTriangular};
pub use rng::RngStream;
pub use tensor::{kron_list, Matrix, Shape, Tensor};
