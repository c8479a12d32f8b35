//! Two-party gram-matrix computation with randomized encoding, and an
//! ε-SVR gaze estimator trained on the result.
//!
//! Two input parties each hold eye-landmark feature vectors. They mask their
//! samples with a decomposable affine randomized encoding of the dot
//! product and upload the shares to a third party, which recovers nothing
//! but the pooled gram matrix. From the gram matrix the server derives
//! linear, polynomial or RBF kernels and fits support vector regressors for
//! gaze pitch and yaw.
//!
//! * [`ring`]: fixed-point reals in Z/2^64 and uniform mask sampling.
//! * [`encoding`]: the multiplication encoding, its simulator, and the
//!   column-wise dot-product encoding.
//! * [`protocol`]: shuffling, share bundles, server-side gram assembly.
//! * [`transport`]: wire format, in-process and TCP links, session driver.
//! * [`kernels`]: kernel matrices from a gram matrix.
//! * [`svr`]: ε-SVR on a precomputed kernel, cross-validation, angular error.
//! * [`eyegen`]: parametric eye-landmark generator and dataset files.
//! * [`audit`]: privacy statistics, equivalence checks, benchmarks.

pub mod audit;
pub mod encoding;
pub mod error;
pub mod eyegen;
pub mod kernels;
pub mod matrix;
pub mod protocol;
pub mod ring;
pub mod svr;
pub mod transport;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
