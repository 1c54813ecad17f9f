//! Reconstruction of a drift-free, high-precision position signal from two
//! complementary channels: an absolute position measurement that is noisy
//! but unbiased, and a relative velocity measurement that is precise but
//! drifts when integrated.
//!
//! The core idea is a maximum a posteriori estimate whose prior lives in
//! the gradient domain: the velocity channel constrains only differences
//! between adjacent samples, so its unknown constant of integration never
//! enters the solution. The resulting normal equations are symmetric
//! tridiagonal and solve in O(n).
//!
//! Modules:
//! - [`trace`]: uniformly sampled position and velocity containers.
//! - [`fusion`]: the gradient-domain solver.
//! - [`confidence`]: blink classification and the weight schedule.
//! - [`compensation`]: glint circle fit and camera/head motion removal.
//! - [`calibration`]: polynomial position and linear velocity calibration.
//! - [`metrics`]: accuracy, S2S-RMS/STD precision, pursuit detrending.
//! - [`events`]: TV denoising, adaptive threshold, I-VT microsaccades.
//! - [`simulator`]: seeded Monte-Carlo study of the fusion.

// Negated comparisons are deliberate where NaN must fail validation, and
// short index loops over the two axes stay as plain ranges.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calibration;
pub mod compensation;
pub mod confidence;
pub mod error;
pub mod events;
pub mod fusion;
mod linalg;
pub mod metrics;
pub mod simulator;
pub mod trace;

pub use error::{Error, Result};
pub use fusion::{fuse, FusionResult, FusionSystem, WeightSchedule};
pub use trace::{ChannelTrace, VelocityTrace};
