//! Sparse observer-controller network design for time-varying networked
//! linear systems.
//!
//! The toolkit takes a network of coupled linear time-varying subsystems,
//! synthesizes observer-based controllers interval by interval through
//! semidefinite feasibility problems, prunes communication links between
//! the local controllers/observers with a relaxation-thresholding
//! heuristic, and verifies the resulting switched closed loop by
//! simulation with Lyapunov monitoring.
//!
//! Module map:
//! - [`linalg`]: dense symmetric/general matrix primitives (eigen, SVD
//!   extremes, PSD projection, block assembly).
//! - [`model`]: the networked plant, its aggregation, gain schedules, and
//!   the built-in coupled-pendulum example.
//! - [`lmi`]: block-structured affine matrix-inequality problems and an
//!   interior-point feasibility solver.
//! - [`designer`]: per-interval constraint assembly, gain recovery,
//!   switching times, and the three link-sparsification strategies.
//! - [`simulator`]: fixed-step integration of the switched closed loop
//!   plus Lyapunov and certificate re-verification.

pub mod designer;
pub mod linalg;
pub mod lmi;
pub mod model;
pub mod rng;
pub mod simulator;
