//! Anisotropic Bean critical-state model for long cylindrical type-II superconductors.
//!
//! The crate computes Minkowski distance fields of a cross-section `Ω` with respect to a
//! convex constraint body `K`, solves single quasistatic steps in closed form together
//! with their dual dissipation fields, runs the quasistatic evolution under monotone
//! drives, and checks the constrained problem against an independent power-law
//! minimizer.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod config;
pub mod contour;
pub mod critical_state;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod grid;
pub mod minkowski;
pub mod power_law;
pub mod scenario;
pub mod testbank;

pub use error::{Error, Result};
pub use geometry::{ConvexBody, GaugePair, Mat2, Vec2};
