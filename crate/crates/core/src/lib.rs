//! Tests for a change in the mean function of a chronologically ordered
//! sample of curves.
//!
//! The covariance kernel is estimated separately on each side of every
//! candidate split, which removes most of the bias a mean change induces in
//! the pooled estimator. Its eigenfunctions give scores whose self-normalized
//! CUSUM process is integrated into the statistic `H_{N,d}`; the pooled
//! kernel gives the classical `S_{N,d}`.
//!
//! All numerics are generic over [`Scalar`] (`f32`, `f64`); the aliases at the
//! bottom of this file name the common `f64` instantiations.

pub mod covkernel;
pub mod cptest;
pub mod error;
pub mod fdobj;
pub mod limitsim;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type QuadratureGrid64 = fdobj::QuadratureGrid<f64>;
pub type CurveSet64 = fdobj::CurveSet<f64>;
pub type CurveSet32 = fdobj::CurveSet<f32>;
pub type RawCurves64 = fdobj::RawCurves<f64>;
pub type KernelEstimate64 = covkernel::KernelEstimate<f64>;
pub type EigenSystem64 = spectral::EigenSystem<f64>;
pub type CusumProcess64 = cptest::CusumProcess<f64>;
