//! System identification of a six-degree-of-freedom underwater vehicle with
//! convolved multi-output Gaussian processes in a NARX structure.

pub mod plant;
pub mod kernels;
pub mod parallel;
pub mod mogp;
pub mod narx;
pub mod runner;
