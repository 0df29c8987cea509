//! Stability analysis for linear difference equations with distributed delays.
//!
//! The crate covers two system kinds sharing one measure `mu`:
//! integral-difference equations `X(t) + (mu * X)(t) = 0` and neutral-free
//! delay-differential equations `X'(t) + (mu * X)(t) = 0`.

pub mod charmat;
#[cfg(feature = "cli")]
pub mod cli;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod report;
pub mod spectrum;
pub mod timedomain;

#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Send, U: Send>(items: Vec<T>, f: impl Fn(T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, U>(items: Vec<T>, f: impl Fn(T) -> U) -> Vec<U> {
    items.into_iter().map(f).collect()
}
