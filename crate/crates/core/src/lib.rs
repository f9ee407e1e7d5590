//! Fidelity dynamics of measurement-based quantum computation cluster states
//! coupled to bosonic environments.
//!
//! The crate covers exact pure-dephasing evolution, dense numerical
//! evolution of a cluster register coupled to one truncated boson mode,
//! thermal states of the boson-coupled cluster Hamiltonian, gate fidelity
//! through simulated gate teleportation, and the curve analytics used to
//! summarize the resulting fidelity series.

pub mod analysis;
pub mod cluster;
pub mod config;
pub mod dephasing;
pub mod error;
pub mod gate;
pub mod linalg;
pub mod lowlying;
pub mod numeric;
pub mod quadrature;
pub mod special;
pub mod spectrum;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil;

/// Maps over independent work items, in parallel when the `parallel`
/// feature is on. Output order always follows input order.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
