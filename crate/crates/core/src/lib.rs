//! Data-driven approximation of center manifolds.
//!
//! The pipeline: simulate a split dynamical system from a cube of initial
//! conditions, harvest near-origin trajectory points, select a small center
//! set with the P-greedy method, and fit a kernel model of the manifold that
//! exactly satisfies the tangency constraints h(0) = 0, Dh(0) = 0. The fitted
//! model supports stability diagnostics, PDE residuals, Taylor extraction and
//! reduced-order simulation.

pub mod analysis;
pub mod dynsys;
pub mod error;
pub mod greedy;
pub mod integrate;
pub mod kernels;
pub mod ldl;
pub mod manifold;
pub mod pipeline;
pub mod report;
pub mod taylor;

pub use dynsys::{MatF, VecF};
pub use error::{Error, Result};

/// A scalar-valued manifold model y = h(x), h: R^d -> R.
///
/// Implemented by fitted approximants and by the closed-form reference
/// manifolds; everything in `analysis` and the reduced integrator works
/// against this trait.
pub trait ManifoldModel: Sync {
    fn dim_in(&self) -> usize;
    fn value(&self, x: &VecF) -> f64;
    fn gradient(&self, x: &VecF) -> VecF;
}

impl ManifoldModel for dynsys::ReferenceManifold {
    fn dim_in(&self) -> usize {
        self.taylor[0].0.len()
    }

    fn value(&self, x: &VecF) -> f64 {
        dynsys::ReferenceManifold::value(self, x)
    }

    fn gradient(&self, x: &VecF) -> VecF {
        dynsys::ReferenceManifold::gradient(self, x)
    }
}
