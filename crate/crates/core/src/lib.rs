//! Resonant and rational normal forms for the Schrödinger–Poisson equation
//! on the circle, with Gevrey-space numerics.

pub mod bounds;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod gauss;
pub mod gevrey;
pub mod modespace;
pub mod ode;
pub mod polyham;
pub mod rathom;
pub mod rational_nf;
pub mod resonance_sampler;
pub mod resonant_nf;

pub use error::{Error, Result};
