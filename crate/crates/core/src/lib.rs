//! Cell problems and effective parameters for advection-diffusion with surface
//! reactions in periodic porous media.

pub mod closure;
pub mod dns;
pub mod error;
pub mod flow;
pub mod fvcore;
pub mod geometry;
pub mod macroscale;
pub mod spectral;

pub use error::{Error, Result};
