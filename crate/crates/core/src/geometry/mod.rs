//! The unit sphere: projection, discretization, interpolation, and
//! overflow-free accumulation of random matrix products.

mod grid;
mod product;
mod sphere;

pub use grid::{GridFunction, SphereGrid, Stencil};
pub use product::{lyapunov, LyapunovEstimate, ProductAccumulator};
pub use sphere::{project, SpherePoint};
