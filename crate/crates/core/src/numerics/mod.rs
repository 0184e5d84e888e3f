//! Small numerical kernels shared by the physics modules: adaptive
//! Gauss-Kronrod quadrature, Brent root finding, golden-section search and
//! natural cubic splines.

mod optimize;
mod quad;
mod roots;
mod spline;

pub use optimize::golden_section;
pub use quad::{integrate, integrate_log, QuadOptions, QuadResult};
pub use roots::brent;
pub use spline::CubicSpline;
