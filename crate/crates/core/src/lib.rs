//! Slice-based reconstruction of volumetric scenes from semantic 3D Gaussians.
//!
//! A scene is a set of anisotropic Gaussians, each carrying an intensity
//! color and a semantic channel vector, plus a tri-plane feature field whose
//! decoded features perturb the Gaussians' appearance. Slices through the
//! scene are rendered by factorizing each Gaussian into a 1D marginal along
//! the slice normal and a 2D conditional in the plane, then alpha
//! compositing the survivors in order of distance to the plane.
//!
//! The crate is `no_std` + `alloc` with the default features disabled.
//! The `parallel` feature (on by default) renders tiles with rayon.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod axis;
mod error;
pub mod factorization;
pub mod fixtures;
pub mod gaussian;
pub mod linalg;
pub mod metrics;
pub mod optimizer;
pub mod raster;
pub mod triplane;

pub mod dataset;

pub use axis::Axis;
pub use error::{Error, Result};
pub use factorization::{factorize, FactorizedGaussian};
pub use gaussian::{
    activate, build_covariance, evaluate_response, ActivatedGaussian, Covariance3, GaussianSet,
    RawGaussianParams,
};
pub use raster::{
    render_slice, render_slice_bruteforce, backward_slice, GradientBuffer, PixelGradients,
    RasterOptions, RenderedSlice, Scene, SlicePlaneSpec,
};
pub use triplane::{DecoderMlp, Fusion, Residuals, TriPlaneField};

/// Logistic sigmoid, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    #[cfg(not(feature = "std"))]
    use num_traits::Float;
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of the logistic sigmoid. `y` must lie strictly inside (0, 1).
#[inline]
pub fn logit(y: f64) -> f64 {
    #[cfg(not(feature = "std"))]
    use num_traits::Float;
    (y / (1.0 - y)).ln()
}
