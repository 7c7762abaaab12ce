//! Neural implicit surfaces with curvature-aware training.
//!
//! A sinusoidal MLP `f_θ : ℝ³ → ℝ` is fitted to the signed distance function
//! of a surface. Values, gradients and Hessians of the network are computed in
//! closed form, which gives exact normals and curvatures of the level sets
//! and lets the training loss use them.

// Negated comparisons reject NaN on purpose; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod discrete_geom;
pub mod dual;
pub mod error;
pub mod evaluation;
pub mod implicit_geom;
pub mod linalg;
pub mod loss;
pub mod net;
pub mod rbf;
pub mod renderer;
pub mod sampler;
pub mod sdf_oracle;
pub mod trainer;

pub use error::{Error, Result};

/// Order-preserving map, parallel when the `parallel` feature is on.
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
