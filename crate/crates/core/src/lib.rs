//! Interactive segmentation engine: click encodings, information fusion and
//! exact graph-cut refinement on 2D/3D grids.

mod edt;
pub mod error;
pub mod eval;
pub mod grid;
pub mod interaction;
pub mod io;
pub mod maxflow;
pub mod metrics;
pub mod provider;
pub mod refine;
pub mod seeds;
pub mod synth;
pub mod pipeline;
pub mod transforms;

pub use error::{Error, Result};
pub use grid::{BinaryMask, BoundingBox, Connectivity, GridIndex, ScalarGrid, Shape};
pub use seeds::{Label, Seed, SeedSet};
