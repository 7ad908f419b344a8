//! Synthetic datasets: 3-D shapes and reaction-diffusion transcriptomics.

mod dataset;
mod rd;
mod shapes;

pub use dataset::{
    build_spatiotemporal_graph, even_indices, load_dataset, make_rd_dataset, make_shape_dataset, save_dataset, stack_rows,
    Dataset, Normalization, RdDatasetConfig,
};
pub use rd::{simulate_rd, simulate_rd_from, RdParams, SignConvention, DIVERGENCE_LIMIT, GENES};
pub use shapes::{make_shape, ShapeKind, ShapeSpec, SPHERE_RADIUS, TORUS_MAJOR, TORUS_MINOR};
