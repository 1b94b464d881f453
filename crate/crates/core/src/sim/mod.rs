//! Synthetic recordings: ballistic trajectories, silhouette event synthesis and
//! labelled train/test datasets.

mod dataset;
mod render;
mod trajectory;

pub use dataset::*;
pub use render::*;
pub use trajectory::*;
