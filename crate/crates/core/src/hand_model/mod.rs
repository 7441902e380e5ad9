//! Hand mesh, part segmentation, per-part vertex grids and contact vectors.
//!
//! Vertex indices are 0-based everywhere in memory and in the segmentation
//! file; OBJ faces are 1-based on disk.

mod contact;
mod mesh;
mod segmentation;

pub use contact::ContactVector;
pub use mesh::{load_mesh, parse_obj, HandMesh, MANO_VERTEX_COUNT};
pub use segmentation::{
    contact_to_grids, grid_values, grids_to_contact, load_labeling, load_segmentation,
    vertices_of_parts, ActiveVertexSet, DenseGridPrediction, GridRecord, GridSpec, Part,
    PartLabeling, PartRecord, PartSegmentation, SegmentationFile, SEGMENTATION_FORMAT_VERSION,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HandModelError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("partition error: {message}: {vertex_ids:?}")]
    Partition { message: String, vertex_ids: Vec<u32> },
    #[error("grid mismatch in part {part:?}: {message}")]
    GridMismatch { part: String, message: String },
    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),
    #[error("unknown part {0:?}")]
    UnknownPart(String),
    #[error("grid shape error in part {part:?}: {message}")]
    Shape { part: String, message: String },
}
