//! Error type shared by all core modules.

use alloc::string::String;

/// Errors produced by tensor kernels, network construction, voxelization,
/// and metric evaluation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    /// A tensor or volume had the wrong shape. The message names the
    /// offending operation and axis.
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A semantic label was outside `[0, num_classes)` on a voxel that is
    /// not masked out.
    #[error("label {label} out of range for {classes} classes at voxel {index}")]
    LabelOutOfRange {
        label: u8,
        classes: usize,
        index: usize,
    },

    /// A named parameter or cached activation was missing.
    #[error("missing entry `{0}`")]
    MissingEntry(String),

    /// Camera intrinsics cannot project (zero focal length or empty image).
    #[error("degenerate camera: {0}")]
    DegenerateCamera(String),
}

pub type Result<T> = core::result::Result<T, CoreError>;
