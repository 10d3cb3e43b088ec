//! Reference keypoint generation and per-frame semantic description.
//!
//! A task fixes N reference keypoints once, from a single masked
//! reference frame. Every later frame is summarized by matching each
//! reference feature to its most similar pixel (cosine argmax), reading
//! the full similarity row there, and lifting the pixel to 3-D through
//! the depth map: N descriptors of length N+3 per frame.

pub mod descriptor;
pub mod kmeans;
pub mod matching;
pub mod reference;

pub use descriptor::{describe_frame, lift_to_3d, KeypointDescriptor, DEPTH_FALLBACK_RADIUS};
pub use matching::{match_keypoints, similarity_map, similarity_vector, SimilarityMap};
pub use reference::{
    generate_reference, read_reference_set, write_reference_set, ReferenceSet,
};
