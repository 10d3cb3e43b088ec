//! Synthetic dense-feature backend.
//!
//! Real systems obtain per-pixel semantic features from a frozen vision
//! model. Here a renderer plays that role: scenes are flat-topped parts
//! on a table, every part class owns a fixed unit "archetype" vector,
//! and a pixel's feature is its archetype plus bounded angular noise.
//! That keeps the interesting property of learned features (same part
//! looks alike across scenes and embodiments) while staying cheap and
//! exactly reproducible.

pub mod archetypes;
pub mod io;
pub mod render;
pub mod scene;
pub mod types;
pub mod upsample;

pub use archetypes::ArchetypeBank;
pub use render::{synth_render, RenderOutput};
pub use scene::{calibration_scene, Part, PartShape, Pose2, SceneObject, SceneSpec};
pub use types::{CameraModel, DepthMap, FeatureMap, Mask};
pub use upsample::upsample_bilinear;
