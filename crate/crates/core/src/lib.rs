//! Semantic-keypoint imitation learning on a synthetic feature backend.
//!
//! The pipeline turns dense per-pixel feature maps into a compact,
//! embodiment-agnostic observation and learns visuomotor policies from
//! a handful of demonstrations:
//!
//! 1. [`features`] renders scenes into per-pixel unit feature vectors,
//!    depth and a relevance mask (standing in for a frozen vision
//!    backbone).
//! 2. [`keypoints`] picks reference keypoints once per task, then per
//!    frame matches them by cosine similarity, lifts them to 3-D, and
//!    packs similarity + position into per-keypoint descriptors.
//! 3. [`nn`] is a small deterministic tensor/autodiff stack: transformer
//!    encoder for keypoint tokens and a 1-D U-Net for diffusion heads.
//! 4. [`diffusion`] provides the noise schedule, training objective and
//!    samplers shared by the action and trajectory heads.
//! 5. [`policy`] trains the action diffusion policy and runs the
//!    dropout-randomized ensemble controller.
//! 6. [`traj`] adds the cross-embodiment variant: a trajectory
//!    predictor trained on robot and human episodes plus a tracking
//!    controller.
//! 7. [`sim`] is a planar tabletop benchmark with scripted robot and
//!    human demonstrators and a fixed evaluation protocol.

pub mod config;
pub mod error;
pub mod features;
pub mod keypoints;
pub mod util;

pub use error::{Error, Result};
