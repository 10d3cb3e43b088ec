use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::types::CameraModel;

/// Planar rigid pose: translation plus rotation about the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn identity() -> Self {
        Self { x: 0.0, y: 0.0, theta: 0.0 }
    }

    /// Object-frame point to world frame.
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [
            c * p[0] - s * p[1] + self.x,
            s * p[0] + c * p[1] + self.y,
        ]
    }

    /// World-frame point to object frame.
    pub fn apply_inverse(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        let dx = p[0] - self.x;
        let dy = p[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }
}

/// Footprint of a part in its object frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PartShape {
    Disc { radius: f64 },
    Rect { half_w: f64, half_h: f64 },
}

impl PartShape {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            PartShape::Disc { radius } => p[0] * p[0] + p[1] * p[1] <= radius * radius,
            PartShape::Rect { half_w, half_h } => p[0].abs() <= *half_w && p[1].abs() <= *half_h,
        }
    }

    /// Conservative circumscribing radius, for visibility checks.
    pub fn bound_radius(&self) -> f64 {
        match self {
            PartShape::Disc { radius } => *radius,
            PartShape::Rect { half_w, half_h } => half_w.hypot(*half_h),
        }
    }
}

/// One semantic part: a flat-topped shape at a fixed height, carrying a
/// part archetype index into the task's archetype bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub shape: PartShape,
    /// Offset of the shape center in the object frame.
    pub offset: [f64; 2],
    /// Height of the top surface above the table plane.
    pub top_z: f64,
    pub archetype: usize,
}

/// A rigid object: a pose and a list of parts.
///
/// `relevant` objects contribute to the task mask; distractors render but
/// stay outside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub pose: Pose2,
    pub parts: Vec<Part>,
    pub relevant: bool,
}

impl SceneObject {
    /// World position of a part center on its top surface.
    pub fn part_center_world(&self, part: &Part) -> [f64; 3] {
        let p = self.pose.apply(part.offset);
        [p[0], p[1], part.top_z]
    }
}

/// Complete description of one rendered frame: camera, objects, the
/// background appearance, and the stochastic rendering controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub camera: CameraModel,
    pub objects: Vec<SceneObject>,
    /// Background archetype index into the bank's background set.
    pub background: usize,
    /// Per-pixel feature noise level (tangent magnitude bound).
    pub noise_sigma: f64,
    /// Probability that a pixel's depth reading is dropped.
    pub hole_prob: f64,
    /// Seed for noise and hole sampling.
    pub seed: u64,
}

impl SceneSpec {
    /// Check that every part is fully visible inside the image and that
    /// basic numeric preconditions hold.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.hole_prob) {
            return Err(Error::InvalidScene(format!(
                "hole probability {} outside [0, 1]",
                self.hole_prob
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidScene(format!(
                "noise sigma {} must be finite and non-negative",
                self.noise_sigma
            )));
        }
        if self.objects.is_empty() {
            return Err(Error::NoObjects);
        }
        for (oi, obj) in self.objects.iter().enumerate() {
            for (pi, part) in obj.parts.iter().enumerate() {
                if part.top_z < 0.0 || part.top_z >= self.camera.position[2] {
                    return Err(Error::InvalidScene(format!(
                        "object {oi} part {pi} top height {} outside [0, camera altitude)",
                        part.top_z
                    )));
                }
                let center = obj.part_center_world(part);
                let Some((h, w, depth)) = self.camera.project(center) else {
                    return Err(Error::InvalidScene(format!(
                        "object {oi} part {pi} behind the camera"
                    )));
                };
                // margin: projected circumscribing radius in pixels
                let margin = part.shape.bound_radius() * self.camera.fx / depth + 1.0;
                if h < margin
                    || w < margin
                    || h > self.camera.height as f64 - 1.0 - margin
                    || w > self.camera.width as f64 - 1.0 - margin
                {
                    return Err(Error::InvalidScene(format!(
                        "object {oi} part {pi} not fully inside the image \
                         (center at pixel ({h:.1}, {w:.1}), margin {margin:.1})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn part_count(&self) -> usize {
        self.objects.iter().map(|o| o.parts.len()).sum()
    }
}

/// A grid of single-part discs, one per part archetype index, all marked
/// relevant. Used to calibrate and test matching with many distinct parts
/// in one frame.
pub fn calibration_scene(
    camera: CameraModel,
    n_parts: usize,
    noise_sigma: f64,
    seed: u64,
) -> SceneSpec {
    let cols = (n_parts as f64).sqrt().ceil() as usize;
    let rows = n_parts.div_ceil(cols);
    let objects = (0..n_parts)
        .map(|i| {
            let r = i / cols;
            let c = i % cols;
            let x = 0.5 + (c as f64 - (cols as f64 - 1.0) / 2.0) * 0.9 / cols as f64;
            let y = 0.5 + (r as f64 - (rows as f64 - 1.0) / 2.0) * 0.9 / rows as f64;
            SceneObject {
                pose: Pose2 { x, y, theta: 0.0 },
                parts: vec![Part {
                    shape: PartShape::Disc { radius: 0.33 / cols as f64 },
                    offset: [0.0, 0.0],
                    top_z: 0.02,
                    archetype: i,
                }],
                relevant: true,
            }
        })
        .collect();
    SceneSpec {
        camera,
        objects,
        background: 0,
        noise_sigma,
        hole_prob: 0.0,
        seed,
    }
}
