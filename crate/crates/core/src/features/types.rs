use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// Dense per-pixel semantic feature tensor, `H x W x D`.
///
/// This is the output of any feature backend: the synthetic renderer, the
/// bilinear upsampler, or a precomputed-feature file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    values: Array3<f32>,
}

impl FeatureMap {
    pub fn new(values: Array3<f32>) -> Result<Self> {
        let (h, w, d) = values.dim();
        if h == 0 || w == 0 || d == 0 {
            return Err(Error::ShapeMismatch(format!(
                "feature map dims must be positive, got {h}x{w}x{d}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map"));
        }
        Ok(Self { values })
    }

    pub fn height(&self) -> usize {
        self.values.dim().0
    }

    pub fn width(&self) -> usize {
        self.values.dim().1
    }

    /// Feature dimension `D`.
    pub fn depth_dim(&self) -> usize {
        self.values.dim().2
    }

    pub fn values(&self) -> &Array3<f32> {
        &self.values
    }

    /// Feature vector at a pixel, as a contiguous slice.
    pub fn at(&self, h: usize, w: usize) -> &[f32] {
        self.values
            .slice(ndarray::s![h, w, ..])
            .to_slice()
            .expect("row-major feature map")
    }
}

/// Per-pixel metric depth with an explicit validity flag per entry.
///
/// Valid entries are strictly positive and finite; anything else (holes
/// punched by the renderer, zero-encoded pixels from files) is invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    values: Array2<f32>,
    validity: Array2<bool>,
}

impl DepthMap {
    pub fn new(values: Array2<f32>, validity: Array2<bool>) -> Result<Self> {
        if values.dim() != validity.dim() {
            return Err(Error::ShapeMismatch(format!(
                "depth {:?} vs validity {:?}",
                values.dim(),
                validity.dim()
            )));
        }
        for (v, ok) in values.iter().zip(validity.iter()) {
            if *ok && !(v.is_finite() && *v > 0.0) {
                return Err(Error::NonFinite("depth map (valid entry not positive finite)"));
            }
        }
        Ok(Self { values, validity })
    }

    /// Build from raw values with the zero-encodes-invalid convention.
    pub fn from_raw(values: Array2<f32>) -> Self {
        let validity = values.map(|v| v.is_finite() && *v > 0.0);
        Self { values, validity }
    }

    pub fn height(&self) -> usize {
        self.values.dim().0
    }

    pub fn width(&self) -> usize {
        self.values.dim().1
    }

    pub fn values(&self) -> &Array2<f32> {
        &self.values
    }

    pub fn is_valid(&self, h: usize, w: usize) -> bool {
        self.validity[[h, w]]
    }

    /// Depth at a pixel if valid.
    pub fn get(&self, h: usize, w: usize) -> Option<f64> {
        if self.validity[[h, w]] {
            Some(f64::from(self.values[[h, w]]))
        } else {
            None
        }
    }
}

/// Boolean relevant-object mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    values: Array2<bool>,
}

impl Mask {
    pub fn new(values: Array2<bool>) -> Self {
        Self { values }
    }

    pub fn height(&self) -> usize {
        self.values.dim().0
    }

    pub fn width(&self) -> usize {
        self.values.dim().1
    }

    pub fn values(&self) -> &Array2<bool> {
        &self.values
    }

    pub fn get(&self, h: usize, w: usize) -> bool {
        self.values[[h, w]]
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }

    /// Row-major iterator over `(h, w)` of true pixels.
    pub fn iter_true(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width();
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v)
            .map(move |(i, _)| (i / w, i % w))
    }
}

/// Pinhole camera: intrinsics in pixels plus a rigid camera-to-world pose.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Camera position in world coordinates.
    pub position: [f64; 3],
    /// Camera-to-world rotation, row major.
    pub rotation: [[f64; 3]; 3],
}

impl CameraModel {
    /// Overhead camera looking straight down the world -z axis, centered
    /// over `(x, y)` at altitude `z`. Pixel rows advance along world -y.
    pub fn top_down(width: usize, height: usize, fx: f64, center: [f64; 3]) -> Self {
        Self {
            width,
            height,
            fx,
            fy: fx,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            position: center,
            rotation: [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]],
        }
    }

    /// World point -> camera-frame point.
    pub fn world_to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let d = [
            p[0] - self.position[0],
            p[1] - self.position[1],
            p[2] - self.position[2],
        ];
        let r = &self.rotation;
        // rotation is camera-to-world, so apply the transpose
        [
            r[0][0] * d[0] + r[1][0] * d[1] + r[2][0] * d[2],
            r[0][1] * d[0] + r[1][1] * d[1] + r[2][1] * d[2],
            r[0][2] * d[0] + r[1][2] * d[1] + r[2][2] * d[2],
        ]
    }

    /// Camera-frame point -> world point.
    pub fn camera_to_world(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + self.position[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + self.position[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + self.position[2],
        ]
    }

    /// Project a world point to `(h, w, depth)` in continuous pixel
    /// coordinates. `None` when the point is behind the camera.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64, f64)> {
        let c = self.world_to_camera(p);
        if c[2] <= 0.0 {
            return None;
        }
        let w = self.fx * c[0] / c[2] + self.cx;
        let h = self.fy * c[1] / c[2] + self.cy;
        Some((h, w, c[2]))
    }

    /// Back-project pixel `(h, w)` at the given depth into camera frame.
    pub fn unproject_camera(&self, h: f64, w: f64, depth: f64) -> [f64; 3] {
        [
            (w - self.cx) / self.fx * depth,
            (h - self.cy) / self.fy * depth,
            depth,
        ]
    }

    /// Back-project pixel `(h, w)` at the given depth into world frame.
    pub fn unproject(&self, h: f64, w: f64, depth: f64) -> [f64; 3] {
        self.camera_to_world(self.unproject_camera(h, w, depth))
    }

    pub fn in_bounds(&self, h: f64, w: f64) -> bool {
        h >= 0.0 && w >= 0.0 && h < self.height as f64 && w < self.width as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn depth_validity_from_raw_zero_is_invalid() {
        let d = DepthMap::from_raw(arr2(&[[1.0f32, 0.0], [f32::NAN, 2.0]]));
        assert!(d.is_valid(0, 0));
        assert!(!d.is_valid(0, 1));
        assert!(!d.is_valid(1, 0));
        assert_eq!(d.get(1, 1), Some(2.0));
    }

    #[test]
    fn project_unproject_round_trip() {
        let cam = CameraModel::top_down(64, 64, 72.0, [0.5, 0.5, 1.4]);
        let p = [0.31, 0.62, 0.04];
        let (h, w, depth) = cam.project(p).unwrap();
        let q = cam.unproject(h, w, depth);
        for i in 0..3 {
            assert!((p[i] - q[i]).abs() < 1e-9, "axis {i}: {} vs {}", p[i], q[i]);
        }
    }

    #[test]
    fn principal_point_maps_to_optical_axis() {
        let cam = CameraModel {
            width: 100,
            height: 100,
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            position: [0.0; 3],
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        };
        let p = cam.unproject_camera(50.0, 50.0, 2.5);
        assert_eq!(p, [0.0, 0.0, 2.5]);
    }

    #[test]
    fn unproject_camera_reference_values() {
        let cam = CameraModel {
            width: 100,
            height: 100,
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            position: [0.0; 3],
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        };
        let p = cam.unproject_camera(50.0, 60.0, 2.0);
        assert!((p[0] - 0.2).abs() < 1e-12);
        assert!(p[1].abs() < 1e-12);
        assert!((p[2] - 2.0).abs() < 1e-12);
    }
}
