use crate::error::{Error, Result};
use crate::features::types::{CameraModel, DepthMap, FeatureMap};
use crate::keypoints::matching::{match_keypoints, similarity_map, similarity_vector};
use crate::keypoints::reference::ReferenceSet;

/// Search radius (pixels, Euclidean) for the valid-depth neighbor
/// fallback.
pub const DEPTH_FALLBACK_RADIUS: f64 = 5.0;

/// One matched keypoint in one frame: the full similarity row at its
/// matched pixel plus its 3-D position in world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointDescriptor {
    pub index: usize,
    pub pixel: (usize, usize),
    pub similarity: Vec<f32>,
    pub position: [f64; 3],
}

impl KeypointDescriptor {
    /// Flattened descriptor: N similarities then the 3 position
    /// coordinates.
    pub fn chi(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.similarity.iter().map(|s| f64::from(*s)).collect();
        v.extend_from_slice(&self.position);
        v
    }

    pub fn len(&self) -> usize {
        self.similarity.len() + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Back-project a pixel to a 3-D world point.
///
/// Falls back to the nearest valid-depth pixel within
/// [`DEPTH_FALLBACK_RADIUS`] (ties to the smaller row-major index), then
/// to `previous` (the same keypoint's position from the prior frame).
/// With no valid depth anywhere and no previous position, this is a
/// "no depth" error.
pub fn lift_to_3d(
    pixel: (usize, usize),
    depth: &DepthMap,
    cam: &CameraModel,
    previous: Option<[f64; 3]>,
) -> Result<[f64; 3]> {
    let (h, w) = pixel;
    if h >= depth.height() || w >= depth.width() {
        return Err(Error::OutOfBounds(h, w, depth.height(), depth.width()));
    }
    if let Some(d) = depth.get(h, w) {
        return Ok(cam.unproject(h as f64, w as f64, d));
    }
    let r = DEPTH_FALLBACK_RADIUS as isize;
    let mut best: Option<(i64, usize, usize)> = None;
    for dh in -r..=r {
        for dw in -r..=r {
            let d2 = dh * dh + dw * dw;
            if d2 == 0 || d2 > r * r {
                continue;
            }
            let (nh, nw) = (h as isize + dh, w as isize + dw);
            if nh < 0 || nw < 0 || nh as usize >= depth.height() || nw as usize >= depth.width() {
                continue;
            }
            let (nh, nw) = (nh as usize, nw as usize);
            if depth.is_valid(nh, nw) {
                let key = (d2 as i64, nh, nw);
                if best.map_or(true, |b| key < b) {
                    best = Some(key);
                }
            }
        }
    }
    if let Some((_, nh, nw)) = best {
        let d = depth.get(nh, nw).expect("checked valid");
        return Ok(cam.unproject(nh as f64, nw as f64, d));
    }
    previous.ok_or(Error::NoDepth(h, w))
}

/// Match every reference keypoint in a frame and build its descriptor:
/// similarity map, argmax match, similarity row, 3-D lift.
///
/// `previous` supplies per-keypoint fallback positions from the prior
/// frame (empty or `None` entries on the first frame).
pub fn describe_frame(
    features: &FeatureMap,
    depth: &DepthMap,
    refs: &ReferenceSet,
    cam: &CameraModel,
    previous: Option<&[[f64; 3]]>,
) -> Result<Vec<KeypointDescriptor>> {
    if features.height() != depth.height() || features.width() != depth.width() {
        return Err(Error::ShapeMismatch(format!(
            "features {}x{} vs depth {}x{}",
            features.height(),
            features.width(),
            depth.height(),
            depth.width()
        )));
    }
    if let Some(prev) = previous {
        if prev.len() != refs.count() {
            return Err(Error::ShapeMismatch(format!(
                "{} previous positions for {} keypoints",
                prev.len(),
                refs.count()
            )));
        }
    }
    let map = similarity_map(features, refs)?;
    let matches = match_keypoints(&map);
    let mut out = Vec::with_capacity(refs.count());
    for (i, &pixel) in matches.iter().enumerate() {
        let similarity = similarity_vector(&map, pixel)?;
        let position = lift_to_3d(pixel, depth, cam, previous.map(|p| p[i]))?;
        if position.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("keypoint position"));
        }
        out.push(KeypointDescriptor { index: i, pixel, similarity, position });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};

    fn flat_cam() -> CameraModel {
        CameraModel {
            width: 100,
            height: 100,
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            position: [0.0; 3],
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    #[test]
    fn pinhole_reference_values() {
        let depth = DepthMap::from_raw(Array2::from_elem((100, 100), 2.0f32));
        let cam = flat_cam();
        let p = lift_to_3d((50, 50), &depth, &cam, None).unwrap();
        assert_eq!(p, [0.0, 0.0, 2.0]);
        let p = lift_to_3d((50, 60), &depth, &cam, None).unwrap();
        assert!((p[0] - 0.2).abs() < 1e-12);
        assert!(p[1].abs() < 1e-12);
        assert!((p[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn neighbor_fallback_at_distance_one() {
        let mut raw = Array2::<f32>::zeros((100, 100));
        raw[[50, 61]] = 2.0; // only valid pixel near (50, 60)
        let depth = DepthMap::from_raw(raw);
        let cam = flat_cam();
        let p = lift_to_3d((50, 60), &depth, &cam, None).unwrap();
        let expect = cam.unproject(50.0, 61.0, 2.0);
        assert_eq!(p, expect);
    }

    #[test]
    fn nearest_neighbor_wins_with_row_major_ties() {
        let mut raw = Array2::<f32>::zeros((100, 100));
        raw[[48, 60]] = 1.0; // distance 2
        raw[[50, 59]] = 3.0; // distance 1
        raw[[50, 61]] = 4.0; // distance 1, larger row-major index
        let depth = DepthMap::from_raw(raw);
        let cam = flat_cam();
        let p = lift_to_3d((50, 60), &depth, &cam, None).unwrap();
        assert_eq!(p, cam.unproject(50.0, 59.0, 3.0));
    }

    #[test]
    fn previous_position_fallback_then_error() {
        let depth = DepthMap::from_raw(Array2::<f32>::zeros((20, 20)));
        let cam = flat_cam();
        let prev = [0.1, 0.2, 0.3];
        assert_eq!(lift_to_3d((10, 10), &depth, &cam, Some(prev)).unwrap(), prev);
        assert!(matches!(
            lift_to_3d((10, 10), &depth, &cam, None),
            Err(Error::NoDepth(10, 10))
        ));
    }

    #[test]
    fn radius_boundary_is_respected() {
        let mut raw = Array2::<f32>::zeros((20, 20));
        raw[[10, 16]] = 2.0; // distance 6 > radius 5
        let depth = DepthMap::from_raw(raw);
        let cam = flat_cam();
        assert!(matches!(
            lift_to_3d((10, 10), &depth, &cam, None),
            Err(Error::NoDepth(10, 10))
        ));
        let mut raw = Array2::<f32>::zeros((20, 20));
        raw[[10, 15]] = 2.0; // distance 5, exactly on the boundary
        let depth = DepthMap::from_raw(raw);
        assert!(lift_to_3d((10, 10), &depth, &cam, None).is_ok());
    }

    #[test]
    fn describe_frame_composition() {
        // 3 distinct one-hot part directions on a 4x4 grid
        let mut v = Array3::<f32>::zeros((4, 4, 3));
        v[[0, 0, 0]] = 1.0;
        v[[1, 2, 1]] = 1.0;
        v[[3, 3, 2]] = 1.0;
        let features = FeatureMap::new(v).unwrap();
        let depth = DepthMap::from_raw(Array2::from_elem((4, 4), 1.5f32));
        let refs = ReferenceSet::new(
            vec![(0, 0), (1, 2), (3, 3)],
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            "t".into(),
        )
        .unwrap();
        let cam = flat_cam();
        let descs = describe_frame(&features, &depth, &refs, &cam, None).unwrap();
        assert_eq!(descs.len(), 3);
        for (i, d) in descs.iter().enumerate() {
            assert_eq!(d.index, i);
            assert_eq!(d.pixel, refs.pixel(i), "self-match on the reference frame");
            assert_eq!(d.similarity[i], 1.0);
            assert_eq!(d.len(), 3 + 3);
            assert_eq!(d.chi().len(), d.len());
        }
    }
}
