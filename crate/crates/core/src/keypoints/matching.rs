use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::features::types::FeatureMap;
use crate::keypoints::reference::ReferenceSet;

/// Per-pixel cosine similarities against each reference feature,
/// `H x W x N` with every entry in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    values: Array3<f32>,
}

impl SimilarityMap {
    pub fn height(&self) -> usize {
        self.values.dim().0
    }

    pub fn width(&self) -> usize {
        self.values.dim().1
    }

    pub fn channels(&self) -> usize {
        self.values.dim().2
    }

    pub fn values(&self) -> &Array3<f32> {
        &self.values
    }

    pub fn at(&self, h: usize, w: usize) -> &[f32] {
        self.values
            .slice(ndarray::s![h, w, ..])
            .to_slice()
            .expect("row-major similarity map")
    }
}

fn normalize_rows(rows: Array2<f64>) -> Array2<f64> {
    let mut rows = rows;
    for mut row in rows.rows_mut() {
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-30 {
            row.mapv_inplace(|x| x / n);
        } else {
            row.fill(0.0);
        }
    }
    rows
}

/// Cosine similarity of every pixel feature against every reference
/// feature. Zero vectors on either side yield similarity 0.
pub fn similarity_map(frame: &FeatureMap, refs: &ReferenceSet) -> Result<SimilarityMap> {
    if frame.depth_dim() != refs.dim() {
        return Err(Error::DimensionMismatch(frame.depth_dim(), refs.dim()));
    }
    let (h, w, d) = frame.values().dim();
    let n = refs.count();

    let pixels = frame
        .values()
        .to_shape(((h * w, d), ndarray::Order::RowMajor))
        .expect("contiguous feature map")
        .mapv(f64::from);
    let pixels = normalize_rows(pixels);

    let mut ref_rows = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        for (j, v) in refs.feature(i).iter().enumerate() {
            ref_rows[[i, j]] = f64::from(*v);
        }
    }
    let ref_cols = normalize_rows(ref_rows).reversed_axes();

    let sims = pixels.dot(&ref_cols);
    let mut out = Array3::<f32>::zeros((h, w, n));
    for (flat, val) in sims.iter().enumerate() {
        let (hw, i) = (flat / n, flat % n);
        out[[hw / w, hw % w, i]] = val.clamp(-1.0, 1.0) as f32;
    }
    Ok(SimilarityMap { values: out })
}

/// Per channel, the pixel of maximum similarity; ties resolve to the
/// smallest row-major pixel index.
pub fn match_keypoints(map: &SimilarityMap) -> Vec<(usize, usize)> {
    let (h, w, n) = map.values().dim();
    let mut best = vec![(f32::NEG_INFINITY, 0usize); n];
    for hh in 0..h {
        for ww in 0..w {
            let row = map.at(hh, ww);
            for (i, &v) in row.iter().enumerate() {
                if v > best[i].0 {
                    best[i] = (v, hh * w + ww);
                }
            }
        }
    }
    best.iter().map(|&(_, flat)| (flat / w, flat % w)).collect()
}

/// The full similarity row at one pixel.
pub fn similarity_vector(map: &SimilarityMap, pixel: (usize, usize)) -> Result<Vec<f32>> {
    let (h, w) = pixel;
    if h >= map.height() || w >= map.width() {
        return Err(Error::OutOfBounds(h, w, map.height(), map.width()));
    }
    Ok(map.at(h, w).to_vec())
}
