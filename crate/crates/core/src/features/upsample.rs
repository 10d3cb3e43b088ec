use ndarray::Array3;

use crate::error::{Error, Result};
use crate::features::types::FeatureMap;

fn axis_weights(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| {
            if n_out == 1 || n_in == 1 {
                return (0, 0, 0.0);
            }
            let src = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Resize a feature map bilinearly, treating pixel centers as aligned at
/// the corners: output index 0 maps to input index 0 and output index
/// `H_out - 1` maps to input index `H_in - 1`, so a same-size resize is
/// the identity.
pub fn upsample_bilinear(map: &FeatureMap, out_h: usize, out_w: usize) -> Result<FeatureMap> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::ShapeMismatch(format!(
            "upsample target {out_h}x{out_w} must be positive"
        )));
    }
    let (in_h, in_w, dim) = map.values().dim();
    let rows = axis_weights(in_h, out_h);
    let cols = axis_weights(in_w, out_w);
    let src = map.values();
    let mut out = Array3::<f32>::zeros((out_h, out_w, dim));
    for (oi, &(r0, r1, fr)) in rows.iter().enumerate() {
        for (oj, &(c0, c1, fc)) in cols.iter().enumerate() {
            for k in 0..dim {
                let v00 = f64::from(src[[r0, c0, k]]);
                let v01 = f64::from(src[[r0, c1, k]]);
                let v10 = f64::from(src[[r1, c0, k]]);
                let v11 = f64::from(src[[r1, c1, k]]);
                let top = v00 + fc * (v01 - v00);
                let bot = v10 + fc * (v11 - v10);
                out[[oi, oj, k]] = (top + fr * (bot - top)) as f32;
            }
        }
    }
    FeatureMap::new(out)
}
