use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::config::Strategy;
use crate::error::{Error, Result};
use crate::features::types::{FeatureMap, Mask};
use crate::keypoints::kmeans::kmeans;
use crate::util::{rng_from, Prng};

pub const REFERENCE_MAGIC: [u8; 4] = *b"SKRF";

/// N reference keypoints fixed once per task: their pixel coordinates in
/// the reference image and the feature vectors read there.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    pixels: Vec<(usize, usize)>,
    features: Vec<Vec<f32>>,
    source_image_id: String,
}

impl ReferenceSet {
    pub fn new(
        pixels: Vec<(usize, usize)>,
        features: Vec<Vec<f32>>,
        source_image_id: String,
    ) -> Result<Self> {
        if pixels.len() != features.len() || pixels.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} pixels vs {} features",
                pixels.len(),
                features.len()
            )));
        }
        let d = features[0].len();
        if d == 0 || features.iter().any(|f| f.len() != d) {
            return Err(Error::ShapeMismatch("inconsistent reference feature lengths".into()));
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reference features"));
        }
        let mut sorted = pixels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != pixels.len() {
            return Err(Error::DuplicatePixels);
        }
        Ok(Self { pixels, features, source_image_id })
    }

    pub fn count(&self) -> usize {
        self.pixels.len()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn pixel(&self, i: usize) -> (usize, usize) {
        self.pixels[i]
    }

    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }

    pub fn feature(&self, i: usize) -> &[f32] {
        &self.features[i]
    }

    pub fn source_image_id(&self) -> &str {
        &self.source_image_id
    }
}

/// Pick N reference keypoints from a masked feature map.
///
/// `kmeans` clusters the masked feature vectors (k-means++ seeding, at
/// most 100 Lloyd iterations, centroid-movement tolerance 1e-6) and snaps
/// each centroid to the member pixel whose feature lies nearest it, so
/// reference pixels are real, distinct mask pixels. `random` draws N
/// distinct mask pixels uniformly. `manual` takes caller-supplied pixels.
pub fn generate_reference(
    features: &FeatureMap,
    mask: &Mask,
    n: usize,
    strategy: Strategy,
    manual_pixels: Option<&[(usize, usize)]>,
    seed: u64,
    source_image_id: &str,
) -> Result<ReferenceSet> {
    if features.height() != mask.height() || features.width() != mask.width() {
        return Err(Error::ShapeMismatch(format!(
            "features {}x{} vs mask {}x{}",
            features.height(),
            features.width(),
            mask.height(),
            mask.width()
        )));
    }
    if n == 0 {
        return Err(Error::Config("keypoint count must be positive".into()));
    }
    let masked: Vec<(usize, usize)> = mask.iter_true().collect();
    if masked.is_empty() {
        return Err(Error::EmptyMask);
    }
    if masked.len() < n {
        return Err(Error::MaskTooSmall { requested: n, available: masked.len() });
    }

    let pixels: Vec<(usize, usize)> = match strategy {
        Strategy::Kmeans => {
            let points: Vec<Vec<f64>> = masked
                .iter()
                .map(|&(h, w)| features.at(h, w).iter().map(|v| f64::from(*v)).collect())
                .collect();
            let mut rng = rng_from(seed);
            let out = kmeans(&points, n, &mut rng);
            let mut px: Vec<(usize, usize)> = out.medoids.iter().map(|&i| masked[i]).collect();
            px.sort_unstable();
            px
        }
        Strategy::Random => {
            let mut rng = rng_from(seed);
            let mut px = sample_distinct(&mut rng, &masked, n);
            px.sort_unstable();
            px
        }
        Strategy::Manual => {
            let given = manual_pixels.ok_or_else(|| {
                Error::Config("manual strategy requires explicit pixels".into())
            })?;
            if given.len() != n {
                return Err(Error::ManualPixelCount { expected: n, got: given.len() });
            }
            let mut sorted = given.to_vec();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != given.len() {
                return Err(Error::DuplicatePixels);
            }
            for &(h, w) in given {
                if h >= mask.height() || w >= mask.width() || !mask.get(h, w) {
                    return Err(Error::PixelOutsideMask(h, w));
                }
            }
            given.to_vec()
        }
    };

    let feats: Vec<Vec<f32>> = pixels.iter().map(|&(h, w)| features.at(h, w).to_vec()).collect();
    ReferenceSet::new(pixels, feats, source_image_id.to_string())
}

/// Partial Fisher-Yates: n distinct draws from `items`, order discarded
/// by the caller's sort.
fn sample_distinct(
    rng: &mut Prng,
    items: &[(usize, usize)],
    n: usize,
) -> Vec<(usize, usize)> {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    for i in 0..n {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    idx[..n].iter().map(|&i| items[i]).collect()
}

pub fn write_reference_set_to<W: Write>(w: &mut W, refs: &ReferenceSet) -> Result<()> {
    w.write_all(&REFERENCE_MAGIC)?;
    w.write_all(&(refs.count() as u32).to_le_bytes())?;
    w.write_all(&(refs.dim() as u32).to_le_bytes())?;
    for i in 0..refs.count() {
        let (h, wd) = refs.pixel(i);
        w.write_all(&(h as u32).to_le_bytes())?;
        w.write_all(&(wd as u32).to_le_bytes())?;
        for v in refs.feature(i) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_reference_set_from<R: Read>(r: &mut R, source_image_id: &str) -> Result<ReferenceSet> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != REFERENCE_MAGIC {
        return Err(Error::MalformedHeader(format!("bad magic {magic:02x?}")));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let n = u32::from_le_bytes(buf4) as usize;
    r.read_exact(&mut buf4)?;
    let d = u32::from_le_bytes(buf4) as usize;
    if n == 0 || d == 0 || n > 1 << 20 || d > 1 << 20 {
        return Err(Error::MalformedHeader(format!("implausible reference header N={n} D={d}")));
    }
    let mut pixels = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut buf4)?;
        let h = u32::from_le_bytes(buf4) as usize;
        r.read_exact(&mut buf4)?;
        let w = u32::from_le_bytes(buf4) as usize;
        pixels.push((h, w));
        let mut f = Vec::with_capacity(d);
        for _ in 0..d {
            r.read_exact(&mut buf4)?;
            f.push(f32::from_le_bytes(buf4));
        }
        features.push(f);
    }
    let mut byte = [0u8; 1];
    if r.read(&mut byte)? != 0 {
        return Err(Error::MalformedHeader("trailing bytes after reference set".into()));
    }
    ReferenceSet::new(pixels, features, source_image_id.to_string())
}

pub fn write_reference_set(path: &Path, refs: &ReferenceSet) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    write_reference_set_to(&mut f, refs)?;
    f.flush()?;
    Ok(())
}

pub fn read_reference_set(path: &Path) -> Result<ReferenceSet> {
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("reference");
    read_reference_set_from(&mut BufReader::new(File::open(path)?), id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};
    use std::io::Cursor;

    /// Two constant-feature rectangular blobs on an 8x8 grid.
    fn two_blob_fixture() -> (FeatureMap, Mask) {
        let mut values = Array3::<f32>::zeros((8, 8, 4));
        let mut mask = Array2::<bool>::from_elem((8, 8), false);
        for h in 1..3 {
            for w in 1..4 {
                values[[h, w, 0]] = 1.0;
                mask[[h, w]] = true;
            }
        }
        for h in 5..7 {
            for w in 4..7 {
                values[[h, w, 1]] = 1.0;
                mask[[h, w]] = true;
            }
        }
        (FeatureMap::new(values).unwrap(), Mask::new(mask))
    }

    #[test]
    fn kmeans_two_blobs_put_one_reference_in_each() {
        let (features, mask) = two_blob_fixture();
        let refs =
            generate_reference(&features, &mask, 2, Strategy::Kmeans, None, 1, "fix").unwrap();
        assert_eq!(refs.count(), 2);
        let mut blob_hits = [false, false];
        for i in 0..2 {
            let (h, _) = refs.pixel(i);
            blob_hits[usize::from(h >= 5)] = true;
        }
        assert_eq!(blob_hits, [true, true]);
        // feature read back from the map at the snapped pixel
        for i in 0..2 {
            let (h, w) = refs.pixel(i);
            assert_eq!(refs.feature(i), features.at(h, w));
        }
    }

    #[test]
    fn single_pixel_mask_n1() {
        let mut values = Array3::<f32>::zeros((4, 4, 3));
        values[[2, 3, 0]] = 0.5;
        let mut m = Array2::from_elem((4, 4), false);
        m[[2, 3]] = true;
        let features = FeatureMap::new(values).unwrap();
        let mask = Mask::new(m);
        for strategy in [Strategy::Kmeans, Strategy::Random] {
            let refs = generate_reference(&features, &mask, 1, strategy, None, 0, "s").unwrap();
            assert_eq!(refs.pixel(0), (2, 3));
            assert_eq!(refs.feature(0), &[0.5, 0.0, 0.0]);
        }
        let refs = generate_reference(
            &features,
            &mask,
            1,
            Strategy::Manual,
            Some(&[(2, 3)]),
            0,
            "s",
        )
        .unwrap();
        assert_eq!(refs.pixel(0), (2, 3));
    }

    #[test]
    fn strategies_coincide_when_mask_has_exactly_n_pixels() {
        let (features, mask) = two_blob_fixture();
        let n = mask.count();
        let manual: Vec<(usize, usize)> = mask.iter_true().collect();
        let a = generate_reference(&features, &mask, n, Strategy::Kmeans, None, 5, "s").unwrap();
        let b = generate_reference(&features, &mask, n, Strategy::Random, None, 9, "s").unwrap();
        let c =
            generate_reference(&features, &mask, n, Strategy::Manual, Some(&manual), 0, "s")
                .unwrap();
        let key = |r: &ReferenceSet| {
            let mut p = r.pixels().to_vec();
            p.sort_unstable();
            p
        };
        assert_eq!(key(&a), key(&b));
        assert_eq!(key(&b), key(&c));
    }

    #[test]
    fn error_paths() {
        let (features, mask) = two_blob_fixture();
        let err = generate_reference(&features, &mask, 1000, Strategy::Random, None, 0, "s");
        assert!(matches!(err, Err(Error::MaskTooSmall { requested: 1000, .. })));

        let empty = Mask::new(Array2::from_elem((8, 8), false));
        let err = generate_reference(&features, &empty, 1, Strategy::Kmeans, None, 0, "s");
        assert!(matches!(err, Err(Error::EmptyMask)));

        let err = generate_reference(
            &features,
            &mask,
            2,
            Strategy::Manual,
            Some(&[(1, 1), (1, 1)]),
            0,
            "s",
        );
        assert!(matches!(err, Err(Error::DuplicatePixels)));

        let err = generate_reference(
            &features,
            &mask,
            2,
            Strategy::Manual,
            Some(&[(0, 0), (1, 1)]),
            0,
            "s",
        );
        assert!(matches!(err, Err(Error::PixelOutsideMask(0, 0))));

        let err =
            generate_reference(&features, &mask, 3, Strategy::Manual, Some(&[(1, 1)]), 0, "s");
        assert!(matches!(err, Err(Error::ManualPixelCount { expected: 3, got: 1 })));
    }

    #[test]
    fn random_is_seeded_and_distinct() {
        let (features, mask) = two_blob_fixture();
        let a = generate_reference(&features, &mask, 5, Strategy::Random, None, 4, "s").unwrap();
        let b = generate_reference(&features, &mask, 5, Strategy::Random, None, 4, "s").unwrap();
        assert_eq!(a, b);
        let mut px = a.pixels().to_vec();
        px.sort_unstable();
        px.dedup();
        assert_eq!(px.len(), 5);
        for &(h, w) in a.pixels() {
            assert!(mask.get(h, w));
        }
    }

    #[test]
    fn reference_file_round_trip() {
        let (features, mask) = two_blob_fixture();
        let refs =
            generate_reference(&features, &mask, 4, Strategy::Kmeans, None, 2, "fix").unwrap();
        let mut buf = Vec::new();
        write_reference_set_to(&mut buf, &refs).unwrap();
        let back = read_reference_set_from(&mut Cursor::new(&buf), "fix").unwrap();
        assert_eq!(refs, back);

        // header: magic, N, D
        assert_eq!(&buf[0..4], b"SKRF");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 4);
    }
}
