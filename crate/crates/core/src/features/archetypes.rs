use crate::error::{Error, Result};
use crate::util::{derive_seed, rng_from, sample_normal};

/// Minimum pairwise angle between part archetypes, degrees.
pub const MIN_PART_ANGLE_DEG: f64 = 60.0;
/// Minimum angle between any background archetype and any part archetype.
pub const MIN_BACKGROUND_ANGLE_DEG: f64 = 80.0;

/// A fixed vocabulary of unit feature vectors for one task.
///
/// Every semantic part class rendered in a task draws its feature vector
/// from this bank, so the same part looks the same (up to per-instance
/// noise) across scenes, episodes and embodiments. Separation is enforced
/// at generation time: part archetypes are pairwise at least 60 degrees
/// apart and background archetypes at least 80 degrees from every part,
/// which keeps nearest-archetype decisions unambiguous under the noise
/// levels the renderer produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchetypeBank {
    dim: usize,
    parts: Vec<Vec<f32>>,
    backgrounds: Vec<Vec<f32>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sample_unit(rng: &mut crate::util::Prng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| sample_normal(rng)).collect();
        let n = dot(&v, &v).sqrt();
        if n > 1e-6 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

fn sample_separated(
    rng: &mut crate::util::Prng,
    dim: usize,
    others: &[(Vec<f64>, f64)],
) -> Result<Vec<f64>> {
    const MAX_ATTEMPTS: usize = 200_000;
    for _ in 0..MAX_ATTEMPTS {
        let cand = sample_unit(rng, dim);
        if others
            .iter()
            .all(|(other, max_cos)| dot(&cand, other) <= *max_cos)
        {
            return Ok(cand);
        }
    }
    Err(Error::Config(format!(
        "could not sample a unit vector in {dim} dims separated from {} existing archetypes; \
         raise the feature dimension or lower the archetype count",
        others.len()
    )))
}

impl ArchetypeBank {
    /// Generate a bank deterministically from a seed.
    ///
    /// Rejection-samples unit vectors until the angle constraints hold.
    /// Fails if the requested counts cannot be separated in `dim`
    /// dimensions within a generous attempt budget.
    pub fn generate(dim: usize, n_parts: usize, n_backgrounds: usize, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!(
                "archetype dimension must be at least 2, got {dim}"
            )));
        }
        let part_cos = MIN_PART_ANGLE_DEG.to_radians().cos();
        let bg_cos = MIN_BACKGROUND_ANGLE_DEG.to_radians().cos();

        let mut rng = rng_from(derive_seed(seed, "archetype-bank", 0));
        let mut constraints: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut parts = Vec::with_capacity(n_parts);
        for _ in 0..n_parts {
            let v = sample_separated(&mut rng, dim, &constraints)?;
            constraints.push((v.clone(), part_cos));
            parts.push(v);
        }
        // Backgrounds must sit far from every part; among themselves the
        // part-level separation is enough.
        let mut bg_constraints: Vec<(Vec<f64>, f64)> =
            parts.iter().map(|p| (p.clone(), bg_cos)).collect();
        let mut backgrounds = Vec::with_capacity(n_backgrounds);
        for _ in 0..n_backgrounds {
            let v = sample_separated(&mut rng, dim, &bg_constraints)?;
            bg_constraints.push((v.clone(), part_cos));
            backgrounds.push(v);
        }

        let cast = |v: &Vec<f64>| v.iter().map(|x| *x as f32).collect::<Vec<f32>>();
        Ok(Self {
            dim,
            parts: parts.iter().map(cast).collect(),
            backgrounds: backgrounds.iter().map(cast).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn part_count(&self) -> usize {
        self.parts.len()
    }

    pub fn background_count(&self) -> usize {
        self.backgrounds.len()
    }

    pub fn part(&self, i: usize) -> &[f32] {
        &self.parts[i]
    }

    pub fn background(&self, i: usize) -> &[f32] {
        &self.backgrounds[i]
    }

    /// Smallest pairwise angle (degrees) over all archetype pairs, split
    /// into (part-part, background-part) minima. Test and audit helper.
    pub fn separation_deg(&self) -> (f64, f64) {
        let to_f64 = |v: &[f32]| v.iter().map(|x| f64::from(*x)).collect::<Vec<f64>>();
        let mut min_pp = 180.0f64;
        for i in 0..self.parts.len() {
            for j in (i + 1)..self.parts.len() {
                let c = dot(&to_f64(&self.parts[i]), &to_f64(&self.parts[j]));
                min_pp = min_pp.min(c.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        let mut min_bp = 180.0f64;
        for b in &self.backgrounds {
            for p in &self.parts {
                let c = dot(&to_f64(b), &to_f64(p));
                min_bp = min_bp.min(c.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        (min_pp, min_bp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generate_is_deterministic() {
        let a = ArchetypeBank::generate(32, 24, 4, 7).unwrap();
        let b = ArchetypeBank::generate(32, 24, 4, 7).unwrap();
        assert_eq!(a, b);
        let c = ArchetypeBank::generate(32, 24, 4, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn separation_thresholds_hold() {
        let bank = ArchetypeBank::generate(32, 24, 4, 123).unwrap();
        let (pp, bp) = bank.separation_deg();
        // small slack for the f64 -> f32 cast
        assert!(pp >= MIN_PART_ANGLE_DEG - 0.01, "part-part min angle {pp}");
        assert!(bp >= MIN_BACKGROUND_ANGLE_DEG - 0.01, "background-part min angle {bp}");
    }

    #[test]
    fn vectors_are_unit_norm() {
        let bank = ArchetypeBank::generate(16, 8, 2, 5).unwrap();
        for i in 0..bank.part_count() {
            let n: f64 = bank.part(i).iter().map(|x| f64::from(*x).powi(2)).sum::<f64>();
            assert!((n.sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn impossible_separation_errors() {
        // 40 vectors pairwise >= 60 degrees apart do not fit in the plane.
        let err = ArchetypeBank::generate(2, 40, 0, 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
